"""Command line interface: ``recdigits analyze | orbit | reduce``.

Every report is JSON (or CSV for profiles) with numbers written as decimal
strings, and embeds the run configuration and library version.  Exit codes:
0 ok, 2 assumption violation or usage error, 3 undecidable rounding,
4 horizon exceeded, 5 verification failed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from fractions import Fraction

from . import __version__
from ._mp import fmt, parse_number
from .algebra import parse_poly, validate_companion
from .digits import DigitStream
from .equidist import (
    count_hits_orbit, count_hits_stream, enumerate_intervals, genericity_profile, is_good,
    parse_interval, profile_csv, evalues_orbit,
)
from .errors import AssumptionViolation, HorizonExceeded, SeedRejected, UndecidableRounding
from .orbit import InitialValue, psi_digits, support_bound
from .reduction import (
    build_schedule, emit_p_stream, parse_beta, pi_value, seed_digits, stage_layout,
    verify_convergent_case, verify_divergent_case, coordinate_tail_bound,
)

EXIT_OK = 0
EXIT_ASSUMPTION = 2
EXIT_ROUNDING = 3
EXIT_HORIZON = 4
EXIT_VERIFY = 5


def _range(text: str) -> tuple[int, int]:
    """"a..b" -> half-open (a, b)."""
    lo, sep, hi = text.partition("..")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected a..b, got {text!r}")
    a, b = int(lo), int(hi)
    if b <= a:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return a, b


def _lambda_spec(text: str):
    name, sep, body = text.partition("=")
    if not sep:
        name, body = "I", text
    return name.strip(), parse_interval(body)


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="recdigits", description="Digit expansions for linear recurrences.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file whose keys mirror the long flags")
        p.add_argument("--poly", default=None, help="coefficients of P, constant term first (default -2,1)")
        p.add_argument("--k", type=int, default=None, help="exponent offset: f = P^(k+1)")
        p.add_argument("--target", default=None, help="target error for high precision values (default 1e-30)")
        p.add_argument("--out", default=None, help="write the report here (atomically) instead of stdout")

    p = sub.add_parser("analyze", help="validate P and print the companion data")
    common(p)

    p = sub.add_parser("orbit", help="digits, e-values, hit counts and goodness for one initial value")
    common(p)
    p.add_argument("--init", default=None, help='initial value: "p/q", decimal, or "c;c;..." per coordinate')
    p.add_argument("--digits", type=_range, default=None, help="half-open index range a..b of canonical digits")
    p.add_argument("--evalues", type=_range, default=None, help="half-open index range a..b of e-values")
    p.add_argument("--lambda", dest="lambdas", action="append", type=_lambda_spec, default=None,
                   help="interval NAME=a/2^l:b/2^l to count (repeatable)")
    p.add_argument("--N", type=_positive, default=None, help="count over indices [M, N)")
    p.add_argument("--M", type=int, default=None, help="start index for counts (default 0)")
    p.add_argument("--path", choices=("orbit", "stream"), default=None, help="count on the orbit or on the digit stream")
    p.add_argument("--good", type=_positive, default=None, help="check (m, eps)-goodness of the first N digits")
    p.add_argument("--eps", default=None, help="epsilon for --good (default 2^-(m+1))")
    p.add_argument("--profile", type=_positive, default=None, help="deviation table for the first m intervals")
    p.add_argument("--checkpoints", default=None, help="comma separated N values for --profile")
    p.add_argument("--format", choices=("json", "csv"), default=None, help="csv applies to --profile")

    p = sub.add_parser("reduce", help="seed, schedule, word stream and a verifier")
    common(p)
    p.add_argument("--beta", default=None, help='"const:M", "linear" or "list:v1,v2,..."')
    p.add_argument("--mode", choices=("demo", "strict"), default=None)
    p.add_argument("--K", type=int, default=None, help="demo growth base (default 4)")
    p.add_argument("--stages", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None, help="goodness horizon of the seed certificate")
    p.add_argument("--seed-source", dest="seed_source", default=None,
                   help="auto | champernowne[:balanced|words|classic] | random | zero")
    p.add_argument("--seed", type=int, default=None, help="RNG seed for random sources")
    p.add_argument("--verify", choices=("convergent", "divergent", "none"), default=None)
    p.add_argument("--m", type=int, default=None, help="intervals for the convergent verifier (default 5)")
    p.add_argument("--threshold", default=None, help="deviation threshold for the convergent verifier")
    p.add_argument("--M-limit", dest="M_limit", type=int, default=None, help="limit of beta' for the divergent verifier")
    return ap


DEFAULTS = {
    "poly": "-2,1", "k": 0, "target": "1e-30", "out": None,
    "init": None, "digits": None, "evalues": None, "lambdas": None, "N": None, "M": 0, "path": "orbit",
    "good": None, "eps": None, "profile": None, "checkpoints": None, "format": "json",
    "beta": "const:2", "mode": "demo", "K": 4, "stages": 4, "horizon": 10_000, "seed_source": "auto",
    "seed": 0, "verify": "none", "m": 5, "threshold": "0.05", "M_limit": None,
}

_CONFIG_CONVERT = {
    "digits": lambda v: _range(v) if isinstance(v, str) else tuple(v),
    "evalues": lambda v: _range(v) if isinstance(v, str) else tuple(v),
    "lambdas": lambda v: [_lambda_spec(x) for x in ([v] if isinstance(v, str) else v)],
}


def resolve_config(args: argparse.Namespace) -> dict:
    """Flags override the config file, which overrides the defaults."""
    cfg = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            raw = json.load(fh)
        for key, val in raw.items():
            key = key.replace("-", "_")
            if key == "lambda":
                key = "lambdas"
            cfg[key] = _CONFIG_CONVERT.get(key, lambda x: x)(val)
    out = {}
    for key, default in DEFAULTS.items():
        if not hasattr(args, key):
            continue
        val = getattr(args, key)
        out[key] = val if val is not None else cfg.get(key, default)
    out["command"] = args.command
    return out


def _echo(cfg: dict) -> dict:
    """Configuration in a JSON friendly form."""
    echo = {}
    for key, val in cfg.items():
        if key == "lambdas" and val:
            echo[key] = [f"{n}={I.lo}:{I.hi}" for n, I in val]
        elif key in ("digits", "evalues") and val:
            echo[key] = f"{val[0]}..{val[1]}"
        else:
            echo[key] = val
    return echo


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".recdigits-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _report(cfg: dict, body: dict) -> dict:
    return {"version": __version__, "config": _echo(cfg), **body}


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _spec(cfg):
    if not cfg["poly"]:
        raise SystemExit("--poly is required")
    return validate_companion(parse_poly(cfg["poly"]), int(cfg["k"]))


def cmd_analyze(cfg: dict) -> tuple[int, dict]:
    spec = _spec(cfg)
    return EXIT_OK, _report(cfg, {"spec": spec.to_json()})


def cmd_orbit(cfg: dict) -> tuple[int, object]:
    spec = _spec(cfg)
    target = float(parse_number(cfg["target"])) if "/" in str(cfg["target"]) else float(cfg["target"])
    g = InitialValue.from_text(spec, cfg["init"] or "0")
    body: dict = {"init": g.to_text(), "support_bound": support_bound(g)}
    psi = None

    def stream() -> DigitStream:
        nonlocal psi
        if psi is None:
            from .digits import psi_stream
            psi = psi_stream(g, target)
        return psi

    if cfg["digits"]:
        a, b = cfg["digits"]
        digs = psi_digits(g, a, b - 1, target)
        body["digits"] = {"range": f"{a}..{b}", "values": " ".join(map(str, digs))}
    if cfg["evalues"]:
        a, b = cfg["evalues"]
        ev = evalues_orbit(g, a, b, target)
        vals = [ev.refine(m) for m in range(a, b)] if ev.refine is not None else None
        rows = []
        for i, m in enumerate(range(a, b)):
            if vals is not None:
                v, err = vals[i]
            else:
                v, err = ev.e[i], ev.err[i]
            rows.append({"n": m, "e": fmt(v, 25), "err": fmt(err, 3)})
        body["evalues"] = rows
    M, N = int(cfg["M"]), cfg["N"]
    if cfg["lambdas"]:
        if N is None:
            raise SystemExit("--lambda needs --N")
        out = []
        for name, I in cfg["lambdas"]:
            if cfg["path"] == "orbit":
                rep = count_hits_orbit(g, I.region(), M, N)
            else:
                rep = count_hits_stream(stream(), I.region(), M, N)
            row = {"name": name, "interval": str(I), "path": cfg["path"], **rep.to_json(),
                   "ratio": fmt(Fraction(rep.count_in, N - M), 15)}
            out.append(row)
        body["lambda"] = out
    if cfg["good"]:
        if N is None:
            raise SystemExit("--good needs --N")
        m = cfg["good"]
        eps = parse_number(cfg["eps"]) if cfg["eps"] else Fraction(1, 2 ** (m + 1))
        word = stream().window(0, N)
        ok, rows = is_good(word, m, eps, spec)
        body["good"] = {"m": m, "eps": fmt(eps, 15), "N": N, "good": ok,
                        "rows": [{**r, "ratio": fmt(r["ratio"], 15), "deviation": fmt(r["deviation"], 15)}
                                 for r in rows]}
    if cfg["profile"]:
        cps = [int(x) for x in str(cfg["checkpoints"] or N or "").split(",") if x]
        if not cps:
            raise SystemExit("--profile needs --checkpoints or --N")
        src = g if cfg["path"] == "orbit" else stream()
        rows = genericity_profile(src, cps, cfg["profile"])
        if cfg["format"] == "csv":
            return EXIT_OK, profile_csv(rows)
        body["profile"] = [{"N": r["N"], "interval_id": r["j"], "interval": r["interval"],
                            "ratio": fmt(r["ratio"], 15), "deviation": fmt(r["deviation"], 15),
                            "uncertain": r["uncertain"]} for r in rows]
    code = EXIT_OK
    if any(r["count_uncertain"] for r in body.get("lambda", [])):
        code = EXIT_ROUNDING
    return code, _report(cfg, body)


def cmd_reduce(cfg: dict) -> tuple[int, dict]:
    if int(cfg["stages"]) < 1:
        raise SystemExit("--stages must be at least 1")
    spec = _spec(cfg)
    beta = parse_beta(cfg["beta"])
    seed, cert = seed_digits(spec, cfg["seed_source"], int(cfg["horizon"]), int(cfg["seed"]))
    sch = build_schedule(beta, spec, cert, cfg["mode"], int(cfg["K"]), int(cfg["stages"]))
    V = sch.V
    body = {
        "spec": spec.to_json(),
        "certificate": cert.to_json(),
        "schedule": sch.to_json(),
        "stream": {"length": str(V[-1]), "stages": [{k: str(v) for k, v in r.items()} for r in stage_layout(sch)]},
    }
    pv = pi_value(sch, seed, None, float(cfg["target"]))
    body["pi"] = {"value": pv.to_text(40, exact=False), "err": fmt(pv.err, 3),
                  "tail_bound_at_V1": fmt(coordinate_tail_bound(spec, V[1]), 5)}
    code = EXIT_OK
    if cfg["verify"] == "convergent":
        rep = verify_convergent_case(sch, seed, None, int(cfg["m"]), float(cfg["threshold"]))
        body["verification"] = rep
        code = EXIT_OK if rep["pass"] else EXIT_VERIFY
    elif cfg["verify"] == "divergent":
        rep = verify_divergent_case(sch, seed, None, cfg["M_limit"])
        body["verification"] = rep
        code = EXIT_OK if rep["pass"] else EXIT_VERIFY
    return code, _report(cfg, body)


COMMANDS = {"analyze": cmd_analyze, "orbit": cmd_orbit, "reduce": cmd_reduce}


_VALUE_FLAGS = {"--poly", "--init", "--digits", "--evalues", "--lambda", "--M", "--eps"}


def _join_negative_values(argv: list[str]) -> list[str]:
    """Let values such as ``--poly -2,1`` through argparse, which reads them as flags."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in _VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(_join_negative_values(argv))
    try:
        cfg = resolve_config(args)
    except (OSError, ValueError, argparse.ArgumentTypeError) as exc:
        parser.error(str(exc))
    try:
        code, result = COMMANDS[args.command](cfg)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            parser.error(exc.code)
        raise
    except AssumptionViolation as exc:
        code, result = EXIT_ASSUMPTION, _report(cfg, {"error": exc.code, "message": str(exc)})
    except UndecidableRounding as exc:
        code, result = EXIT_ROUNDING, _report(cfg, {"error": exc.code, "message": str(exc), "index": exc.index})
    except (HorizonExceeded, SeedRejected) as exc:
        code, result = EXIT_HORIZON, _report(cfg, {"error": exc.code, "message": str(exc)})
    except ValueError as exc:
        parser.error(str(exc))
    _emit(result if isinstance(result, str) else _dump(result), cfg.get("out"))
    return code


if __name__ == "__main__":
    raise SystemExit(main())
