"""Signed digit expansions for integer linear recurrences and equidistribution of their orbits."""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import (
    AmbiguousRealness, AssumptionViolation, ConstantPolynomial, DigitOutOfRange, GapTooCoarse,
    HorizonExceeded, LengthBeyondStages, MultipleRoots, NotMonic, PrecisionExhausted, RecDigitsError,
    SeedRejected, UndecidableRounding, UnitCircleRoot, ZeroConstantTerm,
)
from .algebra import CompanionSpec, RootSet, compute_roots, classify_roots, parse_poly, validate_companion
from .kernel import decay_bound, h_vector, rho, rho_quadrature_oracle, rho_table
from .orbit import (
    InitialValue, eval_x, orbit_values, psi_digits, rounding_units, shift_value, split_unit, support_bound,
)
from .digits import (
    ArrayStream, DigitStream, GeneratorStream, SegmentedStream, ShiftedStream, check_commutation,
    normalize_word, phi, phi_windowed, psi_stream, shift_stream, theta,
)
from .equidist import (
    CountReport, DyadicInterval, TorusRegion, count_hits_orbit, count_hits_stream, count_many,
    enumerate_intervals, genericity_profile, is_good, neighborhood_intervals, parse_interval,
    profile_csv, sandwich_violation,
)
from .reduction import (
    Beta, ReductionSchedule, SeedCertificate, build_schedule, coordinate_tail_bound, emit_p_stream,
    parse_beta, pi_value, seed_digits, verify_convergent_case, verify_divergent_case,
)
