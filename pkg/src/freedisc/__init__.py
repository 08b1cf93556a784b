"""Higher-order singular perturbations of truncated-quadratic free-discontinuity energies in 1D."""

from .functional import (
    EnergyParams,
    GeneralPotential,
    GridSignal,
    MinimizeOptions,
    MinimizeResult,
    SolverError,
    TruncatedQuadratic,
    bz_functional,
    detect_transitions,
    evaluate,
    gradient,
    minimize,
    recovery_sequence,
)
from .interp import estimate_Rk, sample_cases
from .piecewise import Piece, PiecewiseFunction, limit_energy
from .profile import calibrate_c_k, m_k, m_k_constrained, m_k_general

__version__ = "0.1.0"

__all__ = [
    "EnergyParams",
    "GeneralPotential",
    "GridSignal",
    "MinimizeOptions",
    "MinimizeResult",
    "Piece",
    "PiecewiseFunction",
    "SolverError",
    "TruncatedQuadratic",
    "bz_functional",
    "calibrate_c_k",
    "detect_transitions",
    "estimate_Rk",
    "evaluate",
    "gradient",
    "limit_energy",
    "m_k",
    "m_k_constrained",
    "m_k_general",
    "minimize",
    "recovery_sequence",
    "sample_cases",
]
