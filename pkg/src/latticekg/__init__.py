"""Discrete Klein-Gordon laboratory on quasi-periodic lattice media."""

__version__ = "0.1.0"

from .calculus import (
    PropagatorCache,
    WaveState,
    balakrishnan_inv_sqrt,
    combes_thomas_fit,
    inv_sqrt_row_bound,
    kg_propagate,
    resolvent_column,
)
from .cocycle import (
    GapScanResult,
    TransferMatrix,
    gap_label,
    gap_scan,
    lyapunov,
    rotation_number,
)
from .dynamics import (
    DecayReport,
    StrichartzReport,
    Trajectory,
    admissible_q,
    decay_fit,
    evolve_linear,
    evolve_nonlinear,
    small_data_report,
    strichartz_norm,
)
from .lattice import EigenDecomposition, JacobiMatrix, LatticeWindow, build_operator, eigen
from .oscillatory import critical_velocity, dispersion, free_kernel, vdc_decay_probe
from .potential import (
    FrequencyVector,
    KamSchedule,
    TrigPolynomialPotential,
    cos_potential,
    diophantine_margin,
    kam_depth,
    zero_potential,
)

__all__ = [
    "__version__",
    "PropagatorCache",
    "WaveState",
    "balakrishnan_inv_sqrt",
    "combes_thomas_fit",
    "inv_sqrt_row_bound",
    "kg_propagate",
    "resolvent_column",
    "GapScanResult",
    "TransferMatrix",
    "gap_label",
    "gap_scan",
    "lyapunov",
    "rotation_number",
    "DecayReport",
    "StrichartzReport",
    "Trajectory",
    "admissible_q",
    "decay_fit",
    "evolve_linear",
    "evolve_nonlinear",
    "small_data_report",
    "strichartz_norm",
    "EigenDecomposition",
    "JacobiMatrix",
    "LatticeWindow",
    "build_operator",
    "eigen",
    "critical_velocity",
    "dispersion",
    "free_kernel",
    "vdc_decay_probe",
    "FrequencyVector",
    "KamSchedule",
    "TrigPolynomialPotential",
    "cos_potential",
    "diophantine_margin",
    "kam_depth",
    "zero_potential",
]
