"""2D acoustic wave propagation with exponential and classical time stepping.

A staggered-grid spatial operator (free surface on top, absorbing collar on
the remaining sides), wave-field time steppers from leap-frog to Faber and
Krylov exponential integrators, and an analysis harness that measures the
largest admissible step and its cost per scheme.
"""

from .analysis import (
    CostReport,
    DtMaxResult,
    SignalTrace,
    SpectrumComparison,
    cost_report,
    dispersion_dissipation,
    scan_dt_max,
    seismogram_error,
    snapshot_error,
)
from .grid import PmlProfile, StaggeredGrid, default_beta0
from .integrators import RunResult, Scheme, SchemeConfig, advance
from .kernels import (
    arnoldi,
    faber_expmv,
    faber_series,
    hork_lambda,
    krylov_expmv,
    pade_expm,
)
from .medium import (
    VelocityModel,
    gen_corner_model,
    homogeneous_model,
    load_velocity,
    save_velocity,
)
from .operator import StateVector, WaveOperator, build_augmented, spectral_bounds
from .sources import ReceiverArray, RickerWavelet, SourceInjection
from .experiment import (
    ExperimentConfig,
    dtmax_pipeline,
    find_dt_max,
    load_config,
    load_or_build_reference,
    run_once,
    spatial_floor,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "CostReport",
    "DtMaxResult",
    "SignalTrace",
    "SpectrumComparison",
    "cost_report",
    "dispersion_dissipation",
    "scan_dt_max",
    "seismogram_error",
    "snapshot_error",
    "PmlProfile",
    "StaggeredGrid",
    "default_beta0",
    "RunResult",
    "Scheme",
    "SchemeConfig",
    "advance",
    "arnoldi",
    "faber_expmv",
    "faber_series",
    "hork_lambda",
    "krylov_expmv",
    "pade_expm",
    "VelocityModel",
    "gen_corner_model",
    "homogeneous_model",
    "load_velocity",
    "save_velocity",
    "StateVector",
    "WaveOperator",
    "build_augmented",
    "spectral_bounds",
    "ReceiverArray",
    "RickerWavelet",
    "SourceInjection",
    "ExperimentConfig",
    "dtmax_pipeline",
    "find_dt_max",
    "load_config",
    "load_or_build_reference",
    "run_once",
    "spatial_floor",
]
