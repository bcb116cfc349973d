"""ionvib: a workbench for linear vibronic coupling dynamics.

Builds donor/acceptor vibronic models and propagates them with three
interchangeable back-ends (numerically exact truncated-Fock, Ehrenfest
mean-field, and an emulated noisy trapped-ion analog simulator), plus
experimental-cost estimation for the trapped-ion route.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ConvergenceError,
    InfeasibleScheduleError,
    InvalidModelError,
    IonvibError,
    NumericalFailureError,
    UnsupportedChainError,
)
from .model import (
    DriveSpec,
    Envelope,
    LvcmSpec,
    build_ci_model,
    build_plet_model,
    build_toy_model,
    build_vaet_model,
    ci_adiabatic_surfaces,
    reorganization_energy,
)
from .trace import PopulationTrace, compare_traces, read_csv

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DriveSpec",
    "Envelope",
    "InfeasibleScheduleError",
    "InvalidModelError",
    "IonvibError",
    "LvcmSpec",
    "NumericalFailureError",
    "PopulationTrace",
    "UnsupportedChainError",
    "__version__",
    "build_ci_model",
    "build_plet_model",
    "build_toy_model",
    "build_vaet_model",
    "ci_adiabatic_surfaces",
    "compare_traces",
    "read_csv",
    "reorganization_energy",
]
