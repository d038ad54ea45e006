"""Data-driven fixed-structure controller design from frequency-response samples.

The package identifies descriptor models from frequency data with the
Loewner framework and tunes a structured controller so the closed loop
matches a reference model, one small-gain constrained step at a time.
"""

from .closed_loop import (
    closed_loop_samples,
    estimate_gamma,
    filter_plant_for_integrator,
    g_samples,
    matching_objective,
    verify_closed_loop_stability,
)
from .controller import ControllerStructure, evaluate_controller, load_controller, save_controller
from .exceptions import (
    DatasetParseError,
    DegenerateDataError,
    DimensionError,
    GammaEstimationError,
    IllPosedLoopError,
    InitializationError,
    LDISCError,
    PreconditionError,
    SingularityError,
)
from .freq_data import FrequencyDataset, RationalTransferMatrix, load_dataset, save_dataset
from .linsys import hinf_norm, is_stable, spectral_abscissa
from .loewner import DescriptorRealization, realize
from .solver import DesignConfig, DesignReport, design, initialize_controller, run_ldisc, solve_subproblem

__version__ = "0.1.0"

__all__ = [
    "ControllerStructure",
    "DatasetParseError",
    "DegenerateDataError",
    "DescriptorRealization",
    "DesignConfig",
    "DesignReport",
    "DimensionError",
    "FrequencyDataset",
    "GammaEstimationError",
    "IllPosedLoopError",
    "InitializationError",
    "LDISCError",
    "PreconditionError",
    "RationalTransferMatrix",
    "SingularityError",
    "closed_loop_samples",
    "design",
    "estimate_gamma",
    "evaluate_controller",
    "filter_plant_for_integrator",
    "g_samples",
    "hinf_norm",
    "initialize_controller",
    "is_stable",
    "load_controller",
    "load_dataset",
    "matching_objective",
    "realize",
    "run_ldisc",
    "save_controller",
    "save_dataset",
    "solve_subproblem",
    "spectral_abscissa",
    "verify_closed_loop_stability",
]
