"""Spectral projected subgradient methods for nonsmooth convex finite-sum problems.

The solver takes subgradient steps scaled by a safeguarded spectral
(Barzilai-Borwein-type) coefficient, projects onto a ball or box, grows the
sample of a finite-sum objective geometrically, and optionally picks step
sizes with a nonmonotone Armijo search.  The bench module reproduces the
scalar-product (FEV) cost methodology: winning probabilities and performance
profiles over seeded multi-run campaigns.
"""

from .model import (
    Ball,
    Box,
    FeasibleRegion,
    Problem,
    SampleSchedule,
    SpectralBounds,
    StepSchedule,
    Vector,
    nested_index_set,
    next_sample_size,
    project,
    step_interval,
)
from .problems import HingeLossSvm, MedianL1, median_optimum, median_value
from .solver import (
    BudgetExhausted,
    IterateState,
    RunTrace,
    SolverConfig,
    SpsSolver,
    armijo_accepts,
    ls_step_size,
    nonmonotone_reference,
    run,
    spectral_update,
)
from .data_io import Dataset, ParseError, load_libsvm, parse_libsvm, save_libsvm, serialize_libsvm, split, synthetic_blobs
from .bench import (
    COST_MODEL,
    METHODS,
    CampaignResult,
    CampaignSpec,
    DatasetSpec,
    method_config,
    performance_profile,
    relative_error,
    run_campaign,
    winning_probability,
)

__version__ = "0.1.0"

__all__ = [
    "Ball",
    "Box",
    "BudgetExhausted",
    "COST_MODEL",
    "CampaignResult",
    "CampaignSpec",
    "Dataset",
    "DatasetSpec",
    "FeasibleRegion",
    "HingeLossSvm",
    "IterateState",
    "METHODS",
    "MedianL1",
    "ParseError",
    "Problem",
    "RunTrace",
    "SampleSchedule",
    "SolverConfig",
    "SpectralBounds",
    "SpsSolver",
    "StepSchedule",
    "Vector",
    "armijo_accepts",
    "load_libsvm",
    "ls_step_size",
    "median_optimum",
    "median_value",
    "method_config",
    "nested_index_set",
    "next_sample_size",
    "nonmonotone_reference",
    "parse_libsvm",
    "performance_profile",
    "project",
    "relative_error",
    "run",
    "run_campaign",
    "save_libsvm",
    "serialize_libsvm",
    "spectral_update",
    "split",
    "step_interval",
    "synthetic_blobs",
    "winning_probability",
]
