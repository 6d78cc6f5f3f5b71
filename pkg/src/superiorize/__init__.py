"""Superiorization of perturbation-resilient projection methods.

The library solves convex feasibility problems with two projection
operator families (string averaging and block iterative), wraps any
such operator in a superiorized iteration that steers its orbit toward
lower values of a convex objective without giving up feasibility, and
ships a parallel-beam tomography demonstration where the objective is
the image's total variation.
"""

from .convexsets import (
    Box,
    DimensionMismatchError,
    HalfSpace,
    Hyperplane,
    InvalidSetError,
    distance,
    project,
)
from .engine import (
    GammaSequence,
    InnerStall,
    RunConfig,
    StepRecord,
    SuperiorizationState,
    initial_state,
    run_plain,
    run_superiorized,
    superiorized_step,
)
from .feasibility import (
    FeasibilityProblem,
    HyperplanePack,
    Iterate,
    StoppingCriterion,
    is_solution,
    output_operator,
    proximity,
)
from .objectives import (
    GridImage,
    TotalVariation,
    Zero,
    devectorize,
    tv_subgradient,
    tv_value,
    vectorize,
)
from .operators import (
    Amalgamator,
    BlockIterativeOperator,
    BlockScheme,
    PerturbationStep,
    StringAveragingOperator,
    bip_apply,
    bip_block_apply,
    compose_projections,
    perturbed_iterate,
    resilience_trial,
    sap_apply,
)
from .tomo import (
    Ellipse,
    PhantomSpec,
    ScanGeometry,
    TomoData,
    generate_data,
    make_phantom,
    read_phantom_spec,
    read_sinogram,
    trace_ray,
    write_phantom_spec,
    write_sinogram,
)

__version__ = "0.1.0"

__all__ = [
    "Amalgamator", "BlockIterativeOperator", "BlockScheme", "Box",
    "DimensionMismatchError", "Ellipse", "FeasibilityProblem",
    "GammaSequence", "GridImage", "HalfSpace", "Hyperplane",
    "HyperplanePack", "InnerStall", "InvalidSetError", "Iterate",
    "PerturbationStep", "PhantomSpec", "RunConfig", "ScanGeometry",
    "StepRecord", "StoppingCriterion", "StringAveragingOperator",
    "SuperiorizationState", "TomoData", "TotalVariation", "Zero",
    "bip_apply", "bip_block_apply", "compose_projections", "devectorize",
    "distance", "generate_data", "initial_state", "is_solution",
    "make_phantom", "output_operator", "perturbed_iterate", "project",
    "proximity", "read_phantom_spec", "read_sinogram", "resilience_trial",
    "run_plain", "run_superiorized", "sap_apply", "superiorized_step",
    "trace_ray", "tv_subgradient", "tv_value", "vectorize",
    "write_phantom_spec", "write_sinogram",
]
