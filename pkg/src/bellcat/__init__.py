"""Simulation and verification of catalytic activation of Bell nonlocality."""

from .bell import (
    BellFunctional,
    CorrelationTable,
    DeterministicStrategy,
    LhvModel,
    MeasurementAssemblage,
    bell_score,
    chsh,
    chsh_two_qubit_max,
    correlations,
    local_bound,
    register_conditioned_strategy,
    seesaw_optimize,
)
from .catalysis import (
    BranchedCqState,
    CatalystSpec,
    build_catalyst,
    catalyst_marginal,
    catalytic_transform,
    system_marginal,
    to_dense,
)
from .qstate import (
    DensityMatrix,
    HermitianOperator,
    Label,
    expectation,
    partial_trace,
    swap_subsystems,
    tensor,
    validate,
)
from .states import isotropic, max_entangled, singlet_fraction, singlet_fraction_threshold

__version__ = "0.1.0"
