"""FCFS multi-server-job queueing: simulation, exact solves, bounds, fluid limits.

The package is organized as a library first: :mod:`msjq.model` holds the
domain types and the in-service prefix rule, :mod:`msjq.simulate` the seeded
event-driven simulator, :mod:`msjq.exact` the truncated-chain ground truth,
:mod:`msjq.bounds` the closed-form certificates, :mod:`msjq.fluid` the fluid
limit and coupled reference systems, and :mod:`msjq.experiments` the scaling
sweeps.  ``msjq.cli`` wraps it all for batch use.
"""

__version__ = "0.1.0"

from .bounds import (
    DriftBoundParams,
    HypothesisViolated,
    ScalingRegime,
    StabilityMargin,
    classify_regime,
    drift_g,
    drift_moment_bound,
    drift_tail_bound,
    envelope_h,
    lyapunov_f,
    lyapunov_g,
    queueing_probability_bound,
    ssc_bound,
    stability_margin,
)
from .exact import (
    BudgetExceeded,
    ExactQueueing,
    SolverDidNotConverge,
    StateEnumeration,
    StationaryDistribution,
    TruncatedChain,
    TruncationTooCoarse,
    UnstableOfferedLoad,
    build_generator,
    enumerate_states,
    erlang_c,
    exact_mean_drift,
    exact_queueing_probability,
    expected_class_shortfall,
    stationary_distribution,
    stationary_generator_drift,
)
from .experiments import (
    ResultRow,
    ResultTable,
    SweepSpec,
    need_value,
    run_set,
    scaling_sweep,
    segment_stats,
)
from .fluid import (
    CoupledRun,
    CouplingBroken,
    FluidTrajectory,
    GridMismatch,
    OutOfClosedFormRegime,
    coupled_reference_run,
    coupling_safety_margin,
    equilibrium,
    fluid_integrate,
    fluid_solution,
    sup_distance,
)
from .model import (
    ClusterConfig,
    EmptyClassList,
    JobClassSpec,
    LoadProfile,
    NeedExceedsServers,
    NonPositiveRate,
    Occupancy,
    SystemState,
    ValidatedConfig,
    ValidationError,
    arrival_rates_from_loads,
    in_service_prefix,
    total_load,
    validate_config,
)
from .simulate import (
    NotEnoughSamples,
    QueueingStats,
    RunSummary,
    SampledPath,
    SimParams,
    estimate_queueing_probability,
    sample_scaled_counts,
    simulate,
    transient_trajectory,
)
