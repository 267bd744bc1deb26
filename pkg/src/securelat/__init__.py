"""Data-driven event-triggered secure lateral control toolkit."""

from .control import (
    SecureDomain,
    SlidingConfig,
    SlidingState,
    composite_control,
    equivalent_control,
    gl_derivative,
    gl_weights,
    lqr_gain,
    lyapunov_smc_diagnostic,
    make_sliding_config,
    riccati_residual,
    riccati_solve,
    secure_domain,
    sliding_surface_step,
    switching_control,
)
from .observer import (
    AttackDetector,
    AttackModel,
    EsoState,
    augment,
    compensate,
    design_gain,
    eso_step,
    make_eso,
)
from .plant import (
    DEFAULT_PARAMS,
    ContinuousModel,
    StateVector,
    VehicleParams,
    continuous_matrices,
    discretize_rk4,
    generate_trajectory,
    step_continuous,
)
from .sim import (
    S5_A,
    S5_B,
    S5_K_REPORTED,
    MetricsReport,
    RunTrace,
    ScenarioConfig,
    SimulationBlowUp,
    attack_signal,
    compute_metrics,
    default_config,
    run_scenario,
    spectral_radius,
)
from .synthesis import (
    LkfComponents,
    LmiBlocks,
    SynthesisResult,
    assemble_theorem3,
    assemble_theorem4,
    check_negative_definite,
    lkf_evaluate,
    search_feasible_theorem3,
    search_feasible_theorem4,
)
from .sysid import (
    DatasetMatrices,
    IdentifiedModel,
    PersistencyResult,
    build_matrices,
    dmd_identify,
    load_dataset_csv,
    persistency_check,
    select_truncation,
)
from .trigger import (
    DelayClassification,
    DelayModel,
    Theorem1Report,
    TriggerConfig,
    TriggerState,
    artificial_delay,
    inter_event_error,
    should_trigger,
    theorem1_diagnostic,
)

__version__ = "0.1.0"
