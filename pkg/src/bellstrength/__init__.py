"""Statistical strength of Bell tests.

Quantifies how decisively the outcome statistics of a bipartite Bell
experiment refute local hidden-variable models: the strength of a
behavior is its Kullback-Leibler divergence, in bits per trial, to the
best-fitting local model.  The package builds the quantum side
(states, measurement families, behaviors), the local side (strategy
enumeration, mixture fitting with optimality certificates), and the
optimization layers that search for the strongest states and settings.
"""

from .errors import (
    ConvergenceError,
    InvalidCoefficientError,
    InvalidDimensionError,
    InvalidParameterError,
    ResourceLimitError,
    ShapeError,
    SingularRatioError,
)
from .quantum import (
    Behavior,
    MeasurementSettings,
    PureState,
    SchmidtState,
    SettingsDistribution,
    cglmp_measurements,
    conditional_probabilities,
    entropy_of_entanglement,
    fourier_matrix,
    maximally_entangled,
    no_signaling_gap,
    quantum_behavior,
    reweight_settings,
    schmidt_decompose,
    tensor_copies,
    three_level_state,
    uniform_settings,
)
from .local import (
    DeterministicStrategy,
    LocalModel,
    enumerate_vertices,
    model_behavior,
    setting_maps,
    strategy_scores,
    strategy_scores_for,
    vertex_behavior,
    vertex_count,
)
from .strength import StrengthResult, kkt_certificate, kl_divergence, min_kl_local
from .bell import (
    BellFunctional,
    BellOperator,
    TopEigenpair,
    cglmp_functional,
    local_bound,
    log_ratio_operator,
    quantum_value,
    tilted_cglmp_ratios,
    top_eigenpair,
)
from .optimizer import (
    AdditivityReport,
    Figure1Row,
    OptimizationReport,
    SettingsVerification,
    additivity_comparison,
    conjectured_optimum,
    figure1_sweep,
    optimize_state_exact,
    seesaw,
    verify_uniform_settings,
)
from .experiment import TrialCounts, empirical_strength, sample_trials

__version__ = "0.1.0"
