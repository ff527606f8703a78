"""User-level metric differential privacy under the earth mover's distance.

Building blocks: finite normalized metric spaces, exact optimal transport,
metric privacy budgets, a noisy linear-query mechanism, the shuffled
item-wise release with amplification-based calibration, a resampling
reduction from unbounded to bounded datasets, channel-based frequency
estimation, and a brute-force privacy auditor for tiny domains.
"""

from .budget import DiscreteBudget, MetricBudget, Requirement, alpha_from_requirements, group_privacy
from .metric_space import (
    ClusteredSpace,
    EmbeddingTable,
    MetricSpace,
    build_clustered,
    build_discrete,
    build_embedding,
)
from .transport import Coupling, Histogram, Matching, Multiset, bvn_matching, emd, sample_coupling
from .linear_mech import LinearQuery, NoiseSpec, embedding_query, lipschitz_constant, priv_emd_linear
from .shuffle_amp import (
    AmplificationInapplicableError,
    AmplificationResult,
    TransitionMechanism,
    calibrate_alpha0,
    composition_baseline,
    effective_budget,
    h_bound,
    priv_emd_itemwise,
)
from .reduction import bounded_emd_reduction, project, reduction_budget
from .frequency import (
    GKRRParams,
    freq_est_central,
    freq_est_local,
    freq_error_bound,
    gkrr_mechanism,
    gkrr_params,
    gkrr_right_inverse,
    hadamard_response,
    laplace_freq_central,
    operator_norm_1_2,
    project_to_simplex,
    spectral_norm,
)
from .audit import AuditResult, exact_itemwise_distribution, hockey_stick, verify_emd_dp, verify_item_metric_dp

__version__ = "0.1.0"
