from src.measures.empirical import (
    EmpiricalMeasure,
    moment_norm,
    read_points_csv,
    write_points_csv,
)
from src.measures.entropy import EntropyEstimate, gaussian_kl, knn_divergence, relative_entropy
from src.measures.transport import (
    TransportPlan,
    pairwise_distances,
    wasserstein_alpha,
    wasserstein_alpha_plan,
    wasserstein_k,
)
from src.measures.duality import domination_check, dual_walpha_lp, weighted_variation_lp
