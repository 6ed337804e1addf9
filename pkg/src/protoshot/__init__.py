"""Few-shot prototype classification over embedding spaces.

Episodic evaluation of prototype classifiers, post-hoc linear transforms
that trade between-class signal against within-class noise, closed-form
accuracy lower bounds, and the Monte Carlo machinery to verify all of it
on an exactly-Gaussian generative world.
"""

from .bounds import (
    BoundReport,
    MarginMoments,
    accuracy_lower_bound,
    margin_mean_given_pair,
    margin_mean_marginal,
    margin_variance_bound,
    mc_accuracy,
    mc_margin_moments,
    moment_bundle_from_class_stats,
    nway_accuracy_lower_bound,
    vc_gap,
)
from .datasets import (
    ClassStats,
    EmbeddingDataset,
    MomentSummary,
    class_stats,
    diagnostics_report,
    intrinsic_dimension,
    load_embeddings,
    moment_summary,
    save_embeddings,
    variance_ratio,
)
from .linalg import SymEigen, covariance, psd_sqrt, sym_eigendecompose, trace
from .protonet import (
    Episode,
    EvalConfig,
    EvalReport,
    ShotResult,
    decision_margin,
    evaluate,
    predict,
    prototypes,
    sample_episode,
)
from .transforms import LinearTransform, fit_est, fit_pca, load_transform, save_transform
from .world import (
    GaussianWorld,
    MomentBundle,
    SampledClass,
    load_world,
    sample_classes,
    sample_points,
    save_world,
    world_moments,
)

__version__ = "0.1.0"
