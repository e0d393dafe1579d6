"""driftlab: spectral drift detection and change-point benchmarking."""

from .baselines import BaselineConfig, ks_statistic, kswin_detect, mmdddm_detect
from .detector import (
    DriftEvent,
    DriftReport,
    SddmConfig,
    consensus_filter,
    dedup_ward,
    sddm_offline,
    sddm_stream,
)
from .evaluation import (
    EvaluationConfig,
    apply_alignment_shift,
    beta_score,
    run_benchmark,
    standard_methods,
    synthetic_dataset,
)
from .kernels import (
    KernelMatrix,
    MomentForestKernel,
    RbfKernel,
    compute_kernel_matrix,
    empirical_mmd2,
    forest_similarity,
    median_heuristic_gamma,
    rbf_kernel,
    train_moment_forest,
)
from .magnitude import (
    ShapePrediction,
    TwoSlidingWindows,
    check_weighted_identity,
    drift_magnitude,
    magnitude_profile,
    predict_shape,
    verify_shape,
)
from .segmentation import (
    Segmentation,
    TimeTree,
    cv_select_leaves,
    extract_change_points,
    fit_time_tree,
)
from .spectral import (
    EigenBasis,
    block_auto_correlation,
    expand_block_matrix,
    laplacian,
    normalized_laplacian,
    size_weighted_reduced,
    smallest_eigenvectors,
)
from .streams import (
    ConceptSource,
    ConfigurationError,
    GroundTruth,
    HyperplaneConcept,
    IngestionError,
    RandomRbfConcept,
    ResampledConcept,
    StaggerConcept,
    Stream,
    StreamSample,
    StreamSpec,
    compose_stream,
    generate_concept,
    ingest_csv,
    make_concepts,
    normalize_stream,
    read_stream_jsonl,
    write_stream_jsonl,
)

__version__ = "0.1.0"
