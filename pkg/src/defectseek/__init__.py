"""defectseek: embedding-level retrieval and anomaly scoring engine.

The package turns a knowledge base of lock embeddings into ranked
retrievals for a query key (plain top-k or density-weighted cluster
sampling), sparse-codes query embeddings against dictionaries, and
scores patch grids into anomaly localization maps. File formats and the
CLI are documented in the README.
"""

from .apportion import largest_remainder
from .config import CONFIG_KEYS, RunConfig, parse_config_file
from .errors import (
    ArgumentError,
    ConfigError,
    ConvergenceError,
    DataError,
    DegenerateDataError,
    DegenerateError,
    DimensionError,
    EmptyStoreError,
    EngineError,
    FormatError,
    ManifestError,
    SpecError,
)
from .formats import EmbeddingMatrix, load_embeddings, normalize_rows, save_embeddings
from .knowledge import (
    CentroidStore,
    KnowledgeDocument,
    KnowledgeIndex,
    PromptTemplates,
    build_index,
    instantiate_prompts,
    load_centroids,
    load_index,
    nearest_centroid,
    parse_manifest,
    save_centroids,
    save_index,
)
from .localization import (
    LocalizationMap,
    PatchGrid,
    PriorEmbedding,
    assemble_prior,
    bilinear_upsample,
    image_score,
    localization_map,
    prompt_similarity_matrix,
    split_prior,
)
from .metrics import LabeledScores, auroc, average_ranks, pixel_auroc_macro, recall_at
from .retrieval import (
    RetrievalResult,
    RetrievedDoc,
    SimilarityScores,
    kde_sample_retrieve,
    score_all,
    top_k,
)
from .score_clustering import (
    DensityWeights,
    GaussianComponent,
    ScoreClustering,
    fit_score_gmm,
    kde_log_density,
    kde_weights,
    silverman_bandwidth,
)
from .sparse_code import (
    SparseCodeProblem,
    SparseCodeState,
    hierarchical_apply,
    ista_solve,
    residual,
    soft_threshold,
    spectral_norm,
)
from .synthetic import (
    ClusterPlan,
    DefectPlan,
    DefectSample,
    KbPlan,
    PlantedKb,
    gen_defect_grid,
    gen_planted_kb,
    load_plan,
    parse_plan,
    write_defect_fixture,
    write_kb_fixture,
)

__version__ = "0.1.0"
