"""geogap: coverage-gap detection for requirement sets.

Compare a target project's requirement embeddings against a multi-project
reference corpus and surface the requirement types (and type x topic
cells) the corpus covers but the target does not.
"""

__version__ = "0.1.0"

from .artifacts import CorpusArtifacts, load_artifacts, save_artifacts
from .corpus import (Dataset, DatasetError, Requirement, Taxonomy,
                     load_dataset, loo_splits, project_partition, save_dataset)
from .embeddings import (EmbeddingStore, NeighbourResult, cosine_distance,
                         fetch_remote, load_cache, normalize, save_cache,
                         store_from_vectors)
from .evaluation import (InjectionSpec, auroc, inject, mrr, permutation_test,
                         run_cell_level, run_fraction_sweep, run_holdout,
                         run_k_sweep, run_type_level, select_covered_types)
from .pipeline import build_artifacts, derive_seed
from .prototypes import (TypeCentroids, calibrate_temperature, compute_centroids,
                         hard_accuracy, hard_assign, soft_assign)
from .reporting import gap_report, heatmap_svg, novelties, validate_report
from .scoring import (GapResult, PRESETS, ProjectWeights, ScoreConfig, Target,
                      cell_aggregate, fuse, occupancy, phi, project_weights,
                      psi_point, psi_pop_scores, psi_type_scores, score_project)
from .topics import (TopicDistribution, TopicModel, fit_fallback_topics,
                     ingest_topics, soft_topics)
