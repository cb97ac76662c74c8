"""Supervised manifold visualization: random-forest proximities diffused
into potential distances and embedded with MDS, plus the evaluation
harness (k-NN CV variable prediction, robustness sweeps, noise
experiments)."""

from .core import (
    Dataset,
    DataError,
    EmptyDatasetError,
    LabelVector,
    MissingColumnError,
    RaggedRowError,
    RandomSeed,
    RawColumn,
    RawTable,
    dataset_to_csv,
    load_csv,
    noise_augment,
    preprocess,
)
from .diffusion import (
    DiffusionState,
    PotentialDistances,
    diffuse,
    find_knee,
    matrix_power,
    potential_distances,
    row_normalize,
    save_vne_curve,
    select_t,
    spectrum,
    vne_curve,
    von_neumann_entropy,
)
from .embed import (
    Embedding,
    classical_mds,
    embed_kernel,
    embedding_to_csv,
    isomap_prox,
    mds_prox,
    metric_mds,
    rf_phate,
    smacof,
)
from .evaluate import (
    EvalReport,
    SweepGrid,
    knn_cv_score,
    make_folds,
    reports_to_csv,
    robustness_sweep,
    run_noise_experiment,
    summarize_reports,
    sweep_to_csv,
    variable_values,
)
from .forest import (
    Forest,
    ForestParams,
    Importance,
    ProximityKernel,
    Tree,
    compute_proximities,
    load_forest,
    oob_error,
    permutation_importance,
    predict,
    predict_rows,
    proximity_to_csv,
    save_forest,
    train_forest,
)

__version__ = "0.1.0"
