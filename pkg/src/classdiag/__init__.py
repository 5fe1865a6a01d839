"""Classifier-agnostic case diagnostics.

Turns posterior probabilities (plus optional features or embeddings)
into per-case quality measures (PAC, silhouette width, farness) and the
silhouette / quasi residual / class map displays.
"""

from .core import (
    CaseScores,
    ClassCatalog,
    PosteriorMatrix,
    SilhouetteSummary,
    best_alternative,
    case_scores,
    compute_pac,
    labels_from_names,
    pac_value,
    predict_map,
    silhouette_summary,
    silhouette_values,
)
from .diagnostics import (
    ClassMapData,
    QuasiResidualData,
    SilhouettePlotData,
    build_class_map,
    build_quasi_residual,
    build_silhouette,
    loess_curve,
)
from .dissimilarity import (
    ColumnSpec,
    DissimilarityMatrix,
    FeatureSchema,
    FeatureTable,
    cross_dissimilarities,
    dissimilarity_matrix,
    pair_dissimilarity,
)
from .errors import ClassdiagError, DegenerateDataError, UndefinedPairError, ValidationError
from .farness import (
    ClassStats,
    EmbeddingTable,
    FarnessModel,
    TransformModel,
    farness_scores,
    fit_class_stats,
    fit_distance_transform,
    fit_farness_knn,
    fit_farness_mahalanobis,
    flag_outliers,
    knn_class_distance,
    knn_distance_matrix,
    load_model,
    mahalanobis_distance,
    mahalanobis_distance_matrix,
    save_model,
    score_new_cases,
    yeo_johnson,
)
from .render import (
    RenderConfig,
    render_class_map_svg,
    render_quasi_residual_svg,
    render_silhouette_svg,
)

__version__ = "0.1.0"
