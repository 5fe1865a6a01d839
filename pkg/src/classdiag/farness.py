"""Distance-to-class measures and their conversion to farness probabilities.

Two distance variants are supported: Mahalanobis distances on embedding
vectors (per-class mean and covariance), and a kNN-median distance on
weighted Gower dissimilarities for mixed-type data.  Either way, the raw
distances D(i, g) are turned into farness(i, g) in (0, 1) by a pipeline
fitted on the training cases' own-class distances:

1. divide D(., g) by the median own-class distance of class g;
2. pool across classes and standardize by Med/Mad (Mad uses the 1.4826
   consistency factor);
3. apply a Yeo-Johnson power transform with a robustly estimated lambda;
4. standardize the transformed values by their own Med/Mad;
5. map through the standard normal CDF.

All fitted constants live in a FarnessModel so test cases are scored
against training constants only; a case's score never depends on other
cases scored in the same batch.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri

from .core import ClassCatalog, check_labels
from .dissimilarity import (
    FeatureSchema,
    FeatureTable,
    cross_dissimilarities,
    dissimilarity_matrix,
)
from .errors import DegenerateDataError, ValidationError

MODEL_FORMAT_VERSION = 1
DEFAULT_K = 5
DEFAULT_CUTOFF = 0.99
MAD_CONSISTENCY = 1.4826
CONDITION_LIMIT = 1e12
RIDGE_LADDER = tuple(1e-10 * 100.0**j for j in range(11))
LAMBDA_GRID = np.linspace(-4.0, 4.0, 801)
REJECTION_Z = 3.0


def norm_cdf(z):
    """Standard normal CDF (error-function primitive)."""
    return ndtr(z)


def norm_quantile(p):
    """Standard normal quantile function, accurate to full double
    precision (verified against a frozen oracle table in the tests)."""
    return ndtri(p)


# ---------------------------------------------------------------------------
# distance measures


@dataclass(frozen=True)
class EmbeddingTable:
    """n x d matrix of embedding vectors with given labels."""

    values: np.ndarray
    labels: np.ndarray
    catalog: ClassCatalog
    columns: tuple[str, ...] = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] == 0:
            raise ValidationError(f"embeddings must be a non-empty 2-D array, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("embeddings contain non-finite values")
        labels = check_labels(self.labels, values.shape[0], self.catalog)
        cols = tuple(self.columns) if self.columns else tuple(
            f"v{j + 1}" for j in range(values.shape[1])
        )
        if len(cols) != values.shape[1]:
            raise ValidationError("embedding column names do not match the dimension")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "columns", cols)


@dataclass(frozen=True)
class ClassStats:
    """Per-class sample mean, covariance, and the ridge actually applied."""

    means: np.ndarray        # G x d
    covariances: np.ndarray  # G x d x d
    ridges: np.ndarray       # G


def _conditioning_ridge(cov: np.ndarray) -> float:
    """Smallest ladder ridge making cov + ridge*I positive definite with
    condition number <= CONDITION_LIMIT; 0.0 when none is needed."""
    eigs = np.linalg.eigvalsh(cov)
    lo, hi = float(eigs[0]), float(eigs[-1])
    if lo > 0.0 and hi / lo <= CONDITION_LIMIT:
        return 0.0
    for ridge in RIDGE_LADDER:
        if lo + ridge > 0.0 and (hi + ridge) / (lo + ridge) <= CONDITION_LIMIT:
            return ridge
    raise DegenerateDataError("covariance cannot be conditioned by the ridge ladder")


def fit_class_stats(emb: EmbeddingTable) -> ClassStats:
    """Per-class mean and sample covariance (n_g - 1 denominator), with a
    recorded ridge when the covariance is singular or ill-conditioned."""
    g_count = emb.catalog.size
    d = emb.values.shape[1]
    means = np.zeros((g_count, d))
    covs = np.zeros((g_count, d, d))
    ridges = np.zeros(g_count)
    for g, name in enumerate(emb.catalog.names):
        member = emb.values[emb.labels == g]
        if member.shape[0] < 2:
            raise ValidationError(
                f"class {name!r} has {member.shape[0]} member(s); need at least 2"
            )
        means[g] = member.mean(axis=0)
        centered = member - means[g]
        covs[g] = centered.T @ centered / (member.shape[0] - 1)
        ridges[g] = _conditioning_ridge(covs[g])
    return ClassStats(means=means, covariances=covs, ridges=ridges)


def mahalanobis_distance(v, mean, covariance, ridge: float = 0.0) -> float:
    """sqrt((v - mean)' (cov + ridge*I)^-1 (v - mean)) for one vector."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValidationError("non-finite embedding vector")
    x = v - np.asarray(mean, dtype=float)
    m = np.asarray(covariance, dtype=float)
    if ridge:
        m = m + ridge * np.eye(m.shape[0])
    sol = np.linalg.solve(m, x)
    return float(math.sqrt(max(0.0, float(x @ sol))))


def mahalanobis_distance_matrix(values: np.ndarray, stats: ClassStats) -> np.ndarray:
    """D(i, g) for every case and class; cases are scored one at a time
    so batch composition cannot change any value."""
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValidationError("embeddings contain non-finite values")
    n = values.shape[0]
    g_count = stats.means.shape[0]
    out = np.zeros((n, g_count))
    for g in range(g_count):
        for i in range(n):
            out[i, g] = mahalanobis_distance(
                values[i], stats.means[g], stats.covariances[g], stats.ridges[g]
            )
    return out


def knn_class_distance(distances, k: int) -> float:
    """Median of the k smallest distances to one class; classes smaller
    than k use all their members."""
    distances = np.asarray(distances, dtype=float)
    if distances.size == 0:
        raise ValidationError("cannot compute a kNN distance to an empty class")
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    nearest = np.sort(distances)[: min(k, distances.size)]
    return float(np.median(nearest))


def knn_distance_matrix(dissim: np.ndarray, train_labels, catalog: ClassCatalog,
                        k: int = DEFAULT_K, exclude_self: bool = False) -> np.ndarray:
    """D(i, g) from an (m x n_train) dissimilarity block.

    With exclude_self=True (square training matrix only) a training
    case's zero self-dissimilarity is dropped from its own class; the
    default keeps it.
    """
    dissim = np.asarray(dissim, dtype=float)
    train_labels = check_labels(train_labels, dissim.shape[1], catalog)
    if exclude_self and dissim.shape[0] != dissim.shape[1]:
        raise ValidationError("exclude_self requires the square training matrix")
    members = [np.flatnonzero(train_labels == g) for g in range(catalog.size)]
    for g, idx in enumerate(members):
        if idx.size == 0:
            raise ValidationError(f"class {catalog.names[g]!r} has no training member")
    out = np.zeros((dissim.shape[0], catalog.size))
    for i in range(dissim.shape[0]):
        for g, idx in enumerate(members):
            use = idx[idx != i] if exclude_self else idx
            if use.size == 0:
                raise ValidationError(
                    f"class {catalog.names[g]!r} has no member left for case {i} "
                    "after excluding the case itself"
                )
            out[i, g] = knn_class_distance(dissim[i, use], k)
    return out


# ---------------------------------------------------------------------------
# distribution fit: per-class normalization, Med/Mad, Yeo-Johnson, probit


def yeo_johnson(x, lam: float):
    """Four-branch Yeo-Johnson power transform; continuous and strictly
    increasing in x for any finite lambda."""
    if not math.isfinite(lam):
        raise ValidationError("lambda must be finite")
    arr = np.asarray(x, dtype=float)
    pos = arr >= 0.0
    out = np.empty_like(arr, dtype=float)
    if lam != 0.0:
        out[pos] = (np.power(1.0 + arr[pos], lam) - 1.0) / lam
    else:
        out[pos] = np.log1p(arr[pos])
    if lam != 2.0:
        out[~pos] = -(np.power(1.0 - arr[~pos], 2.0 - lam) - 1.0) / (2.0 - lam)
    else:
        out[~pos] = -np.log1p(-arr[~pos])
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def _med_mad(values: np.ndarray) -> tuple[float, float]:
    med = float(np.median(values))
    mad = MAD_CONSISTENCY * float(np.median(np.abs(values - med)))
    return med, mad


def _yj_profile_loglik(x: np.ndarray, lam: float) -> float:
    """Profile normal log-likelihood of YJ-transformed data (additive
    constants dropped)."""
    with np.errstate(over="ignore", invalid="ignore"):
        t = yeo_johnson(x, lam)
        var = float(np.var(t))
    if not math.isfinite(var) or var <= 0.0:
        return -math.inf
    jac = float(np.sum(np.sign(x) * np.log1p(np.abs(x))))
    return -0.5 * len(x) * math.log(var) + (lam - 1.0) * jac


def estimate_lambda(x) -> float:
    """Yeo-Johnson lambda by profile ML over a grid on [-4, 4], iterated
    once with hard-rejection weights.

    After the first grid fit, transformed values more than REJECTION_Z
    robust standard deviations (Med/Mad) from the center are discarded
    and the grid fit is repeated on the rest.  This approximates the
    robust weighted-ML estimators used for this transform in the
    literature while staying fully reproducible.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise ValidationError("need at least 2 values to estimate lambda")
    lls = np.array([_yj_profile_loglik(x, lam) for lam in LAMBDA_GRID])
    lam0 = float(LAMBDA_GRID[int(np.argmax(lls))])
    t = yeo_johnson(x, lam0)
    med, mad = _med_mad(t)
    if mad > 0.0:
        keep = np.abs(t - med) / mad <= REJECTION_Z
        if 2 <= keep.sum() < x.size:
            kept = x[keep]
            lls = np.array([_yj_profile_loglik(kept, lam) for lam in LAMBDA_GRID])
            return float(LAMBDA_GRID[int(np.argmax(lls))])
    return lam0


@dataclass(frozen=True)
class TransformModel:
    """All constants of the fitted distance-to-probability chain."""

    class_medians: np.ndarray  # per-class own-distance medians, catalog order
    center: float              # Med of pooled normalized distances
    scale: float               # Mad of pooled normalized distances
    lam: float                 # Yeo-Johnson lambda
    center_post: float         # Med of transformed values
    scale_post: float          # Mad of transformed values


def fit_distance_transform(own_distances, labels, catalog: ClassCatalog) -> TransformModel:
    """Fit the normalization/YJ/probit chain on the training cases'
    distances to their own class."""
    own = np.asarray(own_distances, dtype=float)
    labels = check_labels(labels, len(own), catalog)
    medians = np.zeros(catalog.size)
    for g, name in enumerate(catalog.names):
        member = own[labels == g]
        if member.size == 0:
            raise ValidationError(f"class {name!r} has no training member")
        medians[g] = float(np.median(member))
        if medians[g] <= 0.0:
            raise DegenerateDataError(
                f"class {name!r} has median own-class distance 0; distances are degenerate"
            )
    pooled = own / medians[labels]
    center, scale = _med_mad(pooled)
    if scale <= 0.0:
        raise DegenerateDataError(
            "pooled normalized distances have Mad 0; the distance distribution is degenerate"
        )
    x = (pooled - center) / scale
    lam = estimate_lambda(x)
    t = yeo_johnson(x, lam)
    center_post, scale_post = _med_mad(t)
    if scale_post <= 0.0:
        raise DegenerateDataError("transformed distances have Mad 0")
    return TransformModel(
        class_medians=medians,
        center=center,
        scale=scale,
        lam=lam,
        center_post=center_post,
        scale_post=scale_post,
    )


def farness_scores(distance_matrix: np.ndarray, model: TransformModel) -> np.ndarray:
    """farness(i, g) = Phi(z(i, g)) through the stored chain; strictly
    increasing in D(i, g) for fixed g."""
    dm = np.asarray(distance_matrix, dtype=float)
    if dm.ndim != 2 or dm.shape[1] != len(model.class_medians):
        raise ValidationError(
            f"distance matrix shape {dm.shape} does not match {len(model.class_medians)} classes"
        )
    normalized = dm / model.class_medians[None, :]
    x = (normalized - model.center) / model.scale
    z = (yeo_johnson(x, model.lam) - model.center_post) / model.scale_post
    return norm_cdf(z)


def flag_outliers(farness: np.ndarray, cutoff: float = DEFAULT_CUTOFF) -> np.ndarray:
    """A case is a farness outlier iff farness(i, g) > cutoff for ALL g."""
    if not 0.0 < cutoff < 1.0:
        raise ValidationError(f"cutoff must be in (0, 1), got {cutoff}")
    return np.all(np.asarray(farness) > cutoff, axis=1)


# ---------------------------------------------------------------------------
# the frozen model and its fit / score / persistence paths


@dataclass(frozen=True)
class FarnessModel:
    """Everything needed to score new cases deterministically."""

    variant: str  # "mahalanobis" | "knn"
    catalog: ClassCatalog
    transform: TransformModel
    cutoff: float = DEFAULT_CUTOFF
    # mahalanobis payload
    stats: ClassStats | None = None
    embedding_columns: tuple[str, ...] = ()
    # knn payload
    k: int = DEFAULT_K
    schema: FeatureSchema | None = None
    ranges: dict | None = None
    train_table: FeatureTable | None = None
    train_labels: np.ndarray | None = None

    def __post_init__(self):
        if self.variant not in ("mahalanobis", "knn"):
            raise ValidationError(f"unknown farness variant {self.variant!r}")
        if not 0.0 < self.cutoff < 1.0:
            raise ValidationError(f"cutoff must be in (0, 1), got {self.cutoff}")
        if self.variant == "mahalanobis" and self.stats is None:
            raise ValidationError("mahalanobis variant needs class stats")
        if self.variant == "knn" and (
            self.schema is None or self.train_table is None or self.train_labels is None
        ):
            raise ValidationError("knn variant needs the training table, labels, and schema")


def fit_farness_mahalanobis(emb: EmbeddingTable, cutoff: float = DEFAULT_CUTOFF):
    """Fit the Mahalanobis farness model; returns (model, farness, flags)
    for the training cases."""
    stats = fit_class_stats(emb)
    dm = mahalanobis_distance_matrix(emb.values, stats)
    own = dm[np.arange(dm.shape[0]), emb.labels]
    transform = fit_distance_transform(own, emb.labels, emb.catalog)
    model = FarnessModel(
        variant="mahalanobis",
        catalog=emb.catalog,
        transform=transform,
        cutoff=cutoff,
        stats=stats,
        embedding_columns=emb.columns,
    )
    far = farness_scores(dm, transform)
    return model, far, flag_outliers(far, cutoff)


def fit_farness_knn(table: FeatureTable, labels, catalog: ClassCatalog,
                    k: int = DEFAULT_K, cutoff: float = DEFAULT_CUTOFF,
                    exclude_self: bool = False):
    """Fit the kNN/Gower farness model; returns (model, farness, flags)
    for the training cases."""
    labels = check_labels(labels, table.n, catalog)
    dis = dissimilarity_matrix(table)
    dm = knn_distance_matrix(dis.values, labels, catalog, k=k, exclude_self=exclude_self)
    own = dm[np.arange(dm.shape[0]), labels]
    transform = fit_distance_transform(own, labels, catalog)
    model = FarnessModel(
        variant="knn",
        catalog=catalog,
        transform=transform,
        cutoff=cutoff,
        k=k,
        schema=table.schema,
        ranges=dis.ranges,
        train_table=table,
        train_labels=labels,
    )
    far = farness_scores(dm, transform)
    return model, far, flag_outliers(far, cutoff)


def score_new_cases(model: FarnessModel, *, embeddings: np.ndarray | None = None,
                    table: FeatureTable | None = None):
    """Score new cases with a fitted model; returns (farness, flags).

    Each case's result depends only on that case and the training
    constants, so batch scoring equals case-by-case scoring exactly.
    """
    if model.variant == "mahalanobis":
        if embeddings is None:
            raise ValidationError("mahalanobis variant scores embeddings, none given")
        values = np.asarray(embeddings, dtype=float)
        if values.ndim != 2 or values.shape[1] != model.stats.means.shape[1]:
            raise ValidationError(
                f"expected embeddings with {model.stats.means.shape[1]} columns, "
                f"got shape {values.shape}"
            )
        dm = mahalanobis_distance_matrix(values, model.stats)
    else:
        if table is None:
            raise ValidationError("knn variant scores feature tables, none given")
        cross = cross_dissimilarities(table, model.train_table, model.ranges)
        dm = knn_distance_matrix(cross, model.train_labels, model.catalog, k=model.k)
    far = farness_scores(dm, model.transform)
    return far, flag_outliers(far, model.cutoff)


# --- persistence -----------------------------------------------------------


def _table_to_jsonable(table: FeatureTable) -> dict:
    cols: dict = {}
    for spec in table.schema.columns:
        col = table.columns[spec.name]
        if spec.kind == "nominal":
            cols[spec.name] = [None if v is None else str(v) for v in col]
        else:
            cols[spec.name] = [None if math.isnan(v) else float(v) for v in col]
    return cols


def _table_from_jsonable(schema: FeatureSchema, payload: dict, n: int) -> FeatureTable:
    columns: dict = {}
    for spec in schema.columns:
        if spec.name not in payload:
            raise ValidationError(f"model file: training column {spec.name!r} missing")
        raw = payload[spec.name]
        if len(raw) != n:
            raise ValidationError(f"model file: training column {spec.name!r} has wrong length")
        if spec.kind == "nominal":
            col = np.empty(n, dtype=object)
            col[:] = [None if v is None else str(v) for v in raw]
        else:
            col = np.array([math.nan if v is None else float(v) for v in raw], dtype=float)
        columns[spec.name] = col
    return FeatureTable(schema, columns, n)


def model_to_dict(model: FarnessModel) -> dict:
    t = model.transform
    out = {
        "format_version": MODEL_FORMAT_VERSION,
        "variant": model.variant,
        "classes": list(model.catalog.names),
        "cutoff": model.cutoff,
        "transform": {
            "class_medians": [float(v) for v in t.class_medians],
            "center": t.center,
            "scale": t.scale,
            "lambda": t.lam,
            "center_post": t.center_post,
            "scale_post": t.scale_post,
        },
    }
    if model.variant == "mahalanobis":
        s = model.stats
        out["mahalanobis"] = {
            "columns": list(model.embedding_columns),
            "means": s.means.tolist(),
            "covariances": s.covariances.tolist(),
            "ridges": s.ridges.tolist(),
        }
    else:
        out["knn"] = {
            "k": model.k,
            "schema": model.schema.to_dict(),
            "ranges": {k: [v[0], v[1]] for k, v in model.ranges.items()},
            "train_labels": [model.catalog.names[g] for g in model.train_labels],
            "train_columns": _table_to_jsonable(model.train_table),
        }
    return out


def model_from_dict(raw: dict) -> FarnessModel:
    try:
        version = raw["format_version"]
    except (TypeError, KeyError):
        raise ValidationError("model file lacks a format_version field") from None
    if version != MODEL_FORMAT_VERSION:
        raise ValidationError(
            f"unsupported model format_version {version!r}; this build reads version "
            f"{MODEL_FORMAT_VERSION}"
        )
    try:
        catalog = ClassCatalog(raw["classes"])
        t = raw["transform"]
        transform = TransformModel(
            class_medians=np.asarray(t["class_medians"], dtype=float),
            center=float(t["center"]),
            scale=float(t["scale"]),
            lam=float(t["lambda"]),
            center_post=float(t["center_post"]),
            scale_post=float(t["scale_post"]),
        )
        variant = raw["variant"]
        if variant == "mahalanobis":
            m = raw["mahalanobis"]
            stats = ClassStats(
                means=np.asarray(m["means"], dtype=float),
                covariances=np.asarray(m["covariances"], dtype=float),
                ridges=np.asarray(m["ridges"], dtype=float),
            )
            return FarnessModel(
                variant="mahalanobis",
                catalog=catalog,
                transform=transform,
                cutoff=float(raw["cutoff"]),
                stats=stats,
                embedding_columns=tuple(m["columns"]),
            )
        k_payload = raw["knn"]
        schema = FeatureSchema.from_dict(k_payload["schema"])
        labels = np.array([catalog.index_of(v) for v in k_payload["train_labels"]], dtype=int)
        table = _table_from_jsonable(schema, k_payload["train_columns"], len(labels))
        return FarnessModel(
            variant="knn",
            catalog=catalog,
            transform=transform,
            cutoff=float(raw["cutoff"]),
            k=int(k_payload["k"]),
            schema=schema,
            ranges={k: (float(v[0]), float(v[1])) for k, v in k_payload["ranges"].items()},
            train_table=table,
            train_labels=labels,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"model file is malformed: {exc}") from exc


def save_model(model: FarnessModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n", encoding="utf-8")


def load_model(path) -> FarnessModel:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read model file {path}: {exc}") from exc
    return model_from_dict(raw)
