"""Builders for the three diagnostic displays.

Each builder turns per-case scores (and, for class maps, farness) into a
plain plot-data value that serializes to JSON and renders to SVG.  All
builders are deterministic: identical inputs give identical outputs,
including tie order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import CaseScores, silhouette_summary
from .errors import ValidationError
from .farness import norm_quantile

PROBIT_AXIS_MAX = 4.0
DEFAULT_BINS = 10
DEFAULT_SPAN = 0.75
DEFAULT_DEGREE = 2


# ---------------------------------------------------------------------------
# silhouette plot


@dataclass(frozen=True)
class SilhouetteClassBlock:
    name: str
    ids: tuple[str, ...]       # sorted by s descending (stable ties)
    s: tuple[float, ...]
    mean: float
    count: int


@dataclass(frozen=True)
class SilhouettePlotData:
    classes: tuple[SilhouetteClassBlock, ...]
    overall: float
    n: int
    class_names: tuple[str, ...] = field(default=(), repr=False)  # full catalog

    def to_jsonable(self) -> dict:
        return {
            "kind": "silhouette",
            "overall_mean": self.overall,
            "n": self.n,
            "classes": [
                {
                    "name": b.name,
                    "mean": b.mean,
                    "count": b.count,
                    "cases": [{"id": i, "s": v} for i, v in zip(b.ids, b.s)],
                }
                for b in self.classes
            ],
        }


def build_silhouette(scores: CaseScores, ids=None) -> SilhouettePlotData:
    """Silhouette plot data: per-class bars sorted by s descending,
    classes in catalog order (empty classes omitted)."""
    n = len(scores.s)
    ids = [str(v) for v in ids] if ids is not None else [str(i + 1) for i in range(n)]
    if len(ids) != n:
        raise ValidationError(f"expected {n} ids, got {len(ids)}")
    summary = silhouette_summary(scores.s, scores.given, scores.catalog)
    blocks = []
    for g, name in enumerate(scores.catalog.names):
        member = np.flatnonzero(scores.given == g)
        if member.size == 0:
            continue
        order = member[np.argsort(-scores.s[member], kind="stable")]
        blocks.append(
            SilhouetteClassBlock(
                name=name,
                ids=tuple(ids[i] for i in order),
                s=tuple(float(scores.s[i]) for i in order),
                mean=summary.class_means[name],
                count=summary.class_counts[name],
            )
        )
    return SilhouettePlotData(
        classes=tuple(blocks), overall=summary.overall, n=n,
        class_names=scores.catalog.names,
    )


# ---------------------------------------------------------------------------
# quasi residual plot


@dataclass(frozen=True)
class TrendBin:
    mid: float
    count: int
    # mean mode
    mean: float | None = None
    se: float | None = None
    # quantile mode
    median: float | None = None
    p75: float | None = None


@dataclass(frozen=True)
class QuasiResidualData:
    mode: str                  # "mean" | "quantile"
    feature_kind: str          # "numeric" | "categorical"
    points_x: tuple[float, ...]
    points_pac: tuple[float, ...]
    bins: tuple[TrendBin, ...]
    n_bins: int
    categories: tuple[str, ...] = ()
    loess_x: tuple[float, ...] = ()
    loess_y: tuple[float, ...] = ()
    feature_name: str = "feature"

    def to_jsonable(self) -> dict:
        out = {
            "kind": "qresid",
            "mode": self.mode,
            "feature_kind": self.feature_kind,
            "feature_name": self.feature_name,
            "n_bins": self.n_bins,
            "points": [
                {"x": x, "pac": y} for x, y in zip(self.points_x, self.points_pac)
            ],
            "bins": [
                {
                    "mid": b.mid,
                    "count": b.count,
                    **({"mean": b.mean, "se": b.se} if self.mode == "mean"
                       else {"median": b.median, "p75": b.p75}),
                }
                for b in self.bins
            ],
        }
        if self.categories:
            out["categories"] = list(self.categories)
        if self.loess_x:
            out["loess"] = [{"x": x, "y": y} for x, y in zip(self.loess_x, self.loess_y)]
        return out


def _bin_stats(pac: np.ndarray, mode: str, mid: float) -> TrendBin:
    count = int(pac.size)
    if mode == "mean":
        mean = float(np.mean(pac))
        sd = float(np.std(pac, ddof=1)) if count > 1 else 0.0
        return TrendBin(mid=mid, count=count, mean=mean, se=sd / math.sqrt(count))
    return TrendBin(
        mid=mid,
        count=count,
        median=float(np.percentile(pac, 50)),
        p75=float(np.percentile(pac, 75)),
    )


def build_quasi_residual(pac, feature, mode: str = "mean", bins: int = DEFAULT_BINS,
                         categories=None, feature_name: str = "feature") -> QuasiResidualData:
    """PAC versus a feature with binned trend statistics.

    Numeric features are cut into `bins` equispaced intervals over
    [min, max] (last interval right-closed); a categorical feature gets
    one bin per category.  Mode "mean" yields mean and standard error
    per bin, "quantile" yields median and 75th percentile.  Cases with a
    missing feature value are dropped from the display.
    """
    pac = np.asarray(pac, dtype=float)
    if mode not in ("mean", "quantile"):
        raise ValidationError(f"unknown mode {mode!r} (expected mean or quantile)")
    if bins < 2:
        raise ValidationError(f"need at least 2 bins, got {bins}")
    feature = list(feature)
    if len(feature) != pac.size:
        raise ValidationError(f"feature has {len(feature)} values for {pac.size} cases")

    numeric_vals = None
    if categories is None:
        try:
            numeric_vals = np.array(
                [math.nan if v is None or (isinstance(v, str) and v.strip() in ("", "NA"))
                 else float(v) for v in feature],
                dtype=float,
            )
        except (TypeError, ValueError):
            numeric_vals = None

    if numeric_vals is not None:
        keep = ~np.isnan(numeric_vals)
        if not keep.any():
            raise ValidationError("feature has no non-missing values")
        x = numeric_vals[keep]
        y = pac[keep]
        lo, hi = float(x.min()), float(x.max())
        if hi > lo:
            width = (hi - lo) / bins
            idx = np.minimum(((x - lo) / (hi - lo) * bins).astype(int), bins - 1)
        else:
            width = 0.0
            idx = np.zeros(x.size, dtype=int)
        trend = []
        for b in range(bins):
            in_bin = idx == b
            if not in_bin.any():
                continue
            mid = lo + (b + 0.5) * width if width > 0.0 else lo
            trend.append(_bin_stats(y[in_bin], mode, mid))
        return QuasiResidualData(
            mode=mode,
            feature_kind="numeric",
            points_x=tuple(float(v) for v in x),
            points_pac=tuple(float(v) for v in y),
            bins=tuple(trend),
            n_bins=bins,
            feature_name=feature_name,
        )

    # categorical: one bin per category, positioned at its index
    values = [None if v is None or (isinstance(v, str) and v.strip() in ("", "NA")) else str(v)
              for v in feature]
    cats = [str(c) for c in categories] if categories is not None else sorted(
        {v for v in values if v is not None}
    )
    if not cats:
        raise ValidationError("feature has no non-missing values")
    cat_index = {c: i for i, c in enumerate(cats)}
    xs, ys = [], []
    for v, p in zip(values, pac):
        if v is None:
            continue
        if v not in cat_index:
            raise ValidationError(f"feature value {v!r} not among the declared categories")
        xs.append(float(cat_index[v]))
        ys.append(float(p))
    if not xs:
        raise ValidationError("feature has no non-missing values")
    xs_arr = np.array(xs)
    ys_arr = np.array(ys)
    trend = []
    for i, _ in enumerate(cats):
        in_bin = xs_arr == float(i)
        if not in_bin.any():
            continue
        trend.append(_bin_stats(ys_arr[in_bin], mode, float(i)))
    return QuasiResidualData(
        mode=mode,
        feature_kind="categorical",
        points_x=tuple(xs),
        points_pac=tuple(ys),
        bins=tuple(trend),
        n_bins=len(cats),
        categories=tuple(cats),
        feature_name=feature_name,
    )


def loess_curve(x, y, span: float = DEFAULT_SPAN, degree: int = DEFAULT_DEGREE,
                num_points: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Local polynomial regression with tricube weights.

    For each of `num_points` grid positions over [min x, max x], fits a
    weighted polynomial of the given degree to the span-fraction nearest
    data points and evaluates it at the grid position.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 10:
        raise ValidationError(f"loess needs at least 10 points, got {n}")
    if not 0.0 < span <= 1.0:
        raise ValidationError(f"span must be in (0, 1], got {span}")
    if degree not in (1, 2):
        raise ValidationError(f"degree must be 1 or 2, got {degree}")
    r = int(math.ceil(span * n))
    if r < degree + 2:
        raise ValidationError(
            f"span {span} keeps only {r} local points; degree {degree} needs {degree + 2}"
        )
    grid = np.linspace(float(x.min()), float(x.max()), num_points)
    fitted = np.empty(num_points)
    for i, x0 in enumerate(grid):
        d = np.abs(x - x0)
        h = np.sort(d)[r - 1]
        if h == 0.0:
            fitted[i] = float(np.mean(y[d == 0.0]))
            continue
        u = np.clip(d / h, 0.0, 1.0)
        w = (1.0 - u**3) ** 3
        sw = np.sqrt(w)
        design = np.vander(x - x0, degree + 1, increasing=True)
        beta, *_ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)
        fitted[i] = beta[0]
    return grid, fitted


# ---------------------------------------------------------------------------
# class map


@dataclass(frozen=True)
class ClassMapData:
    class_name: str
    ids: tuple[str, ...]
    x: tuple[float, ...]            # probit-scaled farness, clamped to [0, 4]
    pac: tuple[float, ...]
    predicted: tuple[int, ...]      # class indices for point colors
    predicted_names: tuple[str, ...]
    outlier: tuple[bool, ...]
    cutoff: float
    cutoff_x: float
    class_names: tuple[str, ...] = field(default=(), repr=False)

    def to_jsonable(self) -> dict:
        return {
            "kind": "classmap",
            "class": self.class_name,
            "cutoff": self.cutoff,
            "cutoff_x": self.cutoff_x,
            "classes": list(self.class_names),
            "cases": [
                {
                    "id": i,
                    "x": x,
                    "pac": p,
                    "predicted": name,
                    "outlier": bool(o),
                }
                for i, x, p, name, o in zip(
                    self.ids, self.x, self.pac, self.predicted_names, self.outlier
                )
            ],
        }


def probit_position(farness_values) -> np.ndarray:
    """Probit scale restricted to [0, 4]: quantiles below 0.5 map to 0,
    extreme farness saturates at 4."""
    with np.errstate(divide="ignore"):
        q = norm_quantile(np.asarray(farness_values, dtype=float))
    return np.clip(q, 0.0, PROBIT_AXIS_MAX)


def build_class_map(class_name: str, scores: CaseScores, farness: np.ndarray,
                    outliers, cutoff: float = 0.99, ids=None) -> ClassMapData:
    """Class map data for the members of one given class: probit-scaled
    farness to that class on x, PAC on y, predicted class as color."""
    catalog = scores.catalog
    g = catalog.index_of(class_name)
    farness = np.asarray(farness, dtype=float)
    outliers = np.asarray(outliers, dtype=bool)
    n = len(scores.pac)
    if farness.shape != (n, catalog.size):
        raise ValidationError(
            f"farness matrix shape {farness.shape} does not match {n} cases x "
            f"{catalog.size} classes"
        )
    if not 0.0 < cutoff < 1.0:
        raise ValidationError(f"cutoff must be in (0, 1), got {cutoff}")
    ids = [str(v) for v in ids] if ids is not None else [str(i + 1) for i in range(n)]
    if len(ids) != n:
        raise ValidationError(f"expected {n} ids, got {len(ids)}")
    member = np.flatnonzero(scores.given == g)
    if member.size == 0:
        raise ValidationError(f"class {class_name!r} has no members")
    x = probit_position(farness[member, g])
    cutoff_x = float(np.clip(norm_quantile(cutoff), 0.0, PROBIT_AXIS_MAX))
    return ClassMapData(
        class_name=class_name,
        ids=tuple(ids[i] for i in member),
        x=tuple(float(v) for v in x),
        pac=tuple(float(scores.pac[i]) for i in member),
        predicted=tuple(int(scores.predicted[i]) for i in member),
        predicted_names=tuple(catalog.names[scores.predicted[i]] for i in member),
        outlier=tuple(bool(outliers[i]) for i in member),
        cutoff=cutoff,
        cutoff_x=cutoff_x,
        class_names=catalog.names,
    )
