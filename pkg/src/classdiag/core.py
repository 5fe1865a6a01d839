"""Labels, posterior matrices, and the per-case PAC / silhouette scores.

PAC (probability of the alternative class) compares the posterior of a
case's given class with the posterior of its best competing class:
``pac = p_alt / (p_given + p_alt)``.  The silhouette value is the affine
rescaling ``s = 1 - 2 * pac`` in [-1, 1].  All operations here are pure
functions of immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

# Row sums this close to 1 are accepted verbatim; sums within RENORM_TOL
# are silently renormalized; anything worse is a hard error.
ROW_SUM_TOL = 1e-9
RENORM_TOL = 1e-6


@dataclass(frozen=True)
class ClassCatalog:
    """Ordered list of class names. Class index = position in `names`."""

    names: tuple[str, ...]

    def __init__(self, names):
        names = tuple(str(t) for t in names)
        if len(names) < 2:
            raise ValidationError(f"need at least 2 classes, got {len(names)}")
        if len(set(names)) != len(names):
            raise ValidationError("class names must be unique")
        if any(not t for t in names):
            raise ValidationError("class names must be non-empty")
        object.__setattr__(self, "names", names)

    @property
    def size(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValidationError(
                f"unknown class {name!r}; known classes: {', '.join(self.names)}"
            ) from None


@dataclass(frozen=True)
class PosteriorMatrix:
    """n x G row-stochastic matrix of posterior probabilities.

    Rows whose sum is off by more than ROW_SUM_TOL but within RENORM_TOL
    are renormalized (classifier output often carries float noise); rows
    further from 1 raise ValidationError naming the row.
    """

    values: np.ndarray
    catalog: ClassCatalog

    def __init__(self, values, catalog: ClassCatalog):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2:
            raise ValidationError(f"posterior matrix must be 2-D, got shape {values.shape}")
        if values.shape[1] != catalog.size:
            raise ValidationError(
                f"posterior matrix has {values.shape[1]} columns but the catalog "
                f"declares {catalog.size} classes"
            )
        if values.shape[0] == 0:
            raise ValidationError("posterior matrix has no rows")
        if not np.all(np.isfinite(values)):
            row = int(np.argwhere(~np.isfinite(values).all(axis=1))[0, 0])
            raise ValidationError(f"non-finite posterior in row {row}")
        if np.any(values < 0.0) or np.any(values > 1.0 + ROW_SUM_TOL):
            row = int(np.argwhere((values < 0.0) | (values > 1.0 + ROW_SUM_TOL))[0, 0])
            raise ValidationError(f"posterior outside [0, 1] in row {row}")
        sums = values.sum(axis=1)
        err = np.abs(sums - 1.0)
        if np.any(err > RENORM_TOL):
            row = int(np.argmax(err))
            raise ValidationError(
                f"row {row} sums to {float(sums[row])!r}, outside tolerance {RENORM_TOL}"
            )
        fix = err > ROW_SUM_TOL
        if np.any(fix):
            values = values.copy()
            values[fix] = values[fix] / sums[fix, None]
        values = np.ascontiguousarray(values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "catalog", catalog)

    @property
    def n_cases(self) -> int:
        return self.values.shape[0]


def labels_from_names(names, catalog: ClassCatalog) -> np.ndarray:
    """Map class names to integer indices; unknown names are a hard error."""
    return np.array([catalog.index_of(t) for t in names], dtype=int)


def check_labels(labels, n: int, catalog: ClassCatalog) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    if labels.shape != (n,):
        raise ValidationError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= catalog.size):
        bad = int(np.argwhere((labels < 0) | (labels >= catalog.size))[0, 0])
        raise ValidationError(f"label index {labels[bad]} at case {bad} is outside the catalog")
    return labels


@dataclass(frozen=True)
class CaseScores:
    """Per-case diagnostic scores.

    given / predicted / alt_class are integer class indices into the
    catalog; pac is in [0, 1] and s = 1 - 2 * pac in [-1, 1].
    """

    given: np.ndarray
    predicted: np.ndarray
    alt_class: np.ndarray
    pac: np.ndarray
    s: np.ndarray
    catalog: ClassCatalog = field(repr=False)


def predict_map(post: PosteriorMatrix) -> np.ndarray:
    """Maximum-a-posteriori class per row; argmax ties break to the
    lowest class index."""
    return np.argmax(post.values, axis=1)


def best_alternative(post: PosteriorMatrix, labels) -> tuple[np.ndarray, np.ndarray]:
    """Highest posterior among classes other than the given one.

    Returns (p_alt, alt_class); ties break to the lowest class index.
    """
    labels = check_labels(labels, post.n_cases, post.catalog)
    masked = post.values.copy()
    rows = np.arange(post.n_cases)
    masked[rows, labels] = -np.inf
    alt = np.argmax(masked, axis=1)
    return post.values[rows, alt], alt


def pac_value(p_given: float, p_alt: float) -> float:
    """PAC from a single (given, best-alternative) posterior pair.

    The 0/0 case is defined as 0.5 (total indifference); it cannot occur
    for exactly row-stochastic input with G >= 2.
    """
    denom = p_given + p_alt
    if denom <= 0.0:
        return 0.5
    return p_alt / denom


def compute_pac(post: PosteriorMatrix, labels) -> np.ndarray:
    """PAC(i) = p_alt(i) / (p_given(i) + p_alt(i)) for every case."""
    labels = check_labels(labels, post.n_cases, post.catalog)
    p_alt, _ = best_alternative(post, labels)
    p_given = post.values[np.arange(post.n_cases), labels]
    denom = p_given + p_alt
    pac = np.full(post.n_cases, 0.5)
    np.divide(p_alt, denom, out=pac, where=denom > 0.0)
    return pac


def silhouette_values(pac) -> np.ndarray:
    """s(i) = 1 - 2 * pac(i)."""
    pac = np.asarray(pac, dtype=float)
    if pac.size and (np.any(pac < 0.0) or np.any(pac > 1.0) or not np.all(np.isfinite(pac))):
        raise ValidationError("pac values must lie in [0, 1]")
    return 1.0 - 2.0 * pac


def case_scores(post: PosteriorMatrix, labels) -> CaseScores:
    """Bundle predicted class, best alternative, PAC and s for all cases."""
    labels = check_labels(labels, post.n_cases, post.catalog)
    p_alt, alt = best_alternative(post, labels)
    pac = compute_pac(post, labels)
    return CaseScores(
        given=labels,
        predicted=predict_map(post),
        alt_class=alt,
        pac=pac,
        s=silhouette_values(pac),
        catalog=post.catalog,
    )


@dataclass(frozen=True)
class SilhouetteSummary:
    """Per-class and overall average silhouette widths.

    Classes with no member are absent from the dicts rather than
    reported as 0.
    """

    class_means: dict[str, float]
    class_counts: dict[str, int]
    overall: float


def silhouette_summary(s, labels, catalog: ClassCatalog) -> SilhouetteSummary:
    """Average s per class (catalog order, non-empty classes only) and
    the overall unweighted average."""
    s = np.asarray(s, dtype=float)
    labels = check_labels(labels, len(s), catalog)
    means: dict[str, float] = {}
    counts: dict[str, int] = {}
    for g, name in enumerate(catalog.names):
        member = labels == g
        k = int(member.sum())
        if k == 0:
            continue
        means[name] = float(np.mean(s[member]))
        counts[name] = k
    return SilhouetteSummary(class_means=means, class_counts=counts, overall=float(np.mean(s)))
