"""Importance-weighted Gower dissimilarities for mixed-type feature tables.

Column kinds: numeric, nominal, ordinal (declared level order), and
asymmetric-binary (0/1 where joint absence is not a match but a
non-comparison).  Missing cells (empty or ``NA`` in CSV) drop the column
from the affected pair.  The dissimilarity between two cases is

    d(i, j) = sum_j w_j * delta_ij * d_ij / sum_j w_j * delta_ij

with per-column contributions in [0, 1], so d(i, j) is in [0, 1]
whenever at least one column is comparable.

Numeric columns are scaled by their range over the *training* table;
those ranges are frozen so that test cases are scored against training
constants only.  A zero-range (constant) column contributes 0 to every
comparison.  Test values outside the training range are clipped so the
per-column contribution stays in [0, 1].
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import UndefinedPairError, ValidationError

COLUMN_KINDS = ("numeric", "nominal", "ordinal", "asymmetric-binary")
MISSING_TOKENS = ("", "NA")


@dataclass(frozen=True)
class ColumnSpec:
    """One feature column: name, kind, Gower weight, ordinal levels."""

    name: str
    kind: str
    weight: float = 1.0
    levels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in COLUMN_KINDS:
            raise ValidationError(
                f"column {self.name!r}: unknown kind {self.kind!r} "
                f"(expected one of {', '.join(COLUMN_KINDS)})"
            )
        if not (math.isfinite(self.weight) and self.weight >= 0.0):
            raise ValidationError(f"column {self.name!r}: weight must be >= 0")
        if self.kind == "ordinal":
            if not self.levels:
                raise ValidationError(f"ordinal column {self.name!r} must declare levels")
            if len(set(self.levels)) != len(self.levels):
                raise ValidationError(f"ordinal column {self.name!r} has duplicate levels")
        elif self.levels is not None:
            raise ValidationError(f"column {self.name!r}: levels only apply to ordinal columns")


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered column specs; at least one column must have weight > 0."""

    columns: tuple[ColumnSpec, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValidationError("schema has duplicate column names")
        if not any(c.weight > 0.0 for c in self.columns):
            raise ValidationError("schema needs at least one column with weight > 0")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def to_dict(self) -> dict:
        out: dict = {}
        for c in self.columns:
            entry: dict = {"kind": c.kind, "weight": c.weight}
            if c.levels is not None:
                entry["levels"] = list(c.levels)
            out[c.name] = entry
        return out

    @classmethod
    def from_dict(cls, raw: Mapping) -> "FeatureSchema":
        cols = []
        for name, entry in raw.items():
            if not isinstance(entry, Mapping) or "kind" not in entry:
                raise ValidationError(f"schema entry for {name!r} must map to {{kind, weight, levels?}}")
            levels = entry.get("levels")
            cols.append(
                ColumnSpec(
                    name=str(name),
                    kind=str(entry["kind"]),
                    weight=float(entry.get("weight", 1.0)),
                    levels=tuple(str(v) for v in levels) if levels is not None else None,
                )
            )
        return cls(columns=tuple(cols))

    @classmethod
    def from_json_file(cls, path) -> "FeatureSchema":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"schema file {path}: invalid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise ValidationError(f"schema file {path}: top level must be an object")
        return cls.from_dict(raw)


def _parse_cell(spec: ColumnSpec, raw, context: str):
    """Parse a raw cell to its internal value; None for missing."""
    if raw is None:
        return None
    if isinstance(raw, str) and raw.strip() in MISSING_TOKENS:
        return None
    if isinstance(raw, float) and math.isnan(raw):
        return None
    if spec.kind == "numeric":
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ValidationError(f"{context}: column {spec.name!r} expects a number, got {raw!r}") from None
    if spec.kind == "nominal":
        return str(raw)
    if spec.kind == "ordinal":
        raw = str(raw)
        try:
            return float(spec.levels.index(raw))
        except ValueError:
            raise ValidationError(
                f"{context}: column {spec.name!r} has unknown level {raw!r} "
                f"(declared: {', '.join(spec.levels)})"
            ) from None
    # asymmetric-binary
    try:
        v = float(raw)
    except (TypeError, ValueError):
        raise ValidationError(f"{context}: column {spec.name!r} expects 0 or 1, got {raw!r}") from None
    if v not in (0.0, 1.0):
        raise ValidationError(f"{context}: column {spec.name!r} expects 0 or 1, got {raw!r}")
    return v


class FeatureTable:
    """Columnar mixed-type table conforming to a FeatureSchema.

    Numeric/ordinal/asymmetric-binary columns are float arrays with NaN
    for missing; nominal columns are object arrays with None for missing.
    """

    def __init__(self, schema: FeatureSchema, columns: dict, n: int, ids=None):
        self.schema = schema
        self.columns = columns
        self.n = n
        self.ids = list(ids) if ids is not None else [str(i + 1) for i in range(n)]
        if len(self.ids) != n:
            raise ValidationError(f"expected {n} ids, got {len(self.ids)}")

    @classmethod
    def from_rows(cls, schema: FeatureSchema, rows: Sequence[Mapping], ids=None) -> "FeatureTable":
        n = len(rows)
        columns: dict = {}
        for spec in schema.columns:
            parsed = []
            for r, row in enumerate(rows):
                if spec.name not in row:
                    raise ValidationError(f"row {r}: missing column {spec.name!r}")
                parsed.append(_parse_cell(spec, row[spec.name], f"row {r}"))
            if spec.kind == "nominal":
                col = np.empty(n, dtype=object)
                col[:] = parsed
            else:
                col = np.array([math.nan if v is None else v for v in parsed], dtype=float)
            columns[spec.name] = col
        return cls(schema, columns, n, ids=ids)

    def row(self, i: int) -> dict:
        out = {}
        for spec in self.schema.columns:
            v = self.columns[spec.name][i]
            if spec.kind == "nominal":
                out[spec.name] = v
            else:
                out[spec.name] = None if math.isnan(v) else float(v)
        return out


def load_feature_csv(path, schema: FeatureSchema, label_column: str = "label",
                     require_labels: bool = False):
    """Read a feature CSV (header mandatory; empty cell or NA = missing).

    Returns (table, label_names) where label_names is None when the file
    has no label column.  An ``id`` column is honored when present.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValidationError(f"{path}: empty file, expected a CSV header")
        missing = [c.name for c in schema.columns if c.name not in reader.fieldnames]
        if missing:
            raise ValidationError(f"{path}: missing schema column(s) {', '.join(missing)}")
        rows = list(reader)
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    ids = [r["id"] for r in rows] if "id" in reader.fieldnames else None
    labels = None
    if label_column in reader.fieldnames:
        labels = [r[label_column] for r in rows]
    elif require_labels:
        raise ValidationError(f"{path}: missing required {label_column!r} column")
    return FeatureTable.from_rows(schema, rows, ids=ids), labels


def numeric_ranges(table: FeatureTable) -> dict[str, tuple[float, float]]:
    """Per-numeric-column (min, max) over non-missing training values."""
    ranges: dict[str, tuple[float, float]] = {}
    for spec in table.schema.columns:
        if spec.kind != "numeric":
            continue
        col = table.columns[spec.name]
        finite = col[~np.isnan(col)]
        if finite.size == 0:
            ranges[spec.name] = (0.0, 0.0)
        else:
            ranges[spec.name] = (float(finite.min()), float(finite.max()))
    return ranges


def _column_terms(spec: ColumnSpec, a: np.ndarray, b: np.ndarray,
                  ranges: Mapping[str, tuple[float, float]]):
    """Vectorized (delta, contribution) for one column between value
    arrays `a` and `b` of equal length."""
    if spec.kind == "nominal":
        present = np.array([x is not None for x in a]) & np.array([x is not None for x in b])
        contr = np.where(np.array([x != y for x, y in zip(a, b)]), 1.0, 0.0)
        return present.astype(float), np.where(present, contr, 0.0)
    present = ~np.isnan(a) & ~np.isnan(b)
    if spec.kind == "asymmetric-binary":
        delta = present & ~((a == 0.0) & (b == 0.0))
        contr = np.where(a != b, 1.0, 0.0)
        return delta.astype(float), np.where(delta, contr, 0.0)
    if spec.kind == "ordinal":
        span = float(len(spec.levels) - 1)
    else:
        lo, hi = ranges[spec.name]
        span = hi - lo
    if span > 0.0:
        contr = np.clip(np.abs(a - b) / span, 0.0, 1.0)
    else:
        contr = np.zeros(len(a))
    return present.astype(float), np.where(present, contr, 0.0)


def _pair_value(spec: ColumnSpec, raw):
    """Normalize one raw pair value: ordinal level strings become ranks,
    numbers pass through, None/NA stay missing."""
    if spec.kind == "ordinal" and isinstance(raw, (int, float)) and not (
        isinstance(raw, float) and math.isnan(raw)
    ):
        return float(raw)
    return _parse_cell(spec, raw, "pair")


def pair_dissimilarity(row_a: Mapping, row_b: Mapping, schema: FeatureSchema,
                       ranges: Mapping[str, tuple[float, float]]) -> float | None:
    """Weighted Gower dissimilarity between two cases, or None when no
    column is comparable (the undefined-dissimilarity signal)."""
    num = 0.0
    den = 0.0
    for spec in schema.columns:
        av = _pair_value(spec, row_a.get(spec.name))
        bv = _pair_value(spec, row_b.get(spec.name))
        if spec.kind == "nominal":
            a = np.empty(1, dtype=object)
            b = np.empty(1, dtype=object)
            a[0], b[0] = av, bv
        else:
            a = np.array([math.nan if av is None else av])
            b = np.array([math.nan if bv is None else bv])
        delta, contr = _column_terms(spec, a, b, ranges)
        num += spec.weight * delta[0] * contr[0]
        den += spec.weight * delta[0]
    if den == 0.0:
        return None
    return num / den


def _rows_against_table(table_a: FeatureTable, i: int, table_b: FeatureTable,
                        ranges: Mapping[str, tuple[float, float]]):
    """Dissimilarities of case i in table_a to every case of table_b.

    Accumulates column terms in schema order, so a row's values depend
    only on case i and table_b (batch size never changes results).
    """
    n = table_b.n
    num = np.zeros(n)
    den = np.zeros(n)
    for spec in table_a.schema.columns:
        if spec.weight == 0.0:
            continue
        a_col = table_a.columns[spec.name]
        if spec.kind == "nominal":
            a = np.empty(n, dtype=object)
            a[:] = [a_col[i]] * n
        else:
            a = np.full(n, a_col[i])
        delta, contr = _column_terms(spec, a, table_b.columns[spec.name], ranges)
        num += spec.weight * delta * contr
        den += spec.weight * delta
    vals = np.full(n, np.nan)
    np.divide(num, den, out=vals, where=den > 0.0)
    return vals


@dataclass(frozen=True)
class DissimilarityMatrix:
    """Symmetric pairwise Gower matrix plus the frozen numeric ranges."""

    values: np.ndarray
    ranges: dict[str, tuple[float, float]]


def dissimilarity_matrix(table: FeatureTable) -> DissimilarityMatrix:
    """All-pairs weighted Gower matrix; numeric ranges are frozen from
    this table for later test-time reuse.  Raises UndefinedPairError if
    any pair has no comparable column."""
    if table.n < 2:
        raise ValidationError(f"need at least 2 cases, got {table.n}")
    ranges = numeric_ranges(table)
    out = np.zeros((table.n, table.n))
    undefined = []
    for i in range(table.n):
        row = _rows_against_table(table, i, table, ranges)
        for j in range(i + 1, table.n):
            if math.isnan(row[j]):
                undefined.append((i, j))
            else:
                out[i, j] = out[j, i] = row[j]
    if undefined:
        raise UndefinedPairError(undefined)
    return DissimilarityMatrix(values=out, ranges=ranges)


def cross_dissimilarities(new_table: FeatureTable, train_table: FeatureTable,
                          ranges: Mapping[str, tuple[float, float]]) -> np.ndarray:
    """m x n Gower dissimilarities of new cases against training cases,
    using the training numeric ranges."""
    if new_table.schema != train_table.schema:
        raise ValidationError("new data schema does not match the training schema")
    out = np.zeros((new_table.n, train_table.n))
    undefined = []
    for i in range(new_table.n):
        row = _rows_against_table(new_table, i, train_table, ranges)
        bad = np.argwhere(np.isnan(row)).ravel()
        undefined.extend((i, int(j)) for j in bad)
        out[i] = np.nan_to_num(row, nan=0.0)
    if undefined:
        raise UndefinedPairError(undefined)
    return out
