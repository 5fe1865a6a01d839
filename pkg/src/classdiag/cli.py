"""Command line front end.

Subcommands: scores, fit-farness, score-new, plot.  Exit codes: 0 on
success, 2 for input/validation problems, 3 for numeric degeneracy.
All file writes are atomic (temp file + rename) and deterministic, so
rerunning a command overwrites its outputs with identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import core, diagnostics, farness, render
from .dissimilarity import FeatureSchema, load_feature_csv
from .errors import DegenerateDataError, ValidationError

PROG = "classdiag"
RESERVED_COLUMNS = ("id", "label")


def _use_color() -> bool:
    return os.environ.get("CLASSMAP_NO_COLOR") is None and sys.stderr.isatty()


def _error(msg: str) -> None:
    prefix = "\x1b[31merror:\x1b[0m" if _use_color() else "error:"
    print(f"{PROG}: {prefix} {msg}", file=sys.stderr)


def _ffmt(v) -> str:
    return repr(float(v))


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    _atomic_write_text(path, buf.getvalue())


def _write_json(path: Path, payload: dict) -> None:
    _atomic_write_text(path, json.dumps(payload, indent=2) + "\n")


def _read_csv_rows(path: Path) -> tuple[list[str], list[dict]]:
    if not path.exists():
        raise ValidationError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValidationError(f"{path}: empty file, expected a CSV header")
        rows = list(reader)
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    return list(reader.fieldnames), rows


def load_posteriors_csv(path):
    """Posteriors CSV: class-named probability columns plus a `label`
    column (optional `id`).  Class order = column order."""
    path = Path(path)
    fields, rows = _read_csv_rows(path)
    class_cols = [c for c in fields if c not in RESERVED_COLUMNS]
    if "label" not in fields:
        raise ValidationError(f"{path}: missing `label` column")
    if len(class_cols) < 2:
        raise ValidationError(f"{path}: need at least 2 class probability columns")
    catalog = core.ClassCatalog(class_cols)
    values = np.empty((len(rows), len(class_cols)))
    for r, row in enumerate(rows):
        for c, name in enumerate(class_cols):
            raw = row[name]
            try:
                values[r, c] = float(raw)
            except (TypeError, ValueError):
                raise ValidationError(
                    f"{path}: row {r + 1}, column {name!r}: expected a probability, got {raw!r}"
                ) from None
    post = core.PosteriorMatrix(values, catalog)
    labels = core.labels_from_names([row["label"] for row in rows], catalog)
    ids = [row["id"] for row in rows] if "id" in fields else [str(i + 1) for i in range(len(rows))]
    return post, labels, ids


def load_embeddings_csv(path):
    """Embeddings CSV: numeric columns (all non-reserved) plus optional
    `label` and `id` columns."""
    path = Path(path)
    fields, rows = _read_csv_rows(path)
    value_cols = [c for c in fields if c not in RESERVED_COLUMNS]
    if not value_cols:
        raise ValidationError(f"{path}: no embedding columns")
    values = np.empty((len(rows), len(value_cols)))
    for r, row in enumerate(rows):
        for c, name in enumerate(value_cols):
            raw = row[name]
            try:
                values[r, c] = float(raw)
            except (TypeError, ValueError):
                raise ValidationError(
                    f"{path}: row {r + 1}, column {name!r}: expected a number, got {raw!r}"
                ) from None
    label_names = [row["label"] for row in rows] if "label" in fields else None
    ids = [row["id"] for row in rows] if "id" in fields else [str(i + 1) for i in range(len(rows))]
    return values, tuple(value_cols), label_names, ids


def load_scores_csv(path, catalog=None):
    """Read a scores CSV back into CaseScores (plus ids).

    Without an explicit catalog the class order is first appearance in
    the `given` column, then in `predicted`.
    """
    path = Path(path)
    fields, rows = _read_csv_rows(path)
    for col in ("given", "predicted", "alt_class", "PAC", "s"):
        if col not in fields:
            raise ValidationError(f"{path}: missing column {col!r}")
    if catalog is None:
        seen: list[str] = []
        for col in ("given", "predicted", "alt_class"):
            for row in rows:
                if row[col] not in seen:
                    seen.append(row[col])
        catalog = core.ClassCatalog(seen)
    given = core.labels_from_names([r["given"] for r in rows], catalog)
    predicted = core.labels_from_names([r["predicted"] for r in rows], catalog)
    alt = core.labels_from_names([r["alt_class"] for r in rows], catalog)
    try:
        pac = np.array([float(r["PAC"]) for r in rows])
        s = np.array([float(r["s"]) for r in rows])
    except ValueError as exc:
        raise ValidationError(f"{path}: non-numeric PAC/s value ({exc})") from exc
    ids = [r["id"] for r in rows] if "id" in fields else [str(i + 1) for i in range(len(rows))]
    scores = core.CaseScores(given=given, predicted=predicted, alt_class=alt,
                             pac=pac, s=s, catalog=catalog)
    return scores, ids


def load_farness_csv(path):
    """Farness CSV written by fit-farness/score-new: farness_<class>
    columns (catalog order) plus `outlier`."""
    path = Path(path)
    fields, rows = _read_csv_rows(path)
    class_names = [c[len("farness_"):] for c in fields if c.startswith("farness_")]
    if not class_names:
        raise ValidationError(f"{path}: no farness_<class> columns")
    values = np.empty((len(rows), len(class_names)))
    for r, row in enumerate(rows):
        for c, name in enumerate(class_names):
            try:
                values[r, c] = float(row[f"farness_{name}"])
            except (TypeError, ValueError):
                raise ValidationError(
                    f"{path}: row {r + 1}: bad farness value for class {name!r}"
                ) from None
    if "outlier" in fields:
        flags = np.array([row["outlier"] == "1" for row in rows])
    else:
        flags = np.zeros(len(rows), dtype=bool)
    ids = [row["id"] for row in rows] if "id" in fields else [str(i + 1) for i in range(len(rows))]
    return values, flags, class_names, ids


def _farness_rows(ids, far, flags):
    for i, case_id in enumerate(ids):
        yield [case_id, *(_ffmt(v) for v in far[i]), "1" if flags[i] else "0"]


def _write_farness_csv(path: Path, catalog, ids, far, flags) -> None:
    header = ["id", *(f"farness_{name}" for name in catalog.names), "outlier"]
    _write_csv(path, header, _farness_rows(ids, far, flags))


# ---------------------------------------------------------------------------
# subcommands


def cmd_scores(args) -> int:
    post, labels, ids = load_posteriors_csv(args.posteriors)
    scores = core.case_scores(post, labels)
    names = post.catalog.names
    out = Path(args.out_dir) / "scores.csv"
    rows = (
        [ids[i], names[scores.given[i]], names[scores.predicted[i]],
         names[scores.alt_class[i]], _ffmt(scores.pac[i]), _ffmt(scores.s[i])]
        for i in range(post.n_cases)
    )
    _write_csv(out, ["id", "given", "predicted", "alt_class", "PAC", "s"], rows)
    print(f"wrote {out}")
    return 0


def cmd_fit_farness(args) -> int:
    out_dir = Path(args.out_dir)
    if args.variant == "mahalanobis":
        if not args.embeddings:
            raise ValidationError("--variant mahalanobis requires --embeddings")
        values, columns, label_names, ids = load_embeddings_csv(args.embeddings)
        if label_names is None:
            raise ValidationError(f"{args.embeddings}: missing `label` column")
        catalog = core.ClassCatalog(sorted(set(label_names)))
        labels = core.labels_from_names(label_names, catalog)
        emb = farness.EmbeddingTable(values=values, labels=labels, catalog=catalog,
                                     columns=columns)
        model, far, flags = farness.fit_farness_mahalanobis(emb, cutoff=args.cutoff)
    else:
        if not args.features or not args.schema:
            raise ValidationError("--variant knn requires --features and --schema")
        schema = FeatureSchema.from_json_file(args.schema)
        table, label_names = load_feature_csv(args.features, schema, require_labels=True)
        catalog = core.ClassCatalog(sorted(set(label_names)))
        labels = core.labels_from_names(label_names, catalog)
        ids = table.ids
        model, far, flags = farness.fit_farness_knn(
            table, labels, catalog, k=args.k, cutoff=args.cutoff,
            exclude_self=args.exclude_self,
        )
    model_path = out_dir / "farness_model.json"
    _write_json(model_path, farness.model_to_dict(model))
    csv_path = out_dir / "farness_train.csv"
    _write_farness_csv(csv_path, model.catalog, ids, far, flags)
    print(f"wrote {model_path}")
    print(f"wrote {csv_path}")
    return 0


def cmd_score_new(args) -> int:
    model = farness.load_model(args.model)
    if model.variant == "mahalanobis":
        if not args.embeddings:
            raise ValidationError("model variant mahalanobis requires --embeddings")
        values, columns, _, ids = load_embeddings_csv(args.embeddings)
        if columns != model.embedding_columns:
            raise ValidationError(
                f"embedding columns {columns} do not match the model "
                f"({model.embedding_columns})"
            )
        far, flags = farness.score_new_cases(model, embeddings=values)
    else:
        if not args.features:
            raise ValidationError("model variant knn requires --features")
        table, _ = load_feature_csv(args.features, model.schema)
        ids = table.ids
        far, flags = farness.score_new_cases(model, table=table)
    out = Path(args.out_dir) / "farness_new.csv"
    _write_farness_csv(out, model.catalog, ids, far, flags)
    print(f"wrote {out}")
    return 0


def _plot_outputs(args, kind: str, data, svg: str) -> int:
    suffix = f"_{args.class_name}" if kind == "classmap" else ""
    out_dir = Path(args.out_dir)
    svg_path = out_dir / f"{kind}{suffix}.svg"
    json_path = out_dir / f"{kind}{suffix}.json"
    _atomic_write_text(svg_path, svg)
    _write_json(json_path, data.to_jsonable())
    print(f"wrote {svg_path}")
    print(f"wrote {json_path}")
    return 0


def _feature_column(args, n: int):
    if not args.feature or not args.features_file:
        raise ValidationError("plot qresid requires --feature and --features-file")
    fields, rows = _read_csv_rows(Path(args.features_file))
    if args.feature not in fields:
        raise ValidationError(
            f"{args.features_file}: no column {args.feature!r}; available: "
            + ", ".join(fields)
        )
    if len(rows) != n:
        raise ValidationError(
            f"{args.features_file} has {len(rows)} rows but the scores file has {n}"
        )
    return [row[args.feature] for row in rows]


def cmd_plot(args) -> int:
    if not args.scores:
        raise ValidationError("plot requires --scores")
    catalog = core.ClassCatalog(args.classes.split(",")) if args.classes else None

    if args.kind == "silhouette":
        scores, ids = load_scores_csv(args.scores, catalog)
        data = diagnostics.build_silhouette(scores, ids=ids)
        cfg = render.default_config("silhouette", title=args.title or "silhouette plot")
        return _plot_outputs(args, "silhouette", data, render.render_silhouette_svg(data, cfg))

    if args.kind == "qresid":
        scores, _ = load_scores_csv(args.scores, catalog)
        feature = _feature_column(args, len(scores.pac))
        data = diagnostics.build_quasi_residual(
            scores.pac, feature, mode=args.mode, bins=args.bins,
            feature_name=args.feature,
        )
        if args.loess:
            if data.feature_kind != "numeric":
                raise ValidationError("--loess needs a numeric feature")
            gx, gy = diagnostics.loess_curve(
                np.array(data.points_x), np.array(data.points_pac),
                span=args.span, degree=args.degree,
            )
            data = diagnostics.QuasiResidualData(
                mode=data.mode, feature_kind=data.feature_kind,
                points_x=data.points_x, points_pac=data.points_pac,
                bins=data.bins, n_bins=data.n_bins, categories=data.categories,
                loess_x=tuple(float(v) for v in gx),
                loess_y=tuple(float(v) for v in gy),
                feature_name=data.feature_name,
            )
        cfg = render.default_config("qresid", title=args.title or f"PAC vs {args.feature}",
                                    x_label=args.feature)
        return _plot_outputs(args, "qresid", data, render.render_quasi_residual_svg(data, cfg))

    # classmap
    if not args.farness:
        raise ValidationError("plot classmap requires --farness")
    if not args.class_name:
        raise ValidationError("plot classmap requires --class")
    far, flags, class_names, far_ids = load_farness_csv(args.farness)
    catalog = catalog or core.ClassCatalog(class_names)
    missing = [t for t in catalog.names if t not in class_names]
    if missing:
        raise ValidationError(
            f"{args.farness} has no farness column for class(es) {', '.join(missing)}"
        )
    far = far[:, [class_names.index(t) for t in catalog.names]]
    scores, ids = load_scores_csv(args.scores, catalog)
    if far.shape[0] != len(scores.pac):
        raise ValidationError(
            f"{args.farness} has {far.shape[0]} rows but the scores file has {len(scores.pac)}"
        )
    data = diagnostics.build_class_map(args.class_name, scores, far, flags,
                                       cutoff=args.cutoff, ids=ids)
    cfg = render.default_config("classmap", title=args.title or f"class map: {args.class_name}")
    return _plot_outputs(args, "classmap", data, render.render_class_map_svg(data, cfg))


# ---------------------------------------------------------------------------
# argument handling


def _read_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"config file {p}: no such file")
    text = p.read_text(encoding="utf-8")
    if p.suffix.lower() == ".json":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {p}: invalid JSON ({exc})") from exc
    else:
        try:
            import tomllib as toml
        except ImportError:  # Python 3.10
            import tomli as toml
        try:
            raw = toml.loads(text)
        except toml.TOMLDecodeError as exc:
            raise ValidationError(f"config file {p}: invalid TOML ({exc})") from exc
    if not isinstance(raw, dict):
        raise ValidationError(f"config file {p}: top level must be a table/object")
    return {str(k).replace("-", "_"): v for k, v in raw.items()}


# (attribute, caster, default) per option that --config may supply.
_MERGEABLE = {
    "variant": (str, None),
    "k": (int, farness.DEFAULT_K),
    "cutoff": (float, farness.DEFAULT_CUTOFF),
    "bins": (int, diagnostics.DEFAULT_BINS),
    "mode": (str, "mean"),
    "span": (float, diagnostics.DEFAULT_SPAN),
    "degree": (int, diagnostics.DEFAULT_DEGREE),
    "out_dir": (str, "."),
}


def _merge_config(args) -> None:
    config = _read_config(args.config) if getattr(args, "config", None) else {}
    for key, (caster, default) in _MERGEABLE.items():
        if not hasattr(args, key):
            continue
        if getattr(args, key) is not None:
            continue
        if key in config:
            try:
                setattr(args, key, caster(config[key]))
            except (TypeError, ValueError):
                raise ValidationError(f"config value {key} = {config[key]!r} is invalid") from None
        else:
            setattr(args, key, default)
    if getattr(args, "variant", "knn") is None:
        raise ValidationError("--variant is required (mahalanobis or knn)")
    if getattr(args, "variant", "knn") not in ("knn", "mahalanobis"):
        raise ValidationError(f"unknown variant {args.variant!r}")
    if getattr(args, "mode", "mean") not in ("mean", "quantile"):
        raise ValidationError(f"unknown mode {args.mode!r}")
    if hasattr(args, "cutoff") and not 0.0 < args.cutoff < 1.0:
        raise ValidationError(f"cutoff must be in (0, 1), got {args.cutoff}")
    if hasattr(args, "k") and args.k < 1:
        raise ValidationError(f"k must be >= 1, got {args.k}")
    if hasattr(args, "bins") and args.bins < 2:
        raise ValidationError(f"bins must be >= 2, got {args.bins}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Per-case classification diagnostics: PAC scores, farness, "
                    "silhouette / quasi residual / class map displays.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out-dir", dest="out_dir", default=None,
                       help="output directory (default: current directory)")
        p.add_argument("--config", default=None,
                       help="TOML or JSON file with default option values")

    p = sub.add_parser("scores", help="compute PAC and silhouette values from posteriors")
    p.add_argument("--posteriors", required=True,
                   help="CSV with class probability columns and a label column")
    common(p)
    p.set_defaults(func=cmd_scores)

    p = sub.add_parser("fit-farness", help="fit a farness model on training data")
    p.add_argument("--variant", choices=["mahalanobis", "knn"], default=None)
    p.add_argument("--embeddings", help="embeddings CSV (mahalanobis variant)")
    p.add_argument("--features", help="feature CSV (knn variant)")
    p.add_argument("--schema", help="feature schema JSON (knn variant)")
    p.add_argument("--k", type=int, default=None, help="nearest neighbors (default 5)")
    p.add_argument("--cutoff", type=float, default=None,
                   help="farness outlier cutoff (default 0.99)")
    p.add_argument("--exclude-self", action="store_true", dest="exclude_self",
                   help="drop each training case's self-dissimilarity from kNN")
    common(p)
    p.set_defaults(func=cmd_fit_farness)

    p = sub.add_parser("score-new", help="score new cases with a fitted farness model")
    p.add_argument("--model", required=True, help="farness model JSON")
    p.add_argument("--embeddings", help="embeddings CSV (mahalanobis models)")
    p.add_argument("--features", help="feature CSV (knn models)")
    common(p)
    p.set_defaults(func=cmd_score_new)

    p = sub.add_parser("plot", help="render a display as SVG + JSON")
    p.add_argument("kind", choices=["silhouette", "qresid", "classmap"])
    p.add_argument("--scores", help="scores CSV from the scores subcommand")
    p.add_argument("--feature", help="feature column for qresid")
    p.add_argument("--features-file", dest="features_file",
                   help="CSV holding the qresid feature column")
    p.add_argument("--farness", help="farness CSV for classmap")
    p.add_argument("--class", dest="class_name", help="given class for classmap")
    p.add_argument("--classes", help="comma-separated class order override")
    p.add_argument("--mode", choices=["mean", "quantile"], default=None)
    p.add_argument("--bins", type=int, default=None, help="trend intervals (default 10)")
    p.add_argument("--loess", action="store_true", help="add a loess curve (qresid)")
    p.add_argument("--span", type=float, default=None, help="loess span (default 0.75)")
    p.add_argument("--degree", type=int, default=None, help="loess degree (default 2)")
    p.add_argument("--cutoff", type=float, default=None,
                   help="classmap cutoff line (default 0.99)")
    p.add_argument("--title", default=None)
    common(p)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _merge_config(args)
        return args.func(args)
    except DegenerateDataError as exc:
        _error(str(exc))
        return 3
    except ValidationError as exc:
        _error(str(exc))
        return 2
    except OSError as exc:
        _error(str(exc))
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
