#!/usr/bin/env python3
"""Regenerate the committed synthetic fixtures under fixtures/.

Two datasets ship with the repo:

* mixed3  -- 200 cases, 3 classes, mixed-type features with missing
  cells, plus synthetic "posteriors" from a noisy nearest-mean model.
  Variable importances live in the schema weights.
* gauss4  -- 500 cases, 4 gaussian classes in R^4 (embedding vectors),
  posteriors via softmax of the embeddings.

Both are seeded; rerunning this script reproduces the files byte for
byte with the same numpy version.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

MIXED3_SEED = 20240511
GAUSS4_SEED = 77


def _fmt(v: float) -> str:
    return repr(float(v))


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    print(f"wrote {path}")


def _softmax(scores: np.ndarray) -> np.ndarray:
    e = np.exp(scores - scores.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def gen_mixed3() -> None:
    rng = np.random.default_rng(MIXED3_SEED)
    classes = ["alpha", "beta", "gamma"]
    counts = [70, 70, 60]
    mus = [0.0, 2.5, 5.0]
    x2_mus = [0.0, 1.0, -1.0]
    cat_levels = ["a", "b", "c", "d"]
    cat_pref = {0: "a", 1: "b", 2: "c"}
    grade_levels = ["low", "mid", "high"]
    grade_probs = [(0.5, 0.3, 0.2), (0.2, 0.5, 0.3), (0.1, 0.3, 0.6)]
    flag_p = [0.2, 0.5, 0.8]

    rows = []
    labels = []
    for g, n_g in enumerate(counts):
        for _ in range(n_g):
            x1 = rng.normal(mus[g], 1.0)
            x2 = rng.normal(x2_mus[g], 1.5)
            cat = cat_pref[g] if rng.uniform() < 0.55 else cat_levels[rng.integers(4)]
            grade = grade_levels[int(rng.choice(3, p=grade_probs[g]))]
            flag = int(rng.uniform() < flag_p[g])
            rows.append([x1, x2, cat, grade, flag])
            labels.append(g)

    # knock out a few cells (never more than 2 per row, x1 kept mostly intact)
    miss_p = [0.02, 0.05, 0.04, 0.03, 0.03]
    for row in rows:
        holes = 0
        for j, p in enumerate(miss_p):
            if holes >= 2:
                break
            if rng.uniform() < p:
                row[j] = None
                holes += 1

    # synthetic posteriors: noisy nearest-mean scores on x1 + a nudge
    # from the preferred category, softmaxed
    post = np.zeros((len(rows), 3))
    for i, (row, g) in enumerate(zip(rows, labels)):
        x1 = row[0] if row[0] is not None else mus[g]
        scores = np.array([-0.5 * (x1 - mu) ** 2 for mu in mus])
        if row[2] is not None:
            for gg, pref in cat_pref.items():
                if row[2] == pref:
                    scores[gg] += 0.8
        scores += rng.normal(0.0, 0.9, 3)
        post[i] = _softmax(scores[None, :])[0]

    ids = [str(i + 1) for i in range(len(rows))]
    _write_csv(
        FIXTURES / "mixed3" / "features.csv",
        ["id", "x1", "x2", "cat", "grade", "flag", "label"],
        (
            [ids[i],
             "" if row[0] is None else _fmt(row[0]),
             "" if row[1] is None else _fmt(row[1]),
             "" if row[2] is None else row[2],
             "" if row[3] is None else row[3],
             "" if row[4] is None else str(row[4]),
             classes[labels[i]]]
            for i, row in enumerate(rows)
        ),
    )
    _write_csv(
        FIXTURES / "mixed3" / "posteriors.csv",
        ["id", *classes, "label"],
        (
            [ids[i], *(_fmt(v) for v in post[i]), classes[labels[i]]]
            for i in range(len(rows))
        ),
    )
    schema = {
        "x1": {"kind": "numeric", "weight": 0.35},
        "x2": {"kind": "numeric", "weight": 0.15},
        "cat": {"kind": "nominal", "weight": 0.25},
        "grade": {"kind": "ordinal", "levels": grade_levels, "weight": 0.15},
        "flag": {"kind": "asymmetric-binary", "weight": 0.10},
    }
    path = FIXTURES / "mixed3" / "schema.json"
    path.write_text(json.dumps(schema, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {path}")


def gen_gauss4() -> None:
    rng = np.random.default_rng(GAUSS4_SEED)
    classes = ["east", "north", "south", "west"]
    per = 125
    sigmas = [1.0, 1.2, 0.9, 1.1]
    blocks = []
    labels = []
    for g in range(4):
        mean = np.zeros(4)
        mean[g] = 3.0
        blocks.append(rng.normal(0.0, sigmas[g], (per, 4)) + mean)
        labels += [g] * per
    values = np.vstack(blocks)
    post = _softmax(values)

    ids = [str(i + 1) for i in range(len(labels))]
    _write_csv(
        FIXTURES / "gauss4" / "embeddings.csv",
        ["id", "v1", "v2", "v3", "v4", "label"],
        (
            [ids[i], *(_fmt(v) for v in values[i]), classes[labels[i]]]
            for i in range(len(labels))
        ),
    )
    _write_csv(
        FIXTURES / "gauss4" / "posteriors.csv",
        ["id", *classes, "label"],
        (
            [ids[i], *(_fmt(v) for v in post[i]), classes[labels[i]]]
            for i in range(len(labels))
        ),
    )


if __name__ == "__main__":
    gen_mixed3()
    gen_gauss4()
