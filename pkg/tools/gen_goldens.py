#!/usr/bin/env python3
"""Regenerate the committed golden SVGs under tests/golden/.

Runs the CLI pipeline on the shipped fixtures and copies the three
display files (plus the small unit-test silhouette) into tests/golden/.
Goldens change only when rendering or fixtures intentionally change;
review the diff before committing.
"""

from __future__ import annotations

import shutil
import tempfile
from pathlib import Path

import numpy as np

from classdiag import ClassCatalog, PosteriorMatrix, case_scores
from classdiag.cli import main
from classdiag.diagnostics import build_silhouette
from classdiag.render import render_silhouette_svg

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
GOLDEN = ROOT / "tests" / "golden"


def unit_silhouette_svg() -> str:
    """Small fixed 3-class, 12-case silhouette for the render unit test."""
    cat = ClassCatalog(["ash", "birch", "cedar"])
    post = PosteriorMatrix(
        [
            [0.9, 0.05, 0.05], [0.7, 0.2, 0.1], [0.4, 0.5, 0.1], [0.8, 0.1, 0.1],
            [0.2, 0.6, 0.2], [0.1, 0.8, 0.1], [0.3, 0.3, 0.4], [0.25, 0.7, 0.05],
            [0.05, 0.15, 0.8], [0.3, 0.2, 0.5], [0.1, 0.1, 0.8], [0.45, 0.45, 0.1],
        ],
        cat,
    )
    labels = np.array([0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2])
    return render_silhouette_svg(build_silhouette(case_scores(post, labels)))


def run(argv) -> None:
    code = main(argv)
    if code != 0:
        raise SystemExit(f"CLI failed ({code}): {argv}")


def regenerate() -> None:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        m3 = Path(tmp) / "mixed3"
        g4 = Path(tmp) / "gauss4"
        run(["scores", "--posteriors", str(FIXTURES / "mixed3/posteriors.csv"),
             "--out-dir", str(m3)])
        run(["plot", "silhouette", "--scores", str(m3 / "scores.csv"),
             "--out-dir", str(m3)])
        run(["plot", "qresid", "--scores", str(m3 / "scores.csv"),
             "--feature", "x1",
             "--features-file", str(FIXTURES / "mixed3/features.csv"),
             "--out-dir", str(m3)])
        run(["scores", "--posteriors", str(FIXTURES / "gauss4/posteriors.csv"),
             "--out-dir", str(g4)])
        run(["fit-farness", "--variant", "mahalanobis",
             "--embeddings", str(FIXTURES / "gauss4/embeddings.csv"),
             "--out-dir", str(g4)])
        run(["plot", "classmap", "--scores", str(g4 / "scores.csv"),
             "--farness", str(g4 / "farness_train.csv"),
             "--class", "north", "--out-dir", str(g4)])
        for src, name in [
            (m3 / "silhouette.svg", "silhouette.svg"),
            (m3 / "qresid.svg", "qresid.svg"),
            (g4 / "classmap_north.svg", "classmap_north.svg"),
        ]:
            shutil.copyfile(src, GOLDEN / name)
            print(f"wrote {GOLDEN / name}")
    (GOLDEN / "silhouette_unit.svg").write_text(unit_silhouette_svg(), encoding="utf-8")
    print(f"wrote {GOLDEN / 'silhouette_unit.svg'}")


if __name__ == "__main__":
    regenerate()
