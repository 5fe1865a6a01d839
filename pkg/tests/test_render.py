import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from classdiag.core import ClassCatalog, PosteriorMatrix, case_scores, silhouette_summary
from classdiag.diagnostics import (
    SilhouettePlotData,
    build_class_map,
    build_quasi_residual,
    build_silhouette,
)
from classdiag.errors import ValidationError
from classdiag.render import (
    RenderConfig,
    default_config,
    render_class_map_svg,
    render_quasi_residual_svg,
    render_silhouette_svg,
)
from test_diagnostics import scores_from_s

CAT2 = ClassCatalog(["A", "B"])


def unit_silhouette_scores():
    """The fixed 12-case, 3-class posterior fixture behind the committed
    unit golden."""
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
    return case_scores(post, labels)


def sample_qresid(loess=False):
    rng = np.random.default_rng(55)
    pac = rng.uniform(0, 1, 60)
    feature = rng.normal(0, 1, 60)
    data = build_quasi_residual(pac, feature)
    if loess:
        from classdiag.diagnostics import QuasiResidualData, loess_curve

        gx, gy = loess_curve(np.array(data.points_x), np.array(data.points_pac))
        data = QuasiResidualData(
            mode=data.mode, feature_kind=data.feature_kind, points_x=data.points_x,
            points_pac=data.points_pac, bins=data.bins, n_bins=data.n_bins,
            loess_x=tuple(map(float, gx)), loess_y=tuple(map(float, gy)),
        )
    return data


def sample_classmap():
    sc = scores_from_s([0.8, -0.2, 0.4, 0.6], [0, 0, 0, 1], CAT2)
    far = np.array([[0.5, 0.9], [0.99999, 0.999], [0.2, 0.4], [0.7, 0.1]])
    flags = np.array([False, True, False, False])
    return build_class_map("A", sc, far, flags)


def assert_clean_svg(svg: str):
    ET.fromstring(svg)  # well-formed XML
    stripped = svg.replace("http://www.w3.org/2000/svg", "")
    assert "http" not in stripped and "href" not in stripped


class TestDeterminismAndHygiene:
    def test_all_renderers_clean_and_stable(self):
        sil = build_silhouette(unit_silhouette_scores())
        for render, data in [
            (render_silhouette_svg, sil),
            (render_quasi_residual_svg, sample_qresid(loess=True)),
            (render_class_map_svg, sample_classmap()),
        ]:
            one = render(data)
            two = render(data)
            assert one == two
            assert_clean_svg(one)

    def test_coordinates_use_four_decimals(self):
        svg = render_class_map_svg(sample_classmap())
        for coord in re.findall(r'c[xy]="([^"]+)"', svg):
            assert re.fullmatch(r"-?\d+\.\d{4}", coord), coord


class TestSilhouetteSvg:
    def test_unit_golden_byte_identical(self, golden_dir):
        svg = render_silhouette_svg(build_silhouette(unit_silhouette_scores()))
        golden = (golden_dir / "silhouette_unit.svg").read_text(encoding="utf-8")
        assert svg == golden

    def test_annotations_match_summary(self):
        sc = unit_silhouette_scores()
        summary = silhouette_summary(sc.s, sc.given, sc.catalog)
        svg = render_silhouette_svg(build_silhouette(sc))
        for name, mean in summary.class_means.items():
            count = summary.class_counts[name]
            assert f"avg {mean:.2f} (n={count})" in svg
        assert f"overall average silhouette width: {summary.overall:.2f}" in svg

    def test_bar_count_matches_cases(self):
        sc = unit_silhouette_scores()
        svg = render_silhouette_svg(build_silhouette(sc))
        # non-bar rects: canvas + plot area + frame; every case adds one bar
        assert svg.count("<rect") == 12 + 3

    def test_empty_data_rejected(self):
        empty = SilhouettePlotData(classes=(), overall=0.0, n=0, class_names=("A", "B"))
        with pytest.raises(ValidationError):
            render_silhouette_svg(empty)

    def test_palette_shorter_than_classes_rejected(self):
        data = build_silhouette(unit_silhouette_scores())
        cfg = RenderConfig(palette=("#111111",), margin_left=170)
        with pytest.raises(ValidationError, match="palette"):
            render_silhouette_svg(data, cfg)


class TestQuasiResidualSvg:
    def test_shading_covers_bottom_half(self):
        data = sample_qresid()
        cfg = default_config("qresid")
        svg = render_quasi_residual_svg(data, cfg)
        y_mid = cfg.plot_bottom - 0.5 * (cfg.plot_bottom - cfg.plot_top)
        expected = (
            f'<rect x="{cfg.plot_left:.4f}" y="{y_mid:.4f}" '
            f'width="{cfg.plot_right - cfg.plot_left:.4f}" '
            f'height="{cfg.plot_bottom - y_mid:.4f}" fill="#ececec"/>'
        )
        assert expected in svg

    def test_mean_curve_through_bin_midpoints(self):
        data = sample_qresid()
        cfg = default_config("qresid")
        svg = render_quasi_residual_svg(data, cfg)
        lo, hi = min(data.points_x), max(data.points_x)

        def sx(v):
            return cfg.plot_left + (v - lo) / (hi - lo) * (cfg.plot_right - cfg.plot_left)

        def sy(v):
            return cfg.plot_bottom - v * (cfg.plot_bottom - cfg.plot_top)

        expected = " ".join(f"{sx(b.mid):.4f},{sy(b.mean):.4f}" for b in data.bins)
        assert f'<polyline points="{expected}" fill="none" stroke="#d62728"' in svg

    def test_quantile_mode_draws_median_and_p75(self):
        rng = np.random.default_rng(56)
        data = build_quasi_residual(rng.uniform(0, 1, 40), rng.normal(0, 1, 40),
                                    mode="quantile")
        svg = render_quasi_residual_svg(data)
        assert 'stroke="#d62728"' in svg     # median trend
        assert 'stroke="#ff7f0e"' in svg     # 75th percentile trend
        assert 'stroke="#1f77b4"' not in svg  # no SE band in quantile mode

    def test_loess_curve_present_when_supplied(self):
        svg = render_quasi_residual_svg(sample_qresid(loess=True))
        assert 'stroke="#b22222"' in svg

    def test_categorical_ticks(self):
        data = build_quasi_residual([0.2, 0.8, 0.5], ["x", "y", "x"])
        svg = render_quasi_residual_svg(data)
        assert ">x</text>" in svg and ">y</text>" in svg


class TestClassMapSvg:
    def test_cutoff_line_at_expected_position(self):
        data = sample_classmap()
        cfg = default_config("classmap")
        svg = render_class_map_svg(data, cfg)
        x = cfg.plot_left + data.cutoff_x / 4.0 * (cfg.plot_right - cfg.plot_left)
        assert f'<line x1="{x:.4f}"' in svg
        assert 'stroke-dasharray="5 4"' in svg

    def test_probability_tick_labels(self):
        svg = render_class_map_svg(sample_classmap())
        for label in ("0.5", "0.75", "0.9", "0.99", "0.999"):
            assert f">{label}</text>" in svg

    def test_outlier_border_iff_flagged(self):
        data = sample_classmap()
        svg = render_class_map_svg(data)
        bordered = re.findall(r'<circle[^/]*stroke="#000000"', svg)
        assert len(bordered) == sum(data.outlier)

    def test_points_colored_by_predicted_class(self):
        data = sample_classmap()
        cfg = default_config("classmap")
        svg = render_class_map_svg(data, cfg)
        for pred in data.predicted:
            assert f'fill="{cfg.palette[pred]}"' in svg
