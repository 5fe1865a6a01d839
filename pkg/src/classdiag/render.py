"""Deterministic SVG rendering of the three diagnostic displays.

Output is plain SVG 1.1 text with no external references, no timestamps,
and all coordinates formatted to exactly 4 decimals, so identical inputs
produce byte-identical files on any platform.
"""

from __future__ import annotations

from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .diagnostics import ClassMapData, QuasiResidualData, SilhouettePlotData
from .errors import ValidationError
from .farness import norm_quantile

# Fixed 10-color palette (point colors index it by class position).
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)

CLASSMAP_TICK_PROBS = (0.5, 0.75, 0.9, 0.99, 0.999)
SHADE_COLOR = "#ececec"
PROBIT_MAX = 4.0


@dataclass(frozen=True)
class RenderConfig:
    width: int = 720
    height: int = 480
    margin_top: int = 48
    margin_right: int = 24
    margin_bottom: int = 52
    margin_left: int = 64
    font_size: int = 12
    palette: tuple[str, ...] = PALETTE
    title: str = ""
    x_label: str = ""
    y_label: str = ""

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("render dimensions must be positive")

    @property
    def plot_left(self) -> float:
        return float(self.margin_left)

    @property
    def plot_right(self) -> float:
        return float(self.width - self.margin_right)

    @property
    def plot_top(self) -> float:
        return float(self.margin_top)

    @property
    def plot_bottom(self) -> float:
        return float(self.height - self.margin_bottom)


def default_config(kind: str, title: str = "", x_label: str = "", y_label: str = "") -> RenderConfig:
    """Per-display default geometry; the silhouette plot needs a wide
    left gutter for class annotations."""
    if kind == "silhouette":
        return RenderConfig(margin_left=170, title=title,
                            x_label=x_label or "s(i)", y_label=y_label)
    if kind == "qresid":
        return RenderConfig(title=title, x_label=x_label, y_label=y_label or "PAC")
    if kind == "classmap":
        return RenderConfig(title=title, x_label=x_label or "farness to class",
                            y_label=y_label or "PAC")
    raise ValidationError(f"unknown plot kind {kind!r}")


def _fmt(v: float) -> str:
    return f"{float(v):.4f}"


def _esc(s: str) -> str:
    return escape(str(s), {'"': "&quot;"})


def _text(x, y, s, size, anchor="start", fill="#000000", bold=False) -> str:
    weight = ' font-weight="bold"' if bold else ""
    return (
        f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" '
        f'font-family="sans-serif" text-anchor="{anchor}" fill="{fill}"{weight}>'
        f"{_esc(s)}</text>"
    )


def _line(x1, y1, x2, y2, stroke="#000000", width=1.0, dash=None) -> str:
    d = f' stroke-dasharray="{dash}"' if dash else ""
    return (
        f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
        f'stroke="{stroke}" stroke-width="{_fmt(width)}"{d}/>'
    )


def _rect(x, y, w, h, fill, stroke=None) -> str:
    s = f' stroke="{stroke}"' if stroke else ""
    return (
        f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" height="{_fmt(h)}" '
        f'fill="{fill}"{s}/>'
    )


def _circle(cx, cy, r, fill, stroke=None, stroke_width=1.0, opacity=None) -> str:
    s = f' stroke="{stroke}" stroke-width="{_fmt(stroke_width)}"' if stroke else ""
    o = f' fill-opacity="{_fmt(opacity)}"' if opacity is not None else ""
    return f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="{_fmt(r)}" fill="{fill}"{s}{o}/>'


def _polyline(points, stroke, width=1.5, dash=None) -> str:
    pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in points)
    d = f' stroke-dasharray="{dash}"' if dash else ""
    return f'<polyline points="{pts}" fill="none" stroke="{stroke}" stroke-width="{_fmt(width)}"{d}/>'


def _document(cfg: RenderConfig, body: list[str]) -> str:
    head = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{cfg.width}" '
        f'height="{cfg.height}" viewBox="0 0 {cfg.width} {cfg.height}">',
        _rect(0, 0, cfg.width, cfg.height, "#ffffff"),
    ]
    if cfg.title:
        head.append(_text(cfg.width / 2.0, cfg.margin_top / 2.0 + cfg.font_size / 2.0,
                          cfg.title, cfg.font_size + 2, anchor="middle", bold=True))
    return "\n".join(head + body + ["</svg>"]) + "\n"


def _frame(cfg: RenderConfig) -> list[str]:
    return [_rect(cfg.plot_left, cfg.plot_top, cfg.plot_right - cfg.plot_left,
                  cfg.plot_bottom - cfg.plot_top, "none", stroke="#000000")]


def _axis_labels(cfg: RenderConfig) -> list[str]:
    out = []
    if cfg.x_label:
        out.append(_text((cfg.plot_left + cfg.plot_right) / 2.0,
                         cfg.height - cfg.font_size / 2.0,
                         cfg.x_label, cfg.font_size, anchor="middle"))
    if cfg.y_label:
        x = cfg.font_size + 2.0
        y = (cfg.plot_top + cfg.plot_bottom) / 2.0
        out.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{cfg.font_size}" '
            f'font-family="sans-serif" text-anchor="middle" fill="#000000" '
            f'transform="rotate(-90 {_fmt(x)} {_fmt(y)})">{_esc(cfg.y_label)}</text>'
        )
    return out


def _check_palette(cfg: RenderConfig, n_classes: int) -> None:
    if len(cfg.palette) < n_classes:
        raise ValidationError(
            f"palette has {len(cfg.palette)} colors for {n_classes} classes"
        )


# ---------------------------------------------------------------------------


def render_silhouette_svg(data: SilhouettePlotData, config: RenderConfig | None = None) -> str:
    """Horizontal silhouette bars grouped by class, sorted within class,
    with per-class averages in the left gutter."""
    if not data.classes:
        raise ValidationError("silhouette plot needs at least one non-empty class")
    cfg = config or default_config("silhouette")
    _check_palette(cfg, len(data.class_names))
    gap = 10.0
    plot_h = cfg.plot_bottom - cfg.plot_top
    bar_h = (plot_h - gap * (len(data.classes) - 1)) / data.n
    if bar_h <= 0:
        raise ValidationError("plot height too small for the number of cases")

    def sx(v: float) -> float:
        return cfg.plot_left + (v + 1.0) / 2.0 * (cfg.plot_right - cfg.plot_left)

    body: list[str] = []
    body.append(_rect(cfg.plot_left, cfg.plot_top, cfg.plot_right - cfg.plot_left,
                      plot_h, "#ffffff"))
    y = cfg.plot_top
    for block in data.classes:
        color = cfg.palette[data.class_names.index(block.name)]
        for s in block.s:
            x0, x1 = sorted((sx(0.0), sx(s)))
            if x1 > x0:
                body.append(_rect(x0, y, x1 - x0, bar_h, color))
            y += bar_h
        mid = y - bar_h * block.count / 2.0
        body.append(_text(cfg.plot_left - 8.0, mid - 2.0, block.name,
                          cfg.font_size, anchor="end", bold=True))
        body.append(_text(cfg.plot_left - 8.0, mid + cfg.font_size,
                          f"avg {block.mean:.2f} (n={block.count})",
                          cfg.font_size - 2, anchor="end", fill="#444444"))
        y += gap
    body.append(_line(sx(0.0), cfg.plot_top, sx(0.0), cfg.plot_bottom, stroke="#888888"))
    for tick in (-1.0, -0.5, 0.0, 0.5, 1.0):
        body.append(_line(sx(tick), cfg.plot_bottom, sx(tick), cfg.plot_bottom + 4.0))
        body.append(_text(sx(tick), cfg.plot_bottom + 4.0 + cfg.font_size, f"{tick:g}",
                          cfg.font_size - 2, anchor="middle"))
    body.append(_text(cfg.plot_left, cfg.plot_bottom + 4.0 + 2.4 * cfg.font_size,
                      f"overall average silhouette width: {data.overall:.2f}",
                      cfg.font_size, anchor="start"))
    body += _frame(cfg) + _axis_labels(cfg)
    return _document(cfg, body)


def render_quasi_residual_svg(data: QuasiResidualData, config: RenderConfig | None = None) -> str:
    """PAC-versus-feature scatter with trend curves; the PAC < 0.5 band
    is shaded light gray."""
    cfg = config or default_config("qresid")
    if data.feature_kind == "categorical":
        lo, hi = -0.5, len(data.categories) - 0.5
    else:
        lo, hi = min(data.points_x), max(data.points_x)
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5

    def sx(v: float) -> float:
        return cfg.plot_left + (v - lo) / (hi - lo) * (cfg.plot_right - cfg.plot_left)

    def sy(v: float) -> float:
        return cfg.plot_bottom - v * (cfg.plot_bottom - cfg.plot_top)

    body: list[str] = []
    body.append(_rect(cfg.plot_left, sy(0.5), cfg.plot_right - cfg.plot_left,
                      cfg.plot_bottom - sy(0.5), SHADE_COLOR))
    for x, p in zip(data.points_x, data.points_pac):
        body.append(_circle(sx(x), sy(p), 2.5, "#404040", opacity=0.55))
    if data.mode == "mean":
        body.append(_polyline([(sx(b.mid), sy(b.mean)) for b in data.bins], "#d62728"))
        body.append(_polyline([(sx(b.mid), sy(b.mean + b.se)) for b in data.bins],
                              "#1f77b4", width=1.0))
        body.append(_polyline([(sx(b.mid), sy(b.mean - b.se)) for b in data.bins],
                              "#1f77b4", width=1.0))
    else:
        body.append(_polyline([(sx(b.mid), sy(b.median)) for b in data.bins], "#d62728"))
        body.append(_polyline([(sx(b.mid), sy(b.p75)) for b in data.bins], "#ff7f0e"))
    if data.loess_x:
        body.append(_polyline([(sx(x), sy(v)) for x, v in zip(data.loess_x, data.loess_y)],
                              "#b22222", width=1.8))
    if data.feature_kind == "categorical":
        for i, cat in enumerate(data.categories):
            body.append(_line(sx(i), cfg.plot_bottom, sx(i), cfg.plot_bottom + 4.0))
            body.append(_text(sx(i), cfg.plot_bottom + 4.0 + cfg.font_size, cat,
                              cfg.font_size - 2, anchor="middle"))
    else:
        for tick in np.linspace(lo, hi, 5):
            body.append(_line(sx(tick), cfg.plot_bottom, sx(tick), cfg.plot_bottom + 4.0))
            body.append(_text(sx(tick), cfg.plot_bottom + 4.0 + cfg.font_size,
                              f"{tick:.4g}", cfg.font_size - 2, anchor="middle"))
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        body.append(_line(cfg.plot_left - 4.0, sy(tick), cfg.plot_left, sy(tick)))
        body.append(_text(cfg.plot_left - 6.0, sy(tick) + cfg.font_size / 3.0,
                          f"{tick:g}", cfg.font_size - 2, anchor="end"))
    body += _frame(cfg) + _axis_labels(cfg)
    return _document(cfg, body)


def render_class_map_svg(data: ClassMapData, config: RenderConfig | None = None) -> str:
    """Class map: probit farness on x (tick labels are farness
    probabilities), PAC on y, points colored by predicted class, black
    borders on farness outliers, dashed cutoff line."""
    cfg = config or default_config("classmap", title=f"class map: {data.class_name}")
    _check_palette(cfg, len(data.class_names))

    def sx(v: float) -> float:
        return cfg.plot_left + v / PROBIT_MAX * (cfg.plot_right - cfg.plot_left)

    def sy(v: float) -> float:
        return cfg.plot_bottom - v * (cfg.plot_bottom - cfg.plot_top)

    body: list[str] = []
    body.append(_rect(cfg.plot_left, sy(0.5), cfg.plot_right - cfg.plot_left,
                      cfg.plot_bottom - sy(0.5), SHADE_COLOR))
    body.append(_line(sx(data.cutoff_x), cfg.plot_top, sx(data.cutoff_x), cfg.plot_bottom,
                      stroke="#555555", width=1.2, dash="5 4"))
    for x, p, pred, out in zip(data.x, data.pac, data.predicted, data.outlier):
        body.append(_circle(sx(x), sy(p), 3.0, cfg.palette[pred],
                            stroke="#000000" if out else None, stroke_width=1.2))
    for prob in CLASSMAP_TICK_PROBS:
        pos = float(np.clip(norm_quantile(prob), 0.0, PROBIT_MAX))
        body.append(_line(sx(pos), cfg.plot_bottom, sx(pos), cfg.plot_bottom + 4.0))
        body.append(_text(sx(pos), cfg.plot_bottom + 4.0 + cfg.font_size, f"{prob:g}",
                          cfg.font_size - 2, anchor="middle"))
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        body.append(_line(cfg.plot_left - 4.0, sy(tick), cfg.plot_left, sy(tick)))
        body.append(_text(cfg.plot_left - 6.0, sy(tick) + cfg.font_size / 3.0,
                          f"{tick:g}", cfg.font_size - 2, anchor="end"))
    # legend: predicted-class colors across the top of the plot area
    lx = cfg.plot_left
    ly = cfg.plot_top - 6.0
    for idx, name in enumerate(data.class_names):
        body.append(_rect(lx, ly - 8.0, 8.0, 8.0, cfg.palette[idx]))
        body.append(_text(lx + 11.0, ly, name, cfg.font_size - 2))
        lx += 14.0 + 7.2 * len(name)
    body += _frame(cfg) + _axis_labels(cfg)
    return _document(cfg, body)
