"""Minimal SVG writer for curves, scatter plots and line plots.

Coordinates are formatted with a fixed number of decimals so re-runs produce
identical files. y is flipped on output so plots read with y up.
"""
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray

PREAMBLE = """\
<?xml version="1.0" standalone="no"?>
<svg width="%(width).2f" height="%(height).2f" viewBox="%(min_x).4f %(min_y).4f %(width).4f %(height).4f" version="1.1" xmlns="http://www.w3.org/2000/svg">
<rect x="%(min_x).4f" y="%(min_y).4f" width="%(width).4f" height="%(height).4f" style="fill:#ffffff"/>
"""

POSTAMBLE = """\
</svg>
"""

BLUE = "#1f4e9c"
RED = "#c0392b"
GREY = "#888888"
BLACK = "#000000"
CLUSTER_COLORS = ("#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad", "#d35400", "#16a085")

CELL = 100.0  # width of one curve panel
FONT_HEIGHT = 8.0


def _pt(x: float, y: float) -> str:
    return "%.4f,%.4f" % (x, -y)


class SvgCanvas:
    def __init__(self):
        self.min_x = None
        self.max_x = None
        self.min_y = None
        self.max_y = None
        self.commands: list[str] = []

    def require(self, x: float, y: float):
        y = -y
        if self.min_x is None:
            self.min_x = self.max_x = x
            self.min_y = self.max_y = y
        else:
            self.min_x = min(self.min_x, x)
            self.max_x = max(self.max_x, x)
            self.min_y = min(self.min_y, y)
            self.max_y = max(self.max_y, y)

    def line(self, points: Sequence[Sequence[float]], color: str = BLACK, width: float = 1.0, dashed: bool = False):
        for x, y in points:
            self.require(x, y)
        dash = ";stroke-dasharray:4,3" if dashed else ""
        self.commands.append(
            '<polyline points="%s" style="fill:none;stroke:%s;stroke-width:%.2f%s"/>'
            % (" ".join(_pt(x, y) for x, y in points), color, width, dash)
        )

    def polygon(self, points: Sequence[Sequence[float]], color: str = BLACK, width: float = 1.0):
        for x, y in points:
            self.require(x, y)
        self.commands.append(
            '<polygon points="%s" style="fill:none;stroke:%s;stroke-width:%.2f"/>'
            % (" ".join(_pt(x, y) for x, y in points), color, width)
        )

    def circle(self, x: float, y: float, radius: float, color: str = BLACK):
        self.require(x - radius, y - radius)
        self.require(x + radius, y + radius)
        self.commands.append('<circle cx="%.4f" cy="%.4f" r="%.4f" style="fill:%s;stroke:none"/>' % (x, -y, radius, color))

    def text(self, x: float, y: float, text: str, color: str = "#444444", size: float = FONT_HEIGHT):
        self.require(x, y)
        self.require(x + len(text) * size * 0.6, y + size)
        escaped = text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        self.commands.append(
            '<text x="%.4f" y="%.4f" fill="%s" font-size="%.1f" font-family="monospace">%s</text>' % (x, -y, color, size, escaped)
        )

    def to_string(self) -> str:
        if self.min_x is None:
            self.require(0.0, 0.0)
        pad = max(self.max_x - self.min_x, self.max_y - self.min_y, 1.0) * 0.05
        min_x, min_y = self.min_x - pad, self.min_y - pad
        width = self.max_x - self.min_x + 2 * pad
        height = self.max_y - self.min_y + 2 * pad
        return PREAMBLE % locals() + "".join(item + "\n" for item in self.commands) + POSTAMBLE

    def save(self, filename: Path):
        Path(filename).write_text(self.to_string(), encoding="utf-8")


def _fit_to_cell(points: NDArray, x0: float, y0: float, size: float = CELL * 0.8) -> NDArray:
    """Centers a curve at (x0, y0) and scales its largest extent to size."""
    center = (points.max(axis=0) + points.min(axis=0)) / 2.0
    extent = float(np.max(points.max(axis=0) - points.min(axis=0))) or 1.0
    return (points - center) * (size / extent) + np.array([x0, y0])


def _closed(points: NDArray) -> list[tuple[float, float]]:
    return [(float(x), float(y)) for x, y in points]


def curve_rows(rows: Sequence[tuple[str, Sequence[NDArray]]], captions: Optional[Sequence[str]] = None,
               highlight: Optional[int] = None) -> SvgCanvas:
    """One row of closed curves per entry; curve j of a row sits in column j."""
    canvas = SvgCanvas()
    for r, (label, curves) in enumerate(rows):
        y0 = -r * CELL * 1.2
        canvas.text(0.0, y0 + CELL * 0.5, label)
        for j, points in enumerate(curves):
            color = RED if highlight is not None and j == highlight else BLUE
            canvas.polygon(_closed(_fit_to_cell(np.asarray(points), (j + 0.5) * CELL, y0)), color=color)
            if captions is not None and r == len(rows) - 1:
                canvas.text(j * CELL + CELL * 0.2, y0 - CELL * 0.55, captions[j])
    return canvas


def overlays(pairs: Sequence[tuple[str, NDArray, NDArray]]) -> SvgCanvas:
    """Each panel draws a true curve in blue and its reconstruction in red, on a shared scale."""
    canvas = SvgCanvas()
    for j, (label, truth, rebuilt) in enumerate(pairs):
        both = np.vstack([truth, rebuilt])
        center = (both.max(axis=0) + both.min(axis=0)) / 2.0
        extent = float(np.max(both.max(axis=0) - both.min(axis=0))) or 1.0
        origin = np.array([(j + 0.5) * CELL, 0.0])
        for points, color in ((truth, BLUE), (rebuilt, RED)):
            canvas.polygon(_closed((points - center) * (CELL * 0.8 / extent) + origin), color=color)
        canvas.text(j * CELL + CELL * 0.1, -CELL * 0.55, label)
    return canvas


def deformation_curve(points: NDArray, magnitude: NDArray, label: str = "") -> SvgCanvas:
    """Closed curve whose segments are shaded from blue (small) to red (large) by magnitude."""
    canvas = SvgCanvas()
    fitted = _fit_to_cell(np.asarray(points), CELL * 0.5, 0.0)
    top = float(magnitude.max()) or 1.0
    n = len(fitted)
    for i in range(n):
        w = float(magnitude[i]) / top
        color = "#%02x%02x%02x" % (int(31 + w * (192 - 31)), int(78 + w * (57 - 78)), int(156 + w * (43 - 156)))
        a, b = fitted[i], fitted[(i + 1) % n]
        canvas.line([(a[0], a[1]), (b[0], b[1])], color=color, width=2.0)
    if label:
        canvas.text(CELL * 0.1, -CELL * 0.55, label)
    return canvas


def scatter(points: NDArray, labels: Sequence[int], ids: Sequence[str] = ()) -> SvgCanvas:
    """2D scatter (first two columns), colored by cluster label."""
    canvas = SvgCanvas()
    pts = np.asarray(points, dtype=float)
    if pts.shape[1] == 1:
        pts = np.hstack([pts, np.zeros((len(pts), 1))])
    extent = float(np.max(pts.max(axis=0) - pts.min(axis=0))) or 1.0
    scaled = (pts[:, :2] - pts[:, :2].min(axis=0)) * (3 * CELL / extent)
    canvas.line([(0.0, 0.0), (3 * CELL, 0.0)], color=GREY, width=0.5)
    canvas.line([(0.0, 0.0), (0.0, 3 * CELL)], color=GREY, width=0.5)
    for i, (x, y) in enumerate(scaled):
        color = CLUSTER_COLORS[(labels[i] - 1) % len(CLUSTER_COLORS)]
        canvas.circle(float(x), float(y), 3.0, color=color)
        if ids:
            canvas.text(float(x) + 4.0, float(y), ids[i], size=FONT_HEIGHT * 0.75)
    return canvas


def enrichment_plot(names: Sequence[str], probabilities: Sequence[float],
                    rules: Sequence[float] = (0.25, 0.75)) -> SvgCanvas:
    """Probabilities per covariate joined by a line, with horizontal rules at the cutoffs."""
    canvas = SvgCanvas()
    width = max(len(names) - 1, 1) * CELL * 0.5
    height = 2 * CELL
    canvas.line([(0.0, 0.0), (width, 0.0)], color=GREY, width=0.5)
    canvas.line([(0.0, 0.0), (0.0, height)], color=GREY, width=0.5)
    for rule in rules:
        canvas.line([(0.0, rule * height), (width, rule * height)], color=RED, width=1.0, dashed=True)
        canvas.text(-CELL * 0.3, rule * height, "%.2f" % rule, size=FONT_HEIGHT * 0.75)
    step = width / max(len(names) - 1, 1)
    points = [(i * step, float(p) * height) for i, p in enumerate(probabilities)]
    if points:
        canvas.line(points, color=BLUE, width=1.5)
    for (x, y), name in zip(points, names):
        canvas.circle(x, y, 2.5, color=BLUE)
        canvas.text(x, -FONT_HEIGHT * 2, name, size=FONT_HEIGHT * 0.75)
    return canvas
