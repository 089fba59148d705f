"""Minimal SVG scene plots: boxes, polylines and zero-level curves."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

GRID = 200


def marching_squares(values: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> list[tuple]:
    """Line segments of the zero contour of ``values[j, i]`` sampled at ``(xs[i], ys[j])``.

    Saddle cells are resolved by the cell-center average.
    """
    segs = []
    v = values
    ny, nx = v.shape

    def cross(p, q, vp, vq):
        t = vp / (vp - vq)
        return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))

    for j in range(ny - 1):
        for i in range(nx - 1):
            c = [
                ((xs[i], ys[j]), v[j, i]),
                ((xs[i + 1], ys[j]), v[j, i + 1]),
                ((xs[i + 1], ys[j + 1]), v[j + 1, i + 1]),
                ((xs[i], ys[j + 1]), v[j + 1, i]),
            ]
            signs = [val > 0 for _, val in c]
            if all(signs) or not any(signs):
                continue
            pts = []
            for k in range(4):
                (p, vp), (q, vq) = c[k], c[(k + 1) % 4]
                if (vp > 0) != (vq > 0):
                    pts.append(cross(p, q, vp, vq))
            if len(pts) == 2:
                segs.append((pts[0], pts[1]))
            elif len(pts) == 4:
                center = sum(val for _, val in c) / 4.0
                # edges in order: bottom, right, top, left
                if (center > 0) == signs[0]:
                    segs.append((pts[0], pts[1]))
                    segs.append((pts[2], pts[3]))
                else:
                    segs.append((pts[0], pts[3]))
                    segs.append((pts[1], pts[2]))
    return segs


def zero_level_segments(
    fn: Callable[[np.ndarray], np.ndarray], lower, upper, grid: int = GRID
) -> list[tuple]:
    xs = np.linspace(lower[0], upper[0], grid)
    ys = np.linspace(lower[1], upper[1], grid)
    X, Y = np.meshgrid(xs, ys)
    vals = fn(np.stack([X.ravel(), Y.ravel()], axis=1)).reshape(X.shape)
    return marching_squares(vals, xs, ys)


@dataclass
class Canvas:
    """World-coordinate canvas; y points up in the output."""

    lower: Sequence[float]
    upper: Sequence[float]
    width: int = 600
    items: list = field(default_factory=list)

    @property
    def height(self) -> int:
        span = (self.upper[1] - self.lower[1]) / (self.upper[0] - self.lower[0])
        return max(1, int(round(self.width * span)))

    def _xy(self, x: float, y: float) -> tuple[float, float]:
        sx = (x - self.lower[0]) / (self.upper[0] - self.lower[0]) * self.width
        sy = (self.upper[1] - y) / (self.upper[1] - self.lower[1]) * self.height
        return sx, sy

    def rect(self, lower, upper, fill: str, stroke: str = "none", opacity: float = 1.0) -> None:
        x0, y1 = self._xy(lower[0], lower[1])
        x1, y0 = self._xy(upper[0], upper[1])
        self.items.append(
            f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{x1 - x0:.2f}" height="{y1 - y0:.2f}" '
            f'fill="{fill}" stroke="{stroke}" fill-opacity="{opacity}"/>'
        )

    def polyline(self, points: np.ndarray, stroke: str, width: float = 2.0, dash: str = "") -> None:
        if len(points) == 0:
            return
        coords = " ".join("{:.2f},{:.2f}".format(*self._xy(x, y)) for x, y in points)
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(
            f'<polyline points="{coords}" fill="none" stroke="{stroke}" stroke-width="{width}"{extra}/>'
        )

    def segments(self, segs: list[tuple], stroke: str = "black", width: float = 1.0) -> None:
        if not segs:
            return
        path = " ".join(
            "M{:.2f},{:.2f}L{:.2f},{:.2f}".format(*self._xy(*a), *self._xy(*b)) for a, b in segs
        )
        self.items.append(f'<path d="{path}" stroke="{stroke}" stroke-width="{width}" fill="none"/>')

    def text(self, x: float, y: float, label: str, size: int = 12, color: str = "black") -> None:
        sx, sy = self._xy(x, y)
        self.items.append(
            f'<text x="{sx:.2f}" y="{sy:.2f}" font-size="{size}" fill="{color}">{label}</text>'
        )

    def render(self) -> str:
        head = (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}">'
        )
        body = "\n".join(self.items)
        return f'{head}\n<rect width="100%" height="100%" fill="white"/>\n{body}\n</svg>\n'
