"""Cube piles of discrete copulas and their rendering as lozenge tilings."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .copula import CopulaCheck, DiscreteCopula

EDGE_PX = 10.0
SHADES = {"top": "#e8e8e8", "left": "#9a9a9a", "right": "#555555"}


@dataclass(frozen=True, eq=False)
class CubePile:
    """Stack of ``h[a, b]`` unit cubes over cell ``(a, b)``, ``0 <= a, b <= n``; ``h`` is the copula matrix."""

    n: int
    h: np.ndarray

    def __eq__(self, other):
        return isinstance(other, CubePile) and self.n == other.n and np.array_equal(self.h, other.h)

    def __hash__(self):
        return hash((self.n, self.h.tobytes()))


def pile_from_copula(c: DiscreteCopula) -> CubePile:
    h = np.array(c.values, dtype=np.int64)
    h.setflags(write=False)
    return CubePile(c.n, h)


def copula_from_pile(p: CubePile) -> DiscreteCopula:
    return DiscreteCopula.from_matrix(p.h)


def validate_pile(p: CubePile) -> CopulaCheck:
    """Whether the pile is the image of a discrete copula; the first violated rule and its site otherwise."""
    h = np.asarray(p.h)
    n = p.n
    if h.shape != (n + 1, n + 1):
        return CopulaCheck(False, f"height table has shape {h.shape}, expected {(n + 1, n + 1)}")
    if h.dtype.kind not in "iu":
        if not np.array_equal(h, np.round(h)):
            a, b = (int(x) for x in np.argwhere(h != np.round(h))[0])
            return CopulaCheck(False, f"height at ({a},{b}) is not an integer", (a, b))
        h = np.round(h).astype(np.int64)
    for axis, label in ((0, "rows"), (1, "columns")):
        steps = np.diff(h, axis=axis)
        bad = np.argwhere(steps < 0)
        if len(bad):
            a, b = (int(x) for x in bad[0])
            return CopulaCheck(False, f"heights decrease along {label} at ({a},{b})", (a, b))
    if (h[0] != 0).any() or (h[:, 0] != 0).any():
        k = int(np.flatnonzero((h[0] != 0) | (h[:, 0] != 0))[0])
        return CopulaCheck(False, f"nonzero height on the zero boundary at index {k}", (0, k))
    mass = h[1:, 1:] - h[:-1, 1:] - h[1:, :-1] + h[:-1, :-1]
    bad = np.argwhere((mass < 0) | (mass > 1))
    if len(bad):
        a, b = (int(x) + 1 for x in bad[0])
        return CopulaCheck(False, f"cell ({a},{b}) has mass {mass[a - 1, b - 1]}, expected 0 or 1", (a, b))
    edge = np.arange(n + 1)
    for name, line in (("last column", h[:, n]), ("last row", h[n, :])):
        bad = np.flatnonzero(line != edge)
        if len(bad):
            k = int(bad[0])
            return CopulaCheck(False, f"{name} is not the unit staircase at index {k}", (k,))
    return CopulaCheck(True)


def _project(x, y, z):
    s = EDGE_PX * math.cos(math.pi / 6)
    return (x - y) * s, (x + y) * EDGE_PX / 2 - z * EDGE_PX


def lozenges(p: CubePile) -> list[tuple[str, tuple[tuple[float, float], ...]]]:
    """Faces of the tiling of the ``n x n x n`` box, as ``(kind, corners)`` in screen coordinates.

    The copula corner ``(n, n)`` (the tallest stack) sits at the back corner of the box:
    cell ``(a, b)`` is drawn at box position ``(n - a, n - b)``, so heights decrease
    towards the viewer and every face of the surface is visible.
    """
    n = p.n
    # stack heights over the n x n cells, viewer-facing orientation
    H = np.asarray(p.h, dtype=np.int64)[n:0:-1, n:0:-1]
    faces = []
    for i in range(n):
        for j in range(n):
            z = int(H[i, j])
            faces.append(("top", (_project(i, j, z), _project(i + 1, j, z), _project(i + 1, j + 1, z), _project(i, j + 1, z))))
    for j in range(n):
        for z in range(n):
            x = int((H[:, j] > z).sum())
            faces.append(("left", (_project(x, j, z), _project(x, j + 1, z), _project(x, j + 1, z + 1), _project(x, j, z + 1))))
    for i in range(n):
        for z in range(n):
            y = int((H[i, :] > z).sum())
            faces.append(("right", (_project(i, y, z), _project(i + 1, y, z), _project(i + 1, y, z + 1), _project(i, y, z + 1))))
    return faces


def _fmt(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def tiling_svg(p: CubePile) -> str:
    """Isometric SVG of the pile: a lozenge tiling of a hexagon of side ``n`` in three shades."""
    faces = lozenges(p)
    xs = [x for _, pts in faces for x, _ in pts]
    ys = [y for _, pts in faces for _, y in pts]
    pad = EDGE_PX
    x0, y0 = min(xs) - pad, min(ys) - pad
    w, h = max(xs) - min(xs) + 2 * pad, max(ys) - min(ys) + 2 * pad
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{_fmt(x0)} {_fmt(y0)} {_fmt(w)} {_fmt(h)}" '
        f'width="{_fmt(w)}" height="{_fmt(h)}">',
        '<g stroke="#000000" stroke-width="0.5" stroke-linejoin="round">',
    ]
    for kind, pts in faces:
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
        lines.append(f'<polygon class="{kind}" fill="{SHADES[kind]}" points="{coords}"/>')
    lines += ["</g>", "</svg>", ""]
    return "\n".join(lines)
