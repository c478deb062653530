"""Bridged Brownian sheets sampled on rectangular grids of the unit square."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np
from scipy.linalg import null_space

from .blocking import GridSpec
from .rng import as_generator


def grid_nodes(grid) -> tuple[np.ndarray, np.ndarray]:
    """Node coordinates ``(u, v)`` in ``[0, 1]`` for a :class:`GridSpec`, an ``(I, J)`` pair or an integer ``m``."""
    if isinstance(grid, GridSpec):
        u = np.asarray(grid.a, dtype=float) / grid.n
        v = np.asarray(grid.b, dtype=float) / grid.n
    elif isinstance(grid, (int, np.integer)):
        u = v = np.linspace(0.0, 1.0, int(grid) + 1)
    elif len(grid) == 2 and np.ndim(grid[0]) == 0:
        u = np.linspace(0.0, 1.0, int(grid[0]) + 1)
        v = np.linspace(0.0, 1.0, int(grid[1]) + 1)
    else:
        u = np.asarray(grid[0], dtype=float)
        v = np.asarray(grid[1], dtype=float)
    for name, x in (("u", u), ("v", v)):
        if len(x) < 2 or x[0] != 0 or x[-1] != 1:
            raise ValueError(f"{name} nodes must run from 0 to 1")
        if (np.diff(x) <= 0).any():
            raise ValueError(f"{name} nodes must be strictly increasing (repeated nodes make a degenerate grid)")
    return u, v


@lru_cache(maxsize=64)
def _factors(du: tuple, dv: tuple):
    wu = np.sqrt(np.array(du))
    wv = np.sqrt(np.array(dv))
    pu = np.eye(len(du)) - np.outer(wu, wu)
    pv = np.eye(len(dv)) - np.outer(wv, wv)
    bu = null_space(wu[None, :])
    bv = null_space(wv[None, :])
    for arr in (pu, pv, bu, bv):
        arr.setflags(write=False)
    return pu, pv, bu, bv


def _gaps(grid) -> tuple[tuple, tuple]:
    u, v = grid_nodes(grid)
    return tuple(np.diff(u)), tuple(np.diff(v))


def vg_projector(grid) -> tuple[np.ndarray, np.ndarray]:
    """Row and column factors ``(Pu, Pv)`` with ``proj(z) = Pu @ z @ Pv``.

    The constraint subspace is the tensor product of the orthogonal complements of
    ``sqrt(du)`` and ``sqrt(dv)`` (both unit vectors), so its projector factors.
    """
    pu, pv, _, _ = _factors(*_gaps(grid))
    return pu, pv


def vg_basis(grid) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal bases ``Bu`` (I x I-1) and ``Bv`` (J x J-1); ``Bu @ w @ Bv.T`` spans the subspace."""
    _, _, bu, bv = _factors(*_gaps(grid))
    return bu, bv


def project_to_Vg(z, grid) -> np.ndarray:
    """Orthogonal projection onto matrices whose ``sqrt(du)``-weighted column sums and ``sqrt(dv)``-weighted row sums vanish.

    ``z`` has shape ``(..., I, J)`` or is flat with ``I*J`` entries.
    """
    pu, pv = vg_projector(grid)
    z = np.asarray(z, dtype=float)
    flat = z.ndim == 1
    if flat:
        z = z.reshape(pu.shape[0], pv.shape[0])
    out = pu @ z @ pv
    return out.ravel() if flat else out


def sheet_values_from_vg(zt, grid) -> np.ndarray:
    """Node values ``f(u_i, v_j) = sum_{i' <= i, j' <= j} sqrt(du_i' dv_j') zt_i'j'`` with exact zeros on the boundary."""
    u, v = grid_nodes(grid)
    w = np.sqrt(np.outer(np.diff(u), np.diff(v)))
    zt = np.asarray(zt, dtype=float)
    shape = zt.shape[:-2] + (len(u), len(v))
    f = np.zeros(shape)
    f[..., 1:, 1:] = np.cumsum(np.cumsum(w * zt, axis=-2), axis=-1)
    f[..., -1, :] = 0.0
    f[..., :, -1] = 0.0
    return f


def bridge_from_sheet(fstar, u, v) -> np.ndarray:
    """``f = f* - u f*(1, v) - v f*(u, 1) + uv f*(1, 1)`` on a node table that includes ``u = 1`` and ``v = 1``."""
    fstar = np.asarray(fstar, dtype=float)
    u = np.asarray(u, dtype=float)[:, None]
    v = np.asarray(v, dtype=float)[None, :]
    last_row = fstar[..., -1:, :]
    last_col = fstar[..., :, -1:]
    corner = fstar[..., -1:, -1:]
    f = fstar - u * last_row - v * last_col + (u * v) * corner
    f[..., -1, :] = 0.0
    f[..., :, -1] = 0.0
    f[..., 0, :] = 0.0
    f[..., :, 0] = 0.0
    return f


@dataclass(frozen=True, eq=False)
class SheetSample:
    u: np.ndarray
    v: np.ndarray
    z: np.ndarray
    z_tilde: np.ndarray
    f: np.ndarray


def sample_sheet_grid(grid, rng=None) -> SheetSample:
    rng = as_generator(rng)
    u, v = grid_nodes(grid)
    z = rng.standard_normal((len(u) - 1, len(v) - 1))
    zt = project_to_Vg(z, (u, v))
    return SheetSample(u, v, z, zt, sheet_values_from_vg(zt, (u, v)))


def sample_sheet_values(grid, size: int, rng=None, route: str = "projection") -> np.ndarray:
    """``size`` independent node tables of a bridged sheet, shape ``(size, I+1, J+1)``.

    ``route="projection"`` projects i.i.d. normals onto the constraint subspace before
    integrating; ``route="bridge"`` integrates them into a free sheet and bridges it.
    """
    rng = as_generator(rng)
    u, v = grid_nodes(grid)
    z = rng.standard_normal((size, len(u) - 1, len(v) - 1))
    if route == "projection":
        return sheet_values_from_vg(project_to_Vg(z, (u, v)), (u, v))
    if route == "bridge":
        w = np.sqrt(np.outer(np.diff(u), np.diff(v)))
        fstar = np.zeros((size, len(u), len(v)))
        fstar[:, 1:, 1:] = np.cumsum(np.cumsum(w * z, axis=-2), axis=-1)
        return bridge_from_sheet(fstar, u, v)
    raise ValueError(f"unknown route {route!r}")


def sheet_covariance_oracle(u1, v1, u2, v2):
    return (np.minimum(u1, u2) - u1 * u2) * (np.minimum(v1, v2) - v1 * v2)


# -- Hölder probing ---------------------------------------------------------------


def bilinear_at(u_nodes, v_nodes, values, pu, pv) -> np.ndarray:
    """Bilinear interpolation of node ``values`` at the points ``(pu[k], pv[k])``."""
    u_nodes = np.asarray(u_nodes, dtype=float)
    v_nodes = np.asarray(v_nodes, dtype=float)
    pu = np.asarray(pu, dtype=float)
    pv = np.asarray(pv, dtype=float)
    if (pu < 0).any() or (pu > 1).any() or (pv < 0).any() or (pv > 1).any():
        raise ValueError("points must lie in the unit square")
    i = np.clip(np.searchsorted(u_nodes, pu, side="right") - 1, 0, len(u_nodes) - 2)
    j = np.clip(np.searchsorted(v_nodes, pv, side="right") - 1, 0, len(v_nodes) - 2)
    s = (pu - u_nodes[i]) / (u_nodes[i + 1] - u_nodes[i])
    t = (pv - v_nodes[j]) / (v_nodes[j + 1] - v_nodes[j])
    F = np.asarray(values, dtype=float)
    return (
        (1 - s) * (1 - t) * F[i, j] + s * (1 - t) * F[i + 1, j]
        + (1 - s) * t * F[i, j + 1] + s * t * F[i + 1, j + 1]
    )


class HolderProbe(NamedTuple):
    ok: bool
    worst_excess: float
    pairs_checked: int


def holder_probe(
    field,
    r: float,
    delta: float,
    C: float,
    lattice: int = 64,
    random_pairs: int = 10_000,
    rng=None,
) -> HolderProbe:
    """Probe ``|f(p) - f(q)| < C (|du| + |dv|)^(1/2 - delta)`` over pairs with ``|du|, |dv| < r``.

    ``field`` is a vectorized callable ``f(u, v)`` or a node table ``(u_nodes, v_nodes, values)``.
    Probes every pair of a lattice (the table's own nodes, or a uniform ``lattice`` x ``lattice``
    mesh for callables) plus ``random_pairs`` uniformly placed pairs.  ``worst_excess`` is the
    largest ``|f(p) - f(q)| - C d^(1/2 - delta)`` seen.
    """
    rng = as_generator(rng)
    if callable(field):
        f: Callable = field
        un = vn = np.linspace(0.0, 1.0, lattice + 1)
        U, V = np.meshgrid(un, vn, indexing="ij")
        F = np.asarray(f(U, V), dtype=float)
    else:
        un, vn, F = (np.asarray(x, dtype=float) for x in field)

        def f(pu, pv):
            return bilinear_at(un, vn, F, pu, pv)

    expo = 0.5 - delta
    worst = -np.inf
    checked = 0
    I, J = len(un), len(vn)
    for di in range(I):
        du = un[di:] - un[: I - di]
        if du.min() >= r:
            break
        for dj in range(-(J - 1), J):
            if di == 0 and dj <= 0:
                continue
            if dj >= 0:
                dv = vn[dj:] - vn[: J - dj]
                a = F[di:, dj:]
                b = F[: I - di, : J - dj]
            else:
                dv = vn[: J + dj] - vn[-dj:]
                a = F[di:, : J + dj]
                b = F[: I - di, -dj:]
            if np.abs(dv).min() >= r:
                continue
            mask = (du[:, None] < r) & (np.abs(dv)[None, :] < r)
            if not mask.any():
                continue
            bound = C * (du[:, None] + np.abs(dv)[None, :]) ** expo
            excess = (np.abs(a - b) - bound)[mask]
            checked += excess.size
            worst = max(worst, float(excess.max()))
    if random_pairs:
        p = rng.random((random_pairs, 2))
        q = np.clip(p + rng.uniform(-r, r, size=(random_pairs, 2)), 0.0, 1.0)
        d = np.abs(p - q)
        keep = (d[:, 0] < r) & (d[:, 1] < r) & (d.sum(axis=1) > 0)
        p, q, d = p[keep], q[keep], d[keep]
        diff = np.abs(np.asarray(f(p[:, 0], p[:, 1])) - np.asarray(f(q[:, 0], q[:, 1])))
        excess = diff - C * d.sum(axis=1) ** expo
        checked += excess.size
        if excess.size:
            worst = max(worst, float(excess.max()))
    return HolderProbe(bool(worst < 0), worst, checked)


def holder_check_function(field, r: float, delta: float, C: float, **kwargs) -> bool:
    return holder_probe(field, r, delta, C, **kwargs).ok
