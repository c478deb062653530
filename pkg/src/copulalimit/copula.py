"""Permutations, discrete and Birkhoff copulas, residual fields and their bilinear extension.

Conventions: a permutation of size ``n`` is stored as its 1-based value sequence
``sigma``; row ``i`` of the permutation matrix carries its single 1 in column
``sigma[i-1]``.  Copula matrices are indexed ``0..n`` in both directions, with

    C[a, b] = #{i <= a : sigma(i) <= b}.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np


class InvalidCopulaError(ValueError):
    """Raised when a matrix fails one of the copula axioms."""


class NotDoublyStochasticError(ValueError):
    pass


@dataclass(frozen=True)
class Permutation:
    sigma: tuple[int, ...]

    def __post_init__(self):
        sigma = tuple(int(s) for s in self.sigma)
        n = len(sigma)
        if n < 1:
            raise ValueError("a permutation needs n >= 1")
        if sorted(sigma) != list(range(1, n + 1)):
            raise ValueError(f"sigma is not a bijection of 1..{n}: {sigma}")
        object.__setattr__(self, "sigma", sigma)

    @property
    def n(self) -> int:
        return len(self.sigma)

    @classmethod
    def from_zero_based(cls, sigma0) -> "Permutation":
        return cls(tuple(int(s) + 1 for s in sigma0))

    def zero_based(self) -> np.ndarray:
        return np.asarray(self.sigma, dtype=np.int64) - 1

    def matrix(self) -> np.ndarray:
        m = np.zeros((self.n, self.n), dtype=np.int64)
        m[np.arange(self.n), self.zero_based()] = 1
        return m

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "sigma": list(self.sigma)})

    @classmethod
    def from_json(cls, text: str) -> "Permutation":
        record = json.loads(text)
        p = cls(tuple(record["sigma"]))
        if p.n != record["n"]:
            raise ValueError(f"n={record['n']} does not match len(sigma)={p.n}")
        return p


class CopulaCheck(NamedTuple):
    ok: bool
    violation: str | None = None
    where: tuple[int, ...] | None = None


def _integrate(m: np.ndarray) -> np.ndarray:
    n = m.shape[0]
    c = np.zeros((n + 1, n + 1), dtype=m.dtype)
    c[1:, 1:] = m.cumsum(axis=0).cumsum(axis=1)
    return c


def _cell_masses(c: np.ndarray) -> np.ndarray:
    return c[1:, 1:] - c[:-1, 1:] - c[1:, :-1] + c[:-1, :-1]


def _check_axioms(c: np.ndarray, tol=0) -> CopulaCheck:
    n = c.shape[0] - 1
    for a in range(n + 1):
        if abs(c[a, 0]) > tol:
            return CopulaCheck(False, f"condition (i): C[{a},0] = {c[a, 0]}, expected 0", (a, 0))
        if abs(c[0, a]) > tol:
            return CopulaCheck(False, f"condition (i): C[0,{a}] = {c[0, a]}, expected 0", (0, a))
    for a in range(n + 1):
        if abs(c[a, n] - a) > tol:
            return CopulaCheck(False, f"condition (ii): C[{a},{n}] = {c[a, n]}, expected {a}", (a, n))
        if abs(c[n, a] - a) > tol:
            return CopulaCheck(False, f"condition (ii): C[{n},{a}] = {c[n, a]}, expected {a}", (n, a))
    bad = np.argwhere(_cell_masses(c) < -tol)
    if len(bad):
        a, b = (int(x) + 1 for x in bad[0])
        return CopulaCheck(
            False,
            f"condition (iii): not 2-increasing on a={a - 1}..{a}, b={b - 1}..{b}",
            (a - 1, a, b - 1, b),
        )
    return CopulaCheck(True)


def is_discrete_copula(matrix) -> CopulaCheck:
    """Check conditions (i)-(iii) with integer entries; report the first violation.

    Checking the local 2x2 increments is enough for (iii): any rectangle
    increment is a sum of them.
    """
    c = np.asarray(matrix)
    if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 2:
        return CopulaCheck(False, f"shape {c.shape} is not square with side >= 2")
    if c.dtype.kind not in "iu":
        as_float = np.asarray(c, dtype=float)
        frac = np.argwhere(as_float != np.round(as_float))
        if len(frac):
            a, b = (int(x) for x in frac[0])
            return CopulaCheck(False, f"entry C[{a},{b}] = {c[a, b]} is not an integer", (a, b))
        c = np.round(as_float).astype(np.int64)
    return _check_axioms(c)


class DiscreteCopula:
    """A discrete copula, always backed by its permutation.

    The full ``(n+1) x (n+1)`` matrix is materialized on first access to
    :attr:`values`; for large ``n`` use :meth:`on_grid` instead.
    """

    __slots__ = ("sigma0", "_values")

    def __init__(self, sigma0, values: np.ndarray | None = None):
        self.sigma0 = np.asarray(sigma0, dtype=np.int64)
        self._values = values

    @property
    def n(self) -> int:
        return int(self.sigma0.shape[0])

    @classmethod
    def from_matrix(cls, matrix) -> "DiscreteCopula":
        check = is_discrete_copula(matrix)
        if not check.ok:
            raise InvalidCopulaError(check.violation)
        c = np.asarray(np.round(np.asarray(matrix, dtype=float)), dtype=np.int64)
        masses = _cell_masses(c)
        return cls(np.argmax(masses, axis=1), c)

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            self._values = _integrate(self.permutation.matrix())
        return self._values

    @property
    def permutation(self) -> Permutation:
        return Permutation.from_zero_based(self.sigma0)

    def on_grid(self, rows, cols) -> np.ndarray:
        """``C[rows[k], cols[l]]`` for increasing node lists, without building the full matrix."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        # bucket k holds the rows r (1-based) with rows[k-1] < r <= rows[k]
        rb = np.searchsorted(rows, np.arange(1, self.n + 1), side="left")
        cb = np.searchsorted(cols, self.sigma0 + 1, side="left")
        keep = (rb < len(rows)) & (cb < len(cols))
        counts = np.zeros((len(rows), len(cols)), dtype=np.int64)
        np.add.at(counts, (rb[keep], cb[keep]), 1)
        return counts.cumsum(axis=0).cumsum(axis=1)

    def __eq__(self, other):
        if not isinstance(other, DiscreteCopula):
            return NotImplemented
        return np.array_equal(self.sigma0, other.sigma0)

    def __hash__(self):
        return hash(tuple(self.sigma0.tolist()))

    def __repr__(self):
        return f"DiscreteCopula(n={self.n})"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([self.n])
        writer.writerows(self.values.tolist())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DiscreteCopula":
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        n = int(rows[0][0])
        matrix = np.array([[int(x) for x in r] for r in rows[1:]], dtype=np.int64)
        if matrix.shape != (n + 1, n + 1):
            raise InvalidCopulaError(f"expected {n + 1}x{n + 1} values after header n={n}, got {matrix.shape}")
        return cls.from_matrix(matrix)


def copula_from_permutation(p: Permutation) -> DiscreteCopula:
    return DiscreteCopula(p.zero_based())


def permutation_from_copula(c) -> Permutation:
    """Inverse of the integration bijection; accepts a :class:`DiscreteCopula` or a raw matrix."""
    if isinstance(c, DiscreteCopula):
        if c._values is not None:
            check = is_discrete_copula(c._values)
            if not check.ok:
                raise InvalidCopulaError(check.violation)
        return c.permutation
    return DiscreteCopula.from_matrix(c).permutation


def product_copula(n: int) -> np.ndarray:
    """Exact ``ab/n`` as an object array of :class:`Fraction`."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = np.empty((n + 1, n + 1), dtype=object)
    for a in range(n + 1):
        for b in range(n + 1):
            out[a, b] = Fraction(a * b, n)
    return out


@dataclass(frozen=True, eq=False)
class ResidualField:
    """``D = C - C_0`` stored exactly as the integers ``n*C_ab - a*b``."""

    n: int
    scaled: np.ndarray

    def exact(self, a: int, b: int) -> Fraction:
        return Fraction(int(self.scaled[a, b]), self.n)

    def as_fractions(self) -> np.ndarray:
        out = np.empty(self.scaled.shape, dtype=object)
        for idx, v in np.ndenumerate(self.scaled):
            out[idx] = Fraction(int(v), self.n)
        return out

    @property
    def values(self) -> np.ndarray:
        return self.scaled / self.n


def residual(c: DiscreteCopula) -> ResidualField:
    n = c.n
    idx = np.arange(n + 1, dtype=np.int64)
    return ResidualField(n, n * c.values - np.outer(idx, idx))


@dataclass(frozen=True, eq=False)
class InterpolatedField:
    """Corner values on the ``(n+1)^2`` grid of nodes ``(a/n, b/n)``.

    ``kind`` is ``"x"`` for the scaled copula ``C/n`` and ``"y"`` for the scaled
    residual ``D/n``.  Corners may be floats or exact fractions.
    """

    n: int
    corners: np.ndarray
    kind: str = "x"


def x_field(c: DiscreteCopula, exact: bool = False) -> InterpolatedField:
    if exact:
        corners = np.vectorize(lambda v: Fraction(int(v), c.n), otypes=[object])(c.values)
    else:
        corners = c.values / c.n
    return InterpolatedField(c.n, corners, "x")


def y_field(c: DiscreteCopula, exact: bool = False) -> InterpolatedField:
    d = residual(c)
    n2 = c.n * c.n
    if exact:
        corners = np.vectorize(lambda v: Fraction(int(v), n2), otypes=[object])(d.scaled)
    else:
        corners = d.scaled / n2
    return InterpolatedField(c.n, corners, "y")


def interpolate_eval(field: InterpolatedField, u, v):
    """Bilinear value at ``(u, v)``; exact when corners and arguments are rational."""
    if not (0 <= u <= 1 and 0 <= v <= 1):
        raise ValueError(f"({u}, {v}) is outside the unit square")
    n = field.n
    a = min(math.floor(u * n), n - 1)
    b = min(math.floor(v * n), n - 1)
    s = u * n - a
    t = v * n - b
    k = field.corners
    return (
        (1 - s) * (1 - t) * k[a, b]
        + s * (1 - t) * k[a + 1, b]
        + (1 - s) * t * k[a, b + 1]
        + s * t * k[a + 1, b + 1]
    )


def interpolate_grid(corners: np.ndarray, us, vs) -> np.ndarray:
    """Vectorized bilinear evaluation of float corners on the outer product ``us x vs``.

    ``corners`` may carry a leading batch axis.
    """
    corners = np.asarray(corners, dtype=float)
    n = corners.shape[-1] - 1
    us = np.asarray(us, dtype=float)
    vs = np.asarray(vs, dtype=float)
    a = np.minimum(np.floor(us * n).astype(np.int64), n - 1)
    b = np.minimum(np.floor(vs * n).astype(np.int64), n - 1)
    s = (us * n - a)[:, None]
    t = (vs * n - b)[None, :]
    c00 = corners[..., a[:, None], b[None, :]]
    c10 = corners[..., a[:, None] + 1, b[None, :]]
    c01 = corners[..., a[:, None], b[None, :] + 1]
    c11 = corners[..., a[:, None] + 1, b[None, :] + 1]
    return (1 - s) * (1 - t) * c00 + s * (1 - t) * c10 + (1 - s) * t * c01 + s * t * c11


@dataclass(frozen=True, eq=False)
class BirkhoffCopula:
    n: int
    values: np.ndarray
    matrix: np.ndarray = field(repr=False, default=None)


def birkhoff_copula_from_matrix(m, tol: float = 1e-9) -> BirkhoffCopula:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotDoublyStochasticError(f"shape {m.shape} is not square")
    neg = np.argwhere(m < -1e-12)
    if len(neg):
        i, j = (int(x) for x in neg[0])
        raise NotDoublyStochasticError(f"negative entry M[{i},{j}] = {m[i, j]}")
    for axis, label in ((1, "row"), (0, "column")):
        sums = m.sum(axis=axis)
        bad = np.flatnonzero(np.abs(sums - 1) > tol)
        if len(bad):
            k = int(bad[0])
            raise NotDoublyStochasticError(f"{label} {k} sums to {sums[k]!r}, not 1")
    return BirkhoffCopula(m.shape[0], _integrate(m), m)


def is_birkhoff_copula(matrix, tol: float = 1e-9) -> CopulaCheck:
    c = np.asarray(matrix, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 2:
        return CopulaCheck(False, f"shape {c.shape} is not square with side >= 2")
    return _check_axioms(c, tol)


def sigma_array(p: Permutation | Sequence[int] | np.ndarray) -> np.ndarray:
    """0-based permutation array from a :class:`Permutation` (anything else is assumed 0-based)."""
    if isinstance(p, Permutation):
        return p.zero_based()
    return np.asarray(p, dtype=np.int64)
