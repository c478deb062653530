"""Uniform random permutations and a rectangle-move chain on the Birkhoff polytope."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import metropolis_run
from .copula import BirkhoffCopula, DiscreteCopula, Permutation, birkhoff_copula_from_matrix
from .rng import as_generator, fresh_seed


def sample_permutation_uniform(n: int, rng=None) -> Permutation:
    if n < 1:
        raise ValueError("n must be positive")
    return Permutation.from_zero_based(as_generator(rng).permutation(n))


def sample_permutation_batch(n: int, size: int, rng=None) -> np.ndarray:
    """``size`` independent uniform permutations as 0-based rows, shape ``(size, n)``."""
    rng = as_generator(rng)
    base = np.broadcast_to(np.arange(n, dtype=np.int64), (size, n))
    return rng.permuted(base, axis=1)


def sample_copula_uniform(n: int, rng=None) -> DiscreteCopula:
    return DiscreteCopula(as_generator(rng).permutation(n))


def prefix_counts(sigmas: np.ndarray, a: int, b: int) -> np.ndarray:
    """``C[a, b]`` for each 0-based permutation row: ones among the first ``a`` rows in the first ``b`` columns."""
    sigmas = np.asarray(sigmas)
    return (sigmas[..., :a] < b).sum(axis=-1)


def metropolis_move(M: np.ndarray, rng=None) -> np.ndarray:
    """One rectangle move on a copy of ``M`` with ``delta`` uniform on the feasible interval."""
    rng = as_generator(rng)
    out = np.array(M, dtype=float, copy=True)
    n = out.shape[0]
    if n < 2:
        return out
    i1, i2 = np.sort(rng.choice(n, 2, replace=False))
    j1, j2 = np.sort(rng.choice(n, 2, replace=False))
    metropolis_run(
        out,
        np.array([i1]), np.array([i2]), np.array([j1]), np.array([j2]),
        rng.random(1),
    )
    return out


def feasible_interval(M: np.ndarray, i1: int, i2: int, j1: int, j2: int) -> tuple[float, float]:
    return -min(M[i1, j1], M[i2, j2]), min(M[i1, j2], M[i2, j1])


def _random_pairs(rng, n: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    x = rng.integers(0, n, size=k)
    y = (x + rng.integers(1, n, size=k)) % n
    return np.minimum(x, y), np.maximum(x, y)


def run_moves(M: np.ndarray, steps: int, rng=None, block: int = 1 << 16) -> None:
    """Apply ``steps`` rectangle moves to ``M`` in place."""
    rng = as_generator(rng)
    n = M.shape[0]
    if n < 2:
        return
    done = 0
    while done < steps:
        k = min(block, steps - done)
        r1, r2 = _random_pairs(rng, n, k)
        c1, c2 = _random_pairs(rng, n, k)
        metropolis_run(M, r1, r2, c1, c2, rng.random(k))
        done += k


@dataclass(frozen=True)
class McmcConfig:
    n: int
    burn_in: int | None = None
    thin: int | None = None
    scale: str = "full-interval"
    seed: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", self.n ** 3)
        if self.thin is None:
            object.__setattr__(self, "thin", self.n ** 2)
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.scale != "full-interval":
            raise ValueError(f"unsupported move scale {self.scale!r}")
        if self.seed is None:
            object.__setattr__(self, "seed", fresh_seed())


def birkhoff_chain(cfg: McmcConfig, samples: int, start: np.ndarray | None = None):
    """Yield ``samples`` thinned states (copies) of a chain started at ``start`` (default: identity)."""
    rng = np.random.default_rng(cfg.seed)
    M = np.eye(cfg.n) if start is None else np.array(start, dtype=float, copy=True)
    run_moves(M, cfg.burn_in, rng)
    for _ in range(samples):
        run_moves(M, cfg.thin, rng)
        yield M.copy()


def sample_birkhoff_uniform(cfg: McmcConfig) -> BirkhoffCopula:
    """The chain state after burn-in and one thinning interval, as a Birkhoff copula."""
    (M,) = birkhoff_chain(cfg, 1)
    return birkhoff_copula_from_matrix(M)
