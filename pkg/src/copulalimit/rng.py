"""Seeded random streams.

Every random quantity in the package is drawn from a ``numpy.random.Generator``
backed by PCG64.  Streams are derived from one integer root seed plus a stream
name (and optionally a chunk index), so that a suite can be re-run piece by
piece and chunked work gives the same answer whatever the number of workers.
"""
from __future__ import annotations

import secrets
import zlib
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterator, TypeVar

import numpy as np

T = TypeVar("T")

#: Bumped whenever the mapping (seed, name, index) -> stream changes.
STREAM_VERSION = 1

DEFAULT_CHUNK = 1000


def fresh_seed() -> int:
    """A random root seed, to be recorded by the caller."""
    return secrets.randbits(63)


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def substream(seed: int, name: str, index: int | None = None) -> np.random.Generator:
    """Generator for the named sub-stream ``name`` (and chunk ``index``) of ``seed``."""
    key: tuple[int, ...] = (STREAM_VERSION, _name_key(name))
    if index is not None:
        key = key + (int(index),)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng: np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def chunk_sizes(total: int, chunk: int = DEFAULT_CHUNK) -> list[int]:
    if total < 0:
        raise ValueError("total must be nonnegative")
    full, rest = divmod(total, chunk)
    return [chunk] * full + ([rest] if rest else [])


def _call(args):
    fn, seed, name, index, size = args
    return fn(substream(seed, name, index), size)


def map_chunks(
    fn: Callable[[np.random.Generator, int], T],
    total: int,
    seed: int,
    name: str,
    chunk: int = DEFAULT_CHUNK,
    workers: int = 1,
) -> list[T]:
    """Apply ``fn(rng, size)`` to consecutive chunks of a run of ``total`` draws.

    Chunk ``k`` always receives stream ``(seed, name, k)``, so results do not
    depend on ``workers``.  ``fn`` must be picklable when ``workers > 1``.
    """
    jobs = [(fn, seed, name, k, size) for k, size in enumerate(chunk_sizes(total, chunk))]
    if workers <= 1 or len(jobs) <= 1:
        return [_call(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, jobs))


def iter_chunks(total: int, seed: int, name: str, chunk: int = DEFAULT_CHUNK) -> Iterator[tuple[np.random.Generator, int]]:
    for k, size in enumerate(chunk_sizes(total, chunk)):
        yield substream(seed, name, k), size

