"""Monte Carlo reserve: the (1 - eps) quantile of a compound-Poisson aggregate loss.

Simulations are split into fixed-size blocks.  Block ``j`` draws from its own
Philox stream keyed by ``(seed, purpose, j)``, so the aggregate-loss vector,
and therefore every quantile, is bit-identical for any number of workers.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import distributions as dist
from .composite import CompositeModel, model_digest
from .tailselect import nearest_index

__all__ = [
    "BLOCK_SIZE",
    "ResolutionError",
    "ReserveEstimate",
    "ReserveQuery",
    "aggregate_loss_sample",
    "block_rng",
    "estimate_reserve",
    "estimate_reserves",
    "quantile_index",
    "simulate_aggregate",
]

BLOCK_SIZE = 8192
#: stream tags separating the uses of one master seed
PURPOSE = {"reserve": 1, "true_reserve": 2, "sample": 3}


class ResolutionError(ValueError):
    """Too few simulations to resolve the requested tail probability."""


@dataclass(frozen=True)
class ReserveQuery:
    lam: float
    eps: float
    m: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not (0.0 < self.eps < 1.0):
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m}")
        if self.m * self.eps < 10:
            raise ResolutionError(f"m*eps = {self.m * self.eps:g} < 10; increase m")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class ReserveEstimate:
    q_hat: float
    query: ReserveQuery
    model_digest: str
    index: int = 0


def _tag(purpose) -> tuple:
    items = purpose if isinstance(purpose, tuple) else (purpose,)
    return tuple(PURPOSE[x] if isinstance(x, str) else int(x) for x in items)


def block_rng(seed: int, block: int, purpose: str | int | tuple = "reserve") -> np.random.Generator:
    """Independent counter-based stream for ``(seed, purpose..., block)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(*_tag(purpose), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def _segment_sums(values: np.ndarray, counts: np.ndarray) -> np.ndarray:
    ends = np.cumsum(counts)
    cs = np.concatenate(([0.0], np.cumsum(values)))
    return cs[ends] - cs[ends - counts]


def _aggregate_block(model: CompositeModel, lam: float, rng: np.random.Generator, size: int,
                     sampler=None) -> np.ndarray:
    n_claims = rng.poisson(lam, size)
    n_below = rng.binomial(n_claims, model.p_below)
    n_above = n_claims - n_below
    total = np.zeros(size)
    tot_below = int(n_below.sum())
    if tot_below:
        if sampler is None:
            sampler = dist.inverse_sampler(model.truncated_bulk)
        total += _segment_sums(sampler(rng.random(tot_below)), n_below)
    tot_above = int(n_above.sum())
    if tot_above:
        a, s = model.tail.params
        excess = s * np.expm1(-np.log1p(-rng.random(tot_above)) / a)
        total += _segment_sums(excess, n_above) + model.b * n_above
    return total


def aggregate_loss_sample(model: CompositeModel, lam: float, rng: np.random.Generator,
                          size: int | None = None):
    """One aggregate loss ``X = sum Z_i`` with ``N ~ Poisson(lam)`` (or ``size`` of them)."""
    out = _aggregate_block(model, lam, rng, 1 if size is None else int(size))
    return float(out[0]) if size is None else out


def _run_blocks(args):
    model, lam, seed, purpose, blocks, m = args
    sampler = dist.inverse_sampler(model.truncated_bulk) if model.p_below > 0 else None
    parts = []
    for j in blocks:
        size = min(BLOCK_SIZE, m - j * BLOCK_SIZE)
        parts.append(_aggregate_block(model, lam, block_rng(seed, j, purpose), size, sampler))
    return parts


def simulate_aggregate(model: CompositeModel, lam: float, m: int, seed: int,
                       purpose: str | int | tuple = "reserve", workers: int | None = 1) -> np.ndarray:
    """``m`` aggregate losses in block order; independent of ``workers``."""
    n_blocks = -(-int(m) // BLOCK_SIZE)
    workers = (os.cpu_count() or 1) if workers is None else max(1, int(workers))
    workers = min(workers, n_blocks)
    if workers == 1:
        parts = _run_blocks((model, lam, seed, purpose, range(n_blocks), m))
    else:
        chunks = [range(n_blocks)[w::workers] for w in range(workers)]
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_blocks, [(model, lam, seed, purpose, c, m) for c in chunks]))
        parts = [None] * n_blocks
        for chunk, res in zip(chunks, results):
            for j, arr in zip(chunk, res):
                parts[j] = arr
    return np.concatenate(parts)


def quantile_index(m: int, eps: float) -> int:
    """1-based order-statistic index nearest to ``(1 - eps) m``, clamped to ``[1, m]``."""
    return min(max(nearest_index((1.0 - eps) * m), 1), m)


def estimate_reserves(model: CompositeModel, lam: float, eps_values, m: int = 1_000_000,
                      seed: int = 0, purpose: str | int | tuple = "reserve",
                      workers: int | None = 1) -> list[ReserveEstimate]:
    """Reserves for several tail probabilities from one common simulation."""
    queries = [ReserveQuery(lam, float(e), int(m), int(seed)) for e in eps_values]
    x = simulate_aggregate(model, lam, int(m), int(seed), purpose, workers)
    idx = [quantile_index(int(m), q.eps) for q in queries]
    part = np.partition(x, sorted({i - 1 for i in idx}))
    digest = model_digest(model)
    return [ReserveEstimate(float(part[i - 1]), q, digest, i) for q, i in zip(queries, idx)]


def estimate_reserve(model: CompositeModel, query: ReserveQuery, purpose: str | int | tuple = "reserve",
                     workers: int | None = 1) -> ReserveEstimate:
    return estimate_reserves(model, query.lam, [query.eps], query.m, query.seed, purpose, workers)[0]
