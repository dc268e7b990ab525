"""Seeded simulation of Black-Scholes paths with dividends on a uniform grid."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .model import MarketModel, Payoff, TimeGrid

# Paths are generated in fixed-size blocks; block b draws from its own Philox
# stream keyed by (seed, b), so output does not depend on the thread count.
BLOCK = 4096


@dataclass(frozen=True, eq=False)
class PathBatch:
    """``prices`` has shape (M, N+1, d); ``payoffs`` (M, N+1) or None."""

    model: MarketModel
    grid: TimeGrid
    prices: np.ndarray
    payoffs: np.ndarray | None
    seed: int

    @property
    def M(self) -> int:
        return self.prices.shape[0]

    @property
    def d(self) -> int:
        return self.prices.shape[2]

    @cached_property
    def payoff_rows(self) -> np.ndarray:
        """Time-major contiguous copy of ``payoffs``, shape (N+1, M)."""
        return np.ascontiguousarray(self.payoffs.T)

    def with_payoff(self, payoff: Payoff) -> PathBatch:
        return PathBatch(self.model, self.grid, self.prices, payoff(self.prices), self.seed)


def _block_normals(seed: int, block: int, rows: int, N: int, d: int) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))
    return gen.standard_normal((rows, N, d))


def simulate(model: MarketModel, grid: TimeGrid, M: int, seed: int,
             payoff: Payoff | None = None, threads: int = 1,
             antithetic: bool = False) -> PathBatch:
    """Simulate ``M`` paths by exact log-normal stepping.

    With ``antithetic`` the second half of the batch mirrors the Gaussian
    increments of the first half (``M`` must then be even).
    """
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    if antithetic and M % 2:
        raise ValueError("antithetic sampling needs an even path count")
    N, d, dt = grid.N, model.d, grid.dt
    drift = (model.r - model.delta - 0.5 * model.sigma ** 2) * dt
    vol = model.sigma * np.sqrt(dt)
    s0 = np.asarray(model.s0)

    n_draw = M // 2 if antithetic else M
    log_inc = np.empty((M, N, d))
    starts = range(0, n_draw, BLOCK)

    def fill(start: int) -> None:
        rows = min(BLOCK, n_draw - start)
        z = _block_normals(seed, start // BLOCK, rows, N, d)
        log_inc[start:start + rows] = drift + vol * z
        if antithetic:
            log_inc[n_draw + start:n_draw + start + rows] = drift - vol * z

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(fill, starts))
    else:
        for s in starts:
            fill(s)

    prices = np.empty((M, N + 1, d))
    prices[:, 0, :] = s0
    np.cumsum(log_inc, axis=1, out=log_inc)
    np.exp(log_inc, out=prices[:, 1:, :])
    prices[:, 1:, :] *= s0
    batch = PathBatch(model, grid, prices, None, seed)
    return batch.with_payoff(payoff) if payoff is not None else batch


def european_price(model: MarketModel, payoff: Payoff, grid: TimeGrid, M: int, seed: int,
                   threads: int = 1) -> tuple[float, float]:
    """Monte Carlo European price and its standard error."""
    batch = simulate(model, grid, M, seed, threads=threads)
    disc = np.exp(-model.r * grid.T) * payoff(batch.prices[:, -1, :])
    se = disc.std(ddof=1) / np.sqrt(M) if M > 1 else 0.0
    return float(disc.mean()), float(se)


def dump_paths(batch: PathBatch, path) -> None:
    """Write ``path_id,k,asset,price`` rows for debugging."""
    M, n1, d = batch.prices.shape
    pid, k, asset = np.meshgrid(np.arange(M), np.arange(n1), np.arange(d), indexing="ij")
    table = np.column_stack([pid.ravel(), k.ravel(), asset.ravel(), batch.prices.ravel()])
    np.savetxt(path, table, fmt=["%d", "%d", "%d", "%.10g"], delimiter=",",
               header="path_id,k,asset,price", comments="")
