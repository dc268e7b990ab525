"""Recombining binomial lattices used as benchmarks and as exact oracles.

For d = 2 the lattice is the product of two independent one-dimensional CRR
trees, so step k carries a (k+1) x (k+1) array of nodes indexed by the number of
up-moves of each asset. Conditional expectations one step ahead are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .model import MarketModel, Payoff, TimeGrid
from .scheme import (NumericalError, exponential_update, implicit_update, intensity,
                     solve_node)

__all__ = ["LatticeModel", "american_value", "european_value", "entropy_value_exact",
           "intensity", "lattice_pia", "iterate_lattice_pia", "lattice_dual_upper",
           "NumericalError"]

MAX_PRODUCT_STEPS = 300

NodeValues = list  # list of arrays, entry k has shape (k+1,)*d


@dataclass(frozen=True)
class LatticeModel:
    model: MarketModel
    grid: TimeGrid

    def __post_init__(self):
        if self.model.d > 2:
            raise ValueError(f"lattice supports d <= 2, got d={self.model.d}")
        if self.model.d == 2 and self.grid.N > MAX_PRODUCT_STEPS:
            raise ValueError(f"two-asset lattice limited to N <= {MAX_PRODUCT_STEPS}")
        if not 0.0 < self.p < 1.0 and self.model.sigma > 0.0:
            raise ValueError(f"risk-neutral probability {self.p} outside (0,1); reduce dt")

    @property
    def u(self) -> float:
        return math.exp(self.model.sigma * math.sqrt(self.grid.dt))

    @property
    def down(self) -> float:
        return 1.0 / self.u

    @property
    def p(self) -> float:
        growth = math.exp((self.model.r - self.model.delta) * self.grid.dt)
        if self.model.sigma == 0.0:
            # degenerate tree: both branches coincide with the forward
            return 0.5
        return (growth - self.down) / (self.u - self.down)

    @property
    def d(self) -> int:
        return self.model.d

    def prices(self, k: int) -> np.ndarray:
        """Node prices at step k, shape (k+1,)*d + (d,)."""
        j = np.arange(k + 1)
        if self.model.sigma == 0.0:
            growth = math.exp((self.model.r - self.model.delta) * k * self.grid.dt)
            one = np.full(k + 1, growth)
        else:
            one = self.u ** (2 * j - k)
        s0 = self.model.s0
        if self.d == 1:
            return (s0[0] * one)[:, None]
        a, b = np.meshgrid(s0[0] * one, s0[1] * one, indexing="ij")
        return np.stack([a, b], axis=-1)

    def expect(self, values: np.ndarray) -> np.ndarray:
        """E[values_{k+1} | node at k] (undiscounted)."""
        p = self.p
        out = values
        for axis in range(self.d):
            lo = np.take(out, np.arange(out.shape[axis] - 1), axis=axis)
            hi = np.take(out, np.arange(1, out.shape[axis]), axis=axis)
            out = p * hi + (1.0 - p) * lo
        return out


def _backward(lat: LatticeModel, payoff: Payoff, node_rule, keep: bool):
    N = lat.grid.N
    v = payoff(lat.prices(N))
    surface = [None] * (N + 1) if keep else None
    if keep:
        surface[N] = v
    for k in range(N - 1, -1, -1):
        v = node_rule(k, payoff(lat.prices(k)), lat.expect(v))
        if keep:
            surface[k] = v
    return float(np.ravel(v)[0]), surface


def american_value(lat: LatticeModel, payoff: Payoff, keep_surface: bool = True):
    """Root value and node surface of V_k = max(P_k, e^{-r dt} E[V_{k+1}])."""
    disc = math.exp(-lat.model.r * lat.grid.dt)
    return _backward(lat, payoff, lambda k, P, c: np.maximum(P, disc * c), keep_surface)


def european_value(lat: LatticeModel, payoff: Payoff, keep_surface: bool = True):
    disc = math.exp(-lat.model.r * lat.grid.dt)
    return _backward(lat, payoff, lambda k, P, c: disc * c, keep_surface)


def entropy_value_exact(lat: LatticeModel, payoff: Payoff, lam: float,
                        keep_surface: bool = True):
    """Node-exact solution of the entropy-penalized equation.

    At each node v = c + dt * (lam * (e^{(P-v)/lam} - 1) - r v) with c the exact
    one-step expectation, solved by Newton (the right-hand side is strictly
    decreasing in v, so the root is unique).
    """
    if not lam > 0.0:
        raise ValueError(f"lambda must be positive, got {lam}")
    r, dt = lat.model.r, lat.grid.dt
    return _backward(lat, payoff, lambda k, P, c: solve_node(P, c, lam, r, dt), keep_surface)


def iterate_lattice_pia(lat: LatticeModel, payoff: Payoff, lam: float,
                        init: NodeValues | None = None,
                        step: str = "implicit") -> Iterator[NodeValues]:
    """Policy improvement with exact lattice expectations.

    Yields the surfaces v^1, v^2, ... starting from ``init`` (the European
    surface by default). ``step="implicit"`` evaluates each policy by a
    backward-Euler step, whose fixed point is exactly :func:`entropy_value_exact`;
    ``step="exponential"`` uses the exponential integrator of the Monte Carlo
    scheme.
    """
    update = {"implicit": implicit_update, "exponential": exponential_update}[step]
    r, dt, N = lat.model.r, lat.grid.dt, lat.grid.N
    if init is None:
        _, init = european_value(lat, payoff)
    payoffs = [payoff(lat.prices(k)) for k in range(N + 1)]
    current = [np.array(v, dtype=float) for v in init]
    while True:
        new = [None] * (N + 1)
        new[N] = payoffs[N]
        for k in range(N - 1, -1, -1):
            new[k] = update(payoffs[k], current[k], lat.expect(new[k + 1]), lam, r, dt)
        if not all(np.all(np.isfinite(v)) for v in new):
            raise NumericalError("non-finite value in lattice policy iteration")
        current = new
        yield current


def lattice_pia(lat: LatticeModel, payoff: Payoff, lam: float, iterations: int,
                init: NodeValues | None = None, step: str = "implicit") -> list[NodeValues]:
    """Surfaces [v^0, v^1, ..., v^iterations] of lattice-exact policy improvement."""
    if init is None:
        _, init = european_value(lat, payoff)
    out = [init]
    it = iterate_lattice_pia(lat, payoff, lam, init=init, step=step)
    for _ in range(iterations):
        out.append(next(it))
    return out


def lattice_dual_upper(lat: LatticeModel, payoff: Payoff, surface: NodeValues, M: int,
                       seed: int) -> tuple[float, float]:
    """Duality upper bound E[max_k (e^{-r t_k} P_k - M_k)] on sampled lattice paths.

    The martingale is built from ``surface`` with exact one-step expectations,
    so only the sampling of the outer mean carries error. Returns the estimate
    and its standard error.
    """
    r, dt, N, d = lat.model.r, lat.grid.dt, lat.grid.N, lat.d
    rng = np.random.default_rng(seed)
    ups = np.zeros((M, d), dtype=np.int64)
    mart = np.zeros(M)

    def at(values, idx):
        return values[tuple(idx.T)]

    best = at(payoff(lat.prices(0)), ups)
    for k in range(N):
        cont = lat.expect(surface[k + 1])
        expected = at(cont, ups)
        ups = ups + (rng.random((M, d)) < lat.p)
        disc = math.exp(-r * (k + 1) * dt)
        mart += disc * (at(surface[k + 1], ups) - expected)
        best = np.maximum(best, disc * at(payoff(lat.prices(k + 1)), ups) - mart)
    se = best.std(ddof=1) / math.sqrt(M) if M > 1 else 0.0
    return float(best.mean()), float(se)
