"""Core domain types: market model, payoffs, time grids, lambda schedules, run configuration."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class DimensionError(ValueError):
    """Raised when a payoff is evaluated on a price vector of the wrong dimension."""


@dataclass(frozen=True)
class MarketModel:
    """Black-Scholes market with a common dividend yield and volatility.

    Assets are driven by independent Brownian motions.
    """

    d: int
    s0: tuple[float, ...]
    r: float
    delta: float
    sigma: float

    def __post_init__(self):
        s0 = tuple(float(x) for x in np.atleast_1d(self.s0))
        if len(s0) == 1 and self.d > 1:
            s0 = s0 * self.d
        object.__setattr__(self, "s0", s0)
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if len(s0) != self.d:
            raise ValueError(f"s0 has {len(s0)} entries, expected d={self.d}")
        if any(x <= 0.0 for x in s0):
            raise ValueError("initial prices must be positive")
        if self.sigma < 0.0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")

    @classmethod
    def symmetric(cls, d: int, s0: float, r: float, delta: float, sigma: float) -> MarketModel:
        return cls(d=d, s0=(float(s0),) * d, r=r, delta=delta, sigma=sigma)

    def with_s0(self, s0: float) -> MarketModel:
        return MarketModel(d=self.d, s0=(float(s0),) * self.d, r=self.r,
                           delta=self.delta, sigma=self.sigma)


class PayoffKind(str, enum.Enum):
    MAX_CALL = "max_call"
    PUT = "put"
    CONSTANT = "constant"


@dataclass(frozen=True)
class Payoff:
    """Exercise payoff.

    ``MAX_CALL`` is ``(max_i S^i - K)^+``, ``PUT`` is ``(K - S)^+`` for a single
    asset and ``CONSTANT`` pays ``strike`` regardless of prices (used for
    degenerate checks, ``strike=0`` gives the zero payoff). ``cap`` optionally
    truncates the payoff from above.
    """

    kind: PayoffKind
    strike: float = 0.0
    cap: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PayoffKind(self.kind))
        if self.kind is PayoffKind.CONSTANT and self.strike < 0.0:
            raise ValueError("constant payoff must be nonnegative")

    @classmethod
    def max_call(cls, strike: float) -> Payoff:
        return cls(PayoffKind.MAX_CALL, strike)

    @classmethod
    def put(cls, strike: float) -> Payoff:
        return cls(PayoffKind.PUT, strike)

    @classmethod
    def constant(cls, value: float = 0.0) -> Payoff:
        return cls(PayoffKind.CONSTANT, value)

    def __call__(self, prices: np.ndarray) -> np.ndarray:
        """Evaluate on an array whose last axis holds the asset prices."""
        prices = np.asarray(prices, dtype=float)
        if prices.ndim == 0:
            prices = prices[None]
        if self.kind is PayoffKind.MAX_CALL:
            out = np.maximum(prices.max(axis=-1) - self.strike, 0.0)
        elif self.kind is PayoffKind.PUT:
            if prices.shape[-1] != 1:
                raise DimensionError(f"put payoff needs d=1, got d={prices.shape[-1]}")
            out = np.maximum(self.strike - prices[..., 0], 0.0)
        else:
            out = np.full(prices.shape[:-1], self.strike)
        if self.cap is not None:
            out = np.minimum(out, self.cap)
        return out


def evaluate_payoff(payoff: Payoff, prices) -> float:
    prices = np.asarray(prices, dtype=float).reshape(-1)
    if np.any(prices <= 0.0):
        raise ValueError("prices must be positive")
    return float(payoff(prices))


def discount_factor(r: float, dt: float) -> float:
    if dt < 0.0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    return math.exp(-r * dt)


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if not self.T > 0.0:
            raise ValueError(f"T must be positive, got {self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        # k*T/N rather than cumulative sums of dt
        return np.arange(self.N + 1) * self.T / self.N


@dataclass(frozen=True)
class LambdaSchedule:
    """Ordered temperature stages ``(lambda, iterations)`` with strictly decreasing lambda."""

    stages: tuple[tuple[float, int], ...]

    def __post_init__(self):
        stages = tuple((float(lam), int(it)) for lam, it in self.stages)
        if not stages:
            raise ValueError("schedule needs at least one stage")
        for lam, it in stages:
            if not lam > 0.0:
                raise ValueError(f"lambda must be positive, got {lam}")
            if it < 1:
                raise ValueError(f"iterations must be >= 1, got {it}")
        for (l0, _), (l1, _) in zip(stages, stages[1:]):
            if not l1 < l0:
                raise ValueError(f"lambdas must strictly decrease, got {l0} then {l1}")
        object.__setattr__(self, "stages", stages)

    @property
    def final_lambda(self) -> float:
        return self.stages[-1][0]

    @property
    def total_iterations(self) -> int:
        return sum(it for _, it in self.stages)

    @classmethod
    def fixed(cls, lam: float, iterations: int = 2000) -> LambdaSchedule:
        return cls(((lam, iterations),))

    @classmethod
    def ladder(cls, target: float, per_stage: int = 500, total: int | None = 2000,
               rungs: tuple[float, ...] = (0.1, 0.05, 0.01, 0.001)) -> LambdaSchedule:
        """Warm-start ladder ending at ``target``.

        Runs every rung above ``target`` for ``per_stage`` iterations, then
        ``target`` itself for whatever remains of ``total`` (at least ``per_stage``).
        """
        above = [lam for lam in rungs if lam > target]
        final = per_stage if total is None else max(per_stage, total - per_stage * len(above))
        return cls(tuple((lam, per_stage) for lam in above) + ((target, final),))


class Method(str, enum.Enum):
    PIA = "pia"
    CLASSICAL = "classical"
    LATTICE = "lattice"
    EUROPEAN = "european"


@dataclass(frozen=True)
class RunConfig:
    model: MarketModel
    payoff: Payoff
    grid: TimeGrid
    paths: int
    seed: int
    schedule: LambdaSchedule
    basis: "Basis" = None  # type: ignore[assignment]
    method: Method = Method.PIA
    n_penalty: float | None = None  # classical penalization intensity, 1/lambda if unset
    lattice_steps: int | None = None
    out_of_sample: bool = False
    dual: bool = False
    antithetic: bool = False
    threads: int = 1
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        from .regression import Basis

        object.__setattr__(self, "method", Method(self.method))
        if self.basis is None:
            object.__setattr__(self, "basis", Basis.default_for(self.model.d))
        if self.paths < 1:
            raise ValueError(f"paths must be >= 1, got {self.paths}")
        self.basis.check(self.model.d)
        if self.method in (Method.PIA, Method.CLASSICAL) and self.paths < self.basis.dimension:
            raise ValueError(
                f"paths={self.paths} is below the basis dimension {self.basis.dimension}")

    @property
    def penalty_intensity(self) -> float:
        return self.n_penalty if self.n_penalty is not None else 1.0 / self.schedule.final_lambda
