"""Least-squares conditional expectations on basis functions of the current prices.

A :class:`RegressionPlan` stores, for every time step, an orthonormal basis of
the column space of the (column-scaled) design matrix obtained from a thin SVD
with small singular values dropped. Fitted values are then the orthogonal
projection ``U (U^T y)``, which is the minimum-norm least-squares fit. Only the
right-hand side changes between calls, so each step costs two matrix-vector
products.
"""

from __future__ import annotations

import enum
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .paths import PathBatch

# singular values below RCOND * s_max are treated as zero
RCOND = 1e-10


class BasisKind(str, enum.Enum):
    ANDERSEN_BROADIE = "andersen_broadie"
    POLYNOMIAL = "polynomial"


@dataclass(frozen=True)
class Basis:
    """Regression features of the time-t prices.

    ``ANDERSEN_BROADIE`` is a fixed 13-function set for two assets:
    1, S1, S2, S1^2, S2^2, S1*S2, max, max^2, max^3, P, P^2, P^3, min,
    where P is the payoff at the current prices.

    ``POLYNOMIAL`` holds all monomials of total degree <= ``degree`` followed
    by the payoff powers P, ..., P^payoff_powers.
    """

    kind: BasisKind = BasisKind.POLYNOMIAL
    degree: int = 2
    payoff_powers: int = 0
    d: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", BasisKind(self.kind))
        if self.degree < 0 or self.payoff_powers < 0:
            raise ValueError("degree and payoff_powers must be nonnegative")

    @classmethod
    def andersen_broadie(cls) -> Basis:
        return cls(BasisKind.ANDERSEN_BROADIE, degree=3, payoff_powers=3, d=2)

    @classmethod
    def polynomial(cls, degree: int, d: int = 1, payoff_powers: int = 0) -> Basis:
        return cls(BasisKind.POLYNOMIAL, degree=degree, payoff_powers=payoff_powers, d=d)

    @classmethod
    def default_for(cls, d: int) -> Basis:
        if d == 2:
            return cls.andersen_broadie()
        if d == 1:
            return cls.polynomial(8, 1, payoff_powers=4)
        return cls.polynomial(2, d, payoff_powers=1)

    def check(self, d: int) -> None:
        if self.kind is BasisKind.ANDERSEN_BROADIE and d != 2:
            raise ValueError(f"the 13-function basis needs d=2, got d={d}")
        if self.d is not None and self.d != d:
            raise ValueError(f"basis built for d={self.d}, model has d={d}")

    def _monomials(self, d: int) -> list[tuple[int, ...]]:
        return [c for deg in range(self.degree + 1)
                for c in itertools.combinations_with_replacement(range(d), deg)]

    @property
    def dimension(self) -> int:
        if self.kind is BasisKind.ANDERSEN_BROADIE:
            return 13
        d = self.d if self.d is not None else 1
        return len(self._monomials(d)) + self.payoff_powers

    def features(self, prices: np.ndarray, payoffs: np.ndarray | None = None) -> np.ndarray:
        """Design matrix of shape (M, dimension) from prices (M, d) and payoffs (M,)."""
        prices = np.asarray(prices, dtype=float)
        M, d = prices.shape
        self.check(d)
        if self.kind is BasisKind.ANDERSEN_BROADIE:
            s1, s2 = prices[:, 0], prices[:, 1]
            hi, lo = np.maximum(s1, s2), np.minimum(s1, s2)
            p = payoffs
            return np.column_stack([np.ones(M), s1, s2, s1 * s1, s2 * s2, s1 * s2,
                                    hi, hi ** 2, hi ** 3, p, p ** 2, p ** 3, lo])
        cols = [np.prod(prices[:, list(c)], axis=1) if c else np.ones(M)
                for c in self._monomials(d)]
        if self.payoff_powers:
            if payoffs is None:
                raise ValueError("payoff features requested but no payoffs given")
            cols += [payoffs ** j for j in range(1, self.payoff_powers + 1)]
        return np.column_stack(cols)


@dataclass(eq=False)
class _StepFit:
    U: np.ndarray          # (M, rank) orthonormal columns
    coef_map: np.ndarray   # (dimension, rank): coefficients = coef_map @ (U^T y)


@dataclass(eq=False)
class RegressionPlan:
    basis: Basis
    steps: list[_StepFit]

    @property
    def N(self) -> int:
        return len(self.steps)

    def rank(self, k: int) -> int:
        return self.steps[k].U.shape[1]

    def cond_exp(self, k: int, target: np.ndarray) -> np.ndarray:
        return cond_exp(self, k, target)

    def coefficients(self, k: int, target: np.ndarray) -> np.ndarray:
        step = self.steps[k]
        return step.coef_map @ (step.U.T @ _checked(target, step.U.shape[0]))

    def predict(self, coef: np.ndarray, prices: np.ndarray, payoffs: np.ndarray | None) -> np.ndarray:
        return self.basis.features(prices, payoffs) @ coef


def _checked(target, M: int) -> np.ndarray:
    target = np.asarray(target, dtype=float)
    if target.shape != (M,):
        raise ValueError(f"target must have shape ({M},), got {target.shape}")
    if not np.all(np.isfinite(target)):
        raise ValueError("target contains non-finite entries")
    return target


def _fit_step(X: np.ndarray) -> _StepFit:
    scale = np.sqrt(np.mean(X * X, axis=0))
    scale[scale == 0.0] = 1.0
    U, s, Vt = np.linalg.svd(X / scale, full_matrices=False)
    r = max(1, int(np.sum(s > RCOND * s[0]))) if s[0] > 0 else 0
    U = np.ascontiguousarray(U[:, :r])
    coef_map = (Vt[:r].T / s[:r]) / scale[:, None]
    return _StepFit(U, coef_map)


def build_plan(batch: PathBatch, basis: Basis, threads: int = 1) -> RegressionPlan:
    """Factorize the design matrix at every step k = 0..N-1 of ``batch``."""
    if batch.M < basis.dimension:
        raise ValueError(f"need at least {basis.dimension} paths, got {batch.M}")
    basis.check(batch.d)

    def fit(k: int) -> _StepFit:
        pay = None if batch.payoffs is None else batch.payoffs[:, k]
        return _fit_step(basis.features(batch.prices[:, k, :], pay))

    ks = range(batch.grid.N)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            steps = list(pool.map(fit, ks))
    else:
        steps = [fit(k) for k in ks]
    return RegressionPlan(basis, steps)


def cond_exp(plan: RegressionPlan, k: int, target: np.ndarray) -> np.ndarray:
    """Fitted values of ``target`` regressed on the basis at step ``k``."""
    if not 0 <= k < plan.N:
        raise IndexError(f"k must lie in [0, {plan.N - 1}], got {k}")
    U = plan.steps[k].U
    return U @ (U.T @ _checked(target, U.shape[0]))
