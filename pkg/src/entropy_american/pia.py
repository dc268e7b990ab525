"""Entropy-regularized policy improvement on simulated paths.

Also hosts the classical penalization baseline and the duality upper bound.
All value surfaces are kept in time-t money; discounting enters through the
``-r v`` term of the driver.
"""

from __future__ import annotations

import io
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .model import MarketModel, Method, Payoff, RunConfig, TimeGrid
from .paths import PathBatch, simulate
from .regression import RegressionPlan, build_plan, cond_exp
from ._kernels import project_update
from .scheme import EXP_CLAMP, NumericalError, classical_node, exponential_step, policy

logger = logging.getLogger(__name__)

__all__ = ["ValueSurface", "PolicyView", "PriceReport", "TraceRecord", "init_surface",
           "pia_sweep", "run_pia", "policy_view", "run_classical_penalization",
           "dual_upper_bound", "exponential_step", "classical_node", "price"]


@dataclass(eq=False)
class ValueSurface:
    """Value estimates stored time-major: ``rows[k]`` holds all paths at t_k."""

    rows: np.ndarray  # (N+1, M)
    lam: float | None
    m: int = 0

    @property
    def values(self) -> np.ndarray:
        """Path-major (M, N+1) view."""
        return self.rows.T

    @property
    def price(self) -> float:
        return float(self.rows[0].mean())

    def retag(self, lam: float) -> ValueSurface:
        return ValueSurface(self.rows, lam, self.m)


@dataclass(eq=False)
class PolicyView:
    intensities: np.ndarray  # (M, N)


@dataclass
class TraceRecord:
    m: int
    lam: float
    price: float
    wall_time: float


@dataclass
class PriceReport:
    method: str
    price: float
    std_error: float
    lower: float | None = None
    upper: float | None = None
    upper_se: float | None = None
    lam: float | None = None
    iterations: int = 0
    wall_time: float = 0.0
    trace: list[TraceRecord] = field(default_factory=list, repr=False)
    stages: list[dict] = field(default_factory=list, repr=False)
    extra: dict = field(default_factory=dict)

    def to_text(self) -> str:
        rows = [("method", self.method), ("price", self.price), ("std_error", self.std_error),
                ("lower", self.lower), ("upper", self.upper), ("upper_se", self.upper_se),
                ("lambda", self.lam), ("iterations", self.iterations),
                ("wall_time", self.wall_time)]
        rows += sorted(self.extra.items())
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in rows if v is not None)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        buf.write("m,lambda,price,wall_time\n")
        for t in self.trace:
            buf.write(f"{t.m},{_fmt(t.lam)},{_fmt(t.price)},{t.wall_time:.4f}\n")
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


# --------------------------------------------------------------------------- #
# kernels
# --------------------------------------------------------------------------- #

def _step_coefficients(P, v, lam, r, dt):
    """Return (omw, target) with v_new = c + omw * (target - c).

    omw = 1 - exp(-a dt) and target = b / a, where a, b are the policy
    coefficients built from ``v``. Uses one exp and one expm1 per entry. The
    exponent is also clamped from below at -EXP_CLAMP, which keeps a > 0 when
    r = 0 and changes the policy by less than 1e-304.
    """
    x = np.clip((P - v) / lam, -EXP_CLAMP, EXP_CLAMP)
    q = np.exp(-np.abs(x))
    pos = x > 0.0
    a = np.where(pos, 1.0 / q, q) + r
    omw = -np.expm1(-a * dt)
    target = np.where(pos, (v + lam * (1.0 - q)) / (1.0 + r * q),
                      (q * v + lam * (q - 1.0)) / a)
    return omw, target


def init_surface(batch: PathBatch, plan: RegressionPlan) -> ValueSurface:
    """Regression estimate of the European value E[e^{-r(T-t_k)} P_T | S_{t_k}]."""
    grid, r = batch.grid, batch.model.r
    N = grid.N
    rows = np.empty((N + 1, batch.M))
    terminal = batch.payoff_rows[N]
    rows[N] = terminal
    for k in range(N):
        rows[k] = cond_exp(plan, k, np.exp(-r * (grid.T - grid.times[k])) * terminal)
    return ValueSurface(rows, None, 0)


def pia_sweep(surface: ValueSurface, batch: PathBatch, plan: RegressionPlan,
              lam: float) -> ValueSurface:
    """One policy-improvement iteration: backward pass k = N-1, ..., 0."""
    r, dt, N = batch.model.r, batch.grid.dt, batch.grid.N
    payoffs = batch.payoff_rows
    old = surface.rows
    new = np.empty_like(old)
    new[N] = payoffs[N]
    for k in range(N - 1, -1, -1):
        U = plan.steps[k].U
        bad = project_update(U, U.T @ new[k + 1], payoffs[k], old[k], lam, r, dt, new[k])
        if bad >= 0:
            raise NumericalError(f"non-finite value at path {bad}, k={k}, m={surface.m + 1}")
    return ValueSurface(new, lam, surface.m + 1)


def policy_view(surface: ValueSurface, batch: PathBatch, lam: float) -> PolicyView:
    N = batch.grid.N
    return PolicyView(policy(batch.payoffs[:, :N], surface.values[:, :N], lam))


def _replay(weights: np.ndarray, offsets: np.ndarray, terminal: np.ndarray) -> np.ndarray:
    """Pathwise solution of v_k = w_k v_{k+1} + h_k, v_N = terminal (time-major inputs)."""
    v = terminal.copy()
    for k in range(weights.shape[0] - 1, -1, -1):
        v = weights[k] * v + offsets[k]
    return v


def _pia_replay(policy_rows, payoff_rows, lam, r, dt):
    N = payoff_rows.shape[0] - 1
    omw, target = _step_coefficients(payoff_rows[:N], policy_rows[:N], lam, r, dt)
    return _replay(1.0 - omw, omw * target, payoff_rows[N])


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    se = x.std(ddof=1) / np.sqrt(x.size) if x.size > 1 else 0.0
    return float(x.mean()), float(se)


def fit_surface(surface: ValueSurface, plan: RegressionPlan) -> list[np.ndarray]:
    """Basis coefficients of the surface at k = 0..N-1 (for evaluation on new paths)."""
    return [plan.coefficients(k, surface.rows[k]) for k in range(plan.N)]


def _evaluate_surface(coefs, plan, batch: PathBatch) -> np.ndarray:
    """Time-major (N+1, M) evaluation of fitted coefficients on ``batch``."""
    N = batch.grid.N
    out = np.empty((N + 1, batch.M))
    for k in range(N):
        out[k] = plan.predict(coefs[k], batch.prices[:, k, :], batch.payoffs[:, k])
    out[N] = batch.payoff_rows[N]
    return out


def out_of_sample_price(policy_surface: ValueSurface, plan: RegressionPlan, lam: float,
                        model: MarketModel, payoff: Payoff, grid: TimeGrid, M: int,
                        seed: int) -> tuple[float, float]:
    """Replay the linear equation of the policy exp((P - v)/lam) on fresh paths."""
    fresh = simulate(model, grid, M, seed, payoff)
    v_hat = _evaluate_surface(fit_surface(policy_surface, plan), plan, fresh)
    return _mean_se(_pia_replay(v_hat, fresh.payoff_rows, lam, model.r, grid.dt))


# --------------------------------------------------------------------------- #
# drivers
# --------------------------------------------------------------------------- #

def _prepare(config: RunConfig):
    batch = simulate(config.model, config.grid, config.paths, config.seed, config.payoff,
                     threads=config.threads, antithetic=config.antithetic)
    plan = build_plan(batch, config.basis, threads=config.threads)
    return batch, plan


def run_pia(config: RunConfig, batch: PathBatch | None = None,
            plan: RegressionPlan | None = None,
            init: ValueSurface | None = None) -> tuple[PriceReport, ValueSurface]:
    """Run the lambda schedule of ``config`` and report the time-0 price.

    The reported standard error is that of the pathwise replay of the final
    policy on the training paths. ``report.stages`` holds the price at the end
    of each schedule stage. ``init`` resumes from an earlier surface on the
    same batch instead of the European start.
    """
    start = time.perf_counter()
    if batch is None:
        batch, plan = _prepare(config)
    elif plan is None:
        plan = build_plan(batch, config.basis, threads=config.threads)
    r, dt = batch.model.r, batch.grid.dt
    surface = init_surface(batch, plan) if init is None else init
    trace = [TraceRecord(surface.m, config.schedule.stages[0][0], surface.price,
                         time.perf_counter() - start)]
    stages = []
    previous = surface
    for lam, iters in config.schedule.stages:
        surface = surface.retag(lam)
        for _ in range(iters):
            previous = surface
            surface = pia_sweep(surface, batch, plan, lam)
            trace.append(TraceRecord(surface.m, lam, surface.price, time.perf_counter() - start))
        replay_mean, se = _mean_se(_pia_replay(previous.rows, batch.payoff_rows, lam, r, dt))
        stages.append({"lambda": lam, "iterations": surface.m, "price": trace[-1].price,
                       "std_error": se, "replay_price": replay_mean})
        logger.info("stage lambda=%g done: m=%d price=%.5f", lam, surface.m, trace[-1].price)

    final = stages[-1]
    report = PriceReport(method=Method.PIA.value, price=final["price"],
                         std_error=final["std_error"], lower=final["price"],
                         lam=config.schedule.final_lambda, iterations=surface.m,
                         trace=trace, stages=stages,
                         extra={"replay_price": final["replay_price"]})
    if config.out_of_sample:
        oos, oos_se = out_of_sample_price(previous, plan, config.schedule.final_lambda,
                                          config.model, config.payoff, config.grid,
                                          config.paths, config.seed + 1)
        report.extra.update(out_of_sample_price=oos, out_of_sample_se=oos_se)
    if config.dual:
        up, up_se = dual_upper_bound(surface, config.model, config.payoff, config.grid, plan,
                                     config.seed + 2, M=config.paths)
        report.upper, report.upper_se = up, up_se
    report.wall_time = time.perf_counter() - start
    return report, surface


def run_classical_penalization(config: RunConfig, n_penalty: float | None = None,
                               batch: PathBatch | None = None,
                               plan: RegressionPlan | None = None) -> PriceReport:
    """Single backward pass of the penalized scheme with driver n (P - v)^+ - r v."""
    start = time.perf_counter()
    n = config.penalty_intensity if n_penalty is None else n_penalty
    if n < 0:
        raise ValueError(f"penalty intensity must be nonnegative, got {n}")
    if batch is None:
        batch, plan = _prepare(config)
    elif plan is None:
        plan = build_plan(batch, config.basis, threads=config.threads)
    r, dt, N = batch.model.r, batch.grid.dt, batch.grid.N
    payoffs = batch.payoff_rows
    v = payoffs[N].copy()
    weights = np.empty((N, batch.M))
    offsets = np.empty((N, batch.M))
    for k in range(N - 1, -1, -1):
        c = cond_exp(plan, k, v)
        P = payoffs[k]
        v = classical_node(P, c, n, r, dt)
        pen = c / (1.0 + r * dt) < P
        alpha = 1.0 / (1.0 + r * dt + np.where(pen, n * dt, 0.0))
        weights[k] = alpha
        offsets[k] = np.where(pen, alpha * n * dt * P, 0.0)
    price_ = float(v.mean())
    replay_mean, se = _mean_se(_replay(weights, offsets, payoffs[N]))
    return PriceReport(method=Method.CLASSICAL.value, price=price_, std_error=se,
                       lower=price_, lam=1.0 / n if n > 0 else None, iterations=1,
                       wall_time=time.perf_counter() - start,
                       extra={"n_penalty": n, "replay_price": replay_mean})


def dual_upper_bound(surface: ValueSurface, model: MarketModel, payoff: Payoff,
                     grid: TimeGrid, plan: RegressionPlan, fresh_seed: int,
                     M: int | None = None) -> tuple[float, float]:
    """Duality upper bound E[max_k (e^{-r t_k} P_k - M_k)] with M_0 = 0.

    The surface is carried to fresh paths through its basis coefficients. The
    martingale increments are regression residuals of the discounted value one
    step ahead; the accumulated driver is known at t_k and cancels in them.
    Returns the estimate and its standard error.
    """
    M = surface.rows.shape[1] if M is None else M
    fresh = simulate(model, grid, M, fresh_seed, payoff)
    fresh_plan = build_plan(fresh, plan.basis)
    disc = np.exp(-model.r * grid.times)[:, None]
    values = _evaluate_surface(fit_surface(surface, plan), plan, fresh) * disc
    mart = np.zeros((grid.N + 1, M))
    for k in range(grid.N):
        increment = values[k + 1] - cond_exp(fresh_plan, k, values[k + 1])
        mart[k + 1] = mart[k] + increment
    pathwise = np.max(fresh.payoff_rows * disc - mart, axis=0)
    return _mean_se(pathwise)


def price(config: RunConfig) -> PriceReport:
    """Dispatch on ``config.method``."""
    from .lattice import LatticeModel, american_value
    from .paths import european_price

    if config.method is Method.PIA:
        return run_pia(config)[0]
    if config.method is Method.CLASSICAL:
        return run_classical_penalization(config)
    if config.method is Method.LATTICE:
        start = time.perf_counter()
        steps = config.lattice_steps or config.grid.N
        lat = LatticeModel(config.model, TimeGrid(config.grid.T, steps))
        value, _ = american_value(lat, config.payoff, keep_surface=False)
        return PriceReport(method=Method.LATTICE.value, price=value, std_error=0.0,
                           iterations=steps, wall_time=time.perf_counter() - start)
    start = time.perf_counter()
    value, se = european_price(config.model, config.payoff, config.grid, config.paths,
                               config.seed, threads=config.threads)
    return PriceReport(method=Method.EUROPEAN.value, price=value, std_error=se,
                       wall_time=time.perf_counter() - start)
