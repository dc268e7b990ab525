"""Parameter sweeps behind the command-line studies.

Each function returns plain row dictionaries; formatting and file output are
left to the caller.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lattice import (LatticeModel, american_value, entropy_value_exact, european_value,
                      iterate_lattice_pia, lattice_dual_upper)
from .model import LambdaSchedule, MarketModel, Payoff, RunConfig, TimeGrid
from .paths import simulate
from .pia import run_classical_penalization, run_pia
from .regression import build_plan

KINDS = ("table1", "lambda_rate", "pia_rate", "single_price")

TABLE1_S0 = (90.0, 100.0, 110.0)
TABLE1_LAMBDAS = (0.1, 0.01, 0.001)
LADDER_RUNGS = (0.1, 0.05, 0.01, 0.001)
RATE_LAMBDAS = (1.0, 0.1, 0.05, 0.02, 0.01, 0.005, 0.001)


@dataclass(frozen=True)
class ExperimentSpec:
    """A study: what to sweep, the base run configuration and where to write."""

    kind: str
    config: RunConfig
    s0_values: tuple[float, ...] = TABLE1_S0
    lambdas: tuple[float, ...] = TABLE1_LAMBDAS
    out_dir: Path = Path("results")
    per_stage: int = 500
    total: int | None = 2000
    lattice_steps: int | None = None
    iterations: int = 40
    upper: bool = False
    upper_paths: int = 100000
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if not self.s0_values or not self.lambdas:
            raise ValueError("sweep lists must be non-empty")
        if any(not lam > 0.0 for lam in self.lambdas):
            raise ValueError("sweep lambdas must be positive")
        if self.per_stage < 1 or self.iterations < 0:
            raise ValueError("iteration counts must be positive")


def table1_config(paths: int = 100000, seed: int = 2024) -> RunConfig:
    """Two-asset max-call of the benchmark table."""
    return RunConfig(model=MarketModel.symmetric(2, 100.0, 0.05, 0.1, 0.2),
                     payoff=Payoff.max_call(100.0), grid=TimeGrid(3.0, 100), paths=paths,
                     seed=seed, schedule=LambdaSchedule.fixed(0.001, 2000))


def put_config(N: int = 200, paths: int = 100000, seed: int = 2024) -> RunConfig:
    """At-the-money one-year put used by the lattice studies."""
    return RunConfig(model=MarketModel(1, (100.0,), 0.05, 0.0, 0.2),
                     payoff=Payoff.put(100.0), grid=TimeGrid(1.0, N), paths=paths,
                     seed=seed, schedule=LambdaSchedule.fixed(0.001, 2000))


def _lattice(spec: ExperimentSpec, model: MarketModel) -> LatticeModel:
    grid = spec.config.grid
    return LatticeModel(model, TimeGrid(grid.T, spec.lattice_steps or grid.N))


def _chunks(schedule: LambdaSchedule, size: int) -> tuple[tuple[float, int], ...]:
    """Split every stage into runs of at most ``size`` sweeps."""
    out = []
    for lam, iters in schedule.stages:
        while iters > 0:
            out.append((lam, min(size, iters)))
            iters -= size
    return tuple(out)


def table1_rows(spec: ExperimentSpec) -> list[dict]:
    """PIA, classical penalization and lattice prices over (s0, lambda).

    The PIA cell for lambda follows ``LambdaSchedule.ladder(lambda, per_stage,
    total)``. Schedules of different cells share their leading sweeps, so the
    runs are organised as a prefix tree of ``per_stage``-sized chunks; each
    cell is bit-identical to a separate run. The classical cells reuse the same
    paths and basis with n = 1/lambda.
    """
    base = spec.config
    lambdas = sorted(set(spec.lambdas), reverse=True)
    rungs = tuple(sorted(set(LADDER_RUNGS) | set(lambdas), reverse=True))
    rows = []
    for s0 in spec.s0_values:
        model = base.model.with_s0(s0)
        config = dataclasses.replace(base, model=model)
        batch = simulate(model, config.grid, config.paths, config.seed, config.payoff,
                         threads=config.threads, antithetic=config.antithetic)
        plan = build_plan(batch, config.basis, threads=config.threads)
        lattice_price, _ = american_value(_lattice(spec, model), config.payoff,
                                          keep_surface=False)
        cells = [_chunks(LambdaSchedule.ladder(lam, spec.per_stage, spec.total, rungs=rungs),
                         spec.per_stage) for lam in lambdas]
        cache = {}
        for i, (lam, chunks) in enumerate(zip(lambdas, cells)):
            for j in range(len(chunks)):
                key = chunks[:j + 1]
                if key not in cache:
                    step = dataclasses.replace(config, schedule=LambdaSchedule((chunks[j],)))
                    start = cache[chunks[:j]][1] if j else None
                    cache[key] = run_pia(step, batch=batch, plan=plan, init=start)
            stage = cache[chunks][0].stages[-1]
            # keep only surfaces that later cells can resume from
            later = cells[i + 1:]
            cache = {k: v for k, v in cache.items() if any(c[:len(k)] == k for c in later)}
            classical = run_classical_penalization(config, 1.0 / lam, batch=batch, plan=plan)
            rows.append({"s0": s0, "lambda": lam, "pia": stage["price"],
                         "pia_se": stage["std_error"], "pia_iterations": stage["iterations"],
                         "classical": classical.price, "classical_se": classical.std_error,
                         "lattice": lattice_price, "lattice_se": 0.0})
    return rows


def lambda_rate_rows(spec: ExperimentSpec) -> list[dict]:
    """Gap between the entropy-regularized and American lattice values per lambda.

    ``rate_ratio`` is gap / (lambda - lambda ln lambda). With ``spec.upper`` the
    rows also carry a duality upper bound built from the regularized surface.
    """
    config = spec.config
    lat = _lattice(spec, config.model)
    V0, _ = american_value(lat, config.payoff, keep_surface=False)
    rows = []
    for i, lam in enumerate(sorted(set(spec.lambdas), reverse=True)):
        v0, surface = entropy_value_exact(lat, config.payoff, lam, keep_surface=spec.upper)
        gap = abs(v0 - V0)
        row = {"lambda": lam, "v_lambda_root": v0, "V_root": V0, "gap": gap,
               "rate_ratio": gap / (lam - lam * math.log(lam))}
        if spec.upper:
            upper, upper_se = lattice_dual_upper(lat, config.payoff, surface,
                                                 spec.upper_paths, config.seed + i)
            row.update(upper=upper, upper_se=upper_se, upper_gap=upper - v0)
        rows.append(row)
    return rows


def pia_rate_rows(spec: ExperimentSpec) -> list[dict]:
    """Lattice-exact policy improvement: root value and error per iteration.

    ``error`` is measured against the node-exact fixed point and
    ``min_node_step`` is the smallest change min(v^m - v^{m-1}) over all nodes.
    """
    config = spec.config
    lat = _lattice(spec, config.model)
    rows = []
    for lam in sorted(set(spec.lambdas), reverse=True):
        exact, _ = entropy_value_exact(lat, config.payoff, lam, keep_surface=False)
        _, current = european_value(lat, config.payoff)
        rows.append({"lambda": lam, "m": 0, "v_root": float(current[0].ravel()[0]),
                     "error": abs(float(current[0].ravel()[0]) - exact),
                     "min_node_step": float("nan")})
        it = iterate_lattice_pia(lat, config.payoff, lam, init=current)
        for m in range(1, spec.iterations + 1):
            new = next(it)
            step = min(float(np.min(a - b)) for a, b in zip(new, current))
            root = float(new[0].ravel()[0])
            rows.append({"lambda": lam, "m": m, "v_root": root, "error": abs(root - exact),
                         "min_node_step": step})
            current = new
    return rows


def run(spec: ExperimentSpec) -> list[dict]:
    return {"table1": table1_rows, "lambda_rate": lambda_rate_rows,
            "pia_rate": pia_rate_rows}[spec.kind](spec)
