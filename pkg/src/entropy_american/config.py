"""INI-style run configuration files.

Sections hold ``key = value`` lines; ``#`` and ``;`` start comments. The
``[schedule]`` section lists one ``stage = lambda, iterations`` line per
temperature stage. Example::

    [model]
    d = 2
    s0 = 100
    r = 0.05
    delta = 0.1
    sigma = 0.2

    [payoff]
    kind = max_call
    strike = 100

    [grid]
    T = 3
    N = 100

    [simulation]
    paths = 100000
    seed = 2024

    [schedule]
    stage = 0.1, 500
    stage = 0.05, 500
    stage = 0.01, 500
    stage = 0.001, 500

    [basis]
    kind = andersen_broadie

    [method]
    name = pia

Recognised keys (defaults in brackets):

- ``[model]`` d, s0 (one value or d comma-separated values), r, delta, sigma
- ``[payoff]`` kind (max_call | put | constant), strike, cap [none]
- ``[grid]`` T, N
- ``[simulation]`` paths, seed [0], antithetic [false]
- ``[schedule]`` stage (repeatable), or lambda + iterations [2000]
- ``[basis]`` kind [andersen_broadie for d=2, polynomial otherwise], degree,
  payoff_powers
- ``[method]`` name (pia | classical | lattice | european) [pia], n_penalty
  [1/final lambda], lattice_steps [N], out_of_sample [false], dual [false]
- ``[sweep]`` (experiments only) s0, lambdas, per_stage, total, lattice_steps,
  iterations, upper, upper_paths
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .model import LambdaSchedule, MarketModel, Method, Payoff, RunConfig, TimeGrid
from .regression import Basis


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


@dataclass
class Entry:
    value: str
    line: int


@dataclass
class RawConfig:
    sections: dict[str, dict[str, list[Entry]]] = field(default_factory=dict)
    source: str = "<config>"

    def has(self, section: str, key: str) -> bool:
        return key in self.sections.get(section, {})

    def entries(self, section: str, key: str) -> list[Entry]:
        return self.sections.get(section, {}).get(key, [])

    def get(self, section: str, key: str, convert=str, default=...):
        found = self.entries(section, key)
        if not found:
            if default is ...:
                raise ConfigError(f"missing key '{key}' in [{section}]", None, self.source)
            return default
        if len(found) > 1:
            raise ConfigError(f"key '{key}' repeated in [{section}]", found[1].line, self.source)
        entry = found[0]
        try:
            return convert(entry.value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for '{key}': {exc}", entry.line, self.source) from None

    def line_of(self, section: str, key: str) -> int | None:
        found = self.entries(section, key)
        return found[0].line if found else None


def parse_text(text: str, source: str = "<config>") -> RawConfig:
    raw = RawConfig(source=source)
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].split(";", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]") or len(stripped) < 3:
                raise ConfigError(f"malformed section header '{stripped}'", lineno, source)
            section = stripped[1:-1].strip().lower()
            raw.sections.setdefault(section, {})
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value', got '{stripped}'", lineno, source)
        if section is None:
            raise ConfigError("key outside of any section", lineno, source)
        key, value = (part.strip() for part in stripped.split("=", 1))
        if not key:
            raise ConfigError("empty key", lineno, source)
        raw.sections[section].setdefault(key.lower(), []).append(Entry(value, lineno))
    return raw


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


def _wrap(raw: RawConfig, section: str, key: str | None, build):
    try:
        return build()
    except ConfigError:
        raise
    except ValueError as exc:
        named = [k for k in raw.sections.get(section, {}) if k in str(exc).lower()]
        line = raw.line_of(section, named[0] if named else key) if key else None
        if line is None and section in raw.sections:
            lines = [e.line for es in raw.sections[section].values() for e in es]
            line = min(lines) if lines else None
        raise ConfigError(f"[{section}] {exc}", line, raw.source) from None


def _schedule(raw: RawConfig) -> LambdaSchedule:
    stages = []
    for entry in raw.entries("schedule", "stage"):
        parts = [p.strip() for p in entry.value.split(",")]
        try:
            if len(parts) != 2:
                raise ValueError("expected 'lambda, iterations'")
            stages.append((float(parts[0]), _int(parts[1])))
        except ValueError as exc:
            raise ConfigError(f"bad stage: {exc}", entry.line, raw.source) from None
    if not stages and raw.has("schedule", "lambda"):
        stages = [(raw.get("schedule", "lambda", float),
                   raw.get("schedule", "iterations", _int, 2000))]
    if not stages:
        stages = [(0.001, 2000)]
    line = raw.entries("schedule", "stage")[0].line if raw.has("schedule", "stage") else None
    try:
        return LambdaSchedule(tuple(stages))
    except ValueError as exc:
        raise ConfigError(f"[schedule] {exc}", line, raw.source) from None


def build_run_config(raw: RawConfig) -> RunConfig:
    d = raw.get("model", "d", _int, 1)
    s0 = raw.get("model", "s0", _floats)
    model = _wrap(raw, "model", "s0", lambda: MarketModel(
        d=d, s0=tuple(s0), r=raw.get("model", "r", float),
        delta=raw.get("model", "delta", float, 0.0), sigma=raw.get("model", "sigma", float)))

    kind = raw.get("payoff", "kind", str.lower, "max_call" if d > 1 else "put")
    payoff = _wrap(raw, "payoff", "kind", lambda: Payoff(
        kind=kind, strike=raw.get("payoff", "strike", float, 0.0),
        cap=raw.get("payoff", "cap", float, None)))
    if payoff.kind.value == "put" and d != 1:
        raise ConfigError("put payoff needs d = 1", raw.line_of("payoff", "kind"), raw.source)

    grid = _wrap(raw, "grid", "N", lambda: TimeGrid(
        T=raw.get("grid", "t", float), N=raw.get("grid", "n", _int)))

    basis = None
    if "basis" in raw.sections:
        bkind = raw.get("basis", "kind", str.lower, "polynomial")
        if bkind == "andersen_broadie":
            basis = Basis.andersen_broadie()
        else:
            basis = _wrap(raw, "basis", "kind", lambda: Basis(
                kind=bkind, degree=raw.get("basis", "degree", _int, 2),
                payoff_powers=raw.get("basis", "payoff_powers", _int, 0), d=d))

    method = raw.get("method", "name", str.lower, "pia")
    return _wrap(raw, "method", "name", lambda: RunConfig(
        model=model, payoff=payoff, grid=grid,
        paths=raw.get("simulation", "paths", _int, 100000),
        seed=raw.get("simulation", "seed", _int, 0),
        schedule=_schedule(raw), basis=basis, method=Method(method),
        n_penalty=raw.get("method", "n_penalty", float, None),
        lattice_steps=raw.get("method", "lattice_steps", _int, None),
        out_of_sample=raw.get("method", "out_of_sample", _bool, False),
        dual=raw.get("method", "dual", _bool, False),
        antithetic=raw.get("simulation", "antithetic", _bool, False)))


def load_config(path) -> tuple[RunConfig, RawConfig]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    raw = parse_text(text, source=str(path))
    return build_run_config(raw), raw
