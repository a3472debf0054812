"""TOML model configuration: parsing, validation, and documented defaults.

Schema (see README for a full example)::

    [model]
    dimension = 2          # required, >= 1
    birth_cap = 4.0        # optional, defaults to max birth_hi
    death_cap = 1.0        # optional, defaults to max death_hi

    [[model.types]]        # exactly `dimension` entries, in type order
    birth = { kind = "constant", params = [4.0] }
    death = { kind = "state-affine", params = [0.0, 1.0, 0.0] }
    birth_lo = 4.0
    birth_hi = 4.0
    death_lo = 1.0
    death_hi = 2.0
    cap = 60               # truncation cap N_j for this type

    [run]                  # all optional
    horizon = 10.0
    grid_step = 0.01
    tail_threshold = 1e-3
    initial_state = [12, 0]
    seed = 20240801

    [simulate]             # all optional
    n_paths = 100000
    sample_times = [0.5, 1.0, 2.0]

Parse errors cite the line (via the TOML parser); semantic errors cite the
offending field path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib  # py >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .model import ModelSpec, RateBounds, RateRule, TruncatedSpace, build_space

DEFAULT_HORIZON = 10.0
DEFAULT_GRID_STEP = 0.01
DEFAULT_TAIL_THRESHOLD = 1e-3
DEFAULT_SLACK = 1e-6
DEFAULT_SEED = 20240801
DEFAULT_N_PATHS = 100_000


class ConfigError(ValueError):
    """Malformed or invalid configuration; message cites line or field."""


@dataclass
class RunSettings:
    horizon: float = DEFAULT_HORIZON
    grid_step: float = DEFAULT_GRID_STEP
    tail_threshold: float = DEFAULT_TAIL_THRESHOLD
    initial_state: tuple[int, ...] = ()
    seed: int = DEFAULT_SEED
    n_paths: int = DEFAULT_N_PATHS
    sample_times: tuple[float, ...] = ()


@dataclass
class LoadedConfig:
    path: str
    model: ModelSpec
    caps: tuple[int, ...]
    run: RunSettings = field(default_factory=RunSettings)

    def space(self) -> TruncatedSpace:
        return build_space(self.caps)


_MISSING = object()


def _want(table: dict, key: str, types, where: str, default=_MISSING):
    if key not in table:
        if default is not _MISSING:
            return default
        raise ConfigError(f"missing required field '{where}.{key}'")
    val = table[key]
    if not isinstance(val, types):
        tn = types.__name__ if isinstance(types, type) else "/".join(t.__name__ for t in types)
        raise ConfigError(
            f"field '{where}.{key}' must be {tn}, got {type(val).__name__}")
    return val


def _rule(table: dict, where: str) -> RateRule:
    kind = _want(table, "kind", str, where)
    params = _want(table, "params", list, where)
    period = _want(table, "period", (int, float), where, default=0.0)
    if not all(isinstance(p, (int, float)) for p in params):
        raise ConfigError(f"field '{where}.params' must be a list of numbers")
    extra = set(table) - {"kind", "params", "period"}
    if extra:
        raise ConfigError(f"unknown field '{where}.{sorted(extra)[0]}'")
    try:
        return RateRule(kind=kind, params=tuple(params), period=float(period))
    except ValueError as exc:
        raise ConfigError(f"invalid rule at '{where}': {exc}") from exc


def load_config(path) -> LoadedConfig:
    """Read and validate a model configuration file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        # the parser message carries "at line L, column C"
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    if "model" not in doc:
        raise ConfigError("missing required section [model]")
    mt = doc["model"]
    d = _want(mt, "dimension", int, "model")
    if d < 1:
        raise ConfigError("field 'model.dimension' must be >= 1")
    types = _want(mt, "types", list, "model")
    if len(types) != d:
        raise ConfigError(
            f"section [[model.types]] must appear dimension={d} times, "
            f"found {len(types)}")

    birth_rules, death_rules, bounds, caps = [], [], [], []
    for i, entry in enumerate(types):
        where = f"model.types[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"'{where}' must be a table")
        birth_rules.append(_rule(_want(entry, "birth", dict, where), where + ".birth"))
        death_rules.append(_rule(_want(entry, "death", dict, where), where + ".death"))
        vals = {}
        for key in ("birth_lo", "birth_hi", "death_lo", "death_hi"):
            vals[key] = float(_want(entry, key, (int, float), where))
        try:
            bounds.append(RateBounds(**vals))
        except ValueError as exc:
            raise ConfigError(f"invalid bounds at '{where}': {exc}") from exc
        cap = _want(entry, "cap", int, where)
        if cap < 1:
            raise ConfigError(f"field '{where}.cap' must be >= 1")
        caps.append(cap)

    birth_cap = float(_want(mt, "birth_cap", (int, float), "model",
                            default=max(b.birth_hi for b in bounds)))
    death_cap = float(_want(mt, "death_cap", (int, float), "model",
                            default=max(b.death_hi for b in bounds)))
    try:
        model = ModelSpec(dimension=d,
                          birth_rules=tuple(birth_rules),
                          death_rules=tuple(death_rules),
                          bounds=tuple(bounds),
                          birth_cap=birth_cap,
                          death_cap=death_cap)
    except ValueError as exc:
        raise ConfigError(f"invalid [model]: {exc}") from exc

    run = RunSettings()
    rt = doc.get("run", {})
    run.horizon = float(_want(rt, "horizon", (int, float), "run", default=run.horizon))
    run.grid_step = float(_want(rt, "grid_step", (int, float), "run", default=run.grid_step))
    run.tail_threshold = float(_want(rt, "tail_threshold", (int, float), "run",
                                     default=run.tail_threshold))
    run.seed = int(_want(rt, "seed", int, "run", default=run.seed))
    init = _want(rt, "initial_state", list, "run", default=[0] * d)
    if len(init) != d or not all(isinstance(c, int) and 0 <= c for c in init):
        raise ConfigError(
            f"field 'run.initial_state' must be {d} non-negative integers")
    for jj, (c, cap) in enumerate(zip(init, caps)):
        if c > cap:
            raise ConfigError(
                f"field 'run.initial_state[{jj}]' = {c} exceeds cap {cap}")
    run.initial_state = tuple(init)
    if run.horizon <= 0 or run.grid_step <= 0:
        raise ConfigError("fields 'run.horizon' and 'run.grid_step' must be > 0")

    st = doc.get("simulate", {})
    run.n_paths = int(_want(st, "n_paths", int, "simulate", default=run.n_paths))
    times = _want(st, "sample_times", list, "simulate",
                  default=[run.horizon / 4, run.horizon / 2, run.horizon])
    if not all(isinstance(x, (int, float)) and 0 <= x <= run.horizon for x in times):
        raise ConfigError(
            "field 'simulate.sample_times' must be numbers in [0, horizon]")
    run.sample_times = tuple(sorted(float(x) for x in times))

    return LoadedConfig(path=str(path), model=model, caps=tuple(caps), run=run)
