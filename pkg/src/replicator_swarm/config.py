"""Experiment configuration: YAML schema, validation and presets.

A config is a nested mapping.  Every key is optional except ``fidelity``,
``model`` and ``reference``; the full schema with defaults::

    name: str
    description: str                 (free text, ignored)
    fidelity: ode | ssa | micro
    trials: int >= 1                 (1)
    seed: unsigned 64-bit int        (0)
    t_end: float > 0                 (reference t_end)
    model:                           rates of the simulated system
      kind: example1 | example2 | custom
      k10, k12, k20, k21: float      (example1)
      mu: float, rate: float         (example2, rate defaults to 1)
      payoff: M x M matrix           (custom)
      scale: native | continuous     (native; continuous -> divided by N)
    reference:
      model: <model block>           desired-parameter model
      y0: simplex vector
      dt: float                      (0.01)
      t_end: float                   (100)
    control:
      enabled: bool                  (false)
      alpha: M x M matrix, or {"i,j": gain} with 0-based task indices
    counts0: list of int             (ssa, micro)
    fractions0: simplex vector       (ode; defaults to counts0/N or reference y0)
    ssa:   {max_events: int, guard: bool}
    micro: {arena: [w, h], speed, dt, estimation: centralized | distributed,
            sensing_radius, relative_speed, boundary: rotate | specular,
            neighbor_search: auto | grid | brute, record_every, guard}
    output: {format: csv | json, events: bool, snapshots: int | null}
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .core import PayoffMatrix, build_payoff_example1, build_payoff_example2
from .errors import ConfigError, SwarmError

FIDELITIES = ("ode", "ssa", "micro")
MODEL_KEYS = {
    "example1": {"k10", "k12", "k20", "k21"},
    "example2": {"mu", "rate"},
    "custom": {"payoff"},
}


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    params: dict
    scale: str = "native"

    def payoff(self) -> PayoffMatrix:
        p = self.params
        if self.kind == "example1":
            return build_payoff_example1(p["k10"], p["k12"], p["k20"], p["k21"])
        if self.kind == "example2":
            return build_payoff_example2(p["mu"], p.get("rate", 1.0))
        return PayoffMatrix(p["payoff"])

    @property
    def m(self) -> int:
        return {"example1": 3, "example2": 4}.get(self.kind) or len(self.params["payoff"])

    def with_param(self, name: str, value: float) -> "ModelSpec":
        params = dict(self.params)
        if self.kind == "custom":
            i, j = parse_entry(name)
            k = [list(row) for row in params["payoff"]]
            k[i][j] = value
            params["payoff"] = k
        else:
            params[name] = value
        return ModelSpec(self.kind, params, self.scale)

    def has_param(self, name: str) -> bool:
        if self.kind == "custom":
            try:
                i, j = parse_entry(name)
            except ValueError:
                return False
            return 0 <= i < self.m and 0 <= j < self.m and i != j
        return name in MODEL_KEYS[self.kind]

    def describe(self) -> dict:
        return {"kind": self.kind, **self.params}


def parse_entry(name: str) -> tuple[int, int]:
    """``"k[1,2]"``, ``"1,2"`` -> ``(1, 2)``."""
    s = name.strip()
    if s.startswith("k[") and s.endswith("]"):
        s = s[2:-1]
    i, j = (int(x) for x in s.split(","))
    return i, j


@dataclass(frozen=True)
class ReferenceSpec:
    model: ModelSpec
    y0: tuple
    dt: float = 0.01
    t_end: float = 100.0


@dataclass(frozen=True)
class MicroSettings:
    arena: tuple = (18.0, 18.0)
    speed: float = 1.0
    dt: float = 0.05
    estimation: str = "centralized"
    sensing_radius: float | None = None
    relative_speed: float | None = None
    boundary: str = "rotate"
    neighbor_search: str = "auto"
    record_every: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    fidelity: str
    model: ModelSpec
    reference: ReferenceSpec
    name: str = "experiment"
    trials: int = 1
    seed: int = 0
    t_end: float = 100.0
    alpha: tuple | None = None
    counts0: tuple | None = None
    fractions0: tuple | None = None
    max_events: int = 10_000_000
    guard: bool = True
    micro: MicroSettings = field(default_factory=MicroSettings)
    fmt: str = "csv"
    write_events: bool = True
    snapshot_every: int | None = None

    @property
    def m(self) -> int:
        return self.model.m

    @property
    def n_total(self) -> int | None:
        return None if self.counts0 is None else int(sum(self.counts0))

    @property
    def controlled(self) -> bool:
        return self.alpha is not None

    def alpha_matrix(self) -> np.ndarray | None:
        return None if self.alpha is None else np.array(self.alpha, dtype=float)

    def to_dict(self) -> dict:
        d = asdict(self)
        return json.loads(json.dumps(d, default=list))

    def config_hash(self) -> str:
        d = self.to_dict()
        for k in ("fmt",):
            d.pop(k, None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **changes) -> "ExperimentConfig":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return ExperimentConfig(**d)


class _Problems(list):
    def add(self, where, why):
        self.append((where, why))


_TOP_KEYS = {
    "name", "description", "fidelity", "trials", "seed", "t_end", "model", "reference", "control",
    "counts0", "fractions0", "ssa", "micro", "output",
}


def _number(p, where, v, *, positive=False, nonneg=False, allow_none=False):
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        p.add(where, f"expected a finite number, got {v!r}")
        return None
    if positive and not v > 0:
        p.add(where, f"must be > 0, got {v}")
    if nonneg and v < 0:
        p.add(where, f"must be >= 0, got {v}")
    return float(v)


def _int(p, where, v, minimum=None):
    if isinstance(v, bool) or not isinstance(v, int):
        p.add(where, f"expected an integer, got {v!r}")
        return None
    if minimum is not None and v < minimum:
        p.add(where, f"must be >= {minimum}, got {v}")
    return v


def _unknown(p, where, d, allowed):
    for key in sorted(set(d) - set(allowed)):
        p.add(f"{where}.{key}" if where else key, "unknown key")


def _model(p, where, d) -> ModelSpec | None:
    if not isinstance(d, dict):
        p.add(where, "expected a mapping")
        return None
    kind = d.get("kind")
    if kind not in MODEL_KEYS:
        p.add(f"{where}.kind", f"must be one of {sorted(MODEL_KEYS)}, got {kind!r}")
        return None
    scale = d.get("scale", "native")
    if scale not in ("native", "continuous"):
        p.add(f"{where}.scale", "must be native or continuous")
    _unknown(p, where, d, MODEL_KEYS[kind] | {"kind", "scale"})
    params = {}
    if kind == "custom":
        k = d.get("payoff")
        try:
            params["payoff"] = [[float(x) for x in row] for row in k]
            PayoffMatrix(params["payoff"])
        except (TypeError, ValueError, SwarmError) as exc:
            p.add(f"{where}.payoff", f"invalid payoff matrix: {exc}")
            return None
    else:
        required = MODEL_KEYS[kind] - {"rate"}
        for key in sorted(required):
            if key not in d:
                p.add(f"{where}.{key}", "missing")
        for key in sorted(MODEL_KEYS[kind] & set(d)):
            v = _number(p, f"{where}.{key}", d[key])
            if v is not None:
                params[key] = v
        if kind == "example1":
            for key in sorted(required & set(params)):
                if not params[key] > 0:
                    p.add(f"{where}.{key}", "rates must be positive")
    return ModelSpec(kind, params, scale)


def _vector(p, where, v, m):
    if not isinstance(v, (list, tuple)) or len(v) != m:
        p.add(where, f"expected a list of {m} numbers")
        return None
    out = [_number(p, f"{where}[{i}]", x, nonneg=True) for i, x in enumerate(v)]
    return None if None in out else tuple(out)


def _alpha(p, where, v, m):
    a = np.zeros((m, m))
    if isinstance(v, dict):
        for key, val in v.items():
            try:
                i, j = parse_entry(str(key))
            except ValueError:
                p.add(f"{where}.{key}", "key must look like 'i,j'")
                continue
            if not (0 <= i < m and 0 <= j < m) or i == j:
                p.add(f"{where}.{key}", f"off-diagonal index in [0, {m}) required")
                continue
            g = _number(p, f"{where}.{key}", val, nonneg=True)
            if g is not None:
                a[i, j] = g
    elif isinstance(v, (list, tuple)) and len(v) == m:
        for i, row in enumerate(v):
            if not isinstance(row, (list, tuple)) or len(row) != m:
                p.add(f"{where}[{i}]", f"expected {m} entries")
                continue
            for j, x in enumerate(row):
                g = _number(p, f"{where}[{i}][{j}]", x, nonneg=True)
                if g is not None:
                    a[i, j] = g
        if np.any(np.diagonal(a) != 0):
            p.add(where, "diagonal gains must be zero")
    else:
        p.add(where, f"expected an {m}x{m} matrix or an 'i,j' mapping")
        return None
    return tuple(tuple(float(x) for x in row) for row in a)


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a raw mapping; raises :class:`ConfigError` listing every problem."""
    p = _Problems()
    if not isinstance(raw, dict):
        raise ConfigError([("<root>", "configuration must be a mapping")])
    raw = copy.deepcopy(raw)
    _unknown(p, "", raw, _TOP_KEYS)

    fidelity = raw.get("fidelity")
    if fidelity not in FIDELITIES:
        p.add("fidelity", f"must be one of {FIDELITIES}, got {fidelity!r}")

    model = _model(p, "model", raw.get("model")) if "model" in raw else None
    if model is None and "model" not in raw:
        p.add("model", "missing")

    ref = None
    rraw = raw.get("reference")
    if not isinstance(rraw, dict):
        p.add("reference", "missing or not a mapping")
    else:
        _unknown(p, "reference", rraw, {"model", "y0", "dt", "t_end"})
        rmodel = _model(p, "reference.model", rraw.get("model"))
        y0 = None
        if rmodel is not None:
            y0 = _vector(p, "reference.y0", rraw.get("y0"), rmodel.m)
            if y0 is not None and abs(sum(y0) - 1.0) > 1e-9:
                p.add("reference.y0", f"must sum to 1, sums to {sum(y0)}")
        dt = _number(p, "reference.dt", rraw.get("dt", 0.01), positive=True)
        rt = _number(p, "reference.t_end", rraw.get("t_end", 100.0), positive=True)
        if dt and rt and rt < dt:
            p.add("reference.t_end", "must be at least dt")
        if rmodel is not None and y0 is not None and dt and rt:
            ref = ReferenceSpec(rmodel, y0, dt, rt)
        if model is not None and rmodel is not None and rmodel.m != model.m:
            p.add("reference.model", f"has {rmodel.m} tasks, model has {model.m}")

    m = model.m if model is not None else None
    kwargs = {}
    if "name" in raw:
        kwargs["name"] = str(raw["name"])
    kwargs["trials"] = _int(p, "trials", raw.get("trials", 1), minimum=1)
    seed = _int(p, "seed", raw.get("seed", 0), minimum=0)
    if seed is not None and seed >= 1 << 64:
        p.add("seed", "must fit in 64 bits")
    kwargs["seed"] = seed
    t_default = ref.t_end if ref is not None else 100.0
    kwargs["t_end"] = _number(p, "t_end", raw.get("t_end", t_default), positive=True)
    if ref is not None and kwargs["t_end"] and kwargs["t_end"] > ref.t_end:
        p.add("t_end", f"exceeds reference.t_end={ref.t_end}")

    craw = raw.get("control", {}) or {}
    if not isinstance(craw, dict):
        p.add("control", "expected a mapping")
    else:
        _unknown(p, "control", craw, {"enabled", "alpha"})
        enabled = craw.get("enabled", False)
        if not isinstance(enabled, bool):
            p.add("control.enabled", "expected true or false")
        elif enabled:
            if "alpha" not in craw:
                p.add("control.alpha", "required when control is enabled")
            elif m is not None:
                kwargs["alpha"] = _alpha(p, "control.alpha", craw["alpha"], m)

    if "counts0" in raw:
        c = raw["counts0"]
        if (not isinstance(c, (list, tuple)) or (m is not None and len(c) != m)
                or not all(isinstance(x, int) and not isinstance(x, bool) and x >= 0 for x in c)):
            p.add("counts0", f"expected {m} nonnegative integers")
        else:
            kwargs["counts0"] = tuple(c)
            if sum(c) == 0:
                p.add("counts0", "needs at least one robot")
    if "fractions0" in raw and m is not None:
        f0 = _vector(p, "fractions0", raw["fractions0"], m)
        if f0 is not None and abs(sum(f0) - 1.0) > 1e-9:
            p.add("fractions0", f"must sum to 1, sums to {sum(f0)}")
        kwargs["fractions0"] = f0
    if fidelity in ("ssa", "micro") and "counts0" not in raw:
        p.add("counts0", f"required for fidelity {fidelity}")

    sraw = raw.get("ssa", {}) or {}
    _unknown(p, "ssa", sraw, {"max_events", "guard"})
    kwargs["max_events"] = _int(p, "ssa.max_events", sraw.get("max_events", 10_000_000), 1)
    guard = sraw.get("guard", True)
    if not isinstance(guard, bool):
        p.add("ssa.guard", "expected true or false")
    kwargs["guard"] = bool(guard)
    if guard and kwargs.get("counts0") and min(kwargs["counts0"]) < 1:
        p.add("counts0", "extinction guard needs every task to start with at least one robot")

    mraw = raw.get("micro", {}) or {}
    mfields = MicroSettings.__dataclass_fields__
    _unknown(p, "micro", mraw, set(mfields) | {"guard"})
    ms = {}
    if "arena" in mraw:
        a = mraw["arena"]
        if not isinstance(a, (list, tuple)) or len(a) != 2:
            p.add("micro.arena", "expected [width, height]")
        else:
            ms["arena"] = tuple(_number(p, f"micro.arena[{i}]", x, positive=True) for i, x in enumerate(a))
    for key in ("speed", "dt"):
        if key in mraw:
            ms[key] = _number(p, f"micro.{key}", mraw[key], nonneg=key == "speed", positive=key == "dt")
    for key in ("sensing_radius", "relative_speed"):
        if key in mraw:
            ms[key] = _number(p, f"micro.{key}", mraw[key], positive=True, allow_none=True)
    choices = {
        "estimation": ("centralized", "distributed"),
        "boundary": ("rotate", "specular"),
        "neighbor_search": ("auto", "grid", "brute"),
    }
    for key, allowed in choices.items():
        if key in mraw:
            if mraw[key] not in allowed:
                p.add(f"micro.{key}", f"must be one of {allowed}")
            ms[key] = mraw[key]
    if "record_every" in mraw:
        ms["record_every"] = _int(p, "micro.record_every", mraw["record_every"], 1)
    if ms.get("estimation") == "distributed" and not ms.get("sensing_radius"):
        p.add("micro.sensing_radius", "required for distributed estimation")
    if "guard" in mraw:
        if not isinstance(mraw["guard"], bool):
            p.add("micro.guard", "expected true or false")
        kwargs["guard"] = kwargs["guard"] and bool(mraw["guard"])
    kwargs["micro"] = MicroSettings(**ms)

    oraw = raw.get("output", {}) or {}
    _unknown(p, "output", oraw, {"format", "events", "snapshots"})
    fmt = oraw.get("format", "csv")
    if fmt not in ("csv", "json"):
        p.add("output.format", "must be csv or json")
    kwargs["fmt"] = fmt
    kwargs["write_events"] = bool(oraw.get("events", True))
    if oraw.get("snapshots") is not None:
        kwargs["snapshot_every"] = _int(p, "output.snapshots", oraw["snapshots"], 1)

    if p:
        raise ConfigError(p)
    return ExperimentConfig(fidelity=fidelity, model=model, reference=ref, **kwargs)


def load_config(source) -> ExperimentConfig:
    """Parse a YAML file path, a YAML string, or an already-loaded mapping."""
    if isinstance(source, dict):
        return parse_config(source)
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([(str(source), f"cannot read: {exc.strerror}")]) from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([(str(source), f"not valid YAML: {exc}")]) from exc
    return parse_config(raw)


def preset_names() -> list[str]:
    files = resources.files("replicator_swarm").joinpath("presets").iterdir()
    return sorted(f.name[:-5] for f in files if f.name.endswith(".yaml"))


def preset_raw(name: str) -> dict:
    res = resources.files("replicator_swarm").joinpath("presets", f"{name}.yaml")
    if not res.is_file():
        raise ConfigError([("preset", f"unknown preset {name!r}; known: {', '.join(preset_names())}")])
    return yaml.safe_load(res.read_text())


def load_preset(name: str) -> ExperimentConfig:
    return parse_config(preset_raw(name))
