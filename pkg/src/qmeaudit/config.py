"""Experiment configuration: loading, validation and canonical hashing."""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baths import BathSpec, PvQuadrature, SpectralFunction
from .errors import ConfigError
from .generators import KINDS
from .operators import build_xxz

DEFAULT_ANISOTROPY = 0.75
WEAK_COUPLING_LIMIT = 0.5
SWEEP_VARIABLES = ("g", "epsilon")

DEFAULT_TOLERANCES = {
    "match": 1e-10,
    "conservation": 1e-12,
    "cp": 1e-10,
    "ele_bond_zero": 1e-12,
    "thermal_slope_min": 1.7,
    "thermal_zero": 1e-8,
}


def _require(block, key, path):
    if not isinstance(block, dict):
        raise ConfigError(path, "expected an object")
    if key not in block:
        raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
    return block[key]


def _number(value, path, positive=False, negative=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    if positive and not value > 0:
        raise ConfigError(path, "must be positive")
    if negative and not value < 0:
        raise ConfigError(path, "must be negative")
    return value


def _grid(spec, path):
    """A list of numbers or ``{"start", "stop", "num", "spacing"}``."""
    if isinstance(spec, list):
        values = [_number(v, f"{path}[{i}]") for i, v in enumerate(spec)]
    elif isinstance(spec, dict):
        start = _number(_require(spec, "start", path), f"{path}.start")
        stop = _number(_require(spec, "stop", path), f"{path}.stop")
        num = _require(spec, "num", path)
        if isinstance(num, bool) or not isinstance(num, int) or num < 1:
            raise ConfigError(f"{path}.num", "must be a positive integer")
        spacing = spec.get("spacing", "linear")
        if spacing == "log":
            if start <= 0 or stop <= 0:
                raise ConfigError(path, "log spacing needs positive bounds")
            values = np.geomspace(start, stop, num).tolist()
        elif spacing == "linear":
            values = np.linspace(start, stop, num).tolist()
        else:
            raise ConfigError(f"{path}.spacing", f"unknown spacing {spacing!r}")
    else:
        raise ConfigError(path, "expected a list or a range object")
    if not values:
        raise ConfigError(path, "grid is empty")
    return values


@dataclass(frozen=True)
class SweepConfig:
    variable: str
    grid: tuple


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description. ``raw`` is the canonical JSON tree."""

    name: str
    n_sites: int
    fields: tuple
    g: float
    anisotropy: float
    baths: tuple
    qme: tuple
    epsilon: float
    sweep: SweepConfig | None
    quadrature: PvQuadrature
    tolerances: dict
    seed: int
    evolve: dict
    expected: dict | None
    raw: dict = field(repr=False)

    @property
    def equilibrium(self):
        return len({(b.beta, b.mu) for b in self.baths}) == 1

    @property
    def weak_coupling_warning(self):
        eps = [self.epsilon]
        if self.sweep is not None and self.sweep.variable == "epsilon":
            eps += list(self.sweep.grid)
        return max(eps) >= WEAK_COUPLING_LIMIT

    def system(self, g=None):
        return build_xxz(self.n_sites, self.fields, self.g if g is None else g, self.anisotropy)

    def config_hash(self):
        text = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _parse_baths(raw, n_sites):
    if not isinstance(raw, list) or not raw:
        raise ConfigError("baths", "expected a non-empty list")
    baths, labels = [], set()
    for i, b in enumerate(raw):
        path = f"baths[{i}]"
        beta = _number(_require(b, "beta", path), f"{path}.beta", positive=True)
        mu = _number(_require(b, "mu", path), f"{path}.mu", negative=True)
        cutoff = _number(b.get("cutoff", 10.0), f"{path}.cutoff", positive=True)
        amplitude = _number(b.get("amplitude", 1.0), f"{path}.amplitude")
        if amplitude < 0:
            raise ConfigError(f"{path}.amplitude", "must be non-negative")
        terminal = b.get("terminal", 1 if i == 0 else n_sites)
        if terminal not in (1, n_sites):
            raise ConfigError(f"{path}.terminal", f"must be 1 or {n_sites}")
        label = b.get("label", "LR"[i] if i < 2 else f"site{terminal}")
        if label in labels:
            raise ConfigError(f"{path}.label", f"duplicate label {label!r}")
        labels.add(label)
        if b.get("statistics", "bosonic") != "bosonic":
            raise ConfigError(f"{path}.statistics", "only bosonic baths are supported")
        baths.append(BathSpec(beta, mu, terminal, SpectralFunction(cutoff, amplitude), label=label))
    return tuple(baths)


def parse_config(tree, overrides=None):
    """Validate a JSON tree and return an :class:`ExperimentConfig`.

    ``overrides`` may set ``qme`` (list of kinds) and ``seed``; they are folded
    into the canonical tree before hashing.

    Raises:
        ConfigError: naming the offending path, e.g. ``baths[0].beta``.
    """
    tree = copy.deepcopy(tree)
    if not isinstance(tree, dict):
        raise ConfigError("", "top level must be an object")
    for key, value in (overrides or {}).items():
        if value is not None:
            tree[key] = value

    sys_block = _require(tree, "system", "")
    n_sites = _require(sys_block, "n_sites", "system")
    if isinstance(n_sites, bool) or not isinstance(n_sites, int) or n_sites < 1:
        raise ConfigError("system.n_sites", "must be a positive integer")
    fields = _require(sys_block, "fields", "system")
    if not isinstance(fields, list) or len(fields) != n_sites:
        raise ConfigError("system.fields", f"expected a list of {n_sites} numbers")
    fields = tuple(_number(w, f"system.fields[{i}]") for i, w in enumerate(fields))
    g = _number(sys_block.get("g", 0.0), "system.g")
    anisotropy = _number(sys_block.get("anisotropy", DEFAULT_ANISOTROPY), "system.anisotropy")

    baths = _parse_baths(_require(tree, "baths", ""), n_sites)

    qme = tree.get("qme", list(KINDS))
    if isinstance(qme, str):
        qme = qme.split(",")
    if not isinstance(qme, list) or not qme:
        raise ConfigError("qme", "expected a non-empty list")
    qme = tuple(str(k).strip().upper() for k in qme)
    for i, k in enumerate(qme):
        if k not in KINDS:
            raise ConfigError(f"qme[{i}]", f"unknown kind {k!r}; choose from {', '.join(KINDS)}")

    epsilon = _number(tree.get("epsilon", 0.1), "epsilon", positive=True)

    sweep = None
    if "sweep" in tree:
        block = tree["sweep"]
        variable = _require(block, "variable", "sweep")
        if variable not in SWEEP_VARIABLES:
            raise ConfigError("sweep.variable", f"must be one of {SWEEP_VARIABLES}")
        grid = _grid(_require(block, "grid", "sweep"), "sweep.grid")
        if variable == "epsilon" and min(grid) <= 0:
            raise ConfigError("sweep.grid", "epsilon values must be positive")
        sweep = SweepConfig(variable, tuple(grid))

    qblock = tree.get("quadrature", {})
    if not isinstance(qblock, dict):
        raise ConfigError("quadrature", "expected an object")
    try:
        quad = PvQuadrature(
            points=int(_number(qblock.get("points", 2000), "quadrature.points", positive=True)),
            panel_nodes=int(_number(qblock.get("panel_nodes", 50), "quadrature.panel_nodes", positive=True)),
            window=_number(qblock.get("window", 0.5), "quadrature.window", positive=True),
            rtol=_number(qblock.get("rtol", 1e-8), "quadrature.rtol", positive=True),
        )
    except ValueError as exc:
        raise ConfigError("quadrature", str(exc)) from exc

    tolerances = dict(DEFAULT_TOLERANCES)
    tblock = tree.get("tolerances", {})
    if not isinstance(tblock, dict):
        raise ConfigError("tolerances", "expected an object")
    for key, value in tblock.items():
        if key not in DEFAULT_TOLERANCES:
            raise ConfigError(f"tolerances.{key}", "unknown tolerance")
        tolerances[key] = _number(value, f"tolerances.{key}", positive=True)

    seed = tree.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", "must be a non-negative integer")

    evolve = tree.get("evolve", {})
    if not isinstance(evolve, dict):
        raise ConfigError("evolve", "expected an object")
    evolve = {
        "t_grid": tuple(_grid(evolve.get("t_grid", {"start": 0, "stop": 50, "num": 21}), "evolve.t_grid")),
        "initial": evolve.get("initial", "superposition"),
    }
    if min(evolve["t_grid"]) < 0:
        raise ConfigError("evolve.t_grid", "times must be non-negative")
    if evolve["initial"] not in ("superposition", "gibbs", "ground", "random_pure"):
        raise ConfigError("evolve.initial", f"unknown initial state {evolve['initial']!r}")

    expected = tree.get("expected")
    if expected is not None and not isinstance(expected, dict):
        raise ConfigError("expected", "expected an object")

    canonical = dict(tree)
    canonical["qme"] = list(qme)
    canonical["seed"] = seed
    return ExperimentConfig(
        name=str(tree.get("name", "experiment")), n_sites=n_sites, fields=fields, g=g,
        anisotropy=anisotropy, baths=baths, qme=qme, epsilon=epsilon, sweep=sweep,
        quadrature=quad, tolerances=tolerances, seed=seed, evolve=evolve, expected=expected,
        raw=canonical,
    )


def load_config(path, overrides=None):
    path = Path(path)
    try:
        tree = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(str(path), "file not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc}") from exc
    return parse_config(tree, overrides)
