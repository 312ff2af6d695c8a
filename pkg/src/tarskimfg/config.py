"""JSON run configurations and the model builders behind them."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import markov as mk
from . import stopping as st
from .engine import DEFAULT_TOL
from .errors import ConfigError

DIRECTIONS = {"up": ("up",), "down": ("down",), "both": ("up", "down")}
MARKOV_SUITES = ("lattice", "submodularity", "directedness", "oracle")
STOPPING_SUITES = ("lattice", "supermodularity", "f_monotonicity", "oracle")


@dataclass
class RunConfig:
    model: str
    params: dict
    tolerance: float = DEFAULT_TOL
    max_iter: int | None = None
    directions: str = "both"
    verify: bool = False
    suites: tuple | None = None
    seed: int = 0
    output: str = "."
    source: dict = field(default_factory=dict)


def _require(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


def parse_json(text: str, name: str = "<config>") -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{name}:{err.lineno}:{err.colno}: invalid JSON: {err.msg}") from None
    _require(isinstance(data, dict), f"{name}: top level must be a JSON object")
    return data


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {p}: {err.strerror}") from None
    return config_from_dict(parse_json(text, str(p)))


def config_from_dict(data: dict) -> RunConfig:
    model = data.get("model")
    _require(model in ("markov", "stopping"), "'model' must be 'markov' or 'stopping'")
    params = data.get(model, {})
    _require(isinstance(params, dict), f"'{model}' must be an object")
    tol = data.get("tolerance", DEFAULT_TOL)
    _require(isinstance(tol, (int, float)) and not isinstance(tol, bool) and tol > 0, "'tolerance' must be positive")
    max_iter = data.get("max_iter")
    _require(max_iter is None or (isinstance(max_iter, int) and max_iter > 0), "'max_iter' must be a positive integer")
    directions = data.get("directions", "both")
    _require(directions in DIRECTIONS, "'directions' must be up, down or both")
    suites = data.get("suites")
    if suites is not None:
        _require(isinstance(suites, list) and all(isinstance(s, str) for s in suites), "'suites' must be a list of names")
        suites = tuple(suites)
    seed = data.get("seed", 0)
    _require(isinstance(seed, int) and seed >= 0, "'seed' must be a nonnegative integer")
    output = data.get("output", ".")
    _require(isinstance(output, str), "'output' must be a path string")
    return RunConfig(model, params, float(tol), max_iter, directions, bool(data.get("verify", False)), suites,
                     seed, output, data)


# ---------------------------------------------------------------------------
# markov


def _grid(entry) -> tuple:
    if isinstance(entry, dict):
        n = entry.get("uniform")
        _require(isinstance(n, int) and n >= 2, "control_grid.uniform must be an integer >= 2")
        return mk.uniform_grid(n)
    _require(isinstance(entry, list) and entry, "control_grid must be a list or {\"uniform\": n}")
    return tuple(sorted({float(x) for x in entry}))


def _psi(entry):
    if entry is None:
        return mk.AffinePsi(1.0, -0.4)
    kind = entry.get("type")
    if kind == "affine":
        return mk.AffinePsi(float(entry.get("slope", 1.0)), float(entry.get("intercept", 0.0)))
    if kind == "table":
        return mk.TablePsi(entry["x"], entry["y"], entry.get("kind", "linear"))
    raise ConfigError("psi.type must be 'affine' or 'table'")


def build_markov(params: dict) -> mk.MarkovModel:
    try:
        T = params.get("T", 3)
        _require(isinstance(T, int) and T >= 1, "markov.T must be a positive integer")
        grid = _grid(params.get("control_grid", {"uniform": 11}))
        trans = params.get("transitions", {"two_state": {"p": 0.8, "q": 0.8}})
        if "two_state" in trans:
            ts = trans["two_state"]
            family = mk.TransitionFamily.two_state_family(float(ts.get("p", 0.8)), float(ts.get("q", 0.8)), grid)
        elif "matrices" in trans:
            family = mk.TransitionFamily.from_matrices(grid, trans["matrices"])
        else:
            raise ConfigError("markov.transitions needs 'two_state' or 'matrices'")
        d = params.get("d", family.d)
        _require(d == family.d, "markov.d disagrees with the transition matrices")
        costs_cfg = params.get("costs", {"two_state": {}})
        if "two_state" in costs_cfg:
            cs = costs_cfg["two_state"]
            costs = mk.MarkovCosts.two_state(cs.get("phi", (1.0, 0.0)), _psi(cs.get("psi")))
        elif "tabulated" in costs_cfg:
            cs = costs_cfg["tabulated"]
            costs = mk.MarkovCosts.tabulated(grid, cs["f"], cs["g0"], cs.get("g_coupling"))
        else:
            raise ConfigError("markov.costs needs 'two_state' or 'tabulated'")
        eta = params.get("eta", [1.0] + [0.0] * (family.d - 1))
        return mk.MarkovModel(np.asarray(eta, float), T, family, costs)
    except ConfigError:
        raise
    except (AttributeError, KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"invalid markov model: {err}") from None


# ---------------------------------------------------------------------------
# stopping


def _stopping_costs(entry: dict) -> st.StoppingCosts:
    f_cfg = entry.get("f", {"type": "mass", "scale": 0.1})
    g_cfg = entry.get("g", {"type": "positive_part", "coord": 0})
    psi_cfg = entry.get("psi", {"coord": 0})
    coord = int(psi_cfg.get("coord", 0))

    if f_cfg.get("type") == "mass":
        scale = float(f_cfg.get("scale", 0.1))
        _require(scale >= 0, "f.scale must be nonnegative")
        f = lambda t, x, m: scale * m.total_mass
    elif f_cfg.get("type") == "zero":
        f = lambda t, x, m: 0.0
    else:
        raise ConfigError("stopping f.type must be 'mass' or 'zero'")

    kind = g_cfg.get("type")
    gc = int(g_cfg.get("coord", 0))
    if kind == "positive_part":
        g = lambda t, x: max(float(x[gc]), 0.0)
    elif kind == "zero":
        g = lambda t, x: 0.0
    elif kind == "linear":
        g = lambda t, x: float(x[gc])
    else:
        raise ConfigError("stopping g.type must be 'positive_part', 'linear' or 'zero'")
    return st.StoppingCosts(f, g, lambda x: float(x[coord]), "configured")


def build_stopping(params: dict) -> tuple[st.ScenarioTree, st.StoppingCosts]:
    try:
        horizon = params.get("horizon", 3)
        _require(isinstance(horizon, int) and horizon >= 1, "stopping.horizon must be a positive integer")
        dt = float(params.get("dt", 1.0))
        _require(dt > 0, "stopping.dt must be positive")
        gen = params.get("generator", {"type": "additive"})
        if gen.get("type", "additive") == "additive":
            tree = st.additive_tree(
                horizon,
                idio_steps=tuple(gen.get("idio_steps", (1.0, -1.0))),
                idio_probs=tuple(gen.get("idio_probs", (0.5, 0.5))),
                common_steps=tuple(gen.get("common_steps", (1.0, -1.0))),
                common_probs=tuple(gen.get("common_probs", (0.5, 0.5))),
                z_common_loading=float(gen.get("z_common_loading", 0.0)),
                x0=tuple(gen.get("x0", (0.0, 0.0))),
                dt=dt,
            )
        elif gen.get("type") == "path":
            tree = st.single_path_tree(gen["values"], dt)
            _require(tree.horizon == horizon, "path generator length disagrees with the horizon")
        else:
            raise ConfigError("stopping.generator.type must be 'additive' or 'path'")
        return tree, _stopping_costs(params.get("costs", {}))
    except ConfigError:
        raise
    except (AttributeError, KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"invalid stopping model: {err}") from None


def default_suites(model: str) -> tuple:
    return MARKOV_SUITES if model == "markov" else STOPPING_SUITES


def resolve_suites(cfg: RunConfig, override: str | None) -> tuple:
    known = default_suites(cfg.model)
    if override is not None:
        names = tuple(s.strip() for s in override.split(",") if s.strip())
    elif cfg.suites is not None:
        names = cfg.suites
    else:
        names = known
    _require(len(names) > 0, "empty verification suite selection")
    unknown = [s for s in names if s not in known]
    _require(not unknown, f"unknown suites {unknown}; choose from {list(known)}")
    return names


def as_jsonable(x: Any):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    raise TypeError(f"not serializable: {type(x)}")
