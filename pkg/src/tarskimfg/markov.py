"""Finite-state, discrete-time mean field games with open-loop controls.

States are ``0, ..., d-1`` (state ``i`` here is state ``i+1`` in the usual
1-based notation) and probability vectors are row vectors ordered by

    mu <= nu  iff  sum_{i<=l} mu_i >= sum_{i<=l} nu_i  for every l,

i.e. the usual stochastic order once state ``i`` sits at the real point
``i + 1``.  A control path ``u = (u_0, ..., u_{T-1})`` drives the law
``mu_{t+1} = mu_t A(u_t)``; the representative player minimises

    J(u, m) = sum_t sum_i f(t, i, m_t, u_t) mu^u_{t,i} + sum_i g(i, m_T) mu^u_{T,i}

against a mean-field flow ``m``.  Best responses are found by exhaustive
search over the control grid, or by a forward search over the reachable
laws when the number of paths is too large.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .engine import GameInterface
from .errors import ResourceError, ShapeError, StructuralAssumptionViolation
from .stochorder import MeasureFlow, SurvivalMeasure, default_weights, strict_functional

logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-10
EPS_J = 1e-10
FLOW_TOL = 1e-12
PATH_BUDGET = 200_000
STATE_BUDGET = 200_000


def check_prob_vector(v, tol: float = SIMPLEX_TOL) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size < 1 or np.any(v < -tol) or abs(v.sum() - 1.0) > tol:
        raise ValueError(f"not a probability vector: {v}")
    return v


def _partial_sums(v: np.ndarray) -> np.ndarray:
    return np.cumsum(v, axis=-1)


def vec_leq(mu, nu, tol: float = FLOW_TOL) -> bool:
    mu, nu = np.asarray(mu, float), np.asarray(nu, float)
    if mu.shape != nu.shape:
        raise ShapeError("probability vectors of different dimension")
    return bool(np.all(_partial_sums(mu) >= _partial_sums(nu) - tol))


def _from_partial_sums(cs: np.ndarray) -> np.ndarray:
    return np.diff(cs, prepend=0.0, axis=-1)


def vec_meet(mu, nu) -> np.ndarray:
    """Greatest lower bound: partial sums are the pointwise max of the inputs'."""
    mu, nu = np.asarray(mu, float), np.asarray(nu, float)
    if mu.shape != nu.shape:
        raise ShapeError("probability vectors of different dimension")
    return _from_partial_sums(np.maximum(_partial_sums(mu), _partial_sums(nu)))


def vec_join(mu, nu) -> np.ndarray:
    """Least upper bound: partial sums are the pointwise min of the inputs'."""
    mu, nu = np.asarray(mu, float), np.asarray(nu, float)
    if mu.shape != nu.shape:
        raise ShapeError("probability vectors of different dimension")
    return _from_partial_sums(np.minimum(_partial_sums(mu), _partial_sums(nu)))


def flow_vec_leq(a: np.ndarray, b: np.ndarray, tol: float = FLOW_TOL) -> bool:
    return bool(np.all(_partial_sums(a) >= _partial_sums(b) - tol))


# ---------------------------------------------------------------------------
# model data


@dataclass(frozen=True, eq=False)
class TransitionFamily:
    control_grid: tuple
    matrices: np.ndarray
    matrix_fn: Callable[[float], np.ndarray] | None = None
    two_state: tuple | None = None  # (p, q) for the built-in two-state family

    def __post_init__(self):
        grid = tuple(float(g) for g in self.control_grid)
        mats = np.asarray(self.matrices, dtype=float)
        if mats.ndim != 3 or mats.shape[0] != len(grid) or mats.shape[1] != mats.shape[2]:
            raise ShapeError("matrices must have shape (len(control_grid), d, d)")
        if len(set(grid)) != len(grid):
            raise ValueError("control grid has repeated values")
        if np.any(mats < -SIMPLEX_TOL) or np.any(np.abs(mats.sum(axis=2) - 1.0) > SIMPLEX_TOL):
            raise ValueError("every transition matrix must be row-stochastic")
        object.__setattr__(self, "control_grid", grid)
        object.__setattr__(self, "matrices", mats)

    @property
    def d(self) -> int:
        return self.matrices.shape[1]

    @property
    def size(self) -> int:
        return len(self.control_grid)

    def index(self, gamma: float) -> int:
        for k, g in enumerate(self.control_grid):
            if abs(g - gamma) <= 1e-12:
                return k
        raise KeyError(f"control {gamma} is not on the grid")

    def matrix(self, gamma: float) -> np.ndarray:
        if self.matrix_fn is not None:
            return np.asarray(self.matrix_fn(gamma), dtype=float)
        return self.matrices[self.index(gamma)]

    @classmethod
    def from_matrices(cls, control_grid: Sequence[float], matrices) -> TransitionFamily:
        return cls(tuple(control_grid), np.asarray(matrices, dtype=float))

    @classmethod
    def two_state_family(cls, p: float, q: float, control_grid: Sequence[float]) -> TransitionFamily:
        if not (0 < p <= q <= 1):
            raise ValueError("the two-state family needs 0 < p <= q <= 1")

        def A(gamma: float) -> np.ndarray:
            if not (-1e-12 <= gamma <= 1 + 1e-12):
                raise ValueError("controls of the two-state family lie in [0, 1]")
            return np.array([[1 - p * gamma, p * gamma], [1 - q * gamma, q * gamma]])

        grid = tuple(float(g) for g in control_grid)
        return cls(grid, np.array([A(g) for g in grid]), A, (float(p), float(q)))


def uniform_grid(n: int = 11) -> tuple:
    return tuple(float(x) for x in np.linspace(0.0, 1.0, n))


class AffinePsi:
    """``psi(x) = slope * x + intercept``."""

    def __init__(self, slope: float = 1.0, intercept: float = 0.0):
        self.slope = float(slope)
        self.intercept = float(intercept)

    def __call__(self, x: float) -> float:
        return self.slope * x + self.intercept

    @property
    def nondecreasing(self) -> bool:
        return self.slope >= 0

    def to_json(self):
        return {"type": "affine", "slope": self.slope, "intercept": self.intercept}


class TablePsi:
    """Tabulated ``psi`` on ``[0, 1]``, linearly interpolated or right-continuous steps."""

    def __init__(self, xs: Sequence[float], ys: Sequence[float], kind: str = "linear"):
        self.xs = np.asarray(xs, dtype=float)
        self.ys = np.asarray(ys, dtype=float)
        if self.xs.shape != self.ys.shape or self.xs.size == 0 or np.any(np.diff(self.xs) <= 0):
            raise ValueError("table needs strictly increasing abscissae and matching values")
        if kind not in ("linear", "step"):
            raise ValueError("kind must be 'linear' or 'step'")
        self.kind = kind

    def __call__(self, x: float) -> float:
        if self.kind == "linear":
            return float(np.interp(x, self.xs, self.ys))
        k = int(np.searchsorted(self.xs, x, side="right")) - 1
        return float(self.ys[max(k, 0)])

    @property
    def nondecreasing(self) -> bool:
        return bool(np.all(np.diff(self.ys) >= 0))

    def to_json(self):
        return {"type": "table", "x": self.xs.tolist(), "y": self.ys.tolist(), "kind": self.kind}


def _zero_f(t, i, mu, gamma):
    return 0.0


@dataclass(frozen=True, eq=False)
class MarkovCosts:
    f: Callable
    g: Callable
    phi: tuple | None = None
    psi: Callable | None = None
    name: str = "custom"

    @classmethod
    def two_state(cls, phi: Sequence[float] = (1.0, 0.0), psi=None) -> MarkovCosts:
        """Zero running cost and terminal cost ``g(i, m) = phi[i] * psi(m_2)``."""
        phi = tuple(float(x) for x in phi)
        if len(phi) != 2 or not phi[1] < phi[0]:
            raise ValueError("two-state costs need phi(2) < phi(1)")
        psi = psi if psi is not None else AffinePsi(1.0, -0.4)

        def g(i, mu):
            return phi[i] * psi(float(mu[1]))

        return cls(_zero_f, g, phi, psi, "two_state")

    @classmethod
    def tabulated(cls, control_grid: Sequence[float], f_table, g_base, g_coupling=None) -> MarkovCosts:
        """``f(t, i, m, gamma_k) = f_table[t][i][k]`` and ``g(i, m) = g_base[i] + (G m)_i``."""
        grid = tuple(float(x) for x in control_grid)
        F = np.asarray(f_table, dtype=float)
        g0 = np.asarray(g_base, dtype=float)
        G = np.zeros((g0.size, g0.size)) if g_coupling is None else np.asarray(g_coupling, dtype=float)
        if F.ndim != 3 or F.shape[2] != len(grid) or F.shape[1] != g0.size or G.shape != (g0.size, g0.size):
            raise ShapeError("tabulated cost arrays have inconsistent shapes")

        def f(t, i, mu, gamma):
            k = min(range(len(grid)), key=lambda j: abs(grid[j] - gamma))
            return float(F[t, i, k])

        def g(i, mu):
            return float(g0[i] + G[i] @ np.asarray(mu, float))

        return cls(f, g, name="tabulated")

    @classmethod
    def zero(cls) -> MarkovCosts:
        return cls(_zero_f, lambda i, mu: 0.0, name="zero")


@dataclass(eq=False)
class MarkovModel:
    eta: np.ndarray
    horizon: int
    family: TransitionFamily
    costs: MarkovCosts
    eps_J: float = EPS_J
    path_budget: int = PATH_BUDGET
    state_budget: int = STATE_BUDGET
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.eta = check_prob_vector(self.eta)
        if self.eta.size != self.family.d:
            raise ShapeError("initial law and transition matrices disagree on d")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")

    @property
    def d(self) -> int:
        return self.family.d

    @property
    def n_paths(self) -> int:
        return self.family.size ** self.horizon

    def controls(self, index_path) -> tuple:
        return tuple(self.family.control_grid[k] for k in index_path)

    def all_paths(self) -> tuple[np.ndarray, np.ndarray]:
        """Every grid control path (as grid indices, lexicographic) and its flow."""
        if "paths" not in self._cache:
            if self.n_paths > self.path_budget:
                raise ResourceError(
                    f"{self.n_paths} control paths exceed the enumeration budget of {self.path_budget}"
                )
            idx = np.array(list(itertools.product(range(self.family.size), repeat=self.horizon)), dtype=np.int64)
            idx = idx.reshape(-1, self.horizon)
            flows = np.empty((idx.shape[0], self.horizon + 1, self.d))
            flows[:, 0] = self.eta
            A = self.family.matrices
            for t in range(self.horizon):
                flows[:, t + 1] = np.einsum("pi,pij->pj", flows[:, t], A[idx[:, t]])
            self._cache["paths"] = (idx, flows)
        return self._cache["paths"]


def two_state_benchmark(control_grid: Sequence[float] | None = None, horizon: int = 3,
                        p: float = 0.8, q: float = 0.8, phi=(1.0, 0.0), psi=None) -> MarkovModel:
    grid = uniform_grid(11) if control_grid is None else control_grid
    return MarkovModel(
        np.array([1.0, 0.0]),
        horizon,
        TransitionFamily.two_state_family(p, q, grid),
        MarkovCosts.two_state(phi, psi if psi is not None else AffinePsi(1.0, -0.4)),
    )


# ---------------------------------------------------------------------------
# dynamics and costs


def propagate(eta, family: TransitionFamily, u: Sequence[float]) -> np.ndarray:
    """Laws ``mu_0, ..., mu_T`` of the chain under the open-loop path ``u``."""
    mu = np.empty((len(u) + 1, family.d))
    mu[0] = check_prob_vector(eta)
    for t, gamma in enumerate(u):
        mu[t + 1] = mu[t] @ family.matrix(gamma)
    return mu


def _check_mean_field(model: MarkovModel, mean_field) -> np.ndarray:
    m = np.asarray(mean_field, dtype=float)
    if m.shape != (model.horizon + 1, model.d):
        raise ShapeError(f"mean field must have shape {(model.horizon + 1, model.d)}, got {m.shape}")
    return m


def cost(model: MarkovModel, u: Sequence[float], mean_field, flow: np.ndarray | None = None) -> float:
    m = _check_mean_field(model, mean_field)
    if len(u) != model.horizon:
        raise ShapeError("control path length differs from the horizon")
    mu = propagate(model.eta, model.family, u) if flow is None else flow
    f, g = model.costs.f, model.costs.g
    total = 0.0
    for t in range(model.horizon):
        total += sum(f(t, i, m[t], u[t]) * mu[t, i] for i in range(model.d))
    total += sum(g(i, m[-1]) * mu[-1, i] for i in range(model.d))
    return float(total)


def _cost_tables(model: MarkovModel, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    f, g, grid = model.costs.f, model.costs.g, model.family.control_grid
    F = np.array([[[f(t, i, m[t], gamma) for gamma in grid] for i in range(model.d)] for t in range(model.horizon)])
    G = np.array([g(i, m[-1]) for i in range(model.d)])
    return F.reshape(model.horizon, model.d, len(grid)), G


def path_costs(model: MarkovModel, mean_field) -> np.ndarray:
    """``J`` of every grid path (lexicographic order) against ``mean_field``."""
    m = _check_mean_field(model, mean_field)
    idx, flows = model.all_paths()
    F, G = _cost_tables(model, m)
    J = flows[:, -1] @ G
    for t in range(model.horizon):
        J = J + np.einsum("pi,ip->p", flows[:, t], F[t][:, idx[:, t]])
    return J


# ---------------------------------------------------------------------------
# best responses


@dataclass
class BestResponse:
    controls: tuple
    flow: np.ndarray
    cost: float


def _dp_minimizers(model: MarkovModel, m: np.ndarray, resolution: float) -> list[BestResponse]:
    """Forward search over reachable laws; states closer than ``resolution`` are merged."""
    F, G = _cost_tables(model, m)
    A = model.family.matrices
    key = lambda v: tuple(np.round(v / resolution).astype(np.int64))
    layers = [{key(model.eta): {"vec": model.eta, "cost": 0.0, "preds": []}}]
    for t in range(model.horizon):
        nxt: dict = {}
        for k_prev, node in layers[-1].items():
            for k in range(model.family.size):
                vec = node["vec"] @ A[k]
                c = node["cost"] + float(node["vec"] @ F[t, :, k])
                kk = key(vec)
                entry = nxt.get(kk)
                if entry is None or c < entry["cost"] - model.eps_J:
                    nxt[kk] = {"vec": vec, "cost": c, "preds": [(k_prev, k)]}
                elif c <= entry["cost"] + model.eps_J:
                    entry["preds"].append((k_prev, k))
        if len(nxt) > model.state_budget:
            raise ResourceError(f"{len(nxt)} reachable laws at t={t + 1} exceed the state budget")
        layers.append(nxt)
    finals = {k: n["cost"] + float(n["vec"] @ G) for k, n in layers[-1].items()}
    best = min(finals.values())
    out: list[BestResponse] = []

    def walk(t, k, vecs, ctrls, total):
        if len(out) > model.path_budget:
            raise ResourceError("number of optimal flows exceeds the path budget")
        node = layers[t][k]
        vecs = [node["vec"]] + vecs
        if t == 0:
            out.append(BestResponse(model.controls(ctrls), np.array(vecs), total))
            return
        seen = set()
        for k_prev, c in node["preds"]:
            if k_prev not in seen:
                seen.add(k_prev)
                walk(t - 1, k_prev, vecs, [c] + ctrls, total)

    for k, total in sorted(finals.items()):
        if total <= best + model.eps_J:
            walk(model.horizon, k, [], [], total)
    return out


def best_response_set(model: MarkovModel, mean_field, method: str = "auto",
                      resolution: float = 1e-12) -> list[BestResponse]:
    """All control paths within ``eps_J`` of the minimal cost, with their flows.

    ``exhaustive`` returns every minimising grid path; ``dp`` returns one
    representative path per distinct minimising flow.  ``auto`` picks
    exhaustive search whenever the path count fits the budget.
    """
    m = _check_mean_field(model, mean_field)
    if method == "auto":
        method = "exhaustive" if model.n_paths <= model.path_budget else "dp"
    if method == "dp":
        return _dp_minimizers(model, m, resolution)
    if method != "exhaustive":
        raise ValueError(f"unknown method {method!r}")
    idx, flows = model.all_paths()
    J = path_costs(model, m)
    best = J.min()
    return [BestResponse(model.controls(idx[p]), flows[p], float(J[p]))
            for p in np.flatnonzero(J <= best + model.eps_J)]


def _extremal(model: MarkovModel, mean_field, lower: bool, method: str) -> np.ndarray:
    responses = best_response_set(model, mean_field, method)
    flows = np.array([r.flow for r in responses])
    cs = _partial_sums(flows)
    target = cs.max(axis=0) if lower else cs.min(axis=0)
    hit = np.flatnonzero(np.all(np.abs(cs - target) <= FLOW_TOL, axis=(1, 2)))
    if hit.size == 0:
        which = "meet" if lower else "join"
        raise StructuralAssumptionViolation(
            f"the cellwise {which} of the optimal flows is not induced by any optimal control; "
            "the control set does not map onto a lattice of flows",
            invariant="best_response_attainment",
        )
    return flows[hit[0]].copy()


def best_response_inf(model: MarkovModel, mean_field, method: str = "auto") -> np.ndarray:
    return _extremal(model, mean_field, True, method)


def best_response_sup(model: MarkovModel, mean_field, method: str = "auto") -> np.ndarray:
    return _extremal(model, mean_field, False, method)


def _flow_key(flow: np.ndarray) -> bytes:
    return np.round(flow, 12).tobytes()


def enumerate_equilibria(model: MarkovModel) -> list[np.ndarray]:
    """Every grid-induced flow ``m`` whose own control path is optimal against ``m``.

    Sorted by the strictly increasing functional, so the first entry is the
    least equilibrium whenever one exists.
    """
    idx, flows = model.all_paths()
    groups: dict[bytes, list[int]] = {}
    for p in range(idx.shape[0]):
        groups.setdefault(_flow_key(flows[p]), []).append(p)
    found = []
    for members in groups.values():
        m = flows[members[0]]
        J = path_costs(model, m)
        if J[members].min() <= J.min() + model.eps_J:
            found.append(m.copy())
    found.sort(key=lambda f: strict_functional(as_measure_flow(f)))
    return found


# ---------------------------------------------------------------------------
# embedding into measure flows and the engine


def as_measure_flow(flow: np.ndarray) -> MeasureFlow:
    """Place state ``i`` at the real point ``i + 1``."""
    flow = np.asarray(flow, dtype=float)
    points = np.arange(1, flow.shape[1] + 1, dtype=float)
    return MeasureFlow.over_times([SurvivalMeasure.from_atoms(points, row) for row in flow])


def from_measure_flow(mf: MeasureFlow, d: int) -> np.ndarray:
    out = np.zeros((len(mf), d))
    for t, mu in enumerate(mf.measures):
        for x, w in mu.atoms():
            k = int(round(x)) - 1
            if not 0 <= k < d or abs(x - (k + 1)) > 1e-9:
                raise ShapeError(f"atom at {x} is not a state of a {d}-state chain")
            out[t, k] += w
    return out


def bottom_flow(model: MarkovModel) -> np.ndarray:
    out = np.zeros((model.horizon + 1, model.d))
    out[0] = model.eta
    out[1:, 0] = 1.0
    return out


def top_flow(model: MarkovModel) -> np.ndarray:
    out = np.zeros((model.horizon + 1, model.d))
    out[0] = model.eta
    out[1:, -1] = 1.0
    return out


def markov_game(model: MarkovModel, method: str = "auto") -> GameInterface:
    d = model.d
    return GameInterface(
        bottom=as_measure_flow(bottom_flow(model)),
        top=as_measure_flow(top_flow(model)),
        best_response_inf=lambda mf: as_measure_flow(best_response_inf(model, from_measure_flow(mf, d), method)),
        best_response_sup=lambda mf: as_measure_flow(best_response_sup(model, from_measure_flow(mf, d), method)),
        max_iter=10 * model.family.size * model.horizon,
    )


def best_response_flows(model: MarkovModel, method: str = "auto") -> Callable[[MeasureFlow], list[MeasureFlow]]:
    """The full best-response set as measure flows, for the directedness probe."""
    def flows(mf: MeasureFlow) -> list[MeasureFlow]:
        responses = best_response_set(model, from_measure_flow(mf, model.d), method)
        distinct = {}
        for r in responses:
            distinct.setdefault(_flow_key(r.flow), r.flow)
        return [as_measure_flow(f) for f in distinct.values()]
    return flows


# ---------------------------------------------------------------------------
# two-state control lattice


def _two_state_extremal_control(model: MarkovModel, u, v, lower: bool) -> tuple:
    if model.family.two_state is None:
        raise ValueError("control meet/join is only constructed for the two-state family")
    p, q = model.family.two_state
    xu = propagate(model.eta, model.family, u)[:, 1]
    xv = propagate(model.eta, model.family, v)[:, 1]
    pick = np.minimum if lower else np.maximum
    target = pick(xu, xv)
    # choose w_t so that the state-2 mass at t+1 hits the target given mass target[t]
    w = target[1:] / (p + target[:-1] * (q - p))
    return tuple(float(x) for x in np.clip(w, 0.0, 1.0))


def two_state_control_meet(model: MarkovModel, u, v) -> tuple:
    """Control path whose flow is the cellwise meet of the flows of ``u`` and ``v``."""
    return _two_state_extremal_control(model, u, v, True)


def two_state_control_join(model: MarkovModel, u, v) -> tuple:
    return _two_state_extremal_control(model, u, v, False)


def random_flow(model: MarkovModel, rng: np.random.Generator) -> np.ndarray:
    out = np.empty((model.horizon + 1, model.d))
    out[0] = model.eta
    out[1:] = rng.dirichlet(np.ones(model.d), size=model.horizon)
    return out


def submodularity_samples(model: MarkovModel, rng: np.random.Generator, n: int) -> list[tuple]:
    """Random ``(u, u_bar, m, m_bar)`` with continuous controls and ``m <= m_bar``."""
    samples = []
    for _ in range(n):
        u = tuple(rng.uniform(0, 1, model.horizon))
        v = tuple(rng.uniform(0, 1, model.horizon))
        a, b = random_flow(model, rng), random_flow(model, rng)
        lo = np.array([vec_meet(x, y) for x, y in zip(a, b)])
        hi = np.array([vec_join(x, y) for x, y in zip(a, b)])
        samples.append((u, v, lo, hi))
    return samples


def markov_submodularity_probe(model: MarkovModel, rng: np.random.Generator, n: int = 200):
    from .engine import submodularity_probe

    return submodularity_probe(
        lambda u, m: cost(model, u, m),
        lambda u, v: two_state_control_meet(model, u, v),
        lambda u, v: two_state_control_join(model, u, v),
        submodularity_samples(model, rng, n),
    )


def interchange_probe(model: MarkovModel, mean_field, pairs: Sequence[tuple], tol: float = 1e-10) -> dict:
    """Check ``J(u ^ v) , J(u v v)`` against ``min/max`` of ``J(u), J(v)`` on sampled pairs.

    Either ``J(u^v) = min, J(uvv) = max`` on every pair or the reverse must
    hold.  The control meet/join is built in closed form for the two-state
    family; otherwise a grid path inducing the flow meet/join is searched for
    and pairs without one are reported as unattained.
    """
    m = _check_mean_field(model, mean_field)
    first = second = True
    unattained = 0
    for u, v in pairs:
        if model.family.two_state is not None:
            lo, hi = two_state_control_meet(model, u, v), two_state_control_join(model, u, v)
        else:
            lo, hi = _grid_extremal_paths(model, u, v)
            if lo is None or hi is None:
                unattained += 1
                continue
        ju, jv = cost(model, u, m), cost(model, v, m)
        jl, jh = cost(model, lo, m), cost(model, hi, m)
        first &= abs(jl - min(ju, jv)) <= tol and abs(jh - max(ju, jv)) <= tol
        second &= abs(jl - max(ju, jv)) <= tol and abs(jh - min(ju, jv)) <= tol
    return {"checked": len(pairs), "unattained": unattained, "inf_case": bool(first),
            "sup_case": bool(second), "passed": bool(first or second) and unattained == 0}


def _grid_extremal_paths(model: MarkovModel, u, v):
    idx, flows = model.all_paths()
    fu = propagate(model.eta, model.family, u)
    fv = propagate(model.eta, model.family, v)
    lo = np.array([vec_meet(a, b) for a, b in zip(fu, fv)])
    hi = np.array([vec_join(a, b) for a, b in zip(fu, fv)])
    found = []
    for target in (lo, hi):
        hit = np.flatnonzero(np.all(np.abs(flows - target) <= 1e-12, axis=(1, 2)))
        found.append(model.controls(idx[hit[0]]) if hit.size else None)
    return found
