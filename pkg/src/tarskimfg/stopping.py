"""Mean field games of optimal stopping with common noise on finite scenario trees.

A scenario tree carries two independent sources of branching: a common-noise
tree (nodes ``c`` at each time) and, inside every common path, idiosyncratic
branches.  A *full node* at time ``t`` is a pair (common node, idiosyncratic
path); it stores the state ``X_t = (Z_t, B_t)``, its parent full node and the
conditional probability of its idiosyncratic path given the common path.

A stopping rule flags full nodes; the player stops at the first flagged node
on its path and always stops at the horizon.  For a mean-field flow ``m``
(one sub-probability measure per time and common node) the profit of a rule is

    E[ sum_{t < tau} f(t, X_t, m_t) dt + g(tau, X_tau) ],

and its projection is the flow of conditional laws of ``psi(X_t)`` on
``{t < tau}`` given the common node.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .engine import GameInterface, IterateChain, learn
from .stochorder import (
    EPS,
    MeasureFlow,
    SurvivalMeasure,
    default_weights,
    flow_join,
    flow_leq,
    flow_meet,
)

logger = logging.getLogger(__name__)

PROB_TOL = 1e-12
TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ScenarioTree:
    horizon: int
    common_parent: tuple   # per t: parent common index at t-1 (-1 at the root)
    common_prob: tuple     # per t: unconditional probability of each common node
    node_common: tuple     # per t: common node of each full node
    node_parent: tuple     # per t: parent full node at t-1 (-1 at the root)
    node_idio_prob: tuple  # per t: probability of the idiosyncratic path given the common path
    states: tuple          # per t: array (n_t, dim) of X_t
    dt: float = 1.0

    def __post_init__(self):
        T = self.horizon
        fields = ("common_parent", "common_prob", "node_common", "node_parent", "node_idio_prob", "states")
        for name in fields:
            val = tuple(np.asarray(a) for a in getattr(self, name))
            if len(val) != T + 1:
                raise ValueError(f"{name} must have one entry per time 0..{T}")
            object.__setattr__(self, name, val)
        object.__setattr__(self, "states", tuple(np.atleast_2d(np.asarray(s, float)) for s in self.states))
        self._validate()

    def _validate(self):
        if self.common_prob[0].size != 1 or self.node_common[0].size != 1:
            raise ValueError("the tree must have a single root")
        for t in range(self.horizon + 1):
            n = self.node_common[t].size
            if self.node_parent[t].size != n or self.node_idio_prob[t].size != n or self.states[t].shape[0] != n:
                raise ValueError(f"inconsistent node arrays at t={t}")
            if np.any(self.common_prob[t] < 0) or np.any(self.node_idio_prob[t] < 0):
                raise ValueError("probabilities must be nonnegative")
            if abs(self.common_prob[t].sum() - 1.0) > 1e-9:
                raise ValueError(f"common probabilities at t={t} do not sum to one")
            # idiosyncratic paths sum to one inside each common node
            sums = np.bincount(self.node_common[t], weights=self.node_idio_prob[t], minlength=self.common_prob[t].size)
            if np.any(np.abs(sums - 1.0) > 1e-9):
                raise ValueError(f"idiosyncratic probabilities at t={t} do not sum to one per common node")
            if t > 0:
                par = self.node_parent[t]
                if np.any(self.common_parent[t][self.node_common[t]] != self.node_common[t - 1][par]):
                    raise ValueError(f"full node at t={t} does not follow its parent's common path")
                cond = self.node_prob(t) / self.node_prob(t - 1)[par]
                total = np.bincount(par, weights=cond, minlength=self.node_common[t - 1].size)
                live = self.node_prob(t - 1) > 0
                if np.any(np.abs(total[live] - 1.0) > 1e-9):
                    raise ValueError(f"branch probabilities out of t={t - 1} do not sum to one")

    def node_prob(self, t: int) -> np.ndarray:
        return self.common_prob[t][self.node_common[t]] * self.node_idio_prob[t]

    def n_nodes(self, t: int) -> int:
        return self.node_common[t].size

    def n_common(self, t: int) -> int:
        return self.common_prob[t].size

    def cells(self) -> list[tuple[int, int]]:
        return [(t, c) for t in range(self.horizon + 1) for c in range(self.n_common(t))]

    def cell_weights(self, time_weights=None) -> np.ndarray:
        w = default_weights(self.horizon, self.dt) if time_weights is None else np.asarray(time_weights, float)
        return np.array([w[t] * self.common_prob[t][c] for t, c in self.cells()])

    def children(self, t: int) -> list[np.ndarray]:
        """Children (indices at ``t + 1``) of each full node at ``t``."""
        par = self.node_parent[t + 1]
        return [np.flatnonzero(par == n) for n in range(self.n_nodes(t))]


def build_tree(horizon: int, x0: Sequence[float], common_branches: Sequence[tuple], idio_branches: Sequence[tuple],
               step: Callable, dt: float = 1.0) -> ScenarioTree:
    """Tree with identical branching at every node.

    ``common_branches`` and ``idio_branches`` are sequences of
    ``(probability, label)``; ``step(t, x, common_label, idio_label)`` returns
    the state at ``t + 1``.
    """
    cp, cprob = [np.array([-1])], [np.array([1.0])]
    nc, npar, nip, states = [np.array([0])], [np.array([-1])], [np.array([1.0])], [np.atleast_2d(np.asarray(x0, float))]
    clabels = [[None]]
    for t in range(horizon):
        par_c, prob_c, lab_c = [], [], []
        for c, pc in enumerate(cprob[-1]):
            for q, lab in common_branches:
                par_c.append(c)
                prob_c.append(pc * q)
                lab_c.append(lab)
        # common children of c are contiguous: c * len(common_branches) + j
        ncb = len(common_branches)
        n_common, n_par, n_ip, xs = [], [], [], []
        for n in range(nc[-1].size):
            c = nc[-1][n]
            for j, (q, clab) in enumerate(common_branches):
                for r, ilab in idio_branches:
                    n_common.append(c * ncb + j)
                    n_par.append(n)
                    n_ip.append(nip[-1][n] * r)
                    xs.append(step(t, states[-1][n], clab, ilab))
        cp.append(np.array(par_c))
        cprob.append(np.array(prob_c))
        clabels.append(lab_c)
        nc.append(np.array(n_common))
        npar.append(np.array(n_par))
        nip.append(np.array(n_ip))
        states.append(np.array(xs, dtype=float))
    return ScenarioTree(horizon, tuple(cp), tuple(cprob), tuple(nc), tuple(npar), tuple(nip), tuple(states), dt)


def additive_tree(horizon: int, idio_steps=(1.0, -1.0), idio_probs=(0.5, 0.5), common_steps=(1.0, -1.0),
                  common_probs=(0.5, 0.5), z_common_loading: float = 0.0, x0=(0.0, 0.0), dt: float = 1.0) -> ScenarioTree:
    """``X = (Z, B)`` with ``Z' = Z + xi + loading * zeta`` and ``B' = B + zeta``."""
    def step(t, x, zeta, xi):
        return np.array([x[0] + xi + z_common_loading * zeta, x[1] + zeta])

    return build_tree(horizon, x0, list(zip(common_probs, common_steps)), list(zip(idio_probs, idio_steps)), step, dt)


def single_path_tree(values: Sequence[Sequence[float]], dt: float = 1.0) -> ScenarioTree:
    """Deterministic tree with one node per time and ``X_t = values[t]``."""
    vals = [np.atleast_1d(np.asarray(v, float)) for v in values]
    T = len(vals) - 1
    return build_tree(T, vals[0], [(1.0, None)], [(1.0, None)], lambda t, x, c, i: vals[t + 1], dt)


# ---------------------------------------------------------------------------
# costs


@dataclass(frozen=True)
class StoppingCosts:
    f: Callable   # f(t, x, m_cell: SurvivalMeasure) -> float, nondecreasing in m
    g: Callable   # g(t, x) -> float
    psi: Callable  # psi(x) -> float
    name: str = "custom"

    @classmethod
    def benchmark(cls, mass_scale: float = 0.1, coord: int = 0) -> StoppingCosts:
        """``f = scale * total mass of m``, ``g = max(x_coord, 0)``, ``psi = x_coord``."""
        return cls(
            lambda t, x, m: mass_scale * m.total_mass,
            lambda t, x: max(float(x[coord]), 0.0),
            lambda x: float(x[coord]),
            "benchmark",
        )


def check_costs(tree: ScenarioTree, costs: StoppingCosts, top: MeasureFlow | None = None) -> dict:
    """Sign requirements on the tree: ``g >= 0`` everywhere and ``f >= 0`` at the null flow and at ``mu^psi``."""
    top = psi_law(tree, costs) if top is None else top
    bottom = null_flow(tree, costs)
    neg_g = neg_f = 0
    for t in range(tree.horizon + 1):
        for n in range(tree.n_nodes(t)):
            x = tree.states[t][n]
            neg_g += costs.g(t, x) < 0
            if t < tree.horizon:
                cell = _cell_index(tree, t, tree.node_common[t][n])
                neg_f += costs.f(t, x, bottom[cell]) < 0 or costs.f(t, x, top[cell]) < 0
    return {"negative_g_nodes": int(neg_g), "negative_f_nodes": int(neg_f), "passed": neg_g == 0 and neg_f == 0}


# ---------------------------------------------------------------------------
# stopping rules


@dataclass(frozen=True, eq=False)
class StoppingRule:
    stop: tuple  # per t: bool array over full nodes; the horizon is always a stop

    @classmethod
    def from_flags(cls, tree: ScenarioTree, flags: Sequence) -> StoppingRule:
        stop = [np.asarray(f, dtype=bool).copy() for f in flags]
        if len(stop) != tree.horizon + 1 or any(s.size != tree.n_nodes(t) for t, s in enumerate(stop)):
            raise ValueError("one flag per full node is required")
        stop[-1][:] = True
        return cls(tuple(stop))

    @classmethod
    def stop_at(cls, tree: ScenarioTree, t0: int) -> StoppingRule:
        return cls.from_flags(tree, [np.full(tree.n_nodes(t), t >= t0) for t in range(tree.horizon + 1)])

    @classmethod
    def never(cls, tree: ScenarioTree) -> StoppingRule:
        return cls.stop_at(tree, tree.horizon)

    @classmethod
    def random(cls, tree: ScenarioTree, rng: np.random.Generator, p: float = 0.3) -> StoppingRule:
        return cls.from_flags(tree, [rng.random(tree.n_nodes(t)) < p for t in range(tree.horizon + 1)])

    def alive(self, tree: ScenarioTree) -> list[np.ndarray]:
        """``alive[t][n]``: the path through ``n`` has not stopped before ``t``."""
        out = [np.ones(1, dtype=bool)]
        for t in range(1, tree.horizon + 1):
            par = tree.node_parent[t]
            out.append(out[-1][par] & ~self.stop[t - 1][par])
        return out

    def stopped_here(self, tree: ScenarioTree) -> list[np.ndarray]:
        return [a & s for a, s in zip(self.alive(tree), self.stop)]

    def continuing(self, tree: ScenarioTree) -> list[np.ndarray]:
        """Nodes on ``{t < tau}``."""
        return [a & ~s for a, s in zip(self.alive(tree), self.stop)]

    def stopping_time(self, tree: ScenarioTree) -> list[np.ndarray]:
        """Stopping time of the path through each full node, as seen at the leaves."""
        here = self.stopped_here(tree)
        tau = np.full(tree.n_nodes(tree.horizon), -1)
        # trace each leaf back to its first stop
        anc = np.arange(tree.n_nodes(tree.horizon))
        chain = [anc]
        for t in range(tree.horizon, 0, -1):
            anc = tree.node_parent[t][anc]
            chain.append(anc)
        chain = chain[::-1]
        for t in range(tree.horizon + 1):
            hit = here[t][chain[t]] & (tau < 0)
            tau[hit] = t
        return tau


def _first_hit(tree: ScenarioTree, stop: tuple) -> list[np.ndarray]:
    seen = [stop[0].copy()]
    for t in range(1, tree.horizon + 1):
        seen.append(seen[-1][tree.node_parent[t]] | stop[t])
    return seen


def rule_meet(tree: ScenarioTree, a: StoppingRule, b: StoppingRule) -> StoppingRule:
    """Pathwise ``min(tau_a, tau_b)``: stop as soon as either rule does."""
    return StoppingRule.from_flags(tree, [x | y for x, y in zip(a.stop, b.stop)])


def rule_join(tree: ScenarioTree, a: StoppingRule, b: StoppingRule) -> StoppingRule:
    """Pathwise ``max(tau_a, tau_b)``: stop once both rules have fired."""
    ha, hb = _first_hit(tree, a.stop), _first_hit(tree, b.stop)
    return StoppingRule.from_flags(tree, [x & y for x, y in zip(ha, hb)])


def rule_leq(tree: ScenarioTree, a: StoppingRule, b: StoppingRule) -> bool:
    """``tau_a <= tau_b`` on every path of positive probability."""
    live = tree.node_prob(tree.horizon) > 0
    return bool(np.all((a.stopping_time(tree) <= b.stopping_time(tree))[live]))


def rule_equal(tree: ScenarioTree, a: StoppingRule, b: StoppingRule) -> bool:
    live = tree.node_prob(tree.horizon) > 0
    return bool(np.all((a.stopping_time(tree) == b.stopping_time(tree))[live]))


# ---------------------------------------------------------------------------
# projection and profit


def _cell_index(tree: ScenarioTree, t: int, c: int) -> int:
    return sum(tree.n_common(s) for s in range(t)) + int(c)


def _cell_grid(tree: ScenarioTree, costs: StoppingCosts, t: int) -> np.ndarray:
    return np.array([costs.psi(x) for x in tree.states[t]])


def _cell_flow(tree: ScenarioTree, costs: StoppingCosts, weights_by_node: list[np.ndarray], time_weights=None) -> MeasureFlow:
    measures = []
    for t in range(tree.horizon + 1):
        values = _cell_grid(tree, costs, t)
        for c in range(tree.n_common(t)):
            sel = tree.node_common[t] == c
            measures.append(SurvivalMeasure.from_atoms(values[sel], weights_by_node[t][sel]))
    return MeasureFlow(tuple(measures), tree.cell_weights(time_weights), tuple(tree.cells()))


def project(tree: ScenarioTree, rule: StoppingRule, costs: StoppingCosts, time_weights=None) -> MeasureFlow:
    """Conditional law of ``psi(X_t)`` on ``{t < tau}`` given each common node."""
    cont = rule.continuing(tree)
    return _cell_flow(tree, costs, [tree.node_idio_prob[t] * cont[t] for t in range(tree.horizon + 1)], time_weights)


def psi_law(tree: ScenarioTree, costs: StoppingCosts, time_weights=None) -> MeasureFlow:
    """Full conditional law of ``psi(X_t)``: the top of the lattice of feasible flows."""
    return _cell_flow(tree, costs, list(tree.node_idio_prob), time_weights)


def null_flow(tree: ScenarioTree, costs: StoppingCosts, time_weights=None) -> MeasureFlow:
    return _cell_flow(tree, costs, [np.zeros(tree.n_nodes(t)) for t in range(tree.horizon + 1)], time_weights)


def _running(tree: ScenarioTree, m: MeasureFlow, costs: StoppingCosts, t: int) -> np.ndarray:
    base = _cell_index(tree, t, 0)
    return np.array([costs.f(t, x, m[base + c]) for x, c in zip(tree.states[t], tree.node_common[t])])


def profit(tree: ScenarioTree, rule: StoppingRule, m: MeasureFlow, costs: StoppingCosts) -> float:
    cont = rule.continuing(tree)
    here = rule.stopped_here(tree)
    total = 0.0
    for t in range(tree.horizon + 1):
        prob = tree.node_prob(t)
        g = np.array([costs.g(t, x) for x in tree.states[t]])
        total += float(np.sum(prob * here[t] * g))
        if t < tree.horizon:
            total += float(np.sum(prob * cont[t] * _running(tree, m, costs, t))) * tree.dt
    return total


def snell_envelope(tree: ScenarioTree, m: MeasureFlow, costs: StoppingCosts):
    """Backward induction; returns per-time value, reward and continuation arrays."""
    T = tree.horizon
    reward = [np.array([costs.g(t, x) for x in tree.states[t]]) for t in range(T + 1)]
    value = [None] * (T + 1)
    cont = [None] * (T + 1)
    value[T] = reward[T]
    cont[T] = np.full(tree.n_nodes(T), -np.inf)
    for t in range(T - 1, -1, -1):
        par = tree.node_parent[t + 1]
        cond = tree.node_prob(t + 1) / np.where(tree.node_prob(t)[par] > 0, tree.node_prob(t)[par], 1.0)
        expected = np.bincount(par, weights=cond * value[t + 1], minlength=tree.n_nodes(t))
        cont[t] = _running(tree, m, costs, t) * tree.dt + expected
        value[t] = np.maximum(reward[t], cont[t])
    return value, reward, cont


def optimal_rule(tree: ScenarioTree, m: MeasureFlow, costs: StoppingCosts, selection: str = "min") -> StoppingRule:
    """Smallest (``min``) or largest (``max``) optimal stopping rule against ``m``.

    The smallest stops wherever the reward reaches the continuation value
    (ties stop); the largest only where it strictly exceeds it.
    """
    _, reward, cont = snell_envelope(tree, m, costs)
    if selection == "min":
        flags = [r >= c - TIE_TOL for r, c in zip(reward, cont)]
    elif selection == "max":
        flags = [r > c + TIE_TOL for r, c in zip(reward, cont)]
    else:
        raise ValueError("selection must be 'min' or 'max'")
    return StoppingRule.from_flags(tree, flags)


def value(tree: ScenarioTree, m: MeasureFlow, costs: StoppingCosts) -> float:
    return float(snell_envelope(tree, m, costs)[0][0][0])


# ---------------------------------------------------------------------------
# learning


def stopping_game(tree: ScenarioTree, costs: StoppingCosts, time_weights=None) -> GameInterface:
    def respond(selection):
        return lambda m: project(tree, optimal_rule(tree, m, costs, selection), costs, time_weights)

    return GameInterface(
        bottom=null_flow(tree, costs, time_weights),
        top=psi_law(tree, costs, time_weights),
        best_response_inf=respond("min"),
        best_response_sup=respond("max"),
        max_iter=10 * sum(tree.n_nodes(t) for t in range(tree.horizon + 1)) * max(tree.horizon, 1),
    )


def stopping_learn(tree: ScenarioTree, costs: StoppingCosts, tol: float = 1e-9, max_iter: int | None = None,
                   time_weights=None) -> IterateChain:
    """Bottom-up learning from the null flow; converges to the least equilibrium."""
    return learn(stopping_game(tree, costs, time_weights), "up", tol, max_iter)


def top_down_diagnostic(tree: ScenarioTree, costs: StoppingCosts, tol: float = 1e-9, max_iter: int | None = None,
                        time_weights=None) -> IterateChain:
    """Top-down chain with the largest optimal rule.

    Recorded for inspection only: monotonicity breaks are logged rather than
    raised, and neither convergence nor the equilibrium property of the
    limit is guaranteed.
    """
    return learn(stopping_game(tree, costs, time_weights), "down", tol, max_iter, strict=False)


def equilibrium_rule(tree: ScenarioTree, m: MeasureFlow, costs: StoppingCosts) -> StoppingRule:
    return optimal_rule(tree, m, costs, "min")


def fixed_point_gap(tree: ScenarioTree, m: MeasureFlow, costs: StoppingCosts) -> np.ndarray:
    """Per-cell sup-gap between ``m`` and the projection of the smallest optimal rule against ``m``."""
    from .stochorder import sup_distance

    image = project(tree, optimal_rule(tree, m, costs, "min"), costs)
    return np.array([sup_distance(a, b) for a, b in zip(m.measures, image.measures)])


# ---------------------------------------------------------------------------
# supermodularity


@dataclass
class SupermodularReport:
    modularity_gap: float
    cross_gap: float | None
    projection_chain: bool
    passed: bool


def supermodular_identity_check(tree: ScenarioTree, m: MeasureFlow, rule1: StoppingRule, rule2: StoppingRule,
                                costs: StoppingCosts, m_bar: MeasureFlow | None = None,
                                tol: float = 1e-12) -> SupermodularReport:
    """Check modularity, increasing differences and monotonicity of the projection.

    * ``J(t v s, m) - J(t, m) = J(s, m) - J(s ^ t, m)`` for ``t = rule1``, ``s = rule2``;
    * ``J(s, m_bar) - J(s ^ t, m_bar) >= J(s, m) - J(s ^ t, m)`` when ``m <= m_bar``;
    * ``p(t ^ s) <= pt ^ ps <= pt v ps <= p(t v s)``.
    """
    lo, hi = rule_meet(tree, rule1, rule2), rule_join(tree, rule1, rule2)
    J = lambda r, mf: profit(tree, r, mf, costs)
    lhs = J(hi, m) - J(rule1, m)
    rhs = J(rule2, m) - J(lo, m)
    gap = abs(lhs - rhs)
    cross = None
    ok = gap <= tol
    if m_bar is not None:
        cross = (J(rule2, m_bar) - J(lo, m_bar)) - rhs
        ok &= cross >= -tol
    p1, p2 = project(tree, rule1, costs), project(tree, rule2, costs)
    chain = (flow_leq(project(tree, lo, costs), flow_meet(p1, p2))
             and flow_leq(flow_meet(p1, p2), flow_join(p1, p2))
             and flow_leq(flow_join(p1, p2), project(tree, hi, costs)))
    return SupermodularReport(gap, cross, chain, bool(ok and chain))


def random_subflow(tree: ScenarioTree, costs: StoppingCosts, rng: np.random.Generator) -> MeasureFlow:
    """Random flow below ``mu^psi``: every atom of the conditional law is thinned by a uniform factor."""
    return _cell_flow(tree, costs, [tree.node_idio_prob[t] * rng.random(tree.n_nodes(t)) for t in range(tree.horizon + 1)])


def f_monotonicity_probe(tree: ScenarioTree, costs: StoppingCosts, rng: np.random.Generator, n: int = 50,
                         tol: float = EPS) -> dict:
    """Sample comparable flows ``m <= m_bar`` and check ``f(t, x, m_t) <= f(t, x, m_bar_t)`` at every node."""
    violations = 0
    for _ in range(n):
        a, b = random_subflow(tree, costs, rng), random_subflow(tree, costs, rng)
        lo, hi = flow_meet(a, b), flow_join(a, b)
        for t in range(tree.horizon):
            violations += int(np.sum(_running(tree, lo, costs, t) > _running(tree, hi, costs, t) + tol))
    return {"samples": n, "violations": violations, "passed": violations == 0}
