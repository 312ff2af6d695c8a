"""Brute-force verifiers kept apart from the solvers.

Every routine here enumerates candidates explicitly and uses its own
arithmetic (integer survival vectors, plain Python loops, path-based profit
sums), so agreement with the solvers is an independent check rather than a
re-run of the same code.  Enumeration order is deterministic (lexicographic
or depth-first) so failures reproduce.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ResourceError
from .stochorder import MeasureFlow, SurvivalMeasure


@dataclass(frozen=True)
class OracleBudget:
    max_candidates: int = 2_000_000
    max_seconds: float = 120.0

    def __post_init__(self):
        if self.max_candidates <= 0 or self.max_seconds <= 0:
            raise ValueError("oracle budgets must be positive")

    def check_count(self, n: int, what: str):
        if n > self.max_candidates:
            raise ResourceError(f"{n} {what} exceed the oracle budget of {self.max_candidates}")

    def clock(self):
        start = time.monotonic()

        def tick():
            if time.monotonic() - start > self.max_seconds:
                raise ResourceError(f"oracle exceeded {self.max_seconds} s")

        return tick


DEFAULT_BUDGET = OracleBudget()


# ---------------------------------------------------------------------------
# lattice extremality on mass grids


@lru_cache(maxsize=32)
def _count_vectors(n_points: int, units: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``n_points`` with sum at most ``units``."""
    rows = []
    # stars and bars with one slack bin for the missing mass
    for bars in itertools.combinations_with_replacement(range(units + 1), n_points):
        rows.append(np.diff((0,) + bars))
    out = np.array(rows, dtype=np.int64).reshape(-1, n_points)
    out.setflags(write=False)
    return out


def _scaled_survival(mu: SurvivalMeasure, grid: np.ndarray, units: int) -> np.ndarray:
    """Integer survival ``units * mu((x, inf))`` at ``-inf`` and at every grid point."""
    pts = np.asarray(mu.points, float)
    masses = np.asarray(mu.masses, float)
    vals = [mu.total_mass] + [float(masses[pts > x].sum()) for x in grid]
    scaled = np.array(vals) * units
    rounded = np.rint(scaled)
    if np.any(np.abs(scaled - rounded) > 1e-9) or not set(pts.tolist()) <= set(grid.tolist()):
        raise ValueError("measure is not representable on the oracle grid")
    return rounded.astype(np.int64)


def _grid_bound(a: SurvivalMeasure, b: SurvivalMeasure, grid, resolution: float, lower: bool,
                budget: OracleBudget) -> SurvivalMeasure:
    grid = np.array(sorted(set(float(x) for x in grid)))
    units = round(1.0 / resolution)
    if abs(units * resolution - 1.0) > 1e-12:
        raise ValueError("resolution must be the reciprocal of an integer")
    budget.check_count(math.comb(units + grid.size, grid.size), "grid measures")
    counts = _count_vectors(grid.size, units)
    # survival at -inf then at each grid point
    tail = np.cumsum(counts[:, ::-1], axis=1)[:, ::-1]
    surv = np.hstack([tail, np.zeros((counts.shape[0], 1), dtype=np.int64)])
    sa, sb = _scaled_survival(a, grid, units), _scaled_survival(b, grid, units)
    if lower:
        ok = np.all(surv <= sa, axis=1) & np.all(surv <= sb, axis=1)
    else:
        ok = np.all(surv >= sa, axis=1) & np.all(surv >= sb, axis=1)
    cand = surv[ok]
    if cand.shape[0] == 0:
        raise ValueError("no grid measure bounds both arguments")
    pick = np.argmax(cand.sum(axis=1)) if lower else np.argmin(cand.sum(axis=1))
    best = cand[pick]
    dominated = np.all(cand <= best, axis=1) if lower else np.all(cand >= best, axis=1)
    if not np.all(dominated):
        raise AssertionError("bounding set has no extremal element")
    masses = counts[ok][pick] / units
    return SurvivalMeasure.from_atoms(grid, masses)


def glb_oracle(a: SurvivalMeasure, b: SurvivalMeasure, grid: Sequence[float], resolution: float = 0.05,
               budget: OracleBudget = DEFAULT_BUDGET) -> SurvivalMeasure:
    """Greatest grid measure below both ``a`` and ``b`` (masses in multiples of ``resolution``)."""
    return _grid_bound(a, b, grid, resolution, True, budget)


def lub_oracle(a: SurvivalMeasure, b: SurvivalMeasure, grid: Sequence[float], resolution: float = 0.05,
               budget: OracleBudget = DEFAULT_BUDGET) -> SurvivalMeasure:
    """Least grid measure above both ``a`` and ``b``."""
    return _grid_bound(a, b, grid, resolution, False, budget)


# ---------------------------------------------------------------------------
# Markov equilibria


def _vecmat(v: list, A) -> list:
    d = len(v)
    return [sum(v[i] * float(A[i][j]) for i in range(d)) for j in range(d)]


def equilibrium_oracle_markov(model, budget: OracleBudget = DEFAULT_BUDGET) -> list[np.ndarray]:
    """All equilibrium flows of a finite Markov game, in lexicographic order of the flow entries.

    Loops over every control path on the grid, propagates the law with plain
    Python arithmetic, and keeps a flow when one of the paths producing it is
    optimal (within ``model.eps_J``) against the flow itself.
    """
    grid = list(model.family.control_grid)
    T, d = model.horizon, model.d
    n_paths = len(grid) ** T
    budget.check_count(n_paths, "control paths")
    tick = budget.clock()
    mats = {k: model.family.matrix(g).tolist() for k, g in enumerate(grid)}
    eta = [float(x) for x in model.eta]
    paths, flows = [], []
    for idx in itertools.product(range(len(grid)), repeat=T):
        law = [eta]
        for k in idx:
            law.append(_vecmat(law[-1], mats[k]))
        paths.append(idx)
        flows.append(law)
    keys = {}
    for p, law in enumerate(flows):
        key = tuple(round(x, 12) + 0.0 for row in law for x in row)
        keys.setdefault(key, []).append(p)
    budget.check_count(n_paths * len(keys), "path-flow cost evaluations")
    f, g = model.costs.f, model.costs.g

    found = []
    for key in sorted(keys):
        tick()
        members = keys[key]
        m = flows[members[0]]
        # running and terminal cost tables against this candidate
        F = [[[f(t, i, np.array(m[t]), gamma) for gamma in grid] for i in range(d)] for t in range(T)]
        G = [g(i, np.array(m[T])) for i in range(d)]
        costs = []
        for law, idx in zip(flows, paths):
            total = 0.0
            for t in range(T):
                row = law[t]
                total += sum(F[t][i][idx[t]] * row[i] for i in range(d))
            total += sum(G[i] * law[T][i] for i in range(d))
            costs.append(total)
        best = min(costs)
        if min(costs[p] for p in members) <= best + model.eps_J:
            found.append(np.array(m))
    return found


# ---------------------------------------------------------------------------
# stopping games


@dataclass
class _Paths:
    anc: np.ndarray          # (T + 1, L): ancestor of each leaf (tree order) at each time
    leaf_prob: np.ndarray    # (L,)


def _paths(tree) -> _Paths:
    T = tree.horizon
    L = tree.n_nodes(T)
    anc = np.empty((T + 1, L), dtype=np.int64)
    anc[T] = np.arange(L)
    for t in range(T, 0, -1):
        anc[t - 1] = tree.node_parent[t][anc[t]]
    prob = tree.common_prob[T][tree.node_common[T]] * tree.node_idio_prob[T]
    return _Paths(anc, prob)


def count_stopping_times(tree) -> int:
    """Number of distinct stopping times on ``tree`` (each node: stop, or recurse into every child)."""
    T = tree.horizon
    counts = [1] * tree.n_nodes(T)
    for t in range(T - 1, -1, -1):
        par = tree.node_parent[t + 1]
        nxt = [1] * tree.n_nodes(t)
        for child, p in enumerate(par):
            nxt[p] *= counts[child]
        counts = [1 + c for c in nxt]
    return counts[0]


def enumerate_stopping_times(tree, budget: OracleBudget = DEFAULT_BUDGET) -> np.ndarray:
    """Every stopping time as a row of per-leaf stopping dates (columns in tree leaf order).

    Rows are in depth-first lexicographic order: at each node "stop now"
    comes first, then the product of the children's choices.
    """
    total = count_stopping_times(tree)
    budget.check_count(total, "stopping times")
    T = tree.horizon
    kids = [[[] for _ in range(tree.n_nodes(t))] for t in range(T)]
    for t in range(T):
        for child, p in enumerate(tree.node_parent[t + 1]):
            kids[t][p].append(child)

    def build(t: int, n: int) -> tuple[np.ndarray, list[int]]:
        if t == T:
            return np.array([[T]], dtype=np.int8), [n]
        block, leaves = np.zeros((1, 0), dtype=np.int8), []
        for c in kids[t][n]:
            sub, sub_leaves = build(t + 1, c)
            block = np.hstack([np.repeat(block, sub.shape[0], axis=0), np.tile(sub, (block.shape[0], 1))])
            leaves += sub_leaves
        stop = np.full((1, len(leaves)), t, dtype=np.int8)
        return np.vstack([stop, block]), leaves

    taus, leaves = build(0, 0)
    out = np.empty_like(taus)
    out[:, leaves] = taus
    return out


def _path_payoffs(tree, m: MeasureFlow, costs, paths: _Paths) -> np.ndarray:
    """``H[leaf, s]``: probability-weighted payoff of the leaf's path when stopped at ``s``."""
    T = tree.horizon
    cell_offset = np.cumsum([0] + [tree.n_common(t) for t in range(T + 1)])
    L = paths.anc.shape[1]
    H = np.empty((L, T + 1))
    for leaf in range(L):
        run = 0.0
        for s in range(T + 1):
            n = paths.anc[s, leaf]
            x = tree.states[s][n]
            H[leaf, s] = run + costs.g(s, x)
            if s < T:
                cell = m[cell_offset[s] + tree.node_common[s][n]]
                run += costs.f(s, x, cell) * tree.dt
    return H * paths.leaf_prob[:, None]


@dataclass
class StoppingOracleResult:
    max_profit: float
    optimal: np.ndarray   # rows of per-leaf stopping dates
    profits: np.ndarray

    def minimal(self) -> np.ndarray | None:
        """The pathwise smallest optimal stopping time, if it is itself optimal."""
        lo = self.optimal.min(axis=0)
        return lo if np.any(np.all(self.optimal == lo, axis=1)) else None


def stopping_oracle(tree, m: MeasureFlow, costs, budget: OracleBudget = DEFAULT_BUDGET,
                    taus: np.ndarray | None = None, tol: float = 1e-10) -> StoppingOracleResult:
    """Maximum profit over every stopping time and the full set of maximizers (within ``tol``)."""
    paths = _paths(tree)
    if taus is None:
        taus = enumerate_stopping_times(tree, budget)
    H = _path_payoffs(tree, m, costs, paths)
    profits = H[np.arange(H.shape[0]), taus].sum(axis=1)
    best = float(profits.max())
    return StoppingOracleResult(best, taus[profits >= best - tol], profits)


def lattice_closure_check(optimal: np.ndarray, max_pairs: int = 200_000) -> dict:
    """Check that pathwise min and max of optimal stopping times stay optimal."""
    members = {row.tobytes() for row in optimal}
    k = optimal.shape[0]
    checked = failures = 0
    for i, j in itertools.combinations(range(k), 2):
        if checked >= max_pairs:
            break
        checked += 1
        lo = np.minimum(optimal[i], optimal[j]).tobytes()
        hi = np.maximum(optimal[i], optimal[j]).tobytes()
        failures += (lo not in members) + (hi not in members)
    return {"size": k, "pairs_checked": checked, "complete": checked == k * (k - 1) // 2,
            "failures": failures, "closed": failures == 0}


@dataclass
class StoppingEquilibria:
    flows: list[MeasureFlow]
    survival: np.ndarray         # cellwise survival rows of each equilibrium flow
    n_stopping_times: int
    n_projections: int
    minimal_index: int | None

    @property
    def minimal(self) -> MeasureFlow | None:
        return None if self.minimal_index is None else self.flows[self.minimal_index]


def stopping_equilibria_oracle(tree, costs, budget: OracleBudget = DEFAULT_BUDGET, tol: float = 1e-10,
                               chunk: int = 64) -> StoppingEquilibria:
    """Every equilibrium flow, found by testing each projected stopping time as a candidate.

    A flow ``m`` is an equilibrium when some stopping time whose projection is
    ``m`` maximizes the profit against ``m``.  The oracle builds the projection
    of every stopping time, computes all profits against each distinct
    candidate, and keeps the candidates that pass.
    """
    tick = budget.clock()
    T = tree.horizon
    paths = _paths(tree)
    taus = enumerate_stopping_times(tree, budget)
    R = taus.shape[0]
    # one representative leaf per node below the horizon
    nodes = [(t, n) for t in range(T) for n in range(tree.n_nodes(t))]
    rep = np.array([np.flatnonzero(paths.anc[t] == n)[0] for t, n in nodes])
    node_t = np.array([t for t, _ in nodes])
    alive = taus[:, rep] > node_t                      # (R, nodes): on {t < tau}
    # features: (cell, psi value) pairs with the conditional idiosyncratic probability
    feat_index, feat_cell, feat_val = {}, [], []
    cols = []
    for k, (t, n) in enumerate(nodes):
        c = int(tree.node_common[t][n])
        v = round(float(costs.psi(tree.states[t][n])), 12) + 0.0
        key = (t, c, v)
        if key not in feat_index:
            feat_index[key] = len(feat_cell)
            feat_cell.append((t, c))
            feat_val.append(v)
        cols.append((k, feat_index[key], float(tree.node_idio_prob[t][n])))
    M = np.zeros((len(nodes), len(feat_cell)))
    for k, j, w in cols:
        M[k, j] += w
    proj = np.round(alive.astype(float) @ M, 12)
    uniq, proj_id = np.unique(proj, axis=0, return_inverse=True)
    proj_id = proj_id.ravel()
    tick()
    # measures per cell for each distinct projection
    cells = sorted(set(feat_cell))
    cell_feats = {cell: [j for j, fc in enumerate(feat_cell) if fc == cell] for cell in cells}
    cell_key = {}
    cell_measures = {}
    for cell in cells:
        sub = uniq[:, cell_feats[cell]]
        u, inv = np.unique(sub, axis=0, return_inverse=True)
        cell_key[cell] = inv.ravel()
        vals = [feat_val[j] for j in cell_feats[cell]]
        cell_measures[cell] = [SurvivalMeasure.from_atoms(vals, row) for row in u]
    W = np.empty((uniq.shape[0], len(nodes)))
    for k, (t, n) in enumerate(nodes):
        cell = (t, int(tree.node_common[t][n]))
        x = tree.states[t][n]
        fvals = np.array([costs.f(t, x, mu) for mu in cell_measures[cell]])
        W[:, k] = fvals[cell_key[cell]] * tree.dt
    node_prob = np.array([tree.common_prob[t][tree.node_common[t][n]] * tree.node_idio_prob[t][n] for t, n in nodes])
    S = alive * node_prob                               # (R, nodes)
    G = np.array([[costs.g(s, tree.states[s][paths.anc[s, leaf]]) for s in range(T + 1)]
                  for leaf in range(paths.anc.shape[1])]) * paths.leaf_prob[:, None]
    g_part = G[np.arange(G.shape[0]), taus].sum(axis=1)
    Wu, w_id = np.unique(np.round(W, 12), axis=0, return_inverse=True)
    w_id = w_id.ravel()
    is_eq = np.zeros(uniq.shape[0], dtype=bool)
    for start in range(0, Wu.shape[0], chunk):
        tick()
        block = Wu[start:start + chunk]
        prof = g_part[:, None] + S @ block.T           # (R, chunk)
        best = prof.max(axis=0)
        for j in range(block.shape[0]):
            winners = np.unique(proj_id[prof[:, j] >= best[j] - tol])
            mine = np.flatnonzero(w_id == start + j)
            is_eq[np.intersect1d(mine, winners)] = True
    eq = np.flatnonzero(is_eq)
    # survival rows on each cell's value grid, including the total mass
    blocks = []
    for cell in cells:
        js = sorted(cell_feats[cell], key=lambda j: feat_val[j])
        masses = uniq[np.ix_(eq, js)]
        tail = np.cumsum(masses[:, ::-1], axis=1)[:, ::-1]
        blocks.append(tail)
    surv = np.hstack(blocks) if blocks else np.zeros((eq.size, 0))
    lo = surv.min(axis=0) if eq.size else None
    minimal = None
    if eq.size:
        hits = np.flatnonzero(np.all(np.abs(surv - lo) <= 1e-12, axis=1))
        minimal = int(hits[0]) if hits.size else None
    flows = [_assemble_flow(tree, costs, uniq[i], feat_cell, feat_val) for i in eq]
    return StoppingEquilibria(flows, surv, R, uniq.shape[0], minimal)


def _assemble_flow(tree, costs, row, feat_cell, feat_val) -> MeasureFlow:
    T = tree.horizon
    measures, cells, weights = [], [], []
    pi = [tree.dt] * T + [tree.dt + 1.0]
    for t in range(T + 1):
        for c in range(tree.n_common(t)):
            js = [j for j, fc in enumerate(feat_cell) if fc == (t, c)]
            if js:
                mu = SurvivalMeasure.from_atoms([feat_val[j] for j in js], [row[j] for j in js])
            else:
                # nobody is alive at the horizon; keep the cell's value grid
                vals = [costs.psi(x) for x, cc in zip(tree.states[t], tree.node_common[t]) if cc == c]
                mu = SurvivalMeasure.from_atoms(vals, np.zeros(len(vals)))
            measures.append(mu)
            cells.append((t, c))
            weights.append(pi[t] * float(tree.common_prob[t][c]))
    return MeasureFlow(tuple(measures), np.array(weights), tuple(cells))
