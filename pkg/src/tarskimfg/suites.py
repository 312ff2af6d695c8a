"""Verification suites run by the ``verify`` command.

Each suite returns a JSON-ready dict with one entry per checked invariant and
the name of the first failing one.
"""

from __future__ import annotations

import numpy as np

from . import markov as mk
from . import oracle
from . import stopping as st
from .engine import directedness_probe, learn
from .stochorder import (
    SurvivalMeasure,
    flow_distance,
    flow_join,
    flow_leq,
    flow_meet,
    join_st,
    leq_st,
    meet_st,
    same_measure,
)

LAW_TOL = 1e-12


def _result(name: str, checks: dict) -> dict:
    failed = next((k for k, v in checks.items() if not v.get("passed", False)), None)
    return {"suite": name, "passed": failed is None, "failed_invariant": failed, "checks": checks}


def random_grid_measure(rng: np.random.Generator, grid=(0.0, 1.0, 2.0, 3.0, 4.0), units: int = 20,
                        max_support: int = 5) -> SurvivalMeasure:
    """Random measure with at most ``max_support`` atoms on ``grid`` and masses in multiples of ``1 / units``."""
    k = int(rng.integers(1, min(max_support, len(grid)) + 1))
    pts = np.sort(rng.choice(np.asarray(grid, float), size=k, replace=False))
    counts = rng.multinomial(int(rng.integers(0, units + 1)), np.ones(k + 1) / (k + 1))[:k]
    return SurvivalMeasure.from_atoms(pts, counts / units)


def lattice_law_violations(a: SurvivalMeasure, b: SurvivalMeasure, c: SurvivalMeasure, tol: float = LAW_TOL) -> list[str]:
    eq = lambda x, y: same_measure(x, y, tol)
    out = []
    if not (eq(meet_st(a, a), a) and eq(join_st(a, a), a)):
        out.append("idempotence")
    if not (eq(meet_st(a, b), meet_st(b, a)) and eq(join_st(a, b), join_st(b, a))):
        out.append("commutativity")
    if not (eq(meet_st(meet_st(a, b), c), meet_st(a, meet_st(b, c)))
            and eq(join_st(join_st(a, b), c), join_st(a, join_st(b, c)))):
        out.append("associativity")
    if not (eq(meet_st(a, join_st(a, b)), a) and eq(join_st(a, meet_st(a, b)), a)):
        out.append("absorption")
    return out


def lattice_suite(rng: np.random.Generator, n_measures: int = 1000, n_oracle: int = 100) -> dict:
    grid = (0.0, 1.0, 2.0, 3.0, 4.0)
    laws = {"idempotence": 0, "commutativity": 0, "associativity": 0, "absorption": 0}
    ms = [random_grid_measure(rng, grid) for _ in range(n_measures)]
    for k in range(n_measures):
        for name in lattice_law_violations(ms[k], ms[(k + 1) % n_measures], ms[(k + 2) % n_measures]):
            laws[name] += 1
    disagreements = 0
    for _ in range(n_oracle):
        a, b = random_grid_measure(rng, grid), random_grid_measure(rng, grid)
        lo, hi = meet_st(a, b), join_st(a, b)
        ok = (same_measure(lo, oracle.glb_oracle(a, b, grid)) and same_measure(hi, oracle.lub_oracle(a, b, grid))
              and leq_st(lo, a) and leq_st(lo, b) and leq_st(a, hi) and leq_st(b, hi))
        disagreements += not ok
    checks = {name: {"violations": v, "samples": n_measures, "passed": v == 0} for name, v in laws.items()}
    checks["extremality_vs_oracle"] = {"disagreements": disagreements, "pairs": n_oracle,
                                       "passed": disagreements == 0}
    return _result("lattice", checks)


# ---------------------------------------------------------------------------
# markov


def markov_submodularity_suite(model: mk.MarkovModel, rng: np.random.Generator, n: int = 200) -> dict:
    if model.family.two_state is None:
        return _result("submodularity", {"submodularity_probe": {
            "passed": True, "skipped": "control meet/join only constructed for the two-state family"}})
    rep = mk.markov_submodularity_probe(model, rng, n)
    return _result("submodularity", {"submodularity_probe": {
        "checked": rep.checked, "violations": len(rep.violations), "passed": rep.passed,
        "first_violation": rep.violations[0] if rep.violations else None}})


def markov_directedness_suite(model: mk.MarkovModel, rng: np.random.Generator, n_random: int = 3) -> dict:
    flows = [mk.bottom_flow(model), mk.top_flow(model)] + [mk.random_flow(model, rng) for _ in range(n_random)]
    responses = mk.best_response_flows(model)
    failures, sizes = 0, []
    for f in flows:
        rep = directedness_probe(responses, mk.as_measure_flow(f))
        sizes.append(rep.size)
        failures += not (rep.directed and rep.inf_attained and rep.sup_attained)
    return _result("directedness", {"directedness_probe": {"flows": len(flows), "set_sizes": sizes,
                                                           "failures": failures, "passed": failures == 0}})


def markov_oracle_suite(model: mk.MarkovModel, tol: float = 1e-9, max_iter: int | None = None) -> dict:
    solver = mk.enumerate_equilibria(model)
    truth = oracle.equilibrium_oracle_markov(model)
    key = lambda f: tuple(np.round(np.asarray(f), 9).ravel().tolist())
    agree = sorted(map(key, solver)) == sorted(map(key, truth))
    game = mk.markov_game(model)
    up = learn(game, "up", tol, max_iter)
    down = learn(game, "down", tol, max_iter)
    as_flows = [mk.as_measure_flow(f) for f in truth]
    least = all(flow_leq(up.limit, f) for f in as_flows) and any(flow_distance(up.limit, f) <= tol for f in as_flows)
    greatest = all(flow_leq(f, down.limit) for f in as_flows) and any(flow_distance(down.limit, f) <= tol for f in as_flows)
    return _result("oracle", {
        "equilibrium_set_agreement": {"solver": len(solver), "oracle": len(truth), "passed": agree},
        "up_limit_is_least": {"converged": up.converged, "passed": bool(up.converged and least)},
        "down_limit_is_greatest": {"converged": down.converged, "passed": bool(down.converged and greatest)},
    })


# ---------------------------------------------------------------------------
# stopping


def stopping_supermodularity_suite(tree, costs, rng: np.random.Generator, n: int = 100) -> dict:
    gaps, cross_fail, chain_fail = [], 0, 0
    for _ in range(n):
        r1, r2 = st.StoppingRule.random(tree, rng), st.StoppingRule.random(tree, rng)
        a, b = st.random_subflow(tree, costs, rng), st.random_subflow(tree, costs, rng)
        rep = st.supermodular_identity_check(tree, flow_meet(a, b), r1, r2, costs, m_bar=flow_join(a, b))
        gaps.append(rep.modularity_gap)
        cross_fail += rep.cross_gap is not None and rep.cross_gap < -LAW_TOL
        chain_fail += not rep.projection_chain
    worst = max(gaps) if gaps else 0.0
    return _result("supermodularity", {
        "modularity_identity": {"max_gap": worst, "samples": n, "passed": worst <= LAW_TOL},
        "increasing_differences": {"violations": int(cross_fail), "passed": cross_fail == 0},
        "projection_chain": {"violations": int(chain_fail), "passed": chain_fail == 0},
    })


def stopping_f_suite(tree, costs, rng: np.random.Generator, n: int = 50) -> dict:
    mono = st.f_monotonicity_probe(tree, costs, rng, n)
    signs = st.check_costs(tree, costs)
    return _result("f_monotonicity", {"f_monotone_in_measure": mono, "nonnegative_costs": signs})


def stopping_oracle_suite(tree, costs, rng: np.random.Generator, n_flows: int = 20, tol: float = 1e-9,
                          max_iter: int | None = None) -> dict:
    taus = oracle.enumerate_stopping_times(tree)
    gap, minimal_fail = 0.0, 0
    for _ in range(n_flows):
        m = st.random_subflow(tree, costs, rng)
        res = oracle.stopping_oracle(tree, m, costs, taus=taus)
        rule = st.optimal_rule(tree, m, costs)
        gap = max(gap, abs(st.profit(tree, rule, m, costs) - res.max_profit))
        low = res.minimal()
        minimal_fail += low is None or not np.array_equal(low, rule.stopping_time(tree))
    chain = st.stopping_learn(tree, costs, tol, max_iter)
    eqs = oracle.stopping_equilibria_oracle(tree, costs)
    match = eqs.minimal is not None and flow_distance(chain.limit, eqs.minimal) <= 1e-12
    fixed = float(st.fixed_point_gap(tree, chain.limit, costs).max())
    return _result("oracle", {
        "optimal_profit_agreement": {"max_gap": gap, "flows": n_flows, "passed": gap <= 1e-12},
        "minimal_optimal_rule": {"failures": int(minimal_fail), "passed": minimal_fail == 0},
        "learning_limit_is_minimal_equilibrium": {"converged": chain.converged, "equilibria": len(eqs.flows),
                                                  "passed": bool(chain.converged and match)},
        "fixed_point_identity": {"max_gap": fixed, "passed": fixed <= 1e-12},
    })
