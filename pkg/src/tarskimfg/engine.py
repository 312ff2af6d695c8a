"""Monotone best-response iteration on a lattice of flows.

Starting from the bottom of the lattice and repeatedly applying the smallest
best response yields a nondecreasing chain whose limit is the least
equilibrium; starting from the top with the largest best response yields the
greatest one.  The engine only consumes those two selections, checks every
step of the chain against the order, and stops on a fixed-point residual.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Callable, Sequence

from .errors import StructuralAssumptionViolation
from .stochorder import (
    flow_distance,
    flow_join,
    flow_leq,
    flow_meet,
    flow_to_json,
    strict_functional,
)

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 1000


@dataclass
class GameInterface:
    bottom: Any
    top: Any
    best_response_inf: Callable[[Any], Any]
    best_response_sup: Callable[[Any], Any]
    distance: Callable[[Any, Any], float] = flow_distance
    leq: Callable[[Any, Any], bool] = flow_leq
    functional: Callable[[Any], float] | None = strict_functional
    max_iter: int = DEFAULT_MAX_ITER


@dataclass
class IterateChain:
    iterates: list
    direction: str
    monotone_certificate: list[bool] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    f_values: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def residual(self) -> float:
        return self.residuals[-1] if self.residuals else float("inf")

    @property
    def iterations(self) -> int:
        """Number of best-response evaluations performed."""
        return len(self.residuals)

    @property
    def limit(self):
        return self.iterates[-1]

    @property
    def monotone(self) -> bool:
        return all(self.monotone_certificate)

    def trace_rows(self) -> list[dict]:
        rows = []
        for n, (res, ok) in enumerate(zip(self.residuals, self.monotone_certificate), start=1):
            rows.append({
                "iteration": n,
                "residual": res,
                "F_value": self.f_values[n] if n < len(self.f_values) else "",
                "monotone_ok": ok,
            })
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["iteration", "residual", "F_value", "monotone_ok"], lineterminator="\n")
        writer.writeheader()
        for row in self.trace_rows():
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        return buf.getvalue()

    def to_json(self, include_iterates: bool = True, encode: Callable | None = flow_to_json) -> dict:
        out = {
            "direction": self.direction,
            "converged": self.converged,
            "iterations": self.iterations,
            "residuals": list(self.residuals),
            "monotone_certificate": list(self.monotone_certificate),
            "F_values": list(self.f_values),
        }
        if include_iterates and encode is not None:
            out["iterates"] = [encode(m) for m in self.iterates]
        return out


def learn(
    game: GameInterface,
    direction: str = "up",
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    strict: bool = True,
) -> IterateChain:
    """Iterate the extremal best response from the bottom (``up``) or top (``down``).

    The chain stores ``m^0, m^1, ...`` with ``m^n`` the selection applied to
    ``m^{n-1}``; it stops once ``distance(m^{n-1}, m^n) <= tol``.  A step that
    breaks monotonicity raises :class:`StructuralAssumptionViolation` unless
    ``strict`` is false, in which case it is only recorded.
    """
    if direction not in ("up", "down"):
        raise ValueError("direction must be 'up' or 'down'")
    if max_iter is None:
        max_iter = game.max_iter
    select = game.best_response_inf if direction == "up" else game.best_response_sup
    current = game.bottom if direction == "up" else game.top
    chain = IterateChain([current], direction)
    if game.functional is not None:
        chain.f_values.append(game.functional(current))
    for n in range(1, max_iter + 1):
        nxt = select(current)
        ok = game.leq(current, nxt) if direction == "up" else game.leq(nxt, current)
        res = game.distance(current, nxt)
        chain.iterates.append(nxt)
        chain.monotone_certificate.append(bool(ok))
        chain.residuals.append(float(res))
        if game.functional is not None:
            chain.f_values.append(game.functional(nxt))
        logger.debug("%s step %d: residual=%.3e monotone=%s", direction, n, res, ok)
        if not ok and strict:
            order = "<=" if direction == "up" else ">="
            raise StructuralAssumptionViolation(
                f"{direction}-chain step {n}: new iterate is not {order} its predecessor; "
                "the best-response selection is not monotone",
                step=n,
                invariant="monotone_chain",
            )
        if res <= tol:
            chain.converged = True
            break
        current = nxt
    return chain


def fixed_point_residual(m, game: GameInterface, selection: str = "either") -> float:
    """Distance from ``m`` to its smallest (``inf``) or largest (``sup``) best response.

    With ``either`` the smaller of the two is returned; it vanishes whenever
    ``m`` coincides with one of the extremal selections, as the limits of the
    up- and down-chains do.
    """
    lo = lambda: float(game.distance(m, game.best_response_inf(m)))
    hi = lambda: float(game.distance(m, game.best_response_sup(m)))
    if selection == "inf":
        return lo()
    if selection == "sup":
        return hi()
    if selection != "either":
        raise ValueError("selection must be 'inf', 'sup' or 'either'")
    return min(lo(), hi())


@dataclass
class SubmodularityReport:
    checked: int = 0
    violations: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def submodularity_probe(
    J: Callable[[Any, Any], float],
    meet_E: Callable[[Any, Any], Any],
    join_E: Callable[[Any, Any], Any],
    samples: Sequence[tuple],
    tol: float = 1e-12,
) -> SubmodularityReport:
    """Check the decreasing-differences chain on ``(nu, nu_bar, mu, mu_bar)`` samples, ``mu <= mu_bar``.

    J(nu v nu_bar, mu_bar) - J(nu_bar, mu_bar) <= J(nu v nu_bar, mu) - J(nu_bar, mu)
                                               <= J(nu, mu) - J(nu ^ nu_bar, mu)
    """
    report = SubmodularityReport()
    for k, (nu, nu_bar, mu, mu_bar) in enumerate(samples):
        up = join_E(nu, nu_bar)
        down = meet_E(nu, nu_bar)
        left = J(up, mu_bar) - J(nu_bar, mu_bar)
        middle = J(up, mu) - J(nu_bar, mu)
        right = J(nu, mu) - J(down, mu)
        report.checked += 1
        if left > middle + tol:
            report.violations.append({"sample": k, "inequality": "increasing_differences", "slack": middle - left})
        if middle > right + tol:
            report.violations.append({"sample": k, "inequality": "submodularity", "slack": right - middle})
    return report


@dataclass
class DirectednessReport:
    size: int
    directed_down: bool
    directed_up: bool
    inf_attained: bool
    sup_attained: bool
    inf: Any = None
    sup: Any = None
    method: str = "pairwise"

    @property
    def directed(self) -> bool:
        return self.directed_down and self.directed_up


def directedness_probe(
    best_response_set: Callable[[Any], Sequence],
    m,
    leq: Callable = flow_leq,
    meet: Callable = flow_meet,
    join: Callable = flow_join,
    pair_limit: int = 64,
) -> DirectednessReport:
    """Check that the best-response set at ``m`` is directed and holds its inf and sup.

    Sets with at most ``pair_limit`` elements are checked pair by pair.  For
    larger sets an attained infimum (supremum) already lies below (above)
    every pairwise meet (join), so attainment is checked instead and the
    pairwise search only runs when it fails.
    """
    elements = list(best_response_set(m))
    if not elements:
        raise ValueError("empty best-response set")
    lo = elements[0]
    hi = elements[0]
    for e in elements[1:]:
        lo = meet(lo, e)
        hi = join(hi, e)
    inf_hit = next((e for e in elements if leq(e, lo) and leq(lo, e)), None)
    sup_hit = next((e for e in elements if leq(e, hi) and leq(hi, e)), None)

    def pairwise(lower: bool) -> bool:
        for x, y in combinations(elements, 2):
            if lower:
                bound = meet(x, y)
                if not any(leq(z, bound) for z in elements):
                    return False
            else:
                bound = join(x, y)
                if not any(leq(bound, z) for z in elements):
                    return False
        return True

    if len(elements) <= pair_limit:
        down, up, method = pairwise(True), pairwise(False), "pairwise"
    else:
        down = inf_hit is not None or pairwise(True)
        up = sup_hit is not None or pairwise(False)
        method = "extremal"
    return DirectednessReport(len(elements), down, up, inf_hit is not None, sup_hit is not None, lo, hi, method)
