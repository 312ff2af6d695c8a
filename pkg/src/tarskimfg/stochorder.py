"""Sub-probability measures on a real grid ordered by first-order stochastic dominance.

A measure is stored through its survival function ``s -> mu((s, inf))``.  On a
finite grid ``x_0 < ... < x_{k-1}`` that function is a right-continuous step
function: it equals ``total_mass`` left of ``x_0``, ``survival[i]`` on
``[x_i, x_{i+1})`` and ``0`` from ``x_{k-1}`` on.  Meet and join are the
pointwise minimum and maximum of survival functions evaluated on the union of
the two grids, so every operation here is exact up to the comparison
tolerance ``EPS``.

Flows are finite families of measures indexed by cells ``(t, scenario)`` with
nonnegative weights; two flows are compared cellwise on positive-weight cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Sequence

import numpy as np

from .errors import ShapeError

EPS = 1e-12

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class SurvivalMeasure:
    points: np.ndarray
    survival: np.ndarray
    total_mass: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1)
        srv = np.asarray(self.survival, dtype=float).reshape(-1)
        if pts.shape != srv.shape:
            raise ValueError("points and survival must have the same length")
        if pts.size and np.any(np.diff(pts) <= 0):
            raise ValueError("support points must be strictly increasing")
        if not np.all(np.isfinite(pts)):
            raise ValueError("support points must be finite")
        total = float(self.total_mass)
        if not (-EPS <= total <= 1.0 + EPS):
            raise ValueError(f"total mass {total} outside [0, 1]")
        if srv.size:
            if np.any(srv < -EPS) or np.any(srv > 1.0 + EPS):
                raise ValueError("survival values must lie in [0, 1]")
            if np.any(np.diff(srv) > EPS) or srv[0] > total + EPS:
                raise ValueError("survival function must be nonincreasing")
            if abs(srv[-1]) > EPS:
                raise ValueError("survival must vanish at the last support point")
            srv = srv.copy()
            srv[-1] = 0.0
        elif abs(total) > EPS:
            raise ValueError("a measure with empty support must have zero mass")
        pts.flags.writeable = False
        srv.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "survival", srv)
        object.__setattr__(self, "total_mass", total)

    @classmethod
    def from_atoms(cls, points: Sequence[float], masses: Sequence[float]) -> SurvivalMeasure:
        """Build a measure from ``(point, mass)`` atoms; duplicate points are merged."""
        pts = np.asarray(points, dtype=float).reshape(-1)
        ms = np.asarray(masses, dtype=float).reshape(-1)
        if pts.shape != ms.shape:
            raise ValueError("points and masses must have the same length")
        if np.any(ms < -EPS):
            raise ValueError("atom masses must be nonnegative")
        ms = np.clip(ms, 0.0, None)
        grid, inverse = np.unique(pts, return_inverse=True)
        merged = np.zeros(grid.size)
        np.add.at(merged, inverse, ms)
        # survival[i] = sum of masses strictly right of grid[i]
        tail = np.cumsum(merged[::-1])[::-1]
        survival = np.concatenate([tail[1:], [0.0]]) if grid.size else tail
        total = float(tail[0]) if grid.size else 0.0
        return cls(grid, survival, total)

    @classmethod
    def null(cls, points: Sequence[float] = ()) -> SurvivalMeasure:
        pts = np.asarray(points, dtype=float).reshape(-1)
        return cls(pts, np.zeros(pts.size), 0.0)

    @classmethod
    def dirac(cls, x: float, mass: float = 1.0) -> SurvivalMeasure:
        return cls.from_atoms([x], [mass])

    @property
    def masses(self) -> np.ndarray:
        """Atom masses at the support points."""
        if not self.points.size:
            return np.zeros(0)
        upper = np.concatenate([[self.total_mass], self.survival[:-1]])
        return np.clip(upper - self.survival, 0.0, None)

    def atoms(self) -> list[tuple[float, float]]:
        return [(float(x), float(m)) for x, m in zip(self.points, self.masses)]

    def survival_at(self, s) -> np.ndarray:
        """Evaluate ``mu((s, inf))`` at arbitrary real points."""
        s = np.asarray(s, dtype=float)
        idx = np.searchsorted(self.points, s, side="right") - 1
        padded = np.concatenate([[self.total_mass], self.survival])
        return padded[idx + 1]

    def integrate(self, h) -> float:
        """Integral of a function ``h`` against the measure."""
        return float(sum(h(x) * m for x, m in zip(self.points, self.masses)))

    def __repr__(self):
        atoms = ", ".join(f"{x:g}:{m:.6g}" for x, m in self.atoms() if m > 0)
        return f"SurvivalMeasure({{{atoms}}}, mass={self.total_mass:.6g})"


def union_grid(*measures: SurvivalMeasure) -> np.ndarray:
    if not measures:
        return np.zeros(0)
    return np.unique(np.concatenate([m.points for m in measures]))


def _profiles(a: SurvivalMeasure, b: SurvivalMeasure):
    grid = union_grid(a, b)
    return grid, a.survival_at(grid), b.survival_at(grid)


def leq_st(a: SurvivalMeasure, b: SurvivalMeasure, tol: float = EPS) -> bool:
    """``a <=_st b``: the survival function of ``a`` lies below that of ``b``."""
    if a.total_mass > b.total_mass + tol:
        return False
    _, sa, sb = _profiles(a, b)
    return bool(np.all(sa <= sb + tol))


def meet_st(a: SurvivalMeasure, b: SurvivalMeasure) -> SurvivalMeasure:
    grid, sa, sb = _profiles(a, b)
    return SurvivalMeasure(grid, np.minimum(sa, sb), min(a.total_mass, b.total_mass))


def join_st(a: SurvivalMeasure, b: SurvivalMeasure) -> SurvivalMeasure:
    grid, sa, sb = _profiles(a, b)
    return SurvivalMeasure(grid, np.maximum(sa, sb), max(a.total_mass, b.total_mass))


def sup_distance(a: SurvivalMeasure, b: SurvivalMeasure) -> float:
    """Sup-norm gap between survival functions (total masses included)."""
    _, sa, sb = _profiles(a, b)
    gap = abs(a.total_mass - b.total_mass)
    if sa.size:
        gap = max(gap, float(np.max(np.abs(sa - sb))))
    return gap


def same_measure(a: SurvivalMeasure, b: SurvivalMeasure, tol: float = EPS) -> bool:
    return sup_distance(a, b) <= tol


def sup_st(family: Iterable[SurvivalMeasure]) -> SurvivalMeasure:
    """Least upper bound: the pointwise supremum of the survival functions."""
    family = list(family)
    if not family:
        raise ValueError("supremum of an empty family")
    grid = union_grid(*family)
    values = np.max([m.survival_at(grid) for m in family], axis=0)
    return SurvivalMeasure(grid, values, max(m.total_mass for m in family))


def lsc_envelope_inf(family: Iterable[SurvivalMeasure]) -> SurvivalMeasure:
    """Greatest lower bound of a family of measures.

    The pointwise infimum ``F`` of the survival functions is replaced by its
    right limit ``F(s+) = sup_{d>0} F(s + d)``.  Between consecutive union-grid
    points every member is constant, so the right limit at ``x_i`` is the
    infimum taken inside ``(x_i, x_{i+1})``; that is where it is evaluated.
    """
    family = list(family)
    if not family:
        raise ValueError("infimum of an empty family")
    grid = union_grid(*family)
    if grid.size == 0:
        return SurvivalMeasure.null()
    probes = np.concatenate([(grid[:-1] + grid[1:]) / 2.0, [grid[-1] + 1.0]])
    values = np.min([m.survival_at(probes) for m in family], axis=0)
    return SurvivalMeasure(grid, values, min(m.total_mass for m in family))


def standard_normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


def measure_functional(m: SurvivalMeasure) -> float:
    """``int Phi dm`` written as a nonnegative combination of survival values.

    ``Phi(x_0) * M + sum_i S(x_i) (Phi(x_{i+1}) - Phi(x_i))`` equals the atom
    sum ``sum_i Phi(x_i) m_i``; every coefficient is nonnegative, so the
    rounded value cannot decrease when the measure increases.
    """
    if not m.points.size:
        return 0.0
    phi = np.array([standard_normal_cdf(x) for x in m.points])
    return float(phi[0] * m.total_mass + np.dot(m.survival[:-1], np.diff(phi)))


# ---------------------------------------------------------------------------
# flows


def default_weights(horizon: int, dt: float = 1.0) -> np.ndarray:
    """Discrete analogue of ``dt + delta_T`` on ``{0, ..., T}``."""
    w = np.full(horizon + 1, float(dt))
    w[-1] += 1.0
    return w


@dataclass(frozen=True, eq=False)
class MeasureFlow:
    """One measure per cell ``(t, scenario)``; ``scenario`` is ``None`` without common noise."""

    measures: tuple
    weights: np.ndarray
    cells: tuple = field(default=())

    def __post_init__(self):
        measures = tuple(self.measures)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        cells = tuple(self.cells) or tuple((t, None) for t in range(len(measures)))
        if not (len(measures) == w.size == len(cells)):
            raise ShapeError("measures, weights and cells must have equal length")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        w.flags.writeable = False
        object.__setattr__(self, "measures", measures)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "cells", tuple(tuple(c) for c in cells))

    @classmethod
    def over_times(cls, measures: Sequence[SurvivalMeasure], dt: float = 1.0, weights=None) -> MeasureFlow:
        measures = tuple(measures)
        if weights is None:
            weights = default_weights(len(measures) - 1, dt)
        return cls(measures, weights, tuple((t, None) for t in range(len(measures))))

    def __len__(self):
        return len(self.measures)

    def __getitem__(self, i) -> SurvivalMeasure:
        return self.measures[i]

    def replace(self, measures: Sequence[SurvivalMeasure]) -> MeasureFlow:
        return MeasureFlow(tuple(measures), self.weights, self.cells)

    def active(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)


def _check_compatible(flows: Sequence[MeasureFlow]):
    first = flows[0]
    for other in flows[1:]:
        if other.cells != first.cells or not np.array_equal(other.weights, first.weights):
            raise ShapeError("flows are indexed by different cells or weights")


def flow_leq(a: MeasureFlow, b: MeasureFlow, tol: float = EPS) -> bool:
    _check_compatible([a, b])
    return all(leq_st(a[i], b[i], tol) for i in a.active())


def flow_meet(a: MeasureFlow, b: MeasureFlow) -> MeasureFlow:
    _check_compatible([a, b])
    return a.replace(meet_st(x, y) for x, y in zip(a.measures, b.measures))


def flow_join(a: MeasureFlow, b: MeasureFlow) -> MeasureFlow:
    _check_compatible([a, b])
    return a.replace(join_st(x, y) for x, y in zip(a.measures, b.measures))


def flow_sup(family: Sequence[MeasureFlow]) -> MeasureFlow:
    family = list(family)
    if not family:
        raise ValueError("supremum of an empty family")
    _check_compatible(family)
    return family[0].replace(sup_st(cell) for cell in zip(*(f.measures for f in family)))


def flow_inf(family: Sequence[MeasureFlow]) -> MeasureFlow:
    family = list(family)
    if not family:
        raise ValueError("infimum of an empty family")
    _check_compatible(family)
    return family[0].replace(lsc_envelope_inf(cell) for cell in zip(*(f.measures for f in family)))


def flow_distance(a: MeasureFlow, b: MeasureFlow) -> float:
    """Largest survival-function gap over positive-weight cells."""
    _check_compatible([a, b])
    return max((sup_distance(a[i], b[i]) for i in a.active()), default=0.0)


def flow_equal(a: MeasureFlow, b: MeasureFlow, tol: float = EPS) -> bool:
    return flow_distance(a, b) <= tol


def strict_functional(m: MeasureFlow) -> float:
    """``sum_cells weight * int Phi d(m_cell)`` with ``Phi`` the standard normal CDF.

    Strictly increasing for the cellwise order on positive-weight cells.
    """
    return float(sum(w * measure_functional(mu) for w, mu in zip(m.weights, m.measures) if w > 0))


# ---------------------------------------------------------------------------
# constraint sets


@dataclass(frozen=True)
class ConstraintLattice:
    """A sublattice of sub-probability measures closed under countable sup/inf."""

    kind: str
    lower: SurvivalMeasure | None = None
    upper: SurvivalMeasure | None = None
    a: float = -math.inf
    b: float = math.inf

    KINDS = ("subprobabilities", "probabilities", "order_interval", "support_interval", "singleton")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "order_interval":
            if self.lower is None or self.upper is None:
                raise ValueError("an order interval needs both bounds")
            if not leq_st(self.lower, self.upper):
                raise ValueError("order interval bounds are not ordered")
        if self.kind == "singleton" and self.lower is None:
            raise ValueError("a singleton constraint needs its element")
        if self.kind == "support_interval" and self.a > self.b:
            raise ValueError("support interval with a > b")

    @classmethod
    def subprobabilities(cls):
        return cls("subprobabilities")

    @classmethod
    def probabilities(cls):
        return cls("probabilities")

    @classmethod
    def order_interval(cls, lower: SurvivalMeasure, upper: SurvivalMeasure):
        return cls("order_interval", lower=lower, upper=upper)

    @classmethod
    def support_interval(cls, a: float = -math.inf, b: float = math.inf):
        return cls("support_interval", a=a, b=b)

    @classmethod
    def singleton(cls, element: SurvivalMeasure):
        return cls("singleton", lower=element, upper=element)

    def contains(self, m: SurvivalMeasure, tol: float = EPS) -> bool:
        if self.kind == "subprobabilities":
            return True
        if self.kind == "probabilities":
            return abs(m.total_mass - 1.0) <= tol
        if self.kind == "order_interval":
            return leq_st(self.lower, m, tol) and leq_st(m, self.upper, tol)
        if self.kind == "support_interval":
            outside = (m.points < self.a) | (m.points > self.b)
            return bool(np.all(m.masses[outside] <= tol))
        return same_measure(m, self.lower, tol)


def flow_satisfies(m: MeasureFlow, constraints: dict[Hashable, ConstraintLattice], tol: float = EPS) -> bool:
    """Check per-cell constraints; keys are cells ``(t, scenario)`` or bare times ``t``."""
    for cell, mu, w in zip(m.cells, m.measures, m.weights):
        if w <= 0:
            continue
        for key in (cell, cell[0]):
            c = constraints.get(key)
            if c is not None and not c.contains(mu, tol):
                return False
    return True


# ---------------------------------------------------------------------------
# JSON


def measure_to_json(m: SurvivalMeasure) -> list[list[float]]:
    return [[x, w] for x, w in m.atoms()]


def measure_from_json(data: Iterable[Sequence[float]]) -> SurvivalMeasure:
    pairs = [tuple(p) for p in data]
    if not pairs:
        return SurvivalMeasure.null()
    pts, ms = zip(*pairs)
    return SurvivalMeasure.from_atoms(pts, ms)


def flow_to_json(m: MeasureFlow) -> dict[str, Any]:
    return {
        "cells": [list(c) for c in m.cells],
        "weights": [float(w) for w in m.weights],
        "measures": [measure_to_json(mu) for mu in m.measures],
    }


def flow_from_json(data: dict[str, Any]) -> MeasureFlow:
    measures = [measure_from_json(x) for x in data["measures"]]
    cells = tuple(tuple(c) for c in data.get("cells", ())) or tuple((t, None) for t in range(len(measures)))
    weights = data.get("weights")
    if weights is None:
        weights = default_weights(len(measures) - 1)
    return MeasureFlow(tuple(measures), weights, cells)
