"""Privacy budget types, the budget-setting rule, and group-privacy arithmetic.

Budgets come in three flavors. A metric budget (alpha, delta) scales the
indistinguishability strength with the earth mover's distance between inputs,
so alpha carries inverse-distance units. A discrete budget (epsilon, delta, r)
grants a uniform unitless guarantee to every pair of inputs within distance r.
The budget-setting rule converts a list of concrete protection requirements
("a tau-fraction of the data changed by average distance q must be protected
at epsilon_max") into the largest admissible alpha.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

# Relative guard absorbing float slack in d/r before taking the ceiling,
# so that d exactly equal to a multiple of r maps to that multiple.
_CEIL_GUARD = 1e-12


@dataclass(frozen=True)
class MetricBudget:
    """(alpha, delta) budget; alpha has units of inverse distance."""

    alpha: float
    delta: float = 0.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if not (0.0 <= self.delta < 1.0):
            raise ValueError("delta must lie in [0, 1)")


@dataclass(frozen=True)
class DiscreteBudget:
    """(epsilon, delta, r) budget: uniform (epsilon, delta) within radius r."""

    epsilon: float
    delta: float
    r: float

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if not (0.0 <= self.delta < 1.0):
            raise ValueError("delta must lie in [0, 1)")
        if not (0.0 < self.r <= 1.0):
            raise ValueError("radius r must lie in (0, 1]")


@dataclass(frozen=True)
class Requirement:
    """Protect changes of a tau-fraction by average distance q at epsilon_max."""

    q: float
    tau: float
    epsilon_max: float

    def __post_init__(self):
        if not (0.0 < self.q <= 1.0):
            raise ValueError("q must lie in (0, 1]")
        if not (0.0 < self.tau <= 1.0):
            raise ValueError("tau must lie in (0, 1]")
        if self.epsilon_max <= 0:
            raise ValueError("epsilon_max must be positive")


def alpha_from_requirements(reqs: Sequence[Requirement]) -> float:
    """Largest alpha meeting every requirement: min over epsilon_max / (q tau).

    A change moving a tau-fraction of the data by average distance q has
    earth mover's distance q*tau, so a metric budget alpha protects it at
    alpha*q*tau; the binding requirement determines alpha.
    """
    if not reqs:
        raise ValueError("need at least one requirement")
    return min(r.epsilon_max / (r.q * r.tau) for r in reqs)


def group_privacy(budget: DiscreteBudget, d: float, table_variant: bool = False) -> tuple[float, float]:
    """Effective (epsilon, delta) for a change of distance d under a discrete budget.

    The guarantee degrades in steps of the radius: with j = ceil(d / r), the
    pair is protected at (epsilon * j, delta * exp(j)). ``table_variant``
    selects the alternative delta inflation delta * exp(epsilon * j).
    """
    if d <= 0:
        raise ValueError("distance d must be positive")
    j = math.ceil(d / budget.r - _CEIL_GUARD)
    eps_eff = budget.epsilon * j
    if table_variant:
        delta_eff = budget.delta * math.exp(budget.epsilon * j)
    else:
        delta_eff = budget.delta * math.exp(j)
    return eps_eff, delta_eff
