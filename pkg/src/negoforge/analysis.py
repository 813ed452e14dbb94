"""Outcome-space analytics: Pareto frontier, Nash point, utility-space distances.

All operations enumerate the outcome space and are guarded by a configurable
cap. Dominance is weak-Pareto: an outcome is dominated iff another is >= in
both utilities and > in at least one. The disagreement point is (0, 0), so
the Nash point maximizes the plain product of the two utilities.
"""

from __future__ import annotations

import math

import numpy as np

from .problems import (
    DEFAULT_ENUMERATION_CAP,
    BargainingProblem,
    Outcome,
    check_outcome,
)


def bi_utilities(problem: BargainingProblem, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """(n_outcomes, 2) array of (u_A, u_B) in lexicographic outcome order."""
    u_a = problem.view("A").all_utilities(cap)
    u_b = problem.view("B").all_utilities(cap)
    return np.column_stack([u_a, u_b])


def _frontier_mask(points: np.ndarray) -> np.ndarray:
    """Boolean mask of non-dominated rows of an (n, 2) utility array.

    Sort by u_A desc (u_B desc to break ties), then sweep: a point survives
    iff its u_B strictly exceeds every strictly-higher-u_A point's u_B and it
    ties the best u_B within its own u_A group. Duplicate (u_A, u_B) points
    are mutually non-dominating and all survive.
    """
    n = len(points)
    order = np.lexsort((-points[:, 1], -points[:, 0]))
    mask = np.zeros(n, dtype=bool)
    best_b_above = -np.inf  # max u_B among strictly higher u_A
    i = 0
    while i < n:
        j = i
        a = points[order[i], 0]
        group_best_b = points[order[i], 1]  # sorted desc within group
        while j < n and points[order[j], 0] == a:
            j += 1
        if group_best_b > best_b_above:
            for k in range(i, j):
                if points[order[k], 1] == group_best_b:
                    mask[order[k]] = True
                else:
                    break
            best_b_above = group_best_b
        else:
            best_b_above = max(best_b_above, group_best_b)
        i = j
    return mask


def pareto_frontier(
    problem: BargainingProblem, cap: int = DEFAULT_ENUMERATION_CAP
) -> list[Outcome]:
    """All non-dominated outcomes, in lexicographic outcome order."""
    points = bi_utilities(problem, cap)
    mask = _frontier_mask(points)
    shape = problem.shape
    return [tuple(int(v) for v in np.unravel_index(i, shape)) for i in np.flatnonzero(mask)]


def frontier_utilities(problem: BargainingProblem, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    points = bi_utilities(problem, cap)
    return points[_frontier_mask(points)]


def nash_point(problem: BargainingProblem, cap: int = DEFAULT_ENUMERATION_CAP) -> Outcome:
    """Outcome maximizing u_A * u_B; ties break to the lowest lexicographic index."""
    points = bi_utilities(problem, cap)
    best = int(np.argmax(points[:, 0] * points[:, 1]))  # argmax returns first max
    return tuple(int(v) for v in np.unravel_index(best, problem.shape))


def point_distance(problem: BargainingProblem, point: tuple[float, float],
                   cap: int = DEFAULT_ENUMERATION_CAP) -> tuple[float, float]:
    """(pareto_distance, nash_distance) of an arbitrary (u_A, u_B) point.

    Used for failed sessions, which score from (0, 0).
    """
    frontier = frontier_utilities(problem, cap)
    diffs = frontier - np.asarray(point, dtype=float)
    pareto_d = float(np.sqrt(np.min(np.sum(diffs * diffs, axis=1))))
    nash = nash_point(problem, cap)
    nash_u = (problem.view("A").utility(nash), problem.view("B").utility(nash))
    nash_d = math.dist(point, nash_u)
    return pareto_d, nash_d


def pareto_distance(problem: BargainingProblem, outcome: Outcome,
                    cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    """Euclidean distance in (u_A, u_B) space to the nearest frontier point."""
    check_outcome(problem, outcome)
    point = (problem.view("A").utility(outcome), problem.view("B").utility(outcome))
    return point_distance(problem, point, cap)[0]


def nash_distance(problem: BargainingProblem, outcome: Outcome,
                  cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    """Euclidean distance in (u_A, u_B) space to the Nash point."""
    check_outcome(problem, outcome)
    point = (problem.view("A").utility(outcome), problem.view("B").utility(outcome))
    return point_distance(problem, point, cap)[1]
