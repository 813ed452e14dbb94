import numpy as np
import pytest

from negoforge.problems import (
    BargainingProblem,
    Issue,
    ProblemGenSpec,
    UtilityProfile,
    generate_problem,
)


def make_problem(id_, issues, weights_a, valuations_a, weights_b, valuations_b):
    return BargainingProblem(
        id=id_,
        issues=tuple(Issue(name, tuple(values)) for name, values in issues),
        profile_a=UtilityProfile(tuple(weights_a), tuple(tuple(v) for v in valuations_a)),
        profile_b=UtilityProfile(tuple(weights_b), tuple(tuple(v) for v in valuations_b)),
    )


@pytest.fixture
def two_value_problem():
    """One issue, two values: outcome (1,) scores (0.9, 0.6)."""
    return make_problem(
        "two-value",
        [("price", ["low", "high"])],
        [1.0], [[1.0, 0.9]],
        [1.0], [[1.0, 0.6]],
    )


@pytest.fixture
def opposed_problem():
    """Strictly opposed single issue: more for A is less for B."""
    return make_problem(
        "opposed",
        [("split", ["a", "b", "c", "d", "e"])],
        [1.0], [[1.0, 0.75, 0.5, 0.25, 0.0]],
        [1.0], [[0.0, 0.25, 0.5, 0.75, 1.0]],
    )


@pytest.fixture
def small_random_problems():
    spec = ProblemGenSpec(issues=(2, 3), values_per_issue=(2, 5))
    return [generate_problem(spec, seed) for seed in range(20)]


def assert_valid_problem(problem):
    for profile in (problem.profile_a, problem.profile_b):
        profile.validate(problem.issues)
    utils_a = problem.view("A").all_utilities()
    utils_b = problem.view("B").all_utilities()
    assert np.all(utils_a >= 0) and np.all(utils_a <= 1 + 1e-12)
    assert np.all(utils_b >= 0) and np.all(utils_b <= 1 + 1e-12)
