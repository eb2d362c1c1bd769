import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boblocks.acqopt import (AcqOptConfig, default_budget, ls_run_count, mutate, optimize_acq, optimize_cmaes,
                             optimize_local_search, optimize_random)
from boblocks.acquisition import ei
from boblocks.exceptions import AcqOptError, ConfigError
from boblocks.space import ParamSpace, p_dbl, p_fct
from boblocks.surrogate import GaussianProcessSurrogate

from .test_space import activity_matches_dependencies, spaces


class Counter:
    """Wraps a score function and counts every scored point."""

    def __init__(self, fn):
        self.fn = fn
        self.n = 0

    def __call__(self, points):
        self.n += len(points)
        return self.fn(points)


def unit_score(space, weights):
    def score(points):
        U = np.array([space._to_unit_unchecked(p) for p in points], float).reshape(len(points), -1)
        return -np.sum((np.nan_to_num(U, nan=0.5) - weights) ** 2, axis=1)
    return score


def square_space(d=2):
    return ParamSpace([p_dbl(f"x{i}", 0.0, 1.0) for i in range(d)])


def sphere(center):
    def score(points):
        X = np.array([[p[f"x{i}"] for i in range(len(center))] for p in points])
        return -np.sum((X - center) ** 2, axis=1)
    return score


# ------------------------------------------------------------------ config
def test_budget_defaults():
    assert default_budget(3) == 900
    assert default_budget(20) == 10_000
    assert AcqOptConfig(kind="rs1000").resolve_budget(50) == 1000
    assert AcqOptConfig(budget=7).resolve_budget(5) == 7
    for bad in ({"kind": "direct"}, {"budget": 0}, {"mutation_sd": 0.0}, {"n_neighbors": 0}):
        with pytest.raises(ConfigError):
            AcqOptConfig(**bad)


# ------------------------------------------------------------------ random search
def test_random_single_point_and_tie_rule(rng):
    space = square_space()
    cand = optimize_random(space, lambda pts: np.zeros(len(pts)), 1, np.random.default_rng(0))
    assert cand.n_evals == 1
    first = space.sample_random(50, np.random.default_rng(3))[0]
    cand = optimize_random(space, lambda pts: np.ones(len(pts)), 50, np.random.default_rng(3))
    assert cand.point == first
    with pytest.raises(ConfigError):
        optimize_random(space, lambda pts: np.zeros(len(pts)), 0)


def test_random_search_on_ei_landscape():
    space = ParamSpace([p_dbl("x", 0.0, 1.0)])
    xs = np.array([0.1, 0.3, 0.65, 1.0])
    ys = 2 * xs * np.sin(14 * xs)
    gp = GaussianProcessSurrogate(kernel="matern52", random_state=0).fit(xs[:, None], ys)
    f_min = ys.min()

    def score(points):
        X = np.array([[p["x"]] for p in points])
        return ei(*gp.predict(X, return_std=True), f_min)

    grid = np.linspace(0, 1, 100_000)
    target = ei(*gp.predict(grid[:, None], return_std=True), f_min).max()
    cand = optimize_random(space, score, 10_000, np.random.default_rng(0))
    assert cand.acq_value >= 0.99 * target


# ------------------------------------------------------------------ local search
def test_local_search_budget_is_exact(hier_space):
    for budget in (1, 9, 10, 37, 400):
        counter = Counter(unit_score(hier_space, 0.3))
        cand = optimize_local_search(hier_space, counter, AcqOptConfig(kind="local_search", budget=budget),
                                     np.random.default_rng(budget))
        assert counter.n == budget == cand.n_evals
        assert hier_space.validate(cand.point)[0]


def test_local_search_finds_preferred_level():
    space = ParamSpace([p_fct("f", ["a", "b"])])
    score = lambda pts: np.array([1.0 if p["f"] == "b" else 0.0 for p in pts])
    # one start point plus two rounds of ten neighbours
    cand = optimize_local_search(space, score, AcqOptConfig(kind="local_search", budget=21), np.random.default_rng(0))
    assert cand.point == {"f": "b"}


def test_concurrent_run_count():
    cfg = AcqOptConfig(kind="local_search")
    assert ls_run_count(cfg, 400) == 2
    assert ls_run_count(cfg, 2500) == 10
    assert ls_run_count(cfg, 5) == 1


def test_mutation_validity_on_hierarchical_space(hier_space):
    r = np.random.default_rng(0)
    point = hier_space.sample_random(1, r)[0]
    for _ in range(10_000):
        new = mutate(hier_space, point, r)
        assert hier_space.validate(new)[0]
        assert activity_matches_dependencies(hier_space, new)
        changed = [k for k in hier_space.names if new[k] != point[k]]
        # one parameter moves; dependants can only appear or disappear with it
        assert len([k for k in changed if hier_space[k].depends_on is None or point[k] is not None
                    and new[k] is not None]) <= 1
        point = new


def test_every_local_search_proposal_respects_dependencies(hier_space):
    seen = []

    def audit(p):
        assert activity_matches_dependencies(hier_space, p)
        seen.append(p)

    optimize_local_search(hier_space, unit_score(hier_space, 0.7), AcqOptConfig(kind="local_search", budget=500),
                          np.random.default_rng(1), on_proposal=audit)
    assert len(seen) > 400


def test_local_search_beats_random_search_on_quadratic():
    space = square_space()
    wins = 0
    for seed in range(100):
        center = np.random.default_rng(1000 + seed).uniform(size=2)
        ls = optimize_local_search(space, sphere(center), AcqOptConfig(kind="local_search", budget=400),
                                   np.random.default_rng(seed))
        rs = optimize_random(space, sphere(center), 400, np.random.default_rng(seed))
        wins += ls.acq_value >= rs.acq_value
    assert wins >= 90


# ------------------------------------------------------------------ CMA-ES
def test_cmaes_sphere():
    center = np.array([0.3, 0.8])
    cand = optimize_cmaes(square_space(), sphere(center), AcqOptConfig(kind="cmaes", budget=400),
                          np.random.default_rng(0))
    x = np.array([cand.point["x0"], cand.point["x1"]])
    assert np.linalg.norm(x - center) < 1e-2
    assert cand.n_evals == 400


def test_cmaes_one_dimension():
    space = ParamSpace([p_dbl("x", -2.0, 3.0)])
    cand = optimize_cmaes(space, lambda pts: np.array([-(p["x"] - 1.234) ** 2 for p in pts]),
                          AcqOptConfig(kind="cmaes", budget=400), np.random.default_rng(4))
    assert abs(cand.point["x"] - 1.234) < 1e-3


def test_cmaes_boundary_optimum_is_reached():
    center = np.array([1.3, -0.2])
    cand = optimize_cmaes(square_space(), sphere(center), AcqOptConfig(kind="cmaes", budget=600),
                          np.random.default_rng(2))
    np.testing.assert_allclose([cand.point["x0"], cand.point["x1"]], [1.0, 0.0], atol=1e-3)


def test_cmaes_partial_generation():
    counter = Counter(sphere(np.array([0.5, 0.5])))
    cand = optimize_cmaes(square_space(), counter, AcqOptConfig(kind="cmaes", budget=3), np.random.default_rng(0))
    assert counter.n == 3 and cand.n_evals == 3 and cand.point is not None


def test_cmaes_rejects_non_numeric(hier_space):
    with pytest.raises(ConfigError):
        optimize_cmaes(hier_space, unit_score(hier_space, 0.5), AcqOptConfig(kind="cmaes", budget=10))


# ------------------------------------------------------------------ dispatch and contracts
@pytest.mark.parametrize("kind", ["random_search", "rs1000", "local_search", "cmaes"])
def test_determinism(kind):
    space = square_space(3)
    cfg = AcqOptConfig(kind=kind, budget=300)
    a = optimize_acq(space, sphere(np.array([0.2, 0.4, 0.6])), cfg, np.random.default_rng(9))
    b = optimize_acq(space, sphere(np.array([0.2, 0.4, 0.6])), cfg, np.random.default_rng(9))
    assert a == b


def test_scoring_errors_are_wrapped():
    def broken(points):
        raise RuntimeError("surrogate down")

    with pytest.raises(AcqOptError):
        optimize_acq(square_space(), broken, AcqOptConfig(budget=5), np.random.default_rng(0))
    with pytest.raises(RuntimeError):
        optimize_acq(square_space(), broken, AcqOptConfig(budget=5, catch_errors=False), np.random.default_rng(0))


def test_nan_scores_never_win():
    space = square_space()
    cand = optimize_random(space, lambda pts: np.array([np.nan] * (len(pts) - 1) + [0.0]), 20,
                           np.random.default_rng(0))
    assert cand.acq_value == 0.0


@settings(max_examples=50)
@given(space=spaces(), seed=st.integers(0, 19), kind=st.sampled_from(["random_search", "local_search", "cmaes"]),
       budget=st.integers(1, 120))
def test_candidates_are_valid_and_budget_exact(space, seed, kind, budget):
    if kind == "cmaes" and not space.is_numeric:
        kind = "local_search"
    counter = Counter(unit_score(space, 0.25))
    cand = optimize_acq(space, counter, AcqOptConfig(kind=kind, budget=budget), np.random.default_rng(seed))
    assert space.validate(cand.point)[0]
    assert counter.n == cand.n_evals <= budget
    assert math.isfinite(cand.acq_value)
