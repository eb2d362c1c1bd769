import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boblocks import oi, trm
from boblocks.bench import (BenchProblem, ConfigGrid, ExcludedProblem, GridParam, RsnsScale, TraceRecord,
                            budget_for, build_scale, builtin_problems, get_problem, rsns, rsns_std,
                            rsns_std_from_pool, run_cd, scale_from_values, separable_evaluator,
                            trace_from_archive, traces_from_csv, traces_to_csv)
from boblocks.bench.harness import run_config
from boblocks.bench.rsns import random_search_values
from boblocks.bench.traces import final_best, traces_from_jsonl, traces_to_jsonl
from boblocks.exceptions import ConfigError
from boblocks.space import ParamSpace, p_dbl

from .oracles import enumerate_grid, is_coordinatewise_optimal


# ------------------------------------------------------------------ problems
@pytest.mark.parametrize("d,rule,expected", [(1, "compare", 60), (1, "tune", 140), (2, "compare", 77),
                                             (3, "compare", 90), (3, "tune", 170), (5, "compare", 110)])
def test_budget_rules(d, rule, expected):
    assert budget_for(d, rule) == expected


def test_budget_rule_rejects_unknown():
    with pytest.raises(ValueError):
        budget_for(2, "long")


def test_problem_reference_values():
    sin = get_problem("sinusoidal")
    assert sin.fn({"x": 0.7921811}) == pytest.approx(-1.577, abs=5e-4)
    sph = get_problem("sphere3")
    assert sph.fn({"x1": 0.0, "x2": 0.0, "x3": 0.0}) == 0.0
    assert get_problem("sphere7").dim == 7
    br = get_problem("branin")
    for x1, x2 in ((-math.pi, 12.275), (math.pi, 2.275), (9.42478, 2.475)):
        assert br.fn({"x1": x1, "x2": x2}) == pytest.approx(5 / (4 * math.pi), abs=1e-5)
    bi = get_problem("biobjective")
    assert bi.fn({"x": 0.25}) == [0.0625, 0.5625]
    with pytest.raises(KeyError):
        get_problem("rosenbrock")
    assert [p.name for p in builtin_problems()] == ["sinusoidal", "sphere3", "branin", "hierarchical", "biobjective"]


def test_hierarchical_ignores_inactive_branch():
    h = get_problem("hierarchical")
    for p in h.space.sample_random(200, np.random.default_rng(0)):
        assert math.isfinite(h.fn(p))
    a = {"branch": "a", "a_x": 1.0, "a_k": 3, "b_x": None, "b_flag": None}
    b = {"branch": "b", "a_x": None, "a_k": None, "b_x": 0.1, "b_flag": True}
    assert h.fn(a) == 0.0 and h.fn(b) == pytest.approx(0.0, abs=1e-15)
    assert h.fn({**b, "b_flag": False}) == pytest.approx(0.3)


# ------------------------------------------------------------------ rsns
def test_rsns_anchor_points():
    scale = RsnsScale(0.5, 0.1)
    assert rsns(0.5, scale) == 0.0
    assert rsns(0.1, scale) == 1.0
    assert rsns(0.3, scale) == pytest.approx(0.5, abs=1e-15)
    assert rsns(0.0, scale) > 1.0
    np.testing.assert_allclose(rsns(np.array([0.5, 0.3]), scale), [0.0, 0.5])


def test_rsns_maximization_sign():
    scale = RsnsScale(v0=2.0, v1=6.0, sign=-1.0)
    assert rsns(2.0, scale) == 0.0
    assert rsns(6.0, scale) == 1.0
    assert rsns(4.0, scale) == pytest.approx(0.5)


def test_rsns_degenerate_scale():
    with pytest.raises(ExcludedProblem):
        rsns(1.0, RsnsScale(1.0, 1.0))


@settings(max_examples=60)
@given(a=st.floats(1e-2, 1e2), c=st.floats(-1e2, 1e2), seed=st.integers(0, 2**16))
def test_rsns_affine_invariance(a, c, seed):
    # shifts far beyond the scaled spread lose digits in a*y + c itself, before any scoring
    values = random_search_values(get_problem("branin"), 500, np.random.default_rng(seed))
    bests = np.array([0.4, 1.0, 3.5, values.min(), values.max()])
    base = rsns(bests, scale_from_values(values, 20, 30, np.random.default_rng(seed)))
    moved = rsns(a * bests + c, scale_from_values(a * values + c, 20, 30, np.random.default_rng(seed)))
    np.testing.assert_allclose(moved, base, rtol=0, atol=1e-12 * max(1.0, np.abs(base).max()))


def identity_problem():
    return BenchProblem("identity", ParamSpace([p_dbl("x", 0.0, 1.0)]), lambda p: p["x"])


def test_build_scale_degenerate_problem_is_excluded():
    with pytest.raises(ExcludedProblem):
        build_scale(identity_problem(), long_budget=20, n_subsamples=1, rng=np.random.default_rng(0),
                    small_budget=20)
    with pytest.raises(ValueError):
        build_scale(identity_problem(), long_budget=10, n_subsamples=1, small_budget=20)


def test_build_scale_matches_uniform_order_statistics():
    # min of n uniforms has mean 1/(n+1) and variance n/((n+1)^2 (n+2))
    n, k = 20, 400
    scale = build_scale(identity_problem(), long_budget=20_000, n_subsamples=k, rng=np.random.default_rng(1),
                        small_budget=n)
    se = math.sqrt(n / ((n + 1) ** 2 * (n + 2)) / k)
    assert abs(scale.v0 - 1 / (n + 1)) < 4 * se
    assert 0 <= scale.v1 < 1e-3 < scale.v0
    assert scale.sign == 1.0


def test_subsample_mean_is_stable():
    values = random_search_values(get_problem("sphere3"), 20_000, np.random.default_rng(2))
    mins = []
    for k in (100, 200):
        rng = np.random.default_rng(k)
        draws = [values[rng.choice(len(values), 90, replace=False)].min() for _ in range(k)]
        mins.append((np.mean(draws), np.std(draws, ddof=1) / math.sqrt(k)))
    v0_small = scale_from_values(values, 90, 100, np.random.default_rng(100)).v0
    v0_large = scale_from_values(values, 90, 200, np.random.default_rng(200)).v0
    assert v0_small == pytest.approx(mins[0][0]) and v0_large == pytest.approx(mins[1][0])
    assert abs(v0_large - v0_small) < 2 * mins[1][1]


def test_prefix_mode_uses_consecutive_blocks():
    values = np.arange(100, dtype=float)[::-1]
    scale = scale_from_values(values, 10, 5, np.random.default_rng(0), mode="prefix")
    assert scale.v0 == np.mean([90, 80, 70, 60, 50]) and scale.v1 == 0.0
    with pytest.raises(ValueError):
        scale_from_values(values, 10, 11, np.random.default_rng(0), mode="prefix")
    with pytest.raises(ValueError):
        scale_from_values(values, 10, 5, np.random.default_rng(0), mode="blocks")


def test_random_search_rsns_averages_to_zero():
    prob = get_problem("sphere3")
    small = prob.budget("compare")
    scale = build_scale(prob, long_budget=20_000, n_subsamples=30, rng=np.random.default_rng(5))
    scores = np.array([rsns(run_config(prob, "random_search", seed).archive.best_y(), scale)
                       for seed in range(100)])
    se = scores.std(ddof=1) / math.sqrt(len(scores))
    assert small == 90
    assert abs(scores.mean()) < 3 * se


# ------------------------------------------------------------------ rsns_std
def test_rsns_std_degenerate_pools():
    assert rsns_std_from_pool(np.full(50, 0.7), 10, 200, np.random.default_rng(0)) == 0.0
    pool = np.random.default_rng(0).normal(size=30)
    assert rsns_std_from_pool(pool, 30, 50, np.random.default_rng(1)) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        rsns_std_from_pool(pool, 31, 5)


def test_rsns_std_matches_sampling_theory():
    N, m = 300, 30
    pool = np.random.default_rng(3).normal(0.0, 2.0, N)
    # without replacement: Var(mean) = s^2 / m * (N - m) / (N - 1), s^2 the population variance
    expected = pool.std() / math.sqrt(m) * math.sqrt((N - m) / (N - 1))
    got = rsns_std_from_pool(pool, m, 1000, np.random.default_rng(4))
    assert abs(got - expected) < 0.15 * expected


def test_rsns_std_pools_problem_means():
    probs = ["p", "q"]
    evaluator = lambda config, problem, seed: seed + (1.0 if problem == "q" else 0.0)
    got = rsns_std("cfg", probs, n_pool=10, n_draw=10, n_repeats_mc=5, rng=np.random.default_rng(0),
                   evaluator=evaluator)
    assert got == pytest.approx(0.0, abs=1e-12)
    got = rsns_std("cfg", probs, n_pool=40, n_draw=1, n_repeats_mc=2000, rng=np.random.default_rng(0),
                   evaluator=evaluator)
    # one draw from 0.5, 1.5, ..., 39.5: population sd sqrt((40^2 - 1) / 12)
    assert got == pytest.approx(math.sqrt((40**2 - 1) / 12), rel=0.05)
    with pytest.raises(ValueError):
        rsns_std("cfg", probs, 5, 2, 3)


# ------------------------------------------------------------------ coordinate descent
def test_cd_single_parameter_accepts_once():
    grid = ConfigGrid.from_dict({"p": ["A", "B"]})
    state = run_cd([None], grid, {"p": "A"}, 1, np.random.default_rng(0),
                   separable_evaluator({"p": {"A": 0.0, "B": 1.0}}))
    assert state.incumbent == {"p": "B"} and state.score == 1.0
    assert [e["accepted"] for e in state.log[1:]] == [True, False]


def test_cd_from_optimum_stops_after_one_sweep():
    grid = ConfigGrid.from_dict({"a": [0, 1, 2], "b": ["x", "y"]})
    scores = {"a": {"0": 0.0, "1": 2.0, "2": 1.0}, "b": {"x": 0.0, "y": 0.5}}
    state = run_cd([None], grid, {"a": 1, "b": "y"}, 2, np.random.default_rng(0), separable_evaluator(scores))
    assert len(state.log) == 2 and not state.log[1]["accepted"]
    assert state.log[1]["n_evaluated"] == 3
    assert len(state.archive) == 4


@settings(max_examples=40)
@given(data=st.data())
def test_cd_reaches_exhaustive_coordinatewise_optimum(data):
    sizes = [data.draw(st.integers(2, 4)) for _ in range(3)]
    values = {f"p{i}": list(range(s)) for i, s in enumerate(sizes)}
    scores = {n: {str(v): data.draw(st.floats(-10, 10)) for v in vs} for n, vs in values.items()}
    score = separable_evaluator(scores)
    start = {n: data.draw(st.sampled_from(vs)) for n, vs in values.items()}
    state = run_cd([None], ConfigGrid.from_dict(values), start, 1, np.random.default_rng(0), score)

    oracle = lambda c: score(c, None, 0)
    assert is_coordinatewise_optimal(state.incumbent, values, oracle)
    best = max(oracle(c) for c in enumerate_grid(values))
    assert state.score == pytest.approx(best, abs=1e-12)
    accepted = [e["score"] for e in state.log if e["accepted"]]
    assert all(b > a for a, b in zip(accepted, accepted[1:]))
    assert all(b >= a for a, b in zip([e["score"] for e in state.log], [e["score"] for e in state.log][1:]))


def test_cd_averages_problems_then_seeds():
    grid = ConfigGrid.from_dict({"p": [0, 1]})
    calls = []

    def evaluator(config, problem, seed):
        calls.append((config["p"], problem, seed))
        return config["p"] * problem + seed * 0.0

    state = run_cd([1.0, 3.0], grid, {"p": 0}, 3, np.random.default_rng(0), evaluator)
    assert state.score == 2.0
    seeds = {s for _, _, s in calls}
    assert len(seeds) == 3 and len(calls) == 2 * 2 * 3


def hier_grid():
    return ConfigGrid([
        GridParam("model", ("gp", "rf")),
        GridParam("kernel", ("m32", "m52", "gauss"), ("model", "gp")),
        GridParam("trees", (100, 500), ("model", "rf")),
        GridParam("acq", ("ei", "cb")),
        GridParam("lam", (1, 3), ("acq", "cb")),
    ])


def test_neighborhood_expands_dependent_values():
    grid = hier_grid()
    inc = {"model": "gp", "kernel": "m32", "trees": None, "acq": "ei", "lam": None}
    nb = grid.neighborhood(inc)
    # model -> rf brings both tree counts, two other kernels, acq -> cb brings both lambdas
    assert len(nb) == 2 + 2 + 2
    assert {(c["model"], c["trees"]) for c in nb if c["model"] == "rf"} == {("rf", 100), ("rf", 500)}
    for c in nb:
        grid.validate(c)
    assert len(grid.enumerate()) == (3 + 2) * (1 + 2)


def test_grid_validation():
    grid = hier_grid()
    with pytest.raises(ConfigError):
        grid.validate({"model": "gp", "kernel": "m32", "trees": 100, "acq": "ei", "lam": None})
    with pytest.raises(ConfigError):
        grid.validate({"model": "svm", "kernel": None, "trees": None, "acq": "ei", "lam": None})
    with pytest.raises(ConfigError):
        ConfigGrid([GridParam("a", (1,)), GridParam("a", (2,))])
    with pytest.raises(ConfigError):
        ConfigGrid([GridParam("child", (1,), ("parent", 1)), GridParam("parent", (1,))])
    with pytest.raises(ConfigError):
        ConfigGrid([GridParam("a", ())])
    with pytest.raises(ValueError):
        run_cd([None], grid, {}, 1, evaluator=None)


# ------------------------------------------------------------------ traces
record = st.builds(
    TraceRecord,
    problem=st.sampled_from(["sinusoidal", "branin", "a,b"]),
    config_id=st.text(st.characters(blacklist_categories=("Cs", "Cc")), min_size=1, max_size=8),
    seed=st.integers(0, 2**32),
    eval_index=st.integers(1, 10_000),
    y=st.floats(allow_infinity=False),
    best_so_far=st.floats(allow_infinity=False),
    wall_ms=st.integers(0, 10**7),
)


@settings(max_examples=100)
@given(records=st.lists(record, max_size=20))
def test_trace_files_round_trip(records):
    assert traces_from_csv(traces_to_csv(records)) == records
    assert traces_from_jsonl(traces_to_jsonl(records)) == records


def test_trace_csv_columns_and_files(tmp_path):
    text = traces_to_csv([TraceRecord("p", "c", 1, 1, 0.1, 0.1, 0)], tmp_path / "t.csv")
    assert text.splitlines()[0] == "problem,config_id,seed,eval_index,y,best_so_far,wall_ms"
    assert (tmp_path / "t.csv").read_text() == text
    with pytest.raises(ValueError):
        traces_from_csv("a,b\n1,2\n")


def test_trace_from_archive_best_so_far():
    calls = iter([3.0, 1.0, None, 2.0, 0.5])

    def fn(point):
        v = next(calls)
        if v is None:
            raise RuntimeError("evaluation crashed")
        return v

    space = ParamSpace([p_dbl("x", 0.0, 1.0)])
    inst = oi(fn, space, trm("evals", n_evals=5))
    inst.eval_batch(space.sample_random(5, np.random.default_rng(0)))
    recs = trace_from_archive(inst.archive, "toy", "cfg", 7)
    assert [r.eval_index for r in recs] == [1, 2, 3, 4, 5]
    assert math.isnan(recs[2].y)
    assert [r.best_so_far for r in recs] == [3.0, 1.0, 1.0, 1.0, 0.5]
    assert all(r.wall_ms == 0 for r in recs)
    assert final_best(recs) == {("toy", "cfg", 7): 0.5}


def test_trace_of_maximization_is_on_raw_scale():
    space = ParamSpace([p_dbl("x", 0.0, 1.0)])
    inst = oi(lambda p: p["x"], space, trm("evals", n_evals=4), [("y", "maximize")])
    inst.eval_batch([{"x": v} for v in (0.2, 0.9, 0.5, 0.1)])
    recs = trace_from_archive(inst.archive, "toy", "cfg", 0)
    assert [r.y for r in recs] == [0.2, 0.9, 0.5, 0.1]
    assert [r.best_so_far for r in recs] == [0.2, 0.9, 0.9, 0.9]


@pytest.mark.parametrize("name", ["sinusoidal", "branin", "hierarchical"])
def test_run_traces_are_monotone(name):
    prob = get_problem(name)
    inst = run_config(prob, {"acqopt": {"kind": "random_search", "budget": 200}}, seed=0, budget=15)
    recs = trace_from_archive(inst.archive, name, "default", 0)
    best = [r.best_so_far for r in recs]
    assert len(recs) == 15 and all(b <= a for a, b in zip(best, best[1:]))
