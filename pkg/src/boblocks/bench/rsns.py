"""Random-search-normalized scores.

A score of 0 is the expected best value of a small-budget random search,
1 the best value of one long random search; the map is affine in between
and beyond.
"""

from dataclasses import asdict, dataclass
import logging

import numpy as np

from .._validation import check_generator

logger = logging.getLogger(__name__)

LONG_BUDGET = 100_000
N_SUBSAMPLES = 30


class ExcludedProblem(ValueError):
    """The scale is degenerate: small and long random search agree."""


@dataclass
class RsnsScale:
    v0: float
    v1: float
    sign: float = 1.0  # -1 for maximization

    def to_dict(self):
        return asdict(self)


def rsns(best, scale):
    """``(v0 - best) / (v0 - v1)`` on the minimization scale."""
    v0, v1, b = scale.sign * scale.v0, scale.sign * scale.v1, scale.sign * np.asarray(best, float)
    if v0 == v1:
        raise ExcludedProblem("v0 equals v1")
    out = (v0 - b) / (v0 - v1)
    return float(out) if np.ndim(out) == 0 else out


def random_search_values(problem, n, rng):
    """Objective values of ``n`` uniform random points (first objective)."""
    obj = problem.objective()
    pts = problem.space.sample_random(n, rng)
    return np.array([obj(p)[0] for p in pts])


def scale_from_values(values, small_budget, n_subsamples, rng, mode="random", sign=1.0):
    """Scale from one long random-search trace.

    ``mode="random"`` draws every subsample without replacement from the
    whole trace; ``mode="prefix"`` cuts the trace into consecutive blocks.
    """
    values = sign * np.asarray(values, float)
    if small_budget > len(values):
        raise ValueError("long trace shorter than the small budget")
    rng = check_generator(rng)
    if mode == "random":
        mins = [values[rng.choice(len(values), small_budget, replace=False)].min() for _ in range(n_subsamples)]
    elif mode == "prefix":
        blocks = len(values) // small_budget
        if blocks < n_subsamples:
            raise ValueError("trace too short for that many consecutive blocks")
        mins = [values[i * small_budget:(i + 1) * small_budget].min() for i in range(n_subsamples)]
    else:
        raise ValueError(f"unknown subsample mode {mode!r}")
    v0, v1 = float(np.mean(mins)), float(values.min())
    if not v1 < v0:
        raise ExcludedProblem(f"long random search does not beat the small budget (v0={v0}, v1={v1})")
    return RsnsScale(sign * v0, sign * v1, sign)


def build_scale(problem, long_budget=LONG_BUDGET, n_subsamples=N_SUBSAMPLES, rng=None, small_budget=None,
                mode="random"):
    """Run one long random search and derive its RSNS scale."""
    rng = check_generator(rng)
    small = problem.budget("compare") if small_budget is None else small_budget
    if long_budget < small:
        raise ValueError("long_budget must be >= the small budget")
    values = random_search_values(problem, long_budget, rng)
    sign = 1.0 if problem.codomain[0][1] == "minimize" else -1.0
    return scale_from_values(values, small, n_subsamples, rng, mode, sign)


def rsns_std_from_pool(pool, n_draw, n_repeats, rng=None):
    """Spread of the mean of ``n_draw`` values drawn without replacement from ``pool``."""
    pool = np.asarray(pool, float)
    if n_draw > len(pool):
        raise ValueError("n_pool must be >= n_draw")
    rng = check_generator(rng)
    means = [pool[rng.choice(len(pool), n_draw, replace=False)].mean() for _ in range(n_repeats)]
    return float(np.std(means))


def rsns_std(config, problems, n_pool, n_draw, n_repeats_mc, rng=None, evaluator=None):
    """Monte Carlo standard deviation of a configuration's mean RSNS.

    ``evaluator(config, problem, seed)`` returns one RSNS value; ``n_pool``
    runs are made per problem, their per-seed problem means form the pool.
    """
    if evaluator is None:
        raise ValueError("an evaluator is required")
    rng = check_generator(rng)
    pool = [np.mean([evaluator(config, p, seed) for p in problems]) for seed in range(n_pool)]
    return rsns_std_from_pool(pool, n_draw, n_repeats_mc, rng)
