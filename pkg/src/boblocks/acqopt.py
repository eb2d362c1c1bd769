"""Optimizers that maximize an acquisition function over a search space.

All optimizers receive ``score(points) -> ndarray`` (larger is better) and
count every scored point against ``budget``.  Ties are broken by the lowest
evaluation index, so a given seed always returns the same candidate.
"""

from dataclasses import dataclass
import math

import numpy as np

from ._validation import check_generator
from .exceptions import AcqOptError, ConfigError

BUDGET_CAP = 10_000
OPTIMIZERS = ("random_search", "rs1000", "local_search", "cmaes")


def default_budget(d, cap=BUDGET_CAP):
    """``100 * d**2`` surrogate evaluations, capped."""
    return int(min(100 * d * d, cap))


@dataclass
class AcqOptConfig:
    kind: str = "random_search"
    budget: int = None
    budget_cap: int = BUDGET_CAP
    n_ls_runs: int = 10
    n_neighbors: int = 10
    mutation_sd: float = 0.1
    stagnation_restart: int = 10
    catch_errors: bool = True

    def __post_init__(self):
        if self.kind not in OPTIMIZERS:
            raise ConfigError(f"unknown acquisition optimizer {self.kind!r}; choose from {OPTIMIZERS}")
        if self.budget is not None and self.budget < 1:
            raise ConfigError("acquisition budget must be >= 1")
        if not self.mutation_sd > 0:
            raise ConfigError("mutation_sd must be > 0")
        if self.n_ls_runs < 1 or self.n_neighbors < 1 or self.stagnation_restart < 1:
            raise ConfigError("local search counts must be >= 1")

    def resolve_budget(self, d):
        if self.kind == "rs1000":
            return 1000
        if self.budget is not None:
            return int(self.budget)
        return default_budget(d, self.budget_cap)


@dataclass
class Candidate:
    point: dict
    acq_value: float
    n_evals: int


class _Scorer:
    """Budget-metered scoring with best-so-far tracking."""

    def __init__(self, score, budget):
        self.score = score
        self.budget = budget
        self.used = 0
        self.best_point = None
        self.best_value = -np.inf

    @property
    def left(self):
        return self.budget - self.used

    def __call__(self, points):
        if len(points) > self.left:
            raise AcqOptError("acquisition budget exceeded")
        if not points:
            return np.empty(0)
        values = np.asarray(self.score(points), dtype=float).reshape(len(points))
        values = np.where(np.isnan(values), -np.inf, values)
        self.used += len(points)
        i = int(np.argmax(values))
        # strict improvement keeps the earliest of tied points
        if values[i] > self.best_value or self.best_point is None:
            self.best_value = float(values[i])
            self.best_point = points[i]
        return values

    def result(self):
        return Candidate(self.best_point, self.best_value, self.used)


# ------------------------------------------------------------------ random search
def optimize_random(space, score, budget, rng=None):
    """Score ``budget`` uniform points in one batch and return the best."""
    if budget < 1:
        raise ConfigError("budget must be >= 1")
    rng = check_generator(rng)
    scorer = _Scorer(score, budget)
    scorer(space.sample_random(budget, rng))
    return scorer.result()


# ------------------------------------------------------------------ local search
def mutate(space, point, rng, sd=0.1):
    """Change exactly one active parameter, then repair dependencies.

    Numerics move by Gaussian noise on the unit scale and are clipped
    (integers rounded); factors jump to a different level; logicals flip.
    """
    active = [p for p in space.params if point[p.name] is not None]
    p = active[int(rng.integers(len(active)))]
    out = dict(point)
    value = point[p.name]
    if p.is_numeric:
        lo, hi = p.internal_bounds
        u = (p.to_internal(value) - lo) / (hi - lo) if hi > lo else 0.5
        u = min(max(u + rng.normal(0.0, sd), 0.0), 1.0)
        out[p.name] = p.finalize(p.from_internal(lo + u * (hi - lo)))
    elif p.kind == "factor":
        others = [lv for lv in p.levels if lv != value]
        if others:
            out[p.name] = others[int(rng.integers(len(others)))]
    else:
        out[p.name] = not value
    return space.repair(out, rng)


def ls_run_count(cfg, budget):
    """Concurrent runs actually used for ``budget``.

    Capped so every run gets at least ``2 * stagnation_restart`` iterations;
    with small budgets more runs would only add random starting points.
    """
    per_run = cfg.n_neighbors * 2 * cfg.stagnation_restart
    return max(1, min(cfg.n_ls_runs, budget // per_run))


def optimize_local_search(space, score, cfg=None, rng=None, budget=None, on_proposal=None):
    """Concurrent single-parameter-mutation local searches with restarts.

    Parameters
    ----------
    on_proposal : callable, optional
        Called with every mutated point before scoring; used by tests that
        audit dependency validity.
    """
    cfg = cfg or AcqOptConfig(kind="local_search")
    rng = check_generator(rng)
    budget = cfg.resolve_budget(space.dim()) if budget is None else budget
    scorer = _Scorer(score, budget)
    k = min(ls_run_count(cfg, budget), budget)
    current = space.sample_random(k, rng)
    cur_val = list(scorer(current))
    stagnation = [0] * k

    while scorer.left > 0:
        neighbors, owner = [], []
        for r in range(k):
            for _ in range(cfg.n_neighbors):
                if len(neighbors) >= scorer.left:
                    break
                nb = mutate(space, current[r], rng, cfg.mutation_sd)
                if on_proposal is not None:
                    on_proposal(nb)
                neighbors.append(nb)
                owner.append(r)
        values = scorer(neighbors)
        owner = np.asarray(owner)
        restart = []
        for r in range(k):
            idx = np.flatnonzero(owner == r)
            if len(idx) == 0:
                continue
            j = idx[int(np.argmax(values[idx]))]
            if values[j] > cur_val[r]:
                current[r], cur_val[r] = neighbors[j], float(values[j])
                stagnation[r] = 0
            else:
                stagnation[r] += 1
                if stagnation[r] >= cfg.stagnation_restart:
                    restart.append(r)
        restart = restart[: scorer.left]
        if restart:
            fresh = space.sample_random(len(restart), rng)
            fresh_vals = scorer(fresh)
            for r, pt, v in zip(restart, fresh, fresh_vals):
                current[r], cur_val[r], stagnation[r] = pt, float(v), 0
    return scorer.result()


# ------------------------------------------------------------------ CMA-ES
class _CmaState:
    """Standard (mu/mu_w, lambda)-CMA-ES state on the unit cube."""

    def __init__(self, mean, sigma, lam):
        n = len(mean)
        self.n = n
        self.lam = lam
        self.mu = lam // 2
        w = math.log(self.mu + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mueff = 1.0 / np.sum(self.weights**2)
        self.cc = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.cs = (self.mueff + 2) / (n + self.mueff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.cmu = min(1 - self.c1, 2 * (self.mueff - 2 + 1 / self.mueff) / ((n + 2) ** 2 + self.mueff))
        self.damps = 1 + 2 * max(0.0, math.sqrt((self.mueff - 1) / (n + 1)) - 1) + self.cs
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))
        self.mean = np.asarray(mean, float)
        self.sigma = sigma
        self.pc = np.zeros(n)
        self.ps = np.zeros(n)
        self.C = np.eye(n)
        self.B = np.eye(n)
        self.D = np.ones(n)
        self.gen = 0
        self.history = []

    def ask(self, rng, count):
        z = rng.standard_normal((count, self.n))
        return self.mean + self.sigma * (z * self.D) @ self.B.T

    def tell(self, X, fitness):
        """Update from a full generation; ``fitness`` is minimized."""
        n = self.n
        order = np.argsort(fitness, kind="stable")[: self.mu]
        old = self.mean
        Y = (X[order] - old) / self.sigma
        self.mean = old + self.sigma * (self.weights @ Y)
        yw = self.weights @ Y
        inv_sqrt = self.B @ np.diag(1 / self.D) @ self.B.T
        self.ps = (1 - self.cs) * self.ps + math.sqrt(self.cs * (2 - self.cs) * self.mueff) * (inv_sqrt @ yw)
        self.gen += 1
        ps_norm = np.linalg.norm(self.ps)
        hsig = ps_norm / math.sqrt(1 - (1 - self.cs) ** (2 * self.gen)) / self.chi_n < 1.4 + 2 / (n + 1)
        self.pc = (1 - self.cc) * self.pc + hsig * math.sqrt(self.cc * (2 - self.cc) * self.mueff) * yw
        rank_mu = (Y.T * self.weights) @ Y
        self.C = ((1 - self.c1 - self.cmu) * self.C
                  + self.c1 * (np.outer(self.pc, self.pc) + (1 - hsig) * self.cc * (2 - self.cc) * self.C)
                  + self.cmu * rank_mu)
        self.sigma *= math.exp((self.cs / self.damps) * (ps_norm / self.chi_n - 1))
        self.sigma = min(self.sigma, 1e3)
        self.C = np.triu(self.C) + np.triu(self.C, 1).T
        evals, self.B = np.linalg.eigh(self.C)
        self.D = np.sqrt(np.maximum(evals, 1e-30))
        self.history.append(float(np.min(fitness)))

    def should_stop(self):
        if self.sigma * self.D.max() < 1e-9:
            return True
        if self.D.max() > 1e7 * self.D.min():
            return True
        window = 10 + int(math.ceil(30 * self.n / self.lam))
        if len(self.history) >= window:
            recent = self.history[-window:]
            if max(recent) - min(recent) < 1e-12:
                return True
        return False


def optimize_cmaes(space, score, cfg=None, rng=None, budget=None, sigma0=0.3):
    """IPOP-CMA-ES on the unit cube of a purely numeric space.

    Out-of-box samples are scored at their clipped position; the squared
    clipping distance is added as a penalty to the fitness that drives the
    update.  Restarts begin from a uniform random mean with a doubled
    population and continue until the budget is spent.
    """
    if not space.is_numeric:
        raise ConfigError("cmaes needs a purely numeric space without dependencies")
    cfg = cfg or AcqOptConfig(kind="cmaes")
    rng = check_generator(rng)
    budget = cfg.resolve_budget(space.dim()) if budget is None else budget
    scorer = _Scorer(score, budget)
    d = space.dim()
    lam = 4 + int(math.floor(3 * math.log(d)))
    while scorer.left > 0:
        state = _CmaState(rng.uniform(size=d), sigma0, lam)
        while scorer.left > 0:
            count = min(state.lam, scorer.left)
            X = state.ask(rng, count)
            U = np.clip(X, 0.0, 1.0)
            values = scorer([space.from_unit(u) for u in U])
            if count < state.lam:
                break
            fitness = -values + np.sum((X - U) ** 2, axis=1)
            fitness = np.where(np.isfinite(fitness), fitness, np.inf)
            state.tell(X, fitness)
            if state.should_stop():
                break
        lam *= 2
    return scorer.result()


def optimize_acq(space, score, cfg, rng=None):
    """Dispatch on ``cfg.kind``; scoring errors become :class:`AcqOptError` when caught."""
    try:
        if cfg.kind in ("random_search", "rs1000"):
            return optimize_random(space, score, cfg.resolve_budget(space.dim()), rng)
        if cfg.kind == "local_search":
            return optimize_local_search(space, score, cfg, rng)
        return optimize_cmaes(space, score, cfg, rng)
    except (ConfigError, AcqOptError):
        raise
    except Exception as err:
        if not cfg.catch_errors:
            raise
        raise AcqOptError(f"acquisition optimization failed: {err}") from err
