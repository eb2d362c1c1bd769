"""Loop functions that assemble the building blocks into optimizers.

Random streams are derived from one seed: stream ``(0,)`` draws the
initial design, ``(1, w)`` drives surrogate seeds and acquisition
optimization for worker ``w`` and ``(2, w)`` draws per-worker constants of
stochastic acquisitions.  Sequential loops act as worker 0, which is what
lets a one-worker asynchronous run reproduce them exactly.
"""

import logging
import math

import numpy as np
from sklearn.base import BaseEstimator

from .acqopt import optimize_acq
from .acquisition import AcqContext, parego_scalarize, simplex_weights
from .config import LoopConfig, default_config
from .engine import OptimInstance, Objective, assign_result, pareto_front_mask, trm
from .exceptions import AcqOptError, ConfigError, SurrogateError, Terminated

logger = logging.getLogger(__name__)


def rng_streams(seed, worker=0):
    """``(design, loop, draw)`` generators for one worker."""
    entropy = np.random.SeedSequence(seed).entropy

    def gen(*key):
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy, spawn_key=key)))

    return gen(0), gen(1, worker), gen(2, worker)


def total_budget(instance):
    """Evaluation budget implied by the terminator, or ``None``."""
    rem = instance.terminator.remaining(instance)
    return None if rem is None else rem + instance.archive.n_evals


def init_size(instance, config):
    """``max(init_min, ceil(fraction * budget))``, never above the budget."""
    budget = total_budget(instance)
    if budget is None:
        return config.init_min
    return min(max(config.init_min, math.ceil(config.init_fraction * budget)), budget)


def initial_design(instance, config, rng):
    """Points still needed to complete the initial design.

    User-supplied points come first; a design of ``init_kind`` fills the
    rest.  Rows already in the archive count toward the design size.
    """
    space = instance.search_space
    have = instance.archive.n_evals
    target = init_size(instance, config)
    points = [dict(p) for p in (config.init_design or [])]
    for p in points:
        space.check(p)
    n_fill = target - have - len(points)
    if n_fill > 0:
        points += space.generate_design(config.init_kind, n_fill, rng)
    budget = total_budget(instance)
    if budget is not None:
        points = points[: max(budget - have, 0)]
    return points


def evaluate_initial_design(instance, config, rng):
    points = initial_design(instance, config, rng)
    if points:
        try:
            instance.eval_batch(points)
        except Terminated:
            pass
    return points


def _fits(config):
    return (SurrogateError, AcqOptError) if config.catch_errors else ()


def propose(instance, config, learner, acq, rng, iteration, points, y, ctx_extra=None):
    """One candidate: model-based, or uniform at interleave steps and after caught errors.

    ``iteration`` counts model-based iterations from 1.
    """
    space = instance.search_space
    r = config.random_interleave_iter
    if r and iteration % r == 0:
        return space.sample_random(1, rng)[0], "interleave"
    try:
        if len(points) == 0:
            raise SurrogateError("empty training set")
        learner.fit(points, y)
        ctx = AcqContext(f_min=learner.f_min(), iteration=iteration - 1, **(ctx_extra or {}))

        def score(cands):
            mean, sd = learner.predict(cands)
            return acq(mean, sd, ctx)

        return optimize_acq(space, score, config.acqopt, rng).point, learner.live_model
    except _fits(config) as err:
        logger.warning("proposal failed (%s); using a random point", err)
        return space.sample_random(1, rng)[0], "random_fallback"


def _check_single(instance, config):
    if instance.n_objectives != 1:
        raise ConfigError(f"loop {config.loop!r} is single-objective")


def _prepare(instance, config, seed, worker=0):
    config = config or default_config(instance.search_space)
    design_rng, loop_rng, draw_rng = rng_streams(seed, worker)
    learner = config.make_learner(instance.search_space, loop_rng)
    acq = config.acq.build().for_worker(draw_rng)
    return config, design_rng, loop_rng, learner, acq


def run_ego(instance, config=None, seed=None, log=None):
    """Sequential single-point Bayesian optimization.

    Parameters
    ----------
    instance : OptimInstance
        May already hold evaluations (warm start).
    config : LoopConfig, optional
        Defaults to :func:`default_config` for the search space.
    seed : int, optional
    log : list, optional
        Receives one ``(iteration, source)`` tuple per proposal.
    """
    config, design_rng, loop_rng, learner, acq = _prepare(instance, config, seed)
    _check_single(instance, config)
    evaluate_initial_design(instance, config, design_rng)
    it = 0
    while not instance.is_terminated:
        it += 1
        points, Y = instance.archive.data()
        x, source = propose(instance, config, learner, acq, loop_rng, it, points, Y[:, 0])
        if log is not None:
            log.append((it, source))
        try:
            instance.eval_batch([x])
        except Terminated:
            break
    return assign_result(instance, config.result_mode, learner)


def liar_value(kind, y, learner=None, point=None):
    if kind == "min":
        return float(np.min(y))
    if kind == "max":
        return float(np.max(y))
    if learner is not None and learner.model_ is not None:
        mean, _ = learner.predict([point], raw_scale=True)
        return float(mean[0])
    return float(np.mean(y))


def run_mpcl(instance, config=None, seed=None, log=None):
    """Batch proposals by constant liar, evaluated ``q`` at a time.

    Imputed values only live in the working training set; the archive
    receives the real results of every batch.
    """
    config, design_rng, loop_rng, learner, acq = _prepare(instance, config, seed)
    _check_single(instance, config)
    evaluate_initial_design(instance, config, design_rng)
    it = 0
    while not instance.is_terminated:
        points, Y = instance.archive.data()
        work_pts, work_y = list(points), list(Y[:, 0])
        rem = instance.terminator.remaining(instance)
        q = config.q if rem is None else max(1, min(config.q, rem))
        batch = []
        for _ in range(q):
            it += 1
            x, source = propose(instance, config, learner, acq, loop_rng, it, work_pts, np.asarray(work_y))
            if log is not None:
                log.append((it, source))
            batch.append(x)
            if len(batch) < q:
                lie = liar_value(config.liar, work_y, learner if source in ("primary", "fallback") else None, x)
                work_pts.append(x)
                work_y.append(lie)
        try:
            instance.eval_batch(batch)
        except Terminated:
            break
    return assign_result(instance, config.result_mode, learner)


def normalize_objectives(Y):
    """Per-objective min-max scaling to ``[0, 1]``; constant columns map to 0."""
    lo, hi = Y.min(axis=0), Y.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (Y - lo) / span


def run_parego(instance, config=None, seed=None, weights=None, log=None):
    """Multi-objective optimization through random Tchebycheff scalarizations.

    Parameters
    ----------
    weights : array-like, optional
        Fixed weights instead of a fresh simplex draw per iteration.
    """
    config = config or mo_default(instance.search_space, "parego")
    config, design_rng, loop_rng, learner, acq = _prepare(instance, config, seed)
    k = instance.n_objectives
    if k < 2:
        raise ConfigError("parego needs at least two objectives")
    evaluate_initial_design(instance, config, design_rng)
    it = 0
    while not instance.is_terminated:
        it += 1
        w = np.asarray(weights, float) if weights is not None else simplex_weights(k, loop_rng)
        points, Y = instance.archive.data()
        s = parego_scalarize(normalize_objectives(Y), w)
        x, source = propose(instance, config, learner, acq, loop_rng, it, points, s)
        if log is not None:
            log.append((it, source, w.tolist()))
        try:
            instance.eval_batch([x])
        except Terminated:
            break
    return assign_result(instance, "archive_best")


def sms_reference_point(Y, offset=1.0):
    """Archive maximum plus a constant ``offset`` per objective.

    A fixed offset keeps the extreme ends of the front inside the
    dominated region; a range-relative offset shrinks with the archive and
    hides them.
    """
    return np.asarray(Y, float).max(axis=0) + offset


def run_smsego(instance, config=None, seed=None, log=None):
    """Multi-objective optimization by optimistic hypervolume improvement.

    One surrogate is fitted per objective; predictions are taken on the
    original objective scale.
    """
    config = config or mo_default(instance.search_space, "smsego")
    config, design_rng, loop_rng, _, acq = _prepare(instance, config, seed)
    k = instance.n_objectives
    if k < 2:
        raise ConfigError("smsego needs at least two objectives")
    if not acq.multi_objective:
        raise ConfigError("smsego needs a multi-objective acquisition ('smsego')")
    space = instance.search_space
    learners = [config.make_learner(space, loop_rng) for _ in range(k)]
    evaluate_initial_design(instance, config, design_rng)
    it = 0
    while not instance.is_terminated:
        it += 1
        points, Y = instance.archive.data()
        r = config.random_interleave_iter
        source = "smsego"
        if r and it % r == 0:
            x, source = space.sample_random(1, loop_rng)[0], "interleave"
        else:
            try:
                for j, lrn in enumerate(learners):
                    lrn.fit(points, Y[:, j])
                front = Y[pareto_front_mask(Y)]
                rem = instance.terminator.remaining(instance)
                ctx = AcqContext(iteration=it - 1, pareto_front_y=front, reference_point=sms_reference_point(Y),
                                 n_left=rem or 0)

                def score(cands):
                    preds = [lrn.predict(cands, raw_scale=True) for lrn in learners]
                    mean = np.column_stack([p[0] for p in preds])
                    sd = np.column_stack([p[1] for p in preds])
                    return acq(mean, sd, ctx)

                x = optimize_acq(space, score, config.acqopt, loop_rng).point
            except _fits(config) as err:
                logger.warning("proposal failed (%s); using a random point", err)
                x, source = space.sample_random(1, loop_rng)[0], "random_fallback"
        if log is not None:
            log.append((it, source))
        try:
            instance.eval_batch([x])
        except Terminated:
            break
    return assign_result(instance, "archive_best")


def mo_default(space, loop):
    """Defaults for the multi-objective loops.

    ParEGO keeps the per-space surrogate and optimizer but scores with EI
    on standardized scalarized values; SMS-EGO uses the smsego acquisition
    on standardized per-objective models.
    """
    base = default_config(space)
    base.loop = loop
    base.output_trafo = "standardize"
    base.acq = type(base.acq)(kind="ei") if loop == "parego" else type(base.acq)(kind="smsego", lam=1.0)
    return base


LOOP_FUNCTIONS = {
    "ego": run_ego,
    "mpcl": run_mpcl,
    "parego": run_parego,
    "smsego": run_smsego,
    "bayesopt_ego": run_ego,
    "bayesopt_mpcl": run_mpcl,
    "bayesopt_parego": run_parego,
    "bayesopt_smsego": run_smsego,
}


def run_loop(instance, config, seed=None):
    """Dispatch on ``config.loop``."""
    return LOOP_FUNCTIONS[config.loop](instance, config, seed=seed)


class MboOptimizer(BaseEstimator):
    """Estimator-style entry point around the loop functions.

    Parameters
    ----------
    config : LoopConfig or dict, optional
        ``None`` picks the default for the search space at optimize time.
    n_evals : int, default=20
    seed : int, optional

    Examples
    --------
    >>> from boblocks.space import ParamSpace, p_dbl
    >>> space = ParamSpace([p_dbl("x", 0.0, 1.0)])
    >>> opt = MboOptimizer(n_evals=8, seed=1).optimize(lambda p: (p["x"] - 0.3) ** 2, space)
    >>> len(opt.archive_)
    8
    """

    def __init__(self, config=None, n_evals=20, seed=None):
        self.config = config
        self.n_evals = n_evals
        self.seed = seed

    def _resolve_config(self, space, n_objectives):
        cfg = self.config
        if isinstance(cfg, LoopConfig):
            return cfg
        if n_objectives > 1:
            base = mo_default(space, (cfg or {}).get("loop", "parego"))
        else:
            base = default_config(space)
        return LoopConfig.from_dict(cfg or {}, base=base)

    def optimize(self, fn, space, codomain=None, archive=None):
        objective = Objective(fn, space, codomain)
        instance = OptimInstance(objective, trm("evals", n_evals=self.n_evals), archive=archive)
        config = self._resolve_config(space, objective.n_objectives)
        self.config_ = config
        self.result_ = run_loop(instance, config, seed=self.seed)
        self.archive_ = instance.archive
        self.instance_ = instance
        return self
