"""Asynchronous decentralized Bayesian optimization with in-process workers.

Workers are threads that share one :class:`SharedArchive`.  A worker
claims a point before evaluating it; claimed points are visible to every
other worker's surrogate fit through liar imputation.  Completed
evaluations are appended to the archive at publish time, so the archive
order is the publish order and replaying the publish log rebuilds it.
"""

from collections import deque
from dataclasses import dataclass, field
import json
import logging
import threading

import numpy as np

from .config import AcqConfig, LoopConfig, default_config
from .engine import Archive, assign_result
from .exceptions import ConfigError, WorkerCrash
from .loops import initial_design, propose, rng_streams
from .space import point_from_json, point_to_json

logger = logging.getLogger(__name__)


@dataclass
class AsyncConfig:
    """Settings of an asynchronous run.

    ``loop`` supplies surrogate, acquisition optimizer and initial design
    settings; its acquisition should be stochastic so workers diverge.
    ``design_size`` overrides the initial design size rule.
    """

    n_workers: int = 1
    design_size: int = None
    loop: LoopConfig = None
    liar: str = "min"

    def __post_init__(self):
        if self.n_workers < 1:
            raise ConfigError("n_workers must be >= 1")
        if self.design_size is not None and self.design_size < 2:
            raise ConfigError("design_size must be >= 2")
        if self.liar not in ("min", "max", "mean"):
            raise ConfigError("liar must be min, max or mean")


def async_default(space, min_lambda=1.0, max_lambda=10.0):
    """Per-space default with a stochastic LCB acquisition."""
    cfg = default_config(space)
    cfg.acq = AcqConfig(kind="stochastic_cb", min_lambda=min_lambda, max_lambda=max_lambda)
    return cfg


@dataclass
class Claim:
    claim_id: int
    point: dict
    worker: int
    from_design: bool = False


@dataclass
class Snapshot:
    completed: list
    in_flight: list = field(default_factory=list)


class SharedArchive:
    """Archive wrapper with atomic claim, publish and release."""

    def __init__(self, archive):
        self.archive = archive
        self.lock = archive.lock
        self._claims = {}
        self._next_id = 0
        self.publish_log = []

    def claim(self, point, worker, from_design=False):
        with self.lock:
            cid = self._next_id
            self._next_id += 1
            self._claims[cid] = Claim(cid, dict(point), worker, from_design)
            return cid

    def release(self, claim_id):
        with self.lock:
            return self._claims.pop(claim_id)

    def publish(self, claim_id, y_internal, failed):
        with self.lock:
            claim = self._claims.pop(claim_id)
            row = self.archive.append(claim.point, y_internal, self.archive.next_batch_nr(),
                                      failed=failed, claim_id=claim_id)
            raw = None if failed else (self.archive.signs * row.y).tolist()
            self.publish_log.append({"seq": len(self.publish_log), "claim_id": claim_id, "worker": claim.worker,
                                     "batch_nr": row.batch_nr, "timestamp": row.timestamp,
                                     "point": point_to_json(claim.point), "y": raw, "failed": failed})
            return row

    @property
    def n_in_flight(self):
        with self.lock:
            return len(self._claims)

    def snapshot(self):
        """Point-in-time view of completed rows and open claims."""
        with self.lock:
            return Snapshot(self.archive.snapshot(), list(self._claims.values()))

    def training_data(self, liar="min", snap=None):
        """Completed rows plus in-flight points imputed with the liar value."""
        snap = snap or self.snapshot()
        points, Y = self.archive.data(rows=snap.completed)
        y = Y[:, 0]
        if not snap.in_flight or len(y) == 0:
            return points, y
        lie = {"min": np.min, "max": np.max, "mean": np.mean}[liar](y)
        return points + [c.point for c in snap.in_flight], np.append(y, np.full(len(snap.in_flight), lie))

    def publish_log_jsonl(self):
        with self.lock:
            return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.publish_log)


def replay_publish_log(text, search_space, codomain=None):
    """Rebuild an archive by applying a JSON-lines publish log in order."""
    archive = Archive(search_space, codomain)
    for line in text.splitlines():
        if not line.strip():
            continue
        e = json.loads(line)
        point = point_from_json(e["point"])
        if e["failed"]:
            archive.append(point, None, e["batch_nr"], failed=True, claim_id=e["claim_id"], timestamp=e["timestamp"])
        else:
            archive.append_raw(point, e["y"], e["batch_nr"], claim_id=e["claim_id"], timestamp=e["timestamp"])
    return archive


class _Worker:
    def __init__(self, index, instance, shared, queue, cfg, seed):
        self.index = index
        self.instance = instance
        self.shared = shared
        self.queue = queue
        self.cfg = cfg
        _, self.rng, draw_rng = rng_streams(seed, index)
        self.learner = cfg.loop.make_learner(instance.search_space, self.rng)
        self.acq = cfg.loop.acq.build().for_worker(draw_rng)
        self.iteration = 0
        self.sources = []
        self.error = None
        self.crashed = False

    def _next_claim(self):
        """Claim a design point or a fresh proposal; ``None`` once terminated."""
        with self.shared.lock:
            if self.instance.is_terminated:
                return None
            if self.queue:
                point = self.queue.popleft()
                return self.shared.claim(point, self.index, from_design=True), point
        points, y = self.shared.training_data(self.cfg.liar)
        self.iteration += 1
        x, source = propose(self.instance, self.cfg.loop, self.learner, self.acq, self.rng, self.iteration, points, y)
        self.sources.append(source)
        with self.shared.lock:
            if self.instance.is_terminated:
                return None
            return self.shared.claim(x, self.index), x

    def run(self):
        try:
            while True:
                nxt = self._next_claim()
                if nxt is None:
                    return
                cid, point = nxt
                try:
                    y, failed = self.instance.evaluate_point(point)
                except WorkerCrash:
                    claim = self.shared.release(cid)
                    if claim.from_design:
                        with self.shared.lock:
                            self.queue.appendleft(claim.point)
                    self.crashed = True
                    logger.warning("worker %d crashed; claim %d released", self.index, cid)
                    return
                self.shared.publish(cid, y, failed)
        except Exception as err:  # surfaced by run_async after join
            self.error = err


def run_async(instance, config=None, seed=None):
    """Run ``config.n_workers`` independent BO workers against one archive.

    The main thread builds the initial design and enqueues it; workers
    drain the queue, then propose with their own surrogate and their own
    stochastic acquisition constant.  Evaluations in flight when the
    terminator triggers still complete, so the archive may exceed an
    evaluation limit by up to ``n_workers - 1`` rows.
    """
    config = config or AsyncConfig()
    if config.loop is None:
        config.loop = async_default(instance.search_space)
    if instance.n_objectives != 1:
        raise ConfigError("run_async is single-objective")
    design_rng, _, _ = rng_streams(seed, 0)
    loop_cfg = config.loop
    if config.design_size is not None:
        loop_cfg = LoopConfig.from_dict({}, base=loop_cfg)
        loop_cfg.init_min = config.design_size
        loop_cfg.init_fraction = min(1.0, loop_cfg.init_fraction)
    design = initial_design(instance, loop_cfg, design_rng)
    if config.design_size is not None:
        design = design[: max(config.design_size - instance.archive.n_evals, 0)]
    shared = SharedArchive(instance.archive)
    queue = deque(design)
    workers = [_Worker(w, instance, shared, queue, config, seed) for w in range(config.n_workers)]
    threads = [threading.Thread(target=w.run, name=f"bo-worker-{w.index}", daemon=True) for w in workers]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for w in workers:
        if w.error is not None:
            raise w.error
    if not instance.is_terminated:
        logger.warning("all workers stopped before the terminator was met")
    instance.shared_archive = shared
    instance.workers = workers
    return assign_result(instance, loop_cfg.result_mode, workers[0].learner)


__all__ = ["AsyncConfig", "SharedArchive", "Snapshot", "async_default", "replay_publish_log", "run_async"]
