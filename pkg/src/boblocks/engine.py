"""Objective wrapper, archive, terminators and optimization instance."""

import csv
import io
import json
import logging
import math
import threading
import time
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, EvalFailed, Terminated, WorkerCrash
from .space import _json_value

logger = logging.getLogger(__name__)

MINIMIZE, MAXIMIZE = "minimize", "maximize"


def _now_ms():
    return int(time.time() * 1000)


class Objective:
    """Black-box function ``point -> vector of k objective values``.

    Parameters
    ----------
    fn : callable
        Takes a point (``dict``) and returns a float, a sequence of floats or
        a ``dict`` keyed by codomain names.
    domain : ParamSpace
    codomain : list of (name, direction), default ``[("y", "minimize")]``
    noisy : bool
    """

    def __init__(self, fn, domain, codomain=None, noisy=False):
        self.fn = fn
        self.domain = domain
        self.codomain = list(codomain or [("y", MINIMIZE)])
        if not self.codomain:
            raise ConfigError("codomain must have at least one objective")
        for name, direction in self.codomain:
            if direction not in (MINIMIZE, MAXIMIZE):
                raise ConfigError(f"{name}: direction must be minimize or maximize")
        self.noisy = noisy

    @property
    def n_objectives(self):
        return len(self.codomain)

    @property
    def y_names(self):
        return [name for name, _ in self.codomain]

    @property
    def signs(self):
        return np.array([1.0 if d == MINIMIZE else -1.0 for _, d in self.codomain])

    def __call__(self, point):
        """Raw objective vector; raises :class:`EvalFailed` on any failure."""
        try:
            out = self.fn(point)
        except (EvalFailed, WorkerCrash):
            raise
        except Exception as exc:  # objective code is arbitrary user code
            raise EvalFailed(f"objective raised {type(exc).__name__}: {exc}") from exc
        if isinstance(out, dict):
            out = [out[name] for name in self.y_names]
        y = np.atleast_1d(np.asarray(out, dtype=float))
        if y.shape != (self.n_objectives,):
            raise EvalFailed(f"objective returned {y.shape[0]} values, expected {self.n_objectives}")
        if not np.all(np.isfinite(y)):
            raise EvalFailed("objective returned non-finite values")
        return y


@dataclass
class ArchiveRow:
    point: dict
    y: np.ndarray  # minimization scale; NaN while in flight or after a failure
    batch_nr: int
    timestamp: int
    in_flight: bool = False
    failed: bool = False
    claim_id: object = None


class Archive:
    """Ordered, append-only record of evaluations.

    ``y`` is stored on the internal minimization scale; maximized objectives
    are negated on ingest.  Appends are serialized by a lock; readers get
    point-in-time copies through :meth:`snapshot`.
    """

    def __init__(self, search_space, codomain=None):
        self.search_space = search_space
        self.codomain = list(codomain or [("y", MINIMIZE)])
        self.signs = np.array([1.0 if d == MINIMIZE else -1.0 for _, d in self.codomain])
        self._rows = []
        self._lock = threading.RLock()

    def __len__(self):
        return len(self._rows)

    @property
    def y_names(self):
        return [n for n, _ in self.codomain]

    @property
    def n_objectives(self):
        return len(self.codomain)

    @property
    def lock(self):
        return self._lock

    def snapshot(self):
        with self._lock:
            return list(self._rows)

    @property
    def rows(self):
        return self.snapshot()

    def next_batch_nr(self):
        with self._lock:
            return self._rows[-1].batch_nr + 1 if self._rows else 1

    def append(self, point, y_internal, batch_nr, failed=False, in_flight=False,
               claim_id=None, timestamp=None):
        y = np.full(self.n_objectives, np.nan) if (failed or in_flight) else np.asarray(y_internal, float)
        row = ArchiveRow(point=dict(point), y=y, batch_nr=int(batch_nr),
                         timestamp=_now_ms() if timestamp is None else int(timestamp),
                         in_flight=in_flight, failed=failed, claim_id=claim_id)
        with self._lock:
            if self._rows and row.batch_nr < self._rows[-1].batch_nr:
                raise ValueError("batch numbers must be non-decreasing")
            self._rows.append(row)
        return row

    def append_raw(self, point, y_raw, batch_nr, **kwargs):
        return self.append(point, self.signs * np.asarray(y_raw, float), batch_nr, **kwargs)

    # ------------------------------------------------------------- accessors
    def completed(self, rows=None):
        rows = self.snapshot() if rows is None else rows
        return [r for r in rows if not r.in_flight]

    @property
    def n_evals(self):
        return len(self.completed())

    def data(self, impute_failed=True, rows=None):
        """Completed points and an ``(n, k)`` y matrix on the minimization scale.

        Failed rows get ``max + |range|`` of the successful values per
        objective, so surrogates learn to avoid them.
        """
        rows = self.completed(rows)
        points = [r.point for r in rows]
        Y = np.array([r.y for r in rows]).reshape(len(rows), self.n_objectives)
        failed = np.array([r.failed for r in rows], dtype=bool)
        if impute_failed and failed.any():
            ok = Y[~failed]
            if len(ok):
                lo, hi = ok.min(axis=0), ok.max(axis=0)
                Y[failed] = hi + np.abs(hi - lo)
            else:
                Y[failed] = 0.0
        elif not impute_failed:
            points = [p for p, f in zip(points, failed) if not f]
            Y = Y[~failed]
        return points, Y

    def best(self):
        """Best successful row (first objective, minimization scale) or ``None``."""
        best = None
        for r in self.completed():
            if r.failed:
                continue
            if best is None or r.y[0] < best.y[0]:
                best = r
        return best

    def best_y(self):
        row = self.best()
        return math.inf if row is None else float(row.y[0])

    def raw_y(self, row):
        return self.signs * row.y

    # --------------------------------------------------------- serialization
    def _csv_header(self):
        return ["batch_nr", "timestamp", *self.search_space.names, *self.y_names, "in_flight"]

    def to_csv(self, path=None, write_timestamps=True):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self._csv_header())
        for r in self.snapshot():
            ys = ["" if np.isnan(v) else repr(float(v)) for v in self.signs * r.y]
            xs = [_csv_value(r.point[n]) for n in self.search_space.names]
            writer.writerow([r.batch_nr, r.timestamp if write_timestamps else 0, *xs, *ys,
                             "true" if r.in_flight else "false"])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source, search_space, codomain=None):
        text = _read_text(source)
        archive = cls(search_space, codomain)
        reader = csv.DictReader(io.StringIO(text))
        for rec in reader:
            point = {p.name: _parse_csv_value(p, rec[p.name]) for p in search_space.params}
            in_flight = rec["in_flight"] == "true"
            raw = [rec[n] for n in archive.y_names]
            failed = not in_flight and any(v == "" for v in raw)
            y = np.array([float(v) if v != "" else np.nan for v in raw])
            archive.append(point, archive.signs * y, int(rec["batch_nr"]), failed=failed,
                           in_flight=in_flight, timestamp=int(rec["timestamp"]))
        return archive

    def to_jsonl(self, path=None):
        lines = []
        for r in self.snapshot():
            y = {n: (None if np.isnan(v) else float(v)) for n, v in zip(self.y_names, self.signs * r.y)}
            rec = {"batch_nr": r.batch_nr, "timestamp": r.timestamp,
                   "x": {k: _json_value(v) for k, v in r.point.items()}, "y": y,
                   "in_flight": r.in_flight, "failed": r.failed}
            if r.claim_id is not None:
                rec["claim_id"] = r.claim_id
            lines.append(json.dumps(rec))
        text = "".join(line + "\n" for line in lines)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_jsonl(cls, source, search_space, codomain=None):
        archive = cls(search_space, codomain)
        for line in _read_text(source).splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            y = np.array([np.nan if rec["y"][n] is None else rec["y"][n] for n in archive.y_names], float)
            archive.append(rec["x"], archive.signs * y, rec["batch_nr"], failed=rec.get("failed", False),
                           in_flight=rec["in_flight"], timestamp=rec["timestamp"],
                           claim_id=rec.get("claim_id"))
        return archive


def _read_text(source):
    if isinstance(source, str) and "\n" not in source:
        with open(source) as fh:
            return fh.read()
    return source


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "TRUE" if v else "FALSE"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _parse_csv_value(param, text):
    if text == "":
        return None
    if param.kind == "double":
        return float(text)
    if param.kind == "integer":
        return int(text)
    if param.kind == "logical":
        return text == "TRUE"
    return text


# ------------------------------------------------------------------ terminators
class Terminator:
    """Base class; ``is_met`` must be monotone in archive growth."""

    def is_met(self, instance):
        raise NotImplementedError

    def remaining(self, instance):
        """Evaluations left, if the terminator knows; else ``None``."""
        return None


@dataclass
class TrmEvals(Terminator):
    n_evals: int

    def is_met(self, instance):
        return instance.archive.n_evals >= self.n_evals

    def remaining(self, instance):
        return max(self.n_evals - instance.archive.n_evals, 0)


@dataclass
class TrmRunTime(Terminator):
    seconds: float

    def is_met(self, instance):
        return time.monotonic() - instance.start_time >= self.seconds


@dataclass
class TrmPerfReached(Terminator):
    level: float

    def is_met(self, instance):
        best = instance.archive.best()
        # level is on the user's scale; compare on the minimization scale
        return best is not None and best.y[0] <= instance.archive.signs[0] * self.level


@dataclass
class TrmStagnation(Terminator):
    """Met once some trailing window of ``window`` evaluations improved by at most ``tol``.

    The condition is checked over the whole history, which keeps the
    terminator monotone in archive growth.
    """

    window: int = 10
    tol: float = 0.0

    def is_met(self, instance):
        ys = [r.y[0] if not r.failed else np.inf for r in instance.archive.completed()]
        return _stagnated(np.asarray(ys, float), self.window, self.tol)


def _stagnated(values, window, tol):
    n = len(values)
    if n <= window:
        return False
    running = np.minimum.accumulate(values)
    # improvement achieved by the w evaluations ending at t, relative to best before them
    before = running[: n - window]
    after = running[window:]
    return bool(np.any(before - after <= tol))


@dataclass
class TrmStagnationBatch(Terminator):
    """Experimental: stagnation counted in batches instead of evaluations."""

    n_batches: int = 3
    tol: float = 0.0

    def is_met(self, instance):
        rows = instance.archive.completed()
        if not rows:
            return False
        batches = {}
        for r in rows:
            v = r.y[0] if not r.failed else np.inf
            batches[r.batch_nr] = min(batches.get(r.batch_nr, np.inf), v)
        vals = np.array([batches[k] for k in sorted(batches)])
        return _stagnated(vals, self.n_batches, self.tol)


@dataclass
class TrmStagnationHypervolume(Terminator):
    """Experimental: dominated hypervolume stagnates over ``window`` evaluations."""

    reference_point: tuple
    window: int = 10
    tol: float = 0.0

    def is_met(self, instance):
        from .hypervolume import hypervolume

        _, Y = instance.archive.data(impute_failed=False)
        n = len(Y)
        if n <= self.window:
            return False
        ref = np.asarray(self.reference_point, float)
        hv = np.array([-hypervolume(Y[:t], ref) for t in range(1, n + 1)])
        return _stagnated(hv, self.window, self.tol)


@dataclass
class TrmCombo(Terminator):
    terminators: list
    any: bool = True

    def is_met(self, instance):
        flags = (t.is_met(instance) for t in self.terminators)
        return any(flags) if self.any else all(flags)

    def remaining(self, instance):
        rem = [r for r in (t.remaining(instance) for t in self.terminators) if r is not None]
        return min(rem) if rem else None


class TrmNone(Terminator):
    def is_met(self, instance):
        return False

    def __repr__(self):
        return "TrmNone()"


def trm(key, **kwargs):
    """Terminator by key, e.g. ``trm("evals", n_evals=20)``."""
    table = {"evals": TrmEvals, "run_time": TrmRunTime, "perf_reached": TrmPerfReached,
             "stagnation": TrmStagnation, "stagnation_batch": TrmStagnationBatch,
             "stagnation_hypervolume": TrmStagnationHypervolume, "combo": TrmCombo, "none": TrmNone}
    try:
        return table[key](**kwargs)
    except KeyError:
        raise ConfigError(f"unknown terminator {key!r}") from None


# --------------------------------------------------------------------- instance
class OptimInstance:
    """Objective, search space, archive and terminator bundled together."""

    def __init__(self, objective, terminator, search_space=None, archive=None):
        self.objective = objective
        self.search_space = search_space or objective.domain
        self.terminator = terminator
        self.archive = archive if archive is not None else Archive(self.search_space, objective.codomain)
        self.start_time = time.monotonic()
        self.result = None

    @property
    def n_objectives(self):
        return self.objective.n_objectives

    @property
    def is_terminated(self):
        return self.terminator.is_met(self)

    def evaluate_point(self, point):
        """Evaluate without touching the archive; returns ``(y_internal, failed)``."""
        try:
            return self.objective.signs * self.objective(point), False
        except EvalFailed as exc:
            logger.info("evaluation failed at %s: %s", point, exc)
            return None, True

    def eval_batch(self, points):
        """Evaluate ``points`` as one batch and append them to the archive."""
        points = list(points)
        if not points:
            return []
        if self.is_terminated:
            raise Terminated("terminator already met")
        for p in points:
            self.search_space.check(p)
        batch_nr = self.archive.next_batch_nr()
        rows = []
        for p in points:
            y, failed = self.evaluate_point(p)
            rows.append(self.archive.append(p, y, batch_nr, failed=failed))
        return rows


def oi(fn, domain, terminator, codomain=None):
    """Shortcut building an :class:`OptimInstance` from a plain function."""
    return OptimInstance(Objective(fn, domain, codomain), terminator)


# --------------------------------------------------------------------- results
def pareto_front_mask(Y):
    """Boolean mask of non-dominated rows of ``Y`` (minimization)."""
    Y = np.asarray(Y, float)
    mask = np.ones(len(Y), dtype=bool)
    for start in range(0, len(Y), 256):
        block = Y[start:start + 256]
        # dom[j, i]: row j dominates block row i
        le = np.all(Y[:, None, :] <= block[None, :, :], axis=2)
        lt = np.any(Y[:, None, :] < block[None, :, :], axis=2)
        mask[start:start + 256] = ~np.any(le & lt, axis=0)
    return mask


def pareto_front(archive):
    """Non-dominated completed rows of a multi-objective archive."""
    rows = [r for r in archive.completed() if not r.failed]
    if not rows:
        return []
    Y = np.array([r.y for r in rows])
    mask = pareto_front_mask(Y)
    return [r for r, keep in zip(rows, mask) if keep]


def assign_result(instance, mode="archive_best", surrogate=None):
    """Pick the final point(s).

    ``archive_best`` returns the best observed row (or the Pareto set for
    several objectives).  ``surrogate_mean`` refits ``surrogate`` on the
    archive and returns the archive point with the lowest posterior mean.
    Results are dicts ``{"point", "y"}`` with ``y`` on the user's scale.
    """
    archive = instance.archive
    points, Y = archive.data(impute_failed=False)
    if not points:
        raise ValueError("cannot assign a result from an empty archive")
    names = archive.y_names

    def pack(i):
        return {"point": points[i], "y": dict(zip(names, (archive.signs * Y[i]).tolist()))}

    if mode == "archive_best":
        if archive.n_objectives == 1:
            result = pack(int(np.argmin(Y[:, 0])))
        else:
            result = [pack(i) for i in np.flatnonzero(pareto_front_mask(Y))]
    elif mode == "surrogate_mean":
        if surrogate is None:
            raise ConfigError("surrogate_mean needs a surrogate")
        if archive.n_objectives != 1:
            raise ConfigError("surrogate_mean is single-objective only")
        surrogate.fit(points, Y[:, 0])
        mean, _ = surrogate.predict(points, raw_scale=True)
        result = pack(int(np.argmin(mean)))
    else:
        raise ConfigError(f"unknown result mode {mode!r}")
    instance.result = result
    return result
