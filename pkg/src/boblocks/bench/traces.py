"""Per-evaluation trace records and their CSV / JSON-lines files.

Column order is fixed: ``problem,config_id,seed,eval_index,y,best_so_far,wall_ms``.
Floats are written with ``repr`` so files round-trip exactly.
"""

import csv
from dataclasses import asdict, dataclass, fields
import io
import json
import math

TRACE_COLUMNS = ("problem", "config_id", "seed", "eval_index", "y", "best_so_far", "wall_ms")


@dataclass
class TraceRecord:
    problem: str
    config_id: str
    seed: int
    eval_index: int
    y: float  # NaN for a failed evaluation
    best_so_far: float
    wall_ms: int = 0

    def __eq__(self, other):
        if not isinstance(other, TraceRecord):
            return NotImplemented
        return all(_same(getattr(self, f.name), getattr(other, f.name)) for f in fields(self))


def _same(a, b):
    if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
        return True
    return a == b


def trace_from_archive(archive, problem, config_id, seed, timing=False):
    """One record per completed archive row, in archive order."""
    rows = archive.completed()
    t0 = rows[0].timestamp if rows else 0
    best = math.inf
    out = []
    for i, r in enumerate(rows, start=1):
        y = math.nan if r.failed else float(archive.signs[0] * r.y[0])
        if not r.failed:
            best = min(best, float(r.y[0]))
        best_raw = float(archive.signs[0] * best) if math.isfinite(best) else math.nan
        out.append(TraceRecord(problem, config_id, int(seed), i, y, best_raw,
                               int(r.timestamp - t0) if timing else 0))
    return out


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _parse(name, text):
    if name in ("problem", "config_id"):
        return text
    if name in ("seed", "eval_index", "wall_ms"):
        return int(text)
    return math.nan if text == "" else float(text)


def traces_to_csv(records, path=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in records:
        w.writerow([_fmt(getattr(r, c)) for c in TRACE_COLUMNS])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def traces_from_csv(text):
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
        raise ValueError(f"unexpected trace columns {reader.fieldnames}")
    return [TraceRecord(**{c: _parse(c, rec[c]) for c in TRACE_COLUMNS}) for rec in reader]


def traces_to_jsonl(records, path=None):
    lines = []
    for r in records:
        d = asdict(r)
        for k in ("y", "best_so_far"):
            if math.isnan(d[k]):
                d[k] = None
        lines.append(json.dumps(d))
    text = "".join(line + "\n" for line in lines)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def traces_from_jsonl(text):
    out = []
    for line in text.splitlines():
        if line.strip():
            d = json.loads(line)
            for k in ("y", "best_so_far"):
                d[k] = math.nan if d[k] is None else float(d[k])
            out.append(TraceRecord(**d))
    return out


def final_best(records):
    """Last ``best_so_far`` per ``(problem, config_id, seed)``."""
    out = {}
    for r in records:
        out[(r.problem, r.config_id, r.seed)] = r.best_so_far
    return out
