"""Command line interface: ``run``, ``bench``, ``cd`` and ``rsns``.

Exit codes: 0 on success, 2 for configuration errors, 1 for runtime
failures.  Output files are byte-identical across reruns with the same
seed; wall-clock columns are zero unless ``--timing`` is given.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from ..exceptions import ConfigError
from .cd import ConfigGrid, run_cd, separable_evaluator
from .harness import RANDOM_SEARCH, final_best_value, resolve_config, rsns_evaluator, run_config
from .problems import get_problem
from .rsns import LONG_BUDGET, N_SUBSAMPLES, RsnsScale, build_scale, rsns
from .traces import (final_best, trace_from_archive, traces_from_csv, traces_from_jsonl, traces_to_csv,
                     traces_to_jsonl)

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class CliConfigError(Exception):
    pass


def load_json(path):
    """Parse a JSON file, reporting ``path:line:col`` on syntax errors."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as err:
        raise CliConfigError(f"{path}: {err.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise CliConfigError(f"{path}:{err.lineno}:{err.colno}: {err.msg}") from None
    if not isinstance(data, dict):
        raise CliConfigError(f"{path}:1:1: top level must be a JSON object")
    return data


def _where(path, data, key):
    """``path:line`` of the first occurrence of ``"key"`` in the file, for diagnostics."""
    try:
        with open(path) as fh:
            for i, line in enumerate(fh, start=1):
                if f'"{key}"' in line:
                    return f"{path}:{i}"
    except OSError:
        pass
    return path


def _dump(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not JSON serializable: {type(v).__name__}")


def _write_traces(records, path_base, fmt):
    if fmt == "jsonl":
        traces_to_jsonl(records, path_base + ".jsonl")
    else:
        traces_to_csv(records, path_base + ".csv")


# ------------------------------------------------------------------- run
_RUN_KEYS = ("problem", "budget", "budget_rule", "config_id")


def cmd_run(args):
    data = load_json(args.config)
    if "problem" not in data:
        raise CliConfigError(f"{args.config}: missing key 'problem'")
    try:
        problem = get_problem(data["problem"])
    except KeyError as err:
        raise CliConfigError(f"{_where(args.config, data, 'problem')}: {err.args[0]}") from None
    loop_keys = {k: v for k, v in data.items() if k not in _RUN_KEYS}
    try:
        config = resolve_config(problem, loop_keys)
    except ConfigError as err:
        raise CliConfigError(f"{args.config}: {err}") from None
    budget = data.get("budget")
    rule = data.get("budget_rule", "compare")
    config_id = data.get("config_id", os.path.splitext(os.path.basename(args.config))[0])

    os.makedirs(args.out, exist_ok=True)
    inst = run_config(problem, config, args.seed, budget=budget, workers=args.workers, budget_rule=rule)
    records = trace_from_archive(inst.archive, problem.name, config_id, args.seed, timing=args.timing)
    _write_traces(records, os.path.join(args.out, "trace"), args.format)
    archive_path = os.path.join(args.out, "archive." + args.format)
    if args.format == "jsonl":
        text = inst.archive.to_jsonl()
        if not args.timing:
            text = "".join(json.dumps({**json.loads(line), "timestamp": 0}) + "\n" for line in text.splitlines())
        with open(archive_path, "w") as fh:
            fh.write(text)
    else:
        inst.archive.to_csv(archive_path, write_timestamps=args.timing)
    _dump({
        "problem": problem.name,
        "config_id": config_id,
        "seed": args.seed,
        "n_evals": inst.archive.n_evals,
        "best_y": final_best_value(inst),
        "result": getattr(inst, "result", None),
        "config": config if config == RANDOM_SEARCH else config.to_dict(),
    }, os.path.join(args.out, "result.json"))
    return EXIT_OK


# ----------------------------------------------------------------- bench
def _bench_settings(data, path):
    for key in ("problems", "configs"):
        if key not in data:
            raise CliConfigError(f"{path}: missing key {key!r}")
    if not isinstance(data["configs"], dict) or not data["configs"]:
        raise CliConfigError(f"{_where(path, data, 'configs')}: 'configs' must map ids to configurations")
    try:
        problems = [get_problem(p) for p in data["problems"]]
    except KeyError as err:
        raise CliConfigError(f"{_where(path, data, 'problems')}: {err.args[0]}") from None
    seeds = data.get("seeds", 3)
    seeds = list(range(seeds)) if isinstance(seeds, int) else [int(s) for s in seeds]
    configs = {}
    for cid, cfg in data["configs"].items():
        for p in problems:
            try:
                configs[(p.name, cid)] = resolve_config(p, cfg)
            except ConfigError as err:
                raise CliConfigError(f"{_where(path, data, cid)}: config {cid!r}: {err}") from None
    return problems, seeds, configs


def rsns_summary(records, scales):
    """Per problem and config: RSNS of each seed's final best value; plus config means.

    Aggregation runs over sorted keys so sums are evaluated in a fixed order.
    """
    finals = final_best(records)
    table = {}
    for (prob, cid, seed), best in sorted(finals.items()):
        table.setdefault(prob, {}).setdefault(cid, []).append(rsns(best, scales[prob]))
    per_problem = {p: {c: {"mean": float(np.mean(v)), "n": len(v), "values": v} for c, v in sorted(cs.items())}
                   for p, cs in sorted(table.items())}
    overall = {}
    for cid in sorted({c for cs in table.values() for c in cs}):
        means = [per_problem[p][cid]["mean"] for p in sorted(per_problem) if cid in per_problem[p]]
        overall[cid] = float(np.mean(means))
    return {"problems": per_problem, "configs": overall}


def cmd_bench(args):
    data = load_json(args.config)
    problems, seeds, configs = _bench_settings(data, args.config)
    rule = data.get("budget_rule", "compare")
    long_budget = int(data.get("long_budget", LONG_BUDGET))
    n_sub = int(data.get("n_subsamples", N_SUBSAMPLES))
    trace_dir = os.path.join(args.out, "traces")
    os.makedirs(trace_dir, exist_ok=True)

    scales = {}
    for i, p in enumerate(problems):
        rng = np.random.default_rng([args.seed, 7919, i])
        scales[p.name] = build_scale(p, long_budget, n_sub, rng, small_budget=p.budget(rule))
    _dump({k: v.to_dict() for k, v in scales.items()}, os.path.join(args.out, "scales.json"))

    all_records = []
    for p in problems:
        for cid in data["configs"]:
            records = []
            for s in seeds:
                inst = run_config(p, configs[(p.name, cid)], args.seed + s, workers=args.workers, budget_rule=rule)
                records += trace_from_archive(inst.archive, p.name, cid, args.seed + s, timing=args.timing)
            _write_traces(records, os.path.join(trace_dir, f"{p.name}__{cid}"), args.format)
            all_records += records
    _dump(rsns_summary(all_records, scales), os.path.join(args.out, "rsns_summary.json"))
    return EXIT_OK


# ------------------------------------------------------------------ rsns
def read_trace_dir(path):
    """All trace records under ``path`` (or ``path/traces``), in sorted file order."""
    tdir = os.path.join(path, "traces") if os.path.isdir(os.path.join(path, "traces")) else path
    records = []
    for name in sorted(os.listdir(tdir)):
        full = os.path.join(tdir, name)
        with open(full) as fh:
            text = fh.read()
        if name.endswith(".csv"):
            records += traces_from_csv(text)
        elif name.endswith(".jsonl"):
            records += traces_from_jsonl(text)
    return records


def cmd_rsns(args):
    scales_path = args.scales or os.path.join(args.traces, "scales.json")
    raw = load_json(scales_path)
    try:
        scales = {k: RsnsScale(**v) for k, v in raw.items()}
    except TypeError as err:
        raise CliConfigError(f"{scales_path}: {err}") from None
    if not os.path.isdir(args.traces):
        raise CliConfigError(f"{args.traces}: not a directory")
    records = read_trace_dir(args.traces)
    missing = sorted({r.problem for r in records} - set(scales))
    if missing:
        raise CliConfigError(f"{scales_path}: no scale for problems {missing}")
    out = args.out or os.path.join(args.traces, "rsns_summary.json")
    _dump(rsns_summary(records, scales), out)
    return EXIT_OK


# -------------------------------------------------------------------- cd
def cmd_cd(args):
    data = load_json(args.grid)
    for k in ("parameters", "start"):
        if k not in data:
            raise CliConfigError(f"{args.grid}: missing key {k!r}")
    try:
        grid = ConfigGrid.from_dict(data["parameters"])
        grid.validate(data["start"])
    except (ConfigError, KeyError, TypeError) as err:
        raise CliConfigError(f"{_where(args.grid, data, 'parameters')}: {err}") from None
    n_repeats = int(data.get("n_repeats", 1))
    if "scores" in data:
        evaluator = separable_evaluator(data["scores"])
        problems = [None]
    else:
        try:
            problems = [get_problem(p) for p in data.get("problems", [])]
        except KeyError as err:
            raise CliConfigError(f"{_where(args.grid, data, 'problems')}: {err.args[0]}") from None
        if not problems:
            raise CliConfigError(f"{args.grid}: need 'scores' or a non-empty 'problems' list")
        rule = data.get("budget_rule", "compare")
        scales = {p.name: build_scale(p, int(data.get("long_budget", LONG_BUDGET)),
                                      int(data.get("n_subsamples", N_SUBSAMPLES)),
                                      np.random.default_rng([args.seed, 7919, i]), small_budget=p.budget(rule))
                  for i, p in enumerate(problems)}
        evaluator = rsns_evaluator(scales, rule)
    state = run_cd(problems, grid, data["start"], n_repeats, rng=np.random.default_rng(args.seed),
                   evaluator=evaluator)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "cd_log.jsonl"), "w") as fh:
        for entry in state.log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    _dump({"incumbent": state.incumbent, "score": state.score,
           "archive": [{"config": json.loads(k), "score": v} for k, v in state.archive.items()]},
          os.path.join(args.out, "cd_result.json"))
    return EXIT_OK


# ------------------------------------------------------------------ main
def build_parser():
    parser = argparse.ArgumentParser(prog="boblocks", description="Bayesian optimization building blocks")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_flag="--config"):
        p.add_argument(config_flag, required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
        p.add_argument("--timing", action="store_true", help="record wall-clock milliseconds")

    common(sub.add_parser("run", help="one optimization run from a JSON config"))
    common(sub.add_parser("bench", help="config x problem grid with RSNS summary"))
    common(sub.add_parser("cd", help="coordinate descent over a configuration grid"), "--grid")
    p = sub.add_parser("rsns", help="recompute RSNS summaries from trace files")
    p.add_argument("--traces", required=True)
    p.add_argument("--scales", default=None)
    p.add_argument("--out", default=None)
    return parser


COMMANDS = {"run": cmd_run, "bench": cmd_bench, "cd": cmd_cd, "rsns": cmd_rsns}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except (CliConfigError, ConfigError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as err:
        print(f"runtime failure: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
