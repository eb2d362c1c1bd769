import json
import os

import numpy as np
import pytest

from boblocks.bench import cli
from boblocks.bench.cd import ConfigGrid, run_cd, separable_evaluator
from boblocks.bench.harness import final_best_value, run_config
from boblocks.bench.problems import get_problem
from boblocks.bench.rsns import build_scale, rsns
from boblocks.bench.traces import traces_from_csv

FAST = {"acqopt": {"kind": "random_search", "budget": 200}}

TOY_GRID = {
    "parameters": {"a": [0, 1, 2], "b": ["x", "y", "z"], "c": [0.1, 0.2]},
    "start": {"a": 0, "b": "x", "c": 0.1},
    "scores": {"a": {"0": 0.0, "1": 0.3, "2": 0.1}, "b": {"x": 0.2, "y": 0.0, "z": 0.5}, "c": {"0.1": 0.0, "0.2": 0.4}},
    "n_repeats": 2,
}


def write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2) + "\n")
    return str(path)


def read_tree(root):
    """``{relative path: bytes}`` for every file under ``root``."""
    out = {}
    for base, _, files in os.walk(root):
        for name in files:
            full = os.path.join(base, name)
            with open(full, "rb") as fh:
                out[os.path.relpath(full, root)] = fh.read()
    return out


def run_twice(tmp_path, argv):
    trees = []
    for i in range(2):
        out = tmp_path / f"out{i}"
        assert cli.main(argv + ["--out", str(out)]) == 0
        trees.append(read_tree(out))
    return trees


# ------------------------------------------------------------------ determinism
@pytest.mark.parametrize("fmt", ["csv", "jsonl"])
def test_run_is_byte_identical(tmp_path, fmt):
    cfg = write_json(tmp_path / "sinus.json", {"problem": "sinusoidal", "budget": 12, **FAST})
    a, b = run_twice(tmp_path, ["run", "--config", cfg, "--seed", "1", "--format", fmt])
    assert a == b
    assert {f"trace.{fmt}", f"archive.{fmt}", "result.json"} == set(a)


def test_run_outputs_match_in_process_run(tmp_path):
    cfg = write_json(tmp_path / "sinus.json", {"problem": "sinusoidal", "budget": 12, **FAST})
    assert cli.main(["run", "--config", cfg, "--seed", "3", "--out", str(tmp_path / "o")]) == 0
    result = json.loads((tmp_path / "o" / "result.json").read_text())
    inst = run_config(get_problem("sinusoidal"), FAST, 3, budget=12)
    assert result["best_y"] == final_best_value(inst) and result["n_evals"] == 12
    assert result["config_id"] == "sinus"
    records = traces_from_csv((tmp_path / "o" / "trace.csv").read_text())
    assert [r.y for r in records] == [r.y[0] for r in inst.archive.rows]


def test_different_seeds_differ(tmp_path):
    cfg = write_json(tmp_path / "c.json", {"problem": "sinusoidal", "budget": 8, **FAST})
    for seed in ("1", "2"):
        assert cli.main(["run", "--config", cfg, "--seed", seed, "--out", str(tmp_path / seed)]) == 0
    assert (tmp_path / "1" / "trace.csv").read_bytes() != (tmp_path / "2" / "trace.csv").read_bytes()


def bench_config(tmp_path):
    return write_json(tmp_path / "bench.json", {
        "problems": ["sinusoidal", "branin"],
        "configs": {"lcb": {**FAST, "acq": {"kind": "cb", "lambda": 1}}, "rs": {"loop": "random_search"}},
        "seeds": 2,
        "long_budget": 3000,
        "n_subsamples": 10,
    })


def test_bench_then_rsns_reproduces_summary(tmp_path):
    cfg = bench_config(tmp_path)
    a, b = run_twice(tmp_path, ["bench", "--config", cfg, "--seed", "5"])
    assert a == b
    assert {"scales.json", "rsns_summary.json", "traces/sinusoidal__lcb.csv", "traces/branin__rs.csv"} <= set(a)

    out = tmp_path / "out0"
    again = tmp_path / "again.json"
    assert cli.main(["rsns", "--traces", str(out), "--out", str(again)]) == 0
    assert again.read_bytes() == a["rsns_summary.json"]
    # rerunning in place is also stable
    assert cli.main(["rsns", "--traces", str(out)]) == 0
    assert read_tree(out) == a


def test_bench_summary_matches_in_process_scores(tmp_path):
    cfg = bench_config(tmp_path)
    assert cli.main(["bench", "--config", cfg, "--seed", "5", "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "rsns_summary.json").read_text())
    prob = get_problem("branin")
    scale = build_scale(prob, 3000, 10, np.random.default_rng([5, 7919, 1]), small_budget=prob.budget("compare"))
    expected = [rsns(final_best_value(run_config(prob, {**FAST, "acq": {"kind": "cb", "lambda": 1}}, 5 + s)), scale)
                for s in range(2)]
    assert summary["problems"]["branin"]["lcb"]["values"] == expected
    assert summary["configs"]["rs"] == np.mean([summary["problems"][p]["rs"]["mean"] for p in ("branin", "sinusoidal")])


def test_cd_toy_grid_matches_run_cd(tmp_path):
    grid = write_json(tmp_path / "toy.json", TOY_GRID)
    a, b = run_twice(tmp_path, ["cd", "--grid", grid, "--seed", "0"])
    assert a == b
    log = [json.loads(line) for line in a["cd_log.jsonl"].decode().splitlines()]
    state = run_cd([None], ConfigGrid.from_dict(TOY_GRID["parameters"]), TOY_GRID["start"], 2,
                   np.random.default_rng(0), separable_evaluator(TOY_GRID["scores"]))
    assert log == state.log
    assert state.incumbent == {"a": 1, "b": "z", "c": 0.2}
    result = json.loads(a["cd_result.json"])
    assert result["score"] == pytest.approx(1.2)


def test_cd_over_problems_with_dependent_parameter(tmp_path):
    grid = write_json(tmp_path / "g.json", {
        "parameters": {
            "acq.kind": ["ei", "cb"],
            "acq.lambda": {"values": [1, 3], "depends": {"on": "acq.kind", "equals": "cb"}},
            "acqopt.kind": ["random_search"],
            "acqopt.budget": [100],
        },
        "start": {"acq.kind": "ei", "acq.lambda": None, "acqopt.kind": "random_search", "acqopt.budget": 100},
        "problems": ["sinusoidal"],
        "long_budget": 2000,
        "n_subsamples": 10,
    })
    a, b = run_twice(tmp_path, ["cd", "--grid", grid, "--seed", "0"])
    assert a == b
    result = json.loads(a["cd_result.json"])
    # the first sweep switches to cb and expands both lambda values
    assert {json.dumps(e["config"], sort_keys=True) for e in result["archive"]} >= {
        json.dumps({"acq.kind": "cb", "acq.lambda": lam, "acqopt.kind": "random_search", "acqopt.budget": 100},
                   sort_keys=True) for lam in (1, 3)}


# ------------------------------------------------------------------ exit codes
def test_malformed_json_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "problem": "sinusoidal",\n  "budget": 10,,\n}\n')
    assert cli.main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert f"{bad}:3:" in capsys.readouterr().err


def test_unknown_problem_points_at_its_line(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{\n  "budget": 5,\n  "problem": "rosenbrock"\n}\n')
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert f"{cfg}:3" in err and "rosenbrock" in err


@pytest.mark.parametrize("content", [
    {"budget": 5},
    {"problem": "sinusoidal", "acq": {"kind": "ucb"}},
    {"problem": "sinusoidal", "surrogate": {"kernel": "rbf9"}},
    {"problem": "sinusoidal", "colour": "blue"},
])
def test_invalid_run_configs_exit_2(tmp_path, content):
    cfg = write_json(tmp_path / "c.json", content)
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_invalid_bench_and_cd_configs_exit_2(tmp_path):
    cases = [
        ("bench", "--config", {"problems": ["sinusoidal"]}),
        ("bench", "--config", {"problems": ["nope"], "configs": {"a": {}}}),
        ("bench", "--config", {"problems": ["sinusoidal"], "configs": {"a": {"acq": {"kind": "zz"}}}}),
        ("cd", "--grid", {"parameters": {"a": [1]}}),
        ("cd", "--grid", {"parameters": {"a": [1]}, "start": {"a": 2}, "scores": {"a": {"1": 0}}}),
        ("cd", "--grid", {"parameters": {"a": [1]}, "start": {"a": 1}}),
    ]
    for i, (cmd, flag, content) in enumerate(cases):
        path = write_json(tmp_path / f"c{i}.json", content)
        assert cli.main([cmd, flag, path, "--out", str(tmp_path / "o")]) == 2, content


def test_argument_errors_exit_2(tmp_path, capsys):
    assert cli.main([]) == 2
    assert cli.main(["frobnicate"]) == 2
    assert cli.main(["run"]) == 2
    assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["run", "--config", "x.json", "--workers", "0"]) == 2
    assert cli.main(["rsns", "--traces", str(tmp_path / "nowhere")]) == 2
    capsys.readouterr()


def test_rsns_requires_scales_for_every_problem(tmp_path):
    cfg = bench_config(tmp_path)
    out = tmp_path / "o"
    assert cli.main(["bench", "--config", cfg, "--seed", "0", "--out", str(out)]) == 0
    scales = json.loads((out / "scales.json").read_text())
    del scales["branin"]
    partial = write_json(tmp_path / "scales.json", scales)
    assert cli.main(["rsns", "--traces", str(out), "--scales", partial]) == 2


def test_runtime_failure_exits_1(tmp_path, monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise RuntimeError("objective server unavailable")

    monkeypatch.setattr(cli, "run_config", boom)
    cfg = write_json(tmp_path / "c.json", {"problem": "sinusoidal"})
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "objective server unavailable" in capsys.readouterr().err


def test_help_exits_0(capsys):
    assert cli.main(["--help"]) == 0
    assert "bench" in capsys.readouterr().out
