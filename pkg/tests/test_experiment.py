import csv
import io
import math

import pytest

from delayvax.errors import ConfigInvalid
from delayvax.experiment import (ALL_POLICIES, RESULT_COLUMNS, ExperimentConfig, run_experiment,
                                 summarize)
from delayvax.planner import PolicyKind

SMALL = {"family": "binary_paper", "sizes": [40, 80], "k_values": [1, 3],
         "expected_tau_values": [2, 6], "trees_per_point": 2, "runs_per_tree": 30,
         "policies": ["greedy", "top_k_nns", "top_k_frontiers:2"], "master_seed": 5}


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.lam == 1.0 and cfg.expected_tau_values == [10.0] and cfg.k_values == [5]
    assert cfg.sizes == [1000] and cfg.tree_family.mean == 3
    assert (cfg.trees_per_point, cfg.runs_per_tree) == (10, 1000)
    assert [p.label for p in cfg.policies] == list(ALL_POLICIES)


def test_single_point_row_count():
    cfg = ExperimentConfig.from_mapping({"sizes": [30], "trees_per_point": 1, "runs_per_tree": 1,
                                         "k_values": [2], "expected_tau_values": [3]})
    assert len(run_experiment(cfg, write=False).rows) == len(ALL_POLICIES)


def test_row_count_and_columns(tmp_path):
    cfg = ExperimentConfig.from_mapping({**SMALL, "output_dir": str(tmp_path)})
    res = run_experiment(cfg)
    assert len(res.rows) == 2 * 2 * 2 * 3 * 2
    text = (tmp_path / "results.csv").read_text()
    assert text.splitlines()[0] == ",".join(RESULT_COLUMNS)
    assert len(rows_of(text)) == len(res.rows)


def test_raw_stream_reproduces_means():
    cfg = ExperimentConfig.from_mapping(SMALL)
    res = run_experiment(cfg, emit_raw=True, write=False)
    assert len(res.raw) == len(res.rows) * cfg.runs_per_tree
    for i, row in enumerate(res.rows):
        chunk = res.raw[i * cfg.runs_per_tree:(i + 1) * cfg.runs_per_tree]
        assert all(r["policy"] == row["policy"] and r["tree_seed"] == row["tree_seed"] for r in chunk)
        mean = math.fsum(r["saved_by_plan"] for r in chunk) / len(chunk)
        assert mean / row["n"] == pytest.approx(row["mean_saved_fraction"], rel=1e-12)


def test_byte_identical_and_thread_invariant(tmp_path):
    outs = []
    for name, threads in (("a", 1), ("b", 1), ("c", 4)):
        cfg = ExperimentConfig.from_mapping({**SMALL, "output_dir": str(tmp_path / name)})
        run_experiment(cfg, threads=threads, emit_raw=True)
        outs.append(((tmp_path / name / "results.csv").read_bytes(),
                     (tmp_path / name / "raw.csv").read_bytes()))
    assert outs[0] == outs[1] == outs[2]


def test_grid_point_recomputes_in_isolation():
    full = run_experiment(ExperimentConfig.from_mapping(SMALL), write=False).rows
    alone = run_experiment(ExperimentConfig.from_mapping(
        {**SMALL, "sizes": [80], "k_values": [3], "expected_tau_values": [6]}), write=False).rows
    picked = [r for r in full if (r["n"], r["k"], r["e_tau"]) == (80, 3, 6.0)]
    assert picked == alone


def test_seed_changes_results():
    a = run_experiment(ExperimentConfig.from_mapping(SMALL), write=False).rows
    b = run_experiment(ExperimentConfig.from_mapping({**SMALL, "master_seed": 6}), write=False).rows
    assert a != b


def test_greedy_dominates_binary_grid():
    cfg = ExperimentConfig.from_mapping({
        "family": "binary_paper", "sizes": [100, 500, 1000], "k_values": [5],
        "expected_tau_values": [2, 4, 6, 8, 10], "trees_per_point": 10, "runs_per_tree": 1000,
        "policies": list(ALL_POLICIES)})
    summary = summarize(run_experiment(cfg, write=False).rows)
    for key, val in summary.items():
        greedy = summary[key[:4] + ("greedy",)]
        assert greedy.mean >= val.mean


@pytest.mark.parametrize("bad", [
    {"sizes": []}, {"k_values": [0]}, {"trees_per_point": 0}, {"runs_per_tree": 0},
    {"lambda": -1}, {"tau_kind": "gamma"}, {"policies": ["top_k_random"]}, {"colour": 1},
    {"sizes": [3], "k_values": [5]}, {"family": "poisson"}, {"expected_tau_values": [0]},
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigInvalid) as err:
        ExperimentConfig.from_mapping(bad)
    assert "schema:" in str(err.value)


def test_load_yaml(tmp_path):
    f = tmp_path / "c.yaml"
    f.write_text("family: poisson:2\nsizes: [50]\ntau_kind: deterministic\nexpected_tau_values: [0, 3]\n")
    cfg = ExperimentConfig.load(f)
    assert cfg.tree_family.label == "poisson:2" and cfg.model(3.0).t == 3.0
    bad = tmp_path / "bad.yaml"
    bad.write_text("sizes: [1, 2\n")
    with pytest.raises(ConfigInvalid):
        ExperimentConfig.load(bad)
    assert PolicyKind.parse("top_k_frontiers:3").label == "top_k_frontiers:3"
