import csv
import json

import numpy as np
import pytest

from safe_mdp.benchmark import (METHODS, BenchmarkConfig, behavior_dist, make_grid_benchmark,
                                run_experiment, run_trial, sample_model, success_prob, thread_count)
from safe_mdp.mdp import Mdp, policy_iteration, return_of
from safe_mdp.uncertainty import error_from_counts, row_distances

SMALL = dict(dim1=3, dim2=2, sample_sizes=[50, 5_000], n_trials=2, seed=3)


def test_config_validation_and_roundtrip():
    cfg = BenchmarkConfig(**SMALL)
    assert BenchmarkConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        BenchmarkConfig.from_dict({"dim3": 2})
    for bad in (dict(dim1=0), dict(gamma=1.0), dict(delta=0.0), dict(behavior="greedy"),
                dict(sample_sizes=[-1]), dict(n_trials=0)):
        with pytest.raises(ValueError):
            BenchmarkConfig(**bad)


def test_success_prob_clipped():
    cfg = BenchmarkConfig(success_base=0.01, success_slope=5.0, dim2=3)
    assert success_prob(cfg, 0) == 0.05
    assert success_prob(cfg, 2) == 1.0


def test_grid_structure():
    cfg = BenchmarkConfig()
    m, base = make_grid_benchmark(cfg)
    n1, n2 = cfg.dim1, cfg.dim2
    R = m.reward.reshape(n1, n2, 4)
    # reward depends on i only
    assert np.all(R == R[:, :1, :1])
    assert np.allclose(m.initial_dist.reshape(n1, n2)[0], 1.0 / n2)
    # the baseline never moves along j
    assert set(base.actions.tolist()) <= {0, 1}
    assert np.all(base.actions.reshape(n1, n2) == base.actions.reshape(n1, n2)[:, :1])


def test_default_has_improvement_gap():
    m, base = make_grid_benchmark(BenchmarkConfig())
    _, v = policy_iteration(m)
    assert m.initial_dist @ v > return_of(m, base) + 1e-6


def test_single_cell_grid_gives_zero_improvement():
    cfg = BenchmarkConfig(dim1=1, dim2=1, sample_sizes=[10, 1000], n_trials=1)
    rows, _ = run_trial(cfg, 0)
    assert all(r[3] == 0.0 for r in rows)


def test_behavior_dist_normalized():
    cfg = BenchmarkConfig(dim1=3, dim2=2)
    m, base = make_grid_benchmark(cfg)
    for kind, eps in (("uniform", 0.0), ("baseline_mix", 0.0), ("baseline_mix", 0.3)):
        w = behavior_dist(m, base, kind, eps)
        assert w.shape == (6, 4) and w.sum() == pytest.approx(1.0)
    assert np.all(behavior_dist(m, base, "baseline_mix", 0.0)[:, 2:] == 0.0)


def test_sample_model_deterministic_and_total():
    m, _ = make_grid_benchmark(BenchmarkConfig(dim1=3, dim2=2))
    a = sample_model(m, 1234, "uniform", 7)
    b = sample_model(m, 1234, "uniform", 7)
    assert np.array_equal(a.counts, b.counts) and a.counts.sum() == 1234
    # every transition lands on a successor the true model allows
    assert np.all(a.counts[m.transition == 0] == 0)


def test_no_samples_gives_full_budget():
    m, _ = make_grid_benchmark(BenchmarkConfig(dim1=3, dim2=2))
    e = error_from_counts(sample_model(m, 0, "uniform", 0), 0.05)
    assert np.all(e.budget == 2.0)


def test_empirical_model_converges():
    m = Mdp([[0.0], [1.0]], [[[0.3, 0.7]], [[0.6, 0.4]]], [1.0, 0.0], 0.9, 1.0)
    counts = sample_model(m, 1_000_000, "uniform", 11)
    assert row_distances(counts.empirical, m.transition).max() < 0.01


def test_run_experiment_deterministic_and_parallel_equal():
    cfg = BenchmarkConfig(**SMALL)
    a = run_experiment(cfg, threads=1)
    b = run_experiment(cfg, threads=2)
    assert a.rows == b.rows and a.meta == b.meta
    assert len(a.rows) == len(METHODS) * 2 * 2
    assert set(a.meta["membership"]) == {"50", "5000"}


def test_outputs_written(tmp_path):
    res = run_experiment(BenchmarkConfig(**SMALL), threads=1)
    out, meta = tmp_path / "r.csv", tmp_path / "r.json"
    res.write_csv(out)
    res.write_meta(meta)
    with open(out) as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["method", "sample_size", "trial", "improvement_pct"]
    assert len(rows) == 1 + len(res.rows)
    assert [float(r[3]) for r in rows[1:]] == [r[3] for r in res.rows]
    assert json.loads(meta.read_text())["config"]["seed"] == 3


def test_thread_count(monkeypatch):
    monkeypatch.setenv("SAFE_MDP_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("SAFE_MDP_THREADS", "0")
    assert thread_count() >= 1
    monkeypatch.delenv("SAFE_MDP_THREADS")
    assert thread_count() >= 1
