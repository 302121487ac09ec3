import math
from pathlib import Path

import numpy as np
import pytest
import yaml

from errors import ConfigError
from experiment_config import parse_config
from experiments import (
    CUTOFF_NOTE,
    ExperimentResult,
    last_surviving,
    make_graph,
    run_experiment,
    run_trials,
)
from logger import Logger
from report_writer import read_rows, render_csv

ROOT = Path(__file__).resolve().parent.parent
SMALL_GRAPH = {"generator": "erdos_renyi", "n_vertices": 20, "edge_probability": 0.3}


def _config(experiment, section, trials=2, **extra):
    raw = {"experiment": experiment, "seed": 5, "trials": trials, "graph": dict(SMALL_GRAPH),
           experiment: section}
    raw.update(extra)
    return parse_config(raw)


def _samples_config(**section):
    base = {"sample_counts": [8, 12], "dictionary_bandwidths": [2, 3, 4], "ls_bandwidths": [3]}
    base.update(section)
    return _config("nmse_vs_samples", base, trials=3, signal={"bandwidth": 3, "snr_db": 20.0},
                   admm={"max_iter": 300}, iia={"max_iter": 300})


class TestRunTrials:
    def test_results_in_trial_order(self):
        out = run_trials(lambda t: t * t, 6, 3, Logger(quiet=True), "squares")
        assert out == [0, 1, 4, 9, 16, 25]

    def test_make_graph_circular(self):
        cfg = parse_config({"experiment": "nmse_vs_sigma",
                            "graph": {"generator": "circular", "n_vertices": 6},
                            "nmse_vs_sigma": {"bandwidths": [2], "sample_count": 4}})
        g = make_graph(cfg.graph, np.random.default_rng(0))
        assert g.n_vertices == 6 and g.edge_count == 6


class TestNmseVsSigma:
    def test_single_point(self):
        cfg = _config("nmse_vs_sigma", {"sigma2_grid": [1.0], "bandwidths": [3],
                                        "sample_count": 10, "mu": 1.0e-3})
        result = run_experiment(cfg)
        assert isinstance(result, ExperimentResult)
        assert len(result.rows) == 1
        row = result.rows[0]
        assert row.method == "krr_diffusion_B3"
        assert row.sweep_variable == "sigma2" and row.sweep_value == 1.0
        assert row.value >= 0 and row.error == ""
        assert row.trials == 2 and row.seed == 5

    def test_grid_layout(self):
        cfg = _config("nmse_vs_sigma", {"sigma2_grid": [0.5, 2.0], "bandwidths": [2, 4],
                                        "sample_count": 10})
        rows = run_experiment(cfg).rows
        assert [(r.sweep_value, r.method) for r in rows] == [
            (0.5, "krr_diffusion_B2"), (0.5, "krr_diffusion_B4"),
            (2.0, "krr_diffusion_B2"), (2.0, "krr_diffusion_B4"),
        ]

    def test_too_many_samples(self):
        with pytest.raises(ConfigError) as info:
            _config("nmse_vs_sigma", {"sigma2_grid": [1.0], "bandwidths": [3], "sample_count": 40})
        assert info.value.key_path == "nmse_vs_sigma.sample_count"

    def test_edge_list_checked_after_loading(self, tmp_path):
        path = tmp_path / "ring.txt"
        path.write_text("N 4\n0 1 1.0\n1 2 1.0\n2 3 1.0\n3 0 1.0\n", encoding="utf-8")
        cfg = parse_config({"experiment": "nmse_vs_sigma", "trials": 1,
                            "graph": {"generator": "edge_list", "edge_list": str(path)},
                            "nmse_vs_sigma": {"bandwidths": [2, 6], "sample_count": 3}})
        with pytest.raises(ConfigError) as info:
            run_experiment(cfg)
        assert info.value.key_path == "nmse_vs_sigma.bandwidths[1]"


class TestNmseVsSamples:
    def test_methods_and_note(self):
        result = run_experiment(_samples_config())
        assert CUTOFF_NOTE in result.notes
        methods = [r.method for r in result.rows]
        assert methods == ["mkl_rs", "mkl_ks", "ls_B3"] * 2
        assert [r.sweep_value for r in result.rows[::3]] == [8, 12]

    def test_unidentifiable_row_is_nan(self):
        result = run_experiment(_samples_config(sample_counts=[10], ls_bandwidths=[15]))
        ls_row = [r for r in result.rows if r.method == "ls_B15"][0]
        assert math.isnan(ls_row.value)
        assert ls_row.error == "Unidentifiable"

    def test_output_independent_of_threads(self):
        cfg = _samples_config()
        texts = []
        for threads in (1, 3):
            result = run_experiment(cfg, Logger(quiet=True), threads)
            texts.append(render_csv(result.rows, cfg.experiment, cfg.seed, cfg.trials,
                                    cfg.resolved_yaml(), result.notes))
        assert texts[0] == texts[1]
        assert len(read_rows(texts[0])) == 6


class TestSparsityPath:
    def test_rows(self):
        cfg = _config("sparsity_path", {"sample_count": 12, "dictionary_bandwidths": [2, 4, 6],
                                        "beta": 1.0e+3, "mu_grid": [1.0e-2, 1.0e+4]},
                      trials=1, signal={"bandwidth": 4}, admm={"max_iter": 2000})
        rows = run_experiment(cfg).rows
        assert len(rows) == 3 * 2 + 1
        assert rows[0].metric == "norm_sq" and rows[0].method == "kernel_B2"
        tail = [r.value for r in rows[3:6]]
        assert tail == [0.0, 0.0, 0.0]
        assert rows[-1].metric == "last_surviving_bandwidth"

    def test_last_surviving(self):
        path = np.array([[1.0, 0.0, 0.0],
                         [2.0, 0.5, 0.0],
                         [3.0, 0.4, 0.0]])
        assert last_surviving(path, (5, 10, 15)) == 10
        assert last_surviving(np.zeros((2, 2)), (5, 10)) is None


class TestBandwidthTable:
    def test_metrics(self):
        cfg = _config("bandwidth_table", {"true_bandwidths": [3], "sample_count": 12, "mu": 1.0e-2,
                                          "dictionary_bandwidths": [2, 3, 4]},
                      trials=2, admm={"max_iter": 500})
        rows = run_experiment(cfg).rows
        assert [r.metric for r in rows] == ["bias", "std", "mean_estimate", "failed_trials"]
        assert all(r.sweep_value == 3 for r in rows)


class TestInterpolating:
    def test_columns_peak_at_selected_vertex(self):
        cfg = parse_config({"experiment": "interpolating_signals", "trials": 1,
                            "interpolating_signals": {"n_vertices": 20, "column": 5,
                                                      "diffusion_sigma2": [1.0],
                                                      "laplacian_reg_sigma2": [10.0]}})
        rows = run_experiment(cfg).rows
        assert len(rows) == 40
        for label in ("diffusion(sigma2=1.0)", "laplacian_reg(sigma2=10.0)"):
            values = [r.value for r in rows if r.method == label]
            assert int(np.argmax(values)) == 5


class TestCovarianceMse:
    def test_rows(self):
        cfg = parse_config({"experiment": "covariance_mse", "seed": 3, "trials": 4,
                            "covariance_mse": {"n_vertices": 10, "sample_count": 5,
                                               "diffusion_sigma2": [1.0, 3.0]}})
        rows = run_experiment(cfg).rows
        assert [r.metric for r in rows] == ["mse", "mse_se", "mse", "mse_se", "diff_vs_covariance",
                                            "mse", "mse_se", "diff_vs_covariance"]
        assert rows[0].method == "krr_covariance"
        assert all(r.value >= 0 for r in rows if r.metric == "mse")


class TestPropertySuite:
    def test_selected_properties(self):
        cfg = parse_config({"experiment": "property_suite",
                            "property_suite": {"properties": ["circulant", "lmmse_identity"]}})
        result = run_experiment(cfg)
        assert result.failures == 0
        # 按注册顺序执行
        assert [r.sweep_value for r in result.rows] == ["lmmse_identity"] * 2 + ["circulant"] * 2
        assert [r.value for r in result.rows if r.metric == "passed"] == [1.0, 1.0]

    def test_unknown_property(self):
        with pytest.raises(ConfigError) as info:
            parse_config({"experiment": "property_suite",
                          "property_suite": {"properties": ["circulant", "nope"]}})
        assert info.value.key_path == "property_suite.properties[1]"


def _shipped(name, **changes):
    raw = yaml.safe_load((ROOT / "configs" / f"{name}.yaml").read_text(encoding="utf-8"))
    for key, value in changes.items():
        if isinstance(value, dict):
            raw.setdefault(key, {}).update(value)
        else:
            raw[key] = value
    return parse_config(raw)


def _by(rows, *fields):
    return {tuple(getattr(r, f) for f in fields): r for r in rows}


class TestShippedSettings:
    """出厂配置在缩减试验次数下的重构质量"""

    def test_rs_close_to_ls_with_true_bandwidth(self):
        cfg = _shipped("nmse_vs_samples", trials=30,
                       nmse_vs_samples={"sample_counts": [15, 25, 40, 60, 80]})
        rows = _by(run_experiment(cfg, Logger(quiet=True), 4).rows, "sweep_value", "method")

        for s in (40, 60, 80):
            rs, ls = rows[(s, "mkl_rs")].value, rows[(s, "ls_B20")].value
            assert rs <= 1.25 * ls, f"S={s}: RS {rs:.4f} vs LS {ls:.4f}"
        for s in (15, 25):
            ls30 = rows[(s, "ls_B30")]
            assert math.isnan(ls30.value) or ls30.value > 1.0
        assert math.isfinite(rows[(15, "mkl_rs")].value)

    def test_naive_bandwidth_bias_and_spread(self):
        cfg = _shipped("bandwidth_table", trials=8)
        rows = _by(run_experiment(cfg, Logger(quiet=True), 4).rows, "sweep_value", "metric")
        for bw in (10, 20, 30, 40, 50):
            assert rows[(bw, "bias")].value <= 2.5, f"B={bw}"
            assert rows[(bw, "std")].value <= 4.0, f"B={bw}"

    def test_last_surviving_kernel_near_true_bandwidth(self):
        hits = 0
        for seed in range(20):
            cfg = _shipped("sparsity_path", seed=seed, admm={"max_iter": 2000},
                           graph={"n_vertices": 100})
            winner = run_experiment(cfg, Logger(quiet=True)).rows[-1]
            hits += abs(winner.value - 20) <= 10
        assert hits >= 16
