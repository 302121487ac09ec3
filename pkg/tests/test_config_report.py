import io
import math
from pathlib import Path

import pytest
import yaml
from openpyxl import load_workbook

from errors import ConfigError
from experiment_config import EXPERIMENTS, THREADS_ENV, load_config, parse_config, resolve_threads
from logger import Logger
from main import EXIT_ERROR, EXIT_OK, main
from path_manager import PathManager
from property_suite import PROPERTIES
from report_writer import COLUMNS, TOOL_NAME, VERSION, ReportRow, ReportWriter, read_rows, render_csv

ROOT = Path(__file__).resolve().parent.parent


def _rows():
    return [
        ReportRow("nmse_vs_sigma", "sigma2", 1.0, "krr_diffusion_B5", "nmse", 0.25, 10, 7),
        ReportRow("nmse_vs_sigma", "sigma2", 3.0, "krr_diffusion_B5", "nmse", float("nan"), 10, 7,
                  "Unidentifiable"),
    ]


class TestParseConfig:
    @pytest.mark.parametrize("path", sorted((ROOT / "configs").glob("*.yaml")), ids=lambda p: p.stem)
    def test_shipped_configs_load(self, path):
        cfg = load_config(path)
        assert cfg.experiment == path.stem

    def test_default_config_loads(self):
        assert load_config(ROOT / "config.yaml").experiment in EXPERIMENTS

    def test_defaults(self):
        cfg = parse_config({"experiment": "nmse_vs_sigma"})
        assert cfg.seed == 2017 and cfg.trials == 100
        assert cfg.section is cfg.nmse_vs_sigma

    @pytest.mark.parametrize("raw, key_path", [
        ({"experiment": "nmse_vs_sigma", "graph": {"n_vertex": 5}}, "graph.n_vertex"),
        ({"experiment": "nmse_vs_sigma", "colour": 1}, "colour"),
        ({"experiment": "nmse_vs_sigma", "trials": "ten"}, "trials"),
        ({"experiment": "nmse_vs_sigma", "nmse_vs_sigma": {"mu": "1e-4"}}, "nmse_vs_sigma.mu"),
        ({"experiment": "nmse_vs_sigma", "nmse_vs_sigma": {"bandwidths": [5, -1]}},
         "nmse_vs_sigma.bandwidths[1]"),
        ({"experiment": "nope"}, "experiment"),
        ({"seed": 1}, "experiment"),
        ({"experiment": "nmse_vs_sigma", "graph": {"generator": "grid"}}, "graph.generator"),
        ({"experiment": "nmse_vs_sigma", "iia": {"eta": 1.5}}, "iia.eta"),
        ({"experiment": "nmse_vs_sigma", "output": {"formats": ["xlsx"]}}, "output.formats"),
        ({"experiment": "sparsity_path", "sparsity_path": {"mu_grid": [1.0, 0.5]}}, "sparsity_path.mu_grid"),
        ({"experiment": "nmse_vs_samples", "graph": {"n_vertices": 50}, "signal": {"bandwidth": 60}},
         "signal.bandwidth"),
        ({"experiment": "nmse_vs_samples", "graph": {"n_vertices": 50},
          "nmse_vs_samples": {"sample_counts": [10, 40], "dictionary_bandwidths": [10, 20, 70]}},
         "nmse_vs_samples.dictionary_bandwidths[2]"),
        ({"experiment": "nmse_vs_samples", "graph": {"n_vertices": 50},
          "nmse_vs_samples": {"sample_counts": [10, 40], "dictionary_bandwidths": [10, 20],
                              "ls_bandwidths": [20, 60]}}, "nmse_vs_samples.ls_bandwidths[1]"),
        ({"experiment": "nmse_vs_samples", "graph": {"n_vertices": 50}}, "nmse_vs_samples.sample_counts[6]"),
        ({"experiment": "bandwidth_table", "graph": {"n_vertices": 100},
          "bandwidth_table": {"true_bandwidths": [10, 120], "dictionary_bandwidths": [10, 20]}},
         "bandwidth_table.true_bandwidths[1]"),
        ({"experiment": "sparsity_path", "graph": {"n_vertices": 30}}, "sparsity_path.sample_count"),
        ({"experiment": "nmse_vs_sigma", "graph": {"n_vertices": 30},
          "nmse_vs_sigma": {"sample_count": 20}}, "nmse_vs_sigma.bandwidths[3]"),
        ({"experiment": "nmse_vs_samples", "nmse_vs_samples": {"trace": 0.0}}, "nmse_vs_samples.trace"),
        ({"experiment": "bandwidth_table", "bandwidth_table": {"trace": -1.0}}, "bandwidth_table.trace"),
        ({"experiment": "property_suite", "property_suite": {"properties": ["circulant", "nope"]}},
         "property_suite.properties[1]"),
    ])
    def test_errors_carry_key_path(self, raw, key_path):
        with pytest.raises(ConfigError) as info:
            parse_config(raw)
        assert info.value.key_path == key_path
        assert str(info.value).startswith(f"[{key_path}]")

    def test_log_grid(self):
        cfg = parse_config({"experiment": "sparsity_path",
                            "sparsity_path": {"mu_grid": {"log_start": -2, "log_stop": 0, "num": 3}}})
        assert cfg.sparsity_path.mu_grid == pytest.approx((0.01, 0.1, 1.0))

    def test_log_grid_unknown_key(self):
        with pytest.raises(ConfigError) as info:
            parse_config({"experiment": "sparsity_path",
                          "sparsity_path": {"mu_grid": {"log_start": -2, "log_stop": 0, "n": 3}}})
        assert info.value.key_path == "sparsity_path.mu_grid"

    def test_overrides(self):
        cfg = parse_config({"experiment": "nmse_vs_sigma"}).with_overrides(seed=3, trials=4)
        assert (cfg.seed, cfg.trials) == (3, 4)
        with pytest.raises(ConfigError):
            cfg.with_overrides(trials=0)

    def test_resolved_yaml_keeps_active_section_only(self):
        cfg = parse_config({"experiment": "nmse_vs_sigma", "nmse_vs_sigma": {"mu": 1.0e-3}})
        data = yaml.safe_load(cfg.resolved_yaml())
        assert "nmse_vs_sigma" in data
        assert not any(name in data for name in EXPERIMENTS if name != "nmse_vs_sigma")
        assert parse_config(data) == cfg

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.yaml")

    def test_edge_list_relative_to_config(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("experiment: nmse_vs_sigma\ngraph:\n  generator: edge_list\n  edge_list: g.txt\n",
                        encoding="utf-8")
        assert load_config(path).graph.edge_list == str(tmp_path / "g.txt")


class TestResolveThreads:
    def test_priority(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "3")
        cfg = parse_config({"experiment": "nmse_vs_sigma", "threads": 2})
        assert resolve_threads(cfg, 5) == 5
        assert resolve_threads(cfg) == 2
        assert resolve_threads(parse_config({"experiment": "nmse_vs_sigma"})) == 3

    def test_default(self, monkeypatch):
        monkeypatch.delenv(THREADS_ENV, raising=False)
        n = resolve_threads(parse_config({"experiment": "nmse_vs_sigma"}))
        assert 1 <= n <= 4

    def test_bad_env(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "many")
        with pytest.raises(ConfigError):
            resolve_threads(parse_config({"experiment": "nmse_vs_sigma"}))


class TestReport:
    def test_header_and_rows(self):
        text = render_csv(_rows(), "nmse_vs_sigma", 7, 10, "a: 1\nb: two\n", ["hello"])
        lines = text.splitlines()
        assert lines[0] == f"# {TOOL_NAME} {VERSION}"
        assert "# experiment: nmse_vs_sigma" in lines
        assert "# note: hello" in lines
        assert "#   b: two" in lines
        assert lines[lines.index("#   b: two") + 1] == ",".join(COLUMNS)

        rows = read_rows(text)
        assert rows[0]["value"] == "0.25"
        assert rows[1]["value"] == "nan"
        assert rows[1]["error"] == "Unidentifiable"

    def test_render_is_deterministic(self):
        a = render_csv(_rows(), "nmse_vs_sigma", 7, 10, "a: 1\n")
        assert a == render_csv(_rows(), "nmse_vs_sigma", 7, 10, "a: 1\n")

    def test_xlsx_export(self, tmp_path):
        csv_path = tmp_path / "out" / "r.csv"
        written = ReportWriter(["csv", "xlsx"]).write("x\n", _rows(), csv_path, "a: 1\n")
        assert written == [csv_path, csv_path.with_suffix(".xlsx")]
        wb = load_workbook(csv_path.with_suffix(".xlsx"))
        assert wb.sheetnames == ["results", "config"]
        values = list(wb["results"].iter_rows(values_only=True))
        assert list(values[0]) == list(COLUMNS)
        assert values[2][5] is None
        assert wb["config"]["A1"].value == "a: 1"

    def test_stdout(self, capsys):
        written = ReportWriter(["csv", "xlsx"]).write("payload\n", _rows(), None)
        assert written == []
        assert capsys.readouterr().out == "payload\n"


class TestPathManager:
    def test_default_output_path(self, tmp_path):
        path = PathManager(tmp_path).get_output_path("nmse_vs_sigma", 3, "configs/fig.yaml")
        assert path == tmp_path / "nmse_vs_sigma" / "fig_seed3.csv"
        assert path.parent.is_dir()

    def test_out_wins(self, tmp_path):
        out = tmp_path / "x" / "y.csv"
        assert PathManager(tmp_path).get_output_path("e", 1, None, out) == out

    def test_scan(self, tmp_path):
        for name in ("b.yaml", "a.yml", "c.txt"):
            (tmp_path / name).write_text("experiment: nmse_vs_sigma\n", encoding="utf-8")
        assert [p.name for p in PathManager(tmp_path).scan_configs(tmp_path)] == ["a.yml", "b.yaml"]
        assert PathManager(tmp_path).scan_configs(tmp_path / "missing") == []


class TestLogger:
    def test_quiet_keeps_warnings(self):
        stream = io.StringIO()
        log = Logger(quiet=True, stream=stream)
        log.info("hidden")
        log.success("hidden")
        log.warning("shown")
        log.error("bad")
        assert stream.getvalue() == "⚠ shown\n✗ bad\n"

    def test_debug_switch(self):
        stream = io.StringIO()
        Logger(stream=stream).debug("off")
        Logger(debug=True, stream=stream).debug("on")
        assert stream.getvalue() == "[debug] on\n"

    def test_no_color_env(self, monkeypatch):
        monkeypatch.setenv("NO_COLOR", "1")
        assert not Logger(stream=io.StringIO()).use_color


class TestCli:
    def test_list(self, capsys):
        assert main(["list"]) == EXIT_OK
        out = capsys.readouterr().out
        assert all(name in out for name in EXPERIMENTS)
        assert all(name in out for name in PROPERTIES)

    def test_validate(self, capsys):
        assert main(["-q", "validate", str(ROOT / "configs" / "nmse_vs_sigma.yaml")]) == EXIT_OK
        assert yaml.safe_load(capsys.readouterr().out)["experiment"] == "nmse_vs_sigma"

    def test_bad_config(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("experiment: nmse_vs_sigma\nbogus: 1\n", encoding="utf-8")
        assert main(["-q", "validate", str(path)]) == EXIT_ERROR
        assert main(["-q", "run", str(path)]) == EXIT_ERROR

    def test_bandwidth_over_vertex_count(self, tmp_path, capsys):
        path = tmp_path / "wide.yaml"
        path.write_text("experiment: nmse_vs_samples\ngraph:\n  n_vertices: 50\nsignal:\n  bandwidth: 60\n",
                        encoding="utf-8")
        assert main(["-q", "validate", str(path)]) == EXIT_ERROR
        assert main(["-q", "run", str(path)]) == EXIT_ERROR
        assert "signal.bandwidth" in capsys.readouterr().err

    def test_unknown_property_rejected_by_validate(self, tmp_path):
        path = tmp_path / "props.yaml"
        path.write_text("experiment: property_suite\nproperty_suite:\n  properties: [circulant, nope]\n",
                        encoding="utf-8")
        assert main(["-q", "validate", str(path)]) == EXIT_ERROR

    def test_run_to_file(self, tmp_path):
        cfg = tmp_path / "interp.yaml"
        cfg.write_text("experiment: interpolating_signals\ntrials: 1\ninterpolating_signals:\n"
                       "  n_vertices: 10\n  column: 2\n  diffusion_sigma2: [1.0]\n"
                       "  laplacian_reg_sigma2: [1.0]\n", encoding="utf-8")
        out = tmp_path / "res.csv"
        assert main(["-q", "run", str(cfg), "--out", str(out), "--seed", "9"]) == EXIT_OK
        rows = read_rows(out.read_text(encoding="utf-8"))
        assert len(rows) == 20
        assert {r["seed"] for r in rows} == {"9"}

    def test_run_to_stdout(self, tmp_path, capsys):
        cfg = tmp_path / "interp.yaml"
        cfg.write_text("experiment: interpolating_signals\ninterpolating_signals:\n"
                       "  n_vertices: 6\n  column: 0\n  diffusion_sigma2: [1.0]\n"
                       "  laplacian_reg_sigma2: [2.0]\n", encoding="utf-8")
        assert main(["-q", "run", str(cfg), "--out", "-", "--threads", "2"]) == EXIT_OK
        text = capsys.readouterr().out
        assert text.startswith(f"# {TOOL_NAME}")
        assert "threads: 2" not in text
        assert all(not math.isnan(float(r["value"])) for r in read_rows(text))
