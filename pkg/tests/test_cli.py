"""Tests for the command line, the subcommand helpers and the run reports."""

import json

import numpy as np
import pandas as pd
import pytest

from polystab import __version__
from polystab.cli import main
from polystab.commands import cmd_analyze, cmd_sweep
from polystab.commands.flow import parse_perturbation
from polystab.core.exceptions import FileOperationError, ValidationError
from polystab.families import get_family, long_thin_mp
from polystab.quadrature import build_quadrature
from polystab.report import RunReport, spec_hash, strip_volatile
from polystab.resources import example_path, list_examples


def last_json_line(text):
    return json.loads(text.strip().splitlines()[-1])


@pytest.fixture(autouse=True)
def small_battery(default_config):
    default_config.set("cone/battery_size", 10)


class TestAnalyze:

    def test_p1_is_stable(self, tmp_path):
        assert main(["analyze", "p1", "--out", str(tmp_path), "--battery", "10"]) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["verdict"] == "stable"
        assert report["scalar_summary"]["s_hat"]["exact"] == "2"
        phi = pd.read_csv(tmp_path / "phi.csv")
        assert {"x0", "value", "B"} <= set(phi.columns)

    def test_small_endpoint_weight_is_unstable(self, tmp_path):
        assert main(["analyze", "interval_w01e", "--out", str(tmp_path)]) == 20
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["verdict"] == "unstable"
        assert report["exit_code"] == 20

    def test_missing_file(self, tmp_path, capsys):
        assert main(["analyze", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 1
        payload = last_json_line(capsys.readouterr().err)
        assert payload["error"] == "MalformedDocument"

    def test_reports_are_deterministic(self, tmp_path):
        def stable_text(folder):
            cmd_analyze("p1", resolution=8, seed=3, out=folder)
            report = json.loads((folder / "report.json").read_text())
            return json.dumps(strip_volatile(report), sort_keys=True)

        assert stable_text(tmp_path / "a") == stable_text(tmp_path / "b")
        assert (tmp_path / "a" / "phi.csv").read_text() == (tmp_path / "b" / "phi.csv").read_text()

    def test_version(self, capsys):
        with pytest.raises(SystemExit):
            main(["--version"])
        assert __version__ in capsys.readouterr().out


class TestSweep:

    def test_failures_are_recorded(self, tmp_path):
        index = cmd_sweep("interval", ["1", "-1"], out=tmp_path, resolution=8)
        assert index["failures"] == 1
        good, bad = index["items"]
        assert good["verdicts"]["constant"] == "stable"
        assert bad["error"]["error"] == "ValidationError"
        assert json.loads((tmp_path / "index.json").read_text())["failures"] == 1

    def test_all_failed_exit_code(self, tmp_path):
        assert main(["sweep", "trapezium", "0", "--out", str(tmp_path)]) == 1
        index = json.loads((tmp_path / "index.json").read_text())
        assert index["items"][0]["error"]["error"] == "ValidationError"

    def test_empty_values(self, tmp_path):
        with pytest.raises(ValidationError):
            cmd_sweep("interval", [], out=tmp_path)


class TestFlow:

    def test_short_flow_with_plots(self, tmp_path):
        code = main([
            "flow", "p1", "--perturb", "0.2*x*(1-x)", "--t-end", "0.001",
            "--resolution", "12", "--plot", "--out", str(tmp_path),
        ])
        assert code == 0
        for name in ("diagnostics.csv", "final_state.csv", "flow.json", "energy.svg", "functionals.svg"):
            assert (tmp_path / name).is_file()
        report = json.loads((tmp_path / "flow.json").read_text())
        assert report["flow"]["coercivity_estimate"] > 0

    def test_zero_weight_endpoint(self, tmp_path, capsys):
        spec = tmp_path / "zero.json"
        spec.write_text(json.dumps({"dim": 1, "facets": [
            {"normal": [1], "offset": 0, "sigma_weight": 0},
            {"normal": [-1], "offset": -1},
        ]}))
        assert main(["flow", str(spec), "--t-end", "0.001", "--out", str(tmp_path)]) == 1
        assert last_json_line(capsys.readouterr().err)["error"] == "ZeroWeightEndpoint"

    def test_parse_perturbation(self):
        fn = parse_perturbation("0.5*x*(1-x)")
        x = np.linspace(0, 1, 5)
        assert np.allclose(fn(x), 0.5 * x * (1 - x))
        assert np.allclose(parse_perturbation("1")(x), 1.0)
        assert parse_perturbation("  ") is None

    @pytest.mark.parametrize("text", ["x +* 2", "x*y"])
    def test_bad_perturbation(self, text):
        with pytest.raises(ValidationError):
            parse_perturbation(text)


class TestDecompose:

    def test_stable_polytope_is_refused(self, tmp_path, capsys):
        assert main(["decompose", "p1", "--resolution", "8", "--out", str(tmp_path)]) == 1
        assert last_json_line(capsys.readouterr().err)["error"] == "NotUnstable"

    def test_given_phi(self, square, tmp_path):
        quad = build_quadrature(square, 4)
        nodes = quad.mesh_nodes
        phi = pd.DataFrame({"x0": nodes[:, 0], "x1": nodes[:, 1], "value": np.maximum(2 * nodes[:, 0] - 1, 0)})
        phi.to_csv(tmp_path / "phi.csv", index=False)
        code = main([
            "decompose", "square", "--phi", str(tmp_path / "phi.csv"),
            "--resolution", "4", "--out", str(tmp_path),
        ])
        assert code == 0
        report = json.loads((tmp_path / "decomposition.json").read_text())
        assert len(report["decomposition"]["pieces"]) == 2
        assert set(pd.read_csv(tmp_path / "nodes.csv")["piece"]) == {0, 1}

    def test_mismatched_phi(self, tmp_path, capsys):
        pd.DataFrame({"x0": [0.0, 1.0], "x1": [0.0, 1.0], "value": [0.0, 1.0]}).to_csv(
            tmp_path / "phi.csv", index=False
        )
        code = main(["decompose", "square", "--phi", str(tmp_path / "phi.csv"), "--out", str(tmp_path)])
        assert code == 1
        assert last_json_line(capsys.readouterr().err)["error"] == "ValidationError"

    def test_missing_phi_file(self, tmp_path, capsys):
        code = main(["decompose", "square", "--phi", str(tmp_path / "none.csv"), "--out", str(tmp_path)])
        assert code == 1
        assert last_json_line(capsys.readouterr().err)["error"] == "FileOperationError"


class TestFamiliesAndResources:

    def test_long_thin(self):
        mp = long_thin_mp(2)
        assert mp.volume == 3

    def test_unknown_family(self):
        with pytest.raises(ValidationError):
            get_family("hexagon")

    def test_bundled_examples(self):
        names = list_examples()
        assert {"p1", "square", "trapezium_l2"} <= set(names)
        assert example_path("p1").is_file()
        with pytest.raises(FileOperationError):
            example_path("nope")

    def test_report_hash(self):
        doc = {"dim": 1, "facets": []}
        report = RunReport("analyze", doc, 42, 8).to_dict()
        assert report["spec_hash"] == spec_hash({"facets": [], "dim": 1})
        assert "timestamp" not in strip_volatile(report)
