"""Tests for the core helpers: numbers, configuration, errors, validation, export."""

import io
import json

import pandas as pd
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from polystab.core.config_manager import ConfigManager, get_config_manager
from polystab.core.error_utils import error_payload, log_and_report, safe_operation
from polystab.core.exceptions import (
    ExportError,
    FileOperationError,
    NonPrimitiveNormal,
    PolystabError,
    StepRejected,
    ValidationError,
    ZeroWeightEndpoint,
)
from polystab.core.export_utils import export_line_chart_svg, export_to_csv, export_to_json
from polystab.core.number_utils import is_exact, is_primitive, parse_rational, rational_normal
from polystab.core.validation import (
    validate_not_empty,
    validate_path,
    validate_positive,
    validate_range,
)


class TestParseRational:

    def test_string_fraction(self):
        assert parse_rational("1/2") == sp.Rational(1, 2)

    def test_float_uses_shortest_decimal(self):
        assert parse_rational(0.1) == sp.Rational(1, 10)

    def test_int(self):
        assert parse_rational(3) == 3
        assert is_exact(parse_rational(3))

    @pytest.mark.parametrize("bad", ["abc", True, float("inf"), None])
    def test_rejects(self, bad):
        with pytest.raises(ValidationError):
            parse_rational(bad)

    @given(st.integers(-1000, 1000), st.integers(1, 1000))
    def test_fraction_strings(self, p, q):
        assert parse_rational(f"{p}/{q}") == sp.Rational(p, q)


class TestRationalNormal:

    def test_half_slope(self):
        ints, factor = rational_normal(["-1/2", -1])
        assert ints == [-1, -2]
        assert factor == 2

    def test_zero_direction(self):
        with pytest.raises(ValidationError):
            rational_normal([0, 0])

    @given(st.lists(st.fractions(max_denominator=50), min_size=1, max_size=3).filter(
        lambda v: any(x != 0 for x in v)))
    def test_primitive_multiple(self, direction):
        ints, factor = rational_normal([str(x) for x in direction])
        assert is_primitive(ints)
        assert factor > 0
        assert ints == [factor * sp.Rational(str(x)) for x in direction]


class TestConfigManager:

    def test_singleton(self):
        assert ConfigManager() is get_config_manager()

    def test_hierarchical_get_set(self, default_config):
        assert default_config.get("destabilizer/rho") == 1.0
        default_config.set("destabilizer/rho", 2.5)
        assert default_config.get("destabilizer/rho") == 2.5
        assert default_config.get("missing/key", "fallback") == "fallback"

    def test_section_is_a_copy(self, default_config):
        section = default_config.section("flow")
        section["cfl"] = 99.0
        assert default_config.get("flow/cfl") == 0.05

    def test_reset(self, default_config):
        default_config.set("mesh/resolution", 3)
        default_config.reset()
        assert default_config.get("mesh/resolution") == 8

    def test_config_file_from_environment(self, tmp_path, monkeypatch):
        path = tmp_path / "settings.json"
        path.write_text(json.dumps({"flow": {"cfl": 0.01}}))
        monkeypatch.setenv("POLYSTAB_CONFIG", str(path))
        monkeypatch.setattr(ConfigManager, "_instance", None)
        manager = ConfigManager()
        assert manager.config_file == path
        assert manager.get("flow/cfl") == 0.01


class TestErrors:

    def test_payload(self):
        payload = error_payload(ValidationError("bad resolution"))
        assert payload == {"error": "ValidationError", "message": "bad resolution", "details": {}}

    def test_payload_details(self):
        payload = error_payload(NonPrimitiveNormal("not primitive", facet_index=2))
        assert payload["details"] == {"facet_index": 2}

    def test_step_rejected_carries_dt(self):
        error = StepRejected("too large", suggested_dt=0.25)
        assert error.suggested_dt == 0.25
        assert error.details["suggested_dt"] == 0.25

    def test_zero_weight_is_a_validation_error(self):
        assert issubclass(ZeroWeightEndpoint, ValidationError)
        assert issubclass(ZeroWeightEndpoint, PolystabError)

    def test_log_and_report_writes_one_line(self):
        stream = io.StringIO()
        log_and_report(ValidationError("oops"), "Command failed.", stream=stream)
        lines = stream.getvalue().splitlines()
        assert len(lines) == 1
        assert json.loads(lines[0])["error"] == "ValidationError"

    def test_safe_operation(self):
        seen = []

        def boom():
            raise ValidationError("boom")

        assert safe_operation(boom, "failed", default_return=-1, on_error=seen.append) == -1
        assert isinstance(seen[0], ValidationError)
        assert safe_operation(lambda: 5, "failed") == 5


class TestValidation:

    def test_positive(self):
        @validate_positive("dt")
        def f(dt):
            return dt

        assert f(0.5) == 0.5
        with pytest.raises(ValidationError):
            f(0.0)
        with pytest.raises(ValidationError):
            f(dt=-1)

    def test_range_custom_error(self):
        @validate_range("degree", 0, 2, error=NonPrimitiveNormal)
        def f(degree=1):
            return degree

        assert f() == 1
        with pytest.raises(NonPrimitiveNormal):
            f(3)

    def test_not_empty(self):
        @validate_not_empty("values")
        def f(values):
            return len(values)

        with pytest.raises(ValidationError):
            f([])

    def test_path(self, tmp_path):
        @validate_path("path", must_exist=True)
        def read(path):
            return path

        @validate_path("path", create_parents=True)
        def write(path):
            return path

        with pytest.raises(FileOperationError):
            read(tmp_path / "missing.csv")
        target = tmp_path / "a" / "b" / "out.json"
        assert write(target) == target
        assert target.parent.is_dir()


class TestExport:

    def test_json_is_sorted(self, tmp_path):
        path = tmp_path / "out" / "report.json"
        export_to_json({"b": 1, "a": [1.5, 2]}, path)
        text = path.read_text()
        assert text.index('"a"') < text.index('"b"')
        assert json.loads(text) == {"a": [1.5, 2], "b": 1}
        assert [p.name for p in path.parent.iterdir()] == ["report.json"]

    def test_csv(self, tmp_path):
        path = tmp_path / "table.csv"
        export_to_csv(pd.DataFrame({"x": [0.0, 0.5], "value": [1.0, 2.0]}), path)
        frame = pd.read_csv(path)
        assert list(frame.columns) == ["x", "value"]
        assert frame["value"].tolist() == [1.0, 2.0]

    def test_json_accepts_numpy_scalars(self, tmp_path):
        import numpy as np

        path = tmp_path / "numpy.json"
        export_to_json({"flag": np.bool_(True), "count": np.int64(3), "values": np.arange(2)}, path)
        assert json.loads(path.read_text()) == {"count": 3, "flag": True, "values": [0, 1]}

    def test_svg_chart(self, tmp_path):
        path = tmp_path / "energy.svg"
        frame = pd.DataFrame({"t": [0.0, 0.1, 0.2], "calabi_energy": [1.0, 0.5, 0.25]})
        export_line_chart_svg(frame, "t", ["calabi_energy"], path, title="energy", log_y=True)
        assert path.read_text().lstrip().startswith("<?xml")

    def test_failed_chart_releases_figure(self, tmp_path):
        import matplotlib.pyplot as plt

        before = plt.get_fignums()
        frame = pd.DataFrame({"t": [0.0, 0.1], "calabi_energy": [1.0, 0.5]})
        with pytest.raises(ExportError):
            export_line_chart_svg(frame, "t", ["calabi_energy", "missing"], tmp_path / "broken.svg")
        assert plt.get_fignums() == before
        assert not (tmp_path / "broken.svg").exists()
