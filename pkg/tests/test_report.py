import json
import math

import numpy as np
import pandas as pd
import pytest

from experiments import DEFAULT_THRESHOLDS, ExperimentReport
from report import generate_insights, report_payload, to_jsonable, write_json, write_report


@pytest.fixture
def lln_report():
    summary = pd.DataFrame({
        "n": [100, 1600],
        "median": [0.08, 0.02],
        "q90": [0.12, 0.03],
        "mean": [0.085, 0.021],
        "epsilon": [0.316, 0.158],
        "degenerate": [0, 1],
    })
    replications = pd.DataFrame({
        "n": [100, 100, 1600, 1600],
        "replication": [0, 1, 0, 1],
        "seed": ["11", "12", "13", "14"],
        "sup": [0.07, 0.09, 0.019, 0.021],
    })
    return ExperimentReport(
        kind="lln",
        config={"n_grid": [100, 1600]},
        thresholds=dict(DEFAULT_THRESHOLDS),
        passed=True,
        summary=summary,
        replications=replications,
        statistics={"median_smallest_n": 0.08, "median_largest_n": 0.02, "ceiling": 0.39, "contraction": 0.25},
    )


class TestInsights:
    def test_lln(self, lln_report):
        insights = generate_insights(lln_report)
        assert "contracts strongly" in insights[0]
        assert any("degeneracy" in line for line in insights)

    def test_unknown_kind(self, lln_report):
        lln_report.kind = "other"
        assert generate_insights(lln_report) == []

    def test_alpha(self):
        report = ExperimentReport(
            kind="alpha",
            config={},
            thresholds={},
            passed=True,
            summary=pd.DataFrame([{"alpha": 0.5, "mean": 0.501, "standard_error": 0.001}]),
            replications=pd.DataFrame({"seed": ["1"]}),
        )
        assert "1.00 standard errors" in generate_insights(report)[0]


class TestSerialisation:
    def test_non_finite_floats(self):
        assert to_jsonable({"a": math.nan, "b": [math.inf, -math.inf]}) == {"a": "nan", "b": ["inf", "-inf"]}

    def test_numpy_values(self):
        out = to_jsonable({"x": np.float64(0.5), "k": np.int64(3), "ok": np.bool_(True), "v": np.arange(2)})
        assert out == {"x": 0.5, "k": 3, "ok": True, "v": [0, 1]}

    def test_payload(self, lln_report):
        payload = report_payload(lln_report, {"seed": 1})
        assert payload["verdict"] == "PASS"
        assert payload["seeds"] == ["11", "12", "13", "14"]
        assert payload["insights"]
        assert payload["summary"][0]["n"] == 100

    def test_write_json_is_sorted(self, out_dir):
        path = write_json(out_dir / "x.json", {"b": 1, "a": math.nan})
        text = path.read_text(encoding="utf-8")
        assert text.index('"a"') < text.index('"b"')
        assert json.loads(text)["a"] == "nan"
        assert not (out_dir / "x.json.tmp").exists()

    def test_write_report(self, lln_report, out_dir):
        paths = write_report(lln_report, out_dir / "nested", {"seed": 1, "version": "0.3.0"})
        assert set(paths) == {"report", "summary", "replications"}
        document = json.loads(paths["report"].read_text(encoding="utf-8"))
        assert document["kind"] == "lln"
        assert document["provenance"]["version"] == "0.3.0"
        table = pd.read_csv(paths["summary"])
        assert list(table["n"]) == [100, 1600]
        assert pd.read_csv(paths["replications"]).shape == (4, 4)
