"""Tests for JSON/CSV artifact writing."""

import json
import math
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pandas as pd
import pytest

from selrand.inference.pvalues import PValueResult
from selrand.io.results import (
    atomic_write_text,
    dumps_json,
    pcurve_frame,
    to_jsonable,
    write_csv,
    write_report,
)
from selrand.sim.studies import StudyReport


class TestJsonable:
    def test_non_finite_becomes_null(self):
        assert to_jsonable({"a": math.nan, "b": np.inf, "c": pd.NA}) == {
            "a": None,
            "b": None,
            "c": None,
        }

    def test_numpy_values(self):
        payload = to_jsonable({"x": np.int64(3), "y": np.array([0.5, np.nan]), "z": np.bool_(True)})
        assert payload == {"x": 3, "y": [0.5, None], "z": True}

    def test_sets_are_sorted(self):
        assert to_jsonable(frozenset({3, 1, 2})) == [1, 2, 3]

    def test_objects_with_to_dict(self):
        result = PValueResult(estimate=0.25, method="selective_exact", selection=("a", "a"))
        assert to_jsonable(result)["selection"] == ["a", "a"]

    def test_dumps_is_strict_json(self):
        text = dumps_json({"p": math.inf})
        assert json.loads(text) == {"p": None}
        assert text.endswith("\n")


class TestAtomicWrite:
    def test_creates_parent_directories(self, tmp_path: Path):
        path = atomic_write_text(tmp_path / "a" / "b" / "out.json", "{}\n")
        assert path.read_text() == "{}\n"
        assert list(path.parent.iterdir()) == [path]

    def test_failed_write_leaves_no_temp_file(self, tmp_path: Path):
        target = tmp_path / "out.csv"
        target.write_text("old\n")
        with patch("selrand.io.results.os.replace", side_effect=OSError("disk full")):
            with pytest.raises(OSError):
                atomic_write_text(target, "new\n")
        assert target.read_text() == "old\n"
        assert list(tmp_path.iterdir()) == [target]


class TestCsv:
    def test_pcurve_columns_and_blanks(self, tmp_path: Path):
        frame = pcurve_frame([0.0, 0.5], [0.3, math.nan], [0.01, math.nan], "selective")
        path = write_csv(tmp_path / "pcurve.csv", frame)
        lines = path.read_text().splitlines()
        assert lines[0] == "tau,p,se,method"
        assert lines[2] == "0.5,,,selective"

    def test_report_pair(self, tmp_path: Path):
        rows = pd.DataFrame({"tau": [0.0], "method": ["naive"], "replication": [0]})
        report = StudyReport("rejection", rows, {"alpha": 0.1})
        csv_path, json_path = write_report(tmp_path, report)
        assert csv_path.read_text().splitlines()[0] == "method,replication,tau"
        assert json.loads(json_path.read_text()) == {
            "study": "rejection",
            "replications": 1,
            "alpha": 0.1,
        }
