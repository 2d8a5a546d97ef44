"""Tests for trial and dataset CSV ingestion."""

import textwrap
from pathlib import Path

import numpy as np
import pytest

from selrand.errors import DataSchemaError
from selrand.io.csv_ingest import (
    ingest_csv,
    load_record,
    read_binary_dataset,
    trial_frame,
    write_trial_csv,
)

TOY_CSV = textwrap.dedent("""\
    unit_id,stage,group,treatment,outcome,age
    0,1,a,1,0,61
    1,1,a,0,1,70
    2,1,b,1,1,55
    3,1,b,0,1,58
    4,2,a,1,0,66
    5,2,a,1,1,72
    6,2,a,0,1,64
    7,2,a,0,1,69
    8,0,b,,,50
""")


@pytest.fixture
def toy_csv(tmp_path: Path) -> Path:
    path = tmp_path / "trial.csv"
    path.write_text(TOY_CSV)
    return path


def _write(tmp_path: Path, text: str) -> Path:
    path = tmp_path / "bad.csv"
    path.write_text(textwrap.dedent(text))
    return path


class TestIngest:
    def test_reads_stages_and_pool(self, toy_csv: Path, rr_record):
        rec = ingest_csv(toy_csv)
        assert rec.num_stages == 2
        np.testing.assert_array_equal(rec.z, rr_record.z)
        np.testing.assert_array_equal(rec.y, rr_record.y)
        assert list(rec.groups) == list(rr_record.groups)
        assert 8 in rec.units.index
        assert rec.units.loc[8, "group"] == "b"
        assert rec.units.loc[0, "age"] == "61"

    def test_load_record_attaches_selections(self, toy_csv: Path, rr_spec):
        rec = load_record(toy_csv, rr_spec)
        assert rec.selections == ("a", "a")

    def test_load_record_rejects_invalid_record(self, tmp_path: Path, rr_spec):
        path = _write(tmp_path, TOY_CSV.replace("4,2,a,1,0,66", "4,2,a,3,0,66"))
        with pytest.raises(DataSchemaError, match="invalid arm 3 in stage 2"):
            load_record(path, rr_spec)

    def test_pads_trailing_empty_stages(self, toy_csv: Path):
        assert ingest_csv(toy_csv, num_stages=3).num_stages == 3

    def test_round_trip_through_writer(self, toy_csv: Path, tmp_path: Path):
        rec = ingest_csv(toy_csv)
        out = write_trial_csv(rec, tmp_path / "copy.csv")
        again = ingest_csv(out)
        np.testing.assert_array_equal(again.unit_ids, rec.unit_ids)
        np.testing.assert_array_equal(again.z, rec.z)
        assert list(trial_frame(again).columns) == [
            "unit_id", "stage", "group", "treatment", "outcome", "age"
        ]
        assert out.read_text().splitlines()[-1].startswith("8,0,b,,")


class TestSchemaErrors:
    def test_empty_file(self, tmp_path: Path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(DataSchemaError) as excinfo:
            ingest_csv(path)
        assert excinfo.value.row == 1

    def test_missing_column(self, tmp_path: Path):
        path = _write(tmp_path, """\
            unit_id,stage,group,outcome
            0,1,a,1
        """)
        with pytest.raises(DataSchemaError) as excinfo:
            ingest_csv(path)
        assert excinfo.value.column == "treatment"
        assert excinfo.value.row == 1

    def test_bad_treatment_reports_line(self, tmp_path: Path):
        path = _write(tmp_path, """\
            unit_id,stage,group,treatment,outcome
            0,1,a,1,0
            1,1,a,x,1
        """)
        with pytest.raises(DataSchemaError) as excinfo:
            ingest_csv(path)
        assert excinfo.value.row == 3
        assert excinfo.value.column == "treatment"
        assert "invalid integer 'x'" in excinfo.value.message

    @pytest.mark.parametrize("code", ["256", "-1"])
    def test_arm_code_outside_assignment_range(self, tmp_path: Path, code: str):
        path = _write(tmp_path, f"""\
            unit_id,stage,group,treatment,outcome
            0,1,a,1,0
            1,1,a,{code},1
        """)
        with pytest.raises(DataSchemaError, match=f"arm code {code} out of range") as excinfo:
            ingest_csv(path)
        assert excinfo.value.row == 3
        assert excinfo.value.column == "treatment"

    def test_blank_outcome_outside_pool(self, tmp_path: Path):
        path = _write(tmp_path, """\
            unit_id,stage,group,treatment,outcome
            0,1,a,1,
        """)
        with pytest.raises(DataSchemaError, match="missing value"):
            ingest_csv(path)

    def test_duplicate_unit(self, tmp_path: Path):
        path = _write(tmp_path, """\
            unit_id,stage,group,treatment,outcome
            0,1,a,1,0
            0,1,b,0,1
        """)
        with pytest.raises(DataSchemaError, match="duplicate unit_id 0") as excinfo:
            ingest_csv(path)
        assert excinfo.value.row == 3

    def test_negative_stage(self, tmp_path: Path):
        path = _write(tmp_path, """\
            unit_id,stage,group,treatment,outcome
            0,-1,a,1,0
        """)
        with pytest.raises(DataSchemaError, match="stage must be"):
            ingest_csv(path)


class TestBinaryDataset:
    def test_reads(self, tmp_path: Path):
        path = _write(tmp_path, """\
            unit_id,group,treatment,outcome
            1,<=59,1,0
            2,>=80,0,1
        """)
        data = read_binary_dataset(path)
        assert list(data["group"]) == ["<=59", ">=80"]
        assert data["treatment"].dtype == np.int8
        assert data["outcome"].tolist() == [0.0, 1.0]

    def test_non_binary_outcome(self, tmp_path: Path):
        path = _write(tmp_path, """\
            unit_id,group,treatment,outcome
            1,<=59,1,2
        """)
        with pytest.raises(DataSchemaError, match="expected 0 or 1, got '2'") as excinfo:
            read_binary_dataset(path)
        assert excinfo.value.column == "outcome"
