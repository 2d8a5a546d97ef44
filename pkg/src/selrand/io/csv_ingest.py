"""CSV ingestion of trial records and binary-outcome datasets.

Trial files have the header ``unit_id,stage,group,treatment,outcome``.
Stage 0 rows are the never-recruited pool and leave treatment and outcome
blank. Any further columns are kept as unit covariates. Row numbers in
errors are file line numbers (the header is line 1).
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import pandas as pd

from selrand.errors import DataSchemaError
from selrand.io.results import atomic_write_text, frame_to_csv
from selrand.selection.conditioning import observed_selections
from selrand.trial.mechanisms import MAX_ARM_CODE
from selrand.trial.record import StageData, TrialRecord, validate_record
from selrand.trial.spec import TrialSpec

logger = logging.getLogger(__name__)

TRIAL_COLUMNS = ("unit_id", "stage", "group", "treatment", "outcome")
DATASET_COLUMNS = ("unit_id", "group", "treatment", "outcome")
FIRST_DATA_LINE = 2


def _read_raw(path: str | Path, required: tuple[str, ...]) -> pd.DataFrame:
    path = Path(path)
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError as exc:
        raise DataSchemaError(f"empty file {path}", row=1, column="header") from exc
    except UnicodeDecodeError as exc:
        raise DataSchemaError(f"{path} is not UTF-8: {exc.reason}") from exc
    except (OSError, pd.errors.ParserError) as exc:
        raise DataSchemaError(f"cannot read {path}: {exc}") from exc
    raw.columns = [c.strip() for c in raw.columns]
    for column in required:
        if column not in raw.columns:
            raise DataSchemaError("missing required column", row=1, column=column)
    return raw.apply(lambda col: col.str.strip())


def _numeric(raw: pd.DataFrame, column: str, *, integer: bool, blank: pd.Series) -> pd.Series:
    """Parse ``column``; cells flagged in ``blank`` must be empty, all others numeric."""
    text = raw[column]
    values = pd.to_numeric(text.where(text != ""), errors="coerce")
    bad = values.isna() & (text != "")
    if integer:
        bad |= values.notna() & (values != np.floor(values))
    bad |= (text == "") & ~blank
    if bad.any():
        pos = int(np.flatnonzero(bad.to_numpy())[0])
        cell = text.iloc[pos]
        kind = "integer" if integer else "number"
        problem = "missing value" if cell == "" else f"invalid {kind} {cell!r}"
        raise DataSchemaError(problem, row=pos + FIRST_DATA_LINE, column=column)
    return values


def _unique_ids(raw: pd.DataFrame, ids: pd.Series) -> None:
    dup = ids.duplicated()
    if dup.any():
        pos = int(np.flatnonzero(dup.to_numpy())[0])
        raise DataSchemaError(
            f"duplicate unit_id {int(ids.iloc[pos])}", row=pos + FIRST_DATA_LINE, column="unit_id"
        )
    empty = raw["group"] == ""
    if empty.any():
        pos = int(np.flatnonzero(empty.to_numpy())[0])
        raise DataSchemaError("missing value", row=pos + FIRST_DATA_LINE, column="group")


def ingest_csv(path: str | Path, num_stages: int | None = None) -> TrialRecord:
    """Read a trial CSV into a record without selections.

    ``num_stages`` pads trailing stages that recruited nobody; by default the
    highest stage present in the file sets the count.
    """
    raw = _read_raw(path, TRIAL_COLUMNS)
    nowhere = pd.Series(False, index=raw.index)
    ids = _numeric(raw, "unit_id", integer=True, blank=nowhere).astype(np.int64)
    stage = _numeric(raw, "stage", integer=True, blank=nowhere).astype(np.int64)
    negative = stage < 0
    if negative.any():
        pos = int(np.flatnonzero(negative.to_numpy())[0])
        raise DataSchemaError("stage must be >= 0", row=pos + FIRST_DATA_LINE, column="stage")
    pool = stage == 0
    treatment = _numeric(raw, "treatment", integer=True, blank=pool)
    out_of_range = ~pool & ((treatment < 0) | (treatment > MAX_ARM_CODE))
    if out_of_range.any():
        pos = int(np.flatnonzero(out_of_range.to_numpy())[0])
        cell = raw["treatment"].iloc[pos]
        raise DataSchemaError(
            f"arm code {cell} out of range", row=pos + FIRST_DATA_LINE, column="treatment"
        )
    outcome = _numeric(raw, "outcome", integer=False, blank=pool)
    _unique_ids(raw, ids)

    covariates = [c for c in raw.columns if c not in TRIAL_COLUMNS]
    units = raw[["group", *covariates]].copy()
    units.index = pd.Index(ids.to_numpy(), name="unit_id")

    count = int(stage.max()) if len(stage) else 0
    if num_stages is not None:
        count = max(count, num_stages)
    stages = []
    for k in range(1, count + 1):
        mask = (stage == k).to_numpy()
        stages.append(
            StageData(
                ids.to_numpy()[mask],
                treatment.to_numpy()[mask].astype(np.int64),
                outcome.to_numpy(dtype=float)[mask],
            )
        )
    logger.info(
        "read %d units (%d in pool) over %d stages from %s",
        len(units),
        int(pool.sum()),
        count,
        path,
    )
    return TrialRecord(units=units, stages=tuple(stages))


def load_record(path: str | Path, spec: TrialSpec) -> TrialRecord:
    """Ingest, validate against ``spec`` and attach the observed selection values."""
    rec = ingest_csv(path, num_stages=spec.num_stages)
    report = validate_record(spec, rec)
    if not report.ok:
        raise DataSchemaError(f"record does not fit the trial spec: {report.issues[0]}")
    return rec.with_selections(observed_selections(spec, rec))


def trial_frame(rec: TrialRecord) -> pd.DataFrame:
    """Rows in stage order followed by the pool, covariates after the fixed columns."""
    units = rec.units
    covariates = [c for c in units.columns if c != "group"]
    recruited = pd.DataFrame(
        {
            "unit_id": rec.unit_ids.astype(np.int64),
            "stage": rec.stage_of + 1,
            "group": rec.groups,
            "treatment": pd.array(rec.z.astype(np.int64), dtype="Int64"),
            "outcome": rec.y,
        }
    )
    pool_ids = units.index.difference(pd.Index(rec.unit_ids), sort=False)
    pool = pd.DataFrame(
        {
            "unit_id": pool_ids.to_numpy(dtype=np.int64),
            "stage": 0,
            "group": units.loc[pool_ids, "group"].astype(str).to_numpy(),
            "treatment": pd.array([pd.NA] * len(pool_ids), dtype="Int64"),
            "outcome": np.full(len(pool_ids), np.nan),
        }
    )
    frame = pd.concat([recruited, pool], ignore_index=True)
    for c in covariates:
        frame[c] = units.loc[frame["unit_id"], c].to_numpy()
    return frame


def write_trial_csv(rec: TrialRecord, path: str | Path) -> Path:
    return atomic_write_text(path, frame_to_csv(trial_frame(rec)))


def read_binary_dataset(path: str | Path) -> pd.DataFrame:
    """Unit-level binary-outcome trial: unit_id, group, treatment in {0, 1}, outcome in {0, 1}."""
    raw = _read_raw(path, DATASET_COLUMNS)
    nowhere = pd.Series(False, index=raw.index)
    ids = _numeric(raw, "unit_id", integer=True, blank=nowhere).astype(np.int64)
    treatment = _numeric(raw, "treatment", integer=True, blank=nowhere)
    outcome = _numeric(raw, "outcome", integer=False, blank=nowhere)
    _unique_ids(raw, ids)
    for column, values in (("treatment", treatment), ("outcome", outcome)):
        bad = ~values.isin([0, 1])
        if bad.any():
            pos = int(np.flatnonzero(bad.to_numpy())[0])
            raise DataSchemaError(
                f"expected 0 or 1, got {raw[column].iloc[pos]!r}",
                row=pos + FIRST_DATA_LINE,
                column=column,
            )
    data = pd.DataFrame(
        {
            "unit_id": ids.to_numpy(),
            "group": raw["group"].to_numpy(),
            "treatment": treatment.to_numpy().astype(np.int8),
            "outcome": outcome.to_numpy(dtype=float),
        }
    )
    logger.info("read %d units in %d groups from %s", len(data), data["group"].nunique(), path)
    return data
