"""Result artifacts: deterministic JSON and CSV written atomically."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


def to_jsonable(obj: Any) -> Any:
    """Plain JSON types; NaN and infinities become null, numpy scalars become Python ones."""
    if hasattr(obj, "to_dict") and not isinstance(obj, (pd.DataFrame, pd.Series)):
        return to_jsonable(obj.to_dict())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        return [to_jsonable(v) for v in items]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, pd.DataFrame):
        return [to_jsonable(r) for r in obj.to_dict(orient="records")]
    if isinstance(obj, np.generic):
        return to_jsonable(obj.item())
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if obj is pd.NA or obj is pd.NaT:
        return None
    return str(obj)


def dumps_json(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def atomic_write_text(path: str | Path, text: str) -> Path:
    """Write ``text`` to ``path`` via a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=path.parent, suffix=f"{path.suffix}.tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        os.unlink(tmp_path)
        raise
    logger.info("wrote %s", path)
    return path


def write_json(path: str | Path, obj: Any) -> Path:
    return atomic_write_text(path, dumps_json(obj))


def frame_to_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, lineterminator="\n", na_rep="")


def write_csv(path: str | Path, frame: pd.DataFrame) -> Path:
    return atomic_write_text(path, frame_to_csv(frame))


def pcurve_frame(taus, pvalues, ses, method: str) -> pd.DataFrame:
    """Long-format p-curve: tau, p, se, method."""
    return pd.DataFrame(
        {
            "tau": np.asarray(taus, dtype=float),
            "p": np.asarray(pvalues, dtype=float),
            "se": np.asarray(ses, dtype=float),
            "method": method,
        }
    )


def draws_frame(samples, unit_ids) -> pd.DataFrame:
    """One row per draw: source, selection path, log weight, then one ``z_<unit>`` column each."""
    z_cols = [f"z_{u}" for u in unit_ids]
    meta = pd.DataFrame(
        {
            "draw": np.arange(len(samples)),
            "source": [s.source for s in samples],
            "selection": ["/".join(s.s_value) for s in samples],
            "log_weight": [s.log_weight for s in samples],
        }
    )
    assignments = np.array([s.z for s in samples], dtype=np.int8).reshape(len(samples), -1)
    return pd.concat([meta, pd.DataFrame(assignments, columns=z_cols)], axis=1)


def write_report(out_dir: str | Path, report) -> tuple[Path, Path]:
    """``<name>.csv`` with the long-format rows and ``<name>.json`` with the summary."""
    out_dir = Path(out_dir)
    rows = report.rows.sort_index(axis=1) if not report.rows.empty else report.rows
    csv_path = write_csv(out_dir / f"{report.name}.csv", rows)
    json_path = write_json(out_dir / f"{report.name}.json", report)
    return csv_path, json_path
