"""
Output artifacts: series CSV with key=value sidecar, two-column CSVs, JSON and tables.

Every file is written to a temporary file in the target directory and moved
into place with os.replace, so readers never see a partial artifact.
"""

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from app.models.data_models import LMSeries, TableResult
from app.services.exceptions import DataIngestionError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
FLOAT_FORMAT = "%.17g"


def _atomic_write(path: PathLike, write: Callable[[Any], None]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            write(handle)
        os.replace(tmp_name, target)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.debug(f"Wrote {target}")
    return target


def write_text(path: PathLike, text: str) -> Path:
    return _atomic_write(path, lambda handle: handle.write(text))


def write_frame(path: PathLike, frame: pd.DataFrame) -> Path:
    """CSV with full float precision and no index."""
    return _atomic_write(path, lambda handle: frame.to_csv(handle, index=False, float_format=FLOAT_FORMAT, lineterminator="\n"))


def to_json(payload: Any) -> str:
    """Deterministic JSON: sorted keys, models dumped in JSON mode."""
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    return json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def write_json(path: PathLike, payload: Any) -> Path:
    return write_text(path, to_json(payload))


def sidecar_path(path: PathLike) -> Path:
    target = Path(path)
    return target.with_name(target.name + ".meta")


def write_series(path: PathLike, series: LMSeries) -> Path:
    """
    Single-column CSV with header `value` plus a key=value sidecar (kind, h, H, seed, n).
    """
    target = write_frame(path, pd.DataFrame({"value": series.values}))
    params = series.params
    meta = {
        "kind": series.kind,
        "h": "" if params is None or params.h is None else repr(params.h),
        "H": "" if params is None or params.H is None else repr(params.H),
        "seed": "" if series.seed is None else str(series.seed),
        "n": str(series.n),
    }
    write_text(sidecar_path(target), "".join(f"{key}={value}\n" for key, value in meta.items()))
    return target


def read_series(path: PathLike) -> LMSeries:
    """Read a series CSV and, when present, its sidecar."""
    target = Path(path)
    try:
        frame = pd.read_csv(target, dtype={"value": float}, float_precision="round_trip")
    except (OSError, ValueError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataIngestionError(f"cannot read series {target}: {e}") from e
    if "value" not in frame.columns:
        raise DataIngestionError(f"{target} has no `value` column")

    meta: Dict[str, str] = {}
    sidecar = sidecar_path(target)
    if sidecar.exists():
        for line in sidecar.read_text(encoding="utf-8").splitlines():
            key, _, value = line.partition("=")
            meta[key.strip()] = value.strip()

    params = None
    if meta.get("h") or meta.get("H"):
        params = {"h": float(meta["h"]) if meta.get("h") else None, "H": float(meta["H"]) if meta.get("H") else None}
    return LMSeries(
        values=frame["value"].to_numpy(dtype=float),
        kind=meta.get("kind") or "ingested",
        params=params,
        seed=int(meta["seed"]) if meta.get("seed") else None,
    )


def table_frame(table: TableResult) -> pd.DataFrame:
    """
    Table layout: one row per H, one column per h for RMSE tables;
    one row per (H, h) with quartiles and bandwidth for ASE tables.
    """
    rows = [cell.model_dump() for cell in table.cells]
    frame = pd.DataFrame(rows)
    if table.statistic == "rmse":
        wide = frame.pivot(index="H", columns="h", values="rmse")
        wide.columns = [f"h={h:g}" for h in wide.columns]
        return wide.reset_index()
    return frame[["H", "h", "reps", "q1", "median", "mean", "q3", "bandwidth"]]


def write_table(out_dir: PathLike, table: TableResult) -> Dict[str, Path]:
    """Write <table_id>.csv and <table_id>.provenance.json."""
    directory = Path(out_dir)
    provenance = {
        "table_id": table.table_id,
        "statistic": table.statistic,
        "n": table.n,
        "reps": table.reps,
        "master_seed": table.master_seed,
        "workers": table.workers,
        "runtime_seconds": table.runtime_seconds,
        "protocol": table.protocol,
    }
    paths = {
        "table": write_frame(directory / f"{table.table_id}.csv", table_frame(table)),
        "provenance": write_json(directory / f"{table.table_id}.provenance.json", provenance),
    }
    logger.info(f"Table {table.table_id} written to {directory}")
    return paths


def emit(payload: Any, out: Optional[PathLike], name: str, fmt: str = "json", frame: Optional[pd.DataFrame] = None) -> Optional[Path]:
    """
    Write a command result as <out>/<name>.<fmt>.

    CSV uses the supplied frame; JSON uses the payload. With no output
    directory nothing is written and None is returned.
    """
    if out is None:
        return None
    directory = Path(out)
    if fmt == "csv" and frame is not None:
        return write_frame(directory / f"{name}.csv", frame)
    return write_json(directory / f"{name}.json", payload)
