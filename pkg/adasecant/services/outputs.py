"""Run artifacts: metric CSVs, plot series, config snapshots and grid tables.

Floats are written with 17 significant digits so every value parses back to the
identical double.
"""

import csv
import math
from dataclasses import astuple, fields
from pathlib import Path
from typing import Any, List, Optional, Sequence, Union

import yaml

from adasecant.errors import OutputError
from adasecant.services.harness import GridResult, MetricRow, RunRecord

CSV_HEADER = [f.name for f in fields(MetricRow)]
PathLike = Union[str, Path]


def format_float(value: float) -> str:
    return format(value, ".17g")


def _format_cell(value: Any) -> str:
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def _prepare(path: PathLike) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(f"Failed to create directory {path.parent}: {str(e)}", str(path)) from e
    return path


def write_csv(record: RunRecord, path: PathLike) -> Path:
    path = _prepare(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for row in record.rows:
                writer.writerow([_format_cell(value) for value in astuple(row)])
    except OSError as e:
        raise OutputError(f"Failed to write CSV {path}: {str(e)}", str(path)) from e
    return path


def read_csv(path: PathLike) -> List[MetricRow]:
    path = Path(path)
    try:
        with path.open("r", newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header != CSV_HEADER:
                raise OutputError(f"{path} does not start with the metrics header", str(path))
            return [
                MetricRow(
                    step=int(line[0]),
                    epoch=float(line[1]),
                    train_loss=float(line[2]),
                    grad_norm=float(line[3]),
                    mean_applied_rate=float(line[4]),
                    wallclock_ms=float(line[5]),
                )
                for line in reader
            ]
    except (OSError, ValueError, IndexError) as e:
        raise OutputError(f"Failed to read CSV {path}: {str(e)}", str(path)) from e


def emit_plot_data(
    records: Sequence[RunRecord],
    path: PathLike,
    labels: Optional[Sequence[str]] = None,
    column: str = "train_loss",
) -> Path:
    """One whitespace-separated column per record, aligned by step.

    The first line is a ``#`` header naming the columns; shorter runs are padded
    with ``nan`` so every line has the same width.
    """
    if column not in CSV_HEADER:
        raise OutputError(f"Unknown metric column {column!r}", str(path))
    labels = list(labels) if labels is not None else [record.optimizer for record in records]
    if len(labels) != len(records):
        raise OutputError(f"{len(labels)} labels for {len(records)} records", str(path))
    series = [{row.step: getattr(row, column) for row in record.rows} for record in records]
    steps = sorted(set().union(*series)) if series else []
    width = max([len("step"), *(len(label) for label in labels), 24])

    path = _prepare(path)
    try:
        with path.open("w", encoding="utf-8") as f:
            f.write("# " + " ".join(name.rjust(width) for name in ["step", *labels]) + "\n")
            for step in steps:
                values = [format_float(s.get(step, math.nan)) for s in series]
                f.write("  " + " ".join(v.rjust(width) for v in [str(step), *values]) + "\n")
    except OSError as e:
        raise OutputError(f"Failed to write plot data {path}: {str(e)}", str(path)) from e
    return path


def write_snapshot(record: RunRecord, path: PathLike) -> Path:
    path = _prepare(path)
    snapshot = {**record.snapshot(), "status": record.status, "message": record.message}
    try:
        with path.open("w", encoding="utf-8") as f:
            yaml.safe_dump(snapshot, f, sort_keys=False)
    except (OSError, yaml.YAMLError) as e:
        raise OutputError(f"Failed to write snapshot {path}: {str(e)}", str(path)) from e
    return path


def write_grid_table(result: GridResult, path: PathLike) -> Path:
    table = result.table
    columns: List[str] = []
    for row in table:
        for key in row:
            if key not in columns:
                columns.append(key)
    path = _prepare(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(columns)
            for row in table:
                writer.writerow([_format_cell(row.get(key, "")) for key in columns])
    except OSError as e:
        raise OutputError(f"Failed to write grid table {path}: {str(e)}", str(path)) from e
    return path
