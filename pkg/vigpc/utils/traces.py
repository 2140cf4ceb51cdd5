"""
Training traces: one record per evaluated outer iteration (or epoch),
written as CSV or JSON for plotting accuracy against time.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from pathlib import Path
from typing import Dict, Iterator, List, Literal, Optional, Union

import simplejson

from vigpc.utils import utils

TraceFormat = Literal["csv", "json"]

TRACE_COLUMNS = ("wall_seconds", "outer_iter", "elbo", "accuracy")


@dataclasses.dataclass(frozen=True)
class TraceRecord:
    wall_seconds: float
    outer_iter: int
    elbo: float
    accuracy: Optional[float]
    theta: Dict[str, float]


class TrainingTrace:
    """
    Ordered trace records. wall_seconds must not decrease.
    """

    def __init__(self, records: Optional[List[TraceRecord]] = None):
        self.records: List[TraceRecord] = []
        for record in records or []:
            self.append(record)

    def append(self, record: TraceRecord) -> None:
        last = self.records[-1] if self.records else None
        if last is not None and record.wall_seconds < last.wall_seconds:
            utils.log_and_raise_error(
                "Trace records must have non-decreasing wall_seconds.",
                ValueError,
            )
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)

    @property
    def last(self) -> Optional[TraceRecord]:
        return self.records[-1] if self.records else None


def get_trace_extension(fmt: str) -> str:
    if fmt not in ("csv", "json"):
        utils.log_and_raise_error(
            f"Unknown trace format '{fmt}', use 'csv' or 'json'.",
            ValueError,
        )
    return fmt


def write_trace(
    trace: TrainingTrace, path: Union[str, Path], fmt: str = "csv"
) -> Path:
    """
    Write the trace. CSV has the header
    wall_seconds,outer_iter,elbo,accuracy with numbers in repr form
    (a missing accuracy is written as nan); JSON is a list of objects
    with the same keys plus theta.
    """
    get_trace_extension(fmt)
    path = Path(path)

    if fmt == "csv":
        with open(path, "w", newline="") as file:
            writer = csv.writer(file, lineterminator="\n")
            writer.writerow(TRACE_COLUMNS)
            for record in trace:
                writer.writerow(
                    [
                        utils.format_float(record.wall_seconds),
                        str(record.outer_iter),
                        utils.format_float(record.elbo),
                        utils.format_float(
                            float("nan")
                            if record.accuracy is None
                            else record.accuracy
                        ),
                    ]
                )
    else:
        with open(path, "w") as file:
            simplejson.dump(
                [dataclasses.asdict(record) for record in trace],
                file,
                indent=2,
                ignore_nan=True,
            )

    utils.log(f"Wrote trace with {len(trace)} records to {path}.")
    return path


def read_trace(path: Union[str, Path]) -> TrainingTrace:
    """
    Read a trace written by write_trace; the format follows the file
    extension. CSV traces carry no theta.
    """
    path = Path(path)

    if path.suffix == ".json":
        with open(path, "r") as file:
            rows = simplejson.load(file)
        return TrainingTrace(
            [
                TraceRecord(
                    wall_seconds=row["wall_seconds"],
                    outer_iter=row["outer_iter"],
                    elbo=row["elbo"],
                    accuracy=row["accuracy"],
                    theta=row.get("theta", {}),
                )
                for row in rows
            ]
        )

    with open(path, "r", newline="") as file:
        reader = csv.DictReader(file)
        records = []
        for row in reader:
            accuracy = float(row["accuracy"])
            records.append(
                TraceRecord(
                    wall_seconds=float(row["wall_seconds"]),
                    outer_iter=int(row["outer_iter"]),
                    elbo=float(row["elbo"]),
                    accuracy=None if math.isnan(accuracy) else accuracy,
                    theta={},
                )
            )
    return TrainingTrace(records)
