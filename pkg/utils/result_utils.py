"""
Utility functions for writing and reading scenario results.
"""

import csv
import logging
import math
from collections import defaultdict
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field

from utils.errors import ResultIOError

logger = logging.getLogger(__name__)

CSV_HEADER = ["scenario", "x", "x_unit", "metric", "value", "trials", "stderr"]


class ResultRecord(BaseModel):
    """One aggregated metric at one sweep point."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    scenario: str
    x: float
    x_unit: str
    metric: str
    value: float
    trials: int = Field(ge=0)
    stderr: float = Field(ge=0)


def format_number(value):
    """Decimal text with 12 significant digits."""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if math.isnan(value):
        return "nan"
    return f"{value:.12g}"


def emit_csv(records, path):
    """
    Write records as CSV.

    Args:
        records (list[ResultRecord]): Records in output order.
        path (str or Path): Destination file.

    Raises:
        ResultIOError: If the file cannot be written.
    """
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for record in records:
                writer.writerow(
                    [
                        record.scenario,
                        format_number(record.x),
                        record.x_unit,
                        record.metric,
                        format_number(record.value),
                        record.trials,
                        format_number(record.stderr),
                    ]
                )
        logger.info(f"Wrote {len(records)} records to {path}")
    except OSError as e:
        logger.error(f"Failed to write results: {e}")
        raise ResultIOError(path, f"cannot write results ({e.strerror or e})") from e


def read_csv(path):
    """Parse a file written by ``emit_csv`` back into records."""
    path = Path(path)
    try:
        with open(path, encoding="utf-8", newline="") as f:
            rows = list(csv.DictReader(f))
    except OSError as e:
        raise ResultIOError(path, f"cannot read results ({e.strerror or e})") from e
    return [
        ResultRecord(
            scenario=row["scenario"],
            x=float(row["x"]),
            x_unit=row["x_unit"],
            metric=row["metric"],
            value=float(row["value"]),
            trials=int(row["trials"]),
            stderr=float(row["stderr"]),
        )
        for row in rows
    ]


def emit_gnuplot(records, path):
    """
    Write one data block per metric for gnuplot's ``index`` selector.

    Each block starts with a ``# metric`` comment and holds ``x value stderr``
    rows; blocks are separated by two blank lines.
    """
    path = Path(path)
    blocks = defaultdict(list)
    for record in records:
        blocks[record.metric].append(record)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for i, (metric, rows) in enumerate(blocks.items()):
                if i:
                    f.write("\n\n")
                f.write(f"# {metric} ({rows[0].x_unit})\n")
                for record in rows:
                    f.write(
                        f"{format_number(record.x)} {format_number(record.value)} "
                        f"{format_number(record.stderr)}\n"
                    )
        logger.info(f"Wrote gnuplot data for {len(blocks)} metrics to {path}")
    except OSError as e:
        logger.error(f"Failed to write gnuplot data: {e}")
        raise ResultIOError(path, f"cannot write gnuplot data ({e.strerror or e})") from e
