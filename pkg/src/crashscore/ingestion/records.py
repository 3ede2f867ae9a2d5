"""Crash-record CSV loading with dedup, row-error collection and median imputation."""
from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from ..errors import LoadError
from ..types import Label

logger = logging.getLogger(__name__)

ID_COLUMN = "CASENUM"
REQUIRED_COLUMNS = (
    "HOUR",
    "MONTH",
    "DAY_WEEK",
    "WEATHER",
    "LGT_COND",
    "TYP_INT",
    "REL_ROAD",
    "pedestrian_count",
    "cyclist_count",
    "ALCOHOL",
    "VE_TOTAL",
    "REGION",
    "URBANICITY",
)


@dataclass(frozen=True)
class CrashRecord:
    casenum: str
    raw: Mapping[str, float]
    label: Label = Label.CRASH

    def get(self, column: str, default: float | None = None) -> float | None:
        return self.raw.get(column, default)

    def with_fields(self, suffix: str = "", label: Label | None = None, **updates: float) -> "CrashRecord":
        raw = dict(self.raw)
        raw.update(updates)
        return CrashRecord(self.casenum + suffix, raw, self.label if label is None else label)


@dataclass
class IngestionReport:
    rows_read: int = 0
    records: int = 0
    duplicates_dropped: int = 0
    row_errors: list[dict[str, Any]] = field(default_factory=list)
    unknown_codes: Counter = field(default_factory=Counter)
    imputed: Counter = field(default_factory=Counter)
    defaulted_columns: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "rows_read": self.rows_read,
            "records": self.records,
            "duplicates_dropped": self.duplicates_dropped,
            "row_errors": list(self.row_errors),
            "unknown_codes": dict(sorted(self.unknown_codes.items())),
            "imputed": dict(sorted(self.imputed.items())),
            "defaulted_columns": sorted(self.defaulted_columns),
        }


def load_crash_records(
    path: str | Path,
    report: IngestionReport | None = None,
    required: tuple[str, ...] = REQUIRED_COLUMNS,
) -> list[CrashRecord]:
    """Read a CRSS-style crash CSV.

    Rows are deduplicated on CASENUM (first occurrence wins). A row with an
    unparseable numeric cell is dropped and noted in ``report.row_errors``;
    empty cells are imputed with the column median of the loaded set.
    """
    report = report if report is not None else IngestionReport()
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise LoadError(f"{path}: empty file, header row expected") from None
        for col in (ID_COLUMN, *required):
            if col not in header:
                raise LoadError(f"{path}: missing required column {col!r}")
        id_pos = header.index(ID_COLUMN)
        value_cols = [(i, h) for i, h in enumerate(header) if i != id_pos]

        seen: set[str] = set()
        parsed: list[tuple[str, dict[str, float]]] = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            report.rows_read += 1
            if len(row) != len(header):
                report.row_errors.append({"line": line_no, "error": f"expected {len(header)} cells, got {len(row)}"})
                continue
            casenum = row[id_pos].strip()
            if casenum in seen:
                report.duplicates_dropped += 1
                continue
            values: dict[str, float] = {}
            bad = None
            for i, col in value_cols:
                cell = row[i].strip()
                if cell == "":
                    values[col] = math.nan
                    continue
                try:
                    values[col] = float(cell)
                except ValueError:
                    bad = {"line": line_no, "column": col, "value": cell, "error": "unparseable number"}
                    break
            if bad is not None:
                report.row_errors.append(bad)
                continue
            seen.add(casenum)
            parsed.append((casenum, values))

    for _, col in value_cols:
        column = np.array([vals[col] for _, vals in parsed], dtype=np.float64)
        missing = np.isnan(column)
        if not missing.any():
            continue
        present = column[~missing]
        fill = float(np.median(present)) if present.size else math.nan
        report.imputed[col] += int(missing.sum())
        for (_, vals), m in zip(parsed, missing):
            if m:
                vals[col] = fill
    if report.imputed:
        logger.info("imputed missing cells: %s", dict(report.imputed))

    records = [CrashRecord(casenum, vals) for casenum, vals in parsed]
    report.records = len(records)
    return records


def write_crash_records(records: list[CrashRecord], path: str | Path, columns: list[str] | None = None) -> None:
    """Write records back to the CSV layout ``load_crash_records`` reads."""
    if columns is None:
        columns = sorted({c for r in records for c in r.raw})
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([ID_COLUMN, *columns])
        for r in records:
            w.writerow([r.casenum, *(_fmt(r.raw.get(c)) for c in columns)])


def _fmt(v: float | None) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    fv = float(v)
    return str(int(fv)) if fv.is_integer() else repr(fv)
