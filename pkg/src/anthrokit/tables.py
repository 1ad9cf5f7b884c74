"""Delimited-file schemas shared by the CLI, fixtures, and mappers.

The subject table is the central interchange format: one row per subject with
id, gender, optional measurements (h_m, w_kg, c_m, w_m, hip_m = height,
weight, chest, waist, hip), mean attribute columns ``attr_<name>``, and shape
coefficient columns ``beta_<i>``. Missing numeric cells are empty strings.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

MEASUREMENT_COLUMNS = ("h_m", "w_kg", "c_m", "w_m", "hip_m")
MEASURE_OUTPUT_COLUMNS = ("height_m", "weight_kg", "chest_m", "waist_m", "hip_m")


def fmt_float(x: float) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.12g}"


def write_csv(path: str | Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


@dataclass
class SubjectTable:
    """Column-oriented view of a subject CSV."""

    ids: list[str]
    genders: list[str]
    measurements: np.ndarray | None  # (N, 5) with NaN for missing
    attribute_names: list[str]
    attributes: np.ndarray | None    # (N, A)
    betas: np.ndarray | None         # (N, B)

    def __len__(self) -> int:
        return len(self.ids)

    def gender_rows(self, gender: str) -> np.ndarray:
        return np.array([g == gender for g in self.genders], dtype=bool)


def write_subject_table(table: SubjectTable, path: str | Path) -> None:
    header = ["subject_id", "gender", *MEASUREMENT_COLUMNS]
    header += [f"attr_{name}" for name in table.attribute_names]
    num_betas = table.betas.shape[1] if table.betas is not None else 0
    header += [f"beta_{i}" for i in range(num_betas)]
    rows = []
    for i in range(len(table)):
        row = [table.ids[i], table.genders[i]]
        if table.measurements is not None:
            row += [fmt_float(v) for v in table.measurements[i]]
        else:
            row += [""] * 5
        if table.attributes is not None:
            row += [fmt_float(v) for v in table.attributes[i]]
        if table.betas is not None:
            row += [fmt_float(v) for v in table.betas[i]]
        rows.append(row)
    write_csv(path, header, rows)


def read_subject_table(path: str | Path) -> SubjectTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("empty subject table", path=str(path)) from None
        raw = [row for row in reader if row]

    def col(name: str) -> int | None:
        return header.index(name) if name in header else None

    id_col, gender_col = col("subject_id"), col("gender")
    if id_col is None:
        raise FormatError("subject table missing 'subject_id' column", path=str(path))
    meas_cols = [col(c) for c in MEASUREMENT_COLUMNS]
    attr_cols = [(h[5:], i) for i, h in enumerate(header) if h.startswith("attr_")]
    beta_cols = [(int(h[5:]), i) for i, h in enumerate(header) if h.startswith("beta_")]
    beta_cols.sort()

    def parse(cell: str) -> float:
        return float(cell) if cell not in ("", None) else math.nan

    ids, genders = [], []
    meas, attrs, betas = [], [], []
    for row in raw:
        ids.append(row[id_col])
        genders.append(row[gender_col] if gender_col is not None else "neutral")
        meas.append([parse(row[c]) if c is not None else math.nan for c in meas_cols])
        attrs.append([parse(row[i]) for _, i in attr_cols])
        betas.append([parse(row[i]) for _, i in beta_cols])

    n = len(ids)
    return SubjectTable(
        ids=ids,
        genders=genders,
        measurements=(np.array(meas).reshape(n, 5)
                      if any(c is not None for c in meas_cols) else None),
        attribute_names=[name for name, _ in attr_cols],
        attributes=np.array(attrs).reshape(n, len(attr_cols)) if attr_cols else None,
        betas=np.array(betas).reshape(n, len(beta_cols)) if beta_cols else None,
    )


def write_betas_csv(path: str | Path, ids: list[str], betas: np.ndarray) -> None:
    header = ["subject_id"] + [f"beta_{i}" for i in range(betas.shape[1])]
    write_csv(path, header, ([ids[i], *(fmt_float(v) for v in betas[i])]
                             for i in range(len(ids))))


def read_betas_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    table = read_subject_table(path)
    if table.betas is None:
        raise FormatError("CSV has no beta_* columns", path=str(path))
    return table.ids, table.betas


def write_measurements_csv(path: str | Path, ids: list[str], rows: np.ndarray) -> None:
    """Measurement output CSV: height_m, weight_kg, chest_m, waist_m, hip_m."""
    header = ["subject_id", *MEASURE_OUTPUT_COLUMNS]
    write_csv(path, header, ([ids[i], *(fmt_float(v) for v in rows[i])]
                             for i in range(len(ids))))


def read_measurements_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    try:
        cols = [header.index(c) for c in MEASURE_OUTPUT_COLUMNS]
        id_col = header.index("subject_id")
    except ValueError as exc:
        raise FormatError(f"measurement CSV missing column: {exc}", path=str(path)) from None
    ids = [r[id_col] for r in rows]
    data = np.array([[float(r[c]) for c in cols] for r in rows])
    return ids, data
