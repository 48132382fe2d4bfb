"""CSV ingestion for real-data analyses and writers for results/datasets.

Input files are RFC-4180 CSV with a header row, UTF-8, '.' decimal
separator.  Rows with a missing value in any used column are dropped (and
counted); a non-numeric cell in a kept row is an error naming the row and
column.  Intercept columns are prepended to both x and z, matching what the
model expects.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError, UsageError
from .model import Dataset

_MISSING_TOKENS = {"", "na", "nan", "n/a"}

RESULT_COLUMNS = ("setting", "n", "d", "method", "level", "frequency",
                  "stderr", "reps", "seed")


@dataclass(frozen=True)
class CsvSchema:
    """Which columns play which role; a column may serve both x and z."""

    y_col: str
    d_col: str
    x_cols: tuple[str, ...] = ()
    z_cols: tuple[str, ...] = ()
    standardize_z: bool = False

    def used_columns(self) -> tuple[str, ...]:
        seen = {}
        for name in (self.y_col, self.d_col, *self.x_cols, *self.z_cols):
            seen.setdefault(name, None)
        return tuple(seen)


@dataclass(frozen=True, eq=False)
class IngestResult:
    """Parsed dataset plus how many data rows were read and dropped."""

    dataset: Dataset
    rows_read: int
    rows_dropped: int


def standardize_columns(body: np.ndarray, names) -> np.ndarray:
    """Center each column to mean 0 and scale to sample sd 1 (divisor n-1).

    A column with (numerically) no variance cannot be standardized; that is
    an error naming the column rather than a silent division.
    """
    body = np.asarray(body, dtype=np.float64)
    out = np.empty_like(body)
    for j, name in enumerate(names):
        col = body[:, j]
        mean = float(np.mean(col))
        sd = float(np.std(col, ddof=1))
        if sd <= 1e-12 * max(1.0, abs(mean)):
            raise DataError(
                f"column {name!r} has zero variance and cannot be standardized"
            )
        out[:, j] = (col - mean) / sd
    return out


def _is_missing(token: str) -> bool:
    return token.strip().lower() in _MISSING_TOKENS


def ingest_csv(path, schema: CsvSchema) -> IngestResult:
    """Read a CSV into a Dataset per the schema.

    Raises DataError for structural problems: absent columns, ragged rows,
    non-numeric cells (with row and column named), too few usable rows, or
    parsed data that violates the model's requirements (e.g. a constant
    treatment column).
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty; expected a header row") from None
        index = {name.strip(): j for j, name in enumerate(header)}
        missing_cols = [c for c in schema.used_columns() if c not in index]
        if missing_cols:
            raise DataError(
                f"column(s) {', '.join(repr(c) for c in missing_cols)} not found "
                f"in {path}; header has {', '.join(map(repr, index))}"
            )
        used = schema.used_columns()
        used_idx = [index[c] for c in used]

        rows = []
        rows_read = 0
        rows_dropped = 0
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            rows_read += 1
            if len(record) != len(header):
                raise DataError(
                    f"row {lineno}: has {len(record)} fields, expected {len(header)}"
                )
            cells = [record[j] for j in used_idx]
            if any(_is_missing(c) for c in cells):
                rows_dropped += 1
                continue
            values = []
            for name, token in zip(used, cells):
                try:
                    values.append(float(token))
                except ValueError:
                    raise DataError(
                        f"row {lineno}, column {name!r}: cannot parse {token!r} "
                        "as a number"
                    ) from None
            rows.append(values)

    if len(rows) < 2:
        raise DataError(
            f"{path}: only {len(rows)} usable rows after dropping "
            f"{rows_dropped}; need at least 2"
        )
    table = np.asarray(rows, dtype=np.float64)
    col = {name: table[:, k] for k, name in enumerate(used)}
    n = table.shape[0]

    x_body = np.column_stack([col[c] for c in schema.x_cols]) if schema.x_cols \
        else np.empty((n, 0))
    z_body = np.column_stack([col[c] for c in schema.z_cols]) if schema.z_cols \
        else np.empty((n, 0))
    if schema.standardize_z and schema.z_cols:
        z_body = standardize_columns(z_body, schema.z_cols)

    ones = np.ones(n)
    try:
        dataset = Dataset(
            y=col[schema.y_col],
            x=np.column_stack((ones, x_body)),
            d=col[schema.d_col],
            z=np.column_stack((ones, z_body)),
        )
    except (ValueError, DataError) as exc:
        raise DataError(f"{path}: parsed data is unusable: {exc}") from exc
    return IngestResult(dataset=dataset, rows_read=rows_read,
                        rows_dropped=rows_dropped)


def write_dataset_csv(path, ds: Dataset) -> None:
    """Write a dataset without its intercept columns: y, d, x*, z*."""
    header = (
        ["y", "d"]
        + [f"x{j}" for j in range(1, ds.q)]
        + [f"z{j}" for j in range(1, ds.dz)]
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(ds.n):
            row = [ds.y[i], ds.d[i], *ds.x[i, 1:], *ds.z[i, 1:]]
            writer.writerow([repr(float(v)) for v in row])


def result_rows(result) -> list[tuple]:
    """Flatten an ExperimentResult into output table rows, full precision."""
    seed = result.spec.seed
    return [
        (c.setting, c.n, c.d, c.method, c.level,
         c.rejection_frequency, c.mc_stderr, c.reps, seed)
        for c in result.cells
    ]


def _fmt(value) -> str:
    # repr keeps full float precision so result files diff cleanly.
    return repr(value) if isinstance(value, float) else str(value)


def write_result_csv(path, result) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for row in result_rows(result):
            writer.writerow([_fmt(v) for v in row])


def format_record(pairs) -> str:
    """One flat machine-readable line: space-separated key=value pairs."""
    parts = []
    for key, value in pairs:
        if isinstance(value, float):
            value = repr(value)
        parts.append(f"{key}={value}")
    return " ".join(parts)


def cell_records(result) -> list[str]:
    return [
        format_record(zip(RESULT_COLUMNS, row)) for row in result_rows(result)
    ]


def parse_config(path) -> dict[str, str]:
    """Flat key = value config file: blank lines and #-comments ignored."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot open config {path}: {exc}") from exc
    out: dict[str, str] = {}
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}:{lineno}: expected key = value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key in out:
            raise UsageError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out
