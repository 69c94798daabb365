"""Training data for virtual measurement: records plus summary statistics.

A dataset pairs process-variable feature vectors with one measured
quality characteristic per record. Records are treated as independent
observations, which is what lets the likelihood factorize over them.

The per-feature and target summary statistics computed here travel with
every trained model and report: they document what data the model saw,
which is the minimum needed to judge later whether new parts still
resemble the training distribution.
"""

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DatasetError

__all__ = [
    "ColumnSummary",
    "DatasetSummary",
    "Dataset",
    "make_dataset",
    "ingest_dataset",
    "ingest_parts",
]


@dataclass(frozen=True)
class ColumnSummary:
    name: str
    mean: float
    sd: float
    minimum: float
    maximum: float


@dataclass(frozen=True)
class DatasetSummary:
    n_records: int
    features: tuple[ColumnSummary, ...]
    target: ColumnSummary

    def to_dict(self) -> dict:
        def col(c: ColumnSummary) -> dict:
            return {"name": c.name, "mean": c.mean, "sd": c.sd,
                    "min": c.minimum, "max": c.maximum}
        return {
            "n_records": self.n_records,
            "features": [col(c) for c in self.features],
            "target": col(self.target),
        }


@dataclass(frozen=True)
class Dataset:
    """Feature matrix x (D rows, F columns) and target vector y (D)."""

    x: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    target_name: str
    summary: DatasetSummary
    n_rejected_rows: int = 0

    @property
    def n_records(self) -> int:
        return len(self.y)

    @property
    def n_features(self) -> int:
        return self.x.shape[1]


def _column_summary(name: str, values: np.ndarray) -> ColumnSummary:
    # sample sd (ddof=1); a single record has no spread to estimate
    sd = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return ColumnSummary(name, float(np.mean(values)), sd,
                         float(np.min(values)), float(np.max(values)))


def make_dataset(
    x: np.ndarray,
    y: np.ndarray,
    feature_names: Sequence[str],
    target_name: str = "y",
    n_rejected_rows: int = 0,
) -> Dataset:
    """Assemble and validate a dataset from arrays."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape[0] != len(y):
        raise DatasetError(
            f"{x.shape[0]} feature rows but {len(y)} target values")
    if x.shape[1] < 1:
        raise DatasetError("at least one feature column is required")
    if x.shape[1] != len(feature_names):
        raise DatasetError(
            f"{x.shape[1]} feature columns but {len(feature_names)} names")
    if len(y) < 1:
        raise DatasetError("dataset has no records")
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise DatasetError("dataset contains non-finite values")
    names = tuple(feature_names)
    summary = DatasetSummary(
        len(y),
        tuple(_column_summary(n, x[:, i]) for i, n in enumerate(names)),
        _column_summary(target_name, y),
    )
    return Dataset(x, y, names, target_name, summary, n_rejected_rows)


def ingest_dataset(
    path: str,
    target: str,
    features: Optional[Sequence[str]] = None,
) -> Dataset:
    """Read a CSV file with a header row into a Dataset.

    ``features`` selects and orders the feature columns; by default all
    non-target columns are used in file order. Fully blank lines are
    skipped and counted as rejected rows; any other malformed content
    (wrong column count, non-numeric or non-finite cell) is an error
    naming the file line and column, since silently dropping records
    would bias the training data.
    """
    try:
        fh = open(path, newline="")
    except OSError as err:
        raise DatasetError(f"cannot read dataset {path!r}: {err}") from err
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        seen: set[str] = set()
        for h in header:
            if h in seen:
                raise DatasetError(f"{path}: duplicate header column {h!r}")
            seen.add(h)
        if target not in seen:
            raise DatasetError(
                f"{path}: target column {target!r} not found "
                f"(columns: {', '.join(header)})")
        names = list(features) if features is not None else \
            [h for h in header if h != target]
        missing = [n for n in names if n not in seen]
        if missing:
            raise DatasetError(
                f"{path}: feature column(s) not found: {', '.join(missing)}")
        if not names:
            raise DatasetError(f"{path}: no feature columns besides the target")
        col_index = {h: i for i, h in enumerate(header)}

        rows: list[list[float]] = []
        targets: list[float] = []
        rejected = 0
        # line 1 is the header, so data rows are numbered from 2
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                rejected += 1
                continue
            if len(row) != len(header):
                raise DatasetError(
                    f"{path}: row {lineno} has {len(row)} cells, "
                    f"expected {len(header)}")

            def cell(col: str) -> float:
                raw = row[col_index[col]].strip()
                try:
                    value = float(raw)
                except ValueError:
                    raise DatasetError(
                        f"{path}: row {lineno}, column {col!r}: "
                        f"non-numeric value {raw!r}") from None
                if not math.isfinite(value):
                    raise DatasetError(
                        f"{path}: row {lineno}, column {col!r}: "
                        f"non-finite value {raw!r}")
                return value

            rows.append([cell(n) for n in names])
            targets.append(cell(target))

    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return make_dataset(np.array(rows), np.array(targets), names, target,
                        n_rejected_rows=rejected)


def ingest_parts(path: str, feature_names: Sequence[str]) -> np.ndarray:
    """Read new-part feature rows from a CSV with a header.

    The file must contain every column in ``feature_names``; extra
    columns are ignored. Returns the features as an (n, F) array in the
    requested column order, with the same strictness about malformed
    cells as :func:`ingest_dataset`.
    """
    try:
        fh = open(path, newline="")
    except OSError as err:
        raise DatasetError(f"cannot read parts file {path!r}: {err}") from err
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        missing = [n for n in feature_names if n not in header]
        if missing:
            raise DatasetError(
                f"{path}: feature column(s) not found: {', '.join(missing)}")
        col_index = {h: i for i, h in enumerate(header)}

        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DatasetError(
                    f"{path}: row {lineno} has {len(row)} cells, "
                    f"expected {len(header)}")
            values = []
            for name in feature_names:
                raw = row[col_index[name]].strip()
                try:
                    value = float(raw)
                except ValueError:
                    raise DatasetError(
                        f"{path}: row {lineno}, column {name!r}: "
                        f"non-numeric value {raw!r}") from None
                if not math.isfinite(value):
                    raise DatasetError(
                        f"{path}: row {lineno}, column {name!r}: "
                        f"non-finite value {raw!r}")
                values.append(value)
            rows.append(values)

    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)
