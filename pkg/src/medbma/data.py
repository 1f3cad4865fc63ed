"""Core domain types, dataset container and CSV ingestion/validation.

A subject record is the tuple (arm A, covariate X, response Y, time T,
event delta).  Datasets are immutable after construction and are stored
column-wise as numpy arrays for fast likelihood evaluation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

CSV_COLUMNS = ("arm", "covariate", "response", "time", "event")


class DataError(ValueError):
    """Malformed input file or record invariant violation."""


class SubjectRecord(NamedTuple):
    arm: int
    covariate: float
    response: int
    time: float
    event: int


class MissingRule(str, Enum):
    REJECT = "reject"
    GROUP_MEAN_IMPUTE = "group_mean_impute"


@dataclass(frozen=True)
class CovariatePolicy:
    """How to treat missing covariates; imputation is keyed by (arm, response)."""

    missing_rule: MissingRule = MissingRule.REJECT


def _check_binary(value: int, field: str, row: int) -> int:
    if value not in (0, 1):
        raise DataError(f"row {row}: field '{field}' must be 0 or 1, got {value}")
    return value


@dataclass(frozen=True)
class Dataset:
    """Immutable column-wise container of subject records."""

    arm: np.ndarray
    covariate: np.ndarray
    response: np.ndarray
    time: np.ndarray
    event: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in CSV_COLUMNS:
            a = np.asarray(getattr(self, name), dtype=float)
            if a.ndim != 1:
                raise DataError(f"column '{name}' must be one-dimensional")
            arrays[name] = a
        n = arrays["arm"].shape[0]
        if any(a.shape[0] != n for a in arrays.values()):
            raise DataError("columns have inconsistent lengths")
        if n < 2:
            raise DataError(f"dataset needs at least 2 records, got {n}")
        for name in ("arm", "response", "event"):
            bad = ~np.isin(arrays[name], (0.0, 1.0))
            if bad.any():
                raise DataError(
                    f"row {int(np.argmax(bad)) + 1}: field '{name}' must be 0 or 1"
                )
        if not np.isfinite(arrays["covariate"]).all():
            row = int(np.argmax(~np.isfinite(arrays["covariate"]))) + 1
            raise DataError(f"row {row}: field 'covariate' must be finite")
        bad_t = ~(np.isfinite(arrays["time"]) & (arrays["time"] >= 0))
        if bad_t.any():
            raise DataError(
                f"row {int(np.argmax(bad_t)) + 1}: field 'time' must be >= 0"
            )
        for name, a in arrays.items():
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n(self) -> int:
        return self.arm.shape[0]

    def records(self) -> list[SubjectRecord]:
        return [
            SubjectRecord(int(a), float(x), int(y), float(t), int(d))
            for a, x, y, t, d in zip(
                self.arm, self.covariate, self.response, self.time, self.event
            )
        ]

    @classmethod
    def from_records(cls, records: Sequence[SubjectRecord]) -> "Dataset":
        records = list(records)
        return cls(
            arm=np.array([r.arm for r in records], dtype=float),
            covariate=np.array([r.covariate for r in records], dtype=float),
            response=np.array([r.response for r in records], dtype=float),
            time=np.array([r.time for r in records], dtype=float),
            event=np.array([r.event for r in records], dtype=float),
        )

    def require_both_arms(self) -> None:
        if not ((self.arm == 0).any() and (self.arm == 1).any()):
            raise DataError("fitting requires at least one record in each arm")


@dataclass(frozen=True)
class DatasetSummary:
    n: int
    n_per_arm: tuple[int, int]
    response_rate_per_arm: tuple[float, float]
    events_per_arm: tuple[int, int]
    censoring_proportion: float
    median_time: float


def _parse_float(text: str, field: str, row: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"row {row}: field '{field}' is not a number: {text!r}")
    if not math.isfinite(value):
        raise DataError(f"row {row}: field '{field}' must be finite, got {text!r}")
    return value


def _parse_binary(text: str, field: str, row: int) -> int:
    if text not in ("0", "1"):
        raise DataError(f"row {row}: field '{field}' must be 0 or 1, got {text!r}")
    return int(text)


def load_dataset(path, policy: CovariatePolicy | None = None) -> Dataset:
    """Load and validate a subject-level CSV.

    The file must carry the header ``arm,covariate,response,time,event``.
    An empty covariate field is allowed only under the group-mean
    imputation policy; the imputed value is the mean of the non-missing
    covariates in the same (arm, response) cell.  Row order is preserved.
    """
    policy = policy or CovariatePolicy()
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file")
        if tuple(h.strip() for h in header) != CSV_COLUMNS:
            raise DataError(
                f"{path}: header must be {','.join(CSV_COLUMNS)}, got {','.join(header)}"
            )
        rows: list[list[float | None]] = []
        for lineno, fields in enumerate(reader, start=2):
            if not fields or (len(fields) == 1 and not fields[0].strip()):
                continue
            if len(fields) != 5:
                raise DataError(f"row {lineno}: expected 5 fields, got {len(fields)}")
            arm = _parse_binary(fields[0].strip(), "arm", lineno)
            cov_text = fields[1].strip()
            if cov_text == "":
                if policy.missing_rule is not MissingRule.GROUP_MEAN_IMPUTE:
                    raise DataError(f"row {lineno}: field 'covariate' is missing")
                cov: float | None = None
            else:
                cov = _parse_float(cov_text, "covariate", lineno)
            response = _parse_binary(fields[2].strip(), "response", lineno)
            time = _parse_float(fields[3].strip(), "time", lineno)
            if time < 0:
                raise DataError(f"row {lineno}: field 'time' must be >= 0, got {time}")
            event = _parse_binary(fields[4].strip(), "event", lineno)
            rows.append([arm, cov, response, time, event])
    if not rows:
        raise DataError(f"{path}: no data rows")

    missing = [i for i, r in enumerate(rows) if r[1] is None]
    if missing:
        donors: dict[tuple[int, int], list[float]] = {}
        for r in rows:
            if r[1] is not None:
                donors.setdefault((int(r[0]), int(r[2])), []).append(float(r[1]))
        for i in missing:
            key = (int(rows[i][0]), int(rows[i][2]))
            cell = donors.get(key)
            if not cell:
                raise DataError(
                    f"row {i + 2}: cannot impute covariate, no donors in "
                    f"(arm={key[0]}, response={key[1]}) cell"
                )
            rows[i][1] = float(np.mean(cell))

    cols = np.array(rows, dtype=float).T
    return Dataset(arm=cols[0], covariate=cols[1], response=cols[2],
                   time=cols[3], event=cols[4])


def fmt_float(x: float) -> str:
    """Canonical float formatting: 17 significant digits (exact round trip)."""
    return format(float(x), ".17g")


def write_dataset(dataset: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in dataset.records():
            writer.writerow(
                [r.arm, fmt_float(r.covariate), r.response, fmt_float(r.time), r.event]
            )


def summarize(dataset: Dataset) -> DatasetSummary:
    """Per-arm counts and rates plus overall censoring and median time."""
    arm = dataset.arm
    n0 = int((arm == 0).sum())
    n1 = int((arm == 1).sum())
    rr = tuple(
        float(dataset.response[arm == a].mean()) if (arm == a).any() else float("nan")
        for a in (0, 1)
    )
    ev = tuple(int(dataset.event[arm == a].sum()) for a in (0, 1))
    return DatasetSummary(
        n=dataset.n,
        n_per_arm=(n0, n1),
        response_rate_per_arm=rr,  # type: ignore[arg-type]
        events_per_arm=ev,  # type: ignore[arg-type]
        censoring_proportion=float((dataset.event == 0).mean()),
        median_time=float(np.median(dataset.time)),
    )
