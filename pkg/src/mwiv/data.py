"""Dataset container and CSV input/output.

A dataset is an outcome vector y, an endogenous vector x, and instruments
given either as a dense N x K matrix or as integer judge labels (one
instrument per judge, indicator form). CSV layout: header row with columns
``y,x`` plus either ``z1..zK`` or ``judge``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError

__all__ = ["Dataset", "read_dataset_csv", "write_dataset_csv"]


@dataclass(frozen=True)
class Dataset:
    """Immutable (y, x, instruments) triple.

    ``instruments`` is a 2-D float array (dense form) or a 1-D integer
    array of judge labels. Labels may be arbitrary integers; they are
    canonicalized to 0..K-1 by the projection builder.
    """

    y: np.ndarray
    x: np.ndarray
    instruments: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        inst = np.asarray(self.instruments)
        if inst.ndim == 1:
            if not np.issubdtype(inst.dtype, np.integer):
                as_int = inst.astype(np.int64)
                if not np.array_equal(as_int, inst):
                    raise DataError("dimension error: judge labels must be integers")
                inst = as_int
        elif inst.ndim == 2:
            inst = inst.astype(float)
        else:
            raise DataError("dimension error: instruments must be 1-D labels or an N x K matrix")
        n = y.shape[0]
        if y.ndim != 1 or x.ndim != 1 or x.shape[0] != n or inst.shape[0] != n:
            raise DataError("dimension error: y, x, instruments must share length N")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise DataError("y, x contain no non-finite values")
        k = self.k_instruments(inst)
        if not n > k >= 1:
            raise DataError(f"need N > K >= 1, got N={n}, K={k}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "instruments", inst)

    @staticmethod
    def k_instruments(inst: np.ndarray) -> int:
        if inst.ndim == 1:
            return int(np.unique(inst).size)
        return int(inst.shape[1])

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def k(self) -> int:
        return self.k_instruments(self.instruments)

    @property
    def is_judge(self) -> bool:
        return self.instruments.ndim == 1


def read_dataset_csv(path) -> Dataset:
    """Read a dataset CSV (header ``y,x`` plus ``z1..zK`` or ``judge``)."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = [row for row in reader if row]
    except OSError as exc:
        raise DataError(f"cannot read dataset: {exc}") from exc
    if header is None:
        raise DataError("dataset parse error: empty file")
    names = [h.strip() for h in header]
    for required in ("y", "x"):
        if required not in names:
            raise DataError(f"dataset missing column '{required}'")
    judge_form = "judge" in names
    if judge_form:
        z_cols = []
    else:
        z_cols = [name for name in names if name.startswith("z")]
        expected = [f"z{i}" for i in range(1, len(z_cols) + 1)]
        if not z_cols or sorted(z_cols) != sorted(expected):
            raise DataError("dataset missing column 'z1..zK' or 'judge'")
    width = len(names)
    try:
        table = np.array([[float(cell) for cell in row] for row in rows], dtype=float)
    except ValueError as exc:
        raise DataError(f"dataset parse error: {exc}") from exc
    if table.ndim != 2 or table.shape[1] != width:
        raise DataError("dataset parse error: ragged rows")
    col = {name: table[:, i] for i, name in enumerate(names)}
    y, x = col["y"], col["x"]
    if judge_form:
        raw = col["judge"]
        labels = raw.astype(np.int64)
        if not np.array_equal(labels, raw):
            raise DataError("dataset parse error: judge labels must be integers")
        return Dataset(y, x, labels)
    z = np.column_stack([col[f"z{i}"] for i in range(1, len(z_cols) + 1)])
    return Dataset(y, x, z)


def write_dataset_csv(path, data: Dataset) -> None:
    """Write a dataset CSV in judge or dense form, shortest round-trip floats."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if data.is_judge:
            fh.write("y,x,judge\n")
            for yi, xi, ji in zip(data.y, data.x, data.instruments):
                fh.write(f"{float(yi)!r},{float(xi)!r},{int(ji)}\n")
        else:
            k = data.k
            fh.write("y,x," + ",".join(f"z{i}" for i in range(1, k + 1)) + "\n")
            for i in range(data.n):
                zrow = ",".join(repr(float(v)) for v in data.instruments[i])
                fh.write(f"{float(data.y[i])!r},{float(data.x[i])!r},{zrow}\n")
