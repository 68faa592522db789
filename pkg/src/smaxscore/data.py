"""Labeled observations for the binary response model and their CSV format.

An observation is a triple (y, x, z): a label y in {-1, +1}, the scalar
covariate x whose coefficient is normalized to one, and a length-p covariate
vector z whose coefficient vector is the estimation target.  A Dataset stores
a collection of observations column-wise as numpy arrays.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np


class Observation(NamedTuple):
    y: float
    x: float
    z: tuple[float, ...]


class DataFormatError(ValueError):
    """Raised when raw inputs violate the (y, x, z) contract."""


@dataclass(frozen=True)
class Dataset:
    """Column-ordered collection of observations.

    Attributes
    ----------
    y : (n,) array with entries in {-1.0, +1.0}
    x : (n,) array, the unit-coefficient covariate
    z : (n, p) array of remaining covariates
    """

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        x = np.asarray(self.x, dtype=np.float64)
        z = np.asarray(self.z, dtype=np.float64)
        if z.ndim == 1:
            z = z[:, None]
        if y.ndim != 1 or x.ndim != 1 or z.ndim != 2:
            raise DataFormatError("y and x must be 1-d, z must be 2-d")
        if not (len(y) == len(x) == z.shape[0]):
            raise DataFormatError(
                f"length mismatch: y={len(y)}, x={len(x)}, z={z.shape[0]}"
            )
        if len(y) == 0:
            raise DataFormatError("empty dataset")
        if not np.all(np.abs(y) == 1.0):
            bad = int(np.flatnonzero(np.abs(y) != 1.0)[0])
            raise DataFormatError(f"labels must be -1 or +1; row {bad} is {y[bad]}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            raise DataFormatError("covariates must be finite")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.z.shape[1]

    @property
    def zbound(self) -> float:
        """Largest |z_ij| in the dataset."""
        return float(np.max(np.abs(self.z)))

    @classmethod
    def from_observations(cls, obs: Iterable[Observation]) -> "Dataset":
        rows = list(obs)
        if not rows:
            raise DataFormatError("empty dataset")
        y = np.array([o.y for o in rows], dtype=np.float64)
        x = np.array([o.x for o in rows], dtype=np.float64)
        z = np.array([o.z for o in rows], dtype=np.float64)
        return cls(y, x, z)

    def subset(self, start: int, stop: int) -> "Dataset":
        """Contiguous slice [start, stop); shares memory with the parent."""
        return Dataset(self.y[start:stop], self.x[start:stop], self.z[start:stop])

    def concat(self, other: "Dataset") -> "Dataset":
        if other.p != self.p:
            raise DataFormatError("dimension mismatch in concat")
        return Dataset(
            np.concatenate([self.y, other.y]),
            np.concatenate([self.x, other.x]),
            np.concatenate([self.z, other.z]),
        )


def read_csv(path) -> Dataset:
    """Read a dataset from CSV with header ``y,x,z1,...,zp``.

    Raises DataFormatError naming the offending line on any malformed row.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        header = [c.strip() for c in header]
        if len(header) < 3 or header[0] != "y" or header[1] != "x":
            raise DataFormatError(f"{path}: header must be y,x,z1,...,zp")
        p = len(header) - 2
        ys, xs, zs = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != p + 2:
                raise DataFormatError(
                    f"{path}: line {lineno}: expected {p + 2} fields, got {len(row)}"
                )
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise DataFormatError(
                    f"{path}: line {lineno}: non-numeric field"
                ) from None
            if vals[0] not in (-1.0, 1.0):
                raise DataFormatError(
                    f"{path}: line {lineno}: label must be -1 or 1, got {vals[0]:g}"
                )
            ys.append(vals[0])
            xs.append(vals[1])
            zs.append(vals[2:])
        if not ys:
            raise DataFormatError(f"{path}: no data rows")
    return Dataset(np.array(ys), np.array(xs), np.array(zs))


def write_csv(data: Dataset, path) -> None:
    """Write a dataset in the ``y,x,z1,...,zp`` CSV format."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y", "x"] + [f"z{j + 1}" for j in range(data.p)])
        for i in range(data.n):
            writer.writerow(
                [f"{data.y[i]:.0f}", repr(float(data.x[i]))]
                + [repr(float(v)) for v in data.z[i]]
            )
