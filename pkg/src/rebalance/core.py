"""Tabular samples, CSV I/O and the seeded randomness contract.

Every stochastic routine in the package takes a :class:`SeedSpec` and builds
its generator through :meth:`SeedSpec.rng`, which uses numpy's counter-based
Philox bit generator keyed by ``(master_seed, stream_id)``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "RebalanceError",
    "ValidationError",
    "RebalanceWarning",
    "Sample",
    "Schema",
    "SeedSpec",
    "read_csv",
    "write_csv",
]

_U64 = (1 << 64) - 1


class RebalanceError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(RebalanceError, ValueError):
    """Invalid input data, parameters or configuration."""


class RebalanceWarning(UserWarning):
    """A numerical fallback was taken (regularization, merged cluster, ...)."""


def _as_matrix(values, n_rows: int | None, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if n_rows is None or arr.size == n_rows else arr.reshape(n_rows, -1)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be two-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class Sample:
    """n rows of covariates ``x`` (n, p), response ``y`` (n,) and optional ``aux`` (n, a).

    Arrays are copied and made read-only on construction.
    """

    x: np.ndarray
    y: np.ndarray
    aux: np.ndarray | None = None
    column_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        n = y.shape[0]
        x = _as_matrix(self.x, n, "x")
        if x.shape[0] != n:
            raise ValidationError(f"x has {x.shape[0]} rows but y has {n}")
        aux = None
        if self.aux is not None:
            aux = _as_matrix(self.aux, n, "aux")
            if aux.shape[0] != n:
                raise ValidationError(f"aux has {aux.shape[0]} rows but y has {n}")
            if aux.shape[1] == 0:
                aux = None
        for name, arr in (("x", x), ("y", y), ("aux", aux)):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} contains non-finite values")
        a = 0 if aux is None else aux.shape[1]
        names = tuple(self.column_names)
        if not names:
            names = tuple(f"x{j + 1}" for j in range(x.shape[1])) + ("y",) + tuple(
                f"aux{j + 1}" for j in range(a)
            )
        if len(names) != x.shape[1] + 1 + a:
            raise ValidationError(
                f"expected {x.shape[1] + 1 + a} column names, got {len(names)}"
            )
        for name, arr in (("x", x), ("y", y), ("aux", aux)):
            if arr is not None:
                arr = np.array(arr, dtype=float, copy=True)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        if aux is None:
            object.__setattr__(self, "aux", None)
        object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def n_aux(self) -> int:
        return 0 if self.aux is None else self.aux.shape[1]

    @property
    def d(self) -> int:
        """Width of the joint (x, y, aux) matrix."""
        return self.p + 1 + self.n_aux

    def joint(self) -> np.ndarray:
        """Columns ``[x | y | aux]`` as one (n, d) float array."""
        parts = [self.x, self.y[:, None]]
        if self.aux is not None:
            parts.append(self.aux)
        return np.hstack(parts)

    def from_joint(self, z: np.ndarray) -> "Sample":
        """Build a sample with this sample's column layout from a joint matrix."""
        z = np.asarray(z, dtype=float).reshape(-1, self.d)
        p = self.p
        aux = z[:, p + 1 :] if self.n_aux else None
        return Sample(z[:, :p], z[:, p], aux, self.column_names)

    def take(self, rows) -> "Sample":
        """Rows selected by integer index (repeats allowed), as whole tuples."""
        rows = np.asarray(rows, dtype=np.intp)
        aux = None if self.aux is None else self.aux[rows]
        return Sample(self.x[rows], self.y[rows], aux, self.column_names)

    def equals(self, other: "Sample") -> bool:
        return (
            self.column_names == other.column_names
            and self.x.shape == other.x.shape
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and (
                (self.aux is None and other.aux is None)
                or (
                    self.aux is not None
                    and other.aux is not None
                    and np.array_equal(self.aux, other.aux)
                )
            )
        )

    @property
    def schema(self) -> "Schema":
        p, a = self.p, self.n_aux
        names = self.column_names
        return Schema(x=names[:p], y=names[p], aux=names[p + 1 : p + 1 + a])

    @staticmethod
    def concat(samples: Sequence["Sample"]) -> "Sample":
        if not samples:
            raise ValidationError("nothing to concatenate")
        return samples[0].from_joint(np.vstack([s.joint() for s in samples]))


@dataclass(frozen=True)
class Schema:
    """Column roles: covariate names, response name, auxiliary names."""

    x: tuple[str, ...]
    y: str
    aux: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(self.x))
        object.__setattr__(self, "aux", tuple(self.aux))
        if not self.x:
            raise ValidationError("schema needs at least one x column")
        names = self.columns
        if len(set(names)) != len(names):
            raise ValidationError(f"schema has duplicate columns: {names}")

    @property
    def columns(self) -> tuple[str, ...]:
        return self.x + (self.y,) + self.aux

    @classmethod
    def from_mapping(cls, mapping: Mapping) -> "Schema":
        try:
            x = mapping["x"]
            y = mapping["y"]
        except KeyError as exc:
            raise ValidationError(f"schema missing key {exc}") from None
        if isinstance(x, str):
            x = [x]
        return cls(tuple(x), y, tuple(mapping.get("aux", ()) or ()))

    @classmethod
    def from_json(cls, text: str) -> "Schema":
        return cls.from_mapping(json.loads(text))

    def to_dict(self) -> dict:
        return {"x": list(self.x), "y": self.y, "aux": list(self.aux)}


def read_csv(path, schema: Schema | Mapping | None = None) -> Sample:
    """Read a comma-separated file with a header row into a :class:`Sample`.

    Without a schema the last column is the response and all others are
    covariates. Columns not named in the schema are ignored.
    """
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: missing header row") from None
        rows = list(reader)
    if schema is None:
        if len(header) < 2:
            raise ValidationError(f"{path}: need at least two columns without a schema")
        schema = Schema(tuple(header[:-1]), header[-1])
    elif not isinstance(schema, Schema):
        schema = Schema.from_mapping(schema)
    index = {}
    for name in schema.columns:
        if name not in header:
            raise ValidationError(f"{path}: missing declared column {name!r}")
        index[name] = header.index(name)
    cols = schema.columns
    data = np.empty((len(rows), len(cols)))
    for i, row in enumerate(rows):
        for j, name in enumerate(cols):
            k = index[name]
            cell = row[k].strip() if k < len(row) else ""
            try:
                value = float(cell)
            except ValueError:
                value = math.nan
            if not math.isfinite(value):
                # header is line 1, first data row is line 2
                raise ValidationError(
                    f"{path}: row {i + 1} (line {i + 2}), column {name!r}: "
                    f"not a finite number: {cell!r}"
                )
            data[i, j] = value
    p, a = len(schema.x), len(schema.aux)
    return Sample(
        data[:, :p],
        data[:, p],
        data[:, p + 1 :] if a else None,
        cols,
    )


def write_csv(sample: Sample, path) -> None:
    """Write a sample; floats use ``repr`` so a re-read is bit-exact."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(sample.column_names)
        for row in sample.joint():
            writer.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class SeedSpec:
    """Identifies one random stream: ``(master_seed, stream_id)``, both 64-bit."""

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            v = int(getattr(self, name))
            if not 0 <= v <= _U64:
                raise ValidationError(f"{name} must fit in 64 unsigned bits, got {v}")
            object.__setattr__(self, name, v)

    def rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=[self.master_seed, self.stream_id]))

    def child(self, k: int) -> "SeedSpec":
        """Deterministic sub-stream ``k`` of this stream."""
        seq = np.random.SeedSequence([self.master_seed, self.stream_id, int(k)])
        stream = int(seq.generate_state(1, dtype=np.uint64)[0])
        return SeedSpec(self.master_seed, stream)


def as_seed(seed) -> SeedSpec:
    """Accept a SeedSpec or a plain integer master seed."""
    if isinstance(seed, SeedSpec):
        return seed
    if seed is None:
        raise ValidationError("a seed is required")
    return SeedSpec(int(seed))
