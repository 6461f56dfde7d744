"""Loading, validation and synthesis of feature, label, prediction and accuracy data.

On-disk formats
---------------
features (csv)
    No header. One sample per line, comma separated, parsed as float64.
features (binary)
    ``b"TMIF"``, one format-version byte (currently 1), ``n`` and ``d`` as
    little-endian uint64, then ``n*d`` little-endian float64 values, row-major.
labels
    Plain text, one integer per line.
source predictions
    Same as features (csv or binary); rows must be probability vectors.
accuracies
    CSV of ``model_id,accuracy`` lines. A header line ``model_id,accuracy`` is
    tolerated.

Synthetic data uses the PCG64 bit generator (raw 64-bit output stream, which
NumPy keeps stable across releases) turned into uniforms on (0, 1] with 53
bits of precision and then into standard normals by the Box-Muller transform.
Draws are consumed class by class, row by row.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = b"TMIF"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sBQQ")


class ValidationError(ValueError):
    """Input data violates a documented invariant."""


class ParseError(ValueError):
    """A file could not be parsed under its declared format."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FeatureMatrix:
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValidationError(f"feature matrix must be 2-D, got shape {data.shape}")
        n, d = data.shape
        if n < 1 or d < 1:
            raise ValidationError(f"feature matrix must be non-empty, got shape {data.shape}")
        bad = ~np.isfinite(data)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise ValidationError(f"non-finite value {data[i, j]!r} at row {i}, column {j}")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class LabelVector:
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        raw = np.asarray(self.labels)
        if raw.ndim != 1:
            raise ValidationError("labels must be one-dimensional")
        if raw.size and not np.issubdtype(raw.dtype, np.integer):
            if not np.all(np.equal(np.mod(raw, 1), 0)):
                raise ValidationError("labels must be integers")
        labels = raw.astype(np.int64)
        c = int(self.num_classes)
        if c < 1:
            raise ValidationError(f"num_classes must be >= 1, got {c}")
        bad = np.flatnonzero((labels < 0) | (labels >= c))
        if bad.size:
            i = bad[0]
            raise ValidationError(f"label {labels[i]} at index {i} outside [0, {c})")
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "num_classes", c)

    @classmethod
    def from_labels(cls, labels, num_classes: int | None = None) -> "LabelVector":
        labels = np.asarray(labels)
        if num_classes is None:
            if labels.size == 0:
                raise ValidationError("cannot infer num_classes from empty labels")
            num_classes = int(labels.max()) + 1
        return cls(labels, num_classes)

    def __len__(self):
        return self.labels.shape[0]

    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass(frozen=True)
class SourcePredictionMatrix:
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 2 or probs.shape[0] < 1 or probs.shape[1] < 1:
            raise ValidationError(f"source predictions must be a non-empty 2-D matrix, got {probs.shape}")
        if not np.all(np.isfinite(probs)):
            raise ValidationError("source predictions contain non-finite values")
        if probs.min() < 0.0 or probs.max() > 1.0:
            raise ValidationError("source predictions must lie in [0, 1]")
        row_err = np.abs(probs.sum(axis=1) - 1.0)
        bad = np.flatnonzero(row_err > 1e-6)
        if bad.size:
            raise ValidationError(f"row {bad[0]} of source predictions sums to {probs[bad[0]].sum()!r}, not 1")
        object.__setattr__(self, "probs", _frozen(probs))

    @property
    def n(self) -> int:
        return self.probs.shape[0]

    @property
    def num_source_classes(self) -> int:
        return self.probs.shape[1]


@dataclass(frozen=True)
class AccuracyVector:
    model_ids: tuple
    accuracies: np.ndarray

    def __post_init__(self):
        ids = tuple(str(m) for m in self.model_ids)
        acc = np.asarray(self.accuracies, dtype=np.float64)
        if acc.ndim != 1 or acc.shape[0] != len(ids):
            raise ValidationError("model_ids and accuracies must have equal length")
        if len(set(ids)) != len(ids):
            seen = set()
            dup = next(m for m in ids if m in seen or seen.add(m))
            raise ValidationError(f"duplicate model id {dup!r}")
        if not np.all(np.isfinite(acc)) or acc.min(initial=0.0) < 0.0 or acc.max(initial=0.0) > 1.0:
            raise ValidationError("accuracies must be finite and in [0, 1]")
        object.__setattr__(self, "model_ids", ids)
        object.__setattr__(self, "accuracies", _frozen(acc))

    def as_dict(self) -> dict:
        return dict(zip(self.model_ids, self.accuracies.tolist()))


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int
    samples_per_class: Sequence[int]
    dim: int
    class_means: np.ndarray
    class_spreads: Sequence[float]
    seed: int = 0

    def __post_init__(self):
        c, d = int(self.num_classes), int(self.dim)
        if c < 1 or d < 1:
            raise ValidationError("num_classes and dim must be >= 1")
        counts = tuple(int(x) for x in self.samples_per_class)
        spreads = tuple(float(s) for s in self.class_spreads)
        means = np.asarray(self.class_means, dtype=np.float64)
        if means.ndim == 0:
            means = np.full((c, d), float(means))
        if means.shape != (c, d):
            raise ValidationError(f"class_means must have shape ({c}, {d}), got {means.shape}")
        if len(counts) != c or len(spreads) != c:
            raise ValidationError("samples_per_class and class_spreads need one entry per class")
        if min(counts) < 1:
            raise ValidationError("every class needs at least one sample")
        if not all(np.isfinite(s) and s > 0 for s in spreads):
            raise ValidationError("class spreads must be positive")
        if not np.all(np.isfinite(means)):
            raise ValidationError("class means must be finite")
        seed = int(self.seed)
        if seed < 0:
            raise ValidationError("seed must be non-negative")
        object.__setattr__(self, "num_classes", c)
        object.__setattr__(self, "dim", d)
        object.__setattr__(self, "samples_per_class", counts)
        object.__setattr__(self, "class_spreads", spreads)
        object.__setattr__(self, "class_means", _frozen(means))
        object.__setattr__(self, "seed", seed)

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "samples_per_class": list(self.samples_per_class),
            "dim": self.dim,
            "class_means": self.class_means.tolist(),
            "class_spreads": list(self.class_spreads),
            "seed": self.seed,
            "generator": "pcg64-box-muller",
        }


# -- features ---------------------------------------------------------------


def _read_csv_matrix(path) -> np.ndarray:
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh)):
            if not row or all(not cell.strip() for cell in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(f"{path}: row {lineno} has {len(row)} columns, expected {width}")
            values = []
            for col, cell in enumerate(row):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ParseError(f"{path}: row {lineno}, column {col}: cannot parse {cell.strip()!r}") from None
            rows.append(values)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def _read_binary_matrix(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ParseError(f"{path}: truncated header")
    magic, version, n, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported format version {version}")
    expected = _HEADER.size + 8 * n * d
    if len(raw) != expected:
        raise ParseError(f"{path}: expected {expected} bytes for {n}x{d} matrix, found {len(raw)}")
    return np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(np.float64).reshape(n, d)


def read_matrix(path, format: str = "csv") -> np.ndarray:
    if format == "csv":
        return _read_csv_matrix(path)
    if format == "binary":
        return _read_binary_matrix(path)
    raise ValueError(f"unknown format {format!r}")


def write_matrix(path, data, format: str = "csv") -> None:
    data = np.asarray(data, dtype=np.float64)
    if format == "csv":
        buf = io.StringIO()
        for row in data:
            # repr round-trips float64 exactly
            buf.write(",".join(repr(float(v)) for v in row))
            buf.write("\n")
        Path(path).write_text(buf.getvalue())
    elif format == "binary":
        n, d = data.shape
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, n, d))
            fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())
    else:
        raise ValueError(f"unknown format {format!r}")


def load_features(path, format: str = "csv") -> FeatureMatrix:
    return FeatureMatrix(read_matrix(path, format))


def save_features(path, features: FeatureMatrix, format: str = "csv") -> None:
    write_matrix(path, features.data, format)


def load_source_predictions(path, format: str = "csv") -> SourcePredictionMatrix:
    return SourcePredictionMatrix(read_matrix(path, format))


# -- labels and accuracies --------------------------------------------------


def load_labels(path, num_classes: int | None = None) -> LabelVector:
    labels = []
    with open(path) as fh:
        for lineno, line in enumerate(fh):
            text = line.strip()
            if not text:
                continue
            text = text.split(",")[0].strip()
            try:
                labels.append(int(text))
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: not an integer label: {text!r}") from None
    return LabelVector.from_labels(np.array(labels, dtype=np.int64), num_classes)


def save_labels(path, labels: LabelVector) -> None:
    Path(path).write_text("".join(f"{int(y)}\n" for y in labels.labels))


def load_accuracies(path) -> AccuracyVector:
    ids, accs = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh)):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ParseError(f"{path}: row {lineno}: expected 'model_id,accuracy'")
            mid, acc = row[0].strip(), row[1].strip()
            if lineno == 0 and mid == "model_id":
                continue
            try:
                accs.append(float(acc))
            except ValueError:
                raise ParseError(f"{path}: row {lineno}, column 1: cannot parse {acc!r}") from None
            ids.append(mid)
    return AccuracyVector(tuple(ids), np.array(accs))


def save_accuracies(path, accuracies: AccuracyVector) -> None:
    Path(path).write_text(
        "".join(f"{m},{a!r}\n" for m, a in zip(accuracies.model_ids, accuracies.accuracies.tolist()))
    )


# -- class handling ---------------------------------------------------------


def check_paired(features: FeatureMatrix, labels: LabelVector) -> None:
    if features.n != len(labels):
        raise ValidationError(f"{features.n} feature rows but {len(labels)} labels")


def split_by_class(features: FeatureMatrix, labels: LabelVector) -> list[np.ndarray]:
    """Per-class row blocks in original relative order; empty classes give (0, d) arrays.

    Blocks are plain arrays rather than FeatureMatrix since a class may be empty.
    """
    check_paired(features, labels)
    order = np.argsort(labels.labels, kind="stable")
    bounds = np.cumsum(labels.counts())
    starts = np.concatenate(([0], bounds[:-1]))
    blocks = []
    for s, e in zip(starts, bounds):
        block = features.data[order[s:e]]
        block.setflags(write=False)
        blocks.append(block)
    return blocks


def standardize(features: FeatureMatrix) -> tuple[FeatureMatrix, list[str]]:
    """Per-dimension z-scoring; zero-variance dimensions are only centered."""
    x = features.data
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    warnings = ["features standardized per dimension"]
    flat = sd == 0
    if flat.any():
        warnings.append(f"{int(flat.sum())} constant dimension(s) centered but not scaled")
        sd = np.where(flat, 1.0, sd)
    return FeatureMatrix((x - mu) / sd), warnings


# -- synthetic data ---------------------------------------------------------


def _standard_normals(bitgen: np.random.PCG64, count: int) -> np.ndarray:
    pairs = (count + 1) // 2
    raw = bitgen.random_raw(2 * pairs)
    # 53-bit uniforms on (0, 1]; never zero so the log is finite
    u = ((raw >> np.uint64(11)).astype(np.float64) + 1.0) * (1.0 / 9007199254740992.0)
    u1, u2 = u[0::2], u[1::2]
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    out = np.empty(2 * pairs)
    out[0::2] = radius * np.cos(angle)
    out[1::2] = radius * np.sin(angle)
    return out[:count]


def generate_synthetic(spec: SyntheticSpec) -> tuple[FeatureMatrix, LabelVector]:
    bitgen = np.random.PCG64(spec.seed)
    blocks, labels = [], []
    for c, (count, spread) in enumerate(zip(spec.samples_per_class, spec.class_spreads)):
        z = _standard_normals(bitgen, count * spec.dim).reshape(count, spec.dim)
        blocks.append(spec.class_means[c] + spread * z)
        labels.append(np.full(count, c, dtype=np.int64))
    return FeatureMatrix(np.vstack(blocks)), LabelVector(np.concatenate(labels), spec.num_classes)
