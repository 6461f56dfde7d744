"""TMI, the conditional entropy of features given labels, and four
metric-learning intra-class-variance measures used for comparison.

TMI is oriented "higher is better".  The ICV measures are compactness terms
(smaller means tighter classes) and are reported raw; orientation is applied
by :mod:`tmirank.evaluation`.
"""

from __future__ import annotations

import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .entropy import NeighborBackend, knn_entropy
from .ingest import FeatureMatrix, LabelVector, check_paired, split_by_class
from .kdtree import squared_distances

_ROW_BLOCK_ELEMENTS = 1 << 22


class ScoringError(ValueError):
    """Inputs cannot produce a score."""


@dataclass
class ScoreResult:
    method: str
    value: float
    wall_time: float = 0.0
    per_class: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "value": self.value,
            "per_class": self.per_class,
            "warnings": self.warnings,
            "timing": {"wall_time": self.wall_time},
        }


@contextmanager
def timed(result_holder: list):
    t0 = time.perf_counter()
    yield
    result_holder.append(time.perf_counter() - t0)


def _finish(method, value, elapsed, per_class, warnings) -> ScoreResult:
    if not math.isfinite(value):
        raise ScoringError(f"{method}: non-finite score {value!r}")
    return ScoreResult(method, float(value), elapsed[0], per_class, warnings)


def tmi(features: FeatureMatrix, labels: LabelVector, k: int = 3, backend=NeighborBackend.TREE) -> ScoreResult:
    """Sum over classes of (n_c / n) * H(features of class c).

    Classes with fewer than two samples are left out and the weights are
    renormalised over the classes that remain.  Per class, k is clamped to
    n_c - 1.
    """
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    elapsed, warnings, entries = [], [], []
    with timed(elapsed):
        blocks = split_by_class(features, labels)
        for c, block in enumerate(blocks):
            n_c = block.shape[0]
            if n_c == 0:
                continue
            if n_c < 2:
                warnings.append(f"class {c} skipped: only {n_c} sample")
                continue
            k_c = min(k, n_c - 1)
            if k_c != k:
                warnings.append(f"class {c}: k clamped from {k} to {k_c} (n_c={n_c})")
            est = knn_entropy(block, k_c, backend)
            if est.num_clamped:
                warnings.append(f"class {c}: {est.num_clamped} zero neighbour distance(s) floored")
            entries.append((c, n_c, k_c, est.value))
        if not entries:
            raise ScoringError("no scorable class: every class has fewer than 2 samples")
        n_incl = sum(e[1] for e in entries)
        value = math.fsum(n_c / n_incl * h for _, n_c, _, h in entries)
    per_class = [
        {"class": c, "n": n_c, "k": k_c, "weight": n_c / n_incl, "entropy": h} for c, n_c, k_c, h in entries
    ]
    return _finish("tmi", value, elapsed, per_class, warnings)


def icv_contrast(features: FeatureMatrix, labels: LabelVector) -> ScoreResult:
    """Mean squared distance over unordered same-class pairs."""
    elapsed, per_class = [], []
    with timed(elapsed):
        total, pairs = 0.0, 0
        for c, block in enumerate(split_by_class(features, labels)):
            n_c = block.shape[0]
            if n_c < 2:
                continue
            # sum_{i<j} |x_i - x_j|^2 = n_c * sum_i |x_i - mean|^2
            centered = block - block.mean(axis=0)
            s = n_c * float(np.sum(centered * centered))
            p = n_c * (n_c - 1) // 2
            per_class.append({"class": c, "n": n_c, "pairs": p, "mean_sq_distance": s / p})
            total += s
            pairs += p
        if pairs == 0:
            raise ScoringError("icv_contrast: no same-class pair")
        value = total / pairs
    return _finish("icv_contrast", value, elapsed, per_class, [])


def icv_center(features: FeatureMatrix, labels: LabelVector) -> ScoreResult:
    """Mean squared distance of each sample to its class mean."""
    check_paired(features, labels)
    elapsed, per_class = [], []
    with timed(elapsed):
        total = 0.0
        for c, block in enumerate(split_by_class(features, labels)):
            if block.shape[0] == 0:
                continue
            centered = block - block.mean(axis=0)
            s = float(np.sum(centered * centered))
            per_class.append({"class": c, "n": block.shape[0], "mean_sq_deviation": s / block.shape[0]})
            total += s
        value = total / features.n
    return _finish("icv_center", value, elapsed, per_class, [])


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(a - safe[:, None]).sum(axis=1)) + safe


def icv_snca(features: FeatureMatrix, labels: LabelVector, temperature: float = 1.0) -> ScoreResult:
    """Negative mean log-probability that a sample's soft neighbours share its class.

    Samples without a same-class peer are excluded with a warning.  The value
    is non-negative and smaller means tighter classes.
    """
    check_paired(features, labels)
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature!r}")
    x, y = features.data, labels.labels
    n = x.shape[0]
    elapsed, warnings = [], []
    with timed(elapsed):
        counts = np.bincount(y, minlength=labels.num_classes)
        keep = counts[y] >= 2
        if not keep.all():
            warnings.append(f"{int((~keep).sum())} sample(s) without a same-class peer excluded")
        if not keep.any():
            raise ScoringError("icv_snca: no sample has a same-class peer")
        terms = np.empty(n)
        block = max(1, _ROW_BLOCK_ELEMENTS // n)
        for s in range(0, n, block):
            rows = np.arange(s, min(n, s + block))
            logits = -squared_distances(x[rows], x) / temperature
            logits[np.arange(rows.size), rows] = -np.inf
            same = y[rows][:, None] == y[None, :]
            log_den = _logsumexp_rows(logits)
            log_num = _logsumexp_rows(np.where(same, logits, -np.inf))
            terms[rows] = log_num - log_den
        kept = terms[keep]
        value = -math.fsum(kept.tolist()) / kept.size
        per_class = []
        for c in range(labels.num_classes):
            mask = keep & (y == c)
            if mask.any():
                per_class.append({"class": c, "n": int(mask.sum()), "term": -float(terms[mask].mean())})
    warnings.append("lower is tighter; value is -mean log same-class neighbour probability")
    return _finish("icv_snca", value, elapsed, per_class, warnings)


def icv_ms(features: FeatureMatrix, labels: LabelVector, alpha: float = 2.0, lam: float = 0.5) -> ScoreResult:
    """Positive-pair term of the multi-similarity loss on cosine similarities."""
    check_paired(features, labels)
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    x, y = features.data, labels.labels
    n = x.shape[0]
    norms = np.sqrt(np.sum(x * x, axis=1))
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ScoringError(f"icv_ms: feature row {zero[0]} has zero norm")
    elapsed, warnings = [], []
    with timed(elapsed):
        unit = x / norms[:, None]
        terms = np.zeros(n)
        block = max(1, _ROW_BLOCK_ELEMENTS // n)
        for s in range(0, n, block):
            rows = np.arange(s, min(n, s + block))
            sim = unit[rows] @ unit.T
            same = y[rows][:, None] == y[None, :]
            same[np.arange(rows.size), rows] = False
            pos = np.where(same, np.exp(-alpha * (sim - lam)), 0.0).sum(axis=1)
            terms[rows] = np.log1p(pos) / alpha
        lonely = np.bincount(y, minlength=labels.num_classes)[y] < 2
        if lonely.any():
            warnings.append(f"{int(lonely.sum())} sample(s) without a same-class peer contribute 0")
        if lonely.all():
            raise ScoringError("icv_ms: no same-class pair")
        value = math.fsum(terms.tolist()) / n
        per_class = [
            {"class": c, "n": int((y == c).sum()), "term": float(terms[y == c].mean())}
            for c in range(labels.num_classes)
            if (y == c).any()
        ]
    return _finish("icv_ms", value, elapsed, per_class, warnings)
