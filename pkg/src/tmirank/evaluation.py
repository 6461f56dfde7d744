"""Ranking evaluation: Kendall tau-b, top-k selection hits, reports and n_k sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .entropy import NeighborBackend
from .ingest import AccuracyVector, FeatureMatrix, LabelVector, ValidationError
from .scores import ScoringError, tmi

HIGHER_BETTER = "higher_better"
LOWER_BETTER = "lower_better"
TAU_VARIANT = "tau-b"


class EvaluationError(ValueError):
    """Scores and accuracies cannot be compared."""


@dataclass(frozen=True)
class MethodScores:
    method: str
    model_ids: tuple
    scores: tuple
    wall_times: tuple
    orientation: str = HIGHER_BETTER

    def __post_init__(self):
        ids = tuple(str(m) for m in self.model_ids)
        scores = tuple(float(s) for s in self.scores)
        times = tuple(float(t) for t in self.wall_times)
        if not (len(ids) == len(scores) == len(times)):
            raise ValidationError(f"{self.method}: model_ids, scores and wall_times differ in length")
        if len(set(ids)) != len(ids):
            raise ValidationError(f"{self.method}: duplicate model ids")
        if not all(math.isfinite(s) for s in scores):
            raise ValidationError(f"{self.method}: non-finite score")
        if self.orientation not in (HIGHER_BETTER, LOWER_BETTER):
            raise ValidationError(f"unknown orientation {self.orientation!r}")
        object.__setattr__(self, "model_ids", ids)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "wall_times", times)

    def oriented(self) -> dict:
        """Scores keyed by model id, negated when lower is better."""
        sign = -1.0 if self.orientation == LOWER_BETTER else 1.0
        return {m: sign * s for m, s in zip(self.model_ids, self.scores)}


@dataclass
class MethodRow:
    method: str
    orientation: str
    scores: dict
    total_time: float
    kendall_tau: float | None = None
    top_k_hit: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)


@dataclass
class RankingReport:
    rows: list
    ks: list
    has_accuracies: bool
    warnings: list = field(default_factory=list)


# -- Kendall tau-b --------------------------------------------------------------


def _tied_pairs(sorted_values) -> int:
    total, run = 0, 1
    for prev, cur in zip(sorted_values, sorted_values[1:]):
        if cur == prev:
            run += 1
        else:
            total += run * (run - 1) // 2
            run = 1
    return total + run * (run - 1) // 2


def _count_inversions(values: list) -> tuple[list, int]:
    """Stable merge sort; returns the sorted list and the number of strict inversions."""
    n = len(values)
    if n < 2:
        return list(values), 0
    mid = n // 2
    left, inv_l = _count_inversions(values[:mid])
    right, inv_r = _count_inversions(values[mid:])
    merged, inv = [], inv_l + inv_r
    i = j = 0
    while i < len(left) and j < len(right):
        if right[j] < left[i]:
            merged.append(right[j])
            inv += len(left) - i
            j += 1
        else:
            merged.append(left[i])
            i += 1
    merged.extend(left[i:])
    merged.extend(right[j:])
    return merged, inv


def kendall_tau(a: Sequence[float], b: Sequence[float]) -> float:
    """Kendall tau-b in O(M log M) by merge-sort inversion counting.

    (concordant - discordant) / sqrt((pairs - ties_a) * (pairs - ties_b)),
    where ties_a counts pairs tied in ``a`` (including joint ties).
    """
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    m = len(a)
    if m != len(b):
        raise ValueError(f"length mismatch: {m} vs {len(b)}")
    if m < 2:
        raise ValueError("kendall_tau needs at least 2 paired values")
    pairs = m * (m - 1) // 2
    order = sorted(range(m), key=lambda i: (a[i], b[i]))
    a_sorted = [a[i] for i in order]
    b_by_a = [b[i] for i in order]
    ties_a = _tied_pairs(a_sorted)
    ties_joint = _tied_pairs(list(zip(a_sorted, b_by_a)))
    # within a tie run of a, b is already ascending, so those pairs add no inversions
    b_sorted, discordant = _count_inversions(b_by_a)
    ties_b = _tied_pairs(b_sorted)
    if ties_a == pairs or ties_b == pairs:
        raise ValueError("undefined correlation: all values tied")
    concordant = pairs - ties_a - ties_b + ties_joint - discordant
    tau = (concordant - discordant) / math.sqrt((pairs - ties_a) * (pairs - ties_b))
    return max(-1.0, min(1.0, tau))


# -- selection ------------------------------------------------------------------


def _joined(scores: MethodScores, accuracies: AccuracyVector) -> tuple[list, list]:
    acc = accuracies.as_dict()
    missing = sorted(set(scores.model_ids) ^ set(acc))
    if missing:
        raise EvaluationError(f"{scores.method}: unmatched model ids {missing}")
    oriented = scores.oriented()
    ids = sorted(oriented)
    return ids, [(oriented[m], acc[m]) for m in ids]


def best_model(scores: MethodScores) -> str:
    oriented = scores.oriented()
    top = max(oriented.values())
    return min(m for m, s in oriented.items() if s == top)


def top_k_hit(scores: MethodScores, accuracies: AccuracyVector, k: int) -> bool:
    """Whether the best-scored model is among the k most accurate models.

    Accuracy ties at the k-th place admit every tied model.
    """
    ids, pairs = _joined(scores, accuracies)
    if not 1 <= k <= len(ids):
        raise EvaluationError(f"k={k} outside [1, {len(ids)}]")
    acc = dict(zip(ids, (p[1] for p in pairs)))
    threshold = sorted(acc.values(), reverse=True)[k - 1]
    return acc[best_model(scores)] >= threshold


def evaluate_method(scores: MethodScores, accuracies: AccuracyVector | None, ks: Sequence[int]) -> MethodRow:
    row = MethodRow(
        method=scores.method,
        orientation=scores.orientation,
        scores=dict(sorted(scores.oriented().items())),
        total_time=math.fsum(scores.wall_times),
    )
    if accuracies is None:
        return row
    ids, pairs = _joined(scores, accuracies)
    try:
        row.kendall_tau = kendall_tau([p[0] for p in pairs], [p[1] for p in pairs])
    except ValueError as exc:
        row.warnings.append(f"kendall_tau: {exc}")
    for k in ks:
        if k <= len(ids):
            row.top_k_hit[int(k)] = top_k_hit(scores, accuracies, k)
        else:
            row.warnings.append(f"top-{k} skipped: only {len(ids)} models")
    return row


def build_report(all_methods: Sequence[MethodScores], accuracies: AccuracyVector | None, ks: Sequence[int]) -> RankingReport:
    if not all_methods:
        raise EvaluationError("no methods to report")
    id_sets = {frozenset(m.model_ids) for m in all_methods}
    if len(id_sets) != 1:
        raise EvaluationError("methods cover different model id sets")
    names = [m.method for m in all_methods]
    if len(set(names)) != len(names):
        raise EvaluationError("duplicate method names")
    rows = [evaluate_method(m, accuracies, ks) for m in sorted(all_methods, key=lambda m: m.method)]
    return RankingReport(rows=rows, ks=[int(k) for k in ks], has_accuracies=accuracies is not None)


# -- n_k sensitivity ------------------------------------------------------------


@dataclass
class SweepEntry:
    k: int
    value: float | None
    valid: bool
    warnings: list = field(default_factory=list)


def sensitivity_sweep(
    features: FeatureMatrix, labels: LabelVector, ks: Sequence[int], backend=NeighborBackend.TREE
) -> list[SweepEntry]:
    out = []
    for k in sorted(set(int(k) for k in ks)):
        if k < 1:
            out.append(SweepEntry(k, None, False, [f"k={k} is not a positive integer"]))
            continue
        try:
            res = tmi(features, labels, k, backend)
        except ScoringError as exc:
            out.append(SweepEntry(k, None, False, [str(exc)]))
            continue
        out.append(SweepEntry(k, res.value, True, res.warnings))
    return out


# -- JSON -------------------------------------------------------------------------

REPORT_SCHEMA = "tmirank.report/1"


def round_floats(obj, digits: int = 12):
    """Recursively round floats to ``digits`` significant digits for stable JSON."""
    if isinstance(obj, float):
        return float(f"{obj:.{digits}g}")
    if isinstance(obj, dict):
        return {str(k): round_floats(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v, digits) for v in obj]
    return obj


def report_to_dict(report: RankingReport, timings: dict | None = None) -> dict:
    """Stable report document; per-model timing lives under the "timing" key only."""
    methods = []
    for row in sorted(report.rows, key=lambda r: r.method):
        entry = {
            "method": row.method,
            "orientation": row.orientation,
            "scores": row.scores,
            "warnings": row.warnings,
        }
        if report.has_accuracies:
            entry["kendall_tau"] = row.kendall_tau
            entry["top_k_hit"] = {str(k): v for k, v in sorted(row.top_k_hit.items())}
        methods.append(entry)
    timing = {row.method: {"total": row.total_time} for row in report.rows}
    for name, per_model in (timings or {}).items():
        timing.setdefault(name, {})["per_model"] = dict(sorted(per_model.items()))
    return {
        "schema": REPORT_SCHEMA,
        "kendall_variant": TAU_VARIANT,
        "orientation": "lower_better methods are negated before ranking; scores are oriented",
        "ks": report.ks,
        "has_accuracies": report.has_accuracies,
        "methods": methods,
        "warnings": report.warnings,
        "timing": dict(sorted(timing.items())),
    }
