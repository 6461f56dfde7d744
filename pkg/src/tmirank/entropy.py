"""k-nearest-neighbour (Kozachenko-Leonenko) differential entropy, in nats."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .ingest import FeatureMatrix, ValidationError
from .kdtree import KDTree, brute_force_kth_sq

DISTANCE_FLOOR = 1e-12

# Bernoulli-number coefficients B_2j / (2j) of the digamma asymptotic series
_DIGAMMA_SERIES = (
    1.0 / 12,
    -1.0 / 120,
    1.0 / 252,
    -1.0 / 240,
    1.0 / 132,
    -691.0 / 32760,
    1.0 / 12,
)
_DIGAMMA_SHIFT = 10.0


class NeighborBackend(str, enum.Enum):
    BRUTE_FORCE = "brute_force"
    TREE = "tree"


@dataclass(frozen=True)
class EntropyEstimate:
    value: float
    k_used: int
    n_points: int
    num_clamped: int


def digamma(x: float) -> float:
    """psi(x) for x > 0 by upward recurrence and the asymptotic series."""
    x = float(x)
    if not x > 0 or not math.isfinite(x):
        raise ValueError(f"digamma requires a finite x > 0, got {x!r}")
    shift = 0.0
    while x < _DIGAMMA_SHIFT:
        shift += 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    for coef in reversed(_DIGAMMA_SERIES):
        series = series * inv2 + coef
    return math.log(x) - 0.5 / x - series * inv2 - shift


def unit_ball_log_volume(d: int) -> float:
    """log of pi^(d/2) / Gamma(d/2 + 1)."""
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d!r}")
    return 0.5 * d * math.log(math.pi) - math.lgamma(0.5 * d + 1.0)


def _as_array(points) -> np.ndarray:
    if isinstance(points, FeatureMatrix):
        return points.data
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"points must be 2-D, got shape {arr.shape}")
    return arr


def kth_neighbor_distances(points, k: int, backend=NeighborBackend.TREE) -> np.ndarray:
    """Euclidean distance from each point to its k-th nearest other point.

    Self is excluded; coincident points count as neighbours at distance 0.
    Ties between equidistant neighbours do not change the returned value.
    """
    x = _as_array(points)
    n = x.shape[0]
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    if n <= k:
        raise ValueError(f"k={k} needs at least {k + 1} points, got {n}")
    backend = NeighborBackend(backend)
    if backend is NeighborBackend.BRUTE_FORCE:
        sq = brute_force_kth_sq(x, k)
    else:
        sq = KDTree(x).kth_sq(k)
    return np.sqrt(sq)


def knn_entropy(points, k: int = 3, backend=NeighborBackend.TREE) -> EntropyEstimate:
    x = _as_array(points)
    n, d = x.shape
    eps = kth_neighbor_distances(x, k, backend)
    zero = eps == 0.0
    if zero.all():
        raise ValueError("degenerate point set: every k-th neighbour distance is zero")
    clamped = int(np.count_nonzero(eps < DISTANCE_FLOOR))
    log_eps = np.log(np.maximum(eps, DISTANCE_FLOOR))
    # fsum is exactly rounded, so the result does not depend on row order
    value = digamma(n) - digamma(k) + unit_ball_log_volume(d) + d * math.fsum(log_eps.tolist()) / n
    return EntropyEstimate(value=value, k_used=int(k), n_points=n, num_clamped=clamped)
