"""Comparison transferability metrics: NCE, LEEP, LogME, H-Score and TransRate."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .ingest import FeatureMatrix, LabelVector, SourcePredictionMatrix, ValidationError, check_paired
from .scores import ScoreResult, ScoringError, _finish, timed

LEEP_FLOOR = 1e-30


@dataclass(frozen=True)
class BaselineConfig:
    # None selects 1e-8 * trace(feature covariance) / d
    hscore_ridge: float | None = None
    logme_max_iter: int = 100
    logme_tol: float = 1e-6
    transrate_eps: float = 1e-4

    def __post_init__(self):
        if self.hscore_ridge is not None and not self.hscore_ridge > 0:
            raise ValidationError("hscore_ridge must be positive")
        if int(self.logme_max_iter) != self.logme_max_iter or self.logme_max_iter < 1:
            raise ValidationError("logme_max_iter must be a positive integer")
        if not self.logme_tol > 0 or not self.transrate_eps > 0:
            raise ValidationError("logme_tol and transrate_eps must be positive")


def _check_preds(preds: SourcePredictionMatrix, labels: LabelVector) -> None:
    if preds.n != len(labels):
        raise ValidationError(f"{preds.n} prediction rows but {len(labels)} labels")


def nce(source_preds: SourcePredictionMatrix, labels: LabelVector) -> ScoreResult:
    """Negative conditional entropy -H(Y | Z) with Z the source argmax label."""
    _check_preds(source_preds, labels)
    elapsed = []
    with timed(elapsed):
        n = len(labels)
        z = np.argmax(source_preds.probs, axis=1)  # first maximum wins
        joint = np.zeros((labels.num_classes, source_preds.num_source_classes), dtype=np.int64)
        np.add.at(joint, (labels.labels, z), 1)
        z_count = joint.sum(axis=0)
        terms = [
            (cnt / n) * math.log(cnt / z_count[j]) for (i, j), cnt in np.ndenumerate(joint) if cnt > 0
        ]
        value = math.fsum(terms)
    return _finish("nce", value, elapsed, [], [])


def leep(source_preds: SourcePredictionMatrix, labels: LabelVector) -> ScoreResult:
    """Mean log-likelihood of the labels under the empirical label-transfer predictor."""
    _check_preds(source_preds, labels)
    theta, y = source_preds.probs, labels.labels
    n = len(labels)
    elapsed, warnings = [], []
    with timed(elapsed):
        onehot = np.zeros((n, labels.num_classes))
        onehot[np.arange(n), y] = 1.0
        joint = onehot.T @ theta / n
        pz = joint.sum(axis=0)
        used = pz > 0
        cond = joint[:, used] / pz[used]
        inner = np.sum(cond[y] * theta[:, used], axis=1)
        tiny = inner < LEEP_FLOOR
        if tiny.any():
            warnings.append(f"{int(tiny.sum())} sample(s) with zero likelihood floored at {LEEP_FLOOR:g}")
            inner = np.maximum(inner, LEEP_FLOOR)
        # the likelihood is a convex combination of conditionals, so never above 1
        value = min(math.fsum(np.log(inner).tolist()) / n, 0.0)
    return _finish("leep", value, elapsed, [], warnings)


def _log_evidence(alpha, beta, sigma, x2, res_x2, n, d):
    t = alpha / beta
    m2 = float(np.sum(sigma * x2 / (sigma + t) ** 2))
    res2 = float(np.sum(x2 * (t / (sigma + t)) ** 2)) + res_x2
    logdet = float(np.sum(np.log(alpha + beta * sigma))) + (d - sigma.size) * math.log(alpha)
    evidence = (
        0.5 * d * math.log(alpha)
        + 0.5 * n * math.log(beta)
        - 0.5 * logdet
        - 0.5 * beta * res2
        - 0.5 * alpha * m2
        - 0.5 * n * math.log(2 * math.pi)
    )
    return evidence, m2, res2


def logme_single(u, s, y, d, max_iter=100, tol=1e-6):
    """Maximise the evidence of one Bayesian linear regression over (alpha, beta).

    ``u`` and ``s`` come from the thin SVD of the feature matrix.  Returns
    ``(evidence, history, converged)`` where ``history`` holds the evidence at
    the starting point and after every fixed-point update.
    """
    n = y.shape[0]
    sigma = s * s
    x = u.T @ y
    x2 = x * x
    res_x2 = max(float(y @ y) - float(np.sum(x2)), 0.0)
    alpha, beta = 1.0, 1.0
    evidence, m2, res2 = _log_evidence(alpha, beta, sigma, x2, res_x2, n, d)
    history = [evidence]
    converged = False
    for _ in range(max_iter):
        t = alpha / beta
        gamma = float(np.sum(sigma / (sigma + t)))
        new_alpha = gamma / max(m2, 1e-300)
        # n <= d can interpolate exactly; keep beta finite
        new_beta = max(n - gamma, 1e-12 * n) / max(res2, 1e-300)
        change = max(abs(new_alpha - alpha) / alpha, abs(new_beta - beta) / beta)
        alpha, beta = new_alpha, new_beta
        evidence, m2, res2 = _log_evidence(alpha, beta, sigma, x2, res_x2, n, d)
        history.append(evidence)
        if change < tol:
            converged = True
            break
    return evidence, history, converged


def logme(features: FeatureMatrix, labels: LabelVector, config: BaselineConfig = BaselineConfig()) -> ScoreResult:
    """Mean over classes of the maximised log-evidence per sample, one-vs-all targets."""
    check_paired(features, labels)
    f = features.data
    n, d = f.shape
    if n < 2:
        raise ScoringError("logme needs at least 2 samples")
    elapsed, warnings, per_class = [], [], []
    with timed(elapsed):
        u, s, _ = np.linalg.svd(f, full_matrices=False)
        if n <= d:
            warnings.append(f"n={n} <= d={d}: targets can be interpolated, evidence may be unbounded")
        counts = labels.counts()
        for c in range(labels.num_classes):
            if counts[c] == 0:
                warnings.append(f"class {c} absent; skipped")
                continue
            y = (labels.labels == c).astype(np.float64)
            ev, hist, ok = logme_single(u, s, y, d, config.logme_max_iter, config.logme_tol)
            if not ok:
                warnings.append(f"class {c}: no convergence after {config.logme_max_iter} iterations")
            per_class.append({"class": c, "n": int(counts[c]), "evidence": ev / n, "iterations": len(hist) - 1})
        value = math.fsum(p["evidence"] for p in per_class) / len(per_class)
    return _finish("logme", value, elapsed, per_class, warnings)


def hscore(features: FeatureMatrix, labels: LabelVector, config: BaselineConfig = BaselineConfig()) -> ScoreResult:
    """trace(cov(f)^-1 cov(class-mean of f)), both covariances with 1/n normalisation."""
    check_paired(features, labels)
    f = features.data
    n, d = f.shape
    if n < 2:
        raise ScoringError("hscore needs at least 2 samples")
    elapsed, warnings = [], []
    with timed(elapsed):
        fc = f - f.mean(axis=0)
        cov_f = fc.T @ fc / n
        ridge = config.hscore_ridge
        if ridge is None:
            ridge = 1e-8 * float(np.trace(cov_f)) / d
        cov_f = cov_f + ridge * np.eye(d)
        y = labels.labels
        class_sum = np.zeros((labels.num_classes, d))
        np.add.at(class_sum, y, fc)
        counts = labels.counts()
        class_mean = class_sum / np.maximum(counts, 1)[:, None]
        g = class_mean[y]
        cov_b = g.T @ g / n
        try:
            factor = linalg.cho_factor(cov_f, lower=True)
            value = float(np.trace(linalg.cho_solve(factor, cov_b)))
        except (linalg.LinAlgError, ValueError) as exc:
            raise ScoringError(f"hscore: covariance solve failed with ridge {ridge!r}: {exc}") from None
        if n <= d:
            warnings.append(f"n={n} <= d={d}: covariance estimate is rank deficient")
    return _finish("hscore", value, elapsed, [], warnings)


def coding_rate(z: np.ndarray, eps: float, n: int | None = None) -> float:
    """0.5 * logdet(I + d / (n eps^2) Z^T Z)."""
    rows, d = z.shape
    n = rows if n is None else n
    gram = z.T @ z
    sign, logdet = np.linalg.slogdet(np.eye(d) + (d / (n * eps * eps)) * gram)
    if sign <= 0 or not math.isfinite(logdet):
        raise ScoringError("transrate: log-determinant of a non-finite or non-positive matrix")
    return 0.5 * logdet


def transrate(features: FeatureMatrix, labels: LabelVector, config: BaselineConfig = BaselineConfig()) -> ScoreResult:
    """Coding rate of all features minus the class-weighted coding rates, globally centred."""
    check_paired(features, labels)
    f = features.data
    n = f.shape[0]
    if n < 2:
        raise ScoringError("transrate needs at least 2 samples")
    if not np.all(np.isfinite(f)):
        raise ScoringError("transrate: non-finite features")
    eps = config.transrate_eps
    elapsed, per_class = [], []
    with timed(elapsed):
        z = f - f.mean(axis=0)
        total = coding_rate(z, eps)
        y = labels.labels
        terms = []
        for c, n_c in enumerate(labels.counts()):
            if n_c == 0:
                continue
            r_c = coding_rate(z if n_c == n else z[y == c], eps)
            per_class.append({"class": c, "n": int(n_c), "rate": r_c})
            terms.append(n_c / n * r_c)
        value = total - math.fsum(terms)
    return _finish("transrate", value, elapsed, per_class, [])
