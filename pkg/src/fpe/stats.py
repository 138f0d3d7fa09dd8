"""Statistical core: ROC/AUC, bootstrap and Wilson intervals, entropy.

Everything here is deterministic. Bootstrap resamples are generated
counter-style, one independent stream per resample index, so results do
not depend on execution order or worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DegenerateLabelsError, ResamplingFailureError

_PROB_TOL = 1e-6
_MAX_ATTEMPTS = 100  # per resample


@dataclass(frozen=True)
class PredictionRecord:
    """Two-class softmax output for one image."""

    image_id: str
    prob_nonref: float
    prob_ref: float

    def __post_init__(self):
        if not self.image_id:
            raise ContractError("image_id must be nonempty")
        for name, p in (("prob_nonref", self.prob_nonref), ("prob_ref", self.prob_ref)):
            if not 0.0 <= p <= 1.0:
                raise ContractError(f"{name} must be in [0, 1], got {p}")
        total = self.prob_nonref + self.prob_ref
        if abs(total - 1.0) > _PROB_TOL:
            raise ContractError(f"probabilities must sum to 1 +- 1e-6, got {total}")


@dataclass(frozen=True)
class RocCurve:
    """Threshold sweep from (0,0) to (1,1); fpr/tpr are non-decreasing."""

    points: tuple[tuple[float, float], ...]
    thresholds: tuple[float, ...]

    def __post_init__(self):
        if len(self.points) != len(self.thresholds):
            raise ContractError("points and thresholds must have equal length")
        if len(self.points) < 2:
            raise ContractError("a curve needs at least two points")
        if self.points[0] != (0.0, 0.0) or self.points[-1] != (1.0, 1.0):
            raise ContractError("curve must span (0,0) to (1,1)")


@dataclass(frozen=True)
class MetricReport:
    """A named metric value with confidence bounds and class counts.

    not_applicable marks a metric whose defining class is absent; its
    value and bounds are zeroed placeholders in that case.
    """

    name: str
    value: float
    ci_low: float
    ci_high: float
    n_pos: int
    n_neg: int
    method: str
    not_applicable: bool = False

    def __post_init__(self):
        if self.method not in ("bootstrap", "wilson", "point"):
            raise ContractError(f"unknown method {self.method!r}")
        if self.n_pos < 0 or self.n_neg < 0:
            raise ContractError("class counts must be non-negative")
        if self.ci_low > self.ci_high:
            raise ContractError(f"ci_low {self.ci_low} exceeds ci_high {self.ci_high}")

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
            "method": self.method,
            "not_applicable": self.not_applicable,
        }


@dataclass(frozen=True)
class BootstrapConfig:
    """Resample count, seed and percentile pair for bootstrap CIs."""

    n_resamples: int = 1000
    seed: int = 0
    percentiles: tuple[float, float] = (2.5, 97.5)

    def __post_init__(self):
        if self.n_resamples < 1:
            raise ContractError(f"n_resamples must be >= 1, got {self.n_resamples}")
        if self.seed < 0:
            raise ContractError(f"seed must be a non-negative integer, got {self.seed}")
        lo, hi = self.percentiles
        if not 0 <= lo < hi <= 100:
            raise ContractError(f"percentiles must satisfy 0 <= lo < hi <= 100, got {self.percentiles}")


def _check_scores_labels(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.ndim != 1 or y.ndim != 1 or s.shape != y.shape:
        raise ContractError("scores and labels must be 1-d and equal length")
    if s.size == 0:
        raise ContractError("scores must be nonempty")
    if not np.all((y == 0) | (y == 1)):
        raise ContractError("labels must be 0 or 1")
    y = y.astype(np.int64)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise DegenerateLabelsError("both classes are required")
    return s, y


def roc_curve(scores, labels) -> RocCurve:
    """Threshold sweep over distinct scores, descending, ties grouped.

    Point k is the (fpr, tpr) reached by predicting positive at
    score >= thresholds[k]; the leading threshold is +inf so the curve
    starts at (0, 0) and ends at (1, 1).
    """
    s, y = _check_scores_labels(scores, labels)
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)

    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    tp_cum = np.cumsum(y_sorted)
    fp_cum = np.cumsum(1 - y_sorted)
    # last index of each tie group
    distinct = np.nonzero(np.diff(s_sorted))[0]
    last = np.concatenate([distinct, [s_sorted.size - 1]])

    points = [(0.0, 0.0)]
    thresholds = [math.inf]
    for i in last:
        points.append((float(fp_cum[i] / n_neg), float(tp_cum[i] / n_pos)))
        thresholds.append(float(s_sorted[i]))
    return RocCurve(points=tuple(points), thresholds=tuple(thresholds))


def _auc_core(s: np.ndarray, y: np.ndarray) -> float:
    """Trapezoidal area under the tie-grouped sweep of (s, y)."""
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    tp_cum = np.cumsum(y_sorted)
    fp_cum = np.cumsum(1 - y_sorted)
    distinct = np.nonzero(np.diff(s_sorted))[0]
    last = np.concatenate([distinct, [s_sorted.size - 1]])
    tpr = np.concatenate([[0.0], tp_cum[last] / n_pos])
    fpr = np.concatenate([[0.0], fp_cum[last] / n_neg])
    return float(np.trapezoid(tpr, fpr))


def auc(scores, labels) -> float:
    """Area under the ROC curve; equals the rank statistic
    P(score_pos > score_neg) + 0.5 * P(tie)."""
    s, y = _check_scores_labels(scores, labels)
    return _auc_core(s, y)


def _resample_indices(seed: int, resample: int, attempt: int, n: int) -> np.ndarray:
    seq = np.random.SeedSequence(entropy=seed, spawn_key=(resample, attempt))
    rng = np.random.Generator(np.random.PCG64(seq))
    return rng.integers(0, n, size=n)


def _one_resample_auc(s: np.ndarray, y: np.ndarray, seed: int, r: int) -> float:
    n = s.size
    for attempt in range(_MAX_ATTEMPTS):
        idx = _resample_indices(seed, r, attempt, n)
        y_r = y[idx]
        total = int(y_r.sum())
        if 0 < total < n:
            return _auc_core(s[idx], y_r)
    raise ResamplingFailureError(
        f"no class-complete resample for index {r} within {_MAX_ATTEMPTS} attempts "
        f"(budget 100 per resample, 100*n_resamples overall)"
    )


def bootstrap_auc_ci(scores, labels, config: BootstrapConfig | None = None,
                     workers: int = 1) -> MetricReport:
    """Percentile bootstrap CI for the AUC.

    Pairs are resampled with replacement at the original size; the
    resample for index r is a pure function of (seed, r), so any worker
    count yields the identical CI. Single-class resamples are redrawn
    up to 100 times before the whole computation fails.
    """
    if config is None:
        config = BootstrapConfig()
    if workers < 1:
        raise ContractError(f"workers must be >= 1, got {workers}")
    s, y = _check_scores_labels(scores, labels)
    value = _auc_core(s, y)

    if workers == 1:
        aucs = [_one_resample_auc(s, y, config.seed, r)
                for r in range(config.n_resamples)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            aucs = list(pool.map(lambda r: _one_resample_auc(s, y, config.seed, r),
                                 range(config.n_resamples)))

    lo, hi = np.percentile(np.asarray(aucs, dtype=np.float64), config.percentiles)
    n_pos = int(y.sum())
    return MetricReport(
        name="auc",
        value=value,
        ci_low=float(lo),
        ci_high=float(hi),
        n_pos=n_pos,
        n_neg=int(y.size - n_pos),
        method="bootstrap",
    )


def wilson_interval(successes: int, trials: int, z: float = 1.96,
                    continuity: bool = False) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion, clamped to [0, 1].

    The plain interval is the default; continuity=True applies the
    continuity-corrected variant. Degenerate proportions keep their
    algebraically exact bound: 0 successes pins the lower bound to 0,
    all successes pins the upper bound to 1.
    """
    if trials < 1:
        raise ContractError(f"trials must be >= 1, got {trials}")
    if not 0 <= successes <= trials:
        raise ContractError(f"successes must be in [0, {trials}], got {successes}")
    if z <= 0:
        raise ContractError(f"z must be positive, got {z}")

    n = float(trials)
    p = successes / n
    z2 = z * z

    if continuity:
        if successes == 0:
            low = 0.0
        else:
            low = (2 * n * p + z2
                   - (z * math.sqrt(z2 - 1 / n + 4 * n * p * (1 - p) + (4 * p - 2)) + 1)
                   ) / (2 * (n + z2))
        if successes == trials:
            high = 1.0
        else:
            high = (2 * n * p + z2
                    + (z * math.sqrt(z2 - 1 / n + 4 * n * p * (1 - p) - (4 * p - 2)) + 1)
                    ) / (2 * (n + z2))
    else:
        center = p + z2 / (2 * n)
        half = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n))
        denom = 1 + z2 / n
        low = 0.0 if successes == 0 else (center - half) / denom
        high = 1.0 if successes == trials else (center + half) / denom

    return max(0.0, min(1.0, low)), max(0.0, min(1.0, high))


def sens_spec_argmax(predictions: list[PredictionRecord], labels,
                     z: float = 1.96) -> tuple[MetricReport, MetricReport]:
    """Sensitivity and specificity of the argmax decision with Wilson CIs.

    The predicted class is argmax(prob_nonref, prob_ref) with exact ties
    counted as referable. When the ground truth lacks a class, the
    affected metric is returned with not_applicable=True instead of a
    value.
    """
    y = np.asarray(labels)
    if y.ndim != 1 or len(predictions) != y.size:
        raise ContractError("predictions and labels must align")
    if y.size == 0:
        raise ContractError("predictions must be nonempty")
    if not np.all((y == 0) | (y == 1)):
        raise ContractError("labels must be 0 or 1")
    y = y.astype(np.int64)

    predicted = np.array(
        [1 if p.prob_ref >= p.prob_nonref else 0 for p in predictions], dtype=np.int64
    )
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    tp = int(((predicted == 1) & (y == 1)).sum())
    tn = int(((predicted == 0) & (y == 0)).sum())

    def report(name: str, hits: int, total: int) -> MetricReport:
        if total == 0:
            return MetricReport(name=name, value=0.0, ci_low=0.0, ci_high=0.0,
                                n_pos=n_pos, n_neg=n_neg, method="wilson",
                                not_applicable=True)
        low, high = wilson_interval(hits, total, z)
        return MetricReport(name=name, value=hits / total, ci_low=low, ci_high=high,
                            n_pos=n_pos, n_neg=n_neg, method="wilson")

    return report("sensitivity", tp, n_pos), report("specificity", tn, n_neg)


def prediction_entropy(p: PredictionRecord) -> float:
    """Base-2 entropy of the two-class output; 1 at (0.5, 0.5), 0 at certainty."""
    total = 0.0
    for q in (p.prob_nonref, p.prob_ref):
        if q > 0.0:
            total -= q * math.log2(q)
    return total
