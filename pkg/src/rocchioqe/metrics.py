"""Detection error trade-off, equal error rate and minimum detection cost.

A trial is accepted iff ``score >= threshold``. Rates are evaluated at every
distinct score plus the two sentinels -inf (accept all) and +inf (reject all).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .scoring import Label, ScoreSet


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class DcfParams:
    c_miss: float = 1.0
    c_fa: float = 1.0
    p_target: float = 0.05

    def __post_init__(self):
        if not self.c_miss > 0 or not self.c_fa > 0:
            raise ValueError("c_miss and c_fa must be positive")
        if not 0.0 < self.p_target < 1.0:
            raise ValueError("p_target must lie in (0, 1)")

    @property
    def normalizer(self) -> float:
        return min(self.c_miss * self.p_target, self.c_fa * (1.0 - self.p_target))


@dataclass(frozen=True, eq=False)
class DetCurve:
    thresholds: np.ndarray
    p_miss: np.ndarray
    p_fa: np.ndarray
    n_target: int
    n_nontarget: int

    def __len__(self) -> int:
        return len(self.thresholds)

    def points(self) -> list:
        return list(zip(self.thresholds.tolist(), self.p_miss.tolist(), self.p_fa.tolist()))


@dataclass(frozen=True)
class EvalResult:
    system: str
    eer: float
    eer_threshold: float
    min_dcf: float
    min_dcf_unnormalized: float
    min_dcf_threshold: float
    n_target: int
    n_nontarget: int
    dcf_params: DcfParams

    @property
    def eer_percent(self) -> float:
        return 100.0 * self.eer

    def report(self) -> dict:
        return {
            "system": self.system,
            "n_target": self.n_target,
            "n_nontarget": self.n_nontarget,
            "eer_percent": self.eer_percent,
            "eer_threshold": _json_float(self.eer_threshold),
            "min_dcf_normalized": self.min_dcf,
            "min_dcf_unnormalized": self.min_dcf_unnormalized,
            "min_dcf_threshold": _json_float(self.min_dcf_threshold),
            "dcf_params": asdict(self.dcf_params),
        }


def _json_float(x: float) -> Optional[float]:
    # +/-inf thresholds mean "reject all" / "accept all"; JSON has no infinity.
    return float(x) if np.isfinite(x) else None


def split_scores(scores: ScoreSet) -> tuple:
    labels = scores.labels()
    if any(lab is Label.UNKNOWN for lab in labels):
        k = next(k for k, lab in enumerate(labels) if lab is Label.UNKNOWN)
        raise MetricError(f"trial {k} has an unknown label; evaluation needs labeled trials")
    mask = scores.target_mask()
    tar, non = scores.scores[mask], scores.scores[~mask]
    if tar.size == 0 or non.size == 0:
        missing = "target" if tar.size == 0 else "nontarget"
        raise MetricError(f"no {missing} trials; evaluation needs both classes")
    return tar, non


def det_curve_from_arrays(tar, non) -> DetCurve:
    tar = np.sort(np.asarray(tar, dtype=np.float64))
    non = np.sort(np.asarray(non, dtype=np.float64))
    if tar.size == 0 or non.size == 0:
        raise MetricError("need at least one target and one nontarget score")
    distinct = np.unique(np.concatenate([tar, non]))
    thresholds = np.concatenate([[-np.inf], distinct, [np.inf]])
    misses = np.searchsorted(tar, thresholds, side="left")       # tar < t
    false_alarms = non.size - np.searchsorted(non, thresholds, side="left")  # non >= t
    misses[-1] = tar.size
    false_alarms[-1] = 0
    return DetCurve(thresholds, misses / tar.size, false_alarms / non.size,
                    int(tar.size), int(non.size))


def det_curve(scores: ScoreSet) -> DetCurve:
    return det_curve_from_arrays(*split_scores(scores))


def eer(curve: DetCurve) -> tuple:
    """EER and its threshold, interpolating linearly where p_miss - p_fa changes sign."""
    diff = curve.p_miss - curve.p_fa
    exact = np.flatnonzero(diff == 0.0)
    if exact.size:
        k = exact[0]
        return float(curve.p_miss[k]), float(curve.thresholds[k])
    k = int(np.flatnonzero(diff > 0.0)[0]) - 1
    frac = -diff[k] / (diff[k + 1] - diff[k])
    rate = curve.p_miss[k] + frac * (curve.p_miss[k + 1] - curve.p_miss[k])
    lo, hi = curve.thresholds[k], curve.thresholds[k + 1]
    if not np.isfinite(lo):
        threshold = hi
    elif not np.isfinite(hi):
        threshold = lo
    else:
        threshold = lo + frac * (hi - lo)
    return float(rate), float(threshold)


def dcf_costs(curve: DetCurve, params: DcfParams) -> np.ndarray:
    return (params.c_miss * params.p_target * curve.p_miss
            + params.c_fa * (1.0 - params.p_target) * curve.p_fa)


def min_dcf(curve: DetCurve, params: DcfParams = DcfParams()) -> tuple:
    """Normalized minimum DCF and its threshold (smallest threshold on ties)."""
    costs = dcf_costs(curve, params)
    k = int(np.argmin(costs))
    return float(costs[k] / params.normalizer), float(curve.thresholds[k])


def evaluate(scores: ScoreSet, params: DcfParams = DcfParams()) -> EvalResult:
    curve = det_curve(scores)
    rate, eer_thr = eer(curve)
    costs = dcf_costs(curve, params)
    k = int(np.argmin(costs))
    return EvalResult(
        system=scores.system,
        eer=rate,
        eer_threshold=eer_thr,
        min_dcf=float(costs[k] / params.normalizer),
        min_dcf_unnormalized=float(costs[k]),
        min_dcf_threshold=float(curve.thresholds[k]),
        n_target=curve.n_target,
        n_nontarget=curve.n_nontarget,
        dcf_params=params,
    )
