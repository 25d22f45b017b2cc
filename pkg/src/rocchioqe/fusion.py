"""Linear fusion of two scoring systems over a shared trial list."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scoring import Label, ScoreSet

NORMALIZATIONS = ("none", "z_norm", "min_max")
_ALIASES = {"none": "none", "z": "z_norm", "z_norm": "z_norm", "znorm": "z_norm",
            "minmax": "min_max", "min_max": "min_max"}


class FusionError(ValueError):
    pass


def normalization_mode(name: str) -> str:
    try:
        return _ALIASES[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown normalization {name!r}; choose none, z or minmax") from None


@dataclass(frozen=True)
class FusionParams:
    lam: float = 0.5
    normalization: str = "none"

    def __post_init__(self):
        if not math.isfinite(self.lam) or not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        object.__setattr__(self, "normalization", normalization_mode(self.normalization))


def normalize_scores(scores: ScoreSet, mode: str) -> ScoreSet:
    """Rescale one system's scores; ``z_norm`` uses the population std."""
    mode = normalization_mode(mode)
    s = scores.scores
    if mode == "none":
        return scores
    if s.size < 2:
        raise FusionError(f"{mode} needs at least two scores in system {scores.system!r}")
    if mode == "z_norm":
        scale, shift = s.std(), s.mean()
    else:
        scale, shift = s.max() - s.min(), s.min()
    # Identical scores can still leave a rounding-level std; variance can underflow.
    if np.all(s == s[0]) or not scale > 0 or not np.isfinite(scale):
        raise FusionError(
            f"{mode} needs at least two distinct scores in system {scores.system!r}")
    out = (s - shift) / scale
    return scores.with_scores(out, f"{mode}({scores.system})")


def check_aligned(s1: ScoreSet, s2: ScoreSet) -> None:
    for k, (a, b) in enumerate(zip(s1.trials, s2.trials)):
        if (a.enroll_id, a.test_id) != (b.enroll_id, b.test_id):
            raise FusionError(
                f"trial lists diverge at trial {k}: "
                f"{a.enroll_id} {a.test_id} vs {b.enroll_id} {b.test_id}")
    if len(s1) != len(s2):
        raise FusionError(
            f"trial lists diverge at trial {min(len(s1), len(s2))}: "
            f"{len(s1)} vs {len(s2)} trials")


def fuse(s1: ScoreSet, s2: ScoreSet, params: FusionParams) -> ScoreSet:
    """Per trial ``lam * s1 + (1 - lam) * s2`` after optional normalization.

    Labels are taken from ``s1`` (falling back to ``s2`` where ``s1`` has none).
    """
    check_aligned(s1, s2)
    a = normalize_scores(s1, params.normalization)
    b = normalize_scores(s2, params.normalization)
    lam = params.lam
    if lam == 1.0:
        fused = a.scores.copy()
    elif lam == 0.0:
        fused = b.scores.copy()
    else:
        fused = lam * a.scores + (1.0 - lam) * b.scores
    trials = tuple(t1 if t1.label is not Label.UNKNOWN else t2
                   for t1, t2 in zip(s1.trials, s2.trials))
    system = f"fuse({s1.system},{s2.system},lambda={lam:g},norm={params.normalization})"
    return ScoreSet(system, trials, fused)
