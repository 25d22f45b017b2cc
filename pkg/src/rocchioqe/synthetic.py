"""Seeded synthetic speaker populations and trial lists.

Random stream: numpy's ``PCG64`` bit generator (PCG XSL-RR 128/64, seeded
through ``SeedSequence``) read as raw 64-bit words. Uniform doubles take the
top 53 bits of a word; normals come from the Box-Muller transform of pairs
of uniforms. No library normal sampler is involved, so the stream depends
only on the seed.

Draw order for ``generate``: all speaker means (speaker-major, then
dimension), then all utterance noise (speaker, utterance, dimension).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddingSet
from .scoring import Label, TrialPair

GENERATOR = "numpy.PCG64/SeedSequence raw64; uniform=top53bits; normal=Box-Muller"

_TWO_NEG_53 = 1.0 / (1 << 53)


class CohortError(ValueError):
    pass


class Stream:
    """Documented uniform/normal draws on top of a raw PCG64 word stream."""

    def __init__(self, seed: int):
        if not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self._bits = np.random.PCG64(int(seed))

    def raw(self, size: int) -> np.ndarray:
        return self._bits.random_raw(size)

    def uniform(self, size: int) -> np.ndarray:
        """Doubles in [0, 1)."""
        return (self.raw(size) >> np.uint64(11)).astype(np.float64) * _TWO_NEG_53

    def normal(self, size: int) -> np.ndarray:
        pairs = (size + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))  # 1 - u in (0, 1]
        angle = 2.0 * np.pi * u[:, 1]
        out = np.empty((pairs, 2))
        out[:, 0] = radius * np.cos(angle)
        out[:, 1] = radius * np.sin(angle)
        return out.reshape(-1)[:size]

    def below(self, bound: int) -> int:
        """Unbiased integer in [0, bound) by rejection on 64-bit words."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = (2**64 // bound) * bound
        while True:
            word = int(self.raw(1)[0])
            if word < limit:
                return word % bound

    def sample(self, population: int, k: int) -> list:
        """``k`` distinct indices of ``range(population)`` (partial Fisher-Yates)."""
        if k > population:
            raise ValueError(f"cannot sample {k} of {population}")
        swapped: dict = {}
        out = []
        for i in range(k):
            j = i + self.below(population - i)
            out.append(swapped.get(j, j))
            swapped[j] = swapped.get(i, i)
        return out


@dataclass(frozen=True)
class CohortSpec:
    n_speakers: int = 50
    utts_per_speaker: int = 10
    dimension: int = 64
    between_std: float = 1.0
    within_std: float = 0.5
    seed: int = 1

    def __post_init__(self):
        for name in ("n_speakers", "utts_per_speaker", "dimension"):
            if getattr(self, name) < 1:
                raise CohortError(f"{name} must be positive")
        if not self.between_std > 0 or not self.within_std > 0:
            raise CohortError("between_std and within_std must be positive")
        if self.n_speakers * self.utts_per_speaker < 2:
            raise CohortError("a cohort needs at least two utterances")
        if not 0 <= self.seed < 2**64:
            raise CohortError("seed must be an unsigned 64-bit integer")


def generate(spec: CohortSpec) -> EmbeddingSet:
    stream = Stream(spec.seed)
    d = spec.dimension
    means = spec.between_std * stream.normal(spec.n_speakers * d).reshape(spec.n_speakers, d)
    n_utts = spec.n_speakers * spec.utts_per_speaker
    noise = spec.within_std * stream.normal(n_utts * d).reshape(
        spec.n_speakers, spec.utts_per_speaker, d)
    vectors = (means[:, None, :] + noise).reshape(n_utts, d)
    ids, speakers = [], []
    for i in range(spec.n_speakers):
        for j in range(spec.utts_per_speaker):
            ids.append(f"spk{i}_utt{j}")
            speakers.append(f"spk{i}")
    return EmbeddingSet(tuple(ids), vectors, tuple(speakers))


def _row_starts(n: int) -> np.ndarray:
    """Offset of the first pair (i, i+1) of each row in row-major i < j order."""
    counts = np.arange(n - 1, -1, -1)
    return np.concatenate([[0], np.cumsum(counts)[:-1]])


def _pair_at(k: int, starts: np.ndarray) -> tuple:
    i = int(np.searchsorted(starts, k, side="right") - 1)
    return i, i + 1 + (k - int(starts[i]))


def make_trials(emb: EmbeddingSet, n_target: int, n_nontarget: int, seed: int) -> list:
    """Sample same-speaker and cross-speaker pairs without replacement.

    Targets come first, then nontargets; within a pair the lower stable index
    is the enroll side.
    """
    if emb.speakers is None:
        raise CohortError("trial generation needs speaker labels")
    by_speaker: dict = {}
    for pos, spk in enumerate(emb.speakers):
        by_speaker.setdefault(spk, []).append(pos)
    groups = list(by_speaker.values())
    group_pairs = [len(g) * (len(g) - 1) // 2 for g in groups]
    n_same = sum(group_pairs)
    n = len(emb)
    n_cross = n * (n - 1) // 2 - n_same
    if n_target > n_same:
        raise CohortError(
            f"requested {n_target} target trials but only {n_same} same-speaker pairs exist")
    if n_nontarget > n_cross:
        raise CohortError(
            f"requested {n_nontarget} nontarget trials but only {n_cross} cross-speaker pairs exist")

    stream = Stream(seed)
    trials = []
    offsets = np.cumsum([0] + group_pairs)
    for k in stream.sample(n_same, n_target):
        g = int(np.searchsorted(offsets, k, side="right") - 1)
        a, b = _pair_at(k - int(offsets[g]), _row_starts(len(groups[g])))
        trials.append(TrialPair(emb.ids[groups[g][a]], emb.ids[groups[g][b]], Label.TARGET))

    speakers = emb.speakers
    if n_nontarget <= n_cross // 2:
        # Sparse request: rejection over all unordered pairs.
        starts = _row_starts(n)
        total = n * (n - 1) // 2
        seen = set()
        while len(seen) < n_nontarget:
            i, j = _pair_at(stream.below(total), starts)
            if speakers[i] == speakers[j] or (i, j) in seen:
                continue
            seen.add((i, j))
            trials.append(TrialPair(emb.ids[i], emb.ids[j], Label.NONTARGET))
    else:
        cross = [(i, j) for i in range(n) for j in range(i + 1, n) if speakers[i] != speakers[j]]
        for k in stream.sample(len(cross), n_nontarget):
            i, j = cross[k]
            trials.append(TrialPair(emb.ids[i], emb.ids[j], Label.NONTARGET))
    return trials
