"""Rocchio query expansion over nearest-neighbor feedback sets.

Each utterance's neighbors are ranked by baseline cosine score. The top
``top_n`` neighbors are treated as same-speaker (relevant) and every other
non-self utterance as different-speaker (non-relevant). The expanded query is

    q' = alpha * q + beta * mean(relevant) - gamma * mean(nonrelevant)

and trials are rescored with the cosine between the expanded query and the
other side of the trial. Expansion is single-pass: rankings always come from
the baseline scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .embeddings import EmbeddingSet
from .scoring import (
    NeighborRanking,
    PairScores,
    RankingTable,
    ScoreSet,
    TrialPair,
    resolve_trials,
    rowwise_cosine,
    score_all_pairs,
)

DIRECTIONS = ("one_sided", "bidirectional")
BIDI_RULES = ("mean_of_directions", "expanded_vs_expanded")

# Utterances expanded per vectorized chunk; bounds the (chunk, top_n, d) gather.
_CHUNK = 512


class DegenerateExpansionError(ValueError):
    """The expanded query vector is zero (or non-finite) and cannot be scored."""


@dataclass(frozen=True)
class QEParams:
    alpha: float = 1.0
    beta: float = 0.0
    gamma: float = 0.0
    top_n: int = 0
    direction: str = "one_sided"
    bidi_rule: str = "mean_of_directions"
    exclude_trial_partner: bool = False

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        if int(self.top_n) != self.top_n or self.top_n < 0:
            raise ValueError(f"top_n must be a non-negative integer, got {self.top_n}")
        object.__setattr__(self, "top_n", int(self.top_n))
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        if self.bidi_rule not in BIDI_RULES:
            raise ValueError(f"bidi_rule must be one of {BIDI_RULES}")

    @property
    def bidirectional(self) -> bool:
        return self.direction == "bidirectional"

    def label(self) -> str:
        parts = [f"a={self.alpha:g}", f"b={self.beta:g}", f"g={self.gamma:g}", f"n={self.top_n}"]
        if self.bidirectional:
            parts.append("bidi:" + ("mean" if self.bidi_rule == "mean_of_directions" else "exp-exp"))
        if self.exclude_trial_partner:
            parts.append("xpartner")
        return "qe(" + ",".join(parts) + ")"


@dataclass(frozen=True)
class FeedbackSets:
    relevant: tuple
    nonrelevant: tuple


def select_feedback_sets(ranking: NeighborRanking, top_n: int) -> FeedbackSets:
    if top_n < 0 or top_n > len(ranking):
        raise ValueError(f"top_n={top_n} outside [0, {len(ranking)}] (N-1 neighbors)")
    ids = ranking.ids
    return FeedbackSets(tuple(ids[:top_n]), tuple(ids[top_n:]))


def rocchio_expand(query, relevant, nonrelevant, params: QEParams) -> np.ndarray:
    """Expanded query vector; an empty feedback set contributes nothing."""
    query = np.asarray(query, dtype=np.float64)
    d = query.shape[0]
    out = params.alpha * query
    for vectors, weight, sign in ((relevant, params.beta, 1.0), (nonrelevant, params.gamma, -1.0)):
        vectors = np.asarray(vectors, dtype=np.float64).reshape(-1, d) if len(vectors) else None
        if vectors is None:
            continue
        if vectors.shape[1] != d:
            raise ValueError(f"dimension mismatch: {vectors.shape[1]} vs {d}")
        out = out + sign * (weight / vectors.shape[0]) * vectors.sum(axis=0)
    if not np.isfinite(out).all():
        raise DegenerateExpansionError("expanded query has non-finite components")
    return out


class QueryExpander:
    """Expands utterances of one embedding set against precomputed rankings.

    Expanded vectors are cached per utterance (or per utterance and excluded
    trial partner when ``exclude_trial_partner`` is set).
    """

    def __init__(self, emb: EmbeddingSet, rankings: RankingTable):
        if rankings.pairs.embeddings is not emb and rankings.pairs.ids != emb.ids:
            raise ValueError("rankings were computed from a different embedding set")
        self.embeddings = emb
        self.rankings = rankings
        self._total = emb.matrix.sum(axis=0)

    @classmethod
    def from_embeddings(cls, emb: EmbeddingSet, queries=None, threads: int = 1,
                        pairs: Optional[PairScores] = None) -> "QueryExpander":
        pairs = pairs if pairs is not None else score_all_pairs(emb, threads=threads)
        return cls(emb, RankingTable.build(pairs, queries=queries, threads=threads))

    def _check_top_n(self, params: QEParams) -> None:
        limit = len(self.embeddings) - (2 if params.exclude_trial_partner else 1)
        if params.top_n > limit:
            raise ValueError(
                f"top_n={params.top_n} exceeds the {limit} available neighbors (N={len(self.embeddings)})")

    def expand(self, queries: np.ndarray, params: QEParams,
               partners: Optional[np.ndarray] = None) -> np.ndarray:
        """Expanded vectors for utterance positions ``queries``.

        With ``partners`` given, each query's trial partner is removed from its
        neighbor list before the feedback sets are formed.
        """
        self._check_top_n(params)
        X = self.embeddings.matrix
        n_all = len(self.embeddings)
        queries = np.asarray(queries, dtype=np.intp)
        out = np.empty((len(queries), X.shape[1]))
        n = params.top_n
        for start in range(0, len(queries), _CHUNK):
            q = queries[start:start + _CHUNK]
            order = np.stack([self.rankings.positions(int(i)) for i in q]) if len(q) else None
            if partners is None:
                top = order[:, :n]
                excluded = X[q]
                n_rest = n_all - 1 - n
            else:
                p = partners[start:start + _CHUNK]
                head = order[:, :n + 1]
                keep = head != p[:, None]
                # Rows without the partner in the head drop their last entry instead.
                missing = keep.all(axis=1)
                keep[missing, -1] = False
                top = head[keep].reshape(len(q), n)
                # A self-trial has no separate partner to remove.
                distinct = (p != q)[:, None]
                excluded = X[q] + np.where(distinct, X[p], 0.0)
                n_rest = (n_all - 1 - n - distinct[:, 0]).astype(np.float64)[:, None]
            expanded = params.alpha * X[q]
            rel_sum = X[top].sum(axis=1) if n else np.zeros_like(expanded)
            if n:
                expanded = expanded + (params.beta / n) * rel_sum
            if np.any(n_rest > 0):
                non_sum = self._total - excluded - rel_sum
                coef = np.divide(params.gamma, n_rest, out=np.zeros_like(n_rest, dtype=np.float64),
                                 where=n_rest > 0) if np.ndim(n_rest) else params.gamma / n_rest
                expanded = expanded - coef * non_sum
            out[start:start + len(q)] = expanded
        norms = np.linalg.norm(out, axis=1)
        bad = np.flatnonzero(~np.isfinite(norms) | (norms == 0.0))
        if bad.size:
            uid = self.embeddings.ids[queries[bad[0]]]
            raise DegenerateExpansionError(
                f"expansion of {uid!r} yields a zero or non-finite vector "
                f"(alpha={params.alpha}, beta={params.beta}, gamma={params.gamma})")
        return out

    def score(self, trials: Sequence[TrialPair], params: QEParams) -> np.ndarray:
        trials = tuple(trials)
        if not trials:
            return np.empty(0)
        X = self.embeddings.matrix
        enroll, test = resolve_trials(self.embeddings, trials)
        enroll_exp = self._expanded(enroll, test, params)
        if not params.bidirectional:
            return rowwise_cosine(enroll_exp, X[test])
        test_exp = self._expanded(test, enroll, params)
        if params.bidi_rule == "expanded_vs_expanded":
            return rowwise_cosine(enroll_exp, test_exp)
        return 0.5 * (rowwise_cosine(enroll_exp, X[test]) + rowwise_cosine(test_exp, X[enroll]))

    def _expanded(self, queries, partners, params: QEParams) -> np.ndarray:
        if params.exclude_trial_partner:
            return self.expand(queries, params, partners)
        uniq, inverse = np.unique(queries, return_inverse=True)
        return self.expand(uniq, params)[inverse]


def qe_score_trial(emb: EmbeddingSet, rankings: RankingTable, trial: TrialPair,
                   params: QEParams) -> float:
    """One-sided QE score: the enroll side is expanded."""
    if params.bidirectional:
        raise ValueError("qe_score_trial is one-sided; use bidirectional_qe_score")
    return float(QueryExpander(emb, rankings).score([trial], params)[0])


def bidirectional_qe_score(emb: EmbeddingSet, rankings: RankingTable, trial: TrialPair,
                           params: QEParams) -> float:
    if not params.bidirectional:
        raise ValueError("params.direction must be 'bidirectional'")
    return float(QueryExpander(emb, rankings).score([trial], params)[0])


def qe_score_all(emb: EmbeddingSet, trials: Sequence[TrialPair], params: QEParams,
                 rankings: Optional[RankingTable] = None, threads: int = 1) -> ScoreSet:
    """QE scores for a trial list; rankings are computed once if not supplied."""
    trials = tuple(trials)
    if not trials:
        return ScoreSet(params.label(), (), np.empty(0))
    if rankings is None:
        enroll, test = resolve_trials(emb, trials)
        queries = np.concatenate([enroll, test]) if params.bidirectional else enroll
        expander = QueryExpander.from_embeddings(emb, queries=queries, threads=threads)
    else:
        expander = QueryExpander(emb, rankings)
    return ScoreSet(params.label(), trials, expander.score(trials, params))
