"""Cosine scoring, the all-pairs score structure and neighbor rankings."""

from __future__ import annotations

import enum
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .embeddings import EmbeddingError, EmbeddingSet

# Rows per block in the all-pairs product. Fixed so every pair is produced by
# the same kernel call regardless of how blocks are spread over workers.
BLOCK_ROWS = 256


class Label(enum.Enum):
    TARGET = "target"
    NONTARGET = "nontarget"
    UNKNOWN = "unknown"

    @classmethod
    def parse(cls, token) -> "Label":
        token = str(token).strip().lower()
        if token in ("1", "target", "tgt"):
            return cls.TARGET
        if token in ("0", "nontarget", "non", "imp"):
            return cls.NONTARGET
        if token in ("", "unknown", "-", "?"):
            return cls.UNKNOWN
        raise ValueError(f"unrecognized trial label {token!r}")

    def as_bit(self) -> str:
        return {Label.TARGET: "1", Label.NONTARGET: "0"}.get(self, "")


class DegenerateTrialWarning(UserWarning):
    """A trial compares an utterance with itself."""


@dataclass(frozen=True)
class TrialPair:
    enroll_id: str
    test_id: str
    label: Label = Label.UNKNOWN

    def swapped(self) -> "TrialPair":
        return TrialPair(self.test_id, self.enroll_id, self.label)


@dataclass(frozen=True, eq=False)
class ScoreSet:
    """Scores of one system aligned to a trial list."""

    system: str
    trials: tuple
    scores: np.ndarray

    def __post_init__(self):
        scores = np.array(self.scores, dtype=np.float64, copy=True).reshape(-1)
        if scores.size != len(self.trials):
            raise ValueError(f"{scores.size} scores for {len(self.trials)} trials")
        if not np.isfinite(scores).all():
            bad = int(np.flatnonzero(~np.isfinite(scores))[0])
            raise ValueError(f"non-finite score for trial {bad}")
        scores.setflags(write=False)
        object.__setattr__(self, "trials", tuple(self.trials))
        object.__setattr__(self, "scores", scores)

    def __len__(self) -> int:
        return len(self.trials)

    def labels(self) -> list:
        return [t.label for t in self.trials]

    def target_mask(self) -> np.ndarray:
        return np.array([t.label is Label.TARGET for t in self.trials], dtype=bool)

    def with_scores(self, scores, system: Optional[str] = None) -> "ScoreSet":
        return ScoreSet(self.system if system is None else system, self.trials, scores)


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def rowwise_cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosine between corresponding rows of two equally-shaped matrices."""
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.sqrt(np.einsum("ij,ij->i", a, a))
    nb = np.sqrt(np.einsum("ij,ij->i", b, b))
    if np.any(na == 0.0) or np.any(nb == 0.0):
        raise ValueError("cosine undefined for a zero vector")
    dots = np.einsum("ij,ij->i", a, b)
    return np.clip(dots / (na * nb), -1.0, 1.0)


def _unit_rows(emb: EmbeddingSet) -> np.ndarray:
    norms = np.linalg.norm(emb.matrix, axis=1)
    bad = np.flatnonzero(norms == 0.0)
    if bad.size:
        raise EmbeddingError(f"zero vector: {emb.ids[bad[0]]!r}")
    return emb.matrix / norms[:, None]


class PairScores:
    """Symmetric cosine scores for every pair of utterances in a set.

    Each unordered pair is computed once (from the row block holding the
    smaller index) and mirrored, so ``score(i, j) == score(j, i)`` holds
    bit-for-bit. The diagonal carries no score; it is held as NaN.
    """

    def __init__(self, emb: EmbeddingSet, matrix: np.ndarray):
        self.embeddings = emb
        self._matrix = matrix
        self._matrix.setflags(write=False)

    @property
    def ids(self) -> tuple:
        return self.embeddings.ids

    def __len__(self) -> int:
        return len(self.embeddings)

    @property
    def n_pairs(self) -> int:
        n = len(self)
        return n * (n - 1) // 2

    def score(self, a, b) -> float:
        i, j = self._pos(a), self._pos(b)
        if i == j:
            raise KeyError("self-pairs are not stored")
        return float(self._matrix[i, j])

    def row(self, a) -> np.ndarray:
        """Scores of ``a`` against every utterance; NaN at its own position."""
        return self._matrix[self._pos(a)]

    def dense(self) -> np.ndarray:
        return self._matrix

    def upper_triangle(self) -> np.ndarray:
        return self._matrix[np.triu_indices(len(self), k=1)]

    def _pos(self, a) -> int:
        if isinstance(a, (int, np.integer)):
            if not 0 <= a < len(self):
                raise IndexError(a)
            return int(a)
        return self.embeddings.index_of(a)


class LazyPairScores(PairScores):
    """All-pairs view that computes one row at a time instead of storing N^2."""

    def __init__(self, emb: EmbeddingSet):
        self.embeddings = emb
        self._unit = _unit_rows(emb)

    def score(self, a, b) -> float:
        i, j = self._pos(a), self._pos(b)
        if i == j:
            raise KeyError("self-pairs are not stored")
        lo, hi = min(i, j), max(i, j)
        return float(self.row(lo)[hi])

    def row(self, a) -> np.ndarray:
        i = self._pos(a)
        out = np.clip(self._unit @ self._unit[i], -1.0, 1.0)
        out[i] = np.nan
        return out

    def dense(self) -> np.ndarray:
        return np.vstack([self.row(i) for i in range(len(self))])


def _fill_block(unit: np.ndarray, out: np.ndarray, start: int, stop: int) -> None:
    block = np.clip(unit[start:stop] @ unit[start:].T, -1.0, 1.0)
    for k in range(stop - start):
        i = start + k
        out[i, i + 1:] = block[k, k + 1:]


def score_all_pairs(emb: EmbeddingSet, threads: int = 1) -> PairScores:
    """Cosine score for every unordered pair of distinct utterances.

    Work is split into fixed row blocks of the upper triangle; ``threads``
    only changes how blocks are scheduled, never the arithmetic.
    """
    n = len(emb)
    if n < 2:
        raise EmbeddingError(f"all-pairs scoring needs N >= 2, got {n}")
    unit = _unit_rows(emb)
    out = np.zeros((n, n), dtype=np.float64)
    starts = range(0, n, BLOCK_ROWS)
    if threads <= 1:
        for s in starts:
            _fill_block(unit, out, s, min(s + BLOCK_ROWS, n))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda s: _fill_block(unit, out, s, min(s + BLOCK_ROWS, n)), starts))
    upper = np.triu(out, k=1)
    out = upper + upper.T
    np.fill_diagonal(out, np.nan)
    return PairScores(emb, out)


@dataclass(frozen=True)
class NeighborRanking:
    query_id: str
    neighbors: tuple  # of (neighbor_id, score), best first

    def __len__(self) -> int:
        return len(self.neighbors)

    @property
    def ids(self) -> list:
        return [nid for nid, _ in self.neighbors]

    @property
    def scores(self) -> list:
        return [s for _, s in self.neighbors]


class RankingTable:
    """Neighbor order for a set of query utterances, computed once.

    ``order[k]`` lists the positions of all other utterances sorted by score
    descending, ties broken by ascending id, for the k-th query.
    """

    def __init__(self, pairs: PairScores, queries: np.ndarray, order: np.ndarray):
        self.pairs = pairs
        self.queries = queries
        self.order = order
        self._slot = {int(q): k for k, q in enumerate(queries)}

    @classmethod
    def build(cls, pairs: PairScores, queries=None, threads: int = 1) -> "RankingTable":
        """Rank neighbors for ``queries`` (positions; all utterances if None)."""
        n = len(pairs)
        if queries is None:
            queries = np.arange(n, dtype=np.intp)
        else:
            queries = np.unique(np.asarray(queries, dtype=np.intp))
        ids = pairs.ids
        # Permute columns into id order so a stable sort breaks ties by id.
        by_id = np.array(sorted(range(n), key=ids.__getitem__), dtype=np.intp)
        order = np.empty((len(queries), n - 1), dtype=np.int32 if n < 2**31 else np.int64)

        def fill(start: int, stop: int) -> None:
            for k in range(start, stop):
                keys = -pairs.row(int(queries[k]))[by_id]
                keys[np.isnan(keys)] = np.inf  # self goes last
                order[k] = by_id[np.argsort(keys, kind="stable")][:-1]

        starts = range(0, len(queries), BLOCK_ROWS)
        if threads <= 1:
            for s in starts:
                fill(s, min(s + BLOCK_ROWS, len(queries)))
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(lambda s: fill(s, min(s + BLOCK_ROWS, len(queries))), starts))
        return cls(pairs, queries, order)

    def __contains__(self, query) -> bool:
        return self.pairs._pos(query) in self._slot

    def positions(self, query) -> np.ndarray:
        i = self.pairs._pos(query)
        try:
            return self.order[self._slot[i]]
        except KeyError:
            raise KeyError(f"no ranking computed for {self.pairs.ids[i]!r}") from None

    def ranking(self, query) -> NeighborRanking:
        i = self.pairs._pos(query)
        row = self.pairs.row(i)
        ids = self.pairs.ids
        return NeighborRanking(
            ids[i], tuple((ids[j], float(row[j])) for j in self.positions(i)))


def rank_neighbors(pairs: PairScores, query_id: str) -> NeighborRanking:
    """Non-self neighbors of ``query_id``, best score first, ties by id."""
    i = pairs.embeddings.index_of(query_id)
    row = pairs.row(i)
    ids = pairs.ids
    others = [j for j in range(len(pairs)) if j != i]
    others.sort(key=lambda j: (-row[j], ids[j]))
    return NeighborRanking(ids[i], tuple((ids[j], float(row[j])) for j in others))


def resolve_trials(emb: EmbeddingSet, trials: Sequence[TrialPair]) -> tuple:
    """Positions of enroll and test utterances; warns on self-trials."""
    enroll = np.empty(len(trials), dtype=np.intp)
    test = np.empty(len(trials), dtype=np.intp)
    index = emb.id_index
    for k, t in enumerate(trials):
        for side, uid, dest in (("enroll", t.enroll_id, enroll), ("test", t.test_id, test)):
            pos = index.get(uid)
            if pos is None:
                raise KeyError(f"trial {k}: unknown {side} id {uid!r}")
            dest[k] = pos
    selfs = np.flatnonzero(enroll == test)
    if selfs.size:
        warnings.warn(
            f"{selfs.size} degenerate self-trial(s), first at trial {selfs[0]} "
            f"({trials[selfs[0]].enroll_id!r})", DegenerateTrialWarning, stacklevel=3)
    return enroll, test


def score_trials(emb: EmbeddingSet, trials: Sequence[TrialPair]) -> ScoreSet:
    trials = tuple(trials)
    if not trials:
        return ScoreSet("baseline", (), np.empty(0))
    enroll, test = resolve_trials(emb, trials)
    scores = rowwise_cosine(emb.matrix[enroll], emb.matrix[test])
    return ScoreSet("baseline", trials, scores)
