"""Rocchio query expansion and score fusion for embedding-based verification."""

__version__ = "0.1.0"

from .embeddings import (  # noqa: E402
    Embedding,
    EmbeddingError,
    EmbeddingSet,
    l2_normalize,
    load_embeddings,
    save_embeddings,
    validate,
)
from .expansion import (  # noqa: E402
    DegenerateExpansionError,
    FeedbackSets,
    QEParams,
    QueryExpander,
    bidirectional_qe_score,
    qe_score_all,
    qe_score_trial,
    rocchio_expand,
    select_feedback_sets,
)
from .fusion import FusionError, FusionParams, fuse, normalize_scores  # noqa: E402
from .metrics import DcfParams, DetCurve, EvalResult, det_curve, eer, evaluate, min_dcf  # noqa: E402
from .scoring import (  # noqa: E402
    DegenerateTrialWarning,
    Label,
    LazyPairScores,
    NeighborRanking,
    PairScores,
    RankingTable,
    ScoreSet,
    TrialPair,
    cosine,
    rank_neighbors,
    score_all_pairs,
    score_trials,
)
from .synthetic import CohortSpec, generate, make_trials  # noqa: E402
