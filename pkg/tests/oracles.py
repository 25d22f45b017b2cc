"""Slow, from-scratch reference implementations used as test oracles.

Nothing here imports the package's numerical code: cosines are plain Python
sums, rankings are Python sorts, and metrics enumerate mid-point thresholds.
"""

import bisect
import math


def cosine(a, b):
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    return max(-1.0, min(1.0, dot / (na * nb)))


def ranking(vectors, ids, q):
    """Non-self neighbor ids of position ``q``: score descending, ties by id."""
    scored = [(ids[j], cosine(vectors[q], vectors[j])) for j in range(len(ids)) if j != q]
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored


def expand(vectors, ids, q, alpha, beta, gamma, top_n, exclude=None):
    ranked = [nid for nid, _ in ranking(vectors, ids, q) if nid != exclude]
    pos = {uid: k for k, uid in enumerate(ids)}
    relevant = [vectors[pos[u]] for u in ranked[:top_n]]
    nonrelevant = [vectors[pos[u]] for u in ranked[top_n:]]
    d = len(vectors[q])
    out = [alpha * vectors[q][k] for k in range(d)]
    if relevant:
        for k in range(d):
            out[k] += beta / len(relevant) * sum(v[k] for v in relevant)
    if nonrelevant:
        for k in range(d):
            out[k] -= gamma / len(nonrelevant) * sum(v[k] for v in nonrelevant)
    return out


def qe_score(vectors, ids, enroll, test, alpha, beta, gamma, top_n,
             bidirectional=False, rule="mean_of_directions", exclude_partner=False):
    e, t = ids.index(enroll), ids.index(test)
    ex = expand(vectors, ids, e, alpha, beta, gamma, top_n, test if exclude_partner and e != t else None)
    if not bidirectional:
        return cosine(ex, vectors[t])
    tx = expand(vectors, ids, t, alpha, beta, gamma, top_n, enroll if exclude_partner and e != t else None)
    if rule == "expanded_vs_expanded":
        return cosine(ex, tx)
    return 0.5 * (cosine(ex, vectors[t]) + cosine(tx, vectors[e]))


def _rates(tar, non, threshold):
    """Accept iff score >= threshold; inputs are sorted lists."""
    p_miss = bisect.bisect_left(tar, threshold) / len(tar)
    p_fa = (len(non) - bisect.bisect_left(non, threshold)) / len(non)
    return p_miss, p_fa


def sweep(tar, non):
    """(threshold, p_miss, p_fa) below all scores, at every mid-point, above all."""
    tar, non = sorted(tar), sorted(non)
    values = sorted(set(tar) | set(non))
    thresholds = [values[0] - 1.0]
    thresholds += [(a + b) / 2.0 for a, b in zip(values, values[1:])]
    thresholds.append(values[-1] + 1.0)
    return [(t,) + _rates(tar, non, t) for t in thresholds]


def eer(tar, non):
    points = sweep(tar, non)
    diffs = [pm - pf for _, pm, pf in points]
    for (_, pm, _), d in zip(points, diffs):
        if d == 0.0:
            return pm
    for k in range(len(points) - 1):
        if diffs[k] < 0.0 < diffs[k + 1]:
            frac = -diffs[k] / (diffs[k + 1] - diffs[k])
            return points[k][1] + frac * (points[k + 1][1] - points[k][1])
    raise AssertionError("no crossing found")


def min_dcf(tar, non, c_miss=1.0, c_fa=1.0, p_target=0.05):
    best = min(c_miss * p_target * pm + c_fa * (1.0 - p_target) * pf
               for _, pm, pf in sweep(tar, non))
    return best / min(c_miss * p_target, c_fa * (1.0 - p_target))
