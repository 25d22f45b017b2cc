import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from rocchioqe.metrics import (
    DcfParams,
    MetricError,
    det_curve,
    det_curve_from_arrays,
    eer,
    evaluate,
    min_dcf,
)
from rocchioqe.scoring import Label, ScoreSet, TrialPair


def _labeled(tar, non):
    trials, scores = [], []
    for k, s in enumerate(tar):
        trials.append(TrialPair(f"t{k}", f"x{k}", Label.TARGET))
        scores.append(s)
    for k, s in enumerate(non):
        trials.append(TrialPair(f"n{k}", f"y{k}", Label.NONTARGET))
        scores.append(s)
    return ScoreSet("sys", tuple(trials), np.asarray(scores, dtype=float))


def _rates_at(curve, threshold):
    # Between curve points the rates equal those at the next threshold up.
    k = int(np.searchsorted(curve.thresholds, threshold, side="left"))
    return curve.p_miss[k], curve.p_fa[k]


class TestDetCurve:
    def test_perfect_separation(self):
        curve = det_curve(_labeled([0.9], [0.1]))
        assert any(pm == 0 and pf == 0 for _, pm, pf in curve.points())

    def test_inverted(self):
        curve = det_curve(_labeled([0.1], [0.9]))
        assert all(pm + pf >= 1 for _, pm, pf in curve.points())

    def test_hand_count_midpoint(self):
        curve = det_curve(_labeled([0.8, 0.4], [0.6, 0.2]))
        assert _rates_at(curve, 0.5) == (0.5, 0.5)

    def test_sentinels(self):
        curve = det_curve(_labeled([0.3, 0.7], [0.1]))
        assert curve.points()[0] == (-np.inf, 0.0, 1.0)
        assert curve.points()[-1] == (np.inf, 1.0, 0.0)

    def test_missing_class(self):
        with pytest.raises(MetricError, match="no nontarget"):
            det_curve(_labeled([0.3, 0.7], []))

    def test_unknown_label(self):
        s = ScoreSet("s", (TrialPair("a", "b"), TrialPair("c", "d", Label.TARGET)), [0.1, 0.2])
        with pytest.raises(MetricError, match="unknown label"):
            det_curve(s)

    @settings(max_examples=60)
    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=40),
           st.lists(st.floats(-5, 5), min_size=1, max_size=40))
    def test_monotone(self, tar, non):
        curve = det_curve_from_arrays(tar, non)
        assert np.all(np.diff(curve.thresholds) > 0)
        assert np.all(np.diff(curve.p_miss) >= 0) and np.all(np.diff(curve.p_fa) <= 0)
        assert curve.p_miss.min() >= 0 and curve.p_fa.max() <= 1


class TestEer:
    def test_perfect(self):
        assert eer(det_curve(_labeled([0.9, 0.8], [0.1, 0.2])))[0] == 0.0

    def test_hand_count(self):
        rate, threshold = eer(det_curve(_labeled([0.8, 0.4], [0.6, 0.2])))
        assert rate == 0.5 and threshold == 0.6

    def test_identical_classes(self):
        values = [0.1, 0.5, 0.5, 0.9, 1.3]
        assert eer(det_curve(_labeled(values, values)))[0] == pytest.approx(0.5, abs=1e-15)

    def test_interpolated(self):
        # (p_miss, p_fa) goes (0, 2/3) at t=0.5 -> (1/2, 1/3) at t=0.7; the
        # difference crosses zero 4/5 of the way: rate 0.4 at t=0.66.
        rate, threshold = eer(det_curve_from_arrays([0.5, 0.9], [0.1, 0.5, 0.7]))
        assert rate == pytest.approx(0.4, abs=1e-15)
        assert threshold == pytest.approx(0.66, abs=1e-15)
        assert rate == pytest.approx(oracles.eer([0.5, 0.9], [0.1, 0.5, 0.7]), abs=1e-15)


class TestMinDcf:
    def test_defaults(self):
        params = DcfParams()
        assert (params.c_miss, params.c_fa, params.p_target) == (1.0, 1.0, 0.05)
        assert params.normalizer == pytest.approx(0.05)

    def test_perfect(self):
        assert min_dcf(det_curve(_labeled([0.9], [0.1])))[0] == 0.0

    def test_never_above_one(self):
        value, threshold = min_dcf(det_curve(_labeled([0.1, 0.2], [0.8, 0.9])))
        assert value == pytest.approx(1.0) and threshold == np.inf

    def test_oracle_frozen_example(self):
        # Brute force over the 5 threshold intervals (tests/oracles.py): 0.025 / 0.05.
        value, threshold = min_dcf(det_curve(_labeled([0.8, 0.4], [0.6, 0.2])))
        assert value == 0.5 and threshold == 0.8

    def test_ties_pick_smallest_threshold(self):
        # p_target = 0.5 makes accept-all-but-lowest and reject-top cost the same.
        curve = det_curve(_labeled([0.5], [0.1]))
        value, threshold = min_dcf(curve, DcfParams(p_target=0.5))
        assert value == 0.0 and threshold == 0.5

    @pytest.mark.parametrize("kwargs", [dict(c_miss=0), dict(c_fa=-1), dict(p_target=1.0)])
    def test_bad_params(self, kwargs):
        with pytest.raises(ValueError):
            DcfParams(**kwargs)


class TestEvaluate:
    def test_perfect(self):
        result = evaluate(_labeled([0.9, 0.7], [0.1, 0.3]))
        assert result.eer == 0.0 and result.min_dcf == 0.0
        assert (result.n_target, result.n_nontarget) == (2, 2)

    def test_identical(self):
        values = [0.2, 0.4, 0.6]
        assert evaluate(_labeled(values, values)).eer == pytest.approx(0.5)

    def test_uniform_random_near_chance(self):
        rng = np.random.default_rng(20201)
        result = evaluate(_labeled(rng.uniform(size=500), rng.uniform(size=500)))
        assert abs(result.eer - 0.5) <= 0.05

    def test_report_shape(self):
        report = evaluate(_labeled([0.9, 0.2], [0.4, 0.1])).report()
        assert set(report) == {"system", "n_target", "n_nontarget", "eer_percent", "eer_threshold",
                               "min_dcf_normalized", "min_dcf_unnormalized", "dcf_params"} | {"min_dcf_threshold"}
        assert report["dcf_params"] == {"c_miss": 1.0, "c_fa": 1.0, "p_target": 0.05}


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(-20, 20), min_size=1, max_size=60),
       st.lists(st.integers(-20, 20), min_size=1, max_size=60),
       st.sampled_from([0.05, 0.01, 0.5]))
def test_matches_oracle_with_ties(tar, non, p_target):
    tar = [t / 4 for t in tar]
    non = [n / 4 for n in non]
    curve = det_curve_from_arrays(tar, non)
    assert min_dcf(curve, DcfParams(p_target=p_target))[0] == oracles.min_dcf(tar, non, p_target=p_target)
    assert abs(eer(curve)[0] - oracles.eer(tar, non)) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_monotone_transform_invariance(seed):
    rng = np.random.default_rng(seed)
    tar, non = rng.normal(0.5, 0.3, 80), rng.normal(0.0, 0.3, 120)
    base = evaluate(_labeled(tar, non))
    for f in (lambda s: 2 * s + 3, np.tanh):
        other = evaluate(_labeled(f(tar), f(non)))
        assert abs(other.eer - base.eer) < 1e-12
        assert abs(other.min_dcf - base.min_dcf) < 1e-12
