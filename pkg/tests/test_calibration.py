import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from voldedup.calibration import (
    REFERENCE_THRESHOLD,
    CalibrationResult,
    RocPoint,
    ScoredItem,
    ScoredSet,
    auc,
    decision_rule,
    roc_curve,
    select_optimal_threshold,
    sens_spec_at,
    youden_threshold,
)
from voldedup.errors import DegenerateSet


def _set(name, pos_scores, neg_scores):
    items = [ScoredItem(s, True, f"p{i}") for i, s in enumerate(pos_scores)]
    items += [ScoredItem(s, False, f"n{i}") for i, s in enumerate(neg_scores)]
    return ScoredSet(name, tuple(items))


def test_decision_rule_is_closed_at_the_threshold():
    assert decision_rule(0.8, 0.8)
    assert decision_rule(1.0, 1.0)
    assert not decision_rule(0.7999, 0.8)


def test_scored_item_rejects_out_of_range_scores():
    with pytest.raises(ValueError):
        ScoredItem(1.2, True, "q")
    with pytest.raises(ValueError):
        ScoredItem(-0.1, False, "q")


class TestRoc:
    def test_perfectly_separated(self):
        s = _set("s", [0.9, 0.8], [0.2, 0.1])
        curve = roc_curve(s)
        assert auc(curve) == 1.0
        # first point above the max score: nothing called
        assert curve.points[0].sensitivity == 0.0
        assert curve.points[0].specificity == 1.0
        assert curve.points[0].threshold == pytest.approx(1.9)
        # last point at the min score: everything called
        assert curve.points[-1].sensitivity == 1.0
        assert curve.points[-1].specificity == 0.0
        assert curve.points[-1].threshold == 0.1

    def test_worked_auc_three_quarters(self):
        # pairs: (0.8 vs 0.3) win, (0.8 vs 0.5) win, (0.4 vs 0.3) win,
        # (0.4 vs 0.5) loss -> AUC = 3/4
        s = _set("s", [0.8, 0.4], [0.3, 0.5])
        assert auc(roc_curve(s)) == pytest.approx(0.75)

    def test_coin_flip_auc_half(self):
        s = _set("s", [0.3, 0.7], [0.3, 0.7])
        assert auc(roc_curve(s)) == pytest.approx(0.5)

    def test_thresholds_strictly_decreasing(self, rng):
        s = _set("s", rng.uniform(size=20).round(1), rng.uniform(size=20).round(1))
        ts = [p.threshold for p in roc_curve(s).points]
        assert all(a > b for a, b in zip(ts, ts[1:]))

    def test_needs_both_classes(self):
        with pytest.raises(DegenerateSet):
            roc_curve(_set("s", [0.5], []))
        with pytest.raises(DegenerateSet):
            sens_spec_at(_set("s", [], [0.5]), 0.5)


@settings(max_examples=80, deadline=None)
@given(
    pos=st.lists(st.sampled_from([i / 10 for i in range(11)]), min_size=1, max_size=30),
    neg=st.lists(st.sampled_from([i / 10 for i in range(11)]), min_size=1, max_size=30),
)
def test_auc_equals_pair_counting(pos, neg):
    # scores drawn from a small grid so ties are common
    got = auc(roc_curve(_set("s", pos, neg)))
    want = oracles.mann_whitney_auc(pos, neg)
    assert got == pytest.approx(want, abs=1e-9)


class TestYouden:
    def test_picks_separating_threshold(self):
        s = _set("s", [0.9, 0.7], [0.4, 0.2])
        t, sens, spec = youden_threshold(roc_curve(s))
        assert t == 0.7
        assert sens == 1.0 and spec == 1.0

    def test_tie_goes_to_larger_threshold(self):
        # J is equal at t=0.9 (sens .5, spec 1) and t=0.3 (sens 1, spec .5);
        # the stricter threshold must win
        s = _set("s", [0.9, 0.3], [0.3, 0.9])
        t, _, _ = youden_threshold(roc_curve(s))
        assert t == pytest.approx(1.9)  # degenerate set: calling nothing ties too

    def test_matches_exhaustive_sweep(self, rng):
        for _ in range(60):
            pos = rng.integers(0, 6, size=rng.integers(1, 12)) / 5.0
            neg = rng.integers(0, 6, size=rng.integers(1, 12)) / 5.0
            s = _set("s", pos, neg)
            got_t, got_sens, got_spec = youden_threshold(roc_curve(s))
            want_t, want_j = oracles.sweep_youden(
                [(x, True) for x in pos] + [(x, False) for x in neg]
            )
            assert got_t == pytest.approx(want_t)
            assert got_sens + got_spec == pytest.approx(want_j)

    def test_sens_spec_at_agrees_with_curve_points(self, rng):
        s = _set("s", rng.uniform(size=15), rng.uniform(size=15))
        for p in roc_curve(s).points:
            sens, spec = sens_spec_at(s, p.threshold)
            assert sens == pytest.approx(p.sensitivity)
            assert spec == pytest.approx(p.specificity)


class TestSelectOptimal:
    def test_single_set_collapses_to_youden(self, rng):
        s = _set("only", rng.uniform(0.6, 1.0, size=10), rng.uniform(0.0, 0.5, size=10))
        result = select_optimal_threshold([s])
        assert result.t_opt == youden_threshold(roc_curve(s))[0]
        assert result.chosen_set_index == 0
        assert result.se_matrix.shape == (1, 1)

    def test_matches_exhaustive_selection(self, rng):
        for _ in range(40):
            sets = []
            raw = []
            for j in range(int(rng.integers(2, 5))):
                pos = rng.integers(0, 5, size=rng.integers(1, 10)) / 4.0
                neg = rng.integers(0, 5, size=rng.integers(1, 10)) / 4.0
                sets.append(_set(f"s{j}", pos, neg))
                raw.append([(x, True) for x in pos] + [(x, False) for x in neg])
            got = select_optimal_threshold(sets)
            want_t, want_idx, want_se, want_sp = oracles.sweep_select_threshold(raw)
            assert got.t_opt == pytest.approx(want_t)
            assert got.chosen_set_index == want_idx
            np.testing.assert_allclose(got.se_matrix, want_se)
            np.testing.assert_allclose(got.sp_matrix, want_sp)

    def test_tie_breaks_to_smaller_set_index(self):
        # two identical sets produce identical candidates; index 0 must win
        a = _set("a", [0.9], [0.1])
        b = _set("b", [0.9], [0.1])
        result = select_optimal_threshold([a, b])
        assert result.chosen_set_index == 0
        assert result.set_names == ("a", "b")

    def test_cross_matrix_semantics(self):
        # set 0 separates at 0.7; set 1 separates at 0.4. Set 0's higher
        # bar misses set 1's positive at 0.5.
        s0 = _set("s0", [0.7], [0.3])
        s1 = _set("s1", [0.5], [0.2])
        result = select_optimal_threshold([s0, s1])
        np.testing.assert_allclose(result.candidate_thresholds, [0.7, 0.5])
        np.testing.assert_allclose(result.se_matrix, [[1.0, 0.0], [1.0, 1.0]])
        np.testing.assert_allclose(result.sp_matrix, [[1.0, 1.0], [1.0, 1.0]])
        assert result.t_opt == 0.5
        assert result.chosen_set_index == 1

    def test_empty_input_rejected(self):
        with pytest.raises(DegenerateSet):
            select_optimal_threshold([])


def test_reference_threshold_is_a_valid_score():
    assert 0.0 < REFERENCE_THRESHOLD < 1.0
    assert isinstance(
        CalibrationResult(("x",), np.array([0.5]), np.ones((1, 1)), np.ones((1, 1)), 0.5, 0),
        CalibrationResult,
    )
