import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_eer, exhaustive_eer_pairs
from plda_map.metrics import EvalReport, compute_eer, eer_from_scores
from plda_map.scoring import ScoreSet, Trial

scores_st = st.lists(st.integers(-20, 20).map(lambda v: v / 4), min_size=1, max_size=25)


def make_set(tar, non):
    trials = [Trial("e", f"t{i}", "target") for i in range(len(tar))]
    trials += [Trial("e", f"n{i}", "nontarget") for i in range(len(non))]
    return ScoreSet(trials, np.concatenate([tar, non]))


def test_hand_example():
    assert brute_force_eer([2, 1], [1.5, 0]) == pytest.approx(0.25)
    report = compute_eer(make_set([2.0, 1.0], [1.5, 0.0]))
    assert report.eer == pytest.approx(0.25)
    assert (report.n_target, report.n_nontarget) == (2, 2)


def test_perfect_separation():
    assert eer_from_scores([3.0, 4.0, 5.0], [0.0, 1.0])[0] == 0.0


def test_chance_level():
    rng = np.random.default_rng(0)
    s = rng.standard_normal(20000)
    assert eer_from_scores(s[:2000], s[2000:])[0] == pytest.approx(0.5, abs=0.03)


def test_all_tied():
    assert eer_from_scores([1.0, 1.0], [1.0, 1.0, 1.0])[0] == pytest.approx(0.5)


@settings(max_examples=300)
@given(tar=scores_st, non=scores_st)
def test_matches_brute_force(tar, non):
    assert eer_from_scores(tar, non)[0] == pytest.approx(brute_force_eer(tar, non), abs=1e-12)


@given(tar=scores_st, non=scores_st)
def test_invariant_to_increasing_transform(tar, non):
    a = eer_from_scores(tar, non)[0]
    b = eer_from_scores(np.exp(np.array(tar) / 2) * 3 - 1, np.exp(np.array(non) / 2) * 3 - 1)[0]
    assert a == pytest.approx(b, abs=1e-12)


def test_threshold_separates_at_eer():
    rng = np.random.default_rng(1)
    tar = rng.normal(2, 1, 3000)
    non = rng.normal(0, 1, 30000)
    eer, thr = eer_from_scores(tar, non)
    assert eer == pytest.approx(0.1587, abs=0.01)  # Phi(-1)
    # the threshold is a hull vertex bracketing the interpolated EER
    miss, fa = np.mean(tar < thr), np.mean(non >= thr)
    assert min(miss, fa) <= eer <= max(miss, fa)
    assert abs(miss - fa) < 0.05


def test_vectorised_oracle_agrees_with_loop_oracle():
    rng = np.random.default_rng(2)
    for _ in range(20):
        tar = rng.integers(0, 10, rng.integers(1, 12)).astype(float)
        non = rng.integers(0, 10, rng.integers(1, 12)).astype(float)
        assert exhaustive_eer_pairs(tar, non) == pytest.approx(brute_force_eer(tar, non), abs=1e-12)


def test_single_class_rejected():
    with pytest.raises(ValueError):
        compute_eer(ScoreSet([Trial("e", "t", "target")], [1.0]))
    with pytest.raises(ValueError):
        compute_eer(ScoreSet([Trial("e", "t")], [1.0]))


def test_report_text():
    rep = EvalReport(0.125, -1.5, 10, 90, {"variant": "PLDA"})
    assert rep.to_text() == "eer 0.125\nthreshold -1.5\nn_target 10\nn_nontarget 90\nconfig.variant PLDA\n"
