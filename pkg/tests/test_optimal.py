import numpy as np
import pytest

from byzfuse import model as M
from byzfuse import optimal as O
from byzfuse._validation import CapacityError, ParameterError
from byzfuse.rng import make_rng

from oracles import map_sequence, subset_sum


def test_dp_small_by_hand():
    b, h = [2.0, 3.0], [5.0, 7.0]
    assert O.dp_sum(b, h, 0) == pytest.approx(35.0)
    assert O.dp_sum(b, h, 1) == pytest.approx(2 * 7 + 3 * 5)
    assert O.dp_sum(b, h, 2) == pytest.approx(6.0)


def test_dp_table_matches_enumeration():
    rng = make_rng(4)
    b, h = rng.random(7), rng.random(7)
    t = O.DpTable(b, h)
    for k in range(8):
        assert t.value(7, k) == pytest.approx(subset_sum(b, h, k), rel=1e-12)
    # row r covers the last r nodes
    assert t.value(3, 2) == pytest.approx(subset_sum(b[4:], h[4:], 2), rel=1e-12)


def test_dp_zero_entries():
    assert O.dp_sum([0.0, 1.0], [1.0, 1.0], 2) == 0.0
    assert O.dp_sum([0.5, 0.5, 0.5], [0.0, 1.0, 1.0], 2) == pytest.approx(0.5)
    with pytest.raises(ParameterError):
        O.dp_sum([1.0], [1.0], 2)
    with pytest.raises(ParameterError):
        O.dp_sum([-1.0], [1.0], 0)


@pytest.mark.parametrize("prior", [
    M.ByzantinePrior.independent(0.3),
    M.ByzantinePrior.fixed(3),
    M.ByzantinePrior.bounded(4),
    M.ByzantinePrior.unconstrained(),
])
@pytest.mark.parametrize("rho", [None, 0.2])
def test_map_matches_bruteforce(prior, rho):
    n, m, eps, pm = 8, 4, 0.15, 0.8
    sp = M.StatePrior.iid() if rho is None else M.StatePrior.markov(rho)
    cfg = O.MapConfig(prior, M.LocalChannel(eps, pm), sp)
    d = M.draw_trials(make_rng(11), 40, n, m, eps, prior, sp)
    R = d.reports(0.9)
    dec = O.map_decide_batch(R, cfg)
    for t in range(len(R)):
        ref = map_sequence(R[t], prior, eps, cfg.channel.delta, sp)
        assert dec[t].tolist() == ref.tolist()


def test_histogram_index_consistent_with_score_sequence():
    prior = M.ByzantinePrior.fixed(2)
    cfg = O.MapConfig(prior, M.LocalChannel(0.1, 1.0))
    R = M.draw_trials(make_rng(1), 1, 6, 3, 0.1, prior).reports(1.0)[0]
    idx = O.HistogramIndex(R)
    su = O.score_histograms(idx.H, cfg, 6)[idx.inverse[0]] + cfg.state_prior.log_prob(O.candidates(3))
    direct = [O.score_sequence(R, c, cfg) for c in O.candidates(3)]
    assert np.allclose(su, direct)


def test_tie_breaks_to_smallest_candidate():
    cfg = O.MapConfig(M.ByzantinePrior.independent(0.3), M.LocalChannel(0.2, 1.0))
    # two mirrored nodes: s and its complement score the same
    assert O.map_decide(np.array([[1], [0]]), cfg).tolist() == [0]
    assert O.map_decide(np.array([[1, 0], [0, 1]]), cfg).tolist() == [0, 1]


def test_candidates_lexicographic():
    assert O.candidates(2).tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]


def test_capacity_guard():
    R = np.zeros((3, 23), dtype=np.int8)
    cfg = O.MapConfig(M.ByzantinePrior.independent(0.2), M.LocalChannel(0.1, 1.0))
    with pytest.raises(CapacityError):
        O.map_decide(R, cfg)


def test_no_byzantines_reduces_to_majority():
    # with n_b = 0 and iid states MAP is the per-epoch majority (odd n)
    prior = M.ByzantinePrior.fixed(0)
    cfg = O.MapConfig(prior, M.LocalChannel(0.2, 1.0))
    R = M.draw_trials(make_rng(3), 200, 7, 3, 0.2, prior).reports(1.0)
    assert np.array_equal(O.map_decide_batch(R, cfg), (R.sum(axis=1) >= 4).astype(np.int8))


def test_error_metrics():
    dec = np.array([[0, 1], [1, 1]])
    st = np.array([[0, 0], [1, 1]])
    assert O.error_counts(dec, st) == 1
    assert O.error_counts(dec, st, "per_sequence") == 1
    with pytest.raises(ParameterError):
        O.error_counts(dec, st, "per_word")


def test_estimator():
    prior = M.ByzantinePrior.independent(0.2)
    R = M.draw_trials(make_rng(2), 3, 9, 3, 0.1, prior).reports(1.0)
    est = O.MAPFusion(prior, 0.1, 1.0)
    assert est.fit(R).predict(R).shape == (3, 3)
    assert est.predict(R[0]).shape == (3,)


def test_estimate_error_probability_deterministic():
    setup = O.OptimalSetup(10, 3, 0.1, M.ByzantinePrior.independent(0.2))
    a = O.estimate_error_probability(setup, 1.0, 1.0, 3000, 9, block_size=500, threads=1)
    b = O.estimate_error_probability(setup, 1.0, 1.0, 3000, 9, block_size=500, threads=3)
    assert a == b and 0 < a < 0.1
