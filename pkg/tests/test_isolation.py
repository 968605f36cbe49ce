import itertools

import numpy as np
import pytest

from byzfuse import isolation as I
from byzfuse import model as M
from byzfuse._validation import ParameterError
from byzfuse.rng import make_rng


def test_hard_scores_count_agreement():
    R = np.array([[1, 1, 0], [0, 0, 1], [1, 0, 0]])
    d = I.intermediate_decisions(R)
    assert d.tolist() == [1, 0, 0]
    assert I.hard_scores(R, d).tolist() == [2, 1, 3]


def _soft_oracle(R, i, j, alpha, pm, pd, pfa, pr0=0.5):
    """log P(u_ij = 0 | r_j) / P(u_ij = 1 | r_j) by summing every local decision."""
    n = R.shape[0]
    q = alpha * pm
    post = np.zeros(2)
    for H, ph in ((0, pr0), (1, 1 - pr0)):
        pu1 = pfa if H == 0 else pd
        for u in itertools.product((0, 1), repeat=n):
            p = ph
            for k in range(n):
                p *= pu1 if u[k] else 1 - pu1
                p *= (1 - q) if R[k, j] == u[k] else q
            post[u[i]] += p
    return np.log(post[0] / post[1])


@pytest.mark.parametrize("orientation", [I.ABSOLUTE, I.REPORT])
def test_soft_reliability_matches_enumeration(orientation):
    R = make_rng(3).integers(0, 2, (5, 3)).astype(np.int8)
    a, pm, pd, pfa = 0.3, 0.9, 0.8, 0.2
    rel = I.soft_reliability(R, a, pm, pd, pfa, orientation=orientation)
    for i in range(5):
        for j in range(3):
            L = _soft_oracle(R, i, j, a, pm, pd, pfa)
            ref = abs(L) if orientation == I.ABSOLUTE else (L if R[i, j] == 0 else -L)
            assert rel[i, j] == pytest.approx(ref, abs=1e-9)


def test_soft_orientation_checked():
    with pytest.raises(ParameterError):
        I.soft_reliability(np.zeros((2, 2)), 0.3, 1.0, 0.8, 0.2, orientation="up")


def test_isolation_monotone_in_eta():
    prior = M.ByzantinePrior.fixed(4)
    d = M.draw_trials(make_rng(1), 200, 12, 6, 0.1, prior)
    R = d.reports(1.0)
    s = I.hard_scores(R, I.intermediate_decisions(R))
    prev = -1
    for eta in range(8):
        kept = (s >= eta).sum()
        assert prev < 0 or kept <= prev
        prev = kept
    pb, ph = I.isolation_rates(s[0], d.byz[0], 4)
    assert 0 <= pb <= 1 and 0 <= ph <= 1


def test_isolating_flippers_helps():
    prior = M.ByzantinePrior.fixed(4)
    d = M.draw_trials(make_rng(2), 2000, 11, 6, 0.1, prior)
    R = d.reports(1.0)
    maj = ((R.sum(axis=1) * 2 > 11) != d.states).sum()
    est = I.HardIsolationFusion(eta=4, random_state=0)
    iso = (est.predict(R) != d.states).sum()
    assert iso < maj


def test_empty_survivors_use_fallback():
    R = np.ones((3, 2), dtype=np.int8)
    res = I.isolate_and_fuse(R, np.zeros(3), I.IsolationPolicy(eta=1.0), seed=0)
    assert bool(res.degenerate) and not res.survivors.any()
    again = I.isolate_and_fuse(R, np.zeros(3), I.IsolationPolicy(eta=1.0), seed=0)
    assert np.array_equal(res.decisions, again.decisions)


def test_soft_estimator():
    R = make_rng(0).integers(0, 2, (4, 10, 4)).astype(np.int8)
    est = I.SoftIsolationFusion(eta=-1e9, alpha=0.3)
    # eta below every score keeps every node: plain majority
    assert np.array_equal(est.predict(R), (R.sum(axis=1) * 2 > 10).astype(np.int8))
    assert est.scores_.shape == (4, 10)


def test_policy_validation():
    with pytest.raises(ParameterError):
        I.IsolationPolicy(float("nan"))
    with pytest.raises(ParameterError):
        I.hard_scores(np.zeros((3, 2)), np.zeros(3))
