import numpy as np
import pytest

from byzfuse import model as M
from byzfuse._validation import ParameterError
from byzfuse.rng import make_rng


def test_markov_edge_cases():
    assert M.sample_states(M.StatePrior.markov(0.0, p1=1.0), 5, seed=1).tolist() == [1] * 5
    assert M.sample_states(M.StatePrior.markov(1.0, p1=1.0), 4, seed=1).tolist() == [1, 0, 1, 0]


def test_markov_transition_frequency():
    s = M.sample_states(M.StatePrior.markov(0.95), 100_000, seed=3)
    assert abs(np.mean(s[1:] != s[:-1]) - 0.95) < 0.01


def test_iid_marginal():
    s = M.sample_states_batch(M.StatePrior.iid(0.3), 50, 4000, make_rng(0))
    assert abs(s.mean() - 0.3) < 0.01


def test_placement_kinds():
    rng = make_rng(5)
    a = M.sample_placement_batch(M.ByzantinePrior.fixed(6), 20, 1000, rng)
    assert np.all(a.sum(axis=1) == 6)
    b = M.sample_placement_batch(M.ByzantinePrior.bounded(6), 20, 5000, rng)
    assert b.sum(axis=1).max() <= 5
    pmf = M.ByzantinePrior.bounded(6).count_pmf(20)
    emp = np.bincount(b.sum(axis=1), minlength=21) / 5000
    assert np.allclose(emp, pmf, atol=0.02)
    c = M.sample_placement_batch(M.ByzantinePrior.independent(0.3), 20, 5000, rng)
    assert abs(c.mean() - 0.3) < 0.01


def test_fixed_placement_uniform():
    a = M.sample_placement_batch(M.ByzantinePrior.fixed(2), 5, 20000, make_rng(2))
    assert np.allclose(a.mean(axis=0), 0.4, atol=0.015)


def test_prior_validation():
    with pytest.raises(ParameterError):
        M.ByzantinePrior.fixed(21).validate_for(20)
    with pytest.raises(ParameterError):
        M.ByzantinePrior.independent(1.5)
    with pytest.raises(ParameterError):
        M.ByzantinePrior.bounded(0)
    with pytest.raises(ParameterError):
        M.StatePrior("weird")
    assert M.ByzantinePrior.from_dict({"kind": "FixedCount", "n_b": 3}) == M.ByzantinePrior.fixed(3)


def test_byzantine_error():
    assert M.byzantine_error(0.1, 0.0) == pytest.approx(0.1)
    assert M.byzantine_error(0.1, 1.0) == pytest.approx(0.9)
    assert M.byzantine_error(0.1, 0.5) == pytest.approx(0.5)
    assert M.LocalChannel(0.2, 1.0).delta == pytest.approx(0.8)


def test_reports_honest_rate():
    s = np.zeros(20000, dtype=np.int8)
    rep = M.generate_reports(s, np.array([False, True]), M.LocalChannel(0.1, 1.0), seed=1)
    assert abs(rep.reports[0].mean() - 0.1) < 0.01
    assert abs(rep.reports[1].mean() - 0.9) < 0.01


def test_trial_draws_common_numbers():
    d = M.draw_trials(make_rng(1), 300, 10, 5, 0.1, M.ByzantinePrior.independent(0.3))
    honest = ~d.byz
    r1, r2 = d.reports(1.0), d.reports(0.5)
    # honest rows never depend on the attacker's flip probability
    assert np.array_equal(r1[honest], r2[honest])
    assert np.array_equal(d.reports(0.0), d.local_decisions())


def test_log_prob_markov():
    sp = M.StatePrior.markov(0.2, p1=0.5)
    lp = sp.log_prob(np.array([[0, 0, 1]]))[0]
    assert lp == pytest.approx(np.log(0.5 * 0.8 * 0.2))
    assert np.exp(sp.log_prob(np.array([[a, b] for a in (0, 1) for b in (0, 1)]))).sum() == pytest.approx(1)


def test_report_likelihood_and_match():
    ch = M.LocalChannel(0.1, 1.0)
    assert M.report_likelihood(1, 1, False, ch) == pytest.approx(0.9)
    assert M.report_likelihood(1, 1, True, ch) == pytest.approx(0.1)
    assert M.match_count([1, 0, 1], [1, 1, 1]) == 2
    with pytest.raises(ParameterError):
        M.match_count([1, 0], [1, 1, 1])
