import numpy as np
import pytest

from byzfuse import model as M
from byzfuse import mp as MP
from byzfuse import optimal as O
from byzfuse._validation import ParameterError
from byzfuse.rng import make_rng

from oracles import state_marginals_single_epoch


@pytest.mark.parametrize("n", [1, 3, 6, 10])
@pytest.mark.parametrize("p_mal", [1.0, 0.7])
def test_tree_marginals_exact(n, p_mal):
    alpha, eps = 0.3, 0.15
    cfg = MP.MpConfig(alpha, eps, p_mal, iterations=10)
    R = make_rng(n).integers(0, 2, (25, n, 1)).astype(np.int8)
    res = MP.run(R, cfg)
    ref = [state_marginals_single_epoch(r[:, 0], alpha, eps, cfg.delta) for r in R]
    assert np.allclose(res.marginals[:, 0], ref, atol=1e-9)


def test_chain_without_byzantines_is_hmm_posterior():
    # alpha -> 0 turns the graph into a chain with independent observations: BP is exact
    eps, rho, m, n = 0.3, 0.2, 5, 2
    cfg = MP.MpConfig(1e-12, eps, 1.0, rho=rho, iterations=20, convergence_tol=0)
    R = make_rng(0).integers(0, 2, (10, n, m)).astype(np.int8)
    res = MP.run(R, cfg)
    sp = M.StatePrior.markov(rho)
    S = O.candidates(m)
    for t in range(10):
        agree = (R[t][None] == S[:, None, :]).sum(axis=(1, 2))
        lp = sp.log_prob(S) + agree * np.log(1 - eps) + (n * m - agree) * np.log(eps)
        w = np.exp(lp - lp.max())
        ref = (w[:, None] * S).sum(0) / w.sum()
        assert np.allclose(res.marginals[t], ref, atol=1e-8)


def test_mp_close_to_map_easy_regime():
    n, m, eps, alpha = 20, 6, 0.1, 0.2
    prior = M.ByzantinePrior.independent(alpha)
    d = M.draw_trials(make_rng(5), 400, n, m, eps, prior)
    R = d.reports(1.0)
    e_mp = O.error_counts(MP.run(R, MP.MpConfig(alpha, eps, 1.0)).decisions, d.states)
    e_map = O.error_counts(O.map_decide_batch(R, O.MapConfig(prior, M.LocalChannel(eps, 1.0))), d.states)
    assert e_mp <= e_map + 3


def test_byzantine_posteriors_flag_flippers():
    n, m, eps = 12, 10, 0.05
    prior = M.ByzantinePrior.fixed(3)
    d = M.draw_trials(make_rng(8), 50, n, m, eps, prior)
    res = MP.run(d.reports(1.0), MP.MpConfig(0.25, eps, 1.0))
    pred = res.byz_posteriors > 0.5
    assert (pred == d.byz).mean() > 0.95


def test_single_matrix_and_estimator():
    R = make_rng(1).integers(0, 2, (5, 4)).astype(np.int8)
    res = MP.run(R, MP.MpConfig(0.2, 0.1))
    assert res.decisions.shape == (4,)
    est = MP.MessagePassingFusion(alpha=0.2, epsilon=0.1)
    assert est.fit(R).predict(R).tolist() == res.decisions.tolist()
    assert est.predict_proba(R).shape == (4,)


def test_iteration_counts_and_early_stop():
    R = make_rng(2).integers(0, 2, (3, 8, 4)).astype(np.int8)
    st = MP.init_state(R, MP.MpConfig(0.2, 0.1))
    st2, delta = MP.update_messages_once(st, R, MP.MpConfig(0.2, 0.1))
    assert st2.sweeps == 1 and st2.updates == 4 * 8 * 4 + 4 * 4 + 8
    # on data drawn from the model the flooding schedule settles within a few sweeps
    d = M.draw_trials(make_rng(1), 300, 20, 10, 0.15, M.ByzantinePrior.independent(0.3))
    res = MP.run(d.reports(1.0), MP.MpConfig(0.3, 0.15, iterations=200, convergence_tol=1e-8))
    assert np.all(res.converged) and np.median(res.iterations) <= 10


def test_config_validation():
    with pytest.raises(ParameterError):
        MP.MpConfig(1.2, 0.1)
    with pytest.raises(ParameterError):
        MP.MpConfig(0.2, 0.1, iterations=0)
