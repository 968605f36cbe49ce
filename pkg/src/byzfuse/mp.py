"""Sum-product message passing over states s_j and node statuses a_i.

Factor graph: one report factor p(r_ij | s_j, a_i) per (node, epoch), a
chain factor p(s_j | s_{j-1}) between consecutive epochs and a prior factor
p(a_i) per node.  Messages are binary and kept normalized, so each one is a
single number: the mass it puts on value 0.

Node status follows the factor-graph encoding a = 0 Byzantine, a = 1 honest,
so omega_u = p(a = 0) = alpha.  Outputs are translated back to the package
convention (probability of being Byzantine).

All arrays carry a leading trial axis: reports (T, n, m).
"""

from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import ParameterError, check_count, check_probability, check_reports
from .model import byzantine_error

LO, HI = 1e-12, 1.0 - 1e-12


@dataclass(frozen=True)
class MpConfig:
    alpha: float
    epsilon: float
    p_mal_fc: float = 1.0
    rho: float = 0.5
    p_s1: float = 0.5           # P(s_1 = 1)
    iterations: int = 5
    convergence_tol: float = 1e-8

    def __post_init__(self):
        check_probability(self.alpha, "alpha")
        check_probability(self.epsilon, "epsilon")
        check_probability(self.p_mal_fc, "p_mal_fc")
        check_probability(self.rho, "rho")
        check_probability(self.p_s1, "p_s1")
        check_count(self.iterations, "iterations", low=1)
        if not self.convergence_tol >= 0:
            raise ParameterError("convergence_tol must be >= 0")

    @property
    def delta(self):
        return byzantine_error(self.epsilon, self.p_mal_fc)


@dataclass
class MessageState:
    tau_l: np.ndarray      # (T, m)
    tau_r: np.ndarray
    phi_l: np.ndarray
    phi_r: np.ndarray
    nu_u: np.ndarray       # (T, n, m)
    nu_d: np.ndarray
    lambda_u: np.ndarray
    lambda_d: np.ndarray
    omega_u: np.ndarray    # (T, n)
    omega_d: np.ndarray
    active: np.ndarray     # (T,) trials still iterating
    updates: int = 0       # scalar message updates performed (per trial)
    sweeps: int = 0

    def families(self):
        return ("tau_l", "tau_r", "phi_l", "phi_r", "nu_u", "nu_d",
                "lambda_u", "lambda_d", "omega_d")


def _clip(x):
    return np.clip(x, LO, HI)


def _norm(a0, a1):
    """Mass on 0 of the message (a0, a1)."""
    return _clip(a0 / (a0 + a1))


def init_state(R, cfg):
    T, n, m = R.shape
    half_m = np.full((T, m), 0.5)
    half_nm = np.full((T, n, m), 0.5)
    omega_u = np.full((T, n), _clip(cfg.alpha))
    return MessageState(
        tau_l=half_m.copy(), tau_r=half_m.copy(), phi_l=half_m.copy(), phi_r=half_m.copy(),
        nu_u=half_nm.copy(), nu_d=half_nm.copy(),
        lambda_u=np.repeat(omega_u[:, :, None], m, axis=2), lambda_d=half_nm.copy(),
        omega_u=omega_u, omega_d=np.full((T, n), 0.5), active=np.ones(T, dtype=bool))


def report_factors(R, cfg):
    """p(r_ij | s, a) for (s, a) in {00, 01, 10, 11}; a = 0 is Byzantine."""
    d, e = cfg.delta, cfg.epsilon
    r1 = R == 1
    p00 = np.where(r1, d, 1 - d)
    p01 = np.where(r1, e, 1 - e)
    p10 = np.where(r1, 1 - d, d)
    p11 = np.where(r1, 1 - e, e)
    return p00, p01, p10, p11


def _chain(t, rho):
    # message on s_j = 0 after the transition factor: stay w.p. 1-rho, flip w.p. rho
    return (1 - rho) * t + rho * (1 - t)


def update_messages_once(state, R, cfg, factors=None):
    """One flooding sweep; returns (new_state, max_delta per trial)."""
    R = np.asarray(R)
    T, n, m = R.shape
    p00, p01, p10, p11 = factors if factors is not None else report_factors(R, cfg)
    s = state

    # 1. node status -> state, through the report factor
    lam = s.lambda_u
    nu_u = _norm(p00 * lam + p01 * (1 - lam), p10 * lam + p11 * (1 - lam))
    l0, l1 = np.log(nu_u), np.log1p(-nu_u)
    S0, S1 = l0.sum(axis=1), l1.sum(axis=1)                      # (T, m)

    # 2. forward chain
    tau_r = np.empty((T, m))
    phi_r = np.empty((T, m))
    phi_r[:, 0] = 1 - cfg.p_s1
    for j in range(m):
        if j > 0:
            phi_r[:, j] = _chain(tau_r[:, j - 1], cfg.rho)
        f = phi_r[:, j]
        tau_r[:, j] = _norm(f * np.exp(S0[:, j] - np.maximum(S0[:, j], S1[:, j])),
                            (1 - f) * np.exp(S1[:, j] - np.maximum(S0[:, j], S1[:, j])))
    # 3. backward chain
    tau_l = np.empty((T, m))
    phi_l = np.empty((T, m))
    phi_l[:, m - 1] = 0.5
    for j in range(m - 1, -1, -1):
        if j < m - 1:
            phi_l[:, j] = _chain(tau_l[:, j + 1], cfg.rho)
        f = phi_l[:, j]
        tau_l[:, j] = _norm(f * np.exp(S0[:, j] - np.maximum(S0[:, j], S1[:, j])),
                            (1 - f) * np.exp(S1[:, j] - np.maximum(S0[:, j], S1[:, j])))
    phi_r, phi_l = _clip(phi_r), _clip(phi_l)

    # 4. state -> report factor, excluding the receiving node
    e0 = np.log(phi_r * phi_l)[:, None, :] + S0[:, None, :] - l0
    e1 = np.log((1 - phi_r) * (1 - phi_l))[:, None, :] + S1[:, None, :] - l1
    nu_d = _clip(1.0 / (1.0 + np.exp(np.clip(e1 - e0, -700, 700))))

    # 5. report factor -> node status
    lambda_d = _norm(p00 * nu_d + p10 * (1 - nu_d), p01 * nu_d + p11 * (1 - nu_d))

    # 6. node status -> report factors, and the status belief
    ld0, ld1 = np.log(lambda_d), np.log1p(-lambda_d)
    D0, D1 = ld0.sum(axis=2), ld1.sum(axis=2)                     # (T, n)
    ou = s.omega_u
    u0 = np.log(ou)[:, :, None] + D0[:, :, None] - ld0
    u1 = np.log1p(-ou)[:, :, None] + D1[:, :, None] - ld1
    lambda_u = _clip(1.0 / (1.0 + np.exp(np.clip(u1 - u0, -700, 700))))
    omega_d = _clip(1.0 / (1.0 + np.exp(np.clip(D1 - D0, -700, 700))))

    new = dict(tau_l=tau_l, tau_r=tau_r, phi_l=phi_l, phi_r=phi_r, nu_u=nu_u, nu_d=nu_d,
               lambda_u=lambda_u, lambda_d=lambda_d, omega_d=omega_d)
    act = s.active
    delta = np.zeros(T)
    for k, v in new.items():
        old = getattr(s, k)
        diff = np.abs(v - old).reshape(T, -1).max(axis=1)
        delta = np.maximum(delta, diff)
        shape = (T,) + (1,) * (v.ndim - 1)
        new[k] = np.where(act.reshape(shape), v, old)
    delta = np.where(act, delta, 0.0)
    per_sweep = 4 * n * m + 4 * m + n
    out = replace(s, **new, updates=s.updates + per_sweep, sweeps=s.sweeps + 1)
    return out, delta


def marginals(state):
    """P(s_j = 0 | R) approximations, (T, m)."""
    S0 = np.log(state.nu_u).sum(axis=1)
    S1 = np.log1p(-state.nu_u).sum(axis=1)
    e0 = np.log(state.phi_r * state.phi_l) + S0
    e1 = np.log((1 - state.phi_r) * (1 - state.phi_l)) + S1
    return 1.0 / (1.0 + np.exp(np.clip(e1 - e0, -700, 700)))


@dataclass
class MpResult:
    decisions: np.ndarray         # (T, m) or (m,)
    marginals: np.ndarray         # P(s_j = 1 | R)
    byz_posteriors: np.ndarray    # P(node Byzantine | R)
    converged: np.ndarray         # per trial
    iterations: np.ndarray        # sweeps used per trial
    state: MessageState = None


def run(R, cfg, iterations=None):
    R = check_reports(R)
    single = R.ndim == 2
    if single:
        R = R[None]
    iterations = cfg.iterations if iterations is None else iterations
    factors = report_factors(R, cfg)
    state = init_state(R, cfg)
    used = np.zeros(R.shape[0], dtype=int)
    for _ in range(iterations):
        used += state.active
        state, delta = update_messages_once(state, R, cfg, factors)
        state.active = state.active & (delta >= cfg.convergence_tol)
        if not state.active.any():
            break
    p0 = marginals(state)
    # marginal tie (exactly 0.5) decides 0
    dec = (p0 < 0.5).astype(np.int8)
    a = _clip(cfg.alpha)
    w = state.omega_d
    byz = a * w / (a * w + (1 - a) * (1 - w))
    res = MpResult(dec, 1 - p0, byz, ~state.active, used, state)
    if single:
        res = MpResult(dec[0], 1 - p0[0], byz[0], bool(~state.active[0]), int(used[0]), state)
    return res


def mp_decide(reports, cfg):
    return run(reports, cfg)


class MessagePassingFusion(BaseEstimator):
    """Near-optimal window fusion by loopy belief propagation.

    Parameters
    ----------
    alpha : float, prior probability that a node is Byzantine
    epsilon : float, local error probability
    p_mal : float, flip probability assumed for Byzantines
    rho : float, state flip probability between epochs (0.5 = independent)
    iterations : int
    """

    def __init__(self, alpha=0.3, epsilon=0.1, p_mal=1.0, rho=0.5, p_s1=0.5,
                 iterations=5, tol=1e-8):
        self.alpha = alpha
        self.epsilon = epsilon
        self.p_mal = p_mal
        self.rho = rho
        self.p_s1 = p_s1
        self.iterations = iterations
        self.tol = tol

    def fit(self, R, y=None):
        check_reports(R)
        self.config_ = MpConfig(self.alpha, self.epsilon, self.p_mal, self.rho, self.p_s1,
                                self.iterations, self.tol)
        return self

    def predict(self, R):
        if not hasattr(self, "config_"):
            self.fit(R)
        res = run(R, self.config_)
        self.marginals_ = res.marginals
        self.byz_posteriors_ = res.byz_posteriors
        self.converged_ = res.converged
        return res.decisions

    def predict_proba(self, R):
        self.predict(R)
        return self.marginals_
