"""Reputation-based isolation of Byzantine nodes before the final vote.

An intermediate l-out-of-n decision is taken on every epoch of the window.
Each node then receives a reputation score: the number of epochs it agreed
with the intermediate decision (hard), or an accumulated log-ratio built
from the posterior of its local decision given all reports (soft).  Nodes
scoring below eta are discarded and the survivors vote by majority.

Two soft orientations are offered.  "absolute" scores |log P(u=0|r)/P(u=1|r)|,
i.e. how confidently the local decision can be inferred.  "report" scores
log P(u = r_i | r) / P(u != r_i | r), which is large when the node's report
is believed to match its own decision and negative when it looks flipped.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import ParameterError, check_count, check_probability, check_reports, clamp_prob
from .fusion import KOUTOFN, VotingRule, vote_columns
from .rng import make_rng

HARD = "Hard"
SOFT = "Soft"


@dataclass(frozen=True)
class ReputationScores:
    scores: np.ndarray
    scheme: str


@dataclass(frozen=True)
class IsolationPolicy:
    eta: float
    intermediate_l: int = None     # None = majority of n

    def __post_init__(self):
        if not np.isfinite(self.eta):
            raise ParameterError("eta must be finite")


@dataclass(frozen=True)
class IsolationResult:
    decisions: np.ndarray     # (..., m)
    survivors: np.ndarray     # (..., n) bool
    degenerate: np.ndarray    # (...,) bool, True where nobody survived


def intermediate_decisions(reports, l=None):
    R = check_reports(reports)
    n = R.shape[-2]
    l = n // 2 + 1 if l is None else check_count(l, "l", low=1, high=n)
    return vote_columns(VotingRule(KOUTOFN, l), R)


def hard_scores(reports, d_int):
    R = check_reports(reports)
    d = np.asarray(d_int, dtype=np.int8)
    if d.shape != R.shape[:-2] + R.shape[-1:]:
        raise ParameterError(f"d_int shape {d.shape} does not match reports {R.shape}")
    return (R == d[..., None, :]).sum(axis=-1)


ABSOLUTE = "absolute"
REPORT = "report"


def soft_reliability(reports, alpha, p_mal_guess, p_d, p_fa, prior0=0.5, orientation=ABSOLUTE):
    """Per-report reliabilities R_ij, shape like reports."""
    R = check_reports(reports)
    if orientation not in (ABSOLUTE, REPORT):
        raise ParameterError(f"orientation must be {ABSOLUTE!r} or {REPORT!r}, got {orientation!r}")
    for name, v in (("alpha", alpha), ("p_mal_guess", p_mal_guess), ("prior0", prior0)):
        check_probability(v, name)
    p_d = np.asarray(p_d, dtype=float)
    p_fa = np.asarray(p_fa, dtype=float)
    if p_d.ndim > 0 and np.ptp(p_d) > 0 or p_fa.ndim > 0 and np.ptp(p_fa) > 0:
        raise ParameterError("soft scores assume homogeneous P_d, P_fa")
    pd = clamp_prob(float(p_d.ravel()[0]))
    pfa = clamp_prob(float(p_fa.ravel()[0]))
    q = clamp_prob(alpha * p_mal_guess)
    pr0 = clamp_prob(prior0)

    # P(r = 1 | H) after the Byzantine channel
    r1_h0 = (1 - q) * pfa + q * (1 - pfa)
    r1_h1 = (1 - q) * pd + q * (1 - pd)
    lr_h0 = np.where(R == 1, np.log(r1_h0), np.log1p(-r1_h0))
    lr_h1 = np.where(R == 1, np.log(r1_h1), np.log1p(-r1_h1))
    # log P(H) + sum over the other nodes k != i
    L0 = np.log(pr0) + lr_h0.sum(axis=-2, keepdims=True) - lr_h0
    L1 = np.log1p(-pr0) + lr_h1.sum(axis=-2, keepdims=True) - lr_h1

    # own-report factor P(r_i | u_i = b)
    lq, l1q = np.log(q), np.log1p(-q)
    own0 = np.where(R == 0, l1q, lq)
    own1 = np.where(R == 1, l1q, lq)
    lu0 = own0 + np.logaddexp(np.log1p(-pfa) + L0, np.log1p(-pd) + L1)
    lu1 = own1 + np.logaddexp(np.log(pfa) + L0, np.log(pd) + L1)
    L = lu0 - lu1
    if orientation == ABSOLUTE:
        return np.abs(L)
    return np.where(R == 0, L, -L)


def soft_scores(reports, alpha, p_mal_guess, p_d, p_fa, prior0=0.5, orientation=ABSOLUTE):
    return soft_reliability(reports, alpha, p_mal_guess, p_d, p_fa, prior0,
                            orientation).sum(axis=-1)


def survivor_vote(reports, keep, fallback_bits):
    """Majority over survivors; fallback_bits where the survivor set is empty."""
    R = check_reports(reports)
    keep = np.asarray(keep, dtype=bool)
    n_keep = keep.sum(axis=-1)
    ones = (R * keep[..., :, None]).sum(axis=-2, dtype=np.int32)
    dec = (2 * ones > n_keep[..., None]).astype(np.int8)
    empty = n_keep == 0
    if np.any(empty):
        dec = np.where(empty[..., None], fallback_bits, dec).astype(np.int8)
    return dec, empty


def isolate_and_fuse(reports, scores, policy, seed=None):
    R = check_reports(reports)
    s = scores.scores if isinstance(scores, ReputationScores) else np.asarray(scores)
    keep = s >= policy.eta
    rng = make_rng(seed)
    fallback = rng.integers(0, 2, size=R.shape[:-2] + R.shape[-1:], dtype=np.int8)
    dec, empty = survivor_vote(R, keep, fallback)
    return IsolationResult(dec, keep, empty)


def isolation_rates(scores, placement, eta):
    """(P_iso^B, P_iso^H); nan marks an empty class."""
    s = scores.scores if isinstance(scores, ReputationScores) else np.asarray(scores)
    a = np.asarray(placement, dtype=bool)
    iso = s < eta
    nb = a.sum()
    nh = (~a).sum()
    pb = float(iso[a].sum() / nb) if nb else float("nan")
    ph = float(iso[~a].sum() / nh) if nh else float("nan")
    return pb, ph


class HardIsolationFusion(BaseEstimator):
    """Hard-reputation isolation followed by a majority vote of survivors."""

    def __init__(self, eta=0, intermediate_l=None, random_state=None):
        self.eta = eta
        self.intermediate_l = intermediate_l
        self.random_state = random_state

    def fit(self, R, y=None):
        R = check_reports(R)
        self.d_int_ = intermediate_decisions(R, self.intermediate_l)
        self.scores_ = hard_scores(R, self.d_int_)
        self.survivors_ = self.scores_ >= self.eta
        return self

    def predict(self, R):
        self.fit(R)
        res = isolate_and_fuse(R, self.scores_, IsolationPolicy(self.eta, self.intermediate_l),
                               self.random_state)
        self.degenerate_ = res.degenerate
        return res.decisions


class SoftIsolationFusion(BaseEstimator):
    """Soft (log-ratio) reputation isolation followed by a survivor majority."""

    def __init__(self, eta=0.0, alpha=0.4, p_d=0.8, p_fa=0.2, p_mal_guess=1.0,
                 prior0=0.5, orientation=REPORT, random_state=None):
        self.eta = eta
        self.alpha = alpha
        self.p_d = p_d
        self.p_fa = p_fa
        self.p_mal_guess = p_mal_guess
        self.prior0 = prior0
        self.orientation = orientation
        self.random_state = random_state

    def fit(self, R, y=None):
        R = check_reports(R)
        self.scores_ = soft_scores(R, self.alpha, self.p_mal_guess, self.p_d, self.p_fa,
                                   self.prior0, self.orientation)
        self.survivors_ = self.scores_ >= self.eta
        return self

    def predict(self, R):
        self.fit(R)
        res = isolate_and_fuse(R, self.scores_, IsolationPolicy(self.eta), self.random_state)
        self.degenerate_ = res.degenerate
        return res.decisions
