"""Per-epoch fusion rules: counting votes, Chair-Varshney, analytic performance."""

from dataclasses import dataclass

import numpy as np
from scipy.stats import binom
from sklearn.base import BaseEstimator

from ._validation import (
    DomainError,
    ParameterError,
    UnsupportedInputError,
    check_bits,
    check_count,
    check_probability,
    check_reports,
)

AND = "AND"
OR = "OR"
KOUTOFN = "KOutOfN"
MAJORITY = "Majority"


@dataclass(frozen=True)
class VotingRule:
    kind: str
    k: int = None

    def __post_init__(self):
        if self.kind not in (AND, OR, KOUTOFN, MAJORITY):
            raise ParameterError(f"unknown voting rule {self.kind!r}")
        if self.kind == KOUTOFN:
            object.__setattr__(self, "k", check_count(self.k, "k", low=1))

    def threshold(self, n):
        """Minimum number of ones that decides 1."""
        if self.kind == AND:
            return n
        if self.kind == OR:
            return 1
        if self.kind == MAJORITY:
            # a tie at exactly n/2 decides 0
            return n // 2 + 1
        if self.k > n:
            raise ParameterError(f"k={self.k} outside [1, {n}]")
        return self.k


@dataclass(frozen=True)
class NodePerformance:
    p_d: np.ndarray
    p_fa: np.ndarray

    def __post_init__(self):
        pd = np.atleast_1d(np.asarray(self.p_d, dtype=float))
        pfa = np.atleast_1d(np.asarray(self.p_fa, dtype=float))
        if pd.shape != pfa.shape or pd.ndim != 1:
            raise ParameterError("p_d and p_fa must be 1-D with equal length")
        if np.any((pd < 0) | (pd > 1) | (pfa < 0) | (pfa > 1)):
            raise ParameterError("node probabilities must lie in [0, 1]")
        object.__setattr__(self, "p_d", pd)
        object.__setattr__(self, "p_fa", pfa)

    @classmethod
    def homogeneous(cls, p_d, p_fa, n):
        return cls(np.full(n, float(p_d)), np.full(n, float(p_fa)))

    @property
    def n(self):
        return self.p_d.shape[0]

    @property
    def is_homogeneous(self):
        return bool(np.all(self.p_d == self.p_d[0]) and np.all(self.p_fa == self.p_fa[0]))


def vote(rule, column):
    col = check_bits(column, "column", ndim=1)
    return int(col.sum() >= rule.threshold(col.shape[0]))


def vote_columns(rule, reports):
    """Vote every epoch of an (…, n, m) report array; returns (…, m)."""
    R = check_reports(reports)
    n = R.shape[-2]
    ones = R.sum(axis=-2, dtype=np.int32)
    return (ones >= rule.threshold(n)).astype(np.int8)


def _kofn_tail(k, n, p):
    # P(Bin(n, p) >= k)
    return float(binom.sf(k - 1, n, p))


def analytic_performance(rule, perf):
    """Global (Q_D, Q_FA) of a counting rule."""
    n = perf.n
    if rule.kind == AND:
        return float(np.prod(perf.p_d)), float(np.prod(perf.p_fa))
    if rule.kind == OR:
        return float(1 - np.prod(1 - perf.p_d)), float(1 - np.prod(1 - perf.p_fa))
    if not perf.is_homogeneous:
        raise UnsupportedInputError("k-out-of-n closed form needs homogeneous nodes")
    k = rule.threshold(n)
    return _kofn_tail(k, n, perf.p_d[0]), _kofn_tail(k, n, perf.p_fa[0])


def chair_varshney_weights(perf):
    pd, pfa = perf.p_d, perf.p_fa
    if np.any((pd <= 0) | (pd >= 1) | (pfa <= 0) | (pfa >= 1)):
        raise DomainError("Chair-Varshney weights need p_d, p_fa strictly inside (0, 1)")
    pmd = 1 - pd
    return np.log((1 - pmd) / pfa), np.log(pmd / (1 - pfa))


def chair_varshney_statistic(column, perf):
    u = check_bits(column, "column")
    w1, w0 = chair_varshney_weights(perf)
    if u.shape[-1] != perf.n:
        raise ParameterError(f"column length {u.shape[-1]} != n={perf.n}")
    return (u * w1 + (1 - u) * w0).sum(axis=-1)


def chair_varshney(column, perf, prior_ratio_log=0.0):
    """Optimal fusion of independent binary decisions.

    Returns 1 when the weighted log-likelihood ratio reaches prior_ratio_log
    (a statistic exactly on the threshold decides 1).
    """
    return int(chair_varshney_statistic(column, perf) >= prior_ratio_log)


def optimal_intermediate_threshold(p10, p11, n, prior0):
    """Optimal l for an l-out-of-n rule with node (P(1|H0), P(1|H1))."""
    p10 = check_probability(p10, "p10", True, True)
    p11 = check_probability(p11, "p11", True, True)
    prior0 = check_probability(prior0, "prior0", True, True)
    n = check_count(n, "n", low=1)
    if p10 == p11:
        raise DomainError("p10 == p11 makes the threshold undefined")
    num = np.log(prior0 / (1 - prior0)) + n * np.log((1 - p10) / (1 - p11))
    den = np.log(p11 * (1 - p10) / (p10 * (1 - p11)))
    return float(num / den)


class VotingFusion(BaseEstimator):
    """Counting rule applied independently to every epoch.

    Parameters
    ----------
    rule : {"Majority", "AND", "OR", "KOutOfN"}
    k : int, threshold for "KOutOfN"
    """

    def __init__(self, rule=MAJORITY, k=None):
        self.rule = rule
        self.k = k

    def fit(self, R, y=None):
        R = check_reports(R)
        self.rule_ = VotingRule(self.rule, self.k)
        self.rule_.threshold(R.shape[-2])
        self.n_nodes_ = R.shape[-2]
        return self

    def predict(self, R):
        if not hasattr(self, "rule_"):
            self.fit(R)
        return vote_columns(self.rule_, R)

    def fit_predict(self, R, y=None):
        return self.fit(R).predict(R)


class ChairVarshneyFusion(BaseEstimator):
    def __init__(self, p_d=0.9, p_fa=0.1, prior_ratio_log=0.0):
        self.p_d = p_d
        self.p_fa = p_fa
        self.prior_ratio_log = prior_ratio_log

    def fit(self, R, y=None):
        R = check_reports(R)
        n = R.shape[-2]
        pd = np.broadcast_to(np.asarray(self.p_d, dtype=float), (n,))
        pfa = np.broadcast_to(np.asarray(self.p_fa, dtype=float), (n,))
        self.perf_ = NodePerformance(pd.copy(), pfa.copy())
        self.weights_ = chair_varshney_weights(self.perf_)
        return self

    def decision_function(self, R):
        R = check_reports(R)
        w1, w0 = self.weights_
        return (R * w1[:, None] + (1 - R) * w0[:, None]).sum(axis=-2)

    def predict(self, R):
        if not hasattr(self, "perf_"):
            self.fit(R)
        return (self.decision_function(R) >= self.prior_ratio_log).astype(np.int8)


def majority_threshold(n):
    return VotingRule(MAJORITY).threshold(n)
