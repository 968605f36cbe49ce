"""Jointly optimal (MAP) fusion over a window of m epochs.

The FC scores every candidate state sequence s^m.  The likelihood of the
reports depends on a candidate only through m_eq(i), the number of epochs in
which node i agrees with it, so the score is a function of the histogram of
m_eq values over nodes.  Candidates sharing a histogram share a score, which
is what makes exact ties (and the lexicographic tie rule) well defined.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator

from . import model as M
from ._validation import CapacityError, ParameterError, check_count, check_reports, clamp_prob
from .rng import DEFAULT_BLOCK, sum_blocks

TIE_TOL = 1e-9


@dataclass(frozen=True)
class MapConfig:
    prior: M.ByzantinePrior
    channel: M.LocalChannel          # p_mal here is the FC's guess
    state_prior: M.StatePrior = field(default_factory=M.StatePrior.iid)
    max_m: int = 22


@dataclass(frozen=True)
class OptimalSetup:
    n: int
    m: int
    epsilon: float
    prior: M.ByzantinePrior
    state_prior: M.StatePrior = field(default_factory=M.StatePrior.iid)

    def __post_init__(self):
        check_count(self.n, "n", low=1)
        check_count(self.m, "m", low=1)
        self.prior.validate_for(self.n)


def node_log_factors(epsilon, delta, m):
    """log h(q), log b(q) for q = m_eq = 0..m (honest, Byzantine)."""
    q = np.arange(m + 1)
    e, d = clamp_prob(float(epsilon)), clamp_prob(float(delta))
    logh = q * np.log1p(-e) + (m - q) * np.log(e)
    logb = q * np.log1p(-d) + (m - q) * np.log(d)
    return logh, logb


# -- dynamic programming over Byzantine subsets -----------------------------

class DpTable:
    """Triangular table of f_{r,k} (log domain) over the last r nodes.

    f_{r,k} = sum over k-subsets I of the last r nodes of
              prod_{i in I} b(i) * prod_{i not in I} h(i)
    """

    def __init__(self, b, h):
        b = np.asarray(b, dtype=float)
        h = np.asarray(h, dtype=float)
        if b.shape != h.shape or b.ndim != 1:
            raise ParameterError("b and h must be 1-D with equal length")
        if np.any(b < 0) or np.any(h < 0):
            raise ParameterError("b and h must be nonnegative")
        n = b.shape[0]
        with np.errstate(divide="ignore"):
            lb, lh = np.log(b), np.log(h)
        t = np.full((n + 1, n + 1), -np.inf)
        t[0, 0] = 0.0
        # row r uses nodes n-r .. n-1; node n-r is the newly added "first" node
        for r in range(1, n + 1):
            i = n - r
            t[r, 0] = t[r - 1, 0] + lh[i]
            t[r, r] = t[r - 1, r - 1] + lb[i]
            if r > 1:
                t[r, 1:r] = np.logaddexp(lb[i] + t[r - 1, 0:r - 1], lh[i] + t[r - 1, 1:r])
        self.log_values = t
        self.n = n

    def value(self, r, k):
        return float(np.exp(self.log_values[r, k]))


def dp_log_sum(b, h, k):
    """log f_{n,k}, evaluating only the band of cells the recursion needs."""
    b = np.asarray(b, dtype=float)
    h = np.asarray(h, dtype=float)
    n = b.shape[0]
    if h.shape != b.shape:
        raise ParameterError("b and h must have equal length")
    k = check_count(k, "k", low=0, high=n)
    if np.any(b < 0) or np.any(h < 0):
        raise ParameterError("b and h must be nonnegative")
    with np.errstate(divide="ignore"):
        lb, lh = np.log(b), np.log(h)
    # f_{r,j} is needed for max(0, k-(n-r)) <= j <= min(k, r)
    prev = np.array([0.0])   # r = 0: f_{0,0} = 1
    lo_prev = 0
    for r in range(1, n + 1):
        i = n - r
        lo = max(0, k - (n - r))
        hi = min(k, r)
        cur = np.full(hi - lo + 1, -np.inf)
        for j in range(lo, hi + 1):
            a = -np.inf
            if j - 1 >= lo_prev and j - 1 < lo_prev + prev.size:
                a = lb[i] + prev[j - 1 - lo_prev]
            c = -np.inf
            if j >= lo_prev and j < lo_prev + prev.size:
                c = lh[i] + prev[j - lo_prev]
            cur[j - lo] = np.logaddexp(a, c)
        prev, lo_prev = cur, lo
    return float(prev[k - lo_prev])


def dp_sum(b, h, k):
    """Sum over k-subsets I of prod_{I} b * prod_{not I} h."""
    return float(np.exp(dp_log_sum(b, h, k)))


def _forward_dp(logb_nodes, logh_nodes, kmax):
    """Log f_{n,k} for k = 0..kmax, vectorized over leading axis (U, n)."""
    U, n = logb_nodes.shape
    F = np.full((U, kmax + 1), -np.inf)
    F[:, 0] = 0.0
    for i in range(n):
        lb = logb_nodes[:, i:i + 1]
        lh = logh_nodes[:, i:i + 1]
        G = F + lh
        G[:, 1:] = np.logaddexp(G[:, 1:], F[:, :-1] + lb)
        F = G
    return F


# -- scoring ------------------------------------------------------------------

def score_histograms(H, cfg, n=None):
    """Log objective for m_eq histograms H (U, m+1).

    The histogram determines the score, so equal histograms score equally.
    """
    H = np.asarray(H)
    m = H.shape[1] - 1
    n = int(H[0].sum()) if n is None else n
    cfg.prior.validate_for(n)
    eps = cfg.channel.epsilon
    logh, logb = node_log_factors(eps, cfg.channel.delta, m)
    kind = cfg.prior.kind
    if kind in (M.INDEPENDENT, M.UNCONSTRAINED):
        a = cfg.prior.alpha
        with np.errstate(divide="ignore"):
            g = np.logaddexp(np.log1p(-a) + logh, np.log(a) + logb)
        # 0 * -inf must contribute 0; accumulate in fixed q order
        out = np.zeros(H.shape[0])
        for q in range(m + 1):
            out += np.where(H[:, q] > 0, H[:, q] * g[q], 0.0)
        return out
    # expand each histogram into nodes sorted by m_eq
    q_of_node = np.repeat(np.tile(np.arange(m + 1), (H.shape[0], 1)).ravel(), H.ravel())
    q_of_node = q_of_node.reshape(H.shape[0], n)
    if kind == M.FIXED:
        kmax = cfg.prior.n_b
        F = _forward_dp(logb[q_of_node], logh[q_of_node], kmax)
        return F[:, kmax]
    kmax = cfg.prior.h - 1
    F = _forward_dp(logb[q_of_node], logh[q_of_node], kmax)
    return logsumexp(F, axis=1)


def candidates(m):
    """All 2^m sequences in lexicographic order (s_1 most significant)."""
    c = np.arange(1 << m, dtype=np.int64)
    shifts = np.arange(m - 1, -1, -1)
    return ((c[:, None] >> shifts) & 1).astype(np.int8)


def score_sequence(reports, candidate, cfg):
    R = check_reports(reports)
    s = np.asarray(candidate, dtype=np.int8)
    if R.ndim != 2 or s.shape != (R.shape[1],):
        raise ParameterError("candidate length must equal the number of epochs")
    meq = (R == s[None, :]).sum(axis=1)
    H = np.bincount(meq, minlength=R.shape[1] + 1)[None, :]
    return float(score_histograms(H, cfg, R.shape[0])[0] + cfg.state_prior.log_prob(s))


_POPCOUNT = {}


def _popcount_table(m):
    if m not in _POPCOUNT:
        x = np.arange(1 << m, dtype=np.int64)
        pc = np.zeros(1 << m, dtype=np.uint8)
        for bit in range(m):
            pc += ((x >> bit) & 1).astype(np.uint8)
        _POPCOUNT[m] = pc
    return _POPCOUNT[m]


class HistogramIndex:
    """Unique m_eq histograms of every (trial, candidate) pair of a batch.

    Attributes
    ----------
    H : (U, m+1) unique histograms
    inverse : (T, C) index into H
    """

    def __init__(self, R, max_m=22):
        R = check_reports(R)
        if R.ndim == 2:
            R = R[None]
        T, n, m = R.shape
        if m > max_m:
            raise CapacityError(
                f"m={m} exceeds the exhaustive MAP guard ({max_m}); "
                "use the message-passing decoder (byzfuse.mp) for long windows")
        self.n, self.m = n, m
        weights = (1 << np.arange(m - 1, -1, -1)).astype(np.int64)
        rowbits = R.astype(np.int64) @ weights                        # (T, n)
        C = 1 << m
        cand = np.arange(C, dtype=np.int64)
        eqtab = (m - _popcount_table(m)).astype(np.uint8)
        base = n + 1
        use_keys = (m + 1) * np.log2(base) < 62
        if use_keys:
            powk = base ** np.arange(m + 1, dtype=np.int64)
        # chunk over candidates to bound memory at ~4e6 cells
        step = max(1, int(4e6 // max(1, T * n)))
        if use_keys:
            keys = np.empty((T, C), dtype=np.int64)
            for c0 in range(0, C, step):
                cc = cand[c0:c0 + step]
                meq = eqtab[rowbits[:, :, None] ^ cc[None, None, :]]
                keys[:, c0:c0 + step] = powk[meq].sum(axis=1)
            uk, inv = np.unique(keys, return_inverse=True)
            H = (uk[:, None] // powk[None, :]) % base
        else:
            hist = np.empty((T, C, m + 1), dtype=np.int16)
            for c0 in range(0, C, step):
                cc = cand[c0:c0 + step]
                meq = eqtab[rowbits[:, :, None] ^ cc[None, None, :]]
                for q in range(m + 1):
                    hist[:, c0:c0 + step, q] = (meq == q).sum(axis=1)
            H, inv = np.unique(hist.reshape(T * C, m + 1), axis=0, return_inverse=True)
        self.H = np.asarray(H, dtype=np.int64)
        self.inverse = np.asarray(inv).reshape(T, C)

    def decide(self, cfg):
        """MAP decisions (T, m) under cfg with the lexicographic tie rule."""
        su = score_histograms(self.H, cfg, self.n)
        logp = cfg.state_prior.log_prob(candidates(self.m))
        scores = su[self.inverse] + logp[None, :]
        best = scores.max(axis=1, keepdims=True)
        # first candidate within tolerance of the max = lexicographically smallest
        idx = np.argmax(scores >= best - TIE_TOL * (1.0 + np.abs(best)), axis=1)
        return candidates(self.m)[idx]


def map_decide_batch(R, cfg):
    return HistogramIndex(R, cfg.max_m).decide(cfg)


def map_decide(reports, cfg):
    R = check_reports(reports)
    if R.ndim != 2:
        raise ParameterError("map_decide expects a single (n, m) report matrix")
    return map_decide_batch(R[None], cfg)[0]


def error_counts(decisions, states, metric="per_bit"):
    wrong = decisions != states
    if metric == "per_bit":
        return int(wrong.sum())
    if metric == "per_sequence":
        return int(wrong.any(axis=1).sum())
    raise ParameterError(f"unknown error metric {metric!r}")


def samples_per_trial(m, metric="per_bit"):
    return m if metric == "per_bit" else 1


def estimate_error_probability(setup, p_mal_true, p_mal_fc, trials, seed,
                               error_metric="per_bit", block_size=DEFAULT_BLOCK, threads=None):
    """Monte-Carlo error rate of the MAP rule when the FC assumes p_mal_fc."""
    trials = check_count(trials, "trials", low=1)
    cfg = MapConfig(setup.prior, M.LocalChannel(setup.epsilon, p_mal_fc), setup.state_prior)

    def block(rng, size, b):
        d = M.draw_trials(rng, size, setup.n, setup.m, setup.epsilon, setup.prior, setup.state_prior)
        dec = map_decide_batch(d.reports(p_mal_true), cfg)
        return error_counts(dec, d.states, error_metric)

    errs = sum_blocks(block, trials, seed, block_size, threads)
    return errs / (trials * samples_per_trial(setup.m, error_metric))


class MAPFusion(BaseEstimator):
    """Window MAP fusion under a Byzantine placement prior.

    Parameters
    ----------
    prior : ByzantinePrior
    epsilon : float, local error probability
    p_mal : float, flip probability the FC assumes for Byzantines
    rho : float or None, Markov flip probability of the states (None = i.i.d.)
    """

    def __init__(self, prior=None, epsilon=0.1, p_mal=1.0, rho=None, max_m=22):
        self.prior = prior
        self.epsilon = epsilon
        self.p_mal = p_mal
        self.rho = rho
        self.max_m = max_m

    def _config(self):
        prior = self.prior if self.prior is not None else M.ByzantinePrior.unconstrained()
        sp = M.StatePrior.iid() if self.rho is None else M.StatePrior.markov(self.rho)
        return MapConfig(prior, M.LocalChannel(self.epsilon, self.p_mal), sp, self.max_m)

    def fit(self, R, y=None):
        R = check_reports(R)
        self.config_ = self._config()
        self.config_.prior.validate_for(R.shape[-2])
        return self

    def predict(self, R):
        if not hasattr(self, "config_"):
            self.fit(R)
        R = check_reports(R)
        if R.ndim == 2:
            return map_decide(R, self.config_)
        return map_decide_batch(R, self.config_)
