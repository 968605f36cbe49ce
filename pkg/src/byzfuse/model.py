"""Generative model: states, Byzantine placement, local errors and reports.

Conventions used across the package
  * states and reports are int8 arrays of 0/1
  * a placement is a bool array, True = Byzantine
  * report matrices are (n, m): node rows, epoch columns; batched draws carry
    a leading trial axis (T, n, m)
"""

from dataclasses import dataclass, field
from math import comb

import numpy as np

from ._validation import ParameterError, check_bits, check_count, check_probability
from .rng import make_rng

IID = "IID"
MARKOV = "Markov"

INDEPENDENT = "IndependentAlpha"
FIXED = "FixedCount"
BOUNDED = "BoundedMaxEnt"
UNCONSTRAINED = "Unconstrained"


@dataclass(frozen=True)
class StatePrior:
    kind: str = IID
    rho: float = 0.5
    p1: float = 0.5

    def __post_init__(self):
        if self.kind not in (IID, MARKOV):
            raise ParameterError(f"unknown state prior kind {self.kind!r}")
        object.__setattr__(self, "rho", check_probability(self.rho, "rho"))
        object.__setattr__(self, "p1", check_probability(self.p1, "p1"))

    @classmethod
    def iid(cls, p1=0.5):
        return cls(IID, 0.5, p1)

    @classmethod
    def markov(cls, rho, p1=0.5):
        return cls(MARKOV, rho, p1)

    def log_prob(self, seqs):
        """log p(s^m) for an array of sequences (..., m)."""
        s = np.asarray(seqs)
        with np.errstate(divide="ignore"):
            lp1, lp0 = np.log(self.p1), np.log1p(-self.p1)
            first = np.where(s[..., 0] == 1, lp1, lp0)
            if self.kind == IID:
                rest = np.where(s[..., 1:] == 1, lp1, lp0).sum(axis=-1)
            else:
                flips = (s[..., 1:] != s[..., :-1])
                rest = np.where(flips, np.log(self.rho), np.log1p(-self.rho)).sum(axis=-1)
        return first + rest


@dataclass(frozen=True)
class LocalChannel:
    epsilon: float
    p_mal: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "epsilon", check_probability(self.epsilon, "epsilon", high_open=True))
        object.__setattr__(self, "p_mal", check_probability(self.p_mal, "p_mal"))

    @property
    def delta(self):
        return byzantine_error(self.epsilon, self.p_mal)


def byzantine_error(epsilon, p_mal):
    """Probability that a Byzantine report disagrees with the state."""
    return epsilon * (1.0 - p_mal) + (1.0 - epsilon) * p_mal


@dataclass(frozen=True)
class ByzantinePrior:
    kind: str
    alpha: float = None
    n_b: int = None
    h: int = None

    def __post_init__(self):
        if self.kind == INDEPENDENT:
            object.__setattr__(self, "alpha", check_probability(self.alpha, "alpha"))
        elif self.kind == UNCONSTRAINED:
            object.__setattr__(self, "alpha", 0.5)
        elif self.kind == FIXED:
            object.__setattr__(self, "n_b", check_count(self.n_b, "n_b"))
        elif self.kind == BOUNDED:
            object.__setattr__(self, "h", check_count(self.h, "h", low=1))
        else:
            raise ParameterError(f"unknown Byzantine prior kind {self.kind!r}")

    @classmethod
    def independent(cls, alpha):
        return cls(INDEPENDENT, alpha=alpha)

    @classmethod
    def fixed(cls, n_b):
        return cls(FIXED, n_b=n_b)

    @classmethod
    def bounded(cls, h):
        return cls(BOUNDED, h=h)

    @classmethod
    def unconstrained(cls):
        return cls(UNCONSTRAINED)

    def validate_for(self, n):
        if self.kind == FIXED and self.n_b > n:
            raise ParameterError(f"n_b={self.n_b} exceeds n={n}")
        if self.kind == BOUNDED and self.h > n:
            raise ParameterError(f"h={self.h} exceeds n={n}")
        return self

    def count_pmf(self, n):
        """P(N_B = k), k = 0..n."""
        self.validate_for(n)
        k = np.arange(n + 1)
        if self.kind in (INDEPENDENT, UNCONSTRAINED):
            # direct product form; scipy's binom.pmf overflows for denormal alpha
            a = self.alpha
            c = np.array([comb(n, j) for j in k], dtype=float)
            return c * np.power(a, k) * np.power(1.0 - a, n - k)
        if self.kind == FIXED:
            return (k == self.n_b).astype(float)
        w = np.array([comb(n, j) if j < self.h else 0 for j in k], dtype=float)
        return w / w.sum()

    def mean_count(self, n):
        return float(np.dot(np.arange(n + 1), self.count_pmf(n)))

    def to_dict(self):
        d = {"kind": self.kind}
        for key in ("alpha", "n_b", "h"):
            v = getattr(self, key)
            if v is not None and self.kind != UNCONSTRAINED:
                d[key] = v
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind")
        return cls(kind, **d)


@dataclass(frozen=True)
class ReportMatrix:
    reports: np.ndarray
    truth: np.ndarray
    placement: np.ndarray

    def __post_init__(self):
        n, m = self.reports.shape
        if self.truth.shape != (m,) or self.placement.shape != (n,):
            raise ParameterError("report matrix dimensions inconsistent with truth/placement")

    @property
    def n(self):
        return self.reports.shape[0]

    @property
    def m(self):
        return self.reports.shape[1]


# -- batched samplers -------------------------------------------------------

def sample_states_batch(prior, m, size, rng):
    m = check_count(m, "m", low=1)
    u = rng.random((size, m))
    if prior.kind == IID:
        return (u < prior.p1).astype(np.int8)
    s = np.empty((size, m), dtype=np.int8)
    s[:, 0] = u[:, 0] < prior.p1
    flips = (u[:, 1:] < prior.rho).astype(np.int8)
    s[:, 1:] = (s[:, :1] + np.cumsum(flips, axis=1)) % 2
    return s


def _random_subset(rng, size, n, k):
    """Bool (size, n) with exactly k[t] True entries per row, uniform."""
    ranks = np.argsort(rng.random((size, n)), axis=1).argsort(axis=1)
    return ranks < np.asarray(k).reshape(-1, 1)


def sample_placement_batch(prior, n, size, rng):
    n = check_count(n, "n", low=1)
    prior.validate_for(n)
    if prior.kind in (INDEPENDENT, UNCONSTRAINED):
        return rng.random((size, n)) < prior.alpha
    if prior.kind == FIXED:
        return _random_subset(rng, size, n, np.full(size, prior.n_b))
    pmf = prior.count_pmf(n)[: prior.h]
    cdf = np.cumsum(pmf)
    cdf[-1] = 1.0
    k = np.searchsorted(cdf, rng.random(size), side="right")
    return _random_subset(rng, size, n, k)


@dataclass
class TrialDraws:
    """Underlying randomness of a block of trials.

    Reports for any Byzantine flip probability are a deterministic function of
    these draws, which gives common random numbers across strategy grids.
    """

    states: np.ndarray       # (T, m) int8
    byz: np.ndarray          # (T, n) bool
    local_err: np.ndarray    # (T, n, m) bool, local decision differs from state
    flip_u: np.ndarray       # (T, n, m) uniforms for the Byzantine flip
    extra: dict = field(default_factory=dict)

    @property
    def size(self):
        return self.states.shape[0]

    def reports(self, p_mal):
        flip = self.byz[:, :, None] & (self.flip_u < p_mal)
        wrong = self.local_err ^ flip
        return (self.states[:, None, :] ^ wrong).astype(np.int8)

    def local_decisions(self):
        return (self.states[:, None, :] ^ self.local_err).astype(np.int8)


def draw_trials(rng, size, n, m, epsilon, byz_prior, state_prior=None):
    state_prior = state_prior or StatePrior.iid()
    states = sample_states_batch(state_prior, m, size, rng)
    byz = sample_placement_batch(byz_prior, n, size, rng)
    local_err = rng.random((size, n, m)) < epsilon
    flip_u = rng.random((size, n, m))
    return TrialDraws(states, byz, local_err, flip_u)


# -- single-draw API --------------------------------------------------------

def sample_states(prior, m, seed=None):
    return sample_states_batch(prior, m, 1, make_rng(seed))[0]


def sample_placement(prior, n, seed=None):
    return sample_placement_batch(prior, n, 1, make_rng(seed))[0]


def generate_reports(states, placement, channel, seed=None):
    s = check_bits(states, "states", ndim=1)
    a = np.asarray(placement, dtype=bool)
    if a.ndim != 1:
        raise ParameterError("placement must be 1-D")
    rng = make_rng(seed)
    n, m = a.shape[0], s.shape[0]
    err = rng.random((n, m)) < channel.epsilon
    flip = a[:, None] & (rng.random((n, m)) < channel.p_mal)
    R = (s[None, :] ^ (err ^ flip)).astype(np.int8)
    return ReportMatrix(R, s.copy(), a.copy())


def report_likelihood(r, s, is_byz, channel):
    p = channel.delta if is_byz else channel.epsilon
    return 1.0 - p if int(r) == int(s) else p


def match_count(row, states):
    row = np.asarray(row)
    states = np.asarray(states)
    if row.shape != states.shape:
        raise ParameterError(f"length mismatch {row.shape} vs {states.shape}")
    return int(np.count_nonzero(row == states))
