"""Monte-Carlo scenarios that feed the game layer and the benchmark drivers.

A game scenario exposes error_counts(rng, size, attacker, defender), which
draws one block of trials and returns wrong-decision counts for every cell
of the strategy grid from the same draws, plus samples_per_trial.
"""

import numpy as np

from . import model as M
from . import mp as MP
from . import optimal as O
from ._validation import ParameterError, check_count, check_probability
from .fusion import MAJORITY, VotingRule, vote_columns
from .game import StrategyGrid, estimate_payoffs, solve_zero_sum
from .isolation import (ABSOLUTE, REPORT, hard_scores, intermediate_decisions, soft_scores,
                        survivor_vote)
from .rng import DEFAULT_BLOCK, block_rng, map_blocks

HARD = "hard"
SOFT = "soft"
DEFAULT_GRID = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
PILOT_STREAM = 7


def effective_alpha(prior, n):
    """Per-node Byzantine probability implied by a prior (mean count / n)."""
    return prior.mean_count(n) / n


class _WindowScenario:
    def __init__(self, n, m, epsilon, prior, state_prior=None, error_metric="per_bit"):
        self.n = check_count(n, "n", low=1)
        self.m = check_count(m, "m", low=1)
        self.epsilon = check_probability(epsilon, "epsilon", high_open=True)
        self.prior = prior.validate_for(n)
        self.state_prior = state_prior or M.StatePrior.iid()
        if error_metric not in ("per_bit", "per_sequence"):
            raise ParameterError(f"unknown error metric {error_metric!r}")
        self.error_metric = error_metric

    @property
    def samples_per_trial(self):
        return O.samples_per_trial(self.m, self.error_metric)

    def draw(self, rng, size):
        return M.draw_trials(rng, size, self.n, self.m, self.epsilon, self.prior, self.state_prior)

    def _errors(self, dec, states):
        return O.error_counts(dec, states, self.error_metric)

    def describe(self):
        return {"n": self.n, "m": self.m, "epsilon": self.epsilon,
                "prior": self.prior.to_dict(),
                "state_prior": {"kind": self.state_prior.kind, "rho": self.state_prior.rho},
                "error_metric": self.error_metric}

    def check_grid(self, grid):
        for g in (grid.attacker,):
            if min(g) < 0 or max(g) > 1:
                raise ParameterError("attacker grid holds flip probabilities in [0, 1]")


class OptimalGameScenario(_WindowScenario):
    """Rows: Byzantine flip probability.  Columns: the FC's guess of it."""

    def __init__(self, *args, max_m=22, **kw):
        super().__init__(*args, **kw)
        self.max_m = max_m

    def describe(self):
        return {"scenario": "optimal_game", **super().describe()}

    def check_grid(self, grid):
        super().check_grid(grid)
        if min(grid.defender) < 0 or max(grid.defender) > 1:
            raise ParameterError("defender grid holds flip probabilities in [0, 1]")

    def error_counts(self, rng, size, attacker, defender):
        d = self.draw(rng, size)
        cfgs = [O.MapConfig(self.prior, M.LocalChannel(self.epsilon, q), self.state_prior, self.max_m)
                for q in defender]
        out = np.zeros((len(attacker), len(defender)), dtype=np.int64)
        for a, p in enumerate(attacker):
            idx = O.HistogramIndex(d.reports(p), self.max_m)
            for j, cfg in enumerate(cfgs):
                out[a, j] = self._errors(idx.decide(cfg), d.states)
        return out


class IsolationGameScenario(_WindowScenario):
    """Rows: Byzantine flip probability.  Columns: isolation threshold eta.

    The FC fuses by majority of the nodes whose reputation reaches eta.
    Soft reputations assume P_d = 1 - epsilon, P_fa = epsilon, the prior's
    mean Byzantine fraction and the FC's flip guess p_mal_fc.
    """

    def __init__(self, *args, scheme=HARD, p_mal_fc=1.0, intermediate_l=None,
                 orientation=REPORT, **kw):
        super().__init__(*args, **kw)
        if scheme not in (HARD, SOFT):
            raise ParameterError(f"scheme must be {HARD!r} or {SOFT!r}")
        if orientation not in (ABSOLUTE, REPORT):
            raise ParameterError(f"orientation must be {ABSOLUTE!r} or {REPORT!r}")
        self.scheme = scheme
        self.p_mal_fc = check_probability(p_mal_fc, "p_mal_fc")
        self.intermediate_l = intermediate_l
        self.orientation = orientation

    def describe(self):
        return {"scenario": "isolation_game", "scheme": self.scheme, "p_mal_fc": self.p_mal_fc,
                "orientation": self.orientation, **super().describe()}

    def scores(self, R):
        if self.scheme == HARD:
            return hard_scores(R, intermediate_decisions(R, self.intermediate_l))
        a = effective_alpha(self.prior, self.n)
        return soft_scores(R, a, self.p_mal_fc, 1 - self.epsilon, self.epsilon,
                           orientation=self.orientation)

    def isolation_counts(self, rng, size, p_mal, etas):
        """Isolated Byzantine / honest node counts per eta, with class totals."""
        d = self.draw(rng, size)
        s = self.scores(d.reports(p_mal))
        iso = s[:, :, None] < np.asarray(etas)[None, None, :]
        nb = int(d.byz.sum())
        nh = d.byz.size - nb
        return (iso & d.byz[:, :, None]).sum(axis=(0, 1)), (iso & ~d.byz[:, :, None]).sum(axis=(0, 1)), nb, nh

    def error_counts(self, rng, size, attacker, defender):
        d = self.draw(rng, size)
        fallback = rng.integers(0, 2, d.states.shape, dtype=np.int8)
        out = np.zeros((len(attacker), len(defender)), dtype=np.int64)
        for a, p in enumerate(attacker):
            R = d.reports(p)
            s = self.scores(R)
            for j, eta in enumerate(defender):
                dec, _ = survivor_vote(R, s >= eta, fallback)
                out[a, j] = self._errors(dec, d.states)
        return out

    def eta_grid(self, attacker, seed, levels=18, pilot_trials=2000):
        """Thresholds for the FC.

        Hard: every integer 0..m.  Soft: `levels` equally spaced values over
        the range of scores seen in a pilot run over the attacker grid.
        """
        if self.scheme == HARD:
            return tuple(float(x) for x in range(self.m + 1))
        levels = check_count(levels, "levels", low=2)
        rng = block_rng(seed, 0, stream=PILOT_STREAM)
        d = self.draw(rng, check_count(pilot_trials, "pilot_trials", low=1))
        lo, hi = np.inf, -np.inf
        for p in attacker:
            s = self.scores(d.reports(p))
            lo, hi = min(lo, s.min()), max(hi, s.max())
        return tuple(float(x) for x in np.round(np.linspace(lo, hi, levels), 6))


# -- fixed-strategy comparison of fusion schemes ----------------------------------

def compare_schemes(n, m, epsilon, prior, trials, seed, grid=DEFAULT_GRID, soft_levels=18,
                    state_prior=None, block_size=DEFAULT_BLOCK, threads=None):
    """Error probability at the equilibrium of Maj, HardIS, SoftIS and OPT.

    Maj, HardIS and SoftIS face P_mal = 1 (dominant for the attacker against
    these rules); the isolation schemes use their best threshold.  OPT is the
    value of the optimal-fusion game over `grid`.  All four share trial draws.
    """
    base = dict(state_prior=state_prior)
    hard = IsolationGameScenario(n, m, epsilon, prior, scheme=HARD, **base)
    soft = IsolationGameScenario(n, m, epsilon, prior, scheme=SOFT, **base)
    opt = OptimalGameScenario(n, m, epsilon, prior, **base)
    h_eta = hard.eta_grid((1.0,), seed)
    s_eta = soft.eta_grid((1.0,), seed, levels=soft_levels)
    maj = VotingRule(MAJORITY)

    def block(rng, size, b):
        d = hard.draw(rng, size)
        fallback = rng.integers(0, 2, d.states.shape, dtype=np.int8)
        R = d.reports(1.0)
        e_maj = O.error_counts(vote_columns(maj, R), d.states)
        e_hard = np.zeros(len(h_eta), dtype=np.int64)
        e_soft = np.zeros(len(s_eta), dtype=np.int64)
        for scen, etas, acc in ((hard, h_eta, e_hard), (soft, s_eta, e_soft)):
            s = scen.scores(R)
            for j, eta in enumerate(etas):
                acc[j] = O.error_counts(survivor_vote(R, s >= eta, fallback)[0], d.states)
        e_opt = np.zeros((len(grid), len(grid)), dtype=np.int64)
        cfgs = [O.MapConfig(prior, M.LocalChannel(epsilon, q), opt.state_prior) for q in grid]
        for a, p in enumerate(grid):
            idx = O.HistogramIndex(d.reports(p))
            for j, cfg in enumerate(cfgs):
                e_opt[a, j] = O.error_counts(idx.decide(cfg), d.states)
        return e_maj, e_hard, e_soft, e_opt

    parts = map_blocks(block, trials, seed, block_size, threads)
    total = trials * m
    e_maj = sum(p[0] for p in parts) / total
    e_hard = sum(p[1] for p in parts) / total
    e_soft = sum(p[2] for p in parts) / total
    v_opt = sum(p[3] for p in parts) / total
    eq = solve_zero_sum(v_opt)
    return {
        "Maj": float(e_maj),
        "HardIS": float(e_hard.min()),
        "SoftIS": float(e_soft.min()),
        "OPT": float(eq.value),
        "hard_eta": h_eta[int(np.argmin(e_hard))],
        "soft_eta": s_eta[int(np.argmin(e_soft))],
        "hard_curve": e_hard.tolist(),
        "soft_curve": e_soft.tolist(),
        "soft_etas": list(s_eta),
        "opt_matrix": v_opt.tolist(),
        "opt_equilibrium": eq.to_dict(),
        "samples": total,
    }


# -- message passing benchmarks ------------------------------------------------------

def _placement_prior(alpha, n, placement):
    if placement == "fixed":
        return M.ByzantinePrior.fixed(int(round(alpha * n)))
    if placement == "independent":
        return M.ByzantinePrior.independent(alpha)
    raise ParameterError(f"placement must be 'fixed' or 'independent', got {placement!r}")


def mp_alpha_sweep(n, m, epsilon, alphas, p_mal, trials, seed, rho=0.5, iterations=5,
                   schemes=("MP", "MAP", "Maj"), placement="fixed", block_size=DEFAULT_BLOCK,
                   threads=None):
    """Bit error rate per alpha for each scheme on shared trials.

    With placement "fixed" a trial holds exactly round(alpha * n) Byzantines;
    the decoders assume each node is Byzantine independently with prob. alpha.
    """
    sp = M.StatePrior.markov(rho) if rho != 0.5 else M.StatePrior.iid()
    known = {"MP", "MAP", "Maj"}
    if not set(schemes) <= known:
        raise ParameterError(f"unknown schemes {set(schemes) - known}")
    if "MAP" in schemes and m > 22:
        raise ParameterError("MAP is limited to m <= 22; drop it from schemes for long windows")
    out = {s: [] for s in schemes}
    for k, alpha in enumerate(alphas):
        prior = _placement_prior(alpha, n, placement)
        fc_prior = M.ByzantinePrior.independent(alpha)
        mcfg = MP.MpConfig(alpha, epsilon, p_mal, rho=rho, iterations=iterations)
        ocfg = O.MapConfig(fc_prior, M.LocalChannel(epsilon, p_mal), sp)

        def block(rng, size, b):
            d = M.draw_trials(rng, size, n, m, epsilon, prior, sp)
            R = d.reports(p_mal)
            res = {}
            if "MP" in schemes:
                res["MP"] = O.error_counts(MP.run(R, mcfg).decisions, d.states)
            if "MAP" in schemes:
                res["MAP"] = O.error_counts(O.map_decide_batch(R, ocfg), d.states)
            if "Maj" in schemes:
                res["Maj"] = O.error_counts(vote_columns(VotingRule(MAJORITY), R), d.states)
            return res

        # the same seed for every alpha keeps the comparison paired across the sweep
        parts = map_blocks(block, trials, seed, block_size, threads)
        for s in schemes:
            out[s].append(sum(p[s] for p in parts) / (trials * m))
    return {"alpha": list(alphas), **out}


def mp_m_sweep(n, ms, epsilon, alpha, trials, seed, rho=0.95, p_mals=(1.0, 0.5), iterations=5,
               placement="fixed", block_size=DEFAULT_BLOCK, threads=None):
    """MP bit error rate versus window length for each attacker flip probability."""
    sp = M.StatePrior.markov(rho) if rho != 0.5 else M.StatePrior.iid()
    prior = _placement_prior(alpha, n, placement)
    out = {p: [] for p in p_mals}
    for m in ms:
        def block(rng, size, b, m=m):
            d = M.draw_trials(rng, size, n, m, epsilon, prior, sp)
            return [O.error_counts(MP.run(d.reports(p), MP.MpConfig(alpha, epsilon, p, rho=rho,
                                                                     iterations=iterations)).decisions,
                                   d.states) for p in p_mals]

        parts = map_blocks(block, trials, seed, block_size, threads)
        for k, p in enumerate(p_mals):
            out[p].append(sum(x[k] for x in parts) / (trials * m))
    return {"m": list(ms), "p_mal": list(p_mals), "errors": [out[p] for p in p_mals]}


def crossover(ms, err_hi, err_lo):
    """First window length where the low flip probability hurts the FC at least as much."""
    for m, a, b in zip(ms, err_hi, err_lo):
        if b >= a:
            return m
    return None


def estimate_game(scenario, attacker, defender, trials, seed, block_size=DEFAULT_BLOCK, threads=None):
    return estimate_payoffs(scenario, StrategyGrid(tuple(attacker), tuple(defender)), trials, seed,
                            block_size, threads)
