"""Zero-sum game layer: payoff estimation, dominance, saddle points, LP minimax.

Payoffs are error probabilities.  The attacker picks the row and maximizes,
the defender (fusion center) picks the column and minimizes.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from ._validation import ParameterError, check_count
from .rng import DEFAULT_BLOCK, map_blocks

PURE_DOMINANT = "PureDominant"
PURE_NASH = "PureNash"
MIXED = "Mixed"


@dataclass(frozen=True)
class StrategyGrid:
    attacker: tuple
    defender: tuple

    def __post_init__(self):
        for name in ("attacker", "defender"):
            g = np.asarray(getattr(self, name), dtype=float).ravel()
            if g.size == 0:
                raise ParameterError(f"{name} grid is empty")
            if np.any(np.diff(g) <= 0):
                raise ParameterError(f"{name} grid must be strictly increasing")
            object.__setattr__(self, name, tuple(float(x) for x in g))

    @property
    def shape(self):
        return len(self.attacker), len(self.defender)


@dataclass
class PayoffMatrix:
    v: np.ndarray
    attacker: tuple = None
    defender: tuple = None
    trials: int = 0
    seed: int = None
    samples: int = 0           # Bernoulli samples per cell (trials x bits)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float)
        if self.v.ndim != 2:
            raise ParameterError("payoff matrix must be 2-D")
        r, c = self.v.shape
        self.attacker = tuple(range(r)) if self.attacker is None else tuple(self.attacker)
        self.defender = tuple(range(c)) if self.defender is None else tuple(self.defender)
        if len(self.attacker) != r or len(self.defender) != c:
            raise ParameterError("strategy labels do not match the matrix shape")

    @property
    def stderr(self):
        if not self.samples:
            return np.zeros_like(self.v)
        p = np.clip(self.v, 0, 1)
        return np.sqrt(p * (1 - p) / self.samples)

    def submatrix(self, rows, cols):
        rows, cols = list(rows), list(cols)
        return PayoffMatrix(self.v[np.ix_(rows, cols)],
                            tuple(self.attacker[i] for i in rows),
                            tuple(self.defender[j] for j in cols),
                            self.trials, self.seed, self.samples, dict(self.metadata))


@dataclass
class Equilibrium:
    kind: str
    attacker_strategy: np.ndarray
    defender_strategy: np.ndarray
    value: float
    attacker_labels: tuple = ()
    defender_labels: tuple = ()
    duality_gap: float = 0.0

    def support(self, side, tol=1e-9):
        p = self.attacker_strategy if side == "attacker" else self.defender_strategy
        labels = self.attacker_labels if side == "attacker" else self.defender_labels
        return [labels[i] for i in np.nonzero(p > tol)[0]]

    def to_dict(self):
        return {
            "kind": self.kind,
            "value": float(self.value),
            "attacker_strategy": [float(x) for x in self.attacker_strategy],
            "defender_strategy": [float(x) for x in self.defender_strategy],
            "attacker_labels": list(self.attacker_labels),
            "defender_labels": list(self.defender_labels),
            "duality_gap": float(self.duality_gap),
        }


def _as_matrix(v):
    if isinstance(v, PayoffMatrix):
        return v
    return PayoffMatrix(np.asarray(v, dtype=float))


# -- estimation ---------------------------------------------------------------

def estimate_payoffs(scenario, grid, trials, seed, block_size=DEFAULT_BLOCK, threads=None):
    """Monte-Carlo payoff matrix with common random numbers.

    `scenario` provides error_counts(rng, size, attacker, defender) returning
    an integer (|attacker|, |defender|) array of wrong decisions for one block
    of trials, and samples_per_trial.  All cells of a block see the same draws.
    A scenario that drops some trials returns (errors, valid_trials) instead.
    """
    trials = check_count(trials, "trials", low=1)
    if hasattr(scenario, "check_grid"):
        scenario.check_grid(grid)

    spt = int(scenario.samples_per_trial)

    def block(rng, size, b):
        out = scenario.error_counts(rng, size, grid.attacker, grid.defender)
        if isinstance(out, tuple):
            c, valid = (np.asarray(x, dtype=np.int64) for x in out)
        else:
            c = np.asarray(out, dtype=np.int64)
            valid = np.full(grid.shape, size, dtype=np.int64)
        if c.shape != grid.shape or valid.shape != grid.shape:
            raise ParameterError(f"scenario returned shape {c.shape}, grid is {grid.shape}")
        return c, valid

    parts = map_blocks(block, trials, seed, block_size, threads)
    counts = np.zeros(grid.shape, dtype=np.int64)
    valid = np.zeros(grid.shape, dtype=np.int64)
    for c, w in parts:
        counts += c
        valid += w
    meta = dict(getattr(scenario, "describe", lambda: {})())
    meta["error_counts"] = counts.tolist()
    if np.any(valid != trials):
        meta["valid_trials"] = valid.tolist()
    denom = np.maximum(valid * spt, 1)
    return PayoffMatrix(counts / denom, grid.attacker, grid.defender, trials, seed,
                        int(valid.min()) * spt, meta)


# -- dominance and saddle points -----------------------------------------------

def _tolerance(pm, i, k, axis, sigmas):
    if not sigmas or not pm.samples:
        return 0.0
    se = pm.stderr
    if axis == 0:
        return sigmas * np.sqrt(se[i] ** 2 + se[k] ** 2)
    return sigmas * np.sqrt(se[:, i] ** 2 + se[:, k] ** 2)


def eliminate_dominated(v, noise_sigmas=2.0):
    """Iterated removal of strictly dominated strategies.

    Row i is dropped when some row k beats it in every remaining column by
    more than `noise_sigmas` standard errors of the difference (zero for
    matrices without sample counts).  Columns likewise, defender minimizing.
    Returns (reduced, surviving_rows, surviving_cols).
    """
    pm = _as_matrix(v)
    rows = list(range(pm.v.shape[0]))
    cols = list(range(pm.v.shape[1]))
    changed = True
    while changed:
        changed = False
        sub = pm.submatrix(rows, cols)
        for i in range(len(rows)):
            for k in range(len(rows)):
                if k == i:
                    continue
                tol = _tolerance(sub, i, k, 0, noise_sigmas)
                if np.all(sub.v[k] > sub.v[i] + tol):
                    del rows[i]
                    changed = True
                    break
            if changed:
                break
        if changed:
            continue
        for j in range(len(cols)):
            for k in range(len(cols)):
                if k == j:
                    continue
                tol = _tolerance(sub, j, k, 1, noise_sigmas)
                if np.all(sub.v[:, k] < sub.v[:, j] - tol):
                    del cols[j]
                    changed = True
                    break
            if changed:
                break
    return pm.submatrix(rows, cols), rows, cols


def find_pure_nash(v, tol=0.0):
    """Saddle points: cells that are a column max (attacker) and a row min (defender)."""
    a = _as_matrix(v).v
    col_max = a.max(axis=0, keepdims=True)
    row_min = a.min(axis=1, keepdims=True)
    mask = (a >= col_max - tol) & (a <= row_min + tol)
    return [tuple(int(x) for x in ij) for ij in np.argwhere(mask)]


# -- mixed equilibria -----------------------------------------------------------

def _maximin(A):
    """max_p min_j p^T A[:, j]; returns (p, value)."""
    r, c = A.shape
    # variables [p_1..p_r, z]; minimize -z
    obj = np.zeros(r + 1)
    obj[-1] = -1.0
    A_ub = np.hstack([-A.T, np.ones((c, 1))])
    b_ub = np.zeros(c)
    A_eq = np.hstack([np.ones((1, r)), np.zeros((1, 1))])
    bounds = [(0, None)] * r + [(None, None)]
    res = linprog(obj, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP failed: {res.message}")
    p = np.clip(res.x[:r], 0, None)
    return p / p.sum(), float(res.x[-1])


def solve_zero_sum(v, check_tol=1e-7):
    """Mixed equilibrium by the attacker's and the defender's LPs."""
    pm = _as_matrix(v)
    A = pm.v
    if not np.all(np.isfinite(A)):
        raise ParameterError("payoff matrix has non-finite entries")
    # scale for conditioning; strategies are scale-invariant
    shift = A.min()
    scale = max(A.max() - shift, 1e-300)
    As = (A - shift) / scale
    p, v_row = _maximin(As)
    q, neg = _maximin(-As.T)
    v_col = -neg
    gap = abs(v_row - v_col) * scale
    value = shift + scale * 0.5 * (v_row + v_col)
    if gap > check_tol * max(1.0, abs(value)):
        raise RuntimeError(f"minimax check failed: gap {gap:g}")
    pure = find_pure_nash(pm)
    kind = MIXED
    if pure and max(p) > 1 - 1e-9 and max(q) > 1 - 1e-9:
        kind = PURE_NASH
        if _has_dominant_row(A, int(np.argmax(p))):
            kind = PURE_DOMINANT
    return Equilibrium(kind, p, q, value, pm.attacker, pm.defender, gap)


def _has_dominant_row(A, i):
    others = np.delete(A, i, axis=0)
    return others.size == 0 or bool(np.all(A[i] >= others.max(axis=0)))


def check_equilibrium(v, eq, tol=1e-6):
    A = _as_matrix(v).v
    lo = float((eq.attacker_strategy @ A).min())
    hi = float((A @ eq.defender_strategy).max())
    return lo >= eq.value - tol and hi <= eq.value + tol


# -- general bimatrix helpers (used for non-zero-sum textbook examples) --------

def bimatrix_eliminate(A, B):
    """Iterated strict dominance for a bimatrix game, both players maximizing."""
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    rows = list(range(A.shape[0]))
    cols = list(range(A.shape[1]))
    changed = True
    while changed:
        changed = False
        for i in list(rows):
            if any(np.all(A[np.ix_([k], cols)] > A[np.ix_([i], cols)]) for k in rows if k != i):
                rows.remove(i)
                changed = True
        for j in list(cols):
            if any(np.all(B[np.ix_(rows, [k])] > B[np.ix_(rows, [j])]) for k in cols if k != j):
                cols.remove(j)
                changed = True
    return rows, cols
