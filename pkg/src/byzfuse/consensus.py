"""Consensus-based distributed detection under measurement falsification.

Nodes hold Gaussian measurements with mean -mu (H0) or +mu (H1).  Corrupted
nodes replace theirs with +delta under H0 and -delta under H1.  Before the
protocol starts every node drops its own value when |x| >= eta; survivors
run linear average consensus and each decides 1 iff its final value is > 0.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.stats import norm

from ._validation import ParameterError, check_count, check_probability
from .rng import make_rng

FULLY_CONNECTED = "FullyConnected"
ERDOS_RENYI = "ErdosRenyi"
SMALL_WORLD = "SmallWorld"
SCALE_FREE = "ScaleFree"
EXPLICIT = "Explicit"
KINDS = (FULLY_CONNECTED, ERDOS_RENYI, SMALL_WORLD, SCALE_FREE, EXPLICIT)

MAJORITY = "majority"
DISCARD = "discard"


# -- topologies -----------------------------------------------------------------

def _canonical_edges(edges, n):
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size and (e.min() < 0 or e.max() >= n):
        raise ParameterError(f"edge endpoint out of range [0, {n})")
    if np.any(e[:, 0] == e[:, 1]):
        raise ParameterError("self-loops are not allowed")
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0) if e.size else e


@dataclass(frozen=True)
class Topology:
    kind: str
    n: int
    edges: np.ndarray                # (E, 2), u < v, lexicographically sorted
    params: dict = field(default_factory=dict)
    seed: object = None
    warning: str = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown topology kind {self.kind!r}")
        check_count(self.n, "n", low=1)
        object.__setattr__(self, "edges", _canonical_edges(self.edges, self.n))

    @property
    def n_edges(self):
        return len(self.edges)

    def adjacency(self, active=None):
        """Sparse symmetric adjacency, optionally restricted to an active mask."""
        e = self.edges
        if active is not None:
            a = np.asarray(active, dtype=bool)
            e = e[a[e[:, 0]] & a[e[:, 1]]]
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n, self.n))

    def degrees(self, active=None):
        return np.asarray(self.adjacency(active).sum(axis=1)).ravel().astype(int)

    def components(self, active=None):
        """Component label per node; inactive nodes get -1."""
        _, lab = connected_components(self.adjacency(active), directed=False)
        if active is not None:
            lab = np.where(np.asarray(active, dtype=bool), lab, -1)
        return lab

    def is_connected(self, active=None):
        lab = self.components(active)
        return len(np.unique(lab[lab >= 0])) <= 1

    def to_edge_list(self):
        return "".join(f"{u} {v}\n" for u, v in self.edges)


def parse_edge_list(text, n=None):
    """Parse "u v" lines (0-indexed).  n defaults to max index + 1."""
    pairs = []
    for k, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParameterError(f"line {k}: expected 'u v', got {line!r}")
        pairs.append((int(parts[0]), int(parts[1])))
    e = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    if n is None:
        n = int(e.max()) + 1 if e.size else 1
    return Topology(EXPLICIT, n, e, {})


def read_edge_list(path, n=None):
    with open(path) as fh:
        return parse_edge_list(fh.read(), n)


def write_edge_list(topology, path):
    with open(path, "w") as fh:
        fh.write(topology.to_edge_list())


def _complete_edges(n):
    iu, ju = np.triu_indices(n, k=1)
    return np.stack([iu, ju], axis=1)


def _erdos_renyi(n, p, rng):
    e = _complete_edges(n)
    return e[rng.random(len(e)) < p]


def _watts_strogatz(n, k, beta, rng):
    """Ring lattice (k nearest neighbors) with each edge rewired w.p. beta."""
    adj = [set() for _ in range(n)]
    for i in range(n):
        for j in range(1, k // 2 + 1):
            v = (i + j) % n
            adj[i].add(v)
            adj[v].add(i)
    for j in range(1, k // 2 + 1):
        for i in range(n):
            v = (i + j) % n
            if rng.random() >= beta or v not in adj[i]:
                continue
            choices = [w for w in range(n) if w != i and w not in adj[i]]
            if not choices:
                continue
            w = choices[int(rng.integers(len(choices)))]
            adj[i].discard(v)
            adj[v].discard(i)
            adj[i].add(w)
            adj[w].add(i)
    return [(u, v) for u in range(n) for v in adj[u] if u < v]


def _barabasi_albert(n, m_attach, rng):
    """Start from a complete graph on m_attach nodes; each new node links to
    m_attach distinct existing nodes chosen with probability proportional to degree."""
    core = max(m_attach, 1)
    edges = [tuple(x) for x in _complete_edges(min(core, n))]
    pool = [v for e in edges for v in e] or list(range(min(core, n)))
    for new in range(core, n):
        targets = set()
        while len(targets) < m_attach:
            targets.add(pool[int(rng.integers(len(pool)))])
        for t in sorted(targets):
            edges.append((t, new))
            pool.extend((t, new))
    return edges


def generate_topology(kind, params=None, n=None, seed=None):
    params = dict(params or {})
    n = check_count(n, "n", low=1)
    rng = make_rng(seed)
    warning = None
    if kind == FULLY_CONNECTED:
        edges = _complete_edges(n)
    elif kind == ERDOS_RENYI:
        p = check_probability(params.get("p", 0.5), "p")
        if p == 0 and n > 1:
            warning = "edge probability 0: graph is disconnected"
        edges = _erdos_renyi(n, p, rng)
    elif kind == SMALL_WORLD:
        k = check_count(params.get("k", 4), "k", low=0, high=max(n - 1, 0))
        if k % 2:
            raise ParameterError("small-world ring degree k must be even")
        beta = check_probability(params.get("beta", 0.1), "beta")
        if k == 0 and n > 1:
            warning = "ring degree 0: graph is disconnected"
        edges = _watts_strogatz(n, k, beta, rng)
    elif kind == SCALE_FREE:
        m_attach = check_count(params.get("m_attach", 2), "m_attach", low=1)
        if m_attach >= n:
            raise ParameterError("m_attach must be smaller than n")
        edges = _barabasi_albert(n, m_attach, rng)
    elif kind == EXPLICIT:
        if "edges" not in params:
            raise ParameterError("explicit topology needs params['edges']")
        edges = params["edges"]
    else:
        raise ParameterError(f"unknown topology kind {kind!r}")
    top = Topology(kind, n, np.asarray(edges, dtype=np.int64).reshape(-1, 2), params,
                   seed if not isinstance(seed, np.random.Generator) else None, warning)
    if warning is None and n > 1 and not top.is_connected():
        object.__setattr__(top, "warning", "generated graph is disconnected")
    return top


# -- measurement and attack -----------------------------------------------------

@dataclass(frozen=True)
class MeasurementModel:
    mu: float
    sigma: float = 1.0
    n: int = 20

    def __post_init__(self):
        if not self.sigma > 0:
            raise ParameterError("sigma must be > 0")
        if not np.isfinite(self.mu):
            raise ParameterError("mu must be finite")
        check_count(self.n, "n", low=1)

    def sample(self, hypothesis, rng):
        mean = self.mu if hypothesis else -self.mu
        return rng.normal(mean, self.sigma, self.n)


@dataclass(frozen=True)
class AttackSpec:
    delta: float
    n_a: int = None
    alpha: float = None
    selection: str = "fixed"         # "fixed": exactly n_a nodes; "bernoulli": each w.p. alpha

    def __post_init__(self):
        if not self.delta >= 0 or not np.isfinite(self.delta):
            raise ParameterError("delta must be a finite value >= 0")
        if self.selection not in ("fixed", "bernoulli"):
            raise ParameterError("selection must be 'fixed' or 'bernoulli'")
        if self.n_a is None and self.alpha is None:
            raise ParameterError("give n_a or alpha")
        if self.alpha is not None:
            check_probability(self.alpha, "alpha")
        if self.n_a is not None:
            check_count(self.n_a, "n_a")
        if self.selection == "bernoulli" and self.alpha is None:
            raise ParameterError("bernoulli selection needs alpha")

    def count(self, n):
        if self.n_a is not None:
            k = self.n_a
        else:
            k = int(round(self.alpha * n))
        if k > n:
            raise ParameterError(f"n_a = {k} exceeds n = {n}")
        return k

    def corrupted(self, n, rng):
        if self.selection == "bernoulli":
            return rng.random(n) < self.alpha
        mask = np.zeros(n, dtype=bool)
        mask[rng.permutation(n)[:self.count(n)]] = True
        return mask


def apply_attack(measurements, spec, hypothesis, seed=None):
    x = np.array(measurements, dtype=float)
    mask = spec.corrupted(x.shape[-1], make_rng(seed))
    x[mask] = -spec.delta if hypothesis else spec.delta
    return x


def censor(measurements, eta):
    """Indices of nodes keeping their measurement: |x| < eta (strict)."""
    if eta < 0 or np.isnan(eta):
        raise ParameterError("eta must be >= 0")
    return np.nonzero(np.abs(np.asarray(measurements, dtype=float)) < eta)[0]


def analytic_attack_success(spec, model):
    """P(consensus mean > 0 | H0) with n_a nodes at +delta, no censoring."""
    n = model.n
    na = spec.count(n)
    if na >= n:
        return 1.0 if spec.delta > 0 else 0.5
    z = (model.mu - na * spec.delta / (n - na)) * np.sqrt(n - na) / model.sigma
    return float(norm.sf(z))


# -- consensus iterations -------------------------------------------------------

@dataclass
class ConsensusRun:
    trajectory: np.ndarray       # (iterations + 1, n_active) or None
    values: np.ndarray           # final state, nan at inactive nodes
    consensus_value: float       # mean of the final active values
    iterations_used: int
    survivor_set: np.ndarray
    disconnected: bool
    component_values: dict = field(default_factory=dict)


def default_step(topology, active=None, weights=None):
    deg = topology.degrees(active)
    w = np.ones(topology.n) if weights is None else np.asarray(weights, float)
    return 1.0 / (float(np.max(deg / w)) + 1.0)


def run_consensus(topology, initial, active=None, step=None, weights=None,
                  max_iter=100_000, tol=1e-10, record=False):
    """x_i <- x_i + (step / w_i) * sum_{j in active nbrs} (x_j - x_i) on the active subgraph.

    With equal weights the sum over active nodes is conserved and each
    connected component converges to the mean of its initial values.
    """
    n = topology.n
    x0 = np.asarray(initial, dtype=float)
    if x0.shape != (n,):
        raise ParameterError(f"initial has shape {x0.shape}, expected ({n},)")
    act = np.ones(n, dtype=bool) if active is None else np.zeros(n, dtype=bool)
    if active is not None:
        a = np.asarray(active)
        if a.dtype == bool:
            act = a.copy()
        else:
            act[a.astype(int)] = True
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (n,) or np.any(w <= 0):
        raise ParameterError("weights must be n positive reals")
    A = topology.adjacency(act)
    deg = np.asarray(A.sum(axis=1)).ravel()
    step = default_step(topology, act, w) if step is None else float(step)
    if not step > 0:
        raise ParameterError("step must be > 0")
    if step * np.max(deg / w) >= 1.0 and np.max(deg) > 0:
        raise ParameterError(f"step {step:g} violates step < min_i w_i / deg_i on the active subgraph")

    idx = np.nonzero(act)[0]
    A = A[idx][:, idx].tocsr()
    d = deg[idx]
    ws = w[idx]
    x = x0[idx].copy()
    traj = [x.copy()] if record else None
    it = 0
    while it < max_iter and len(x):
        dx = (step / ws) * (A @ x - d * x)
        x = x + dx
        it += 1
        if record:
            traj.append(x.copy())
        if np.max(np.abs(dx)) < tol:
            break
    values = np.full(n, np.nan)
    values[idx] = x
    lab = topology.components(act)
    comps = {int(c): float(values[lab == c].mean()) for c in np.unique(lab[lab >= 0])}
    return ConsensusRun(np.array(traj) if record else None, values,
                        float(x.mean()) if len(x) else float("nan"), it, idx,
                        len(comps) > 1, comps)


# -- one detection trial ----------------------------------------------------------

def _node_majority(values, active):
    """Per-node decisions (value > 0) combined by majority; ties decide 0."""
    v = values[active]
    return int(2 * np.sum(v > 0) > len(v))


def limit_decision(topology, x, keep, policy=MAJORITY):
    """Decision from the exact consensus limit (component means).

    Returns (decision or None when discarded, disconnected).
    """
    if topology.kind == FULLY_CONNECTED:
        return int(x[keep].mean() > 0), False
    lab = topology.components(keep)
    comps = np.unique(lab[lab >= 0])
    if len(comps) == 1:
        return int(x[keep].mean() > 0), False
    if policy == DISCARD:
        return None, True
    means = np.zeros(topology.n)
    for c in comps:
        sel = lab == c
        means[sel] = x[sel].mean()
    return _node_majority(means, keep), True


def cdd_trial(topology, model, spec, eta, hypothesis, seed=None, iterate=False,
              policy=MAJORITY):
    """One consensus-based detection trial.  Returns (decision, disconnected)."""
    rng = make_rng(seed)
    if topology.n != model.n:
        raise ParameterError("topology and measurement model disagree on n")
    x = model.sample(hypothesis, rng)
    mask = spec.corrupted(model.n, rng)
    x[mask] = -spec.delta if hypothesis else spec.delta
    coin = int(rng.integers(0, 2))
    keep = np.abs(x) < eta
    if not keep.any():
        return coin, False
    if not iterate:
        return limit_decision(topology, x, keep, policy)
    run = run_consensus(topology, x, keep)
    if not run.disconnected:
        return int(run.consensus_value > 0), False
    if policy == DISCARD:
        return None, True
    return _node_majority(run.values, keep), True


def quantized_grid(stop, step=0.2):
    """0, step, 2*step, ... up to stop; rounded so equal labels compare equal."""
    k = int(np.floor(stop / step + 1e-9))
    return np.round(np.arange(k + 1) * step, 10)


class CddScenario:
    """Payoff scenario for the censoring game: rows delta, columns eta.

    Corruption is Bernoulli(alpha) per node; the hypothesis is a fair coin per
    trial.  A fully connected graph uses the survivor mean directly; other
    topologies use the component means of the survivor subgraph, which is
    the exact limit of the consensus iterations.
    """

    samples_per_trial = 1

    def __init__(self, n=20, alpha=0.1, mu=1.0, sigma=1.0, topology=None, policy=MAJORITY):
        self.model = MeasurementModel(mu, sigma, n)
        self.alpha = check_probability(alpha, "alpha")
        self.topology = topology if topology is not None else generate_topology(FULLY_CONNECTED, n=n)
        if self.topology.n != n:
            raise ParameterError("topology size does not match n")
        if policy not in (MAJORITY, DISCARD):
            raise ParameterError(f"policy must be {MAJORITY!r} or {DISCARD!r}")
        self.policy = policy

    def describe(self):
        return {"scenario": "consensus_game", "n": self.model.n, "alpha": self.alpha,
                "mu": self.model.mu, "sigma": self.model.sigma,
                "topology": self.topology.kind, "policy": self.policy}

    def check_grid(self, grid):
        if min(grid.attacker) < 0 or min(grid.defender) < 0:
            raise ParameterError("delta and eta grids must be >= 0")

    def _draw(self, rng, size):
        n = self.model.n
        h = rng.integers(0, 2, size)
        sgn = np.where(h == 0, -1.0, 1.0)
        x = rng.normal(sgn[:, None] * self.model.mu, self.model.sigma, (size, n))
        cor = rng.random((size, n)) < self.alpha
        coin = rng.integers(0, 2, size)
        return h, sgn, x, cor, coin

    def error_counts(self, rng, size, attacker, defender):
        D = np.asarray(attacker, dtype=float)
        E = np.asarray(defender, dtype=float)
        h, sgn, x, cor, coin = self._draw(rng, size)
        if self.topology.kind == FULLY_CONNECTED:
            return self._fast_counts(h, sgn, x, cor, coin, D, E)
        return self._graph_counts(h, sgn, x, cor, coin, D, E)

    def _fast_counts(self, h, sgn, x, cor, coin, D, E):
        # honest survivors depend on eta only; fakes survive iff delta < eta
        keep = (np.abs(x)[:, :, None] < E) & ~cor[:, :, None]
        hs = np.einsum("tn,tne->te", x, keep)
        hc = keep.sum(axis=1)
        na = cor.sum(axis=1)
        fk = D[:, None] < E[None, :]
        out = np.zeros((len(D), len(E)), dtype=np.int64)
        for a, delta in enumerate(D):
            tot = hs + (-sgn * na * delta)[:, None] * fk[a]
            num = hc + na[:, None] * fk[a]
            dec = np.where(num > 0, tot > 0, (coin == 1)[:, None])
            out[a] = (dec != (h == 1)[:, None]).sum(axis=0)
        return out

    def _graph_counts(self, h, sgn, x, cor, coin, D, E):
        top = self.topology
        out = np.zeros((len(D), len(E)), dtype=np.int64)
        valid = np.zeros((len(D), len(E)), dtype=np.int64)
        for t in range(len(h)):
            for a, delta in enumerate(D):
                xa = np.where(cor[t], -sgn[t] * delta, x[t])
                for e, eta in enumerate(E):
                    keep = np.abs(xa) < eta
                    if not keep.any():
                        dec, disc = int(coin[t]), False
                    else:
                        dec, disc = limit_decision(top, xa, keep, self.policy)
                    if dec is None:
                        continue
                    valid[a, e] += 1
                    out[a, e] += dec != h[t]
        if self.policy == DISCARD:
            return out, valid
        return out
