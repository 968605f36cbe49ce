"""Dispatch a validated config to its scenario and persist the results."""

import os
import subprocess
import time
from dataclasses import asdict, dataclass, field
from importlib import metadata as _md

import numpy as np

from .. import consensus as C
from .. import model as M
from .. import scenarios as S
from ..fusion import MAJORITY, VotingRule, vote_columns
from ..game import StrategyGrid, eliminate_dominated, estimate_payoffs, find_pure_nash, solve_zero_sum
from ..mp import MpConfig, run as mp_run
from ..optimal import MapConfig, error_counts, map_decide_batch
from ..rng import map_blocks, resolve_threads
from .._validation import ParameterError
from . import io
from .config import config_hash

PLOT_KINDS = ("roc", "delta_sweep", "alpha_sweep", "m_sweep", "payoff")

AXIS_NAMES = {
    "optimal_game": ("p_mal_B", "p_mal_FC"),
    "isolation_game": ("p_mal_B", "eta"),
    "consensus_game": ("delta", "eta"),
}


def toolkit_version():
    try:
        return _md.version("artifact")
    except _md.PackageNotFoundError:
        return "unknown"


def _git_describe():
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                             text=True, timeout=5, cwd=os.path.dirname(__file__))
        return out.stdout.strip() or None
    except (OSError, subprocess.SubprocessError):
        return None


@dataclass
class ResultRecord:
    name: str
    scenario: str
    config_hash: str
    config: dict
    payoff: object = None                # PayoffMatrix for game scenarios
    equilibrium: dict = None
    table: list = None                   # comparison rows
    series: dict = field(default_factory=dict)
    expected: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    version: str = ""
    files: dict = field(default_factory=dict)

    def summary(self):
        d = asdict(self)
        d.pop("payoff")
        if self.payoff is not None:
            d["payoff"] = {
                "attacker": list(self.payoff.attacker), "defender": list(self.payoff.defender),
                "v": self.payoff.v.tolist(), "stderr": self.payoff.stderr.tolist(),
                "trials": self.payoff.trials, "samples": self.payoff.samples,
                "metadata": self.payoff.metadata,
            }
        return d


def _prior(d):
    return M.ByzantinePrior.from_dict(d)


def _state_prior(rho):
    return M.StatePrior.iid() if rho == 0.5 else M.StatePrior.markov(rho)


def _equilibrium(pm):
    _, rows, cols = eliminate_dominated(pm)
    eq = solve_zero_sum(pm)
    pure = find_pure_nash(pm)
    out = eq.to_dict()
    out["surviving_attacker"] = [pm.attacker[i] for i in rows]
    out["surviving_defender"] = [pm.defender[j] for j in cols]
    out["pure_nash"] = [[pm.attacker[i], pm.defender[j]] for i, j in pure]
    return out


def _run_optimal(cfg, threads):
    mo = cfg["model"]
    sc = S.OptimalGameScenario(mo["n"], mo["m"], mo["epsilon"], _prior(mo["prior"]),
                               _state_prior(mo["rho"]), error_metric=cfg["error_metric"],
                               max_m=cfg["options"]["max_m"])
    grid = StrategyGrid(tuple(cfg["grid"]["attacker"]), tuple(cfg["grid"]["defender"]))
    return estimate_payoffs(sc, grid, cfg["trials"], cfg["seed"], cfg["block_size"], threads), {}


def _run_isolation(cfg, threads):
    mo, o = cfg["model"], cfg["options"]
    sc = S.IsolationGameScenario(mo["n"], mo["m"], mo["epsilon"], _prior(mo["prior"]),
                                 _state_prior(mo["rho"]), error_metric=cfg["error_metric"],
                                 scheme=o["scheme"], p_mal_fc=o["p_mal_fc"],
                                 orientation=o["orientation"])
    att = tuple(cfg["grid"]["attacker"])
    eta = cfg["grid"]["defender"]
    if eta == "auto":
        eta = sc.eta_grid(att, cfg["seed"], o["eta_levels"], o["pilot_trials"])
    pm = estimate_payoffs(sc, StrategyGrid(att, tuple(eta)), cfg["trials"], cfg["seed"],
                          cfg["block_size"], threads)

    # isolation ROC at the strongest attack of the grid
    def block(rng, size, b):
        return sc.isolation_counts(rng, size, att[-1], eta)

    parts = map_blocks(block, cfg["trials"], cfg["seed"] + 1, cfg["block_size"], threads)
    ib = sum(p[0] for p in parts)
    ih = sum(p[1] for p in parts)
    nb = sum(p[2] for p in parts)
    nh = sum(p[3] for p in parts)
    roc = {"eta": list(eta), "p_iso_honest": (ih / max(nh, 1)).tolist(),
           "p_iso_byzantine": (ib / max(nb, 1)).tolist(), "p_mal": att[-1]}
    return pm, {"roc": roc}


def _run_consensus(cfg, threads):
    mo, o = cfg["model"], cfg["options"]
    n = mo["n"]
    t = o["topology"]
    top = C.generate_topology(t["kind"], t.get("params", {}), n, t.get("seed", 0))
    sc = C.CddScenario(n, o["alpha"], o["mu"], o["sigma"], top, o["policy"])
    D = C.quantized_grid(o["delta_stop"], o["step"])
    E = C.quantized_grid(o["eta_stop"], o["step"])
    pm = estimate_payoffs(sc, StrategyGrid(tuple(D), tuple(E)), cfg["trials"], cfg["seed"],
                          cfg["block_size"], threads)
    if top.warning:
        pm.metadata["topology_warning"] = top.warning

    # attack success without censoring versus the closed form
    model = C.MeasurementModel(o["sweep_mu"], o["sigma"], n)
    deltas = [float(x) for x in o["sweep_deltas"]]
    na = o["sweep_n_a"]
    analytic = [C.analytic_attack_success(C.AttackSpec(d, n_a=na), model) for d in deltas]

    def block(rng, size, b):
        x = rng.normal(-model.mu, model.sigma, (size, n - na))
        hs = x.sum(axis=1)
        return np.array([(hs + na * d > 0).sum() for d in deltas])

    hits = sum(map_blocks(block, o["sweep_trials"], cfg["seed"] + 2, cfg["block_size"], threads))
    mc = (hits / o["sweep_trials"]).tolist()
    sweep = {"delta": deltas, "analytic": analytic, "monte_carlo": mc,
             "n_a": na, "mu": model.mu, "trials": o["sweep_trials"]}
    return pm, {"delta_sweep": sweep}


def _run_comparison(cfg, threads):
    mo, o = cfg["model"], cfg["options"]
    rows = []
    for row in o["rows"]:
        res = S.compare_schemes(mo["n"], mo["m"], mo["epsilon"], _prior(row["prior"]), cfg["trials"],
                                cfg["seed"], tuple(cfg["grid"]["attacker"]), o["soft_levels"],
                                _state_prior(mo["rho"]), cfg["block_size"], threads)
        rows.append({"label": row["label"], "prior": row["prior"], **res})
    return rows


def _run_mp(cfg, threads):
    mo, o = cfg["model"], cfg["options"]
    if o["sweep"] == "alpha":
        res = S.mp_alpha_sweep(mo["n"], mo["m"], mo["epsilon"], o["alphas"], o["p_mal"],
                               cfg["trials"], cfg["seed"], mo["rho"], o["iterations"],
                               tuple(o["schemes"]), o["placement"], cfg["block_size"], threads)
        return {"alpha_sweep": res}
    res = S.mp_m_sweep(mo["n"], o["ms"], mo["epsilon"], o["alpha"], cfg["trials"], cfg["seed"],
                       mo["rho"], tuple(o["p_mals"]), o["iterations"], o["placement"],
                       cfg["block_size"], threads)
    res["crossover"] = S.crossover(res["m"], res["errors"][0], res["errors"][-1])
    return {"m_sweep": res}


def _run_single(cfg, threads):
    mo, o = cfg["model"], cfg["options"]
    prior = _prior(mo["prior"])
    sp = _state_prior(mo["rho"])
    n, m, eps = mo["n"], mo["m"], mo["epsilon"]
    rule = o["rule"]
    if rule in ("hard", "soft"):
        sc = S.IsolationGameScenario(n, m, eps, prior, sp, error_metric=cfg["error_metric"],
                                     scheme=rule, p_mal_fc=o["p_mal_fc"])
        pm = estimate_payoffs(sc, StrategyGrid((o["p_mal"],), (o["eta"],)), cfg["trials"],
                              cfg["seed"], cfg["block_size"], threads)
        return float(pm.v[0, 0])

    def block(rng, size, b):
        d = M.draw_trials(rng, size, n, m, eps, prior, sp)
        R = d.reports(o["p_mal"])
        if rule == "optimal":
            dec = map_decide_batch(R, MapConfig(prior, M.LocalChannel(eps, o["p_mal_fc"]), sp))
        elif rule == "mp":
            a = S.effective_alpha(prior, n)
            dec = mp_run(R, MpConfig(a, eps, o["p_mal_fc"], rho=mo["rho"])).decisions
        else:
            dec = vote_columns(VotingRule(MAJORITY), R)
        return error_counts(dec, d.states, cfg["error_metric"])

    errs = sum(map_blocks(block, cfg["trials"], cfg["seed"], cfg["block_size"], threads))
    return errs / (cfg["trials"] * (m if cfg["error_metric"] == "per_bit" else 1))


def run_experiment(cfg, out_dir=None, threads=None, write=True):
    """Run a validated config; write CSV/JSON outputs unless write=False."""
    threads = resolve_threads(threads if threads is not None else cfg.get("threads"))
    t0 = time.perf_counter()
    sc = cfg["scenario"]
    rec = ResultRecord(cfg["name"], sc, config_hash(cfg), cfg, expected=cfg.get("expected", {}),
                       version=toolkit_version())
    if sc in ("optimal_game", "isolation_game", "consensus_game"):
        runner = {"optimal_game": _run_optimal, "isolation_game": _run_isolation,
                  "consensus_game": _run_consensus}[sc]
        pm, series = runner(cfg, threads)
        pm.metadata.update({"config_hash": rec.config_hash, "name": cfg["name"],
                            "description": cfg["description"]})
        rec.payoff = pm
        rec.equilibrium = _equilibrium(pm)
        rec.series = series
    elif sc == "comparison":
        rec.table = _run_comparison(cfg, threads)
    elif sc == "mp_benchmark":
        rec.series = _run_mp(cfg, threads)
    elif sc == "single_run":
        rec.series = {"single": {"p_e": _run_single(cfg, threads)}}
    else:
        raise ParameterError(f"unknown scenario {sc!r}")
    rec.wall_clock = time.perf_counter() - t0
    if write:
        write_record(rec, out_dir or cfg.get("output") or os.path.join("results", cfg["name"]))
    return rec


def write_record(rec, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    files = {}
    if rec.payoff is not None:
        a_name, d_name = AXIS_NAMES.get(rec.scenario, ("attacker", "defender"))
        p = os.path.join(out_dir, "payoff.csv")
        io.write_payoff_csv(p, rec.payoff, a_name, d_name)
        side = {
            "scenario": rec.scenario, "name": rec.name, "config_hash": rec.config_hash,
            "attacker": list(rec.payoff.attacker), "defender": list(rec.payoff.defender),
            "attacker_name": a_name, "defender_name": d_name,
            "trials": rec.payoff.trials, "samples": rec.payoff.samples, "seed": rec.payoff.seed,
            "stderr": rec.payoff.stderr.tolist(), "metadata": rec.payoff.metadata,
            "equilibrium": rec.equilibrium, "git_describe": _git_describe(),
            "version": rec.version,
        }
        io.write_json(os.path.join(out_dir, "payoff.json"), side)
        files["payoff"] = p
    if rec.table is not None:
        p = os.path.join(out_dir, "table.csv")
        cols = {"label": [r["label"] for r in rec.table]}
        for k in ("Maj", "HardIS", "SoftIS", "OPT"):
            cols[k] = [r[k] for r in rec.table]
        io.write_series_csv(p, cols)
        files["table"] = p
    rec.files = files
    io.write_json(os.path.join(out_dir, "record.json"), rec.summary())
    return files


def load_record(path):
    if os.path.isdir(path):
        path = os.path.join(path, "record.json")
    return io.read_json(path)


def plot_series(record, kind):
    """Columns for a plot kind from a record (dict or ResultRecord)."""
    rec = record.summary() if isinstance(record, ResultRecord) else record
    series = rec.get("series") or {}
    if kind == "payoff":
        if not rec.get("payoff"):
            raise ParameterError("record has no payoff matrix (field 'payoff' missing)")
        p = rec["payoff"]
        cols = {"attacker": [], "defender": [], "p_e": [], "stderr": []}
        for i, a in enumerate(p["attacker"]):
            for j, d in enumerate(p["defender"]):
                cols["attacker"].append(a)
                cols["defender"].append(d)
                cols["p_e"].append(p["v"][i][j])
                cols["stderr"].append(p["stderr"][i][j])
        return cols
    if kind not in PLOT_KINDS:
        raise ParameterError(f"unknown plot kind {kind!r} (choose from {PLOT_KINDS})")
    if kind not in series:
        raise ParameterError(f"record has no '{kind}' series (available: {sorted(series)})")
    s = series[kind]
    if kind == "roc":
        return {"eta": s["eta"], "p_iso_honest": s["p_iso_honest"], "p_iso_byzantine": s["p_iso_byzantine"]}
    if kind == "delta_sweep":
        return {"delta": s["delta"], "analytic": s["analytic"], "monte_carlo": s["monte_carlo"]}
    if kind == "alpha_sweep":
        return {k: v for k, v in s.items()}
    cols = {"m": s["m"]}
    for p, e in zip(s["p_mal"], s["errors"]):
        cols[f"p_mal_{p:g}"] = e
    return cols


def emit_plot_data(record, kind, path):
    cols = plot_series(record, kind)
    io.write_series_csv(path, cols)
    return path
