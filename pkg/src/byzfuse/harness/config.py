"""Experiment configuration: YAML in, fully materialized dict out.

Every field gets an explicit value after loading, so two runs that print
the same config hash ran the same experiment.  Validation errors carry the
dotted path of the offending field.

Schema (top level):

    name          str
    scenario      optimal_game | isolation_game | mp_benchmark | consensus_game
                  | comparison | single_run
    description   str, what the experiment reproduces
    trials        int >= 1
    seed          int >= 0
    threads       int >= 1 or null (null: BYZFUSE_THREADS or 1)
    block_size    int >= 1, trials per independently seeded block
    error_metric  per_bit | per_sequence
    output        directory for results (null: results/<name>)
    model         n, m, epsilon, prior {kind, alpha | n_b | h}, rho
    grid          attacker: [..], defender: [..] (games only)
    options       scenario-specific, see DEFAULT_OPTIONS
    expected      free-form reference values, copied to the record
"""

import copy
import hashlib
import json
import os
from importlib import resources

import yaml

from .._validation import ConfigError

SCENARIOS = ("optimal_game", "isolation_game", "mp_benchmark", "consensus_game",
             "comparison", "single_run")
PRIOR_KINDS = ("IndependentAlpha", "FixedCount", "BoundedMaxEnt", "Unconstrained")
DEFAULT_GRID = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0]

DEFAULT_TRIALS = {
    "optimal_game": 50_000, "isolation_game": 50_000, "comparison": 50_000,
    "single_run": 50_000, "mp_benchmark": 100_000, "consensus_game": 100_000,
}

DEFAULT_OPTIONS = {
    "optimal_game": {"max_m": 22},
    "isolation_game": {"scheme": "hard", "p_mal_fc": 1.0, "eta_levels": 18,
                       "orientation": "report", "pilot_trials": 2000},
    "comparison": {"soft_levels": 18, "rows": []},
    "mp_benchmark": {"sweep": "alpha", "alphas": [0.1, 0.2, 0.3, 0.4], "ms": [5, 10],
                     "alpha": 0.45, "p_mal": 1.0, "p_mals": [1.0, 0.5], "iterations": 5,
                     "schemes": ["MP", "MAP", "Maj"], "placement": "fixed"},
    "consensus_game": {"alpha": 0.1, "mu": 1.0, "sigma": 1.0, "delta_stop": 10.0,
                       "eta_stop": 10.0, "step": 0.2, "policy": "majority",
                       "topology": {"kind": "FullyConnected", "params": {}, "seed": 0},
                       "sweep_trials": 100_000, "sweep_n_a": 2, "sweep_mu": 2.5,
                       "sweep_deltas": [0, 5, 10, 15, 20, 22.5, 25, 30, 35, 40]},
    "single_run": {"rule": "optimal", "p_mal": 1.0, "p_mal_fc": 1.0, "eta": 0.0},
}

DEFAULT_MODEL = {"n": 20, "m": 4, "epsilon": 0.1, "rho": 0.5,
                 "prior": {"kind": "IndependentAlpha", "alpha": 0.3}}


def _err(path, msg):
    raise ConfigError(f"{path}: {msg}")


def _num(d, key, path, lo=None, hi=None, integer=False, allow_none=False):
    v = d.get(key)
    p = f"{path}.{key}" if path else key
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _err(p, f"expected a number, got {v!r}")
    if integer:
        if isinstance(v, float) and not v.is_integer():
            _err(p, f"expected an integer, got {v!r}")
        v = int(v)
    if lo is not None and v < lo:
        _err(p, f"must be >= {lo}, got {v!r}")
    if hi is not None and v > hi:
        _err(p, f"must be <= {hi}, got {v!r}")
    return v


def _grid(values, path):
    if not isinstance(values, list) or not values:
        _err(path, "expected a non-empty list of numbers")
    out = []
    for k, x in enumerate(values):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            _err(f"{path}[{k}]", f"expected a number, got {x!r}")
        out.append(float(x))
    if any(b <= a for a, b in zip(out, out[1:])):
        _err(path, "values must be strictly increasing")
    return out


def _merge(defaults, given, path):
    out = copy.deepcopy(defaults)
    for k, v in (given or {}).items():
        if k not in defaults:
            _err(f"{path}.{k}" if path else k, f"unknown field (allowed: {sorted(defaults)})")
        if isinstance(defaults[k], dict) and defaults[k] and isinstance(v, dict):
            out[k] = _merge(defaults[k], v, f"{path}.{k}" if path else k)
        else:
            out[k] = v
    return out


def _prior(p, path):
    if not isinstance(p, dict):
        _err(path, "expected a mapping with a 'kind' field")
    kind = p.get("kind")
    if kind not in PRIOR_KINDS:
        _err(f"{path}.kind", f"expected one of {PRIOR_KINDS}, got {kind!r}")
    allowed = {"IndependentAlpha": "alpha", "FixedCount": "n_b", "BoundedMaxEnt": "h"}
    extra = set(p) - {"kind", allowed.get(kind)}
    if extra:
        _err(path, f"unexpected fields {sorted(extra)} for kind {kind}")
    if kind == "IndependentAlpha":
        return {"kind": kind, "alpha": float(_num(p, "alpha", path, 0, 1))}
    if kind == "FixedCount":
        return {"kind": kind, "n_b": _num(p, "n_b", path, 0, integer=True)}
    if kind == "BoundedMaxEnt":
        return {"kind": kind, "h": _num(p, "h", path, 1, integer=True)}
    return {"kind": kind}


def validate(raw):
    """Return a fully materialized config dict or raise ConfigError."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>: expected a mapping")
    known = {"name", "scenario", "description", "trials", "seed", "threads", "block_size",
             "error_metric", "output", "model", "grid", "options", "expected"}
    for k in raw:
        if k not in known:
            _err(k, f"unknown field (allowed: {sorted(known)})")
    sc = raw.get("scenario")
    if sc not in SCENARIOS:
        _err("scenario", f"expected one of {SCENARIOS}, got {sc!r}")
    cfg = {"name": str(raw.get("name", "experiment")), "scenario": sc,
           "description": str(raw.get("description", ""))}
    cfg["trials"] = _num({"trials": raw.get("trials", DEFAULT_TRIALS[sc])}, "trials", "", 1, integer=True)
    cfg["seed"] = _num({"seed": raw.get("seed", 0)}, "seed", "", 0, integer=True)
    cfg["threads"] = _num({"threads": raw.get("threads")}, "threads", "", 1, integer=True, allow_none=True)
    cfg["block_size"] = _num({"block_size": raw.get("block_size", 2000)}, "block_size", "", 1, integer=True)
    em = raw.get("error_metric", "per_bit")
    if em not in ("per_bit", "per_sequence"):
        _err("error_metric", f"expected per_bit or per_sequence, got {em!r}")
    cfg["error_metric"] = em
    out = raw.get("output")
    if out is not None and not isinstance(out, str):
        _err("output", "expected a path string")
    cfg["output"] = out

    raw_model = raw.get("model") or {}
    if not isinstance(raw_model, dict):
        _err("model", "expected a mapping")
    given_prior = raw_model.get("prior")
    model = _merge(DEFAULT_MODEL, {k: v for k, v in raw_model.items() if k != "prior"}, "model")
    model["n"] = _num(model, "n", "model", 1, integer=True)
    model["m"] = _num(model, "m", "model", 1, integer=True)
    model["epsilon"] = float(_num(model, "epsilon", "model", 0, 1))
    if model["epsilon"] >= 1:
        _err("model.epsilon", "must be < 1")
    model["rho"] = float(_num(model, "rho", "model", 0, 1))
    model["prior"] = _prior(given_prior if given_prior is not None else DEFAULT_MODEL["prior"],
                            "model.prior")
    cfg["model"] = model

    g = raw.get("grid") or {}
    if not isinstance(g, dict):
        _err("grid", "expected a mapping with attacker/defender lists")
    for k in g:
        if k not in ("attacker", "defender"):
            _err(f"grid.{k}", "unknown field (allowed: ['attacker', 'defender'])")
    cfg["grid"] = {
        "attacker": _grid(g.get("attacker", DEFAULT_GRID), "grid.attacker"),
        "defender": (_grid(g["defender"], "grid.defender") if g.get("defender") not in (None, "auto")
                     else ("auto" if sc == "isolation_game" else DEFAULT_GRID)),
    }
    given_opts = raw.get("options") or {}
    if not isinstance(given_opts, dict):
        _err("options", "expected a mapping")
    opts = _merge(DEFAULT_OPTIONS[sc], given_opts, "options")
    _check_options(sc, opts)
    cfg["options"] = opts
    cfg["expected"] = raw.get("expected") or {}
    return cfg


def _check_options(sc, o):
    p = "options"
    if sc == "isolation_game":
        if o["scheme"] not in ("hard", "soft"):
            _err(f"{p}.scheme", f"expected hard or soft, got {o['scheme']!r}")
        if o["orientation"] not in ("absolute", "report"):
            _err(f"{p}.orientation", f"expected absolute or report, got {o['orientation']!r}")
        _num(o, "p_mal_fc", p, 0, 1)
        _num(o, "eta_levels", p, 2, integer=True)
        _num(o, "pilot_trials", p, 1, integer=True)
    elif sc == "comparison":
        if not isinstance(o["rows"], list) or not o["rows"]:
            _err(f"{p}.rows", "expected a non-empty list of {label, prior}")
        for k, row in enumerate(o["rows"]):
            if not isinstance(row, dict) or set(row) - {"label", "prior"} or "prior" not in row:
                _err(f"{p}.rows[{k}]", "expected {label, prior}")
            row["prior"] = _prior(row["prior"], f"{p}.rows[{k}].prior")
            row.setdefault("label", f"row{k}")
        _num(o, "soft_levels", p, 2, integer=True)
    elif sc == "mp_benchmark":
        if o["sweep"] not in ("alpha", "m"):
            _err(f"{p}.sweep", f"expected alpha or m, got {o['sweep']!r}")
        if o["placement"] not in ("fixed", "independent"):
            _err(f"{p}.placement", f"expected fixed or independent, got {o['placement']!r}")
        for k, a in enumerate(o["alphas"]):
            _num({"a": a}, "a", f"{p}.alphas[{k}]", 0, 1)
        for k, m in enumerate(o["ms"]):
            _num({"m": m}, "m", f"{p}.ms[{k}]", 1, integer=True)
        for k, s in enumerate(o["schemes"]):
            if s not in ("MP", "MAP", "Maj"):
                _err(f"{p}.schemes[{k}]", f"expected MP, MAP or Maj, got {s!r}")
        _num(o, "alpha", p, 0, 1)
        _num(o, "p_mal", p, 0, 1)
        _num(o, "iterations", p, 1, integer=True)
    elif sc == "consensus_game":
        _num(o, "alpha", p, 0, 1)
        _num(o, "sigma", p, 0)
        _num(o, "mu", p)
        _num(o, "delta_stop", p, 0)
        _num(o, "eta_stop", p, 0)
        _num(o, "step", p, 1e-9)
        _num(o, "sweep_trials", p, 1, integer=True)
        _num(o, "sweep_n_a", p, 0, integer=True)
        if o["policy"] not in ("majority", "discard"):
            _err(f"{p}.policy", f"expected majority or discard, got {o['policy']!r}")
        top = o["topology"]
        if top.get("kind") not in ("FullyConnected", "ErdosRenyi", "SmallWorld", "ScaleFree"):
            _err(f"{p}.topology.kind", f"unsupported topology {top.get('kind')!r}")
    elif sc == "single_run":
        if o["rule"] not in ("optimal", "majority", "hard", "soft", "mp"):
            _err(f"{p}.rule", f"expected optimal, majority, hard, soft or mp, got {o['rule']!r}")
        _num(o, "p_mal", p, 0, 1)
        _num(o, "p_mal_fc", p, 0, 1)
        _num(o, "eta", p)


def config_hash(cfg):
    """Hash of the experiment-defining fields (output location and threads excluded)."""
    keep = {k: v for k, v in cfg.items() if k not in ("output", "threads", "description", "expected")}
    blob = json.dumps(keep, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def bundled_names():
    root = resources.files("byzfuse.harness") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def read_raw(name_or_path):
    if os.path.exists(name_or_path):
        with open(name_or_path) as fh:
            text = fh.read()
    else:
        f = resources.files("byzfuse.harness") / "configs" / f"{name_or_path}.yaml"
        if not f.is_file():
            raise ConfigError(f"no config file or bundled config named {name_or_path!r} "
                              f"(bundled: {', '.join(bundled_names())})")
        text = f.read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"<root>: YAML parse error: {exc}") from exc
    return raw


def load_config(name_or_path, overrides=None):
    raw = read_raw(name_or_path)
    if not isinstance(raw, dict):
        raise ConfigError("<root>: expected a mapping")
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v
    return validate(raw)
