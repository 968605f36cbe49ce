"""Command-line entry point: run, solve, plot-data, list-configs."""

import argparse
import json
import os
import sys

from .._validation import ByzfuseError
from ..game import eliminate_dominated, find_pure_nash, solve_zero_sum
from . import io
from .config import bundled_names, load_config, read_raw
from .runner import PLOT_KINDS, emit_plot_data, load_record, run_experiment


def _cmd_run(args):
    cfg = load_config(args.config, {"seed": args.seed, "trials": args.trials})
    out = args.out or cfg["output"] or os.path.join("results", cfg["name"])
    rec = run_experiment(cfg, out_dir=out, threads=args.threads)
    print(f"{cfg['name']}: scenario={cfg['scenario']} trials={cfg['trials']} seed={cfg['seed']} "
          f"hash={rec.config_hash} ({rec.wall_clock:.1f}s)")
    if rec.equilibrium:
        eq = rec.equilibrium
        print(f"  equilibrium {eq['kind']} value={eq['value']:.6g}")
        print(f"  attacker support {_support(eq, 'attacker')}")
        print(f"  defender support {_support(eq, 'defender')}")
    if rec.table:
        print(f"  {'row':34s} {'Maj':>10s} {'HardIS':>10s} {'SoftIS':>10s} {'OPT':>10s}")
        for r in rec.table:
            print(f"  {r['label']:34s} " + " ".join(f"{r[k]:10.4g}" for k in ("Maj", "HardIS", "SoftIS", "OPT")))
    for k, s in rec.series.items():
        if k in ("alpha_sweep", "m_sweep", "single"):
            print(f"  {k}: {json.dumps(s)}")
    print(f"  wrote {out}")
    return 0


def _support(eq, side):
    labels = eq[f"{side}_labels"]
    probs = eq[f"{side}_strategy"]
    return ", ".join(f"{l:g}:{p:.3f}" for l, p in zip(labels, probs) if p > 1e-9)


def _cmd_solve(args):
    pm = io.read_payoff_csv(args.payoff)
    reduced, rows, cols = eliminate_dominated(pm, noise_sigmas=args.sigmas)
    eq = solve_zero_sum(pm)
    out = eq.to_dict()
    out["surviving_attacker"] = [pm.attacker[i] for i in rows]
    out["surviving_defender"] = [pm.defender[j] for j in cols]
    out["pure_nash"] = [[pm.attacker[i], pm.defender[j]] for i, j in find_pure_nash(pm)]
    text = json.dumps(out, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def _cmd_plot(args):
    rec = load_record(args.record)
    out = args.out or os.path.join(os.path.dirname(os.path.abspath(args.record))
                                   if not os.path.isdir(args.record) else args.record,
                                   f"{args.kind}.csv")
    emit_plot_data(rec, args.kind, out)
    print(out)
    return 0


def _cmd_list(args):
    for name in bundled_names():
        raw = read_raw(name)
        print(f"{name:28s} {raw.get('scenario', ''):16s} {raw.get('description', '')}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="byzfuse",
                                description="Byzantine-robust decision fusion experiments")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config (bundled name or YAML path)")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--trials", type=int)
    r.add_argument("--threads", type=int, help="worker threads (default: $BYZFUSE_THREADS or 1)")
    r.add_argument("--out", help="output directory")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("solve", help="equilibrium of a payoff CSV")
    s.add_argument("payoff")
    s.add_argument("--sigmas", type=float, default=2.0,
                   help="noise tolerance for dominance, in standard errors")
    s.add_argument("--out")
    s.set_defaults(func=_cmd_solve)

    g = sub.add_parser("plot-data", help="write an x/y series CSV from a run record")
    g.add_argument("record", help="record.json or the run's output directory")
    g.add_argument("--kind", required=True, choices=PLOT_KINDS)
    g.add_argument("--out")
    g.set_defaults(func=_cmd_plot)

    lc = sub.add_parser("list-configs", help="list bundled configs")
    lc.set_defaults(func=_cmd_list)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ByzfuseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
