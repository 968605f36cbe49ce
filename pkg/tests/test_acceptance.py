"""Acceptance suite: one PASS/FAIL line per criterion, printed in the summary.

Full-size runs use the bundled configs (seed 2024).  Each payoff run is done
once with one worker thread and cached for the session; criterion 11 repeats
them with three threads and compares the CSV bytes.
"""

import itertools
import time

import numpy as np
import pytest

import conftest
from byzfuse import game as G
from byzfuse import consensus as C
from byzfuse import mp as MP
from byzfuse import optimal as O
from byzfuse.harness.config import load_config
from byzfuse.harness.runner import run_experiment
from byzfuse.rng import make_rng

from oracles import state_marginals_single_epoch

pytestmark = pytest.mark.slow

PAYOFF_RUNS = ("table_indip03m4", "table_fixed6m4", "table_fixed8m4", "df_hard", "df_soft",
               "cdd_n20_alpha01_mu1")


def report(k, ok, detail):
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    conftest.ACCEPTANCE.append(line)
    return ok


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    cache = {}

    def get(name, threads=1):
        key = (name, threads)
        if key not in cache:
            out = tmp_path_factory.mktemp(f"{name}_t{threads}")
            rec = run_experiment(load_config(name), str(out), threads=threads)
            cache[key] = (rec, out)
        return cache[key]

    return get


def _sigma(pm, i, j):
    return float(pm.stderr[i, j])


def test_c01_independent_saddle(runs):
    rec, _ = runs("table_indip03m4")
    pm = rec.payoff
    v, s = pm.v[5, 5], _sigma(pm, 5, 5)
    pure = G.find_pure_nash(pm)
    ok_v = abs(v - 0.0349) <= 3 * s
    ok_n = pure == [(5, 5)]
    report(1, ok_v and ok_n,
           f"P_e(1,1) = {v:.5f} (target 0.0349 +- {3 * s:.5f}); pure Nash {pure}; "
           f"{rec.wall_clock:.0f}s")
    assert ok_v and ok_n


def test_c02_fixed6_equilibrium(runs):
    rec, _ = runs("table_fixed6m4")
    pm = rec.payoff
    _, rows, cols = G.eliminate_dominated(pm, noise_sigmas=2)
    pure = G.find_pure_nash(pm)
    eq = G.solve_zero_sum(pm)
    s = _sigma(pm, 0, 0)
    ok_p = (0, 0) in pure
    ok_v = abs(eq.value - 3.8e-4) <= 3 * s
    report(2, ok_p and ok_v,
           f"pure Nash {[(pm.attacker[i], pm.defender[j]) for i, j in pure]}, survivors "
           f"rows {[pm.attacker[i] for i in rows]} cols {[pm.defender[j] for j in cols]}; "
           f"value {eq.value:.3e} ({eq.kind}) vs 3.8e-4 +- {3 * s:.1e}; "
           f"cell(0.5,0.5) {pm.v[0, 0]:.3e}; {pm.trials} trials, {rec.wall_clock:.0f}s")
    assert ok_p and ok_v


def _support_ok(pm, eq, side, allowed, sigmas=2.0):
    """Support inside `allowed`, up to strategies within `sigmas` of an allowed one."""
    sup = eq.support(side)
    extra = [x for x in sup if x not in allowed]
    labels = pm.attacker if side == "attacker" else pm.defender
    se = pm.stderr
    for x in extra:
        i = labels.index(x)
        close = False
        for y in allowed:
            k = labels.index(y)
            if side == "attacker":
                d, tol = np.abs(pm.v[i] - pm.v[k]), sigmas * np.hypot(se[i], se[k])
            else:
                d, tol = np.abs(pm.v[:, i] - pm.v[:, k]), sigmas * np.hypot(se[:, i], se[:, k])
            close = close or bool(np.all(d <= tol))
        if not close:
            return False, sup
    return True, sup


def test_c03_fixed8_mixed(runs):
    rec, _ = runs("table_fixed8m4")
    pm = rec.payoff
    eq = G.solve_zero_sum(pm)
    ok_a, sa = _support_ok(pm, eq, "attacker", (0.5, 1.0))
    ok_d, sd = _support_ok(pm, eq, "defender", (0.8, 0.9))
    ok_v = abs(eq.value - 3.6e-3) <= 0.3 * 3.6e-3
    ok_c = G.check_equilibrium(pm, eq, tol=1e-9)
    ok = ok_a and ok_d and ok_v and ok_c
    report(3, ok,
           f"attacker support {sa} p={np.round(eq.attacker_strategy, 3).tolist()}, "
           f"defender support {sd} q={np.round(eq.defender_strategy, 3).tolist()}, "
           f"value {eq.value:.3e} vs 3.6e-3 +-30%")
    assert ok


def test_c04_isolation_games(runs):
    hard, _ = runs("df_hard")
    soft, _ = runs("df_soft")
    vh = G.solve_zero_sum(hard.payoff).value
    vs = G.solve_zero_sum(soft.payoff).value
    ok = abs(vh - 0.1982) <= 0.01 and abs(vs - 0.1375) <= 0.01 and vs < vh
    report(4, ok, f"DF_H value {vh:.4f} (0.1982 +- 0.01), DF_S value {vs:.4f} "
                  f"(0.1375 +- 0.01), SoftIS < HardIS: {vs < vh}")
    assert ok


def test_c05_dp_oracle():
    t0 = time.perf_counter()
    rng = make_rng(5)
    worst = 0.0
    for n in range(1, 13):
        masks = np.array(list(itertools.product((0, 1), repeat=n)), dtype=bool)
        pc = masks.sum(axis=1)
        for _ in range(100):
            b, h = rng.uniform(0.01, 2.0, n), rng.uniform(0.01, 2.0, n)
            prods = np.prod(np.where(masks, b, h), axis=1)
            ref = np.bincount(pc, weights=prods, minlength=n + 1)
            for k in range(n + 1):
                worst = max(worst, abs(O.dp_sum(b, h, k) - ref[k]) / ref[k])
    dt = time.perf_counter() - t0
    ok = worst < 1e-10 and dt < 10
    report(5, ok, f"max relative error {worst:.2e} over n=1..12, all k, 100 draws each; {dt:.1f}s")
    assert ok


def test_c06_mp_near_optimal(runs):
    t0 = time.perf_counter()
    rec = run_experiment(load_config("mp_near_optimal"), write=False)
    sw = rec.series["alpha_sweep"]
    gaps = [abs(a - b) / b if b > 0 else (0.0 if a == 0 else np.inf)
            for a, b in zip(sw["MP"], sw["MAP"])]
    ok_sweep = all(g <= 0.15 for g in gaps)
    # trees: one epoch, n <= 10
    worst = 0.0
    for n in range(1, 11):
        R = make_rng(n).integers(0, 2, (20, n, 1)).astype(np.int8)
        for pm in (1.0, 0.8, 0.6):
            cfg = MP.MpConfig(0.3, 0.15, pm, iterations=10)
            got = MP.run(R, cfg).marginals[:, 0]
            ref = [state_marginals_single_epoch(r[:, 0], 0.3, 0.15, cfg.delta) for r in R]
            worst = max(worst, float(np.max(np.abs(got - ref))))
    ok_tree = worst < 1e-9
    detail = ", ".join(f"a={a}: MP {x:.2e} MAP {y:.2e} gap {g:.0%}"
                       for a, x, y, g in zip(sw["alpha"], sw["MP"], sw["MAP"], gaps))
    report(6, ok_sweep and ok_tree,
           f"{detail}; tree max |diff| {worst:.1e}; {time.perf_counter() - t0:.0f}s")
    assert ok_sweep and ok_tree


def test_c07_dual_behavior_crossover():
    rec = run_experiment(load_config("mp_dual_behavior_rho095"), write=False)
    sw = rec.series["m_sweep"]
    m_star = sw["crossover"]
    ok = m_star is not None and 10 <= m_star <= 16
    e1, e5 = sw["errors"]
    report(7, ok, f"crossover m* = {m_star} (target in [10, 16]); "
                  f"p_mal=1: {e1[0]:.3g}..{e1[-1]:.3g}, p_mal=0.5: {e5[0]:.3g}..{e5[-1]:.3g} "
                  f"over m={sw['m'][0]}..{sw['m'][-1]}")
    assert ok


def test_c08_comparison_ordering():
    rec = run_experiment(load_config("comparison_m4"), write=False)
    bad = []
    for r in rec.table:
        weak = r["OPT"] <= r["SoftIS"] <= r["HardIS"] <= r["Maj"]
        strict = r["OPT"] < r["SoftIS"] < r["HardIS"] < r["Maj"]
        need_strict = r["prior"]["kind"] == "FixedCount"
        if not weak or (need_strict and not strict):
            bad.append(r["label"])
    rows = "; ".join(f"{r['label']}: {r['OPT']:.2e} {r['SoftIS']:.2e} {r['HardIS']:.2e} {r['Maj']:.2e}"
                     for r in rec.table)
    report(8, not bad, f"OPT/SoftIS/HardIS/Maj per row: {rows}; violations {bad}")
    assert not bad


def test_c09_lp():
    mp = G.solve_zero_sum(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    rps = G.solve_zero_sum(np.array([[0, -1, 1], [1, 0, -1], [-1, 1, 0]], float))
    ok_exact = all(np.allclose(e.attacker_strategy, 1 / len(e.attacker_strategy), atol=1e-7)
                   and np.allclose(e.defender_strategy, 1 / len(e.defender_strategy), atol=1e-7)
                   and abs(e.value) < 1e-9 for e in (mp, rps))
    rng = make_rng(9)
    gaps = []
    for _ in range(100):
        A = rng.normal(size=(6, 6))
        eq = G.solve_zero_sum(A)
        lo = float((eq.attacker_strategy @ A).min())
        hi = float((A @ eq.defender_strategy).max())
        gaps.append(hi - lo)
    ok = ok_exact and max(gaps) < 1e-7
    report(9, ok, f"pennies/RPS uniform and value 0: {ok_exact}; max duality gap {max(gaps):.1e}")
    assert ok


def _random_connected_case(rng):
    n = int(rng.integers(5, 40))
    kind = [C.ERDOS_RENYI, C.SMALL_WORLD, C.SCALE_FREE, C.FULLY_CONNECTED][int(rng.integers(4))]
    params = {C.ERDOS_RENYI: {"p": 0.4}, C.SMALL_WORLD: {"k": 4, "beta": 0.2},
              C.SCALE_FREE: {"m_attach": 2}, C.FULLY_CONNECTED: {}}[kind]
    while True:
        top = C.generate_topology(kind, params, n, seed=int(rng.integers(2**31)))
        keep = rng.random(n) < 0.8
        if keep.sum() >= 2 and top.is_connected(keep):
            return top, keep


def test_c10_consensus(runs):
    rng = make_rng(10)
    worst = 0.0
    for _ in range(100):
        top, keep = _random_connected_case(rng)
        x = rng.normal(size=top.n)
        run = C.run_consensus(top, x, keep, tol=1e-13, max_iter=1_000_000)
        worst = max(worst, float(np.max(np.abs(run.values[keep] - x[keep].mean()))))
    ok_conv = worst < 1e-9

    rec, _ = runs("cdd_n20_alpha01_mu1")
    sw = rec.series["delta_sweep"]
    T = sw["trials"]
    z = [abs(m - a) / max(np.sqrt(a * (1 - a) / T), 1 / T) for a, m in zip(sw["analytic"], sw["monte_carlo"])]
    ok_mc = len(z) == 10 and max(z) <= 3
    v = G.solve_zero_sum(rec.payoff).value
    ok_val = abs(v - 0.0176) <= 0.005
    ok = ok_conv and ok_mc and ok_val
    report(10, ok, f"survivor-mean error {worst:.1e} on 100 graphs; attack success MC vs "
                   f"analytic max {max(z):.2f} sigma on {len(z)} deltas; CDD value {v:.4f} "
                   f"(0.0176 +- 0.005)")
    assert ok


def test_c11_thread_determinism(runs):
    diff = []
    for name in PAYOFF_RUNS:
        _, out1 = runs(name, 1)
        _, out3 = runs(name, 3)
        if (out1 / "payoff.csv").read_bytes() != (out3 / "payoff.csv").read_bytes():
            diff.append(name)
    report(11, not diff, f"{len(PAYOFF_RUNS)} payoff runs repeated with 3 threads; "
                         f"differing CSVs: {diff}")
    assert not diff
