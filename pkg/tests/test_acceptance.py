"""Acceptance suite: one PASS/FAIL line per criterion.

Lines are collected in ``LINES`` and printed in the pytest terminal
summary (see conftest.py); ``python tests/test_acceptance.py`` prints them
directly. INFO lines carry context that is not itself a pass condition.
"""

import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from fixtures import CHANGES_20PCT, DAMAGED_IDS, MINIMAL_M  # noqa: E402
from helpers import FDOracle, planted_problem  # noqa: E402
from sparse_damage.experiments import (  # noqa: E402
    NoiseSpec,
    canonical_scenario,
    load_sweep,
    mean_rate_gap,
    run_monte_carlo,
    simulate_measurement,
)
from sparse_damage.fem_truss import canonical_truss  # noqa: E402
from sparse_damage.modal import frequency_changes, model_modes  # noqa: E402
from sparse_damage.sensitivity import eigen_jacobian  # noqa: E402
from sparse_damage.sparse_solvers import (  # noqa: E402
    SparseProblem,
    solve_l0,
    solve_l1_eq,
    solve_l1_ineq,
    solve_lp_irls,
    support,
)
from sparse_damage.updating import UpdateConfig, one_shot, run_update  # noqa: E402

DATA = Path(__file__).resolve().parents[1] / "data"
LINES: list[str] = []

# exact data: a planted entry may be far below 5% of its partner
EXACT_TAU_REL, EXACT_TAU_ABS = 1e-4, 1e-9


def report(tag, ok, text):
    line = f"{'PASS' if ok else 'FAIL'} [{tag}] {text}"
    LINES.append(line)
    return ok


def info(tag, text):
    LINES.append(f"INFO [{tag}] {text}")


def damaged_error(damage, severity):
    return float(np.max(np.abs(np.asarray(damage)[list(DAMAGED_IDS)] - severity)))


def benchmark(severity, m):
    truss = canonical_truss()
    f = simulate_measurement(truss, canonical_scenario(severity), m, NoiseSpec(0.0))
    cfg = UpdateConfig(method="l1_eq", m=m)
    return run_update(truss, f, cfg), one_shot(truss, f, cfg)


def criterion_1():
    truss = canonical_truss()
    rng = np.random.default_rng(101)
    states = [rng.uniform(0.3, 1.0, 20) for _ in range(20)]
    t0 = time.perf_counter()
    jacs = [eigen_jacobian(truss, th, 16) for th in states]
    t_jac = time.perf_counter() - t0
    oracle = FDOracle(truss)
    t0 = time.perf_counter()
    worst = 0.0
    for th, J in zip(states, jacs):
        fd = np.column_stack([oracle.column(th, i) for i in range(20)])
        worst = max(worst, float(np.max(np.abs(fd - J) / np.maximum(np.abs(J), 1e-12))))
    t_fd = time.perf_counter() - t0
    info("1", f"finite-difference oracle (25-digit eigenvalues, h=1e-6) took {t_fd:.1f} s")
    return report("1", worst < 1e-5 and t_jac < 5.0,
                  f"Jacobian vs central FD on 20 random states: max rel err {worst:.2e} (< 1e-5), "
                  f"analytic runtime {t_jac:.3f} s (< 5 s)")


def criterion_2():
    truss = canonical_truss()
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(10):
        th = rng.uniform(0.1, 1.0, 20)
        worst = max(worst, float(np.max(np.abs(eigen_jacobian(truss, th) @ th - 0.5))))
    return report("2", worst <= 1e-10, f"row-sum identity on 10 random states: max |J theta - 1/2| {worst:.1e} (<= 1e-10)")


def _recovery_counts(normalize):
    rec_l1 = rec_ir = agree_on_rec = agree_all = 0
    for seed in range(200):
        A, b, x = planted_problem(seed, normalize=normalize)
        truth = frozenset(np.flatnonzero(x))
        p = SparseProblem(A, b)
        l1, l0, ir = solve_l1_eq(p), solve_l0(p), solve_lp_irls(p, 0.5)
        s_l1 = frozenset(support(l1.x, EXACT_TAU_REL, EXACT_TAU_ABS))
        s_ir = frozenset(support(ir.x, EXACT_TAU_REL, EXACT_TAU_ABS))
        s_l0 = frozenset(support(l0.x, EXACT_TAU_REL, EXACT_TAU_ABS))
        agree = s_l1 == s_l0 and float(np.max(np.abs(l1.x - l0.x))) < 1e-6
        agree_all += agree
        if s_l1 == truth:
            rec_l1 += 1
            agree_on_rec += agree
        rec_ir += s_ir == truth
    return rec_l1, rec_ir, agree_on_rec, agree_all


def criterion_3():
    t0 = time.perf_counter()
    rec_l1, rec_ir, agree_on_rec, agree_all = _recovery_counts(True)
    runtime = time.perf_counter() - t0
    ok_a = report("3a", rec_l1 >= 190, f"l1_eq recovers the planted support on {rec_l1}/200 seeds (>= 95%), "
                                        "unit-norm Gaussian columns")
    ok_b = report("3b", agree_on_rec == rec_l1,
                  f"l1_eq agrees with l0 on {agree_on_rec}/{rec_l1} seeds where l1_eq meets the recovery "
                  f"tolerance (all seeds: {agree_all}/200; every solution meets its residual bound)")
    ok_c = report("3c", rec_ir >= 190, f"lp_irls(p=0.5) recovers the planted support on {rec_ir}/200 seeds (>= 95%)")
    ok_d = report("3d", runtime < 60, f"runtime {runtime:.1f} s (< 60 s)")
    raw = _recovery_counts(False)
    info("3", f"unnormalized Gaussian columns: l1_eq {raw[0]}/200, lp_irls {raw[1]}/200, "
              f"l0 agreement {raw[2]}/{raw[0]}")
    return ok_a and ok_b and ok_c and ok_d


def criterion_4():
    feasible = monotone = True
    worst_ratio = 0.0
    for seed in range(20):
        A, b, _ = planted_problem(seed)
        b = b + 0.05 * np.random.default_rng(10_000 + seed).standard_normal(9)
        objs = []
        for eps in (0.1, 0.2, 0.5, 1.0):
            sol = solve_l1_ineq(SparseProblem(A, b, eps))
            feasible &= sol.residual_norm <= eps * (1 + 1e-8)
            worst_ratio = max(worst_ratio, sol.residual_norm / eps)
            objs.append(sol.objective)
        monotone &= all(b_ <= a_ for a_, b_ in zip(objs, objs[1:]))
    return report("4", feasible and monotone,
                  f"l1_ineq on 20 problems x eps in {{0.1, 0.2, 0.5, 1.0}}: max ||Ax-b||/eps {worst_ratio:.9f} "
                  f"(<= 1+1e-8), objective non-increasing in eps: {monotone}")


def criterion_5():
    res, _ = benchmark(0.2, 9)
    err = damaged_error(res.damage_estimates, 0.2)
    exact = res.final_support == frozenset(DAMAGED_IDS)
    ok = report("5", exact and err <= 0.01 * 0.2 and res.converged and res.iterations_used <= 10,
                f"20% on elements 2 and 18, m=9, iterated l1_eq: support {sorted(e + 1 for e in res.final_support)}, "
                f"max magnitude error {err:.1e} (<= 2e-3), converged in {res.iterations_used} iterations (<= 10)")
    found = None
    for m in range(1, 13):
        r, _ = benchmark(0.2, m)
        if r.converged and r.final_support == frozenset(DAMAGED_IDS):
            found = m
            break
    ok_min = report("5b", found == MINIMAL_M, f"minimal m with exact localization: {found} (frozen fixture {MINIMAL_M})")
    return ok and ok_min


def criterion_6():
    it50, os50 = benchmark(0.5, 9)
    it20, os20 = benchmark(0.2, 9)
    e_os50, e_it50 = damaged_error(os50.damage_estimates, 0.5), damaged_error(it50.damage_estimates, 0.5)
    e_it20 = damaged_error(it20.damage_estimates, 0.2)
    ok_a = report("6a", e_os50 > e_it50, f"50% one-shot error {e_os50:.3e} > iterated error {e_it50:.3e}")
    k = it20.iterations_used
    e50_k = damaged_error(it50.per_iteration[k - 1].damage, 0.5)
    e20_k = damaged_error(it20.per_iteration[k - 1].damage, 0.2)
    ok_b = report("6b", e50_k > e20_k,
                  f"after {k} iterations (the 20% convergence count): error at 50% {e50_k:.3e} > at 20% {e20_k:.3e}")
    ok_c = report("6c", e_it50 > e_it20,
                  f"converged iterated error at 50% {e_it50:.3e} > at 20% {e_it20:.3e} "
                  f"(both below the 1e-6 step tolerance; 50% takes {it50.iterations_used} iterations)")
    info("6", f"one-shot error at 20% {damaged_error(os20.damage_estimates, 0.2):.3e}, at 50% {e_os50:.3e}")
    return ok_a and ok_b and ok_c


def criterion_7():
    fixtures = [(0.2, MINIMAL_M), (0.2, 9)]
    stable = {}
    for sev, m in fixtures:
        r, _ = benchmark(sev, m)
        stable[(sev, m)] = not r.support_changed_after_first
    ok_a = report("7a", all(stable.values()),
                  "support after iteration 1 unchanged at every later iteration for the 20% fixtures "
                  + ", ".join(f"m={m}: {stable[(s, m)]}" for s, m in fixtures))
    r50, _ = benchmark(0.5, 9)
    first = sorted(e + 1 for e in r50.per_iteration[0].support)
    final = sorted(e + 1 for e in r50.final_support)
    ok_b = report("7b", not r50.support_changed_after_first,
                  f"50% fixture m=9: support after iteration 1 {first}, final {final}")
    other = []
    for m in (10, 11, 12):
        r, _ = benchmark(0.2, m)
        other.append(f"m={m}: {'stable' if not r.support_changed_after_first else 'changes'}")
    info("7", "20% scenario at other m (not frozen fixtures): " + ", ".join(other))
    return ok_a and ok_b


def criterion_8():
    truss = canonical_truss()
    config = load_sweep(DATA / "sweep.json")
    t0 = time.perf_counter()
    rep = run_monte_carlo(truss, config)
    runtime = time.perf_counter() - t0
    rep_b = run_monte_carlo(truss, config)
    for meth in config.methods:
        for m in config.freq_counts:
            rates = " ".join(f"{rep.rate(meth, m, lvl):.3f}" for lvl in config.noise_levels)
            info("8", f"{meth} m={m} rates at {list(config.noise_levels)}%: {rates}")
    viol = []
    for meth in config.methods:
        for m in config.freq_counts:
            for lo, hi in zip(config.noise_levels, config.noise_levels[1:]):
                if rep.rate(meth, m, hi) > rep.rate(meth, m, lo) + 0.03:
                    viol.append((meth, m, hi))
    ok_a = report("8a", not viol, f"rates non-increasing in noise within 3 pp: violations {viol}")
    top = max(config.noise_levels)
    worst5 = max(rep.rate(meth, m, top) for meth in config.methods for m in config.freq_counts)
    ok_b = report("8b", worst5 < 0.5, f"all rates at {top:g}% noise below 50%: max {worst5:.3f}")
    cells = [(m, lvl) for m in config.freq_counts for lvl in config.noise_levels]
    oks = []
    for tag, l1 in (("8c", "l1_ineq"), ("8c'", "l1_eq")):
        gap = mean_rate_gap(rep, l1, "lp_irls")
        l1_wins = sum(rep.rate(l1, m, lvl) > rep.rate("lp_irls", m, lvl) for m, lvl in cells)
        lp_wins = sum(rep.rate("lp_irls", m, lvl) > rep.rate(l1, m, lvl) for m, lvl in cells)
        oks.append(report(tag, gap <= 0.15 and l1_wins < len(cells) and lp_wins < len(cells),
                          f"{l1} vs lp_irls: mean |rate gap| {gap * 100:.1f} pp (<= 15 pp); cells won strictly: "
                          f"{l1} {l1_wins}, lp_irls {lp_wins}, ties {len(cells) - l1_wins - lp_wins} of {len(cells)}"))
    ok_c = all(oks)
    ok_d = report("8d", runtime < 900, f"full sweep ({config.realizations} realizations x {len(cells)} (m, level) cells x "
                                       f"{len(config.methods)} methods) in {runtime:.0f} s (< 900 s)")
    ok_e = report("8e", rep.to_json() == rep_b.to_json() and rep.to_csv() == rep_b.to_csv(),
                  f"rerun with seed {config.seed} byte-identical (JSON and CSV)")
    return all((ok_a, ok_b, ok_c, ok_d, ok_e))


def criterion_9():
    truss = canonical_truss()
    theta = canonical_scenario(0.2).theta(truss)
    ch = np.abs(frequency_changes(model_modes(truss), model_modes(truss, theta)))
    regression = np.allclose(-ch, CHANGES_20PCT, rtol=1e-9, atol=1e-14)
    return report("9", ch.max() < 0.10 and ch.mean() < 0.03 and regression,
                  f"20% two-bar scenario: max |change| {ch.max() * 100:.3f}% (< 10%), mean {ch.mean() * 100:.3f}% "
                  f"(< 3%), matches frozen fixture: {regression}")


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9}


@pytest.mark.parametrize("number", [pytest.param(n, marks=pytest.mark.slow) if n == 8 else n for n in CRITERIA])
def test_criterion(number):
    assert CRITERIA[number](), "\n".join(line for line in LINES if f"[{number}" in line)


if __name__ == "__main__":
    results = [CRITERIA[n]() for n in CRITERIA]
    print("\n".join(LINES))
    sys.exit(0 if all(results) else 1)
