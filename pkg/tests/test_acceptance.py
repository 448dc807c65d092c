"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the lines are written
straight to the terminal.  The baseline sweep and the desk-scale training
run are shared through session fixtures, so the whole module takes a few
minutes on a single core.
"""

import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from gftlqr import harness
from gftlqr.dyn2r import (
    CoriolisVariant,
    ManipulatorParams,
    coriolis_vector,
    inertia_matrix,
    kinetic_energy,
    rk4_step,
)
from gftlqr.evo import GFT_GENOME_LENGTH, GaConfig, run_ga
from gftlqr.gft import constant_controller, q_gains
from gftlqr.harness import ScheduledLqrController, SimConfig, case_cost, simulate_case
from gftlqr.persist import DEFAULT_BASELINE_GA, DEFAULT_TRAIN_GA
from gftlqr.riccati import LqrWeights, care_residual, lqr_gain, solve_care

P = ManipulatorParams.nominal()
CFG = SimConfig()
SEED = 0


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {name}: {detail}")
        assert ok, detail

    return emit


# ---------------------------------------------------------------------------
# shared runs

@pytest.fixture(scope="session")
def baseline_sweep():
    cases = harness.build_scenarios()
    ga = GaConfig(**{**DEFAULT_BASELINE_GA.to_dict(), "seed": SEED})
    t0 = time.time()
    results = {c.id: harness.optimize_baseline(c, P, CFG, ga) for c in cases}
    return results, time.time() - t0


@pytest.fixture(scope="session")
def desk_training(baseline_sweep):
    results, _ = baseline_sweep
    cases = harness.desk_subset()
    ga = GaConfig(**{**DEFAULT_TRAIN_GA.to_dict(), "seed": SEED})
    seeds = harness.warm_start_population(cases, results, ga.population_size, ga.seed)
    t0 = time.time()
    res = harness.train_gft(cases, P, CFG, ga, {k: r.cost for k, r in results.items()},
                            initial=seeds)
    return res, time.time() - t0


# ---------------------------------------------------------------------------

def _pbh_margin(A, B):
    n = A.shape[0]
    return min(np.linalg.svd(np.hstack([A - lam * np.eye(n), B]), compute_uv=False)[-1]
               for lam in np.linalg.eigvals(A))


def test_care_correctness(report):
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    K = lqr_gain(solve_care(A, B, np.eye(2), np.eye(1)), B, np.eye(1)).K
    k_err = float(np.max(np.abs(K - np.array([[1.0, math.sqrt(3.0)]]))))

    rng = np.random.default_rng(2024)
    worst, failures, n = 0.0, 0, 0
    while n < 100:
        A = rng.normal(size=(4, 4))
        B = rng.normal(size=(4, 2))
        if _pbh_margin(A, B) < 0.1:  # keep clearly stabilizable systems
            continue
        n += 1
        Q = np.diag(10.0 ** rng.uniform(-2, 3, 4))
        R = np.diag(10.0 ** rng.uniform(-3, 1, 2))
        P_ = solve_care(A, B, Q, R)
        res = np.max(np.abs(care_residual(A, B, Q, R, P_))) / max(1.0, np.max(np.abs(Q)))
        worst = max(worst, res)
        psd = np.min(np.linalg.eigvalsh(P_)) >= -1e-9 * np.max(np.abs(P_))
        stable = np.max(np.linalg.eigvals(A - B @ lqr_gain(P_, B, R).K).real) < 0
        if not (res <= 1e-8 and np.array_equal(P_, P_.T) and psd and stable):
            failures += 1
    ok = k_err <= 1e-6 and failures == 0
    report("CARE correctness", ok,
           f"double-integrator |K - [1, sqrt3]| = {k_err:.1e} (tol 1e-6); "
           f"100 random 4x2 systems: {failures} failures, worst scaled residual {worst:.1e} (tol 1e-8)")


def test_dynamics_fidelity(report):
    # hand-evaluated terms for the nominal arm
    a, b, i1, i2, h, c22 = 5.0, 12.5, 20.0 / 3.0, 10.0 / 3.0, 5.0, 2.5
    expect = {}
    for th2 in (0.0, math.pi / 2, math.pi):
        c = math.cos(th2)
        expect[(th2, CoriolisVariant.PAPER_VERBATIM)] = np.array(
            [[a + b + i1 + h * c, c22 + 0.5 * h * c], [c22 + 0.5 * h * c, c22 + i2]])
        expect[(th2, CoriolisVariant.STANDARD_PHYSICAL)] = np.array(
            [[a + b + i1 + i2 + 2 * h * c, c22 + i2 + h * c], [c22 + i2 + h * c, c22 + i2]])
    m_err = max(float(np.max(np.abs(inertia_matrix(P, th2, v) - M)))
                for (th2, v), M in expect.items())
    c_err = max(
        float(np.max(np.abs(coriolis_vector(P, (0.0, math.pi / 2, 1.0, 1.0), CoriolisVariant.PAPER_VERBATIM)
                            - [-7.5, -2.5]))),
        float(np.max(np.abs(coriolis_vector(P, (0.0, math.pi / 2, 1.0, 1.0), CoriolisVariant.STANDARD_PHYSICAL)
                            - [-15.0, 5.0]))),
        float(np.max(np.abs(coriolis_vector(P, (0.0, math.pi, 1.0, 1.0), CoriolisVariant.PAPER_VERBATIM)))),
    )

    def run(x, dt, n, v):
        for _ in range(n):
            x = rk4_step(P, x, (50.0, -20.0), dt, v)
        return x

    x0 = np.array([0.2, 1.0, 1.5, -2.0])
    halving = max(float(np.max(np.abs(run(x0, 0.0167, 1, v) - run(x0, 0.0167 / 4, 4, v))))
                  for v in CoriolisVariant)
    ref = run(x0, 0.2 / 512, 512, CoriolisVariant.PAPER_VERBATIM)
    errs = [np.max(np.abs(run(x0, 0.2 / n, n, CoriolisVariant.PAPER_VERBATIM) - ref)) for n in (8, 16, 32)]
    order = float(np.min(np.log2(np.array(errs[:-1]) / np.array(errs[1:]))))

    rng = np.random.default_rng(7)
    drift = 0.0
    for _ in range(3):
        x = np.concatenate([rng.uniform(-math.pi, math.pi, 2), rng.uniform(-2.0, 2.0, 2)])
        e0 = kinetic_energy(P, x)
        for _ in range(int(round(10.0 / 0.0167))):
            x = rk4_step(P, x, (0.0, 0.0), 0.0167, CoriolisVariant.STANDARD_PHYSICAL)
        drift = max(drift, abs(kinetic_energy(P, x) - e0) / e0)

    ok = m_err <= 1e-9 and c_err <= 1e-9 and halving <= 1e-6 and order > 3.7 and drift <= 1e-5
    report("Dynamics fidelity", ok,
           f"M err {m_err:.1e}, C err {c_err:.1e} (tol 1e-9); step-halving {halving:.1e} (tol 1e-6); "
           f"observed order {order:.2f}; energy drift {drift:.1e} over 10 s (tol 1e-5)")


def test_containment_equivalence(report):
    cases = harness.build_scenarios()[::9][:10]
    rng = np.random.default_rng(11)
    worst = 0.0
    for case in cases:
        gft = constant_controller(tuple(10.0 ** rng.uniform(0, 3, 4)))
        q = q_gains(gft, 0.0, 0.0)
        sched = ScheduledLqrController(LqrWeights(tuple(q), (gft.r_value, gft.r_value)), P)
        a = case_cost(simulate_case(gft, case, P, CFG, record=False), P)
        b = case_cost(simulate_case(sched, case, P, CFG, record=False), P)
        worst = max(worst, abs(a - b))
    report("Containment equivalence", worst <= 1e-9,
           f"max |cost(constant GFT) - cost(per-step static-Q LQR)| = {worst:.1e} over {len(cases)} scenarios (tol 1e-9)")


def test_baseline_sweep(report, baseline_sweep):
    results, secs = baseline_sweep
    costs = np.array([results[i].cost for i in range(88)])
    fig4 = harness.find_case((180, 0), (90, 45))
    run = simulate_case(harness.baseline_controller(results[fig4.id], P), fig4, P, CFG)
    ok = len(results) == 88 and bool(np.all(np.isfinite(costs))) and run.settled and run.settle_time <= 10.0
    report("Baseline sweep", ok,
           f"{int(np.isfinite(costs).sum())}/88 finite costs (range {costs.min():.3f}..{costs.max():.3f}); "
           f"case {fig4.label()} settles at T_s = {run.settle_time:.3f} s; {secs:.0f} s")


def test_desk_training(report, desk_training):
    res, secs = desk_training
    wins = float(np.mean(res.relative_costs < 1.0))
    ok = res.mean_relative_cost < 1.0 and wins >= 0.75
    report("Desk-scale training", ok,
           f"mean relative cost {res.mean_relative_cost:.4f} (< 1.0), wins {wins:.0%} (>= 75%); "
           f"per case {np.round(res.relative_costs, 3).tolist()}; {secs:.0f} s "
           f"(full-scale reference 0.815, not asserted)")


def test_robustness_smoke(report, baseline_sweep, desk_training):
    results, _ = baseline_sweep
    res, _ = desk_training
    cases = harness.build_scenarios()
    lqr = {cid: harness.baseline_controller(r, P) for cid, r in results.items()}
    rep = harness.robustness_mc(res.controller, lqr, cases, 25, SEED, P, CFG, width=0.1)
    s = rep.summary()
    gft_rate, lqr_rate = rep.success_rate(0), rep.success_rate(1)
    stats = s["controllers"]
    has_dists = all(stats[n]["mutual_stats"]["settle_time"] is not None for n in rep.names)
    ok = rep.n_draws == 2200 and gft_rate >= lqr_rate and has_dists
    med = {n: stats[n]["mutual_stats"]["settle_time"]["median"] if has_dists else float("nan")
           for n in rep.names}
    report("Robustness smoke test", ok,
           f"success gft {gft_rate:.1%} vs lqr {lqr_rate:.1%} over {rep.n_draws} draws "
           f"({s['n_mutual']} mutual; median T_s gft {med['gft']:.3f} s, lqr {med['lqr']:.3f} s); "
           f"full-scale reference 100% vs 89.8%, not asserted")


def _cli(args, cwd, threads):
    env = {**os.environ, "GFTLQR_THREADS": str(threads), "PYTHONWARNINGS": "ignore"}
    r = subprocess.run([sys.executable, "-m", "gftlqr.cli", *args], cwd=cwd, env=env,
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    return r.stdout


def _all_commands(root: Path, threads: int) -> dict:
    root.mkdir()
    cfg = root / "cfg.json"
    cfg.write_text('{"seed": 5, "scenarios": [14, 67], "train_scenarios": [14, 67],'
                   ' "ga": {"population_size": 8, "n_islands": 2, "n_generations": 4},'
                   ' "baseline_ga": {"population_size": 8, "n_islands": 2, "n_generations": 3}}')
    common = ["--config", "cfg.json", "--out", "out"]
    stdout = [
        _cli(["baseline", *common], root, threads),
        _cli(["train", *common, "--baseline", "out/baseline.json"], root, threads),
        _cli(["simulate", *common, "--controller", "out/controller.json", "--case", "67",
              "--baseline", "out/baseline.json"], root, threads),
        _cli(["simulate", *common, "--controller", "baseline", "--case", "14",
              "--baseline", "out/baseline.json"], root, threads),
        _cli(["surface", *common, "--controller", "out/controller.json", "--fis", "bid1",
              "--grid", "11"], root, threads),
        _cli(["robustness", *common, "--controller", "out/controller.json",
              "--baseline", "out/baseline.json", "--n-per-case", "3"], root, threads),
    ]
    files = {p.name: p.read_bytes() for p in sorted((root / "out").iterdir())}
    files["stdout"] = "".join(stdout).encode()
    return files


def test_determinism(report, tmp_path):
    a = _all_commands(tmp_path / "a", 1)
    b = _all_commands(tmp_path / "b", 1)
    c = _all_commands(tmp_path / "c", 4)
    differ = sorted(k for k in a if not (a[k] == b.get(k) == c.get(k)))
    same_keys = set(a) == set(b) == set(c)
    report("Determinism", same_keys and not differ,
           f"{len(a)} outputs from baseline/train/simulate/surface/robustness compared across two "
           f"runs with GFTLQR_THREADS=1 and one with 4; differing: {differ or 'none'}")


def test_ga_sanity(report):
    monotone = True
    onemax_hits = 0
    for seed in range(4):
        cfg = GaConfig(population_size=40, n_islands=4, n_generations=200, seed=seed)
        best, hist = run_ga(cfg, lambda g: float(np.sum(g)), genome_length=4)
        onemax_hits += int(hist[-1].best_cost == 0.0)
        b = [r.best_cost for r in hist]
        monotone &= all(x >= y for x, y in zip(b, b[1:]))

    target = np.random.default_rng(99).integers(0, 256, GFT_GENOME_LENGTH)
    cfg = GaConfig(population_size=112, n_islands=4, n_generations=200, seed=1)
    _, hist = run_ga(cfg, lambda pop: np.sum(pop != target, axis=1).astype(float),
                     genome_length=GFT_GENOME_LENGTH, vectorized=True)
    b = [r.best_cost for r in hist]
    monotone &= all(x >= y for x, y in zip(b, b[1:]))
    improved = b[-1] < b[0]
    ok = onemax_hits >= 3 and improved and monotone
    report("GA sanity", ok,
           f"byte-sum optimum reached on {onemax_hits}/4 seeds; Hamming {b[0]:.0f} -> {b[-1]:.0f} "
           f"on 222 genes; best-cost history monotone: {monotone}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
