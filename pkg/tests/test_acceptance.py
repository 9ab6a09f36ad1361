"""Acceptance suite: every criterion checked at its stated tolerance.

Each test records one summary line (printed by the terminal-summary hook in
conftest) and asserts the criterion. The room-scale batch shared by the
certificate and benchmark criteria is computed once per session.
"""

import math
import time

import numpy as np
import pytest
import scipy.stats

from rigsel.baselines import even_select, manual_select, random_select
from rigsel.experiment import derive_seed
from rigsel.fisher import assemble, build_candidate_infos, schur_complement
from rigsel.objective import SelectionVector, eval_f, value_and_supergradient
from rigsel.scenario import build_scenario, load_scenario_config
from rigsel.slam_eval import build_problem, rmse_translation, solve_mle
from rigsel.solvers import exhaustive, frank_wolfe, greedy_select, kmax_round, select_and_certify

from test_fisher import dense_schur_oracle, negative_log_likelihood

RESULTS = {}

# The Frank-Wolfe bound is certified at any gap tolerance; 1e-3 keeps the
# room-scale batch inside the runtime budget (tighter only sharpens it).
BATCH_GAP_TOL = 1e-3
BATCH_MAX_ITER = 400


def record(num, name, passed, detail):
    RESULTS[num] = (name, bool(passed), detail)


@pytest.fixture(scope="session")
def room_batch():
    """20 seeded room-scale runs: greedy for K in 2..6, certificates for
    K in 3..6, baseline scores, and noisy-MLE RMSE for every method."""
    cfg = load_scenario_config("default-room")
    runs = []
    for seed_idx in range(20):
        scen = build_scenario(cfg.with_seed(derive_seed(0, seed_idx)))
        asm = build_candidate_infos(scen)
        N = scen.num_candidates
        per_k = {}
        for K in (2, 3, 4, 5, 6):
            entry = {}
            s_g, trace = greedy_select(asm, K, return_trace=True)
            entry["greedy"] = (s_g, trace[-1])
            entry["trace"] = trace
            if K >= 3:
                fw = frank_wolfe(asm, K, gap_tol=BATCH_GAP_TOL, max_iter=BATCH_MAX_ITER)
                rounded = kmax_round(fw[0], K)
                entry["fw"] = fw
                entry["rounded_value"] = eval_f(asm, rounded)
                entry["gamma"] = (fw[1] - trace[-1]) / trace[-1]
            sels = {
                "greedy": s_g,
                "random": random_select(N, K, derive_seed(0, seed_idx, K, 1)),
                "even": even_select(scen.candidates, K),
                "manual": manual_select(scen.candidates, K, scen.layout_name),
            }
            entry["scores"] = {
                m: (trace[-1] if m == "greedy" else eval_f(asm, sel))
                for m, sel in sels.items()
            }
            rmse = {}
            for m, sel in sels.items():
                sol = solve_mle(build_problem(scen, sel),
                                seed=derive_seed(0, seed_idx, K, 7))
                rmse[m] = rmse_translation(sol, scen)
            entry["rmse"] = rmse
            per_k[K] = entry
        runs.append(per_k)
    return runs


def test_criterion_1_oracle_optimality(tiny_assembly):
    cfg = load_scenario_config("tiny-room")
    t0 = time.perf_counter()
    ratios = []
    chain_ok = True
    for seed in range(10):
        asm = build_candidate_infos(build_scenario(cfg.with_seed(seed)))
        s_g, trace = greedy_select(asm, 3, return_trace=True)
        _, f_star = exhaustive(asm, 3)
        _, upper, _ = frank_wolfe(asm, 3, gap_tol=1e-3)
        chain_ok &= trace[-1] <= f_star + 1e-9 and f_star <= upper + 1e-9
        ratios.append(trace[-1] / f_star)
    elapsed = time.perf_counter() - t0
    passed = chain_ok and min(ratios) >= 0.95 and elapsed < 10.0
    record(1, "oracle optimality", passed,
           f"min ratio {min(ratios):.4f}, chain {chain_ok}, {elapsed:.1f}s")
    assert chain_ok
    assert min(ratios) >= 0.95
    assert elapsed < 10.0


def test_criterion_2_certificate_tightness(room_batch):
    t0 = time.perf_counter()
    gammas = np.array([run[K]["gamma"] for run in room_batch for K in (3, 4, 5, 6)])
    median = float(np.median(gammas))
    frac_tight = float(np.mean(gammas <= 0.02))
    detail = (f"median gamma {median:.4f}, {frac_tight:.0%} of {len(gammas)} runs "
              f"<= 2%")
    passed = median <= 0.05 and frac_tight >= 0.5
    record(2, "certificate tightness", passed, detail)
    assert median <= 0.05, detail
    assert frac_tight >= 0.5, detail


def test_criterion_3_gradient_correctness(tiny_assembly):
    rng = np.random.default_rng(42)
    h = 1e-5
    worst = 0.0
    checked = 0
    while checked < 20:
        w = rng.uniform(0.2, 0.8, 10)
        _, g = value_and_supergradient(tiny_assembly, w)
        eigs = np.linalg.eigvalsh(schur_complement(assemble(tiny_assembly, w)).S)
        if (eigs[1] - eigs[0]) < 1e-3 * max(eigs[0], 1.0):
            continue
        fd = np.zeros(10)
        for i in range(10):
            wp, wm = w.copy(), w.copy()
            wp[i] += h
            wm[i] -= h
            fd[i] = (eval_f(tiny_assembly, wp) - eval_f(tiny_assembly, wm)) / (2 * h)
        worst = max(worst, np.abs(fd - g).max() / np.abs(g).max())
        checked += 1
    passed = worst <= 1e-4
    record(3, "supergradient vs finite differences", passed,
           f"worst relative error {worst:.2e} over 20 interior points")
    assert worst <= 1e-4


def test_criterion_4_concavity_and_monotonicity(tiny_assembly):
    from rigsel.objective import concavity_probe

    rng = np.random.default_rng(43)
    worst_probe = np.inf
    for _ in range(100):
        w = rng.uniform(0.0, 1.0, 10)
        v = rng.uniform(0.0, 1.0, 10)
        worst_probe = min(worst_probe,
                          concavity_probe(tiny_assembly, w, v, rng.uniform(0, 1)))
    worst_mono = np.inf
    for _ in range(100):
        lo = rng.uniform(0.0, 0.8, 10)
        hi = np.minimum(lo + rng.uniform(0.0, 0.2, 10), 1.0)
        worst_mono = min(worst_mono,
                         eval_f(tiny_assembly, hi) - eval_f(tiny_assembly, lo))
    passed = worst_probe >= -1e-8 and worst_mono >= -1e-10
    record(4, "concavity and monotonicity", passed,
           f"worst probe {worst_probe:.2e}, worst monotone delta {worst_mono:.2e}")
    assert worst_probe >= -1e-8
    assert worst_mono >= -1e-10


def test_criterion_5_fim_correctness(small_scene, small_assembly):
    D = small_assembly.dim
    h = 1e-3
    worst_rel = 0.0
    for info in small_assembly.candidate_infos:
        dense = info.to_dense(small_assembly.num_free_poses, small_assembly.num_landmarks)

        def fd_hessian(step):
            H = np.zeros((D, D))
            for a in range(D):
                for b in range(a, D):
                    vals = []
                    for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                        xi = np.zeros(D)
                        xi[a] += sa * step
                        xi[b] += sb * step
                        vals.append(negative_log_likelihood(
                            small_scene, info.candidate_id, xi))
                    H[a, b] = H[b, a] = (vals[0] - vals[1] - vals[2] + vals[3]) / (4 * step * step)
            return H

        H = (4.0 * fd_hessian(h) - fd_hessian(2 * h)) / 3.0
        worst_rel = max(worst_rel, np.abs(H - dense).max() / np.abs(dense).max())

    rng = np.random.default_rng(44)
    worst_schur = 0.0
    for _ in range(5):
        w = rng.uniform(0.0, 1.0, 2)
        info = assemble(small_assembly, w)
        res = schur_complement(info)
        oracle = dense_schur_oracle(info.to_dense(), small_assembly.pose_dim)
        worst_schur = max(worst_schur, np.abs(res.S - oracle).max())

    passed = worst_rel <= 1e-6 and worst_schur <= 1e-8
    record(5, "FIM = numeric Hessian; Schur = dense oracle", passed,
           f"hessian rel {worst_rel:.2e}, schur abs {worst_schur:.2e}")
    assert worst_rel <= 1e-6
    assert worst_schur <= 1e-8


def test_criterion_6_benchmark_dominance(room_batch):
    cells = 0
    wins = 0
    for run in room_batch:
        for K in (2, 3, 4, 5, 6):
            scores = run[K]["scores"]
            cells += 1
            wins += all(
                scores["greedy"] >= scores[m] - 1e-12
                for m in ("random", "even", "manual")
            )
    win_rate = wins / cells

    rmse_ok = True
    detail_rmse = []
    for K in (2, 3, 4, 5, 6):
        greedy_med = np.median([run[K]["rmse"]["greedy"] for run in room_batch])
        random_med = np.median([run[K]["rmse"]["random"] for run in room_batch])
        detail_rmse.append(f"K{K}:{greedy_med:.4f}/{random_med:.4f}")
        rmse_ok &= greedy_med <= random_med
    passed = win_rate >= 0.8 and rmse_ok
    record(6, "greedy dominates baselines", passed,
           f"score wins {win_rate:.0%}; median RMSE greedy/random " + " ".join(detail_rmse))
    assert win_rate >= 0.8
    assert rmse_ok


def test_criterion_7_score_rmse_link():
    cfg = load_scenario_config("default-room")
    scen = build_scenario(cfg)
    asm = build_candidate_infos(scen)
    rng = np.random.default_rng(45)
    scores, rmses = [], []
    for K in (2, 3, 4, 5, 6):
        for _ in range(6):
            ids = rng.choice(scen.num_candidates, size=K, replace=False)
            sel = SelectionVector.from_ids(ids.tolist(), scen.num_candidates)
            scores.append(eval_f(asm, sel))
            sol = solve_mle(build_problem(scen, sel), seed=int(rng.integers(2**31)))
            rmses.append(rmse_translation(sol, scen))
    rho = scipy.stats.spearmanr(scores, rmses).statistic
    passed = rho < -0.3
    record(7, "score inversely rank-correlates with RMSE", passed,
           f"spearman rho {rho:.3f} over {len(scores)} designs")
    assert rho < -0.3


def test_criterion_8_rounded_relaxation_bounded(room_batch):
    worst = -np.inf
    rounded_vs_greedy = []
    for run in room_batch:
        for K in (3, 4, 5, 6):
            upper = run[K]["fw"][1]
            rounded = run[K]["rounded_value"]
            worst = max(worst, rounded - upper)
            rounded_vs_greedy.append(rounded / run[K]["greedy"][1])
    passed = worst <= 1e-9
    record(8, "rounded relaxation below the bound", passed,
           f"max(rounded - bound) {worst:.2e}; median rounded/greedy "
           f"{np.median(rounded_vs_greedy):.3f}")
    assert worst <= 1e-9


def test_criterion_9_greedy_runtime_linearity():
    cfg = load_scenario_config("default-room")
    cfg.environment.landmarks_per_wall = 10
    cfg.trajectory.num_poses = 10
    cfg.candidates.layout = "square-frame"
    times = []
    sizes = [20, 40, 80, 160]
    for N in sizes:
        cfg.candidates.positions_per_side = N // 4 + 1
        scen = build_scenario(cfg.with_seed(3))
        assert scen.num_candidates == N
        asm = build_candidate_infos(scen)
        per_round = []
        for _ in range(3):
            timer = []
            greedy_select(asm, 1, timer=timer)
            per_round.append(timer[0])
        times.append(np.mean(per_round))
    slope, intercept = np.polyfit(sizes, times, 1)
    pred = np.polyval([slope, intercept], sizes)
    ss_res = np.sum((np.array(times) - pred) ** 2)
    ss_tot = np.sum((np.array(times) - np.mean(times)) ** 2)
    r2 = 1.0 - ss_res / ss_tot
    passed = slope > 0 and r2 >= 0.9
    record(9, "greedy per-round time linear in pool size", passed,
           f"R^2 {r2:.3f}, slope {slope * 1e3:.3f} ms/candidate")
    assert slope > 0
    assert r2 >= 0.9


def test_criterion_10_zero_noise_consistency(tiny_scenario):
    cfg = load_scenario_config("default-room")
    room = build_scenario(cfg)
    cases = []
    for scen, ids in (
        (tiny_scenario, [0, 4, 9]),
        (tiny_scenario, [2, 3]),
        (room, greedy_select(build_candidate_infos(room), 3).ids()),
        (room, [0, 16, 34, 50]),
    ):
        sel = SelectionVector.from_ids(ids, scen.num_candidates)
        asm = build_candidate_infos(scen)
        if eval_f(asm, sel) <= 0:
            continue
        problem = build_problem(scen, sel, pixels="true")
        sol = solve_mle(problem, init_trans_sigma=0.05, init_rot_sigma=0.02, seed=11)
        cases.append(rmse_translation(sol, scen))
    worst = max(cases)
    passed = worst <= 1e-6 and len(cases) >= 3
    record(10, "zero-noise MLE recovers ground truth", passed,
           f"worst RMSE {worst:.2e} m over {len(cases)} designs")
    assert len(cases) >= 3
    assert worst <= 1e-6
