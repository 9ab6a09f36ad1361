"""Timing comparison of the numba kernels against the numpy fallbacks.

Run:  python3 benchmarks/bench_accel.py [--repeats 200]
The same comparison can be forced package-wide with RIGSEL_NUMBA=0.
"""

import argparse
import time

import numpy as np

import rigsel.accel as accel
from rigsel.fisher import assemble, build_candidate_infos, schur_complement
from rigsel.scenario import build_scenario, load_scenario_config


def time_call(fn, repeats):
    fn()  # warmup (numba compilation)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats * 1e3


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--scenario", default="default-room")
    args = parser.parse_args()

    if not accel.USE_NUMBA:
        raise SystemExit("numba path is disabled; run without RIGSEL_NUMBA=0")

    scen = build_scenario(load_scenario_config(args.scenario))
    asm = build_candidate_infos(scen)
    rng = np.random.default_rng(0)
    w = rng.uniform(0.1, 1.0, asm.num_candidates)
    act = np.flatnonzero(w != 0).astype(np.int64)
    info = assemble(asm, w)
    res = schur_complement(info)

    n = asm.num_free_poses
    S0 = np.zeros((6 * n, 6 * n))
    view = S0.reshape(n, 6, n, 6)
    view[np.arange(n), :, np.arange(n), :] = info.pose_diag
    v6 = rng.normal(size=(n, 6))
    ulm = rng.normal(size=(asm.num_landmarks, 3))

    cases = {
        "assembly (cross blocks)": (
            lambda: accel.weighted_block_sum_numpy(
                np.zeros((len(asm.cross_rows), 6, 3)), act, w[act],
                asm.pl_ptr, asm.pl_slot, asm.pl_blocks),
            lambda: accel.weighted_block_sum_numba(
                np.zeros((len(asm.cross_rows), 6, 3)), act, w[act],
                asm.pl_ptr, asm.pl_slot, asm.pl_blocks),
        ),
        "schur reduction": (
            lambda: accel.schur_reduce_numpy(S0.copy(), res.ainv, info.cross,
                                             asm.lm_ptr, asm.cross_rows, res.retained),
            lambda: accel.schur_reduce_numba(S0.copy(), res.ainv, info.cross,
                                             asm.lm_ptr, asm.cross_rows, res.retained),
        ),
        "gradient quadratic forms": (
            lambda: accel.quadratic_forms_numpy(
                asm.num_candidates, v6, ulm,
                asm.pp_cand, asm.pp_idx, asm.pp_blocks,
                asm.ll_cand, asm.ll_idx, asm.ll_blocks,
                asm.pl_cand, asm.pl_pose, asm.pl_lm, asm.pl_blocks),
            lambda: accel.quadratic_forms_numba(
                asm.num_candidates, v6, ulm,
                asm.pp_cand, asm.pp_idx, asm.pp_blocks,
                asm.ll_cand, asm.ll_idx, asm.ll_blocks,
                asm.pl_cand, asm.pl_pose, asm.pl_lm, asm.pl_blocks),
        ),
    }

    print(f"scenario {args.scenario}: P={scen.num_poses} L={scen.num_landmarks} "
          f"N={scen.num_candidates}, {args.repeats} repeats")
    print(f"{'kernel':<28} {'numpy ms':>10} {'numba ms':>10} {'speedup':>9}")
    for name, (np_fn, nb_fn) in cases.items():
        t_np = time_call(np_fn, args.repeats)
        t_nb = time_call(nb_fn, args.repeats)
        print(f"{name:<28} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
