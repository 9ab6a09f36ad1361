"""Command-line entry points.

Verbs: ``simulate`` (generate and dump a scenario), ``optimize`` (one
scenario, one K, all methods, prints the certificate), ``benchmark`` (full
seeded batch), ``oracle`` (exhaustive comparison on small pools).
Exit codes: 0 success, 1 configuration error, 2 partial failures occurred.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from .baselines import even_select, manual_select, random_select
from .experiment import (
    ExperimentConfig,
    aggregate,
    derive_seed,
    emit,
    run_experiment,
)
from .fisher import build_candidate_infos
from .objective import eval_f
from .scenario import build_scenario, load_scenario_config
from .slam_eval import build_problem, rmse_translation, solve_mle
from .solvers import exhaustive, greedy_select, select_and_certify


def _build(config_name: str, seed: int | None):
    cfg = load_scenario_config(config_name)
    if seed is not None:
        cfg = cfg.with_seed(seed)
    scenario = build_scenario(cfg)
    return cfg, scenario


def cmd_simulate(args) -> int:
    _, scenario = _build(args.config, args.seed)
    scenario.dump(args.out)
    print(f"scenario {scenario.hash()} with {len(scenario.layout)} measurements "
          f"-> {args.out}")
    return 0


def cmd_optimize(args) -> int:
    _, scenario = _build(args.config, args.seed)
    assembly = build_candidate_infos(scenario)
    N = scenario.num_candidates
    design = select_and_certify(assembly, args.k, gap_tol=args.gap_tol,
                                max_iter=args.max_iter)
    cert = design.certificate

    selections = {"greedy": design.selection}
    try:
        selections["manual"] = manual_select(scenario.candidates, args.k, scenario.layout_name)
    except KeyError as err:
        print(f"manual: skipped ({err})", file=sys.stderr)
    selections["even"] = even_select(scenario.candidates, args.k)
    selections["random"] = random_select(N, args.k, derive_seed(args.seed or 0, args.k, 1))

    print(f"scenario {scenario.hash()}  N={N}  K={args.k}")
    print(f"{'method':<8} {'score':>14} {'rmse_m':>12}  selected")
    for name, sel in selections.items():
        score = cert.greedy_value if name == "greedy" else eval_f(assembly, sel)
        rmse = ""
        if not args.no_mle:
            sol = solve_mle(build_problem(scenario, sel),
                            seed=derive_seed(args.seed or 0, args.k, 2))
            rmse = f"{rmse_translation(sol, scenario):.6f}"
        print(f"{name:<8} {score:14.6e} {rmse:>12}  {sel.ids()}")
    print(
        f"certificate: upper_bound={cert.upper_bound:.6e} "
        f"relative_gap={cert.relative_gap:.4%} "
        f"(fw iterations {cert.fw_iterations}, fw gap {cert.fw_gap:.3e}); "
        f"rounded relaxation value {cert.rounded_value:.6e}"
    )
    return 0


def cmd_benchmark(args) -> int:
    if args.config:
        config = ExperimentConfig.from_file(args.config)
    else:
        config = ExperimentConfig()
    if args.scenario:
        config.scenario = args.scenario
    if args.root_seed is not None:
        config.root_seed = args.root_seed
    if args.seeds is not None:
        config.num_seeds = args.seeds
    if args.workers is not None:
        config.workers = args.workers
    if args.output_dir is not None:
        config.output_dir = args.output_dir
    if args.gap_tol is not None:
        config.gap_tol = args.gap_tol

    report = run_experiment(config)
    summary = aggregate(report)
    paths = emit(report, summary, config.output_dir, config)
    for entry in summary:
        gamma = entry.get("gamma_median")
        extra = f"  median_gamma={gamma:.4%}" if gamma is not None else ""
        rmse = entry["rmse_median"]
        rmse_txt = f"{rmse:.5f}" if rmse is not None else "n/a"
        print(f"K={entry['k']} {entry['method']:<7} score_median={entry['score_median']:.5e} "
              f"rmse_median={rmse_txt}{extra}")
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    if report.had_failures:
        failed = [r for r in report.rows if r.status != "ok"]
        print(f"{len(failed)} row(s) failed; see rows.csv", file=sys.stderr)
        return 2
    return 0


def cmd_oracle(args) -> int:
    _, scenario = _build(args.config, args.seed)
    assembly = build_candidate_infos(scenario)
    N = scenario.num_candidates
    n_subsets = math.comb(N, args.k)
    best, best_val = exhaustive(assembly, args.k)
    greedy, trace = greedy_select(assembly, args.k, return_trace=True)
    ratio = trace[-1] / best_val if best_val > 0 else float("nan")
    print(f"N={N} K={args.k} subsets={n_subsets}")
    print(f"exhaustive: f={best_val:.6e} ids={best.ids()}")
    print(f"greedy:     f={trace[-1]:.6e} ids={greedy.ids()} (ratio {ratio:.4f})")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rigsel",
        description="Certifiably near-optimal camera-mount selection for landmark SLAM.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a scenario and dump it to JSON")
    p.add_argument("--config", default="default-room", help="preset name or YAML path")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", type=Path, default=Path("scenario.json"))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("optimize", help="select K mounts on one scenario and certify")
    p.add_argument("--config", default="default-room")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--gap-tol", type=float, default=1e-4)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--no-mle", action="store_true", help="skip the MLE evaluation")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("benchmark", help="run the full seeded batch experiment")
    p.add_argument("--config", default=None, help="experiment YAML (defaults built in)")
    p.add_argument("--scenario", default=None, help="override scenario preset/path")
    p.add_argument("--root-seed", type=int, default=None)
    p.add_argument("--seeds", type=int, default=None, help="number of seeds")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--output-dir", default=None)
    p.add_argument("--gap-tol", type=float, default=None)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("oracle", help="exhaustive optimum vs greedy on a small pool")
    p.add_argument("--config", default="tiny-room")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(func=cmd_oracle)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, TypeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
