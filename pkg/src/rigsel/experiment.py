"""Batch experiment orchestration: seeded runs across budgets and selection
methods, score and RMSE evaluation, aggregation, and file emission.

Seeds: run i uses the scenario seed derived from
``np.random.SeedSequence((root_seed, i))``, so extending ``num_seeds`` never
reshuffles earlier runs. Method-internal randomness (random baseline, MLE
init) derives the same way with extra counter fields.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import yaml

from .baselines import even_select, manual_select, random_select
from .fisher import build_candidate_infos
from .objective import eval_f
from .scenario import build_scenario, load_scenario_config
from .slam_eval import build_problem, rmse_translation, solve_mle
from .solvers import select_and_certify

KNOWN_METHODS = ("greedy", "random", "even", "manual")
_METHOD_TAG = {m: i for i, m in enumerate(KNOWN_METHODS)}

CSV_COLUMNS = [
    "seed_index", "scenario_seed", "scenario_hash", "k", "method", "status",
    "reason", "score", "rmse", "wall_time_s", "selected",
    "upper_bound", "relative_gap", "fw_iterations", "fw_gap", "rounded_value",
]
TIMING_COLUMNS = {"wall_time_s"}


@dataclass
class MleSettings:
    init_trans_sigma: float = 0.05
    init_rot_sigma: float = 0.02
    pixels: str = "noisy"


@dataclass
class ExperimentConfig:
    scenario: str = "default-room"
    k_values: list[int] = field(default_factory=lambda: [2, 3, 4, 5, 6])
    methods: list[str] = field(default_factory=lambda: list(KNOWN_METHODS))
    num_seeds: int = 50
    root_seed: int = 0
    gap_tol: float = 1e-4
    max_iter: int = 500
    ls_shrink: float = 0.5
    ls_slope: float = 1e-4
    ls_max_steps: int = 20
    workers: int = 1
    output_dir: str = "results"
    run_mle: bool = True
    mle: MleSettings = field(default_factory=MleSettings)

    def __post_init__(self):
        if not self.methods:
            raise ValueError("methods list must be nonempty")
        unknown = set(self.methods) - set(KNOWN_METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}; known: {KNOWN_METHODS}")
        if any(k < 1 for k in self.k_values) or not self.k_values:
            raise ValueError("k_values must be positive and nonempty")
        if self.num_seeds < 1:
            raise ValueError("num_seeds must be positive")

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        d = dict(d)
        mle = MleSettings(**d.pop("mle", {}))
        return ExperimentConfig(mle=mle, **d)

    @staticmethod
    def from_file(path: str | Path) -> "ExperimentConfig":
        return ExperimentConfig.from_dict(yaml.safe_load(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunRow:
    seed_index: int
    scenario_seed: int
    scenario_hash: str
    k: int
    method: str
    status: str = "ok"
    reason: str = ""
    score: float | None = None
    rmse: float | None = None
    wall_time_s: float | None = None
    selected: list[int] = field(default_factory=list)
    upper_bound: float | None = None
    relative_gap: float | None = None
    fw_iterations: int | None = None
    fw_gap: float | None = None
    rounded_value: float | None = None


@dataclass
class EvalReport:
    rows: list[RunRow]

    def ok_rows(self) -> list[RunRow]:
        return [r for r in self.rows if r.status == "ok"]

    @property
    def had_failures(self) -> bool:
        return any(r.status != "ok" for r in self.rows)


def derive_seed(root_seed: int, *counters: int) -> int:
    """Counter-based seed split; stable under adding more seeds later."""
    ss = np.random.SeedSequence((int(root_seed),) + tuple(int(c) for c in counters))
    return int(ss.generate_state(1, np.uint64)[0])


def _run_one_seed(config: ExperimentConfig, seed_index: int) -> list[RunRow]:
    rows: list[RunRow] = []
    scenario_seed = derive_seed(config.root_seed, seed_index)
    try:
        scen_cfg = load_scenario_config(config.scenario).with_seed(scenario_seed)
        scenario = build_scenario(scen_cfg)
        assembly = build_candidate_infos(scenario)
        scen_hash = scenario.hash()
    except Exception as err:  # scenario-level failure poisons only this seed
        return [
            RunRow(seed_index, scenario_seed, "", k, m, status="failed",
                   reason=f"scenario: {err}")
            for k in config.k_values for m in config.methods
        ]

    N = scenario.num_candidates
    for k in config.k_values:
        if k > N:
            for m in config.methods:
                rows.append(RunRow(seed_index, scenario_seed, scen_hash, k, m,
                                   status="failed", reason=f"K={k} exceeds N={N}"))
            continue
        for method in config.methods:
            row = RunRow(seed_index, scenario_seed, scen_hash, k, method)
            t0 = time.perf_counter()
            try:
                if method == "greedy":
                    design = select_and_certify(
                        assembly, k, gap_tol=config.gap_tol, max_iter=config.max_iter,
                        ls_shrink=config.ls_shrink, ls_slope=config.ls_slope,
                        ls_max_steps=config.ls_max_steps,
                    )
                    selection = design.selection
                    cert = design.certificate
                    row.score = cert.greedy_value
                    row.upper_bound = cert.upper_bound
                    row.relative_gap = cert.relative_gap
                    row.fw_iterations = cert.fw_iterations
                    row.fw_gap = cert.fw_gap
                    row.rounded_value = cert.rounded_value
                elif method == "random":
                    selection = random_select(
                        N, k, derive_seed(config.root_seed, seed_index, k,
                                          _METHOD_TAG["random"])
                    )
                elif method == "even":
                    selection = even_select(scenario.candidates, k)
                else:
                    selection = manual_select(scenario.candidates, k, scenario.layout_name)
                if row.score is None:
                    row.score = eval_f(assembly, selection)
                row.selected = selection.ids()
                if config.run_mle:
                    problem = build_problem(scenario, selection, pixels=config.mle.pixels)
                    sol = solve_mle(
                        problem,
                        init_trans_sigma=config.mle.init_trans_sigma,
                        init_rot_sigma=config.mle.init_rot_sigma,
                        seed=derive_seed(config.root_seed, seed_index, k,
                                         _METHOD_TAG[method], 1),
                    )
                    if not np.isfinite(sol.final_cost):
                        raise RuntimeError("MLE diverged to a non-finite cost")
                    row.rmse = rmse_translation(sol, scenario)
                row.wall_time_s = time.perf_counter() - t0
            except Exception as err:
                row.status = "failed"
                row.reason = str(err)
                row.wall_time_s = time.perf_counter() - t0
            rows.append(row)
    return rows


def run_experiment(config: ExperimentConfig) -> EvalReport:
    """Run the full batch; per-row failures are recorded, never raised."""
    seed_indices = list(range(config.num_seeds))
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(_run_one_seed, [config] * len(seed_indices), seed_indices))
    else:
        chunks = [_run_one_seed(config, i) for i in seed_indices]
    rows = [row for chunk in chunks for row in chunk]
    method_order = {m: i for i, m in enumerate(config.methods)}
    rows.sort(key=lambda r: (r.seed_index, r.k, method_order.get(r.method, 99)))
    return EvalReport(rows)


def aggregate(report: EvalReport) -> list[dict]:
    """Per (K, method) medians, means, and standard deviations."""
    if not report.rows:
        raise ValueError("cannot aggregate an empty report")
    groups: dict[tuple[int, str], list[RunRow]] = {}
    for r in report.ok_rows():
        groups.setdefault((r.k, r.method), []).append(r)
    summary = []
    for (k, method) in sorted(groups, key=lambda km: (km[0], km[1])):
        rows = groups[(k, method)]
        scores = np.array([r.score for r in rows if r.score is not None], dtype=float)
        rmses = np.array([r.rmse for r in rows if r.rmse is not None], dtype=float)
        entry = {
            "k": k,
            "method": method,
            "runs": len(rows),
            "score_median": float(np.median(scores)) if scores.size else None,
            "score_mean": float(np.mean(scores)) if scores.size else None,
            "score_std": float(np.std(scores)) if scores.size else None,
            "rmse_median": float(np.median(rmses)) if rmses.size else None,
            "rmse_mean": float(np.mean(rmses)) if rmses.size else None,
            "rmse_std": float(np.std(rmses)) if rmses.size else None,
        }
        if method == "greedy":
            gaps = np.array([r.relative_gap for r in rows if r.relative_gap is not None])
            entry["gamma_median"] = float(np.median(gaps)) if gaps.size else None
        summary.append(entry)
    return summary


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, list):
        return ";".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit(report: EvalReport, summary: list[dict], out_dir: str | Path,
         config: ExperimentConfig | None = None) -> dict[str, Path]:
    """Write raw rows, the human-readable summary, and plot-ready files.

    Files: ``rows.csv`` (one row per seed/K/method), ``summary.json``
    (aggregates plus certificates), ``plot_long.csv`` (long-format
    metric/K/method aggregates), ``scatter.csv`` (per-run score vs RMSE).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    rows_path = out / "rows.csv"
    with rows_path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for r in report.rows:
            d = asdict(r)
            writer.writerow([_format_cell(d[c]) for c in CSV_COLUMNS])
    paths["rows"] = rows_path

    summary_path = out / "summary.json"
    certificates = [
        {
            "seed_index": r.seed_index, "k": r.k,
            "greedy_value": r.score, "upper_bound": r.upper_bound,
            "relative_gap": r.relative_gap, "fw_iterations": r.fw_iterations,
            "fw_gap": r.fw_gap, "rounded_value": r.rounded_value,
        }
        for r in report.ok_rows() if r.method == "greedy"
    ]
    payload = {"summary": summary, "certificates": certificates}
    if config is not None:
        payload["config"] = config.to_dict()
    summary_path.write_text(json.dumps(payload, indent=1))
    paths["summary"] = summary_path

    long_path = out / "plot_long.csv"
    with long_path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", "k", "method", "median", "mean", "std"])
        for entry in summary:
            for metric in ("score", "rmse"):
                if entry[f"{metric}_median"] is not None:
                    writer.writerow([
                        metric, entry["k"], entry["method"],
                        repr(entry[f"{metric}_median"]), repr(entry[f"{metric}_mean"]),
                        repr(entry[f"{metric}_std"]),
                    ])
            if entry.get("gamma_median") is not None:
                writer.writerow(["gamma", entry["k"], entry["method"],
                                 repr(entry["gamma_median"]), "", ""])
    paths["plot_long"] = long_path

    scatter_path = out / "scatter.csv"
    with scatter_path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["seed_index", "k", "method", "score", "rmse"])
        for r in report.ok_rows():
            writer.writerow([r.seed_index, r.k, r.method,
                             _format_cell(r.score), _format_cell(r.rmse)])
    paths["scatter"] = scatter_path
    return paths


def _parse_cell(column: str, text: str):
    if text == "":
        return [] if column == "selected" else None
    if column == "selected":
        return [int(v) for v in text.split(";")]
    if column in ("seed_index", "scenario_seed", "k", "fw_iterations"):
        return int(text)
    if column in ("scenario_hash", "method", "status", "reason"):
        return text
    return float(text)


def parse_rows(path: str | Path) -> EvalReport:
    """Inverse of the rows.csv emission."""
    rows = []
    with Path(path).open(newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != CSV_COLUMNS:
            raise ValueError(f"unexpected columns in {path}: {reader.fieldnames}")
        for record in reader:
            kwargs = {c: _parse_cell(c, record[c]) for c in CSV_COLUMNS}
            kwargs["scenario_hash"] = kwargs["scenario_hash"] or ""
            kwargs["reason"] = kwargs["reason"] or ""
            kwargs["status"] = kwargs["status"] or "ok"
            rows.append(RunRow(**kwargs))
    return EvalReport(rows)
