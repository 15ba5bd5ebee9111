#!/usr/bin/env python3
"""
Experiment harness
Runs variant x seed grids, writes one row-per-call CSV and a JSON header per
run, and aggregates result directories into quartile tables and runtime series
"""

import asyncio
import csv
import io
import json
import logging
import platform
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Tuple

import aiofiles
import numpy as np
import pydantic
import scipy
from scipy.stats import spearmanr

from aloq_loop import initial_design_size, run_variant
from aloq_schema import (
    AcquisitionConfig, ExperimentSpec, HyperChainSettings, ResultRow, RunConfig, Trace, Variant,
)
from config import Config
from errors import ConfigError
from task_registry import build_task, get_task_preset
from tasks import Task, sre_probability, torque_map_policy

logger = logging.getLogger(__name__)

COST_RANGES: Tuple[Tuple[float, float], ...] = ((0.0, 20.0), (20.0, 70.0), (70.0, np.inf))


def run_stem(variant: Variant, seed: int) -> str:
    return f"{variant.value}_seed{seed}"


def run_paths(output_dir: Path, task: str, variant: Variant, seed: int) -> Dict[str, Path]:
    base = Path(output_dir) / task
    stem = run_stem(variant, seed)
    return {
        "rows": base / f"{stem}.csv",
        "header": base / f"{stem}.json",
        "runtime": base / f"{stem}.runtime.csv",
    }


def build_run_config(spec: ExperimentSpec, variant: Variant, seed: int, task: Task) -> RunConfig:
    """Fill every unset override from the task defaults and the environment"""
    kappa = spec.kappa if spec.kappa is not None else task.default_kappa
    try:
        return RunConfig(
            task=spec.task,
            budget=spec.budget,
            initial_design=spec.initial_design or initial_design_size(task),
            seed=seed,
            variant=variant,
            acquisition=AcquisitionConfig(
                kappa=kappa,
                direct_budget=spec.direct_budget or Config.DIRECT_BUDGET,
                direct_tol=Config.DIRECT_TOL,
            ),
            hyper_chain=HyperChainSettings(
                n_samples=spec.hyper_samples or Config.HYPER_SAMPLES,
                burn_in=spec.hyper_burn_in if spec.hyper_burn_in is not None else Config.HYPER_BURN_IN,
                thinning=spec.hyper_thinning if spec.hyper_thinning is not None else Config.HYPER_THINNING,
            ),
            mc_size=spec.mc_size or Config.MC_SIZE,
        )
    except pydantic.ValidationError as e:
        raise ConfigError(f"invalid run configuration for {variant.value} seed {seed}: {e}") from e


def rows_from_trace(trace: Trace) -> List[ResultRow]:
    """One row per simulator call carrying the incumbent in force after that call.

    Initial-design calls made before the first model fit have no incumbent; their
    rows leave the incumbent and fbar_oracle cells empty.
    """
    rows = []
    for record in trace.calls:
        incumbent = trace.incumbent_at(record.call)
        rows.append(ResultRow(
            task=trace.task,
            variant=trace.variant,
            seed=trace.seed,
            call=record.call,
            incumbent=incumbent.policy if incumbent else None,
            fbar_oracle=incumbent.oracle_fbar if incumbent else None,
        ))
    return rows


def rows_csv(rows: List[ResultRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    dim = next((len(r.incumbent) for r in rows if r.incumbent is not None), 0)
    writer.writerow(["task", "variant", "seed", "call"] + [f"incumbent_{i}" for i in range(dim)] + ["fbar_oracle"])
    for r in rows:
        if r.incumbent is None:
            writer.writerow([r.task, r.variant.value, r.seed, r.call] + [""] * (dim + 1))
            continue
        writer.writerow([r.task, r.variant.value, r.seed, r.call] + [repr(float(v)) for v in r.incumbent]
                        + [repr(float(r.fbar_oracle))])
    return buf.getvalue()


def runtime_csv(trace: Trace) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["task", "variant", "seed", "call", "phase", "wall_ms"])
    for c in trace.calls:
        writer.writerow([trace.task, trace.variant.value, trace.seed, c.call, c.phase, f"{c.wall_ms:.3f}"])
    return buf.getvalue()


def run_header(config: RunConfig, task: Task, trace: Trace) -> Dict[str, Any]:
    return {
        "task": config.task,
        "variant": config.variant.value,
        "seed": config.seed,
        "task_seed": config.seed,
        "run_config": config.model_dump(mode="json"),
        "task_constants": task.constants,
        "sense": "maximize" if task.sense > 0 else "minimize",
        "final_policy": trace.final_policy,
        "final_oracle_fbar": trace.final_oracle_fbar,
        "final_sre_probability": sre_probability(trace.final_policy, task),
        "final_hyper_samples": [s.model_dump(mode="json") for s in trace.final_hyper_samples],
        "warnings": trace.warnings,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pydantic": pydantic.VERSION,
        },
    }


def execute_run(spec_json: str, variant: str, seed: int) -> Dict[str, Any]:
    """Run one (variant, seed) cell; module-level so worker processes can import it"""
    spec = ExperimentSpec.model_validate_json(spec_json)
    mc_size = spec.mc_size or Config.MC_SIZE
    task = build_task(spec.task, seed=seed, mc_size=mc_size)
    config = build_run_config(spec, Variant(variant), seed, task)
    trace = run_variant(config, task)
    return {
        "rows": rows_csv(rows_from_trace(trace)),
        "runtime": runtime_csv(trace),
        "header": json.dumps(run_header(config, task, trace), indent=2, default=float),
    }


async def _write_text(path: Path, text: str) -> None:
    async with aiofiles.open(path, "w") as f:
        await f.write(text)


async def _save_run(paths: Dict[str, Path], result: Dict[str, str]) -> None:
    await asyncio.gather(*(_write_text(paths[key], result[key]) for key in ("rows", "runtime", "header")))


async def run_experiment_async(spec: ExperimentSpec) -> List[Path]:
    """
    Execute the variant x seed grid of an experiment.

    Args:
        spec: Task, variants, seeds, budget, overrides and output directory

    Returns:
        Paths of the row CSVs, one per (variant, seed), in grid order
    """
    preset = get_task_preset(spec.task)
    if preset is None:
        raise ConfigError(f"unknown task '{spec.task}'")
    spec = spec.model_copy(update={"task": preset["name"]})
    out = Config.ensure_output_dir(spec.output_dir)
    (out / spec.task).mkdir(parents=True, exist_ok=True)

    print("🚀 Starting experiment")
    print("=" * 60)
    print(f"🎯 Task: {spec.task}")
    print(f"🧪 Variants: {', '.join(v.value for v in spec.variants)}")
    print(f"🌱 Seeds: {', '.join(str(s) for s in spec.seeds)}")
    print(f"📁 Output Directory: {out}")
    print("=" * 60)

    grid = [(v, s) for v in spec.variants for s in spec.seeds]
    pending = []
    for variant, seed in grid:
        paths = run_paths(out, spec.task, variant, seed)
        if not spec.force and paths["rows"].exists() and paths["header"].exists():
            print(f"⏭️  {variant.value} seed {seed}: results exist, skipping")
            continue
        pending.append((variant, seed, paths))

    spec_json = spec.model_dump_json()
    loop = asyncio.get_running_loop()

    async def one(variant: Variant, seed: int, paths: Dict[str, Path], pool) -> None:
        if pool is None:
            result = await asyncio.to_thread(execute_run, spec_json, variant.value, seed)
        else:
            result = await loop.run_in_executor(pool, execute_run, spec_json, variant.value, seed)
        await _save_run(paths, result)
        print(f"✅ {variant.value} seed {seed}: {paths['rows']}")

    if spec.jobs == 1:
        for variant, seed, paths in pending:
            await one(variant, seed, paths, None)
    else:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            await asyncio.gather(*(one(v, s, p, pool) for v, s, p in pending))

    print("\n🎉 Experiment complete")
    return [run_paths(out, spec.task, v, s)["rows"] for v, s in grid]


def run_experiment(spec: ExperimentSpec) -> List[Path]:
    return asyncio.run(run_experiment_async(spec))


def _row_files(result_dir: Path) -> List[Path]:
    return sorted(p for p in Path(result_dir).glob("**/*_seed*.csv") if not p.name.endswith(".runtime.csv"))


def _read_csv(path: Path) -> List[Dict[str, str]]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _quartiles(values: List[float]) -> Dict[str, float]:
    q1, median, q3 = np.percentile(values, [25, 50, 75])
    return {"q1": float(q1), "median": float(median), "q3": float(q3), "n_seeds": len(values)}


def _missing_runs(result_dir: Path, runs: Dict[Tuple[str, str], Dict[int, List[Dict[str, str]]]]) -> List[str]:
    missing = []
    for header in sorted(Path(result_dir).glob("**/*_seed*.json")):
        if not header.with_suffix(".csv").exists():
            missing.append(f"{header.with_suffix('.csv')} (header without rows)")
    by_task: Dict[str, set] = {}
    for (task, _), seeds in runs.items():
        by_task.setdefault(task, set()).update(seeds)
    for (task, variant), seeds in sorted(runs.items()):
        for seed in sorted(by_task[task] - set(seeds)):
            missing.append(f"{task}/{variant} seed {seed}")
        lengths = {len(rows) for rows in seeds.values()}
        if len(lengths) > 1:
            missing.append(f"{task}/{variant}: runs of unequal length {sorted(lengths)}")
    return missing


def aggregate(result_dir) -> Dict[str, Any]:
    """
    Median and quartiles of the oracle fbar of the incumbent, per (task, variant, call).

    Returns:
        {"curves": [...], "final": [...], "missing": [...]}; "final" holds the
        quartiles at each run's last call
    """
    runs: Dict[Tuple[str, str], Dict[int, List[Dict[str, str]]]] = {}
    for path in _row_files(result_dir):
        rows = _read_csv(path)
        if not rows:
            continue
        key = (rows[0]["task"], rows[0]["variant"])
        runs.setdefault(key, {})[int(rows[0]["seed"])] = rows

    missing = _missing_runs(Path(result_dir), runs)
    for item in missing:
        logger.warning("missing or incomplete run: %s", item)

    curves, final = [], []
    for (task, variant), seeds in sorted(runs.items()):
        by_call: Dict[int, List[float]] = {}
        for rows in seeds.values():
            for r in rows:
                if r["fbar_oracle"]:
                    by_call.setdefault(int(r["call"]), []).append(float(r["fbar_oracle"]))
        for call in sorted(by_call):
            curves.append({"task": task, "variant": variant, "call": call, **_quartiles(by_call[call])})
        finals = [float(rows[-1]["fbar_oracle"]) for rows in seeds.values()]
        final.append({"task": task, "variant": variant, **_quartiles(finals)})

    return {"curves": curves, "final": final, "missing": missing}


def format_quartile_table(final: List[Dict[str, Any]]) -> str:
    """Q1 & median & Q3 per (task, variant)"""
    lines = [f"{'task':<16}{'variant':<12}{'Q1':>12}{'median':>12}{'Q3':>12}{'seeds':>8}"]
    for row in final:
        lines.append(f"{row['task']:<16}{row['variant']:<12}{row['q1']:>12.4f}{row['median']:>12.4f}"
                     f"{row['q3']:>12.4f}{row['n_seeds']:>8}")
    return "\n".join(lines)


def write_summary(result_dir, summary: Dict[str, Any]) -> Dict[str, Path]:
    """Plot-ready curves and the final quartile table next to the run files"""
    result_dir = Path(result_dir)
    paths = {"curves": result_dir / "summary_curves.csv", "final": result_dir / "summary_final.csv"}
    for key, path in paths.items():
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=["task", "variant"] + (["call"] if key == "curves" else [])
                                    + ["q1", "median", "q3", "n_seeds"], lineterminator="\n")
            writer.writeheader()
            writer.writerows(summary[key])
    return paths


def _step_times(rows: List[Dict[str, str]]) -> List[float]:
    """Wall time per optimisation step: an explore call plus the intensify call that follows it"""
    steps: List[float] = []
    for r in rows:
        if r["phase"] == "explore" or (r["phase"] == "intensify" and not steps):
            steps.append(float(r["wall_ms"]))
        elif r["phase"] == "intensify":
            steps[-1] += float(r["wall_ms"])
    return steps


def runtime_report(result_dir) -> Dict[str, Any]:
    """
    Median wall-ms per optimisation step for every (task, variant), with the
    Spearman rank correlation between step index and median time (None for a
    flat series). Initial-design calls are not steps.
    """
    series: Dict[Tuple[str, str], Dict[int, List[float]]] = {}
    for path in sorted(Path(result_dir).glob("**/*.runtime.csv")):
        rows = _read_csv(path)
        if not rows:
            continue
        by_step = series.setdefault((rows[0]["task"], rows[0]["variant"]), {})
        for step, ms in enumerate(_step_times(rows), start=1):
            by_step.setdefault(step, []).append(ms)

    report = []
    for (task, variant), by_step in sorted(series.items()):
        if not by_step:
            continue
        steps = sorted(by_step)
        medians = [float(np.median(by_step[s])) for s in steps]
        rho = None
        if len(steps) > 1 and np.ptp(medians) > 0:
            rho = float(spearmanr(steps, medians).correlation)
        report.append({"task": task, "variant": variant, "steps": steps, "median_wall_ms": medians,
                       "rank_correlation": rho})
    return {"series": report}


def _policy_stats(task: Task, pi, thetas: np.ndarray) -> Dict[str, Any]:
    costs = np.array([task.evaluate(np.asarray(pi, dtype=float), t) for t in thetas])
    sre = np.array([task.sre_indicator(np.asarray(pi, dtype=float), t) for t in thetas])
    shares = {f"{lo:g}-{hi:g}" if np.isfinite(hi) else f">={lo:g}": float(np.mean((costs >= lo) & (costs < hi)))
              for lo, hi in COST_RANGES}
    return {"policy": list(map(float, pi)), "mean_cost": float(costs.mean()), "sre_rate": float(sre.mean()),
            "cost_ranges": shares}


def compare_policies(result_dir, seed: int = 0, draws: int = 1000, map_budget: int = 500,
                     task_name: str = "arm_torque") -> Dict[str, Any]:
    """
    Torque task comparison: the learned policies against the MAP policy, over
    `draws` rigidities drawn from the 400-sample posterior.
    """
    result_dir = Path(result_dir)
    headers = {}
    for variant in (Variant.ALOQ, Variant.RQ_ALOQ):
        path = run_paths(result_dir, task_name, variant, seed)["header"]
        if path.exists():
            with open(path) as f:
                headers[variant.value] = json.load(f)
    if Variant.ALOQ.value not in headers:
        raise ConfigError(f"no {task_name} ALOQ run for seed {seed} under {result_dir}")

    header = headers[Variant.ALOQ.value]
    task = build_task(task_name, seed=header.get("task_seed", seed),
                      mc_size=header["run_config"].get("mc_size", Config.MC_SIZE))
    if task.eval_env is None:
        raise ConfigError(f"{task_name} has no evaluation posterior")
    thetas = task.eval_env.draw(np.random.default_rng(seed), draws)

    rows = {name: _policy_stats(task, h["final_policy"], thetas) for name, h in headers.items()}
    rows["MAP"] = _policy_stats(task, torque_map_policy(task, budget=map_budget), thetas)
    return {"task": task_name, "seed": seed, "draws": draws, "policies": rows}
