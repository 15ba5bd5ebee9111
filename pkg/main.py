#!/usr/bin/env python3
"""
ALOQ experiment CLI
Run variant x seed grids, aggregate result directories, report per-step runtime
and compare torque-task policies
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

import pydantic

from aloq_schema import ExperimentSpec, Variant
from config import Config
from errors import ALOQError, ConfigError, NumericalError
from harness import aggregate, compare_policies, format_quartile_table, run_experiment, runtime_report, write_summary
from task_registry import get_all_task_names

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INTERRUPTED = 130


def parse_seeds(text: str) -> List[int]:
    """'0-9', '1,4,7' or a mix such as '0-2,10'"""
    seeds = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if "-" in part:
                lo, hi = part.split("-", 1)
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(part))
    except ValueError:
        raise ConfigError(f"cannot parse seeds '{text}'")
    if not seeds:
        raise ConfigError("no seeds given")
    if min(seeds) < 0:
        raise ConfigError("seeds must be nonnegative")
    return seeds


def parse_variants(text: str) -> List[Variant]:
    names = [v.strip().upper() for v in text.split(",") if v.strip()]
    if names == ["ALL"]:
        return list(Variant)
    try:
        return [Variant(n) for n in names]
    except ValueError:
        raise ConfigError(f"unknown variant in '{text}'; choose from {', '.join(v.value for v in Variant)}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="ALOQ - policy search under significant rare events with BO and Bayesian quadrature",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Ten seeds of ALOQ and the naive baseline on F-SRE2
  python main.py run --task fsre2 --variant ALOQ,NAIVE --seeds 0-9 --budget 200

  # Quartile table of every run under the output directory
  python main.py aggregate --out outputs

  # Median wall time per simulator call
  python main.py runtime --out outputs

  # Torque task: learned policies against the MAP policy
  python main.py compare --out outputs --seed 0
        """
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run a variant x seed grid")
    run.add_argument("--task", required=True, choices=get_all_task_names(), help="Task to optimise")
    run.add_argument("--variant", default="ALOQ",
                     help=f"Comma-separated variants or 'all' ({', '.join(v.value for v in Variant)})")
    run.add_argument("--seeds", default="0", help="Seeds, e.g. '0-9' or '1,3,5' (default: 0)")
    run.add_argument("--budget", type=int, required=True, help="Simulator calls per run")
    run.add_argument("--kappa", type=float, help="Exploration weight (default: task preset)")
    run.add_argument("--initial-design", type=int, help="Initial design size (default: 4 x input dimension)")
    run.add_argument("--mc-size", type=int, help=f"Monte Carlo support size (default: {Config.MC_SIZE})")
    run.add_argument("--hyper-samples", type=int, help=f"Hyperparameter samples (default: {Config.HYPER_SAMPLES})")
    run.add_argument("--hyper-burn-in", type=int, help=f"Chain burn-in sweeps (default: {Config.HYPER_BURN_IN})")
    run.add_argument("--hyper-thinning", type=int, help=f"Sweeps between samples (default: {Config.HYPER_THINNING})")
    run.add_argument("--direct-budget", type=int, help=f"DIRECT evaluations (default: {Config.DIRECT_BUDGET})")
    run.add_argument("--out", default=Config.OUTPUT_DIR, help=f"Output directory (default: {Config.OUTPUT_DIR})")
    run.add_argument("--jobs", type=int, default=Config.JOBS, help="Parallel worker processes")
    run.add_argument("--force", action="store_true", help="Re-run cells whose results already exist")

    agg = sub.add_parser("aggregate", help="Median and quartiles across seeds")
    agg.add_argument("--out", default=Config.OUTPUT_DIR, help="Result directory")

    rt = sub.add_parser("runtime", help="Median wall time per simulator call")
    rt.add_argument("--out", default=Config.OUTPUT_DIR, help="Result directory")
    rt.add_argument("--json", action="store_true", help="Print the full series as JSON")

    cmp_ = sub.add_parser("compare", help="Torque task: learned policies against the MAP policy")
    cmp_.add_argument("--out", default=Config.OUTPUT_DIR, help="Result directory")
    cmp_.add_argument("--seed", type=int, default=0, help="Run seed to compare")
    cmp_.add_argument("--draws", type=int, default=1000, help="Rigidity draws from the evaluation posterior")
    return parser


def _cmd_run(args) -> None:
    try:
        spec = ExperimentSpec(
            task=args.task,
            variants=parse_variants(args.variant),
            seeds=parse_seeds(args.seeds),
            budget=args.budget,
            kappa=args.kappa,
            initial_design=args.initial_design,
            mc_size=args.mc_size,
            hyper_samples=args.hyper_samples,
            hyper_burn_in=args.hyper_burn_in,
            hyper_thinning=args.hyper_thinning,
            direct_budget=args.direct_budget,
            output_dir=args.out,
            jobs=args.jobs,
            force=args.force,
        )
    except pydantic.ValidationError as e:
        raise ConfigError(str(e)) from e
    paths = run_experiment(spec)
    print(f"📁 {len(paths)} run files under {args.out}/{spec.task}/")


def _cmd_aggregate(args) -> None:
    summary = aggregate(args.out)
    if not summary["final"]:
        raise ConfigError(f"no run files under {args.out}")
    paths = write_summary(args.out, summary)
    print("\n📊 FINAL QUARTILES:")
    print(format_quartile_table(summary["final"]))
    if summary["missing"]:
        print(f"\n⚠️  {len(summary['missing'])} missing or incomplete runs:")
        for item in summary["missing"]:
            print(f"   • {item}")
    print(f"\n💾 Curves: {paths['curves']}")
    print(f"💾 Final table: {paths['final']}")


def _cmd_runtime(args) -> None:
    report = runtime_report(args.out)
    if not report["series"]:
        raise ConfigError(f"no runtime files under {args.out}")
    if args.json:
        print(json.dumps(report, indent=2))
        return
    print("\n⏱️  PER-STEP RUNTIME:")
    for s in report["series"]:
        rho = "n/a" if s["rank_correlation"] is None else f"{s['rank_correlation']:.3f}"
        print(f"   • {s['task']}/{s['variant']}: {len(s['steps'])} steps, "
              f"first {s['median_wall_ms'][0]:.1f} ms, last {s['median_wall_ms'][-1]:.1f} ms, rank corr {rho}")


def _cmd_compare(args) -> None:
    result = compare_policies(args.out, seed=args.seed, draws=args.draws)
    print(f"\n🦾 {result['task']} seed {result['seed']} over {result['draws']} draws:")
    for name, stats in result["policies"].items():
        ranges = ", ".join(f"{k}: {v:.1%}" for k, v in stats["cost_ranges"].items())
        print(f"   • {name:<8} mean cost {stats['mean_cost']:.2f}, SRE rate {stats['sre_rate']:.1%} ({ranges})")


COMMANDS = {
    "run": _cmd_run,
    "aggregate": _cmd_aggregate,
    "runtime": _cmd_runtime,
    "compare": _cmd_compare,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI interface; returns the process exit code"""
    args = build_parser().parse_args(argv)

    try:
        Config.validate()
        logging.basicConfig(level=Config.LOG_LEVEL, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](args)
    except KeyboardInterrupt:
        print("\n⚠️  Interrupted by user")
        return EXIT_INTERRUPTED
    except ConfigError as e:
        print(f"\n❌ Configuration error: {e}")
        return EXIT_CONFIG
    except NumericalError as e:
        print(f"\n❌ Numerical failure: {e}")
        return EXIT_NUMERICAL
    except ALOQError as e:
        print(f"\n❌ Run failed: {e}")
        return EXIT_FAILURE

    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
