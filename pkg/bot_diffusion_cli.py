#!/usr/bin/env python3
"""
Command-line entry point: single runs, named sweeps, analysis of run tables
and network diagnostics.

    bot_diffusion_cli.py run --config simulation_config.json --seed 7 --timeseries
    bot_diffusion_cli.py sweep --experiment 1 --replications 15 --jobs 8
    bot_diffusion_cli.py analyze anova --input output/runs.csv --outcome majority
    bot_diffusion_cli.py analyze power --eta2 0.85 --groups 3
    bot_diffusion_cli.py graph-stats --seed 3
"""

import argparse
import json
import logging
import math
import os
import sys
from logging.handlers import RotatingFileHandler

import numpy as np
import pandas as pd

from diffusion_engine import agent_counts, run_simulation, write_time_series_csv
from response_surface import fit_quadratic_surface, surface_extrema_on_box, surface_grid, surface_stationary_point
from run_records import OUTCOME_COLUMNS, write_records_csv, write_summary_csv
from simulation_errors import ParameterError, SimulationError
from simulation_settings import apply_overrides, load_config
from small_world_network import generate_small_world, graph_statistics, read_edge_list
from stats_distributions import PowerSpec, anova_power_required_n, power_curve
from stats_models import (
    BOT_TYPE_TERM,
    anova_rows_from_runs,
    anova_two_way,
    cohens_f,
    compare_means_bootstrap,
    eta_squared,
    fit_runs,
    format_anova_table,
    format_linear_fit,
)
from sweep_experiments import (
    ExperimentId,
    build_experiment,
    check_system_resources,
    defender_dnc_threshold,
    run_sweep,
    summarize,
    write_sweep_config,
)

LOG_DIR = './logs/'
LOG_FILE = os.path.join(LOG_DIR, 'bot_diffusion_log.txt')

# single-defender sweeps and the ratio they vary
DEFENDER_COLUMNS = {ExperimentId.E2: "alpha2", ExperimentId.E3: "alpha3"}


def setup_logging(quiet=False, verbose=False):
    if not os.path.exists(LOG_DIR):
        os.makedirs(LOG_DIR)
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    log_handler = RotatingFileHandler(LOG_FILE, maxBytes=10000000, backupCount=5)
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            log_handler,
            logging.StreamHandler(sys.stdout)
        ],
        force=True,
    )


def rounded(value):
    """JSON-ready copy of ``value`` with floats at 6 significant digits and non-finite floats as null."""
    if isinstance(value, dict):
        return {str(k): rounded(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [rounded(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        return float(f"{value:.6g}")
    return value


def write_json(data, path):
    with open(path, 'w') as f:
        json.dump(rounded(data), f, indent=2, sort_keys=True)
        f.write("\n")
    logging.info(f"Wrote {path}")


def _output_dir(config):
    os.makedirs(config.output_dir, exist_ok=True)
    return config.output_dir


def _read_runs(path, required):
    try:
        frame = pd.read_csv(path)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise ParameterError(f"cannot parse {path}: {e}") from None
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise ParameterError(f"{path} is missing required columns: {', '.join(missing)}", field=missing[0])
    return frame


def cmd_run(args, config):
    params = config.simulation
    out = _output_dir(config)
    logging.info(f"Running one simulation with seed {params.seed}")
    outcome, history = run_simulation(params)
    write_json({"params": params.to_dict(), "outcome": outcome.to_dict()}, os.path.join(out, "outcome.json"))
    if args.timeseries:
        path = os.path.join(out, "timeseries.csv")
        write_time_series_csv(history, path)
        logging.info(f"Wrote {path}")
    print(f"bad_majority_tick={outcome.bad_majority_tick} all_bad_tick={outcome.all_bad_tick}")
    return 0


def cmd_sweep(args, config):
    spec = build_experiment(
        config.experiment,
        base=config.simulation,
        replications=config.replications,
        base_seed=config.base_seed,
    )
    out = _output_dir(config)
    check_system_resources(out, config.jobs)
    for note in spec.notes:
        logging.warning(note)
    records = run_sweep(spec, jobs=config.jobs)
    write_records_csv(records, os.path.join(out, "runs.csv"))
    summaries = summarize(records)
    write_summary_csv(summaries, os.path.join(out, "summary.csv"))
    write_sweep_config(spec, os.path.join(out, "sweep_config.json"))
    print(f"experiment={spec.experiment_id.value} conditions={len(spec.conditions)} runs={spec.total_runs}")
    defender = DEFENDER_COLUMNS.get(spec.experiment_id)
    if defender is not None:
        threshold = defender_dnc_threshold(summaries, column=defender)
        print(f"majority_dnc_threshold {defender}={threshold if threshold is not None else 'none'}")
    return 0


def _analyze_anova(args, out):
    column = OUTCOME_COLUMNS[args.outcome]
    frame = _read_runs(args.input, ["alpha1", "alpha2", "alpha3", column])
    table = anova_two_way(anova_rows_from_runs(frame, column))
    effects = {}
    for row in table.terms:
        eta2 = eta_squared(table, row.name)
        effects[row.name] = {"eta_squared": eta2, "cohens_f": cohens_f(eta2) if eta2 < 1 else None}
    print(format_anova_table(table, title=f"Two-way ANOVA: {column}"))
    eta2 = effects[BOT_TYPE_TERM]["eta_squared"]
    print(f"{BOT_TYPE_TERM}: eta^2 = {eta2:.6g}")
    write_json({**table.to_dict(), "outcome": column, "effect_sizes": effects},
               os.path.join(out, f"anova_{args.outcome}.json"))


def _analyze_ols(args, out):
    column = OUTCOME_COLUMNS[args.outcome]
    frame = _read_runs(args.input, ["alpha1", "alpha2", "alpha3", column])
    fit = fit_runs(frame, column, model=args.model)
    print(format_linear_fit(fit, title=f"OLS ({args.model}): {column}"))
    write_json({**fit.to_dict(), "outcome": column, "model": args.model},
               os.path.join(out, f"ols_{args.outcome}.json"))


def _analyze_surface(args, out):
    column = OUTCOME_COLUMNS[args.outcome]
    frame = _read_runs(args.input, ["alpha1", args.defender, column])
    frame = frame.assign(**{column: pd.to_numeric(frame[column], errors="coerce")}).dropna(subset=[column])
    if not args.raw:
        frame = frame.groupby(["alpha1", args.defender], as_index=False)[column].mean()
    surface = fit_quadratic_surface(frame[["alpha1", args.defender, column]].to_numpy(dtype=float))
    box = ((args.box[0], args.box[1]), (args.box[2], args.box[3]))
    point = surface_stationary_point(surface)
    extrema = surface_extrema_on_box(surface, box)

    names = ("beta0", "beta1", "beta2", "beta3", "beta4", "beta5")
    print(f"T(b, d) fitted to {len(frame)} points of {column} (d = {args.defender})")
    print("  " + "  ".join(f"{n}={v:.10g}" for n, v in zip(names, surface.coefficients)))
    print(f"  stationary point: {point.classification} at b={point.b} d={point.d} T={point.value}")
    print(f"  box min {extrema.min:.6g} at {extrema.argmin}; box max {extrema.max:.6g} at {extrema.argmax}")

    surface_grid(surface, box, steps=args.grid_steps).to_csv(os.path.join(out, "surface_grid.csv"), index=False)
    write_json({
        "outcome": column,
        "defender": args.defender,
        "coefficients": surface.to_dict(),
        "stationary_point": point.to_dict(),
        "box": [list(box[0]), list(box[1])],
        "box_extrema": extrema.to_dict(),
    }, os.path.join(out, f"surface_{args.outcome}.json"))


def _analyze_power(args, out):
    f = cohens_f(args.eta2) if args.eta2 is not None else args.f
    solution = anova_power_required_n(PowerSpec(effect_size=f, groups=args.groups, alpha=args.alpha, power=args.power))
    print(f"f = {f:.6g}  groups = {args.groups}  alpha = {args.alpha:g}  power = {args.power:g}")
    print(f"required runs per condition: {solution.n_continuous:.6g} (continuous), {solution.n_per_group} (ceiled)")
    write_json({**solution.to_dict(), "eta_squared": args.eta2}, os.path.join(out, "power.json"))
    ns = range(2, max(10, solution.n_per_group) + 1)
    curve_path = os.path.join(out, "power_curve.csv")
    power_curve(f, args.groups, alpha=args.alpha, ns=ns).to_csv(curve_path, index=False)
    logging.info(f"Wrote {curve_path}")


def _analyze_compare(args, out):
    column = OUTCOME_COLUMNS[args.outcome]
    samples = []
    for path in (args.baseline, args.input):
        ticks = pd.to_numeric(_read_runs(path, [column])[column], errors="coerce").dropna()
        samples.append(ticks.to_numpy(dtype=float))
    comparison = compare_means_bootstrap(samples[0], samples[1], confidence=args.confidence, seed=args.bootstrap_seed)
    print(
        f"{column}: mean {comparison.mean_a:.6g} (baseline) vs {comparison.mean_b:.6g}; "
        f"difference {comparison.difference:.6g}, {args.confidence:g} CI "
        f"[{comparison.ci_low:.6g}, {comparison.ci_high:.6g}]"
    )
    write_json({**comparison.to_dict(), "outcome": column, "baseline": args.baseline, "input": args.input},
               os.path.join(out, f"compare_{args.outcome}.json"))


ANALYSES = {
    "anova": _analyze_anova,
    "ols": _analyze_ols,
    "surface": _analyze_surface,
    "power": _analyze_power,
    "compare": _analyze_compare,
}


def cmd_analyze(args, config):
    ANALYSES[args.analysis](args, _output_dir(config))
    return 0


def cmd_graph_stats(args, config):
    params = config.simulation
    if args.edge_list:
        network = read_edge_list(args.edge_list)
    else:
        # same draws init_simulation makes first, so this is the run's network
        rng = np.random.default_rng(params.seed)
        network = generate_small_world(params.network_spec(agent_counts(params).total), rng)
    stats = graph_statistics(network)
    write_json(stats, os.path.join(_output_dir(config), "graph_stats.json"))
    print(
        f"nodes={stats['nodes']} edges={stats['edges']} clustering={stats['clustering_coefficient']:.6g} "
        f"mean_path_length={stats['mean_path_length']:.6g}"
    )
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file (the shipped simulation_config.json when omitted)")
    common.add_argument("--seed", type=int, help="Seed for a single run or network")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--jobs", type=int, help="Worker processes for sweeps")
    common.add_argument("--quiet", action="store_true", help="Only log warnings and errors")
    common.add_argument("--verbose", action="store_true", help="Log debug detail")

    parser = argparse.ArgumentParser(description="Bot-driven conspiracy diffusion simulator")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", parents=[common], help="Run one simulation")
    run.add_argument("--timeseries", action="store_true", help="Also write timeseries.csv")
    run.set_defaults(handler=cmd_run)

    sweep = commands.add_parser("sweep", parents=[common], help="Run a named sweep design")
    sweep.add_argument("--experiment", help="1-5, E1-E5 or threshold")
    sweep.add_argument("--replications", type=int, help="Replicates per condition")
    sweep.add_argument("--base-seed", type=int, help="Base seed the per-run seeds derive from")
    sweep.set_defaults(handler=cmd_sweep)

    analyze = commands.add_parser("analyze", help="Analyse run tables")
    analyses = analyze.add_subparsers(dest="analysis", required=True)

    def runs_input(sub):
        sub.add_argument("--input", required=True, help="runs.csv produced by a sweep")
        sub.add_argument("--outcome", choices=sorted(OUTCOME_COLUMNS), default="majority")

    anova = analyses.add_parser("anova", parents=[common], help="Two-way ANOVA of bot type and proportion")
    runs_input(anova)
    ols = analyses.add_parser("ols", parents=[common], help="OLS of an outcome on the bot ratios")
    runs_input(ols)
    ols.add_argument("--model", choices=["interaction", "proportions"], default="interaction")
    surface = analyses.add_parser("surface", parents=[common], help="Quadratic defender-efficiency surface")
    runs_input(surface)
    surface.add_argument("--defender", choices=["alpha2", "alpha3"], default="alpha2")
    surface.add_argument("--box", type=float, nargs=4, default=[0.1, 1.0, 0.1, 1.0],
                         metavar=("B_LO", "B_HI", "D_LO", "D_HI"))
    surface.add_argument("--grid-steps", type=int, default=21)
    surface.add_argument("--raw", action="store_true", help="Fit individual runs instead of condition means")
    power = analyses.add_parser("power", parents=[common], help="Runs per condition for a target power")
    effect = power.add_mutually_exclusive_group(required=True)
    effect.add_argument("--eta2", type=float, help="Effect size as eta squared")
    effect.add_argument("--f", type=float, help="Effect size as Cohen's f")
    power.add_argument(
        "--groups", type=int, required=True,
        help="Number of groups compared; 3 (one per bot type) reproduces the reported runs per condition",
    )
    power.add_argument("--alpha", type=float, default=0.05)
    power.add_argument("--power", type=float, default=0.8)
    compare = analyses.add_parser("compare", parents=[common], help="Bootstrap CI of a difference in mean outcome")
    runs_input(compare)
    compare.add_argument("--baseline", required=True, help="runs.csv of the baseline sweep")
    compare.add_argument("--confidence", type=float, default=0.99)
    compare.add_argument("--bootstrap-seed", type=int, default=0)
    for sub in (anova, ols, surface, power, compare):
        sub.set_defaults(handler=cmd_analyze)

    graph = commands.add_parser("graph-stats", parents=[common], help="Small-world diagnostics of the agent network")
    graph.add_argument("--edge-list", help="Read 'i j' edges from a file instead of generating a network")
    graph.set_defaults(handler=cmd_graph_stats)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    setup_logging(quiet=args.quiet, verbose=args.verbose)
    try:
        config = load_config(args.config)
        config = apply_overrides(
            config,
            seed=args.seed,
            jobs=args.jobs,
            output_dir=args.out,
            experiment=getattr(args, "experiment", None),
            replications=getattr(args, "replications", None),
            base_seed=getattr(args, "base_seed", None),
        )
        return args.handler(args, config)
    except (SimulationError, OSError) as e:
        logging.error(f"{args.command} failed: {e}")
        logging.debug("Exception details:", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
