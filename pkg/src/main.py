"""
Command-line entry point for the RIS-aided ZF uplink simulator
"""

import argparse
import sys
from typing import List, Optional

from src.experiments import (DEFAULT_SWEEPS, ExperimentError, ExperimentName, ExperimentSpec,
                             parse_methods, run_experiment, write_plot_script)
from src.logging_config import configure_logging, logger
from src.scenario import ConfigError, ScenarioConfig, load_config
from src.selfcheck import DEFAULT_SEED, run_selfcheck

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2

SUBCOMMANDS = {
    "fig2": ExperimentName.FIG2,
    "fig3": ExperimentName.FIG3,
    "fig4": ExperimentName.FIG4,
    "sweep": ExperimentName.CUSTOM,
}


def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"Expected comma-separated numbers, got {text!r}") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ris-zf-sim",
        description="RIS-aided massive MIMO uplink with ZF detection - rate sweeps and self-checks",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Rate versus RIS size with the default scenario
  ris-zf-sim fig2 --out results/fig2.csv

  # Power scaling p = 10/M W, fewer trials for a quick look
  ris-zf-sim fig3 --trials 2000 --out results/fig3.csv --plot-script results/plot_fig3.py

  # Rician-factor sweep at two RIS-BS distances
  ris-zf-sim fig4 --distances 700,300 --restarts 5 --out results/fig4.csv

  # Any scenario field
  ris-zf-sim sweep --param d_ui_m --values 10,20,40 --out results/dui.csv

  # Numerical self-checks (exit 1 on failure)
  ris-zf-sim selfcheck

Environment:
  RIS_ZF_WORKERS   joblib worker count for sweep points (default 1, -1 = all cores)
        """
    )
    parser.add_argument('--log-level', default='INFO',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        help='Logging verbosity (default: INFO)')
    parser.add_argument('--log-file',
                        help='Write the log file here instead of logs/ris_zf.log')
    subparsers = parser.add_subparsers(dest='command', required=True)

    for name, experiment in SUBCOMMANDS.items():
        sub = subparsers.add_parser(name, help=f"Run the {experiment.value} experiment")
        sub.add_argument('--config',
                         help='Scenario YAML file (default: config.yaml if present)')
        sub.add_argument('--seed', type=int, help='Scenario seed (overrides config)')
        sub.add_argument('--trials', type=int,
                         help='Monte Carlo trials per point (overrides config)')
        sub.add_argument('--out', help='CSV output path')
        sub.add_argument('--restarts', type=int, default=1,
                         help='Phase-optimizer random starts per point (default: 1)')
        sub.add_argument('--methods',
                         help='Comma-separated methods, e.g. eq20,mc-zf,optimized-phase')
        sub.add_argument('--values', type=_float_list, required=(name == "sweep"),
                         help='Comma-separated sweep values')
        sub.add_argument('--plot-script', help='Also write a matplotlib script for the CSV')
        sub.add_argument('--trace-dir', help='Write optimizer convergence traces here')
        if name == "sweep":
            sub.add_argument('--param', required=True, help='ScenarioConfig field to sweep')
        if name == "fig3":
            sub.add_argument('--power-constant', type=float, default=10.0,
                             help='c in p = c/M^e watts (default: 10)')
            sub.add_argument('--power-exponent', type=float, default=1.0,
                             help='e in p = c/M^e (default: 1)')
        if name == "fig4":
            sub.add_argument('--distances', type=_float_list, default=[700.0, 300.0],
                             help='RIS-BS distances in meters (default: 700,300)')

    check = subparsers.add_parser('selfcheck', help='Run the numerical property suites')
    check.add_argument('--seed', type=int, default=DEFAULT_SEED,
                       help=f'Seed for all checks (default: {DEFAULT_SEED})')
    check.add_argument('--corrupt-gradient', action='store_true',
                       help='Flip the gradient sign (negative control; must fail)')
    return parser


def build_spec(args: argparse.Namespace) -> ExperimentSpec:
    experiment = SUBCOMMANDS[args.command]
    overrides = load_config(args.config)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["mc_trials"] = args.trials
    scenario = ScenarioConfig.from_dict(overrides)

    values = args.values if args.values is not None else DEFAULT_SWEEPS[experiment]
    extra = {}
    if args.command == "fig3":
        extra.update(power_constant=args.power_constant, power_exponent=args.power_exponent)
    if args.command == "fig4":
        extra["distances"] = tuple(args.distances)
    return ExperimentSpec(
        name=experiment,
        sweep_values=values,
        methods=parse_methods(args.methods) or frozenset(),
        scenario=scenario,
        output_path=args.out,
        sweep_param=getattr(args, "param", None),
        restarts=args.restarts,
        trace_dir=args.trace_dir,
        **extra,
    )


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level, log_file=args.log_file,
                      console_to_stderr=getattr(args, "out", "") is None)

    if args.command == "selfcheck":
        logger.info("=" * 70)
        logger.info(f"Self-check (seed {args.seed})")
        logger.info("=" * 70)
        report = run_selfcheck(seed=args.seed, corrupt_gradient=args.corrupt_gradient)
        print(report.summary())
        return EXIT_OK if report.passed else EXIT_CHECK_FAILED

    try:
        spec = build_spec(args)
        result = run_experiment(spec)
    except (ConfigError, ExperimentError) as e:
        logger.error(f"❌ {e}")
        return EXIT_CONFIG_ERROR

    if spec.output_path is None:
        print(result.to_csv_text(), end="")
    if args.plot_script:
        if spec.output_path is None:
            logger.warning("--plot-script needs --out; no script written")
        else:
            write_plot_script(spec.output_path, args.plot_script)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
