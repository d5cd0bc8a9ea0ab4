"""CLI commands entry point for iohlqg."""

import argparse
import sys
from typing import Any, Callable, Dict, List, Optional

from rich.console import Console

from iohlqg import __version__
from iohlqg.app_controller import run_baseline, run_bode, run_gradcheck, run_simulate, run_synth
from iohlqg.common_utils import load_config_file
from iohlqg.exceptions import RejectedInputError
from iohlqg.pgm import PgmConfig
from iohlqg.simulate import SimConfig

console = Console(stderr=True)

# Extra synth reports; CSV traces and JSON summaries are always written
REPORT_FORMATS = ["pdf", "xlsx"]

# Used when neither the flag nor the YAML config sets a value
DEFAULTS: Dict[str, Any] = {
    "plant": None,
    "L": 3,
    "alpha": 1e-3,
    "epsilon": 1e-8,
    "iters": 100_000,
    "seeds": 20,
    "seed": 0,
    "grad_tol": 1e-9,
    "record_every": 100,
    "order": None,
    "out": "iohlqg_out",
    "horizon": 100_000,
    "rollouts": 20,
    "burn_in": None,
    "format": [],
    "points": 200,
}


def welcome_banner() -> None:
    """Display the welcome banner with version."""
    console.print()
    console.print(
        "[bold bright_cyan]╔═══════════════════════════════════════════════╗[/]  "
        f"[dim italic]v{__version__}[/]"
    )
    console.print("[bold bright_cyan]║   iohlqg - LQG synthesis over IOH feedback    ║[/]")
    console.print("[bold bright_cyan]╚═══════════════════════════════════════════════╝[/]")
    console.print()


def resolve(
    args: argparse.Namespace,
    config: Dict[str, Any],
    key: str,
    cast: Optional[Callable[[Any], Any]] = None,
) -> Any:
    """CLI flag, else YAML config entry, else the built-in default."""
    value = getattr(args, key, None)
    if value is None:
        value = config.get(key)
    if value is None:
        return DEFAULTS[key]
    if cast is None:
        return value
    try:
        return cast(value)
    except (TypeError, ValueError) as e:
        raise RejectedInputError(f"invalid value for {key}: {value!r}") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iohlqg",
        description="iohlqg - dynamic LQG controllers by policy gradient over input-output-history gains",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  iohlqg baseline                                 # Riccati LQG controller of the benchmark plant
  iohlqg baseline --order 2                       # ... plus its balanced truncation to order 2
  iohlqg synth --L 2 --seeds 20 --out runs/L2     # Multi-seed PGM synthesis
  iohlqg synth --plant plant.json --format pdf xlsx
  iohlqg gradcheck --seed 3                       # Analytic vs. finite-difference gradient
  iohlqg bode --controller runs/L2/controller.json
  iohlqg simulate --check --horizon 20000         # Monte-Carlo cost of the LQG baseline
""",
    )
    parser.add_argument(
        "--version", "-v",
        action="version",
        version=f"iohlqg {__version__}",
    )

    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    def add_common_args(subparser: argparse.ArgumentParser) -> None:
        subparser.add_argument(
            "--plant",
            help="Problem JSON with A, B, C, Vw, Vv, Q, R (default: built-in benchmark)",
        )
        subparser.add_argument(
            "--config", "-c",
            help="Path to YAML config file",
        )
        subparser.add_argument(
            "--out", "-o",
            help="Output directory (default: iohlqg_out)",
        )
        subparser.add_argument(
            "--quiet", "-q",
            action="store_true",
            help="Suppress banner, progress and summary output",
        )

    def add_history_args(subparser: argparse.ArgumentParser) -> None:
        subparser.add_argument("--L", type=int, help="History length (default: 3)")
        subparser.add_argument("--epsilon", type=float, help="Relaxation weight (default: 1e-8)")
        subparser.add_argument("--seed", type=int, help="Root RNG seed (default: 0)")

    # Synth command
    synth_parser = subparsers.add_parser("synth", help="Run multi-seed PGM synthesis")
    add_common_args(synth_parser)
    add_history_args(synth_parser)
    synth_parser.add_argument("--alpha", type=float, help="Step size (default: 1e-3)")
    synth_parser.add_argument("--iters", type=int, help="Iteration cap per seed (default: 100000)")
    synth_parser.add_argument("--seeds", type=int, help="Number of random initial gains (default: 20)")
    synth_parser.add_argument(
        "--grad-tol", dest="grad_tol", type=float, help="Gradient-norm stop (default: 1e-9)"
    )
    synth_parser.add_argument(
        "--record-every", dest="record_every", type=int, help="Trace record spacing (default: 100)"
    )
    synth_parser.add_argument(
        "--format", "-f",
        nargs="+",
        choices=REPORT_FORMATS,
        help="Extra report format(s); CSV traces and JSON summaries are always written",
    )

    # Baseline command
    baseline_parser = subparsers.add_parser("baseline", help="Riccati LQG controller and its cost")
    add_common_args(baseline_parser)
    baseline_parser.add_argument("--order", type=int, help="Also reduce the controller to this order")

    # Gradcheck command
    gradcheck_parser = subparsers.add_parser("gradcheck", help="Check the analytic gradient")
    add_common_args(gradcheck_parser)
    add_history_args(gradcheck_parser)
    gradcheck_parser.add_argument("--gain", help="IOH gain JSON to check at (default: random stabilizing)")

    # Bode command
    bode_parser = subparsers.add_parser("bode", help="Bode data of a controller")
    add_common_args(bode_parser)
    bode_source = bode_parser.add_mutually_exclusive_group(required=True)
    bode_source.add_argument("--controller", help="Controller JSON (G, H, F)")
    bode_source.add_argument("--gain", help="IOH gain JSON, realized before evaluation")
    bode_parser.add_argument("--points", type=int, help="Grid size on [1e-3, pi] (default: 200)")

    # Simulate command
    simulate_parser = subparsers.add_parser("simulate", help="Monte-Carlo cost estimate")
    add_common_args(simulate_parser)
    simulate_parser.add_argument("--epsilon", type=float, help="History perturbation variance for --gain")
    simulate_parser.add_argument("--seed", type=int, help="Root RNG seed (default: 0)")
    sim_source = simulate_parser.add_mutually_exclusive_group()
    sim_source.add_argument("--controller", help="Controller JSON (default: LQG baseline)")
    sim_source.add_argument("--gain", help="IOH gain JSON, simulated on the history system")
    simulate_parser.add_argument("--horizon", type=int, help="Steps per rollout (default: 100000)")
    simulate_parser.add_argument("--rollouts", type=int, help="Independent rollouts (default: 20)")
    simulate_parser.add_argument(
        "--burn-in", dest="burn_in", type=int, help="Discarded steps (default: horizon/10)"
    )
    simulate_parser.add_argument(
        "--check",
        action="store_true",
        help="Exit 1 unless the estimate is within 3 standard errors of the analytic cost",
    )
    simulate_parser.add_argument("--dump", help="Write the first rollout's trajectory CSV under --out")

    return parser


def dispatch(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    """Run the selected command; raises RejectedInputError for invalid settings."""
    out = resolve(args, config, "out")
    quiet = args.quiet

    if args.command == "synth":
        pgm_config = PgmConfig(
            alpha=resolve(args, config, "alpha", float),
            epsilon=resolve(args, config, "epsilon", float),
            max_iters=resolve(args, config, "iters", int),
            grad_tol=resolve(args, config, "grad_tol", float),
            record_every=resolve(args, config, "record_every", int),
            seed=resolve(args, config, "seed", int),
        )
        formats = resolve(args, config, "format")
        if isinstance(formats, str):
            formats = [formats]
        unknown = sorted(set(formats) - set(REPORT_FORMATS))
        if unknown:
            raise RejectedInputError(f"unsupported report format(s): {', '.join(unknown)}")
        return run_synth(
            plant_path=resolve(args, config, "plant"),
            L=resolve(args, config, "L", int),
            config=pgm_config,
            n_seeds=resolve(args, config, "seeds", int),
            output_dir=out,
            formats=list(formats),
            quiet=quiet,
        )

    if args.command == "baseline":
        order = resolve(args, config, "order", int)
        return run_baseline(
            plant_path=resolve(args, config, "plant"),
            output_dir=out,
            order=order,
            quiet=quiet,
        )

    if args.command == "gradcheck":
        return run_gradcheck(
            plant_path=resolve(args, config, "plant"),
            L=resolve(args, config, "L", int),
            epsilon=resolve(args, config, "epsilon", float),
            seed=resolve(args, config, "seed", int),
            output_dir=out,
            gain_path=args.gain,
            quiet=quiet,
        )

    if args.command == "bode":
        points = resolve(args, config, "points", int)
        if points < 1:
            raise RejectedInputError(f"points must be >= 1, got {points}")
        return run_bode(
            controller_path=args.controller or args.gain,
            output_dir=out,
            points=points,
            quiet=quiet,
        )

    if args.command == "simulate":
        burn_in = resolve(args, config, "burn_in", int)
        sim = SimConfig(
            horizon=resolve(args, config, "horizon", int),
            n_rollouts=resolve(args, config, "rollouts", int),
            burn_in=burn_in,
            seed=resolve(args, config, "seed", int),
        )
        # the relaxed problem's delta only applies to history-system rollouts
        epsilon = float(args.epsilon) if args.epsilon is not None else 0.0
        return run_simulate(
            plant_path=resolve(args, config, "plant"),
            output_dir=out,
            sim=sim,
            controller_path=args.controller,
            gain_path=args.gain,
            epsilon=epsilon,
            check=args.check,
            dump_path=args.dump,
            quiet=quiet,
        )

    raise RejectedInputError(f"unknown command '{args.command}'")


def main(argv: Optional[List[str]] = None) -> None:
    """Main entry point for CLI."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        sys.exit(0)

    if not args.quiet:
        welcome_banner()

    # Load config file if provided
    config: Dict[str, Any] = {}
    if args.config:
        config = load_config_file(args.config)
        if config and not args.quiet:
            console.print(f"[dim]Loaded config from {args.config}[/]")

    try:
        code = dispatch(args, config)
    except RejectedInputError as e:
        console.print(f"[red]Error: {e}[/]")
        sys.exit(2)
    sys.exit(code)


if __name__ == "__main__":
    main()
