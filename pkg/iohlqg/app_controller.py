"""Application controller for iohlqg: one ``run_*`` function per CLI command."""

from typing import Callable, List, Optional, Tuple

import numpy as np
from rich import box
from rich.console import Console
from rich.progress import BarColumn, Progress, TextColumn, TimeElapsedColumn
from rich.status import Status
from rich.table import Column, Table

from iohlqg.common_utils import (
    export_bode_to_csv,
    export_document_to_json,
    export_rows_to_csv,
    export_synth_report_to_pdf,
    export_trajectory_to_csv,
    export_traces_to_xlsx,
    load_json_file,
)
from iohlqg.exceptions import IohLqgError, RejectedInputError
from iohlqg.ioh_lift import IohGain, build_history_system, realize_controller
from iohlqg.linalg_core import bode, hankel_singular_values, spectral_radius
from iohlqg.lqg_engine import (
    RelaxedProblem,
    cost,
    cost_of_dyn_controller,
    finite_difference_check,
)
from iohlqg.models import (
    BaselineSummary,
    GradCheckSummary,
    SeedSummary,
    SimulationSummary,
    SynthSummary,
)
from iohlqg.pgm import PgmConfig, SeedOutcome, multi_seed_study, random_stabilizing_gain
from iohlqg.plant_ctl import (
    CostWeights,
    DynController,
    NoiseSpec,
    Plant,
    benchmark_problem,
    controller_from_dict,
    controller_to_dict,
    lqg_baseline,
    problem_from_dict,
    reduce_controller,
)
from iohlqg.report_exporter import ExportHandler
from iohlqg.simulate import (
    SimConfig,
    estimate_cost_dyn,
    estimate_cost_ioh,
    sample_trajectory,
)
from iohlqg.visuals import create_cost_bars, create_hsv_table

console = Console()
err_console = Console(stderr=True)

GRADCHECK_THRESHOLD = 1e-5
BODE_OMEGA_MIN = 1e-3

Problem = Tuple[Plant, NoiseSpec, CostWeights]


def _fail(message: str) -> int:
    err_console.print(f"[bold red]Error: {message}[/]")
    return 1


def _guarded(body: Callable[[], int]) -> int:
    """Map domain and file errors to exit code 1."""
    try:
        return body()
    except IohLqgError as e:
        return _fail(f"{type(e).__name__}: {e}")
    except OSError as e:
        return _fail(str(e))


def load_problem(path: Optional[str]) -> Problem:
    """Problem file at ``path``, or the built-in benchmark when ``path`` is None."""
    if path is None:
        return benchmark_problem()
    return problem_from_dict(load_json_file(path))


def load_controller_or_gain(path: str) -> DynController:
    """A controller file {G,H,F} or an IOH gain file {L,nu,ny,K}, realized with z_L = 0."""
    doc = load_json_file(path)
    if "K" in doc:
        return realize_controller(IohGain.from_dict(doc))
    return controller_from_dict(doc)


def _hsv_or_nan(ctl: DynController) -> List[float]:
    if ctl.n_xi == 0:
        return []
    if spectral_radius(ctl.G) >= 1.0:
        return [float("nan")] * ctl.n_xi
    return [float(s) for s in hankel_singular_values(ctl.G, ctl.H, ctl.F)]


def _seed_summary(outcome: SeedOutcome) -> SeedSummary:
    if outcome.result is None:
        return SeedSummary(
            seed=outcome.index,
            final_J=None,
            final_J_eps=None,
            grad_norm=None,
            iterations=0,
            stop_reason="",
            backoffs=0,
            monotone=False,
            ascent_steps=0,
            max_delta_J_eps=None,
            non_coercive=0,
            error=outcome.error,
        )
    trace = outcome.result.trace
    return SeedSummary(
        seed=outcome.index,
        final_J=trace.final.J,
        final_J_eps=trace.final.J_eps,
        grad_norm=trace.final.grad_norm,
        iterations=trace.iterations,
        stop_reason=trace.stop_reason,
        backoffs=trace.backoffs,
        monotone=trace.monotone,
        ascent_steps=trace.ascent_steps,
        max_delta_J_eps=trace.max_delta_J_eps,
        non_coercive=trace.non_coercive,
        error=None,
    )


def create_runs_table(runs: List[SeedSummary], baseline: Optional[float]) -> Table:
    table = Table(
        Column("Seed", justify="center"),
        Column("Final J", justify="right"),
        Column("Gap to Riccati", justify="right"),
        Column("|∇J_ε|", justify="right"),
        Column("Iterations", justify="right"),
        Column("Stopped by", justify="center"),
        title="PGM runs",
        box=box.ASCII_DOUBLE_HEAD,
        show_lines=False,
        style="bright_cyan",
    )
    for run in runs:
        if run["error"]:
            table.add_row(str(run["seed"]), "[red]Error[/]", "", "", "", f"[red]{run['error']}[/]")
            continue
        final_J = run["final_J"] or 0.0
        gap = f"{100.0 * (final_J - baseline) / baseline:+.4f}%" if baseline else "N/A"
        table.add_row(
            str(run["seed"]),
            f"{final_J:.6f}",
            gap,
            f"{run['grad_norm']:.3e}",
            str(run["iterations"]),
            run["stop_reason"],
        )
    return table


def run_synth(
    plant_path: Optional[str],
    L: int,
    config: PgmConfig,
    n_seeds: int,
    output_dir: str,
    formats: Optional[List[str]] = None,
    quiet: bool = False,
) -> int:
    """
    Multi-seed PGM synthesis.

    Writes trace_seedNN.csv per successful seed, gain.json and controller.json
    for the best run, and summary.json.
    """

    def body() -> int:
        plant, noise, weights = load_problem(plant_path)
        baseline_J: Optional[float] = None
        try:
            baseline_J = cost_of_dyn_controller(plant, noise, weights, lqg_baseline(plant, noise, weights))
        except IohLqgError as e:
            err_console.print(f"[yellow]Riccati baseline unavailable: {e}[/]")
        prob = RelaxedProblem(build_history_system(plant, L), noise, weights, config.epsilon)

        with Progress(
            TextColumn("[bright_cyan]{task.description}"),
            BarColumn(),
            TextColumn("{task.completed}/{task.total}"),
            TimeElapsedColumn(),
            console=err_console,
            disable=quiet,
        ) as progress:
            task = progress.add_task("Running PGM seeds...", total=n_seeds)
            outcomes = multi_seed_study(
                prob, n_seeds, config, on_done=lambda _: progress.advance(task)
            )

        runs = [_seed_summary(o) for o in outcomes]
        done = [o for o in outcomes if o.result is not None]
        if not done:
            return _fail("every PGM run failed")
        best = min(done, key=lambda o: o.result.trace.final.J)  # type: ignore[union-attr]
        assert best.result is not None
        final_J = best.result.trace.final.J
        realized = realize_controller(best.result.gain)
        hsv = _hsv_or_nan(realized)
        gap = None if baseline_J is None else final_J - baseline_J
        summary = SynthSummary(
            report_type="synth",
            L=L,
            alpha=config.alpha,
            epsilon=config.epsilon,
            max_iters=config.max_iters,
            seeds=n_seeds,
            succeeded=len(done),
            best_seed=best.index,
            final_J=final_J,
            baseline_J=baseline_J,
            gap=gap,
            gap_percent=None if gap is None or not baseline_J else 100.0 * gap / baseline_J,
            hankel_singular_values=hsv,
            runs=runs,
        )

        header = done[0].result.trace.header()  # type: ignore[union-attr]
        traces = {o.index: o.result.trace.rows() for o in done}  # type: ignore[union-attr]
        handler = ExportHandler(output_dir, quiet=quiet)
        for index, rows in traces.items():
            handler.save_csv(export_rows_to_csv(header, rows), f"trace_seed{index:02d}.csv")
        handler.save_json(export_document_to_json(best.result.gain.to_dict()), "gain.json")
        handler.save_json(export_document_to_json(controller_to_dict(realized)), "controller.json")
        handler.save_json(export_document_to_json(dict(summary)), "summary.json")
        for fmt in formats or []:
            if fmt == "pdf":
                pdf = export_synth_report_to_pdf(dict(summary), traces, header)
                handler.save_pdf(pdf, "synth_report.pdf")
            elif fmt == "xlsx":
                handler.save_xlsx(export_traces_to_xlsx(dict(summary), traces, header), "traces.xlsx")

        if not quiet:
            title = f"Seed {best.index}: J along the trace"
            create_cost_bars(best.result.trace.records, baseline_J, title=title)
            console.print(create_runs_table(runs, baseline_J))
        return 0

    return _guarded(body)


def run_baseline(
    plant_path: Optional[str],
    output_dir: str,
    order: Optional[int] = None,
    quiet: bool = False,
) -> int:
    """Riccati LQG controller and its cost; optionally a balanced-truncation reduction."""

    def body() -> int:
        plant, noise, weights = load_problem(plant_path)
        with Status("[bright_cyan]Solving Riccati equations...", spinner="dots12", console=err_console):
            ctl = lqg_baseline(plant, noise, weights)
            J = cost_of_dyn_controller(plant, noise, weights, ctl)
        hsv = _hsv_or_nan(ctl)
        summary = BaselineSummary(
            report_type="baseline",
            J=J,
            order=ctl.n_xi,
            hankel_singular_values=hsv,
            controller=controller_to_dict(ctl),  # type: ignore[typeddict-item]
        )
        labels, hsv_rows = [f"LQG (order {ctl.n_xi})"], [hsv]
        reduced: Optional[DynController] = None
        if order is not None:
            reduced = reduce_controller(ctl, order)
            summary["reduced_order"] = order
            summary["reduced_J"] = cost_of_dyn_controller(plant, noise, weights, reduced)
            summary["reduced_controller"] = controller_to_dict(reduced)  # type: ignore[typeddict-item]
            labels.append(f"reduced (order {order})")
            hsv_rows.append(_hsv_or_nan(reduced))

        handler = ExportHandler(output_dir, quiet=quiet)
        handler.save_json(export_document_to_json(controller_to_dict(ctl)), "lqg_controller.json")
        if reduced is not None:
            handler.save_json(export_document_to_json(controller_to_dict(reduced)), "reduced_controller.json")
        handler.save_json(export_document_to_json(dict(summary)), "baseline.json")

        if not quiet:
            console.print(f"[bold bright_green]LQG cost J = {J:.6f}[/]")
            if reduced is not None:
                console.print(f"[bold yellow]Order-{order} cost J = {summary['reduced_J']:.6f}[/]")
            console.print(create_hsv_table(hsv_rows, labels))
        return 0

    return _guarded(body)


def run_gradcheck(
    plant_path: Optional[str],
    L: int,
    epsilon: float,
    seed: int,
    output_dir: str,
    gain_path: Optional[str] = None,
    quiet: bool = False,
) -> int:
    """Central-difference check of the analytic gradient; exit 0 iff the error is <= 1e-5."""

    def body() -> int:
        plant, noise, weights = load_problem(plant_path)
        K: Optional[IohGain] = None
        horizon = L
        if gain_path is not None:
            K = IohGain.from_dict(load_json_file(gain_path))
            horizon = K.L
        prob = RelaxedProblem(build_history_system(plant, horizon), noise, weights, epsilon)
        if K is None:
            K = random_stabilizing_gain(prob, 1.0, seed)
        check = finite_difference_check(prob, K)
        passed = bool(check.max_rel_error <= GRADCHECK_THRESHOLD)
        summary = GradCheckSummary(
            report_type="gradcheck",
            L=horizon,
            epsilon=epsilon,
            seed=seed,
            max_rel_error=check.max_rel_error,
            grad_norm=float(np.linalg.norm(check.analytic, "fro")),
            threshold=GRADCHECK_THRESHOLD,
            passed=passed,
        )
        ExportHandler(output_dir, quiet=quiet).save_json(
            export_document_to_json(dict(summary)), "gradcheck.json"
        )
        color = "bright_green" if passed else "bold red"
        console.print(f"[{color}]max relative error {check.max_rel_error:.3e} "
                      f"(threshold {GRADCHECK_THRESHOLD:.0e})[/]")
        return 0 if passed else 1

    return _guarded(body)


def run_bode(controller_path: str, output_dir: str, points: int = 200, quiet: bool = False) -> int:
    """Bode data of a controller over a log grid on [1e-3, pi] rad/sample."""

    def body() -> int:
        if points < 1:
            raise RejectedInputError(f"points must be >= 1, got {points}")
        ctl = load_controller_or_gain(controller_path)
        omegas = np.geomspace(BODE_OMEGA_MIN, np.pi, points)
        mag_db, phase = bode(ctl.G, ctl.H, ctl.F, omegas)
        ExportHandler(output_dir, quiet=quiet).save_csv(
            export_bode_to_csv(omegas, mag_db, phase), "bode.csv"
        )
        if not quiet:
            console.print(
                f"[bright_cyan]Peak magnitude {np.max(mag_db):.2f} dB over {points} frequencies[/]"
            )
        return 0

    return _guarded(body)


def run_simulate(
    plant_path: Optional[str],
    output_dir: str,
    sim: SimConfig,
    controller_path: Optional[str] = None,
    gain_path: Optional[str] = None,
    epsilon: float = 0.0,
    check: bool = False,
    dump_path: Optional[str] = None,
    quiet: bool = False,
) -> int:
    """
    Monte-Carlo cost of a dynamic controller (default: the Riccati baseline) or of
    an IOH gain on the history system. With ``check`` the exit code is 0 only when
    the estimate lies within 3 standard errors of the analytic cost.
    """

    def body() -> int:
        plant, noise, weights = load_problem(plant_path)
        analytic: Optional[float] = None
        if gain_path is not None:
            K = IohGain.from_dict(load_json_file(gain_path))
            prob = RelaxedProblem(build_history_system(plant, K.L), noise, weights, epsilon)
            if check:
                analytic = cost(prob, K).J_eps
            with Status("[bright_cyan]Simulating history system...", spinner="dots12", console=err_console):
                estimate = estimate_cost_ioh(prob, K, sim, with_delta=epsilon > 0)
            ctl: Optional[DynController] = None
        else:
            ctl = (
                load_controller_or_gain(controller_path)
                if controller_path is not None
                else lqg_baseline(plant, noise, weights)
            )
            if check:
                analytic = cost_of_dyn_controller(plant, noise, weights, ctl)
            with Status("[bright_cyan]Simulating closed loop...", spinner="dots12", console=err_console):
                estimate = estimate_cost_dyn(plant, noise, weights, ctl, sim)

        within = None if analytic is None else estimate.within(analytic, 3.0)
        summary = SimulationSummary(
            report_type="simulate",
            mean=estimate.mean,
            std_err=estimate.std_err,
            n_samples=estimate.n_samples,
            horizon=sim.horizon,
            rollouts=sim.n_rollouts,
            burn_in=int(sim.burn_in or 0),
            seed=sim.seed,
            analytic=analytic,
            within_3_std_err=within,
        )
        dump: Optional[Tuple[str, str]] = None
        if dump_path is not None:
            if ctl is None:
                raise RejectedInputError("--dump needs a dynamic controller, not an IOH gain")
            traj = sample_trajectory(plant, noise, weights, ctl, sim)
            dump = (dump_path, export_trajectory_to_csv(traj.t, traj.y, traj.u))

        handler = ExportHandler(output_dir, quiet=quiet)
        handler.save_json(export_document_to_json(dict(summary)), "simulation.json")
        if dump is not None:
            handler.save_csv(dump[1], dump[0])

        if not quiet:
            line = f"[bright_cyan]Estimated cost {estimate.mean:.6f} ± {estimate.std_err:.2g}[/]"
            if analytic is not None:
                line += f"  analytic {analytic:.6f}"
            console.print(line)
        if within is False:
            return _fail("Monte-Carlo estimate is more than 3 standard errors from the analytic cost")
        return 0

    return _guarded(body)
