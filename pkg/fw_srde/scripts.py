import logging
import re
import sys
from pathlib import Path

import click
import numpy as np

from fw_srde import __version__, exporters
from fw_srde.checks.base import CheckContext, CheckLevel
from fw_srde.coefficients import CATALOG, Regime, builtin
from fw_srde.config import SUITES, Config
from fw_srde.exceptions import FWError
from fw_srde.grid import FIELD_PROFILES, GridSpec, named_field
from fw_srde.ldp_verifier import (
    C1_M_LIST,
    C2_DELTA,
    C2_EPS_LIST,
    DEFAULT_EPS_GRID,
    c1_experiment,
    c2_experiment,
    ldp_curve,
    linear_gaussian_probability,
)
from fw_srde.lemma_checks import LemmaChecker
from fw_srde.noise import convolution_variance
from fw_srde.rate_function import METHODS, EndpointEvent, OptimizerConfig, minimize_rate_endpoint
from fw_srde.skeleton_solver import (
    DEFAULT_SCHEDULE,
    solve_skeleton_lipschitz,
    solve_skeleton_mollified,
)
from fw_srde.spde_solver import SolveConfig, explosion_demo, simulate_ensemble, solve_spde

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

EX_USAGE = 64
EX_IO = 3
DEFAULT_GRID = "1,200,8,256"
LOG_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)

logger = logging.getLogger(__name__)


class FloatList(click.ParamType):
    name = "floats"

    def convert(self, value, param, ctx):
        if isinstance(value, (list, tuple)):
            return tuple(float(v) for v in value)
        try:
            return tuple(float(v) for v in str(value).split(","))
        except ValueError:
            self.fail(f"'{value}' is not a comma separated list of numbers", param, ctx)


class IntList(FloatList):
    name = "integers"

    def convert(self, value, param, ctx):
        numbers = super().convert(value, param, ctx)
        if any(n != int(n) for n in numbers):
            self.fail(f"'{value}' is not a comma separated list of integers", param, ctx)
        return tuple(int(n) for n in numbers)


class GridType(click.ParamType):
    name = "T,n_t,L,n_x"

    def convert(self, value, param, ctx):
        if isinstance(value, GridSpec):
            return value
        try:
            return GridSpec.parse(value)
        except FWError as e:
            self.fail(str(e), param, ctx)


class EventType(click.ParamType):
    name = "a,x0,T"

    def convert(self, value, param, ctx):
        if isinstance(value, EndpointEvent):
            return value
        try:
            return EndpointEvent.parse(value)
        except FWError as e:
            self.fail(str(e), param, ctx)


def _load_config(ctx, param, value):
    """Read a TOML file into Click's default_map; one table per subcommand."""
    if value is None:
        return value
    with open(value, "rb") as f:
        try:
            data = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise click.BadParameter(f"{value}: {e}", ctx=ctx, param=param)
    ctx.default_map = {name.replace("_", "-"): table for name, table in data.items()}
    return value


def _resolved(ctx: click.Context) -> dict:
    """The command, its resolved parameters and the global options."""
    params = {}
    for key, value in ctx.params.items():
        if isinstance(value, GridSpec):
            value = value.as_dict()
        elif isinstance(value, EndpointEvent):
            value = value._asdict()
        params[key] = value
    return {
        "command": ctx.info_name,
        "params": params,
        "threads": ctx.obj["threads"],
        "version": __version__,
    }


def _emit(ctx: click.Context, payload: dict, out):
    text = exporters.to_json(payload, _resolved(ctx), timestamp=ctx.obj["timestamp"])
    if out:
        Path(out).write_text(text + "\n")
        click.echo(f"Results written to {out}", err=True)
    else:
        click.echo(text)


def _suite_names(ctx, param, value):
    """Suites may be given as heat-kernel or heat_kernel."""
    return tuple(dict.fromkeys(v.replace("-", "_") for v in value))


def _is_csv(out) -> bool:
    return bool(out) and Path(out).suffix.lower() == ".csv"


def _companion_csv(out, rows, suffix=".csv"):
    if out and rows:
        path = Path(out).with_suffix(suffix)
        path.write_text(exporters.table_to_csv(rows))
        return str(path)


coeff_option = click.option(
    "--coeff",
    type=click.Choice(sorted(CATALOG)),
    default="zero_drift_unit_sigma",
    show_default=True,
    help="Built-in coefficient set.",
)
grid_option = click.option(
    "--grid",
    type=GridType(),
    default=DEFAULT_GRID,
    show_default=True,
    help="Space-time grid T,n_t,L,n_x on [0,T] x [-L,L).",
)
seed_option = click.option("--seed", type=int, default=0, show_default=True, help="Random seed.")
out_option = click.option(
    "-o", "--out", type=click.Path(dir_okay=False), help="Write results to file, instead of stdout"
)
u0_option = click.option(
    "--u0",
    type=click.Choice(sorted(FIELD_PROFILES)),
    default="zero",
    show_default=True,
    help="Initial datum.",
)
streams_option = click.option(
    "--streams",
    type=click.IntRange(min=0),
    default=0,
    show_default=True,
    help="First noise stream id; runs with disjoint stream ranges are independent.",
)
SUITE_CHOICES = tuple(sorted(set(SUITES) | {s.replace("_", "-") for s in SUITES}))


@click.group()
@click.option(
    "--config",
    type=click.Path(exists=True, dir_okay=False),
    callback=_load_config,
    is_eager=True,
    expose_value=False,
    help="TOML file with defaults per subcommand; flags win.",
)
@click.option(
    "--threads",
    type=click.IntRange(min=1),
    default=1,
    envvar="FW_SRDE_THREADS",
    show_default=True,
    help="Worker threads for ensembles and sampled suites.",
)
@click.option("-v", "--verbose", count=True, help="Log INFO (-v) or DEBUG (-vv).")
@click.option("--no-timestamp", is_flag=True, hidden=True)
@click.version_option(__version__, prog_name="fw_srde")
@click.pass_context
def cli(ctx, threads, verbose, no_timestamp):
    """Large deviations of stochastic reaction-diffusion equations on the real line."""
    logging.basicConfig(
        level=LOG_LEVELS[min(verbose, 2)], format="%(levelname)s %(name)s: %(message)s"
    )
    ctx.ensure_object(dict)
    ctx.obj.update(threads=threads, timestamp=not no_timestamp)


@cli.command()
@coeff_option
@grid_option
@u0_option
@click.option("--eps", type=float, default=1.0, show_default=True, help="Noise intensity.")
@click.option("--control", help="Named control or CSV control file.")
@seed_option
@streams_option
@click.option("--samples", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--x0", type=float, default=0.0, show_default=True, help="Probe point.")
@click.option("--trajectory", type=click.Path(dir_okay=False), help="CSV of the single path.")
@out_option
@click.pass_context
def simulate(ctx, coeff, grid, u0, eps, control, seed, streams, samples, x0, trajectory, out):
    """Simulate the stochastic heat equation with the chosen coefficients

    An --out file ending in .csv receives the trajectory (one path) or the
    endpoint samples (an ensemble) instead of the JSON report.
    """
    coeffs = builtin(coeff)
    h = exporters.load_control(control, grid) if control else None
    cfg = SolveConfig(
        coeffs, named_field(u0, grid), eps=eps, control=h, seed=seed, stream=streams
    )
    csv_out = out if _is_csv(out) else None
    if samples == 1:
        path = solve_spde(cfg)
        for target in filter(None, (trajectory, csv_out)):
            exporters.write_trajectory_csv(path, target)
        payload = {
            "endpoint": path.values[-1, grid.index_of(x0)],
            "weighted_sup": path.metadata["weighted_sup"],
            "weight": path.metadata["weight"],
        }
    else:
        result = simulate_ensemble(cfg, samples, workers=ctx.obj["threads"], x_probe=x0)
        payload = {
            "samples": samples,
            "x_probe": result.x_probe,
            "mean": result.endpoints.mean(),
            "variance": result.endpoints.var(ddof=1),
        }
        if coeff == "zero_drift_unit_sigma" and h is None:
            payload["grid_variance"] = eps * convolution_variance(grid)
            payload["continuum_variance"] = eps * np.sqrt(grid.T / np.pi)
        if csv_out:
            rows = [{"sample": j, "endpoint": v} for j, v in enumerate(result.endpoints)]
            Path(csv_out).write_text(exporters.table_to_csv(rows))
    if csv_out:
        click.echo(f"CSV written to {csv_out}", err=True)
    _emit(ctx, payload, None if csv_out else out)


@cli.command()
@coeff_option
@grid_option
@u0_option
@click.option("--control", default="zero", show_default=True, help="Named control or CSV file.")
@click.option("--regime", type=click.Choice(["h0", "h1"]), help="Defaults to the set's regime.")
@click.option("--tol", type=float, default=1e-8, show_default=True)
@click.option("--max-iter", type=int, default=200, show_default=True)
@click.option("--schedule", type=IntList(), default=",".join(map(str, DEFAULT_SCHEDULE)))
@click.option("--report", type=click.Path(dir_okay=False), help="JSON report file.")
@out_option
@click.pass_context
def skeleton(ctx, coeff, grid, u0, control, regime, tol, max_iter, schedule, report, out):
    """Solve the skeleton equation for a control and write the trajectory as CSV"""
    coeffs = builtin(coeff)
    h = exporters.load_control(control, grid)
    initial = named_field(u0, grid)
    if regime is None:
        regime = "h0" if coeffs.regime is Regime.H0_LIPSCHITZ else "h1"
    if regime == "h0":
        Y = solve_skeleton_lipschitz(coeffs, initial, h, tol=tol, max_iter=max_iter)
        payload = {"iterations": Y.metadata["iterations"], "residual": Y.metadata["residual"]}
    else:
        solution = solve_skeleton_mollified(
            coeffs, initial, h, n_schedule=schedule, picard_tol=tol, max_iter=max_iter
        )
        Y = solution.trajectory
        payload = solution.as_dict()
    if out:
        exporters.write_trajectory_csv(Y, out)
        click.echo(f"Trajectory written to {out}", err=True)
    payload["final_sup"] = np.max(np.abs(Y.values[-1]))
    _emit(ctx, payload, report)


@cli.command()
@coeff_option
@click.option("--target", "a", type=float, required=True, help="Endpoint level a.")
@click.option("--x0", type=float, default=0.0, show_default=True)
@click.option("--T", "T", type=float, default=1.0, show_default=True)
@click.option("--grid", type=GridType(), default=DEFAULT_GRID, help="T is taken from --T.")
@u0_option
@click.option("--mu0", type=float, default=10.0, show_default=True)
@click.option("--rounds", type=int, default=5, show_default=True)
@click.option("--method", type=click.Choice(METHODS), default=METHODS[0], show_default=True)
@click.option("--restarts", type=int, default=0, show_default=True)
@seed_option
@click.option("--control-out", type=click.Path(dir_okay=False), help="CSV of the minimizer h*.")
@out_option
@click.pass_context
def rate(ctx, coeff, a, x0, T, grid, u0, mu0, rounds, method, restarts, seed, control_out, out):
    """Minimize the control energy reaching u(T, x0) = a"""
    grid = GridSpec(T, grid.n_t, grid.half_width, grid.n_x)
    event = EndpointEvent(x0=x0, a=a, T=T)
    opt = OptimizerConfig(
        mu0=mu0,
        rounds=rounds,
        method=method,
        restarts=restarts,
        seed=seed,
        workers=ctx.obj["threads"],
    )
    result = minimize_rate_endpoint(builtin(coeff), named_field(u0, grid), event, opt)
    if control_out is None and out:
        control_out = str(Path(out).with_name(Path(out).stem + "_control.csv"))
    if control_out:
        exporters.write_control_csv(result.control, control_out)
    payload = {
        "event": event._asdict(),
        "I": result.rate,
        "control_file": control_out,
        "history": result.history,
        "optimizer": opt.as_dict(),
    }
    if coeff == "zero_drift_unit_sigma" and u0 == "zero":
        payload["gaussian_rate"] = a**2 / (2.0 * np.sqrt(T / np.pi))
    _emit(ctx, payload, out)


@cli.command("verify-ldp")
@click.option("--claim", type=click.Choice(["curve", "c1", "c2"]), default="curve")
@coeff_option
@grid_option
@u0_option
@click.option("--event", type=EventType(), default="1,0,1", show_default=True)
@click.option("--eps-grid", type=FloatList(), help="Noise intensities.")
@click.option(
    "--samples",
    type=click.IntRange(min=2),
    help="Samples per eps; defaults to 10000 for the curve and 50 for c2.",
)
@click.option("--control", default="zero", show_default=True, help="Control for c1 and c2.")
@click.option("--m-list", type=IntList(), default=",".join(map(str, C1_M_LIST)))
@click.option("--delta", type=float, default=C2_DELTA, show_default=True)
@seed_option
@streams_option
@out_option
@click.pass_context
def verify_ldp(
    ctx, claim, coeff, grid, u0, event, eps_grid, samples, control, m_list, delta, seed, streams, out
):
    """Estimate tail probabilities against the rate, or run the C1 and C2 experiments"""
    coeffs = builtin(coeff)
    threads = ctx.obj["threads"]
    if claim == "curve":
        grid = GridSpec(event.T, grid.n_t, grid.half_width, grid.n_x)
        curve = ldp_curve(
            event,
            coeffs,
            eps_list=eps_grid or DEFAULT_EPS_GRID,
            n_samples=samples or 10000,
            seed=seed,
            stream=streams,
            u0=named_field(u0, grid),
            workers=threads,
            opt=OptimizerConfig(workers=threads),
        )
        payload = curve.as_dict()
        if coeff == "zero_drift_unit_sigma" and u0 == "zero":
            for row in payload["rows"]:
                row["gaussian_p"] = linear_gaussian_probability(
                    event.a, row["eps"], event.T, convolution_variance(grid)
                )
    else:
        h = exporters.load_control(control, grid)
        initial = named_field(u0, grid)
        if claim == "c1":
            payload = c1_experiment(coeffs, initial, h, m_list=m_list).as_dict()
        else:
            payload = c2_experiment(
                coeffs,
                initial,
                h,
                eps_list=eps_grid or C2_EPS_LIST,
                n_samples=samples or 50,
                seed=seed,
                stream=streams,
                delta=delta,
                workers=threads,
            ).as_dict()
    csv_file = _companion_csv(out, payload["rows"])
    if csv_file:
        payload["csv"] = csv_file
    _emit(ctx, payload, out)


@cli.command("check-lemmas")
@click.option(
    "--suite",
    "suites",
    type=click.Choice(SUITE_CHOICES),
    multiple=True,
    callback=_suite_names,
    help="Restrict to suites (repeatable); default all.",
)
@click.option("--samples", type=click.IntRange(min=1), default=10000, show_default=True)
@click.option("--configs", type=click.IntRange(min=1), default=200, show_default=True)
@seed_option
@click.option("--coeff", type=click.Choice(sorted(CATALOG)), help="Restrict hypothesis checks.")
@click.option(
    "-l",
    "--level",
    type=click.Choice([x.name for x in CheckLevel], case_sensitive=False),
    default="ERROR",
    help="Minimum check level.",
)
@click.option(
    "--ignore-checks",
    type=str,
    help="Regex pattern; check codes matching this pattern are ignored.",
    default=None,
)
@out_option
@click.pass_context
def check_lemmas(ctx, suites, samples, configs, seed, coeff, level, ignore_checks, out):
    """Run the randomized inequality suites and report violations"""
    level = level.upper()
    if ignore_checks:
        ignore_checks = re.compile(ignore_checks)
    context = CheckContext(
        samples=samples, configs=configs, seed=seed, workers=ctx.obj["threads"], coeff=coeff
    )
    checker = LemmaChecker(context)
    results = exporters.check_results(
        checker.reports(level=level, ignore_checks=ignore_checks, suites=suites or None)
    )
    failures = [row for row in results if not row["ok"]]
    for row in failures:
        logger.warning(
            "%s%s %s: %d violations", row["level"][:1], row["error_code"],
            row["inequality_id"], row["violations"],
        )
    click.echo(f"Finished {len(results)} reports, {len(failures)} with violations", err=True)
    _emit(ctx, {"reports": results, "failures": len(failures)}, out)


@cli.command("demo-explosion")
@click.option("--t", "t", type=float, default=1.0, show_default=True)
@click.option("--lambdas", type=FloatList(), default="4,8,16,32,64", show_default=True)
@click.option("--samples", type=click.IntRange(min=2), default=200, show_default=True)
@click.option("--dx", type=float, default=0.25, show_default=True)
@click.option("--dt", type=float, default=0.01, show_default=True)
@seed_option
@out_option
@click.pass_context
def demo_explosion(ctx, t, lambdas, samples, dx, dt, seed, out):
    """Windowed suprema of the linear equation growing like sqrt(log Lambda)"""
    table = explosion_demo(
        t, lambdas, samples=samples, seed=seed, workers=ctx.obj["threads"], dx=dx, dt=dt
    )
    payload = table.as_dict()
    csv_file = _companion_csv(out, payload["rows"])
    if csv_file:
        payload["csv"] = csv_file
    _emit(ctx, payload, out)


@cli.command()
@click.option("-f", "--file", help="Write output to file, instead of stdout")
@click.option(
    "-ft",
    "--format",
    type=click.Choice(["rst", "csv"], case_sensitive=False),
    default="rst",
    help="Export format for checks table",
)
@click.option(
    "--suite",
    "suites",
    type=click.Choice(SUITE_CHOICES),
    multiple=True,
    callback=_suite_names,
    help="Only checks of these suites (repeatable).",
)
def export_checks(file, format, suites):
    """Export formatted checks summary to insert in documentation or use elsewhere"""
    checks = list(Config().iter_checks(level=CheckLevel.INFO, suites=suites or None))

    if format.lower() == "rst":
        table = exporters.generate_rst_table(checks=checks)
    elif format.lower() == "csv":
        table = exporters.generate_csv_table(checks=checks)
    if file:
        with open(file, "w") as f:
            f.write(table)
    else:
        click.echo(table)


def run(argv=None) -> int:
    """Run the command line and map failures to exit codes.

    0 on success, 1 on domain and numerical errors, 2 on non-convergence,
    3 on I/O errors and 64 on usage errors.
    """
    try:
        cli.main(args=argv, prog_name="fw_srde", standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.UsageError as e:
        e.show()
        return EX_USAGE
    except click.Abort:
        click.echo("Aborted!", err=True)
        return 1
    except click.ClickException as e:
        e.show()
        return EX_IO if isinstance(e, click.FileError) else e.exit_code
    except FWError as e:
        click.echo(f"Error: {e}", err=True)
        return e.exit_code
    except OSError as e:
        click.echo(f"Error: {e}", err=True)
        return EX_IO
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
