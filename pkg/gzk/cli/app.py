import json
import sys
from contextlib import contextmanager
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import typer

try:  # typer >= 0.26 vendors click and raises its own exception classes
    from typer._click import exceptions as click
except ImportError:
    import click
from rich.panel import Panel
from rich.table import Table

from gzk import __version__
from gzk.core.config import settings
from gzk.core.exceptions import GZKError, ParameterError
from gzk.lab.core import console
from gzk.lab.registry import ExperimentRegistry
from gzk.lab.sweep import run_sweep, write_sweep_summary
from gzk.lab.utils import render_verdict
from gzk.services.evolution import energy, evolve, grid_of, mass
from gzk.services.ground_state import shooting_ground_state, solve_ground_state
from gzk.services.linear_propagator import ProbeKind, ProbeSpec, estimate_probe
from gzk.services.persistence import (
    RunRecorder, parse_config, read_snapshot, write_config, write_diagnostics, write_ground_state,
    write_probe, write_snapshot, write_verdict,
)
from gzk.services.spectral_core import (
    field_from_function, make_grid, random_band_limited, sobolev_norm, sup_norm,
)

app = typer.Typer(
    name="gzk",
    help="Pseudo-spectral lab for the generalized Zakharov-Kuznetsov equation.",
    no_args_is_help=True,
    add_completion=False,
)


class DatumKind(str, Enum):
    GAUSSIAN = "gaussian"
    GROUND_STATE = "ground-state"
    RANDOM = "random"


# --- Helpers ---

@contextmanager
def _reported():
    """Print library errors as a rich panel and exit 1."""
    try:
        yield
    except GZKError as e:
        body = f"[bold red]{e.message}[/bold red]"
        if e.details:
            body += "\n" + "\n".join(f"  [dim]{k}[/dim] = {v}" for k, v in e.details.items())
        console.print(Panel(body, title=type(e).__name__, border_style="red"))
        raise typer.Exit(code=1)


def _parse_overrides(pairs: List[str]) -> Dict[str, Any]:
    """key=value pairs; values are read as JSON when possible, else kept as text."""
    out: Dict[str, Any] = {}
    for item in pairs:
        if "=" not in item:
            raise typer.BadParameter(f"expected key=value, got '{item}'", param_hint="--set")
        key, raw = (p.strip() for p in item.split("=", 1))
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw  # plain string
    return out


# --- Commands ---

@app.command("ground-state")
def ground_state_cmd(
    k: int = typer.Option(2, "--k", help="Nonlinearity power"),
    c: float = typer.Option(1.0, "--c", help="Wave speed"),
    n: int = typer.Option(256, "--n", help="Grid points per side"),
    box: float = typer.Option(32 * np.pi, "--box", help="Box side length"),
    tol: float = typer.Option(1e-11, "--tol"),
    symmetrize: bool = typer.Option(False, "--symmetrize", help="Average over the square's symmetries each step"),
    shooting: bool = typer.Option(False, "--shooting", help="Compare the mass with the radial ODE oracle"),
    out: Optional[Path] = typer.Option(None, "--out", help="Output directory"),
):
    """Solve for the ground state phi_c and write profile plus metadata."""
    with _reported():
        recorder = RunRecorder("ground-state", {"k": k, "c": c, "n": n, "box": box, "tol": tol,
                                                "symmetrize": symmetrize}, out_dir=out)
        grid = make_grid(n, n, box, box)
        with console.status(f"[bold blue]Petviashvili iteration k={k} c={c:g}..."):
            g = solve_ground_state(k, c, grid, tol=tol, symmetrize=symmetrize)
        recorder.add(*write_ground_state(recorder.directory, g))

        table = Table(title=f"Ground state k={k}, c={c:g} on {n}x{n}, box {box:.6g}")
        table.add_column("Quantity", style="cyan")
        table.add_column("Value", style="magenta")
        for key, value in g.metadata().model_dump().items():
            table.add_row(key, f"{value:.12g}" if isinstance(value, float) else str(value))
        table.add_row("iterations", str(g.iterations))
        if shooting:
            oracle = shooting_ground_state(k, c)
            table.add_row("oracle mass", f"{oracle.mass:.12g}")
            table.add_row("relative mass gap", f"{abs(g.mass - oracle.mass) / oracle.mass:.3e}")
        console.print(table)
        recorder.finish()


@app.command("evolve")
def evolve_cmd(
    config: Path = typer.Option(..., "--config", help="key = value run file"),
    init: Optional[Path] = typer.Option(None, "--init", help="Initial snapshot; overrides --datum"),
    datum: DatumKind = typer.Option(DatumKind.GAUSSIAN, "--datum"),
    amplitude: float = typer.Option(0.5, "--amplitude"),
    out: Optional[Path] = typer.Option(None, "--out", help="Output directory"),
):
    """Integrate the equation and write snapshots and the diagnostics table."""
    with _reported():
        cfg = parse_config(config)
        recorder = RunRecorder("evolve", cfg.model_dump(), seed=cfg.seed, out_dir=out)
        recorder.add(write_config(recorder.path("run.cfg"), cfg))
        grid = grid_of(cfg)
        if init is not None:
            u0 = read_snapshot(init)
            if u0.grid != grid:
                raise ParameterError("Snapshot grid does not match the config",
                                     {"snapshot": u0.grid.model_dump(), "config": grid.model_dump()})
        elif datum is DatumKind.GROUND_STATE:
            u0 = solve_ground_state(cfg.k, 1.0, grid).profile
        elif datum is DatumKind.RANDOM:
            u0 = random_band_limited(grid, cfg.seed, band=min(16, min(grid.nx, grid.ny) // 2 - 1))
        else:
            u0 = field_from_function(grid, lambda X, Y: amplitude * np.exp(-(X ** 2 + Y ** 2)))

        with console.status(f"[bold blue]Evolving k={cfg.k} to T={cfg.T:g} ({cfg.integrator.value})..."):
            traj = evolve(u0, cfg)
        for i, snap in enumerate(traj.snapshots):
            recorder.add(write_snapshot(recorder.path(f"snapshot_{i:04d}.gzk"), snap))
        recorder.add(write_diagnostics(recorder.path("diagnostics.csv"), traj.diagnostics))

        style = "red" if traj.blew_up else "green"
        console.print(Panel(
            f"outcome: [bold {style}]{traj.outcome.value}[/bold {style}]\n"
            f"steps: {traj.steps}, last finite t = {traj.last_finite_time:.6g}\n"
            f"I1 drift: {traj.diagnostics.relative_drift('I1'):.3e}, "
            f"I2 drift: {traj.diagnostics.relative_drift('I2'):.3e}\n"
            f"max spectral tail fraction: {traj.max_tail_fraction:.3e}",
            title="Evolution", border_style=style
        ))
        recorder.finish()


@app.command("probe")
def probe_cmd(
    kind: ProbeKind = typer.Option(..., "--kind"),
    n: int = typer.Option(128, "--n"),
    box: float = typer.Option(16 * np.pi, "--box"),
    T: float = typer.Option(1.0, "--T"),
    count: Optional[int] = typer.Option(None, "--count", help="Samples (default from settings)"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    theta: float = typer.Option(0.5, "--theta"),
    eps: float = typer.Option(0.1, "--eps"),
    s: float = typer.Option(0.8, "--s", help="Sobolev index for maximal_L4_sobolev"),
    out: Optional[Path] = typer.Option(None, "--out", help="Output directory"),
):
    """Sample the ratio of a linear estimate over a seeded ensemble."""
    with _reported():
        seed = settings.DEFAULT_SEED if seed is None else seed
        spec = ProbeSpec(kind=kind, theta=theta, eps=eps, s=s)
        recorder = RunRecorder("probe", {"kind": kind, "n": n, "box": box, "T": T, "count": count,
                                         "theta": theta, "eps": eps, "s": s}, seed=seed, out_dir=out)
        with console.status(f"[bold blue]Probing {spec.label}..."):
            summary = estimate_probe(spec, make_grid(n, n, box, box), T, count=count, seed=seed)
        recorder.add(write_probe(recorder.path(f"probe_{kind.value}.csv"), summary))
        console.print(Panel(
            f"samples: {len(summary.samples)}\nmax ratio: {summary.max_ratio:.6g}\n"
            f"mean ratio: {summary.mean_ratio:.6g}",
            title=f"Probe {spec.label} on {summary.grid}, T={T:g}", border_style="blue"
        ))
        recorder.finish()


@app.command("experiment")
def experiment_cmd(
    name: str = typer.Argument(..., help="scaling | illposed | critical-mass | highlow"),
    overrides: List[str] = typer.Option([], "--set", help="Parameter override key=value (repeatable)"),
    out: Optional[Path] = typer.Option(None, "--out", help="Output directory"),
):
    """Run one scripted experiment; exits 1 when its verdict is FAIL."""
    params = _parse_overrides(overrides)
    with _reported():
        if name not in ExperimentRegistry.names():
            raise click.BadParameter(f"unknown experiment '{name}'; choose from {ExperimentRegistry.names()}",
                                     param_hint="NAME")
        recorder = RunRecorder(f"experiment-{name}", params, seed=params.get("seed"), out_dir=out)
        verdict = ExperimentRegistry.get(name).execute(params)
        recorder.add(*write_verdict(recorder.directory, verdict))
        render_verdict(verdict)
        recorder.finish()
    if verdict.failed:
        raise typer.Exit(code=1)


@app.command("sweep")
def sweep_cmd(
    names: List[str] = typer.Argument(..., help="Experiments to run side by side"),
    overrides: List[str] = typer.Option([], "--set", help="name.key=value override (repeatable)"),
    workers: Optional[int] = typer.Option(None, "--workers"),
    out: Optional[Path] = typer.Option(None, "--out", help="Output directory"),
):
    """Run experiments concurrently and merge their verdicts into one CSV."""
    per_job: Dict[str, Dict[str, Any]] = {name: {} for name in names}
    for key, value in _parse_overrides(overrides).items():
        target, _, param = key.partition(".")
        if target not in per_job or not param:
            raise typer.BadParameter(f"override '{key}' does not name a swept experiment", param_hint="--set")
        per_job[target][param] = value
    with _reported():
        recorder = RunRecorder("sweep", {"experiments": names, "overrides": per_job}, out_dir=out)
        verdicts = run_sweep([(name, per_job[name]) for name in names], max_workers=workers)
        for i, verdict in enumerate(verdicts):
            recorder.add(*write_verdict(recorder.directory / f"{i:02d}_{verdict.experiment}", verdict))
            render_verdict(verdict)
        recorder.add(write_sweep_summary(recorder.path("summary.csv"), verdicts))
        recorder.finish()
    if any(v.failed for v in verdicts):
        raise typer.Exit(code=1)


@app.command("norms")
def norms_cmd(
    snapshot: Path = typer.Argument(..., help="Field snapshot"),
    s: float = typer.Option(1.0, "--s", help="Sobolev index"),
    k: Optional[int] = typer.Option(None, "--k", help="Also print I1 and I2 for this power"),
):
    """Print L2, homogeneous and inhomogeneous Sobolev and sup norms of a snapshot."""
    with _reported():
        f = read_snapshot(snapshot)
        table = Table(title=f"{snapshot.name} ({f.grid.nx}x{f.grid.ny}, t={f.time:g})")
        table.add_column("Norm", style="cyan")
        table.add_column("Value", style="magenta")
        table.add_row("L2", f"{sobolev_norm(f):.12g}")
        table.add_row(f"dot H^{s:g}", f"{sobolev_norm(f, s, homogeneous=True):.12g}")
        table.add_row(f"H^{s:g}", f"{sobolev_norm(f, s):.12g}")
        table.add_row("L^inf", f"{sup_norm(f):.12g}")
        if k is not None:
            table.add_row("I1", f"{mass(f):.12g}")
            table.add_row("I2", f"{energy(f, k):.12g}")
        console.print(table)


@app.command("version")
def version_cmd():
    console.print(f"{settings.PROJECT_NAME} {__version__}")


def main(argv: Optional[List[str]] = None) -> int:
    """Exit status: 0 on pass or report, 1 on FAIL or a library error, 2 on usage errors."""
    command = typer.main.get_command(app)
    try:
        result = command.main(args=argv, prog_name="gzk", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return 2
    except click.Abort:
        return 1
    except GZKError as e:
        console.print(f"[red]{type(e).__name__}: {e.message}[/red]")
        return 1
    # commands return their exit code; typer.Exit surfaces as an int too
    return result if isinstance(result, int) else 0


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
