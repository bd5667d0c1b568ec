"""
Scaling symmetry u_lam(x, y, t) = lam^(2/k) u(lam x, lam y, lam^3 t).

The refined grid G_lam has the same resolution and a box shrunk by lam, so
the rescaled datum is the same sample array times lam^(2/k) and both
evolutions take the same number of steps.
"""

from typing import List, Sequence

import numpy as np
from pydantic import BaseModel, Field as PField, field_validator

from gzk.core.exceptions import ExperimentPreconditionError
from gzk.lab.core import LabExperiment, console
from gzk.lab.registry import register_experiment
from gzk.lab.utils import decide
from gzk.models.schemas import ExperimentVerdict, Integrator, SimulationConfig
from gzk.services.evolution import evolve
from gzk.services.ground_state import boundary_ratio
from gzk.services.spectral_core import (
    Field, GridSpec, Representation, field_from_function, make_grid, sobolev_norm, values,
)

STATIC_TOL = 1e-10
DYNAMIC_TOL = 1e-4


def refined_grid(grid: GridSpec, lam: float) -> GridSpec:
    return make_grid(grid.nx, grid.ny, grid.lx / lam, grid.ly / lam)


def rescale_datum(u0: Field, k: int, lam: float) -> Field:
    """lam^(2/k) u0(lam x, lam y) on the refined grid."""
    return Field(grid=refined_grid(u0.grid, lam), representation=Representation.PHYSICAL,
                 data=lam ** (2.0 / k) * values(u0), time=u0.time)


def static_ratio(k: int, lam: float, s: float) -> float:
    return lam ** (2.0 / k + s - 1.0)


def scaling_experiment(k: int, lam: int, u0: Field, t: float, dt: float = 1e-3,
                       sobolev: Sequence[float] = (0.0, 0.5, 1.0),
                       integrator: Integrator = Integrator.IF_RK4) -> ExperimentVerdict:
    if lam != 2:
        raise ExperimentPreconditionError("Scaling experiment supports lam = 2 only", {"lam": lam})
    if boundary_ratio(u0) > 1e-8:
        raise ExperimentPreconditionError(
            "Datum does not decay inside the refined box; grids would not represent it",
            {"boundary_ratio": boundary_ratio(u0)}
        )

    u_lam = rescale_datum(u0, k, lam)

    static_rows = []
    static_ok = True
    for s in sobolev:
        measured = sobolev_norm(u_lam, s, homogeneous=True) / sobolev_norm(u0, s, homogeneous=True)
        expected = static_ratio(k, lam, s)
        err = abs(measured - expected) / expected
        static_ok &= err <= STATIC_TOL
        static_rows.append({"s": s, "measured": measured, "expected": expected, "rel_error": err})

    g, g_lam = u0.grid, u_lam.grid
    cfg = SimulationConfig(k=k, nx=g.nx, ny=g.ny, Lx=g.lx, Ly=g.ly, T=t, dt=dt,
                           integrator=integrator, snapshot_stride=10 ** 6, diagnostic_stride=10 ** 6)
    scale = float(lam) ** 3
    cfg_lam = cfg.model_copy(update={"Lx": g_lam.lx, "Ly": g_lam.ly, "T": t / scale, "dt": dt / scale})

    with console.status("[bold blue]Evolving on G and G_lam..."):
        base = evolve(u0, cfg)
        refined = evolve(u_lam, cfg_lam)

    expected_field = lam ** (2.0 / k) * values(base.final)
    dyn_err = float(np.linalg.norm(values(refined.final) - expected_field) / np.linalg.norm(expected_field))
    checks = {
        "static_norm_law": bool(static_ok),
        "dynamic_covariance": dyn_err <= DYNAMIC_TOL,
    }
    return ExperimentVerdict(
        experiment="scaling",
        verdict=decide(checks),
        measured={"k": k, "lam": lam, "t": t, "dynamic_rel_error": dyn_err, "steps": base.steps},
        checks=checks,
        tables={"static_ratios": static_rows}
    )


class ScalingParams(BaseModel):
    k: int = PField(default=2, ge=1)
    lam: int = 2
    n: int = 64
    box: float = 20.0
    amplitude: float = 0.5
    t: float = 0.25
    dt: float = 1e-3
    sobolev: List[float] = [0.0, 0.5, 1.0]
    integrator: Integrator = Integrator.IF_RK4

    @field_validator("lam")
    @classmethod
    def _only_two(cls, v: int) -> int:
        if v != 2:
            raise ValueError("lam must be 2")
        return v


@register_experiment
class ScalingExperiment(LabExperiment):
    name = "scaling"
    category = "Symmetries"
    params_model = ScalingParams

    def run(self, params: ScalingParams) -> ExperimentVerdict:
        grid = make_grid(params.n, params.n, params.box, params.box)
        u0 = field_from_function(grid, lambda X, Y: params.amplitude * np.exp(-(X ** 2 + Y ** 2)))
        return scaling_experiment(params.k, params.lam, u0, params.t, params.dt,
                                  params.sobolev, params.integrator)
