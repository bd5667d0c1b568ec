"""
Mass dichotomy for the modified (k = 2) equation around m_c = sqrt(3) ||psi||.

Below the threshold the gradient is asserted bounded; at and above it the
run is only reported.
"""

from enum import Enum

import numpy as np
from pydantic import BaseModel, Field as PField

from gzk.core.exceptions import ExperimentPreconditionError
from gzk.lab.core import LabExperiment, console
from gzk.lab.registry import register_experiment
from gzk.lab.utils import decide
from gzk.models.schemas import ExperimentVerdict, Integrator, SimulationConfig
from gzk.services.evolution import critical_gradient_bound, energy, evolve
from gzk.services.ground_state import SOLWAVE_SCALE, solve_ground_state, solwave_profile
from gzk.services.spectral_core import (
    Field, GridSpec, Representation, field_from_function, gradient_norm, l2_norm, make_grid, values,
)

BOUNDED_FACTOR = 3.0
GROWTH_FACTOR = 10.0
SUBCRITICAL = 0.9
SUPERCRITICAL = 1.5


class DatumProfile(str, Enum):
    GROUND_STATE = "ground-state"
    GAUSSIAN = "gaussian"


def critical_datum(profile: DatumProfile, mass_factor: float, grid: GridSpec):
    """Datum with ||u0|| = mass_factor * m_c, and m_c measured on the same grid."""
    g = solve_ground_state(2, 1.0, grid)
    m_c = SOLWAVE_SCALE * l2_norm(solwave_profile(g))
    if DatumProfile(profile) is DatumProfile.GROUND_STATE:
        base = g.profile
    else:
        base = field_from_function(grid, lambda X, Y: np.exp(-(X ** 2 + Y ** 2)))
    u0 = Field(grid=grid, representation=Representation.PHYSICAL,
               data=values(base) * (mass_factor * m_c / l2_norm(base)))
    return u0, m_c


def critical_mass_experiment(mass_factor: float, profile: DatumProfile, T: float, grid: GridSpec,
                             dt: float = 1e-3, integrator: Integrator = Integrator.IF_RK4,
                             diagnostic_stride: int = 10) -> ExperimentVerdict:
    if not mass_factor > 0:
        raise ExperimentPreconditionError("mass_factor must be positive", {"mass_factor": mass_factor})
    with console.status("[bold blue]Measuring the critical mass..."):
        u0, m_c = critical_datum(profile, mass_factor, grid)

    I2_0 = energy(u0, 2)
    grad0 = gradient_norm(u0)
    cfg = SimulationConfig(k=2, nx=grid.nx, ny=grid.ny, Lx=grid.lx, Ly=grid.ly, T=T, dt=dt,
                           integrator=integrator, diagnostic_stride=diagnostic_stride,
                           snapshot_stride=10 ** 6)
    with console.status(f"[bold blue]Evolving {mass_factor:g} m_c ({DatumProfile(profile).value}) to T={T:g}..."):
        traj = evolve(u0, cfg)

    frame = traj.diagnostics.to_frame()
    # rows after an overflow are nan
    finite = frame[np.isfinite(frame["grad_L2"])]
    max_grad = float(finite["grad_L2"].max())
    amplification = max_grad / grad0
    measured = {
        "mass_factor": mass_factor,
        "profile": DatumProfile(profile).value,
        "critical_mass": m_c,
        "mass": l2_norm(u0),
        "I2_initial": float(I2_0),
        "grad_initial": grad0,
        "max_grad": max_grad,
        "amplification": amplification,
        "outcome": traj.outcome.value,
        "last_finite_time": traj.last_finite_time,
    }
    table = {"gradient": finite[["t", "grad_L2", "I1", "I2", "Linf"]].to_dict("records")}
    notes = []
    checks = {}

    if mass_factor <= SUBCRITICAL:
        bound = critical_gradient_bound(u0, m_c)
        measured["a_priori_gradient_sq_bound"] = float(bound)
        checks["no_blowup_signal"] = not traj.blew_up
        checks["gradient_bounded"] = amplification <= BOUNDED_FACTOR
        checks["a_priori_bound_respected"] = bool(max_grad ** 2 <= bound * (1.0 + 1e-4))
        report_only = False
    else:
        report_only = True
        if mass_factor >= SUPERCRITICAL and I2_0 >= 0:
            notes.append("I2(u0) is non-negative; the negative-energy regime is not reached")
        if traj.blew_up:
            notes.append(f"overflow detected after t = {traj.last_finite_time:.6g}")
        if amplification >= GROWTH_FACTOR:
            notes.append(f"gradient growth observed: {amplification:.3g}x amplification")
        else:
            notes.append(f"no strong gradient growth observed: {amplification:.3g}x amplification")

    return ExperimentVerdict(
        experiment="critical-mass",
        verdict=decide(checks, report_only=report_only),
        measured=measured,
        checks=checks,
        tables=table,
        notes=notes
    )


class CriticalMassParams(BaseModel):
    mass_factor: float = PField(default=0.9, gt=0)
    profile: DatumProfile = DatumProfile.GROUND_STATE
    T: float = PField(default=5.0, gt=0)
    dt: float = PField(default=1e-3, gt=0)
    n: int = 256
    box: float = 16 * np.pi
    integrator: Integrator = Integrator.IF_RK4


@register_experiment
class CriticalMassExperiment(LabExperiment):
    name = "critical-mass"
    category = "Global dynamics"
    params_model = CriticalMassParams

    def check_preconditions(self, params: CriticalMassParams) -> None:
        if params.T / params.dt > 10 ** 7:
            raise ExperimentPreconditionError("Too many time steps requested", {"T": params.T, "dt": params.dt})

    def run(self, params: CriticalMassParams) -> ExperimentVerdict:
        grid = make_grid(params.n, params.n, params.box, params.box)
        return critical_mass_experiment(params.mass_factor, params.profile, params.T, grid,
                                        params.dt, params.integrator)
