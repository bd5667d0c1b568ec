"""
Flow-map separation for k >= 3 with soliton pairs of speeds m+1 and m.

Both profiles come from one c = 1 ground state rescaled onto the experiment
grid, and their evolutions are the exact translates phi_c(x - c t, y).
"""

from typing import List, Sequence

import numpy as np
from pydantic import BaseModel, Field as PField, field_validator

from gzk.core.exceptions import DomainError, ExperimentPreconditionError
from gzk.lab.core import LabExperiment, console
from gzk.lab.registry import register_experiment
from gzk.lab.utils import decide
from gzk.models.schemas import ExperimentVerdict
from gzk.services.evolution import traveling_wave
from gzk.services.ground_state import critical_index, rescale_ground_state, solve_ground_state
from gzk.services.spectral_core import Field, GridSpec, Representation, make_grid, sobolev_inner, sobolev_norm, spectrum

SEPARATION_BAND = 0.05
INNER_DECAY_FACTOR = 3.0


def _difference(a: Field, b: Field) -> Field:
    return Field(grid=a.grid, representation=Representation.SPECTRAL, data=spectrum(a) - spectrum(b), time=a.time)


def check_resolvable(m_list: Sequence[int], grid: GridSpec) -> None:
    """A unit-speed profile has FWHM close to 2; phi_c narrows like 1/sqrt(c)."""
    if not m_list:
        raise ExperimentPreconditionError("m_list is empty")
    c_max = max(m_list) + 1
    width = 2.0 / np.sqrt(c_max)
    if width < 4.0 * max(grid.dx, grid.dy):
        raise ExperimentPreconditionError(
            "Soliton of the largest speed is not resolvable on the grid",
            {"c": c_max, "estimated_width": width, "dx": grid.dx}
        )


def illposed_experiment(k: int, m_list: Sequence[int], t: float, source_grid: GridSpec,
                        grid: GridSpec) -> ExperimentVerdict:
    if k < 3:
        raise ExperimentPreconditionError("Ill-posedness experiment needs k >= 3", {"k": k})
    m_list = sorted(m_list)
    check_resolvable(m_list, grid)

    s_c = critical_index(k)
    try:
        with console.status(f"[bold blue]Solving the k={k} ground state..."):
            phi1 = solve_ground_state(k, 1.0, source_grid)
    except DomainError as e:
        raise ExperimentPreconditionError(f"Source box {source_grid.lx:.4g} too small: {e.message}", e.details)
    a0 = sobolev_norm(phi1.profile, s_c, homogeneous=True)
    target = np.sqrt(2.0) * a0

    rows = []
    for m in m_list:
        # Step 1: both profiles from the one c = 1 solve
        try:
            p1 = rescale_ground_state(phi1, m + 1.0, grid)
            p2 = rescale_ground_state(phi1, float(m), grid)
        except DomainError as e:
            raise ExperimentPreconditionError(f"Soliton pair for m={m} not resolvable: {e.message}", e.details)
        delta0 = sobolev_norm(_difference(p1.profile, p2.profile), s_c, homogeneous=True)
        # Step 2: exact translates, nothing is time-stepped
        u1 = traveling_wave(p1.profile, m + 1.0, t)
        u2 = traveling_wave(p2.profile, float(m), t)
        delta_t = sobolev_norm(_difference(u1, u2), s_c, homogeneous=True)
        rows.append({
            "m": m,
            "delta0": delta0,
            "inner_t": sobolev_inner(u1, u2, s_c, homogeneous=True),
            "delta_t": delta_t,
            "delta_t_over_target": delta_t / target,
            "norm_c1": sobolev_norm(p1.profile, s_c, homogeneous=True),
        })

    deltas = [r["delta0"] for r in rows]
    last = rows[-1]
    checks = {
        "delta0_strictly_decreasing": all(b < a for a, b in zip(deltas, deltas[1:])),
        "terminal_separation_near_sqrt2_a0": abs(last["delta_t_over_target"] - 1.0) <= SEPARATION_BAND,
    }
    if len(rows) > 1:
        first_inner, last_inner = abs(rows[0]["inner_t"]), abs(last["inner_t"])
        checks["inner_product_decay"] = last_inner * INNER_DECAY_FACTOR <= first_inner
    return ExperimentVerdict(
        experiment="illposed",
        verdict=decide(checks),
        measured={"k": k, "t": t, "s_c": s_c, "a0": a0, "sqrt2_a0": target,
                  "ground_state_residual": phi1.residual},
        checks=checks,
        tables={"separation": rows}
    )


class IllposedParams(BaseModel):
    k: int = PField(default=3, ge=3)
    m_list: List[int] = [4, 8, 16]
    t: float = PField(default=1.0, ge=0)
    source_n: int = 512
    source_box: float = 32 * np.pi
    n: int = 1024
    box: float = 12 * np.pi

    @field_validator("m_list")
    @classmethod
    def _positive(cls, v: List[int]) -> List[int]:
        if not v or min(v) < 1:
            raise ValueError("m_list needs positive integers")
        return v


@register_experiment
class IllposedExperiment(LabExperiment):
    name = "illposed"
    category = "Flow map"
    params_model = IllposedParams

    def check_preconditions(self, params: IllposedParams) -> None:
        check_resolvable(params.m_list, make_grid(params.n, params.n, params.box, params.box))

    def run(self, params: IllposedParams) -> ExperimentVerdict:
        return illposed_experiment(
            params.k, params.m_list, params.t,
            make_grid(params.source_n, params.source_n, params.source_box, params.source_box),
            make_grid(params.n, params.n, params.box, params.box)
        )
