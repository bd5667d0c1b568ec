"""
Exact linear group U(t) of u_t + d_x Lap u = 0, Duhamel quadrature against
it, and seeded empirical probes of the smoothing, Strichartz and maximal
function estimates.

U(t) multiplies the spectrum by exp(i t omega) with omega = xi^3 + xi eta^2.
"""

from enum import Enum
from functools import lru_cache
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import integrate

from gzk.core.config import settings
from gzk.core.exceptions import ParameterError
from gzk.core.log import get_logger
from gzk.models.schemas import ProbeSample, ProbeSummary
from gzk.services.spectral_core import (
    Axis, Field, GridSpec, MixedOrder, Representation, apply_multiplier,
    fractional_derivative, fractional_symbol, l2_norm, mixed_norm, random_band_limited, sobolev_norm,
    spectrum, values,
)

logger = get_logger(__name__)


class DispersionSymbol(BaseModel):
    """omega(xi, eta) = xi^3 + xi eta^2 on one grid's lattice."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: GridSpec
    omega: np.ndarray

    def propagator(self, t: float) -> np.ndarray:
        return np.exp(1j * t * self.omega)


@lru_cache(maxsize=32)
def dispersion_symbol(grid: GridSpec) -> DispersionSymbol:
    # Nyquist x-column dropped so omega stays odd on the discrete lattice
    xi, eta = grid.KX_odd, grid.KY
    omega = xi ** 3 + xi * eta ** 2
    omega.flags.writeable = False
    return DispersionSymbol(grid=grid, omega=omega)


def apply_group(f: Field, t: float) -> Field:
    """U(t) f, in f's representation. Any real t (group, not semigroup)."""
    return apply_multiplier(f, dispersion_symbol(f.grid).propagator(t))


class Quadrature(str, Enum):
    TRAPEZOID = "trapezoid"
    SIMPSON = "simpson"


def duhamel(force: Sequence[Field], times: Optional[Sequence[float]] = None,
            quadrature: Quadrature = Quadrature.SIMPSON) -> Field:
    """
    z(T) = int_0^T U(T - t') F(t') dt' over the sampled forcing, T the last sample time.

    The integrand is formed spectrally and integrated along the time axis with
    scipy's trapezoid or Simpson rule. Result is spectral, stamped at time T.
    """
    if len(force) < 3:
        raise ParameterError("duhamel needs at least 3 time samples", {"samples": len(force)})
    t = np.asarray(times if times is not None else [f.time for f in force], dtype=float)
    if len(t) != len(force):
        raise ParameterError("times and force samples differ in length")
    steps = np.diff(t)
    if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise ParameterError("duhamel needs uniform, increasing time samples")

    grid = force[0].grid
    omega = dispersion_symbol(grid).omega
    T = t[-1]
    stack = np.stack([spectrum(F) for F in force])
    integrand = stack * np.exp(1j * (T - t)[:, None, None] * omega[None, :, :])
    if Quadrature(quadrature) is Quadrature.SIMPSON:
        z = integrate.simpson(integrand, x=t, axis=0)
    else:
        z = integrate.trapezoid(integrand, x=t, axis=0)
    return Field(grid=grid, representation=Representation.SPECTRAL, data=z, time=float(T))


# --- Linear-estimate probes ---

class ProbeKind(str, Enum):
    SMOOTHING = "smoothing"
    STRICHARTZ = "strichartz"
    MAXIMAL_L4 = "maximal_L4"
    MAXIMAL_L2 = "maximal_L2"
    MAXIMAL_L4_SOBOLEV = "maximal_L4_sobolev"
    SUP_NORM_GAIN = "sup_norm_gain"


class ProbeSpec(BaseModel):
    """
    One estimate to probe. Parameters used per kind:
      smoothing           ||d_x U f||_{L^inf_x L^2_yT}          vs ||f||_{L2}
      strichartz          ||D_x^{theta eps/2} U f||_{L^q_T L^p_xy} vs ||f||_{L2},
                          p = 2/(1-theta), 2/q = theta(2+eps)/3
      maximal_L4          ||U f||_{L^4_x L^inf_yT}               vs ||(1+|xi|)^s1 (1+|eta|)^r1 f_hat||
      maximal_L2          ||U f||_{L^2_x L^inf_yT}               vs ||f||_{H^s}
      maximal_L4_sobolev  ||U f||_{L^4_x L^inf_yT}               vs ||f||_{H^s}
      sup_norm_gain       ||U f||_{L^{12/5}_T L^inf_xy}          vs ||D_x^{-eps/2} f||_{L2}
    """
    kind: ProbeKind
    theta: float = 0.0
    eps: float = 0.0
    s1: float = 0.3
    r1: float = 0.6
    s: float = 0.8

    def validate_ranges(self) -> None:
        kind = self.kind
        if kind is ProbeKind.STRICHARTZ:
            if not (0.0 <= self.eps < 0.5 and 0.0 <= self.theta <= 1.0):
                raise ParameterError("strichartz needs 0 <= eps < 1/2 and 0 <= theta <= 1",
                                     {"theta": self.theta, "eps": self.eps})
        elif kind is ProbeKind.MAXIMAL_L4:
            if not (self.s1 > 0.25 and self.r1 > 0.5):
                raise ParameterError("maximal_L4 needs s1 > 1/4 and r1 > 1/2",
                                     {"s1": self.s1, "r1": self.r1})
        elif kind in (ProbeKind.MAXIMAL_L2, ProbeKind.MAXIMAL_L4_SOBOLEV):
            if not self.s > 0.75:
                raise ParameterError(f"{kind.value} needs s > 3/4", {"s": self.s})
        elif kind is ProbeKind.SUP_NORM_GAIN:
            if not 0.0 <= self.eps < 0.5:
                raise ParameterError("sup_norm_gain needs 0 <= eps < 1/2", {"eps": self.eps})

    @property
    def label(self) -> str:
        k = self.kind
        if k is ProbeKind.STRICHARTZ:
            return f"strichartz(theta={self.theta:g},eps={self.eps:g})"
        if k is ProbeKind.MAXIMAL_L4:
            return f"maximal_L4(s1={self.s1:g},r1={self.r1:g})"
        if k in (ProbeKind.MAXIMAL_L2, ProbeKind.MAXIMAL_L4_SOBOLEV):
            return f"{k.value}(s={self.s:g})"
        if k is ProbeKind.SUP_NORM_GAIN:
            return f"sup_norm_gain(eps={self.eps:g})"
        return k.value


def linear_trace(f: Field, T: float, n_times: int, symbol: Optional[np.ndarray] = None) -> List[Field]:
    """Samples of (multiplier) U(t) f at t_i = i T / n_times, i < n_times, as physical Fields."""
    base = spectrum(f) if symbol is None else spectrum(f) * symbol
    omega = dispersion_symbol(f.grid).omega
    dt = T / n_times
    trace = []
    for i in range(n_times):
        g = Field(grid=f.grid, representation=Representation.SPECTRAL,
                  data=base * np.exp(1j * i * dt * omega), time=i * dt)
        trace.append(Field(grid=f.grid, representation=Representation.PHYSICAL,
                           data=values(g), time=i * dt))
    return trace


def probe_ratio(spec: ProbeSpec, f: Field, T: float, n_times: int = 32) -> float:
    """LHS / RHS of one estimate for one datum."""
    grid = f.grid
    kind = spec.kind
    dt = T / n_times

    if kind is ProbeKind.SMOOTHING:
        # one full x-derivative, sup over x
        trace = linear_trace(f, T, n_times, 1j * grid.KX_odd)
        lhs = mixed_norm(trace, np.inf, 2.0, order=MixedOrder.X_YT, dt=dt)
        rhs = l2_norm(f)
    elif kind is ProbeKind.STRICHARTZ:
        p_space = np.inf if spec.theta == 1.0 else 2.0 / (1.0 - spec.theta)
        q_time = np.inf if spec.theta == 0.0 else 6.0 / (spec.theta * (2.0 + spec.eps))
        symbol = fractional_symbol(grid, spec.theta * spec.eps / 2.0, Axis.X)
        trace = linear_trace(f, T, n_times, symbol)
        lhs = mixed_norm(trace, q_time, p_space, order=MixedOrder.T_XY, dt=dt)
        rhs = l2_norm(f)
    elif kind in (ProbeKind.MAXIMAL_L4, ProbeKind.MAXIMAL_L4_SOBOLEV, ProbeKind.MAXIMAL_L2):
        trace = linear_trace(f, T, n_times)
        p = 2.0 if kind is ProbeKind.MAXIMAL_L2 else 4.0
        # sup over y and t inside, L^p in x outside
        lhs = mixed_norm(trace, p, np.inf, order=MixedOrder.X_YT, dt=dt)
        if kind is ProbeKind.MAXIMAL_L4:
            weight = (1.0 + np.abs(grid.KX)) ** spec.s1 * (1.0 + np.abs(grid.KY)) ** spec.r1
            rhs = float(np.sqrt(np.sum(np.abs(weight * spectrum(f)) ** 2) / grid.area))
        else:
            rhs = sobolev_norm(f, spec.s)
    else:  # sup_norm_gain
        trace = linear_trace(f, T, n_times)
        lhs = mixed_norm(trace, 12.0 / 5.0, np.inf, order=MixedOrder.T_XY, dt=dt)
        rhs = l2_norm(fractional_derivative(f, -spec.eps / 2.0, Axis.X))

    if not rhs > 0:
        raise ParameterError("probe datum has vanishing reference norm", {"kind": kind.value})
    return lhs / rhs


def estimate_probe(spec: ProbeSpec, grid: GridSpec, T: float, count: Optional[int] = None,
                   seed: Optional[int] = None, band: int = 16, n_times: int = 32) -> ProbeSummary:
    """
    Ratio statistics of one estimate over a seeded ensemble of band-limited
    random fields (sample i uses seed + i).
    """
    count = settings.PROBE_SAMPLES if count is None else count
    seed = settings.DEFAULT_SEED if seed is None else seed
    if not 0.0 < T <= 1.0:
        raise ParameterError(f"Probe horizon must lie in (0, 1], got {T}", {"T": T})
    if count < 10:
        raise ParameterError(f"Probe needs at least 10 samples, got {count}", {"count": count})
    spec.validate_ranges()

    grid_label = f"{grid.nx}x{grid.ny}"
    samples = []
    for i in range(count):
        f = random_band_limited(grid, seed + i, band=band)
        ratio = probe_ratio(spec, f, T, n_times)
        samples.append(ProbeSample(kind=spec.label, sample_seed=seed + i, ratio=ratio,
                                   grid=grid_label, T=T))
        logger.debug(f"probe {spec.label} seed={seed + i} ratio={ratio:.6g}")

    ratios = np.array([s.ratio for s in samples])
    summary = ProbeSummary(
        kind=spec.label,
        grid=grid_label,
        T=T,
        max_ratio=float(ratios.max()),
        mean_ratio=float(ratios.mean()),
        samples=samples
    )
    logger.info(f"probe {spec.label} on {grid_label}: max={summary.max_ratio:.4g} mean={summary.mean_ratio:.4g}")
    return summary
