"""
Solitary-wave profiles of  -c phi + Lap phi + phi^(k+1)/(k+1) = 0.

Petviashvili iteration on the periodic grid, an independent radial shooting
oracle, the c-scaling family phi_c(x, y) = c^(1/k) phi_1(sqrt(c) x, sqrt(c) y),
and the identities behind the critical-mass threshold (k = 2).
"""

from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import integrate

from gzk.core.exceptions import ConvergenceError, DomainError, ParameterError
from gzk.core.log import get_logger
from gzk.models.schemas import GroundStateMetadata
from gzk.services.spectral_core import (
    Field, GridSpec, Representation, gradient_norm, l2_norm,
    lp_norm, spectrum, values,
)

logger = get_logger(__name__)

BOUNDARY_TOL = 1e-8
SOLWAVE_SCALE = np.sqrt(3.0)
RATIO_WINDOW = 10


def ratio_settles_monotonically(ratios: Sequence[float], window: int = RATIO_WINDOW,
                                 slack: float = 1e-14) -> bool:
    """|M_n - 1| never grows over the last `window` ratios; shorter histories pass."""
    tail = np.abs(np.asarray(ratios[-window:], dtype=float) - 1.0)
    return len(tail) < window or not np.any(np.diff(tail) > slack)


def critical_index(k: int) -> float:
    """Scale-invariant Sobolev index s_c(k) = 1 - 2/k."""
    return 1.0 - 2.0 / k


class GroundState(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    k: int
    c: float
    profile: Field
    residual: float
    mass: float
    gradient_energy: float
    potential: float
    iterations: int = 0
    ratio_history: List[float] = []

    @property
    def ratio_monotone(self) -> bool:
        return ratio_settles_monotonically(self.ratio_history)

    def metadata(self) -> GroundStateMetadata:
        return GroundStateMetadata(
            k=self.k, c=self.c, residual=self.residual, mass=self.mass,
            gradient_energy=self.gradient_energy, potential=self.potential
        )


# --- Grid symmetry helpers ---

def _negate_index(n: int) -> np.ndarray:
    # x_j -> -x_j on the centred periodic grid
    return (-np.arange(n)) % n


def rotate_quarter(u: np.ndarray) -> np.ndarray:
    """u(-y, x) sampled on a square centred grid."""
    return u.T[:, _negate_index(u.shape[0])]


def radial_asymmetry(f: Field) -> float:
    u = values(f)
    if u.shape[0] != u.shape[1] or f.grid.lx != f.grid.ly:
        raise ParameterError("Rotation symmetry needs a square grid")
    return float(np.max(np.abs(rotate_quarter(u) - u)) / max(np.max(np.abs(u)), 1e-300))


def _symmetrize(u: np.ndarray) -> np.ndarray:
    """Average over the eight symmetries of the square lattice."""
    n = u.shape[0]
    neg = _negate_index(n)
    images = []
    for v in (u, u.T):
        images.extend([v, v[neg, :], v[:, neg], v[neg][:, neg]])
    return sum(images) / 8.0


def boundary_ratio(f: Field) -> float:
    """max |f| on the box edge relative to max |f|."""
    u = np.abs(values(f))
    edge = max(u[0, :].max(), u[:, 0].max())
    return float(edge / max(u.max(), 1e-300))


# --- Functionals ---

def elliptic_residual(profile: Field, k: int, c: float) -> float:
    """L2 norm of -c phi + Lap phi + phi^(k+1)/(k+1), evaluated spectrally."""
    grid = profile.grid
    phi_hat = spectrum(profile)
    power = values(profile) ** (k + 1) / (k + 1)
    N_hat = spectrum(Field(grid=grid, representation=Representation.PHYSICAL, data=power))
    r_hat = N_hat - (c + grid.k_squared) * phi_hat
    return float(np.sqrt(np.sum(np.abs(r_hat) ** 2) / grid.area))


def _build(profile: Field, k: int, c: float, iterations: int = 0,
           ratio_history: Optional[List[float]] = None) -> GroundState:
    return GroundState(
        k=k,
        c=c,
        profile=profile,
        residual=elliptic_residual(profile, k, c),
        mass=l2_norm(profile) ** 2,
        gradient_energy=gradient_norm(profile) ** 2,
        potential=lp_norm(profile, k + 2) ** (k + 2),
        iterations=iterations,
        ratio_history=ratio_history or []
    )


# --- Petviashvili solver ---

def solve_ground_state(k: int, c: float, grid: GridSpec, tol: float = 1e-11,
                       max_iter: int = 2000, symmetrize: bool = False) -> GroundState:
    """
    Petviashvili fixed point
        phi_hat <- M^gamma * N_hat / (c + |k|^2),   N = phi^(k+1)/(k+1),
        M = <(c + |k|^2) phi_hat, phi_hat> / <N_hat, phi_hat>,  gamma = (k+1)/k,
    seeded with a unit-height Gaussian of width 2. Stops when successive
    iterates differ by less than `tol` in L2.
    """
    if k < 1:
        raise ParameterError(f"Nonlinearity power must be >= 1, got {k}", {"k": k})
    if not c > 0:
        raise ParameterError(f"Wave speed must be positive, got {c}", {"c": c})
    if symmetrize and (grid.nx != grid.ny or grid.lx != grid.ly):
        raise ParameterError("Symmetrization needs a square grid")

    gamma = (k + 1.0) / k
    symbol = c + grid.k_squared
    X, Y = grid.mesh()
    phi = np.exp(-(X ** 2 + Y ** 2) / 4.0)
    phi_hat = spectrum(Field(grid=grid, representation=Representation.PHYSICAL, data=phi))
    ratios: List[float] = []

    for it in range(1, max_iter + 1):
        N = phi ** (k + 1) / (k + 1)
        N_hat = spectrum(Field(grid=grid, representation=Representation.PHYSICAL, data=N))
        num = np.sum(symbol * np.abs(phi_hat) ** 2).real
        den = np.sum(N_hat * np.conj(phi_hat)).real
        if not (den > 0 and np.isfinite(num)) or num / den > 1e12:
            raise ConvergenceError(
                "Petviashvili iteration collapsed (normalization ratio diverged)",
                {"iteration": it, "numerator": float(num), "denominator": float(den)}
            )
        M = num / den
        ratios.append(float(M))

        new_hat = M ** gamma * N_hat / symbol
        new_phi = values(Field(grid=grid, representation=Representation.SPECTRAL, data=new_hat))
        if symmetrize:
            new_phi = _symmetrize(new_phi)
            new_hat = spectrum(Field(grid=grid, representation=Representation.PHYSICAL, data=new_phi))
        if not np.all(np.isfinite(new_phi)) or np.max(np.abs(new_phi)) < 1e-12:
            raise ConvergenceError("Petviashvili iterate collapsed to zero", {"iteration": it})

        step = np.sqrt(np.sum((new_phi - phi) ** 2) * grid.dx * grid.dy)
        phi, phi_hat = new_phi, new_hat
        logger.debug(f"petviashvili it={it} M={M:.15f} step={step:.3e}")
        if step < tol and elliptic_residual(Field(grid=grid, representation=Representation.PHYSICAL, data=phi), k, c) <= tol:
            break
    else:
        raise ConvergenceError(
            f"Petviashvili iteration did not converge in {max_iter} iterations",
            {"k": k, "c": c, "last_step": float(step)}
        )

    if not ratio_settles_monotonically(ratios):
        tail = [abs(m - 1.0) for m in ratios[-RATIO_WINDOW:]]
        logger.warning(f"normalization ratio not monotone over the final iterations: |M - 1| = {tail}")

    profile = Field(grid=grid, representation=Representation.PHYSICAL, data=phi)
    if boundary_ratio(profile) > BOUNDARY_TOL:
        raise DomainError(
            "Box too small: ground state does not decay to the boundary",
            {"boundary_ratio": boundary_ratio(profile), "Lx": grid.lx, "c": c}
        )
    state = _build(profile, k, c, it, ratios)
    logger.info(f"ground state k={k} c={c:g}: {it} iterations, residual={state.residual:.2e}, mass={state.mass:.10g}")
    return state


# --- c-scaling family ---

def fwhm(f: Field) -> float:
    """Full width at half maximum along the x-axis through the peak."""
    u = values(f)
    i, j = np.unravel_index(np.argmax(u), u.shape)
    row = u[:, j]
    return float(np.count_nonzero(row >= 0.5 * row[i]) * f.grid.dx)


def _interpolation_matrix(source_k: np.ndarray, source_origin: float, points: np.ndarray) -> np.ndarray:
    return np.exp(1j * np.outer(points - source_origin, source_k))


def rescale_ground_state(phi1: GroundState, c: float, target_grid: Optional[GridSpec] = None) -> GroundState:
    """
    phi_c(x, y) = c^(1/k) phi_1(sqrt(c) x, sqrt(c) y) by evaluating the
    trigonometric interpolant of phi_1 at the scaled points of the target grid.
    """
    if not c > 0:
        raise ParameterError(f"Wave speed must be positive, got {c}", {"c": c})
    if phi1.c != 1.0:
        raise ParameterError("rescale_ground_state expects a c = 1 source", {"c": phi1.c})
    src = phi1.profile.grid
    grid = target_grid or src
    if c == 1.0 and grid == src:
        return phi1

    width = fwhm(phi1.profile) / np.sqrt(c)
    if width < 4.0 * max(grid.dx, grid.dy):
        raise DomainError(
            "Rescaled profile aliases on the target grid",
            {"width": width, "dx": grid.dx, "c": c}
        )

    F = np.array(spectrum(phi1.profile))
    F[src.nx // 2, :] = 0.0
    F[:, src.ny // 2] = 0.0
    Ex = _interpolation_matrix(src.xi, src.x[0], np.sqrt(c) * grid.x)
    Ey = _interpolation_matrix(src.eta, src.y[0], np.sqrt(c) * grid.y)
    phi = (Ex @ F @ Ey.T).real / src.area * c ** (1.0 / phi1.k)

    profile = Field(grid=grid, representation=Representation.PHYSICAL, data=phi)
    if boundary_ratio(profile) > BOUNDARY_TOL:
        raise DomainError(
            "Rescaled profile does not decay within the box",
            {"boundary_ratio": boundary_ratio(profile), "c": c}
        )
    return _build(profile, phi1.k, c)


def family_norm_exponent(k: int, s: float) -> float:
    """||phi_c||_{dot H^s} = c^(1/k - 1/2 + s/2) ||phi_1||_{dot H^s}."""
    return 1.0 / k - 0.5 + 0.5 * s


def scaled_grid(grid: GridSpec, c: float) -> GridSpec:
    """Same resolution, box shrunk by sqrt(c): phi_c is sampled at phi_1's points."""
    return GridSpec(nx=grid.nx, ny=grid.ny, lx=grid.lx / np.sqrt(c), ly=grid.ly / np.sqrt(c))


# --- k = 2 identities and the critical mass ---

def solwave_profile(g: GroundState) -> Field:
    """psi = phi / sqrt(3) solves -Lap psi + psi - psi^3 = 0 when phi is the k=2, c=1 ground state."""
    if g.k != 2 or g.c != 1.0:
        raise ParameterError("The sqrt(3) map needs k = 2, c = 1", {"k": g.k, "c": g.c})
    return g.profile.with_data(values(g.profile) / SOLWAVE_SCALE, Representation.PHYSICAL)


class PohozaevReport(BaseModel):
    mass: float               # int psi^2
    gradient: float           # int |grad psi|^2
    quartic: float            # int psi^4
    mass_identity_error: float
    gradient_identity_error: float
    sharp_gn_error: float

    @property
    def max_error(self) -> float:
        return max(self.mass_identity_error, self.gradient_identity_error, self.sharp_gn_error)


def pohozaev_check(g: GroundState, tol: float = 1e-9) -> PohozaevReport:
    """
    For psi = phi/sqrt(3): int psi^2 = int psi^4 / 2 and int |grad psi|^2 = int psi^4 / 2,
    hence the sharp Gagliardo-Nirenberg equality (1/6) int psi^4 = (1/3) int |grad psi|^2.
    """
    if g.mass <= 0 or not np.isfinite(g.mass):
        raise ParameterError("pohozaev_check needs a nonzero profile")
    if g.residual > tol * max(1.0, np.sqrt(g.mass)):
        raise ConvergenceError("pohozaev_check needs a converged ground state", {"residual": g.residual})
    psi = solwave_profile(g)
    A = l2_norm(psi) ** 2
    B = gradient_norm(psi) ** 2
    C = lp_norm(psi, 4) ** 4
    return PohozaevReport(
        mass=A,
        gradient=B,
        quartic=C,
        mass_identity_error=abs(A - 0.5 * C) / A,
        gradient_identity_error=abs(B - 0.5 * C) / B,
        sharp_gn_error=abs(C / 6.0 - B / 3.0) / (B / 3.0)
    )


def critical_mass(grid: GridSpec, tol: float = 1e-11) -> float:
    """sqrt(3) ||psi||_{L2}, i.e. the L2 norm of the k=2, c=1 ground state."""
    g = solve_ground_state(2, 1.0, grid, tol=tol)
    return SOLWAVE_SCALE * l2_norm(solwave_profile(g))


def gagliardo_nirenberg_ratio(u: Field, k: int) -> float:
    """||u||_{L^(k+2)}^(k+2) / (||u||_{L2}^2 ||grad u||_{L2}^k); zero for the zero field."""
    a = l2_norm(u)
    b = gradient_norm(u)
    if a == 0 or b == 0:
        return 0.0
    return lp_norm(u, k + 2) ** (k + 2) / (a ** 2 * b ** k)


def sharp_gn_constant(g: GroundState) -> float:
    """Best cubic constant 2 / ||psi||_{L2}^2."""
    return 2.0 / l2_norm(solwave_profile(g)) ** 2


def measured_decay_rate(g: GroundState, upper: float = 1e-3, lower: float = 1e-9) -> float:
    """Slope of log(sqrt(r) phi) against r along the positive x-axis where phi/max lies in [lower, upper]."""
    u = values(g.profile)
    grid = g.profile.grid
    i, j = np.unravel_index(np.argmax(u), u.shape)
    r = grid.x[i:] - grid.x[i]
    row = u[i:, j] / u[i, j]
    sel = (row <= upper) & (row >= lower) & (r > 0)
    if np.count_nonzero(sel) < 3:
        raise DomainError("Not enough decaying samples to fit the tail", {"samples": int(np.count_nonzero(sel))})
    slope, _ = np.polyfit(r[sel], np.log(row[sel] * np.sqrt(r[sel])), 1)
    return float(-slope)


# --- Radial shooting oracle ---

class ShootingResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    k: int
    c: float
    phi0: float
    r: np.ndarray
    profile: np.ndarray
    mass: float


def _radial_rhs(k: int, c: float):
    def rhs(r, y):
        phi, dphi = y
        return [dphi, -dphi / r + c * phi - phi ** (k + 1) / (k + 1)]
    return rhs


def _shoot(k: int, c: float, a: float, r0: float, r_max: float):
    curvature = (c * a - a ** (k + 1) / (k + 1)) / 2.0
    y0 = [a + 0.5 * curvature * r0 ** 2, curvature * r0]

    def crosses_zero(r, y):
        return y[0]
    crosses_zero.terminal = True
    crosses_zero.direction = -1

    def turns_up(r, y):
        return y[1]
    turns_up.terminal = True
    turns_up.direction = 1

    sol = integrate.solve_ivp(
        _radial_rhs(k, c), (r0, r_max), y0, method="DOP853",
        events=(crosses_zero, turns_up), rtol=1e-12, atol=1e-14, dense_output=True
    )
    if sol.t_events[0].size:
        return "overshoot", sol
    if sol.t_events[1].size:
        return "undershoot", sol
    return "converged", sol


def shooting_ground_state(k: int, c: float = 1.0, r_max: Optional[float] = None,
                          r0: float = 1e-6, iterations: int = 200) -> ShootingResult:
    """
    phi'' + phi'/r - c phi + phi^(k+1)/(k+1) = 0, phi'(0) = 0, phi -> 0.
    Bisection on phi(0): a zero crossing means phi(0) is too large, phi'
    turning positive means it is too small. Mass is 2 pi int phi^2 r dr up to
    the last undershoot's turning point.
    """
    if k < 1 or not c > 0:
        raise ParameterError("Shooting needs k >= 1 and c > 0", {"k": k, "c": c})
    r_max = r_max or 40.0 / np.sqrt(c)
    lo = ((k + 1) * c) ** (1.0 / k) * (1.0 + 1e-9)
    hi = 2.0 * lo
    while _shoot(k, c, hi, r0, r_max)[0] != "overshoot":
        hi *= 2.0
        if hi > 1e6:
            raise ConvergenceError("Shooting could not bracket phi(0)")

    best = None
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        kind, sol = _shoot(k, c, mid, r0, r_max)
        if kind == "overshoot":
            hi = mid
        else:
            lo = mid
            best = sol
        if hi - lo <= 1e-15 * hi:
            break
    if best is None:
        best = _shoot(k, c, lo, r0, r_max)[1]

    r_end = best.t_events[1][0] if best.t_events[1].size else best.t[-1]
    r = np.linspace(r0, r_end, 40001)
    phi = best.sol(r)[0]
    mass = 2.0 * np.pi * integrate.simpson(phi ** 2 * r, x=r) + np.pi * lo ** 2 * r0 ** 2
    logger.info(f"shooting k={k} c={c:g}: phi(0)={lo:.12f} mass={mass:.10g}")
    return ShootingResult(k=k, c=c, phi0=lo, r=r, profile=phi, mass=float(mass))
