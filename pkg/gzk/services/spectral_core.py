"""
Spectral substrate for the laboratory.

Periodic 2D grid, Field values in physical or spectral representation,
Fourier multipliers, Sobolev and mixed space-time norms, and the sharp
low/high frequency split.

Transform normalization (used everywhere):
    F_hat[j, l] = dx * dy * sum_{m,n} f[m, n] exp(-i (xi_j x_m + eta_l y_n))
so that F_hat(0,0) = integral of f and
    ||f||_{L2}^2 = sum |f|^2 dx dy = (1 / (Lx Ly)) sum |F_hat|^2.
Arrays are indexed [x, y] and spectra are stored in unshifted FFT order.
"""

from enum import Enum
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.fft as sfft
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from gzk.core.config import settings
from gzk.core.exceptions import GridError, ParameterError, RepresentationError

REALITY_TOL = 1e-12


class Representation(str, Enum):
    PHYSICAL = "physical"
    SPECTRAL = "spectral"


class Axis(str, Enum):
    X = "x"
    Y = "y"


class CutoffSet(str, Enum):
    FULL = "full"   # |(xi, eta)| < N
    X = "x"         # |xi| < N


class MixedOrder(str, Enum):
    X_Y_T = "x->y->T"
    T_XY = "T->xy"
    X_YT = "x->yT"


class Envelope(str, Enum):
    BESSEL = "bessel"            # (1+|k|^2)^{-(s+1)/2}
    HOMOGENEOUS = "homogeneous"  # |k|^{-s} (1+|k|^2)^{-1/2}, zero mode removed


# --- Grid ---

class GridSpec(BaseModel):
    """
    Immutable periodic grid on the box [-Lx/2, Lx/2) x [-Ly/2, Ly/2).

    Wavenumber lattices xi_j = 2 pi j / Lx for j in {-nx/2, ..., nx/2 - 1}
    (likewise eta) are cached per grid.
    """
    model_config = ConfigDict(frozen=True)

    nx: int
    ny: int
    lx: float
    ly: float

    @field_validator("nx", "ny")
    @classmethod
    def _check_resolution(cls, v: int) -> int:
        if v < 8 or v % 2 != 0:
            raise ValueError(f"Grid resolution must be even and >= 8, got {v}")
        return v

    @field_validator("lx", "ly")
    @classmethod
    def _check_box(cls, v: float) -> float:
        if not v > 0:
            raise ValueError(f"Box side must be positive, got {v}")
        return float(v)

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def xi(self) -> np.ndarray:
        """x-wavenumbers in FFT order."""
        return _lattice(self)[0]

    @property
    def eta(self) -> np.ndarray:
        return _lattice(self)[1]

    @property
    def KX(self) -> np.ndarray:
        return _lattice(self)[2]

    @property
    def KY(self) -> np.ndarray:
        return _lattice(self)[3]

    @property
    def k_squared(self) -> np.ndarray:
        return _lattice(self)[4]

    @property
    def KX_odd(self) -> np.ndarray:
        """KX with the Nyquist column zeroed; odd symbols built on it stay Hermitian."""
        return _lattice(self)[5]

    @property
    def KY_odd(self) -> np.ndarray:
        return _lattice(self)[6]

    @property
    def xi_lattice(self) -> np.ndarray:
        """x-wavenumbers sorted ascending: -nx/2, ..., nx/2 - 1 (times 2 pi / Lx)."""
        return np.fft.fftshift(self.xi)

    @property
    def eta_lattice(self) -> np.ndarray:
        return np.fft.fftshift(self.eta)

    @property
    def nyquist_radius(self) -> float:
        return float(np.sqrt(self.k_squared.max()))

    @property
    def x(self) -> np.ndarray:
        return -0.5 * self.lx + self.dx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return -0.5 * self.ly + self.dy * np.arange(self.ny)

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    def index_lattice(self) -> Tuple[np.ndarray, np.ndarray]:
        """Integer mode indices (j, l) in FFT order, broadcast to the grid shape."""
        j = np.rint(np.fft.fftfreq(self.nx) * self.nx)
        l = np.rint(np.fft.fftfreq(self.ny) * self.ny)
        return np.meshgrid(j, l, indexing="ij")


@lru_cache(maxsize=64)
def _lattice(grid: GridSpec):
    xi = 2.0 * np.pi * np.fft.fftfreq(grid.nx, d=grid.dx)
    eta = 2.0 * np.pi * np.fft.fftfreq(grid.ny, d=grid.dy)
    KX, KY = np.meshgrid(xi, eta, indexing="ij")
    K2 = KX ** 2 + KY ** 2
    KX_odd = KX.copy()
    KX_odd[grid.nx // 2, :] = 0.0
    KY_odd = KY.copy()
    KY_odd[:, grid.ny // 2] = 0.0
    for arr in (xi, eta, KX, KY, K2, KX_odd, KY_odd):
        arr.flags.writeable = False
    return xi, eta, KX, KY, K2, KX_odd, KY_odd


def make_grid(nx: int, ny: int, Lx: float, Ly: float) -> GridSpec:
    """Validated GridSpec; odd or tiny resolutions and non-positive boxes are rejected."""
    if int(nx) != nx or int(ny) != ny:
        raise GridError("Grid resolution must be an integer", {"nx": nx, "ny": ny})
    if nx < 8 or ny < 8 or nx % 2 or ny % 2:
        raise GridError(
            f"Grid resolution must be even and >= 8, got nx={nx}, ny={ny}",
            {"nx": nx, "ny": ny}
        )
    if not (Lx > 0 and Ly > 0):
        raise GridError(f"Box sides must be positive, got Lx={Lx}, Ly={Ly}", {"Lx": Lx, "Ly": Ly})
    return GridSpec(nx=int(nx), ny=int(ny), lx=float(Lx), ly=float(Ly))


def physical_coordinates(grid: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    """x_j = -Lx/2 + j dx and y_l = -Ly/2 + l dy as [x, y]-indexed arrays."""
    return grid.mesh()


def dealias_mask(grid: GridSpec) -> np.ndarray:
    """2/3-rule mask: False for modes with |j| > nx/3 or |l| > ny/3."""
    J, L = grid.index_lattice()
    return (np.abs(J) <= grid.nx / 3.0) & (np.abs(L) <= grid.ny / 3.0)


# --- Field ---

class Field(BaseModel):
    """
    One real scalar field on a grid. Physical data is stored as float64,
    spectral data as complex128; both are read-only.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: GridSpec
    representation: Representation
    data: np.ndarray
    time: float = 0.0

    @model_validator(mode="before")
    @classmethod
    def _coerce_data(cls, values):
        if not isinstance(values, dict) or "data" not in values:
            return values
        rep = Representation(values.get("representation", Representation.PHYSICAL))
        raw = np.asarray(values["data"])
        if rep is Representation.PHYSICAL:
            if np.iscomplexobj(raw):
                scale = max(float(np.max(np.abs(raw.real), initial=0.0)), 1e-300)
                if float(np.max(np.abs(raw.imag), initial=0.0)) > 1e-8 * scale:
                    raise RepresentationError("Physical Field data must be real")
                raw = raw.real
            arr = np.array(raw, dtype=np.float64)
        else:
            arr = np.array(raw, dtype=np.complex128)
        arr.flags.writeable = False
        values = dict(values)
        values["data"] = arr
        return values

    @model_validator(mode="after")
    def _check_shape(self):
        if self.data.shape != self.grid.shape:
            raise RepresentationError(
                f"Field data shape {self.data.shape} does not match grid {self.grid.shape}"
            )
        return self

    def with_data(self, data: np.ndarray, representation: Optional[Representation] = None,
                  time: Optional[float] = None) -> "Field":
        return Field(
            grid=self.grid,
            representation=representation or self.representation,
            data=data,
            time=self.time if time is None else time
        )


def field_from_array(grid: GridSpec, values: np.ndarray, time: float = 0.0) -> Field:
    return Field(grid=grid, representation=Representation.PHYSICAL, data=values, time=time)


def field_from_function(grid: GridSpec, fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
                        time: float = 0.0) -> Field:
    X, Y = grid.mesh()
    return field_from_array(grid, fn(X, Y), time)


def zeros(grid: GridSpec, representation: Representation = Representation.PHYSICAL) -> Field:
    return Field(grid=grid, representation=representation, data=np.zeros(grid.shape))


# --- Transforms ---

def _fft2(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    return sfft.fft2(values, workers=settings.fft_workers) * (grid.dx * grid.dy)


def _ifft2(spectrum: np.ndarray, grid: GridSpec) -> np.ndarray:
    return sfft.ifft2(spectrum, workers=settings.fft_workers) / (grid.dx * grid.dy)


def forward(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Raw forward transform of sample arrays; the last two axes are (x, y)."""
    return sfft.fft2(values, axes=(-2, -1), workers=settings.fft_workers) * (grid.dx * grid.dy)


def inverse(spec: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Raw inverse transform, real part."""
    return (sfft.ifft2(spec, axes=(-2, -1), workers=settings.fft_workers) / (grid.dx * grid.dy)).real


def to_spectral(f: Field) -> Field:
    if f.representation is not Representation.PHYSICAL:
        raise RepresentationError("to_spectral expects a physical Field", {"got": f.representation.value})
    return f.with_data(_fft2(f.data, f.grid), Representation.SPECTRAL)


def to_physical(f: Field) -> Field:
    if f.representation is not Representation.SPECTRAL:
        raise RepresentationError("to_physical expects a spectral Field", {"got": f.representation.value})
    return f.with_data(_ifft2(f.data, f.grid).real, Representation.PHYSICAL)


def spectrum(f: Field) -> np.ndarray:
    """Spectral coefficients of f whatever its representation."""
    return f.data if f.representation is Representation.SPECTRAL else _fft2(f.data, f.grid)


def values(f: Field) -> np.ndarray:
    """Physical samples of f whatever its representation."""
    return f.data if f.representation is Representation.PHYSICAL else _ifft2(f.data, f.grid).real


def imaginary_residual(f: Field) -> float:
    """max |Im| of the raw inverse transform; zero for an exactly Hermitian spectrum."""
    raw = _ifft2(spectrum(f), f.grid)
    return float(np.max(np.abs(raw.imag)))


def reflect(spec: np.ndarray) -> np.ndarray:
    """spec(-xi, -eta) on the FFT-ordered lattice (the Nyquist index maps to itself)."""
    return np.roll(np.flip(spec, axis=(-2, -1)), 1, axis=(-2, -1))


def hermitian_defect(f: Field) -> float:
    spec = spectrum(f)
    return float(np.max(np.abs(reflect(spec) - np.conj(spec))))


def apply_multiplier(f: Field, symbol: np.ndarray) -> Field:
    """Multiply the spectrum by `symbol`; the result keeps f's representation."""
    out = spectrum(f) * symbol
    if f.representation is Representation.SPECTRAL:
        return f.with_data(out)
    return f.with_data(_ifft2(out, f.grid).real)


# --- Multipliers ---

def fractional_symbol(grid: GridSpec, alpha: float, axis: Axis = Axis.X) -> np.ndarray:
    """|xi|^alpha (or |eta|^alpha); for alpha < 0 the zero frequency is annihilated."""
    if alpha < -1:
        raise ParameterError(f"Fractional order must be >= -1, got {alpha}", {"alpha": alpha})
    k = np.abs(grid.KX if Axis(axis) is Axis.X else grid.KY)
    if alpha == 0:
        return np.ones_like(k)
    if alpha > 0:
        return k ** alpha
    out = np.zeros_like(k)
    nz = k > 0
    out[nz] = k[nz] ** alpha
    return out


def fractional_derivative(f: Field, alpha: float, axis: Axis = Axis.X) -> Field:
    return apply_multiplier(f, fractional_symbol(f.grid, alpha, axis))


def partial(f: Field, axis: Axis = Axis.X, order: int = 1) -> Field:
    """Spectral derivative d^order / d axis^order; odd orders drop the Nyquist mode."""
    if Axis(axis) is Axis.X:
        k = f.grid.KX_odd if order % 2 else f.grid.KX
    else:
        k = f.grid.KY_odd if order % 2 else f.grid.KY
    return apply_multiplier(f, (1j * k) ** order)


def laplacian(f: Field) -> Field:
    return apply_multiplier(f, -f.grid.k_squared)


# --- Norms ---

def sobolev_weight(grid: GridSpec, s: float, homogeneous: bool) -> np.ndarray:
    """
    |k|^{2s} (homogeneous) or (1 + |k|^2)^s. The homogeneous weight takes
    |0|^0 = 1 and skips the zero mode for s != 0.
    """
    K2 = grid.k_squared
    if not homogeneous:
        return (1.0 + K2) ** s
    if s == 0:
        return np.ones_like(K2)
    w = np.zeros_like(K2)
    nz = K2 > 0
    w[nz] = K2[nz] ** s
    return w


def sobolev_inner(f: Field, g: Field, s: float = 0.0, homogeneous: bool = False) -> float:
    """Real inner product <f, g>_{H^s} (or dot-H^s) via Plancherel."""
    w = sobolev_weight(f.grid, s, homogeneous)
    acc = np.sum(w * spectrum(f) * np.conj(spectrum(g)))
    return float(acc.real / f.grid.area)


def sobolev_norm(f: Field, s: float = 0.0, homogeneous: bool = False) -> float:
    w = sobolev_weight(f.grid, s, homogeneous)
    return float(np.sqrt(np.sum(w * np.abs(spectrum(f)) ** 2) / f.grid.area))


def l2_norm(f: Field) -> float:
    """Physical-space quadrature of the L2 norm."""
    g = f.grid
    return float(np.sqrt(np.sum(values(f) ** 2) * g.dx * g.dy))


def l2_inner(f: Field, g: Field) -> float:
    return float(np.sum(values(f) * values(g)) * f.grid.dx * f.grid.dy)


def lp_norm(f: Field, p: float) -> float:
    u = np.abs(values(f))
    if np.isinf(p):
        return float(u.max())
    return float((np.sum(u ** p) * f.grid.dx * f.grid.dy) ** (1.0 / p))


def sup_norm(f: Field) -> float:
    return float(np.max(np.abs(values(f))))


def gradient_norm(f: Field) -> float:
    """||grad f||_{L2}, spectrally."""
    return sobolev_norm(f, 1.0, homogeneous=True)


# --- Mixed space-time norms ---

def _group_norm(A: np.ndarray, axes: Tuple[int, ...], exponent: float, weight: float) -> np.ndarray:
    if np.isinf(exponent):
        return A.max(axis=axes)
    return (np.sum(A ** exponent, axis=axes) * weight) ** (1.0 / exponent)


def mixed_norm(trace: Sequence[Field], p: float, q: float, r: Optional[float] = None,
               order: MixedOrder = MixedOrder.X_Y_T, dt: Optional[float] = None) -> float:
    """
    Nested discrete L^p L^q L^r norm of a uniformly sampled trace.

    Exponents bind to the groups of `order` from the outside in:
      x->y->T : L^p_x L^q_y L^r_T
      T->xy   : L^p_T L^q_{xy}      (r unused)
      x->yT   : L^p_x L^q_{yT}      (r unused)
    Rectangle rule in every axis; infinite exponents take the maximum.
    """
    if len(trace) == 0:
        raise ParameterError("mixed_norm needs a non-empty trace")
    grid = trace[0].grid
    if dt is None:
        times = np.array([f.time for f in trace])
        if len(times) > 1:
            steps = np.diff(times)
            if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
                raise ParameterError("mixed_norm needs uniform, increasing time samples")
            dt = float(steps[0])
        else:
            dt = 1.0
    for e in (p, q) + ((r,) if r is not None else ()):
        if not (e >= 1):
            raise ParameterError(f"Lebesgue exponents must lie in [1, inf], got {e}")

    A = np.abs(np.stack([values(f) for f in trace]))  # axes: (T, x, y)
    order = MixedOrder(order)
    if order is MixedOrder.X_Y_T:
        if r is None:
            raise ParameterError("order x->y->T needs three exponents")
        inner_T = _group_norm(A, (0,), r, dt)                 # (x, y)
        inner_y = _group_norm(inner_T, (1,), q, grid.dy)      # (x,)
        return float(_group_norm(inner_y, (0,), p, grid.dx))
    if order is MixedOrder.T_XY:
        inner_xy = _group_norm(A, (1, 2), q, grid.dx * grid.dy)  # (T,)
        return float(_group_norm(inner_xy, (0,), p, dt))
    inner_yT = _group_norm(A, (0, 2), q, dt * grid.dy)        # (x,)
    return float(_group_norm(inner_yT, (0,), p, grid.dx))


# --- Frequency splitting ---

class SplitPair(BaseModel):
    """
    Low/high decomposition at cutoff N plus the coupled-evolution state.
    v is the low-frequency (H^1) part, w the correction and z the
    accumulated Duhamel term; all are spectral Fields sharing the clock t.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    cutoff: float
    cutoff_set: CutoffSet = CutoffSet.FULL
    v: Field
    w: Field
    z: Field
    t: float = 0.0


def low_mask(grid: GridSpec, N: float, cutoff_set: CutoffSet = CutoffSet.FULL) -> np.ndarray:
    if CutoffSet(cutoff_set) is CutoffSet.X:
        return np.abs(grid.KX) < N
    return np.sqrt(grid.k_squared) < N


def low_high_split(f: Field, N: float, cutoff_set: CutoffSet = CutoffSet.FULL) -> SplitPair:
    """Sharp spectral cutoff: v0 keeps the modes below N, w0 = u0 - v0."""
    if not N > 0:
        raise ParameterError(f"Cutoff must be positive, got {N}", {"N": N})
    spec = spectrum(f)
    mask = low_mask(f.grid, N, cutoff_set)
    low = np.where(mask, spec, 0.0)
    make = lambda data: Field(grid=f.grid, representation=Representation.SPECTRAL, data=data, time=f.time)
    return SplitPair(
        cutoff=float(N),
        cutoff_set=CutoffSet(cutoff_set),
        v=make(low),
        w=make(spec - low),
        z=make(np.zeros_like(spec)),
        t=f.time
    )


# --- Data generators ---

def _hermitian_phases(grid: GridSpec, rng: np.random.Generator) -> np.ndarray:
    theta = rng.uniform(-np.pi, np.pi, size=grid.shape)
    return np.exp(0.5j * (theta - reflect(theta)))


def prescribed_regularity_datum(grid: GridSpec, s: float, l2: float, seed: int,
                                envelope: Envelope = Envelope.BESSEL) -> Field:
    """
    Random-phase real datum whose spectrum has modulus A * envelope(|k|),
    with A chosen so that ||u0||_{L2} = l2.
    """
    rng = np.random.default_rng(seed)
    K2 = grid.k_squared
    if Envelope(envelope) is Envelope.BESSEL:
        env = (1.0 + K2) ** (-(s + 1.0) / 2.0)
    else:
        env = np.zeros_like(K2)
        nz = K2 > 0
        env[nz] = K2[nz] ** (-s / 2.0) * (1.0 + K2[nz]) ** -0.5
    spec = env * _hermitian_phases(grid, rng)
    raw = Field(grid=grid, representation=Representation.SPECTRAL, data=spec)
    scale = l2 / sobolev_norm(raw)
    return to_physical(raw.with_data(spec * scale))


def random_band_limited(grid: GridSpec, seed: int, band: int = 16, decay: float = 1.0) -> Field:
    """
    Gaussian random field with spectrum ~ (1+|k|^2)^{-decay} on the modes
    |j|, |l| <= band. Coefficients are drawn on the fixed (2 band + 1)^2 block,
    so one seed gives the same continuum field on every grid that holds the band.
    """
    if 2 * band >= min(grid.nx, grid.ny):
        raise ParameterError("band exceeds the grid's Nyquist index", {"band": band})
    rng = np.random.default_rng(seed)
    block = rng.standard_normal((2 * band + 1, 2 * band + 1)) \
        + 1j * rng.standard_normal((2 * band + 1, 2 * band + 1))
    block = 0.5 * (block + np.conj(block[::-1, ::-1]))
    idx = np.arange(-band, band + 1)
    spec = np.zeros(grid.shape, dtype=np.complex128)
    spec[np.ix_(idx % grid.nx, idx % grid.ny)] = block
    spec *= (1.0 + grid.k_squared) ** (-decay)
    spec *= grid.area
    return to_physical(Field(grid=grid, representation=Representation.SPECTRAL, data=spec))
