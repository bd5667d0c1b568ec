import numpy as np
import pytest

from gzk.core.exceptions import ParameterError
from gzk.services.linear_propagator import (
    ProbeKind, ProbeSpec, Quadrature, apply_group, dispersion_symbol, duhamel, estimate_probe, probe_ratio,
)
from gzk.services.spectral_core import (
    Axis, Field, Representation, field_from_function, fractional_derivative, hermitian_defect, l2_norm, make_grid,
    random_band_limited, spectrum, to_spectral, values,
)


class TestLinearGroup:

    def test_unitarity_and_group_law(self, grid):
        for seed in range(20):
            f = random_band_limited(grid, seed, band=16)
            norm = l2_norm(f)
            assert l2_norm(apply_group(f, 0.7)) == pytest.approx(norm, rel=1e-12)
            composed = apply_group(apply_group(f, 0.3), 0.4)
            direct = apply_group(f, 0.7)
            assert np.linalg.norm(values(composed) - values(direct)) <= 1e-12 * np.linalg.norm(values(direct))

    def test_backward_in_time(self, small_grid, gaussian):
        back = apply_group(apply_group(gaussian, 1.3), -1.3)
        np.testing.assert_allclose(values(back), values(gaussian), atol=1e-13)

    def test_group_keeps_fields_real(self, gaussian):
        moved = apply_group(to_spectral(gaussian), 2.0)
        assert hermitian_defect(moved) < 1e-12

    def test_plane_wave_solution(self, small_grid):
        a = 2 * np.pi * 2 / small_grid.lx
        b = 2 * np.pi * 1 / small_grid.ly
        t = 0.8
        f = field_from_function(small_grid, lambda X, Y: np.cos(a * X + b * Y))
        exact = field_from_function(small_grid, lambda X, Y: np.cos(a * X + b * Y + (a ** 3 + a * b ** 2) * t))
        np.testing.assert_allclose(values(apply_group(f, t)), values(exact), atol=1e-12)

    def test_symbol_is_odd(self, small_grid):
        omega = dispersion_symbol(small_grid).omega
        flipped = np.roll(np.flip(omega, axis=(0, 1)), 1, axis=(0, 1))
        np.testing.assert_allclose(flipped, -omega, atol=1e-12)

    @pytest.mark.parametrize("axis", list(Axis))
    def test_commutes_with_fractional_derivatives(self, small_grid, axis):
        f = random_band_limited(small_grid, seed=11, band=12)
        a = apply_group(fractional_derivative(f, 0.5, axis), 0.9)
        b = fractional_derivative(apply_group(f, 0.9), 0.5, axis)
        assert np.linalg.norm(values(a) - values(b)) <= 1e-12 * np.linalg.norm(values(a))

    def test_symbol_is_cached(self, small_grid):
        assert dispersion_symbol(small_grid) is dispersion_symbol(make_grid(64, 64, 20.0, 20.0))


class TestDuhamel:

    def _constant_force(self, f, T, n):
        return [f.with_data(f.data, time=t) for t in np.linspace(0.0, T, n)]

    @pytest.mark.parametrize("quadrature, tol", [(Quadrature.SIMPSON, 1e-8), (Quadrature.TRAPEZOID, 1e-4)])
    def test_constant_force(self, small_grid, quadrature, tol):
        f = random_band_limited(small_grid, seed=2, band=4)
        T = 0.5
        z = duhamel(self._constant_force(f, T, 201), quadrature=quadrature)
        omega = dispersion_symbol(small_grid).omega
        factor = np.full(omega.shape, T, dtype=complex)
        nz = omega != 0
        factor[nz] = (np.exp(1j * omega[nz] * T) - 1.0) / (1j * omega[nz])
        exact = spectrum(f) * factor
        assert z.representation is Representation.SPECTRAL
        assert z.time == pytest.approx(T)
        assert np.linalg.norm(z.data - exact) <= tol * np.linalg.norm(exact)

    @pytest.mark.parametrize("quadrature", list(Quadrature))
    def test_group_orbit_forcing(self, small_grid, quadrature):
        # U(T - t') U(t') g = U(T) g, so z(T) = T U(T) g
        g = random_band_limited(small_grid, seed=6, band=8)
        T = 0.7

        def orbit(t):
            u = apply_group(g, t)
            return u.with_data(u.data, time=t)

        z = duhamel([orbit(t) for t in np.linspace(0.0, T, 15)], quadrature=quadrature)
        exact = T * spectrum(apply_group(g, T))
        assert np.linalg.norm(z.data - exact) <= 1e-12 * np.linalg.norm(exact)

    def test_linearity(self, small_grid):
        f = random_band_limited(small_grid, seed=8, band=6)
        g = random_band_limited(small_grid, seed=9, band=6)
        ts = np.linspace(0.0, 0.5, 11)
        F = [f.with_data(np.cos(t) * f.data, time=t) for t in ts]
        G = [g.with_data(t * g.data, time=t) for t in ts]
        mixed = [a.with_data(2.0 * a.data - 3.0 * b.data) for a, b in zip(F, G)]
        expected = 2.0 * duhamel(F).data - 3.0 * duhamel(G).data
        assert np.linalg.norm(duhamel(mixed).data - expected) <= 1e-12 * np.linalg.norm(expected)

    def test_trapezoid_richardson_ratio(self, small_grid):
        g = random_band_limited(small_grid, seed=4, band=2)

        def z_with(n, quadrature):
            ts = np.linspace(0.0, 1.0, n)
            return duhamel([g.with_data(t ** 2 * g.data, time=t) for t in ts], quadrature=quadrature).data

        reference = z_with(641, Quadrature.SIMPSON)
        errors = [np.linalg.norm(z_with(n, Quadrature.TRAPEZOID) - reference) for n in (11, 21, 41)]
        for coarse, fine in zip(errors, errors[1:]):
            assert coarse / fine == pytest.approx(4.0, rel=0.1)

    def test_default_rule_is_simpson(self, small_grid):
        g = random_band_limited(small_grid, seed=4, band=2)
        force = [g.with_data(t ** 2 * g.data, time=t) for t in np.linspace(0.0, 1.0, 21)]
        np.testing.assert_array_equal(duhamel(force).data, duhamel(force, quadrature=Quadrature.SIMPSON).data)

    def test_zero_force(self, small_grid):
        zero = Field(grid=small_grid, representation=Representation.PHYSICAL, data=np.zeros(small_grid.shape))
        z = duhamel(self._constant_force(zero, 1.0, 5))
        assert np.all(z.data == 0)

    def test_needs_three_samples(self, gaussian):
        with pytest.raises(ParameterError):
            duhamel(self._constant_force(gaussian, 1.0, 2))

    def test_non_uniform_samples(self, gaussian):
        force = [gaussian.with_data(gaussian.data, time=t) for t in (0.0, 0.1, 0.5)]
        with pytest.raises(ParameterError):
            duhamel(force)


class TestProbes:

    def test_strichartz_range(self):
        with pytest.raises(ParameterError):
            ProbeSpec(kind=ProbeKind.STRICHARTZ, theta=0.5, eps=0.6).validate_ranges()

    def test_maximal_range(self):
        with pytest.raises(ParameterError):
            ProbeSpec(kind=ProbeKind.MAXIMAL_L4, s1=0.2).validate_ranges()
        with pytest.raises(ParameterError):
            ProbeSpec(kind=ProbeKind.MAXIMAL_L2, s=0.7).validate_ranges()

    def test_horizon_limited_to_one(self, small_grid):
        with pytest.raises(ParameterError):
            estimate_probe(ProbeSpec(kind=ProbeKind.SMOOTHING), small_grid, T=2.0, count=10)

    def test_minimum_sample_count(self, small_grid):
        with pytest.raises(ParameterError):
            estimate_probe(ProbeSpec(kind=ProbeKind.SMOOTHING), small_grid, T=1.0, count=5)

    def test_zero_datum_rejected(self, small_grid):
        zero = Field(grid=small_grid, representation=Representation.PHYSICAL, data=np.zeros(small_grid.shape))
        with pytest.raises(ParameterError):
            probe_ratio(ProbeSpec(kind=ProbeKind.SMOOTHING), zero, 1.0)

    @pytest.mark.parametrize("spec", [
        ProbeSpec(kind=ProbeKind.SMOOTHING),
        ProbeSpec(kind=ProbeKind.STRICHARTZ, theta=0.5, eps=0.1),
        ProbeSpec(kind=ProbeKind.MAXIMAL_L4),
        ProbeSpec(kind=ProbeKind.MAXIMAL_L4_SOBOLEV, s=0.8),
        ProbeSpec(kind=ProbeKind.SUP_NORM_GAIN, eps=0.2),
    ])
    def test_ensemble_is_seeded(self, small_grid, spec):
        a = estimate_probe(spec, small_grid, T=0.5, count=10, seed=40, n_times=8)
        b = estimate_probe(spec, small_grid, T=0.5, count=10, seed=40, n_times=8)
        assert [s.sample_seed for s in a.samples] == list(range(40, 50))
        assert [s.ratio for s in a.samples] == [s.ratio for s in b.samples]
        assert 0 < a.mean_ratio <= a.max_ratio
        assert a.kind == spec.label

    @pytest.mark.slow
    @pytest.mark.parametrize("kind", [ProbeKind.SMOOTHING, ProbeKind.MAXIMAL_L4])
    def test_maxima_stable_under_refinement(self, kind):
        spec = ProbeSpec(kind=kind)
        coarse = estimate_probe(spec, make_grid(128, 128, 16 * np.pi, 16 * np.pi), T=1.0, count=100)
        fine = estimate_probe(spec, make_grid(256, 256, 16 * np.pi, 16 * np.pi), T=1.0, count=100)
        assert fine.max_ratio == pytest.approx(coarse.max_ratio, rel=0.2)
