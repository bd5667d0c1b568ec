import numpy as np
import pytest

from gzk.core.exceptions import ParameterError
from gzk.models.schemas import DiagnosticsRow, DtPolicy, Integrator, SimulationConfig
from gzk.services import evolution
from gzk.services.evolution import (
    CACHE_SLOTS, AccumulationRule, ConservedDiagnostics, DuhamelConvention, EvolutionOutcome, NonlinearForm,
    SpectralStepper, coupled_evolve, critical_gradient_bound, energy, energy_bootstrap_report, evolve,
    exact_translate, mass, nonlinear_term, reconstruct, step, traveling_wave,
)
from gzk.services.ground_state import solve_ground_state
from gzk.services.linear_propagator import apply_group
from gzk.services.spectral_core import (
    Representation, dealias_mask, field_from_function, l2_norm, low_high_split, make_grid,
    random_band_limited, sobolev_norm, spectrum, sup_norm, to_physical, values,
)


def _config(grid, **overrides):
    base = dict(k=2, nx=grid.nx, ny=grid.ny, Lx=grid.lx, Ly=grid.ly, T=0.2, dt=1e-3)
    base.update(overrides)
    return SimulationConfig(**base)


def _band_limited(f):
    """Drop the modes outside the 2/3 band."""
    spec = spectrum(f) * dealias_mask(f.grid)
    return to_physical(f.with_data(spec, Representation.SPECTRAL))


def _rel(a, b):
    return float(np.linalg.norm(values(a) - values(b)) / np.linalg.norm(values(b)))


class TestNonlinearity:

    def test_forms_agree_for_smooth_data(self, small_grid):
        wide = field_from_function(small_grid, lambda X, Y: 0.5 * np.exp(-(X ** 2 + Y ** 2) / 4))
        a = nonlinear_term(wide, 2, dealias=False, form=NonlinearForm.CONSERVATIVE)
        b = nonlinear_term(wide, 2, dealias=False, form=NonlinearForm.DIRECT)
        np.testing.assert_allclose(values(a), values(b), atol=1e-10)

    def test_power_below_one(self, gaussian):
        with pytest.raises(ParameterError):
            nonlinear_term(gaussian, 0)
        with pytest.raises(ParameterError):
            SpectralStepper(gaussian.grid, 0)

    def test_dealiased_term_is_band_limited(self, gaussian):
        out = nonlinear_term(gaussian, 3, dealias=True)
        assert np.all(np.abs(spectrum(out)[~dealias_mask(gaussian.grid)]) < 1e-12)


class TestEvolve:

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_conservation(self, gaussian, k):
        traj = evolve(_band_limited(gaussian), _config(gaussian.grid, k=k, T=0.5))
        assert traj.outcome is EvolutionOutcome.COMPLETED
        assert traj.diagnostics.relative_drift("I1") <= 1e-8
        assert traj.diagnostics.relative_drift("I2") <= 1e-6

    def test_mass_drift_without_dealiasing(self, small_grid):
        rough = random_band_limited(small_grid, seed=3, band=21)
        rough = rough.with_data(values(rough) / sup_norm(rough))
        drift = {}
        for dealias in (True, False):
            traj = evolve(rough, _config(small_grid, k=1, dealias=dealias))
            drift[dealias] = traj.diagnostics.relative_drift("I1")
        assert drift[True] <= 1e-8
        assert drift[False] > 10.0 * drift[True]

    def test_fourth_order_in_dt(self, small_grid):
        u0 = field_from_function(small_grid, lambda X, Y: np.exp(-(X ** 2 + Y ** 2) / 4.0))
        reference = evolve(u0, _config(small_grid, T=0.2, dt=0.2 / 640)).final
        errors = [_rel(evolve(u0, _config(small_grid, T=0.2, dt=dt)).final, reference)
                  for dt in (0.01, 0.005, 0.0025)]
        for coarse, fine in zip(errors, errors[1:]):
            assert np.log2(coarse / fine) == pytest.approx(4.0, abs=0.5)

    @pytest.mark.parametrize("integrator, tol", [(Integrator.ETDRK4, 1e-6), (Integrator.STRANG, 1e-4)])
    def test_integrators_agree(self, gaussian, integrator, tol):
        ref = evolve(gaussian, _config(gaussian.grid, T=0.1))
        other = evolve(gaussian, _config(gaussian.grid, T=0.1, integrator=integrator))
        assert _rel(other.final, ref.final) <= tol

    def test_small_data_follows_linear_group(self, small_grid):
        tiny = field_from_function(small_grid, lambda X, Y: 1e-6 * np.exp(-(X ** 2 + Y ** 2)))
        traj = evolve(tiny, _config(small_grid, T=0.3, dt=1e-2))
        assert _rel(traj.final, apply_group(tiny, 0.3)) <= 1e-9

    def test_strides_and_final_time(self, gaussian):
        seen = []
        cfg = _config(gaussian.grid, T=0.1, dt=0.01, snapshot_stride=5, diagnostic_stride=2)
        traj = evolve(gaussian, cfg, observer=lambda u: seen.append(u.time))
        assert traj.steps == 10 and len(seen) == 10
        assert [round(s.time, 12) for s in traj.snapshots] == [0.0, 0.05, 0.1]
        assert len(traj.diagnostics.rows) == 6
        assert traj.final.time == pytest.approx(0.1, abs=1e-15)
        assert traj.last_finite_time == traj.final.time

    def test_heuristic_policy_reaches_horizon(self, gaussian):
        cfg = _config(gaussian.grid, T=0.05, dt=0.01, dt_policy=DtPolicy.HEURISTIC, dt_min=1e-4)
        traj = evolve(gaussian, cfg)
        assert traj.final.time == pytest.approx(0.05)
        assert traj.steps >= 5

    def test_heuristic_run_keeps_step_cache_bounded(self, monkeypatch, small_grid):
        made = []

        class RecordingStepper(evolution.SpectralStepper):
            def __init__(self, *args, **kwargs):
                super().__init__(*args, **kwargs)
                made.append(self)

        monkeypatch.setattr(evolution, "SpectralStepper", RecordingStepper)
        u0 = field_from_function(small_grid, lambda X, Y: 2.0 * np.exp(-(X ** 2 + Y ** 2)))
        cfg = _config(small_grid, T=0.02, dt=0.01, dt_policy=DtPolicy.HEURISTIC)
        traj = evolve(u0, cfg)
        assert traj.steps > 10 * CACHE_SLOTS
        assert len(made[0]._exp_cache) <= CACHE_SLOTS

    def test_etd_tables_follow_the_latest_steps(self, gaussian):
        stepper = SpectralStepper(gaussian.grid, 2, integrator=Integrator.ETDRK4)
        s = np.array(spectrum(gaussian))
        for i in range(12):
            s = stepper.advance(s, 1e-3 * (1.0 + 0.01 * i))
        assert len(stepper._etd_cache) <= CACHE_SLOTS
        assert len(stepper._exp_cache) <= CACHE_SLOTS
        assert 1e-3 * (1.0 + 0.01 * 11) in stepper._etd_cache

    def test_blow_up_is_an_outcome(self, small_grid):
        big = field_from_function(small_grid, lambda X, Y: 50.0 * np.exp(-(X ** 2 + Y ** 2)))
        traj = evolve(big, _config(small_grid, T=1.0, dt=0.01))
        assert traj.blew_up
        assert traj.last_finite_time < 1.0
        assert np.all(np.isfinite(values(traj.final)))

    def test_single_step_both_directions(self, gaussian):
        cfg = _config(gaussian.grid)
        fwd = step(gaussian, 1e-3, cfg)
        back = step(fwd, -1e-3, cfg)
        assert fwd.time == pytest.approx(1e-3)
        assert _rel(back, gaussian) <= 1e-10

    def test_non_finite_datum(self, small_grid):
        bad = field_from_function(small_grid, lambda X, Y: np.where(X > 0, np.nan, 0.0))
        with pytest.raises(ParameterError):
            evolve(bad, _config(small_grid))


class TestDiagnostics:

    def test_times_must_increase(self):
        diag = ConservedDiagnostics()
        diag.append(DiagnosticsRow(t=0.0, I1=1, I2=1, H1=1, Linf=1, grad_L2=1))
        with pytest.raises(ParameterError):
            diag.append(DiagnosticsRow(t=0.0, I1=1, I2=1, H1=1, Linf=1, grad_L2=1))

    def test_frame_columns(self, gaussian):
        traj = evolve(gaussian, _config(gaussian.grid, T=0.02, dt=0.01))
        frame = traj.diagnostics.to_frame()
        assert list(frame.columns) == ["t", "I1", "I2", "H1", "Linf", "grad_L2"]
        assert frame["I1"].iloc[0] == pytest.approx(mass(gaussian))

    def test_energy_of_gaussian(self, gaussian):
        # 0.5 exp(-r^2): int |grad u|^2 = pi / 4, int u^4 = pi / 64
        assert energy(gaussian, 2) == pytest.approx(np.pi / 4 - np.pi / 384, rel=1e-8)

    def test_bootstrap_needs_k3(self, gaussian):
        traj = evolve(gaussian, _config(gaussian.grid, T=0.02, dt=0.01))
        with pytest.raises(ParameterError):
            energy_bootstrap_report(traj.diagnostics, 2, traj.snapshots)

    def test_small_data_bootstrap(self, small_grid):
        u0 = field_from_function(small_grid, lambda X, Y: np.exp(-(X ** 2 + Y ** 2)))
        u0 = u0.with_data(values(u0) * 0.01 / sobolev_norm(u0, 1.0))
        traj = evolve(u0, _config(small_grid, k=3, T=1.0, dt=1e-2, snapshot_stride=10))
        report = energy_bootstrap_report(traj.diagnostics, 3, traj.snapshots)
        assert report.holds
        assert max(r.H1 for r in traj.diagnostics.rows) <= 2 * sobolev_norm(u0, 1.0)

    @pytest.mark.slow
    def test_small_data_stays_small_to_t10(self, grid):
        u0 = field_from_function(grid, lambda X, Y: np.exp(-(X ** 2 + Y ** 2)))
        u0 = u0.with_data(values(u0) * 0.01 / sobolev_norm(u0, 1.0))
        traj = evolve(u0, _config(grid, k=3, T=10.0, dt=1e-2, snapshot_stride=100))
        assert traj.outcome is EvolutionOutcome.COMPLETED
        assert energy_bootstrap_report(traj.diagnostics, 3, traj.snapshots).holds
        assert max(r.H1 for r in traj.diagnostics.rows) <= 2 * sobolev_norm(u0, 1.0)

    def test_gradient_bound_needs_subcritical_mass(self, gaussian):
        with pytest.raises(ParameterError):
            critical_gradient_bound(gaussian, critical=0.5 * l2_norm(gaussian))


class TestTravelingWaves:

    def test_translation_by_grid_points(self, gaussian):
        g = gaussian.grid
        moved = exact_translate(gaussian, 3 * g.dx, -2 * g.dy)
        np.testing.assert_allclose(values(moved), np.roll(gaussian.data, (3, -2), axis=(0, 1)), atol=1e-12)

    def test_full_period_is_identity(self, gaussian):
        moved = exact_translate(gaussian, gaussian.grid.lx)
        np.testing.assert_allclose(values(moved), gaussian.data, atol=1e-12)

    def test_soliton_moves_rigidly(self):
        grid = make_grid(192, 192, 16 * np.pi, 16 * np.pi)
        phi = solve_ground_state(2, 1.0, grid).profile
        traj = evolve(phi, _config(grid, T=1.0, dt=1e-3, diagnostic_stride=100))
        assert _rel(traj.final, expected := traveling_wave(phi, 1.0, 1.0)) <= 1e-3
        assert expected.time == pytest.approx(1.0)

    @pytest.mark.slow
    def test_soliton_over_quarter_box(self):
        grid = make_grid(256, 256, 16 * np.pi, 16 * np.pi)
        phi = solve_ground_state(2, 1.0, grid).profile
        t = grid.lx / 4
        traj = evolve(phi, _config(grid, T=t, dt=1e-3, diagnostic_stride=1000, snapshot_stride=10 ** 6))
        assert _rel(traj.final, traveling_wave(phi, 1.0, t)) <= 1e-3


class TestCoupledSystem:

    @pytest.fixture
    def split(self, small_grid):
        u0 = field_from_function(small_grid, lambda X, Y: 0.8 * np.exp(-(X ** 2 + Y ** 2) / 2) * np.cos(2 * X))
        return u0, low_high_split(u0, 2.0)

    def test_needs_k2(self, split, small_grid):
        _, pair = split
        with pytest.raises(ParameterError):
            coupled_evolve(pair, _config(small_grid, k=3, T=0.01))

    def test_reconstruction_matches_direct_run(self, split, small_grid):
        u0, pair = split
        cfg = _config(small_grid, T=0.1)
        coupled = coupled_evolve(pair, cfg)
        direct = evolve(u0, cfg)
        assert _rel(reconstruct(coupled.final, coupled.w0), direct.final) <= 1e-6
        v_plus_w = coupled.final.v.with_data(spectrum(coupled.final.v) + spectrum(coupled.final.w))
        assert _rel(v_plus_w, direct.final) <= 1e-6

    def test_stage_rule_keeps_linear_identity(self, split, small_grid):
        _, pair = split
        coupled = coupled_evolve(pair, _config(small_grid, T=0.1))
        end = coupled.final
        linear = spectrum(apply_group(pair.w, end.t))
        residual = spectrum(end.w) - linear - spectrum(end.z)
        assert np.abs(residual).max() <= 1e-10 * np.abs(spectrum(end.w)).max()

    def test_trapezoid_rule_close_to_stage(self, split, small_grid):
        _, pair = split
        cfg = _config(small_grid, T=0.1)
        stage = coupled_evolve(pair, cfg)
        trap = coupled_evolve(pair, cfg, rule=AccumulationRule.TRAPEZOID)
        assert trap.rule is AccumulationRule.TRAPEZOID
        diff = np.linalg.norm(spectrum(trap.final.z) - spectrum(stage.final.z))
        assert diff <= 1e-3 * np.linalg.norm(spectrum(stage.final.z))

    def test_opposite_sign_convention(self, split, small_grid):
        u0, pair = split
        cfg = _config(small_grid, T=0.05)
        flipped = coupled_evolve(pair, cfg, convention=DuhamelConvention.PLUS)
        direct = evolve(u0, cfg)
        rebuilt = reconstruct(flipped.final, flipped.w0, DuhamelConvention.PLUS)
        assert _rel(rebuilt, direct.final) <= 1e-6

    def test_norm_histories(self, split, small_grid):
        _, pair = split
        coupled = coupled_evolve(pair, _config(small_grid, T=0.02, dt=1e-3))
        assert len(coupled.times) == len(coupled.v_h1) == len(coupled.z_h1) == 21
        assert coupled.z_h1[0] == 0.0
        assert coupled.sup_v_h1 >= coupled.v_h1[0]
