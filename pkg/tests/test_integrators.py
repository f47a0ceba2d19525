"""Steppers, evolution drivers, truncation and the local-window machinery."""

import numpy as np
import pytest

from functionals import energy, mass, xsb_norm
from integrators import (
    Scheme,
    SolverState,
    StepperConfig,
    cutoff_factor,
    eta,
    evolve,
    evolve_state,
    evolve_subdivided,
    evolve_truncated,
    exponential_euler_drift,
    local_window,
    s_crit,
    step,
    step_count,
    subdivision_plan,
    theta,
    xsb_apriori_bound,
)
from models import NonlinearitySpec, SchemeError, Sign, SpectralField, TorusSpec
from noise import (
    NoiseMode,
    NoiseSpec,
    SmoothingOperator,
    WienerState,
    coarsen_increments,
    convolve_additive_step,
    convolve_multiplicative_step,
)
from spectral import apply_semigroup


def zero_noise(spec, mode):
    return NoiseSpec(mode, SmoothingOperator.zero(spec))


def cosine_datum(spec, amplitude=0.5):
    coeffs = np.zeros(spec.shape, dtype=complex)
    coeffs[spec.index(0)] = amplitude
    coeffs[spec.index(1)] = coeffs[spec.index(-1)] = amplitude / 4
    return SpectralField(spec, coeffs)


class TestStepperConfig:
    def test_scheme_noise_mismatch(self, line):
        with pytest.raises(SchemeError, match="expects noise"):
            StepperConfig(Scheme.STRANG, 0.01, noise=zero_noise(line, NoiseMode.ADDITIVE_ITO))
        with pytest.raises(SchemeError, match="expects noise"):
            StepperConfig(Scheme.ITO_EULER, 0.01)

    def test_rejects_bad_step(self):
        with pytest.raises(SchemeError, match="positive"):
            StepperConfig(Scheme.STRANG, 0.0)

    def test_midpoint_iterations_bounded(self, line):
        noise = zero_noise(line, NoiseMode.MULTIPLICATIVE_STRATONOVICH)
        with pytest.raises(SchemeError, match="iterations"):
            StepperConfig(Scheme.STRAT_MIDPOINT, 0.01, noise=noise, strat_iterations=5)

    def test_scheme_from_string(self):
        assert StepperConfig("deterministic-strang", 0.1).scheme is Scheme.STRANG


class TestStep:
    def test_zero_noise_schemes_agree(self, random_line_field, line, cubic):
        dt = 0.01
        expected = exponential_euler_drift(random_line_field, cubic, dt)
        for scheme, mode in [
            (Scheme.ADDITIVE_EXP_EULER, NoiseMode.ADDITIVE_ITO),
            (Scheme.ITO_EULER, NoiseMode.MULTIPLICATIVE_ITO),
            (Scheme.STRAT_MIDPOINT, NoiseMode.MULTIPLICATIVE_STRATONOVICH),
        ]:
            cfg = StepperConfig(scheme, dt, cubic, zero_noise(line, mode))
            out = step(SolverState.start(random_line_field, cfg, seed=1), cfg)
            np.testing.assert_allclose(out.field.coeffs, expected.coeffs, atol=1e-12)

    def test_scalar_mode_closed_form(self, cubic):
        spec = TorusSpec(1, 0)
        c = 0.8 + 0.3j
        cfg = StepperConfig(Scheme.STRANG, 1e-3, cubic)
        state = SolverState.start(SpectralField.constant(spec, c), cfg)
        for _ in range(1000):
            state = step(state, cfg)
        exact = c * np.exp(1j * abs(c) ** 2 * state.t)
        assert state.t == pytest.approx(1.0)
        assert abs(state.field.coeffs[0] - exact) < 1e-10

    def test_linear_additive_path_matches_convolution(self, random_line_field, line):
        noise = NoiseSpec(NoiseMode.ADDITIVE_ITO, SmoothingOperator.power_law(line, 1.0, 0.3))
        cfg = StepperConfig(Scheme.ADDITIVE_EXP_EULER, 0.01, NonlinearitySpec(1, enabled=False), noise)
        state = SolverState.start(random_line_field, cfg, seed=42)
        psi = SpectralField.zeros(line)
        shadow = WienerState(line, seed=42)
        for _ in range(20):
            state = step(state, cfg)
            psi = convolve_additive_step(psi, noise.ball_operator, shadow, 0.01)
        expected = apply_semigroup(random_line_field, state.t).coeffs - 1j * psi.coeffs
        np.testing.assert_allclose(state.field.coeffs, expected, atol=1e-12)

    def test_linear_ito_path_matches_multiplicative_convolution(self, random_line_field, line):
        noise = NoiseSpec(NoiseMode.MULTIPLICATIVE_ITO, SmoothingOperator.power_law(line, 1.0, 0.3))
        cfg = StepperConfig(Scheme.ITO_EULER, 0.01, NonlinearitySpec(1, enabled=False), noise)
        state = SolverState.start(random_line_field, cfg, seed=17)
        psi = SpectralField.zeros(line)
        shadow = WienerState(line, seed=17)
        for _ in range(20):
            psi = convolve_multiplicative_step(psi, state.field, noise.ball_operator, shadow, 0.01)
            state = step(state, cfg)
        expected = apply_semigroup(random_line_field, state.t).coeffs + psi.coeffs
        np.testing.assert_allclose(state.field.coeffs, expected, atol=1e-12)

    def test_start_projects_onto_ball(self, cubic):
        spec = TorusSpec(2, 3)
        cfg = StepperConfig(Scheme.STRANG, 0.01, cubic)
        state = SolverState.start(SpectralField.mode(spec, (3, 3)), cfg)
        assert not np.any(state.field.coeffs)

    def test_blow_up_stops_state(self, line):
        cfg = StepperConfig(Scheme.ADDITIVE_EXP_EULER, 0.1, NonlinearitySpec(1, Sign.FOCUSING),
                            zero_noise(line, NoiseMode.ADDITIVE_ITO))
        state = SolverState.start(SpectralField.constant(line, 1e120), cfg, seed=0)
        out = step(state, cfg)
        assert out.stopped
        assert out.blowup_time == pytest.approx(0.1)
        with pytest.raises(SchemeError, match="stopped"):
            step(out, cfg)

    def test_noisy_step_needs_wiener(self, random_line_field, line, cubic):
        cfg = StepperConfig(Scheme.ADDITIVE_EXP_EULER, 0.1, cubic, zero_noise(line, NoiseMode.ADDITIVE_ITO))
        with pytest.raises(SchemeError, match="Wiener"):
            step(SolverState(random_line_field), cfg)


class TestEvolve:
    def test_step_count(self):
        assert step_count(0.0, 0.1, 0.01) == 10
        assert step_count(0.0, 0.105, 0.01) == 11
        with pytest.raises(SchemeError):
            step_count(1.0, 0.5, 0.1)

    def test_zero_steps(self, random_line_field, cubic):
        cfg = StepperConfig(Scheme.STRANG, 0.01, cubic)
        traj = evolve(SolverState.start(random_line_field, cfg), cfg, 0.0)
        assert len(traj) == 1
        np.testing.assert_array_equal(traj.final.coeffs, random_line_field.coeffs)

    def test_stride_and_observers(self, random_line_field, cubic):
        cfg = StepperConfig(Scheme.STRANG, 0.01, cubic)
        seen = []
        traj = evolve(SolverState.start(random_line_field, cfg), cfg, 0.1, [lambda s: seen.append(s.t)], stride=3)
        np.testing.assert_allclose(traj.times, [0.0, 0.03, 0.06, 0.09])
        np.testing.assert_allclose(seen, [0.03, 0.06, 0.09, 0.1])

    def test_blow_up_recorded_on_trajectory(self, line):
        cfg = StepperConfig(Scheme.ADDITIVE_EXP_EULER, 0.1, NonlinearitySpec(1, Sign.FOCUSING),
                            zero_noise(line, NoiseMode.ADDITIVE_ITO))
        final, traj = evolve_state(SolverState.start(SpectralField.constant(line, 1e120), cfg, seed=0), cfg, 1.0)
        assert final.stopped
        assert traj.blew_up
        assert len(traj) == 1

    @pytest.mark.slow
    def test_deterministic_conservation(self, cubic):
        spec = TorusSpec(1, 32)
        cfg = StepperConfig(Scheme.STRANG, 1e-4, cubic)
        u0 = cosine_datum(spec)
        final, _ = evolve_state(SolverState.start(u0, cfg), cfg, 1.0, stride=100)
        assert abs(mass(final.field) - mass(u0)) / mass(u0) <= 1e-10
        assert abs(energy(final.field, cubic) - energy(u0, cubic)) / abs(energy(u0, cubic)) <= 1e-6


class TestTruncation:
    def test_eta_profile(self):
        assert eta(0.0) == eta(0.5) == eta(1.0) == 1.0
        assert eta(1.5) == pytest.approx(0.5)
        assert eta(-0.5) == pytest.approx(0.5)
        assert eta(2.0) == eta(-1.0) == eta(3.0) == 0.0
        assert eta(1.0 + 1e-4) == pytest.approx(1.0, abs=1e-10)

    def test_cutoff_factor_power(self):
        assert cutoff_factor(1.5, 1.0, 1) == pytest.approx(0.125)

    def test_large_radius_matches_untruncated(self, random_line_field, line, cubic):
        noise = NoiseSpec(NoiseMode.ADDITIVE_ITO, SmoothingOperator.power_law(line, 1.0, 0.2))
        cfg = StepperConfig(Scheme.ADDITIVE_EXP_EULER, 0.01, cubic, noise)
        plain = evolve(SolverState.start(random_line_field, cfg, seed=3), cfg, 0.2)
        truncated, tau = evolve_truncated(SolverState.start(random_line_field, cfg, seed=3), cfg,
                                          1e6, 0.0, 0.375, 0.2)
        assert tau is None
        np.testing.assert_allclose(truncated.coeffs, plain.coeffs, atol=1e-12)

    def test_tiny_radius_is_linear(self, random_line_field, line, cubic):
        noise = NoiseSpec(NoiseMode.ADDITIVE_ITO, SmoothingOperator.power_law(line, 1.0, 0.2))
        cfg = StepperConfig(Scheme.ADDITIVE_EXP_EULER, 0.01, cubic, noise)
        linear = StepperConfig(Scheme.ADDITIVE_EXP_EULER, 0.01, NonlinearitySpec(1, enabled=False), noise)
        plain = evolve(SolverState.start(random_line_field, linear, seed=5), linear, 0.1)
        truncated, tau = evolve_truncated(SolverState.start(random_line_field, cfg, seed=5), cfg,
                                          1e-12, 0.0, 0.25, 0.1)
        assert tau == 0.0
        np.testing.assert_allclose(truncated.coeffs, plain.coeffs, atol=1e-12)

    def test_finite_radius_matches_untruncated_until_tau(self, random_line_field, line, cubic):
        noise = NoiseSpec(NoiseMode.ADDITIVE_ITO, SmoothingOperator.power_law(line, 1.0, 0.2))
        cfg = StepperConfig(Scheme.ADDITIVE_EXP_EULER, 0.01, cubic, noise)
        plain = evolve(SolverState.start(random_line_field, cfg, seed=3), cfg, 0.2)
        R = 0.5 * xsb_norm(plain, 0.0, 0.0)
        truncated, tau = evolve_truncated(SolverState.start(random_line_field, cfg, seed=3), cfg,
                                          R, 0.0, 0.0, 0.2)
        assert 0.0 < tau < 0.2
        before = truncated.times <= tau + 1e-12
        assert before.sum() >= 2
        np.testing.assert_allclose(truncated.coeffs[before], plain.coeffs[before], atol=1e-12)

    def test_rejects_bad_parameters(self, random_line_field, cubic):
        cfg = StepperConfig(Scheme.STRANG, 0.01, cubic)
        with pytest.raises(SchemeError, match="R must be positive"):
            evolve_truncated(SolverState.start(random_line_field, cfg), cfg, 0.0, 0.0, 0.25, 0.1)
        with pytest.raises(SchemeError, match="b"):
            evolve_truncated(SolverState.start(random_line_field, cfg), cfg, 1.0, 0.0, 0.5, 0.1)


class TestLocalWindows:
    def test_critical_regularity(self):
        assert s_crit(1, 1) == -0.5
        assert s_crit(2, 1) == 0.0

    def test_theta(self):
        assert theta(1, 0.25) == 8.0
        with pytest.raises(ValueError):
            theta(1, 0.0)

    def test_window_scaling(self):
        base = local_window(1.0, 0.5, 2.0, 3.0)
        assert local_window(2.0, 1.0, 2.0, 3.0) == pytest.approx(base / 8)
        assert base == pytest.approx(2.0 * 1.5 ** -3)

    @pytest.mark.parametrize("args, name", [
        ((0.0, 1.0, 1.0, 1.0), "datum norm"),
        ((1.0, 0.0, 1.0, 1.0), "noise norm"),
        ((1.0, 1.0, -1.0, 1.0), "window constant"),
        ((1.0, 1.0, 1.0, 0.0), "window exponent"),
    ])
    def test_window_rejects_non_positive_inputs(self, args, name):
        with pytest.raises(ValueError, match=name):
            local_window(*args)

    def test_window_rejects_negative_norm_offset_by_other(self):
        with pytest.raises(ValueError, match="datum norm"):
            local_window(-0.5, 1.0, 1.0, 1.0)

    def test_subdivision_plan(self):
        delta, windows = subdivision_plan(1.0, 1.0, 1.0, 1.0, 1.0)
        assert delta == pytest.approx(0.5)
        assert windows == 2

    def test_subdivided_run(self, cubic):
        spec = TorusSpec(1, 8)
        cfg = StepperConfig(Scheme.STRANG, 0.01, cubic)
        state, report = evolve_subdivided(SolverState.start(cosine_datum(spec, 0.2), cfg), cfg,
                                          T=0.2, R=9.5, L=0.5, c=1.0, theta_exp=1.0, s=1.0)
        assert report.windows == 2
        assert [bp["t"] for bp in report.breakpoints] == pytest.approx([0.1, 0.2])
        assert report.first_failure is None
        assert state.t == pytest.approx(0.2)

    def test_subdivided_reports_failure(self, cubic):
        spec = TorusSpec(1, 8)
        cfg = StepperConfig(Scheme.STRANG, 0.01, cubic)
        _, report = evolve_subdivided(SolverState.start(cosine_datum(spec, 1.0), cfg), cfg,
                                      T=0.05, R=0.1, L=0.1, c=1.0, theta_exp=1.0, s=0.0)
        assert report.first_failure == 1
        assert not report.breakpoints[0]["ok"]


class TestAprioriBound:
    def test_cubic_root(self):
        x = xsb_apriori_bound(0.1, 1.0, 1.0, 1, 0.5)
        assert x == pytest.approx(0.10103, abs=1e-4)
        assert x ** 3 - x + 0.1 == pytest.approx(0.0, abs=1e-10)

    def test_no_root(self):
        assert xsb_apriori_bound(1.0, 1.0, 1.0, 1, 0.5) is None

    def test_zero_datum(self):
        assert xsb_apriori_bound(0.0, 1.0, 1.0, 1, 0.5) == 0.0

    def test_shrinking_window_lowers_bound(self):
        assert xsb_apriori_bound(0.3, 1.0, 0.1, 1, 0.5) < xsb_apriori_bound(0.3, 1.0, 1.0, 1, 0.5)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            xsb_apriori_bound(0.1, 0.0, 1.0, 1, 0.5)


def rms_errors(u0, cfg, reference_dt, factors, horizon, paths):
    """
    RMS distance at `horizon` between runs at reference_dt·factor and a run at
    reference_dt, all driven by the same Brownian paths.
    """
    spec = u0.spec
    fine_cfg = StepperConfig(cfg.scheme, reference_dt, cfg.nl, cfg.noise)
    errors = np.zeros(len(factors))
    for seed in range(paths):
        reference, _ = evolve_state(SolverState.start(u0, fine_cfg, seed, record=True), fine_cfg, horizon)
        for i, factor in enumerate(factors):
            coarse_cfg = StepperConfig(cfg.scheme, reference_dt * factor, cfg.nl, cfg.noise)
            state = SolverState.start(u0, coarse_cfg, seed)
            state.wiener = WienerState.replaying(spec, coarsen_increments(reference.wiener.increments, factor))
            coarse, _ = evolve_state(state, coarse_cfg, horizon)
            errors[i] += np.sum(np.abs(coarse.field.coeffs - reference.field.coeffs) ** 2)
    return np.sqrt(errors / paths)


class TestStrongConvergence:
    def test_linear_additive_error_halves(self):
        spec = TorusSpec(1, 4)
        noise = NoiseSpec(NoiseMode.ADDITIVE_ITO, SmoothingOperator.power_law(spec, 1.0, 0.5))
        cfg = StepperConfig(Scheme.ADDITIVE_EXP_EULER, 0.01, NonlinearitySpec(1, enabled=False), noise)
        errors = rms_errors(cosine_datum(spec), cfg, 0.00125, [8, 4, 2], 0.5, 20)
        assert np.all(errors > 0)
        assert np.all(errors[1:] / errors[:-1] < 0.7)

    def test_nonlinear_additive_error_shrinks(self, cubic):
        spec = TorusSpec(1, 4)
        noise = NoiseSpec(NoiseMode.ADDITIVE_ITO, SmoothingOperator.power_law(spec, 1.0, 0.5))
        cfg = StepperConfig(Scheme.ADDITIVE_EXP_EULER, 0.01, cubic, noise)
        errors = rms_errors(cosine_datum(spec), cfg, 0.00125, [8, 4, 2], 0.5, 20)
        assert np.all(errors[1:] / errors[:-1] < 0.85)
