"""Conserved quantities, Sobolev-type norms and the discrete X^{s,b} norm."""
import math
from types import SimpleNamespace

import numpy as np
import pytest
from scipy.integrate import quad

from functionals import (
    FunctionalsObserver,
    RunningXsbNorm,
    energy,
    fl_norm,
    gradient_norm_sq,
    mass,
    sobolev_norm,
    xsb_from_samples,
    xsb_norm,
)
from models import NonlinearitySpec, Sign, SpectralError, SpectralField, TorusSpec, Trajectory
from spectral import apply_semigroup, physical_nodes, random_field, to_physical, to_spectral


def free_trajectory(u0: SpectralField, h: float, samples: int) -> Trajectory:
    times = h * np.arange(samples)
    return Trajectory.from_fields(times, [apply_semigroup(u0, t) for t in times])


class TestConservedQuantities:
    def test_energy_invariant_under_global_phase(self, random_line_field, cubic):
        base = energy(random_line_field, cubic)
        for angle in (0.3, 1.0, math.pi):
            rotated = random_line_field.scaled(np.exp(1j * angle))
            assert energy(rotated, cubic) == pytest.approx(base, rel=1e-14)

    def test_mass_of_constant(self, line):
        assert mass(SpectralField.constant(line, 1.0)) == pytest.approx(0.5)

    def test_mass_of_cosine(self, line):
        x = physical_nodes(line)[0]
        assert mass(to_spectral(np.cos(2 * np.pi * x), line)) == pytest.approx(0.25)

    def test_energy_of_constant(self, line):
        one = SpectralField.constant(line, 1.0)
        assert energy(one, NonlinearitySpec(1, Sign.DEFOCUSING)) == pytest.approx(0.25)
        assert energy(one, NonlinearitySpec(1, Sign.FOCUSING)) == pytest.approx(-0.25)

    def test_energy_of_quintic_constant(self, line):
        one = SpectralField.constant(line, 2.0)
        # |u|^6 / 6 with |u| = 2
        assert energy(one, NonlinearitySpec(2)) == pytest.approx(64 / 6)

    def test_energy_kinetic_only_when_disabled(self, random_line_field):
        nl = NonlinearitySpec(1, enabled=False)
        assert energy(random_line_field, nl) == pytest.approx(0.5 * gradient_norm_sq(random_line_field))

    def test_potential_is_exact_on_padded_grid(self, random_line_field, cubic):
        fine = to_physical(random_line_field, 6)
        potential = np.mean(np.abs(fine) ** 4) / 4
        kinetic = 0.5 * gradient_norm_sq(random_line_field)
        assert energy(random_line_field, cubic) == pytest.approx(kinetic + potential, rel=1e-12)


class TestGradient:
    def test_finite_difference(self):
        spec = TorusSpec(1, 3, (2.0,))
        x = physical_nodes(spec)[0]
        f = to_spectral(np.cos(2 * np.pi * x / 2.0) + 0.3 * np.sin(2 * np.pi * 2 * x / 2.0), spec)
        pad = 60
        fine = to_physical(f, pad)
        dx = 2.0 / fine.shape[0]
        derivative = (np.roll(fine, -1) - np.roll(fine, 1)) / (2 * dx)
        assert gradient_norm_sq(f, physical=True) == pytest.approx(np.mean(np.abs(derivative) ** 2), rel=2e-3)

    def test_anisotropic_single_mode(self, plane):
        f = SpectralField.mode(plane, (1, 1))
        assert gradient_norm_sq(f) == pytest.approx(1.25)
        assert gradient_norm_sq(f, physical=True) == pytest.approx((2 * math.pi) ** 2 * 1.25)


class TestSobolevNorms:
    def test_sobolev_zero_is_l2(self, random_line_field):
        assert sobolev_norm(random_line_field, 0.0) ** 2 == pytest.approx(2 * mass(random_line_field))

    def test_single_mode(self, line):
        f = SpectralField.mode(line, 3, 2.0)
        assert sobolev_norm(f, 1.0) == pytest.approx(2.0 * math.sqrt(10.0))
        assert fl_norm(f, 1.0, 1.0) == pytest.approx(2.0 * math.sqrt(10.0))

    def test_fl_two_equals_sobolev(self, random_line_field):
        assert fl_norm(random_line_field, 0.5, 2.0) == pytest.approx(sobolev_norm(random_line_field, 0.5))

    def test_fl_decreasing_in_r(self, random_line_field):
        values = [fl_norm(random_line_field, 0.0, r) for r in (1.0, 2.0, 4.0, math.inf)]
        assert values == sorted(values, reverse=True)

    def test_fl_rejects_small_exponent(self, random_line_field):
        with pytest.raises(SpectralError, match="r must be"):
            fl_norm(random_line_field, 0.0, 0.5)


def free_xsb_quadrature(samples: int, h: float, b: float) -> float:
    """sqrt((1/2π)∫ <τ>^{2b}|h·sum_j e^{-iτjh}|^2 dτ) over |τ| <= π/h, one Dirichlet lobe at a time."""
    def integrand(tau):
        if tau == 0:
            return (samples * h) ** 2
        kernel = h * math.sin(samples * tau * h / 2) / math.sin(tau * h / 2)
        return (1 + tau ** 2) ** b * kernel ** 2

    lobe = 2 * math.pi / (samples * h)
    half = sum(quad(integrand, j * lobe, (j + 1) * lobe, limit=200)[0] for j in range(samples // 2))
    return math.sqrt(2 * half / (2 * math.pi))


class TestXsbNorm:
    def test_free_evolution_matches_window_quadrature(self, random_line_field):
        samples, h, b = 64, 1 / 64, 0.375
        expected = free_xsb_quadrature(samples, h, b) * sobolev_norm(random_line_field, 1.0)
        traj = free_trajectory(random_line_field, h, samples)
        assert xsb_norm(traj, 1.0, b) == pytest.approx(expected, rel=1e-3)

    def test_b_zero_is_time_l2(self, rng, line):
        coeffs = np.stack([random_field(line, rng).coeffs for _ in range(12)])
        times = 0.05 * np.arange(12)
        traj = Trajectory(line, times, coeffs)
        expected = math.sqrt(0.05 * sum(sobolev_norm(f, 1.0) ** 2 for f in traj.fields))
        assert xsb_norm(traj, 1.0, 0.0) == pytest.approx(expected, rel=1e-12)

    def test_monotone_in_s_and_b(self, random_line_field):
        traj = free_trajectory(random_line_field, 0.02, 20)
        assert xsb_norm(traj, 0.0, 0.25) <= xsb_norm(traj, 1.0, 0.25)
        assert xsb_norm(traj, 0.5, 0.1) <= xsb_norm(traj, 0.5, 0.4)

    def test_free_evolution_factorises(self, rng, plane):
        u0 = random_field(plane, rng)
        v0 = random_field(plane, rng, gamma=2.0)
        ratios = [
            xsb_norm(free_trajectory(f, 0.01, 32), 1.0, 0.375) / (sobolev_norm(f, 1.0) * math.sqrt(0.32))
            for f in (u0, v0)
        ]
        assert ratios[0] == pytest.approx(ratios[1], rel=1e-10)

    def test_window_none_accepts_large_b(self, random_line_field):
        traj = free_trajectory(random_line_field, 0.05, 8)
        assert xsb_norm(traj, 0.0, 0.75, window="none") > 0

    def test_sharp_window_rejects_large_b(self, random_line_field):
        traj = free_trajectory(random_line_field, 0.05, 8)
        with pytest.raises(SpectralError, match="sharp"):
            xsb_norm(traj, 0.0, 0.5)

    def test_time_padding_must_be_positive(self, random_line_field):
        traj = free_trajectory(random_line_field, 0.05, 8)
        with pytest.raises(SpectralError, match="time padding"):
            xsb_from_samples(traj.spec, traj.times, traj.coeffs, 0.05, 0.0, 0.25, time_pad=0)

    def test_unknown_window(self, random_line_field):
        traj = free_trajectory(random_line_field, 0.05, 4)
        with pytest.raises(SpectralError, match="unknown window"):
            xsb_norm(traj, 0.0, 0.25, window="hann")

    def test_non_uniform_sampling_rejected(self, line):
        traj = Trajectory(line, [0.0, 0.1, 0.25], np.zeros((3,) + line.shape))
        with pytest.raises(SpectralError, match="uniformly"):
            xsb_norm(traj, 0.0, 0.25)

    def test_single_sample_uses_meta_step(self, line):
        traj = Trajectory(line, [0.0], np.ones((1,) + line.shape), meta={"dt": 0.5})
        assert traj.stride() == 0.5


class TestRunningXsbNorm:
    def test_matches_full_computation(self, random_line_field):
        traj = free_trajectory(random_line_field, 0.02, 10)
        running = RunningXsbNorm(traj.spec, 0.5, 0.375, 0.02)
        for t, c in zip(traj.times, traj.coeffs):
            running.push(t, c)
        assert running.value() == pytest.approx(xsb_norm(traj, 0.5, 0.375), rel=1e-12)

    def test_refresh_stride_caches(self, random_line_field):
        traj = free_trajectory(random_line_field, 0.02, 4)
        running = RunningXsbNorm(traj.spec, 0.0, 0.25, 0.02, refresh_stride=3)
        running.push(traj.times[0], traj.coeffs[0])
        first = running.value()
        running.push(traj.times[1], traj.coeffs[1])
        running.push(traj.times[2], traj.coeffs[2])
        assert running.value() == first
        running.push(traj.times[3], traj.coeffs[3])
        assert running.value() == pytest.approx(xsb_norm(traj, 0.0, 0.25), rel=1e-12)

    def test_non_decreasing(self, random_line_field):
        traj = free_trajectory(random_line_field, 0.02, 12)
        running = RunningXsbNorm(traj.spec, 0.0, 0.0, 0.02)
        values = []
        for t, c in zip(traj.times, traj.coeffs):
            running.push(t, c)
            values.append(running.value())
        assert all(b >= a for a, b in zip(values, values[1:]))


class TestFunctionalsObserver:
    def test_rows(self, random_line_field, cubic):
        observer = FunctionalsObserver(cubic, s=1.0)
        observer(SimpleNamespace(field=random_line_field, t=0.0, truncation=None))
        observer(SimpleNamespace(field=random_line_field, t=0.1, truncation=SimpleNamespace(norm=2.5)))
        assert [row["t"] for row in observer.rows] == [0.0, 0.1]
        assert observer.rows[0]["running_xsb"] is None
        assert observer.rows[1]["running_xsb"] == 2.5
        np.testing.assert_allclose(observer.series("mass"), mass(random_line_field))
        assert observer.rows[0]["energy"] == pytest.approx(energy(random_line_field, cubic))
