# File: app/functionals.py
"""
Conserved quantities, Sobolev and Fourier-Lebesgue norms, and the discrete
Bourgain X^{s,b} norm of sampled trajectories.
"""
from __future__ import annotations

import logging
import math

import numpy as np

from models import NonlinearitySpec, SpectralError, SpectralField, TorusSpec, Trajectory
from spectral import dealias_pad, to_physical

logger = logging.getLogger(__name__)

WINDOWS = ("sharp", "none")
DEFAULT_TIME_PAD = 4


def mass(f: SpectralField) -> float:
    """M(u) = ½ sum |û(n)|^2 (Parseval on the unit-volume torus)."""
    return 0.5 * float(np.sum(np.abs(f.coeffs) ** 2))


def gradient_norm_sq(f: SpectralField, physical: bool = False) -> float:
    """
    sum ω(n)|û(n)|^2. With `physical=True` the (2π)^2 factor of the true
    derivative ∂_x e^{2πinx/α} is included.
    """
    weights = f.spec.omega * ((2 * math.pi) ** 2 if physical else 1.0)
    return float(np.sum(weights * np.abs(f.coeffs) ** 2))


def energy(f: SpectralField, nl: NonlinearitySpec) -> float:
    """
    Hamiltonian ½ sum ω|û|^2 + sign/(2k+2)·mean|u|^{2k+2}, the potential part
    evaluated exactly on a pad-(k+1) grid.
    """
    kinetic = 0.5 * gradient_norm_sq(f)
    if not nl.enabled:
        return kinetic
    grid = to_physical(f, dealias_pad(nl.k))
    potential = float(np.mean(np.abs(grid) ** (2 * nl.k + 2)))
    return kinetic + nl.sign.factor * potential / (2 * nl.k + 2)


def sobolev_norm(f: SpectralField, s: float) -> float:
    return math.sqrt(float(np.sum(f.spec.bracket ** (2 * s) * np.abs(f.coeffs) ** 2)))


def fl_norm(f: SpectralField, s: float, r: float) -> float:
    """Fourier-Lebesgue norm || <n>^s û ||_{ℓ^r}."""
    if r < 1:
        raise SpectralError(f"exponent r must be >= 1, got {r}")
    weighted = f.spec.bracket ** s * np.abs(f.coeffs)
    if math.isinf(r):
        return float(weighted.max())
    return float(np.sum(weighted ** r) ** (1.0 / r))


def angular_frequencies(samples: int, h: float) -> np.ndarray:
    return 2 * math.pi * np.fft.fftfreq(samples, d=h)


def _check_window(b: float, window: str):
    if window not in WINDOWS:
        raise SpectralError(f"unknown window {window!r}, expected one of {WINDOWS}")
    if window == "sharp" and not (-0.5 < b < 0.5):
        raise SpectralError(f"sharp time window needs -1/2 < b < 1/2, got b={b}")


def xsb_from_samples(spec: TorusSpec, times: np.ndarray, coeffs: np.ndarray, h: float,
                     s: float, b: float, window: str = "sharp",
                     time_pad: int = DEFAULT_TIME_PAD) -> float:
    """
    Discrete ||u||_{X^{s,b}}: pull the samples back by S(-t_j), zero-pad in time
    (sharp window), take the time DFT times h and weight by <n>^{2s}<τ>^{2b}.
    For b = 0 this is sqrt(h·sum_j ||u_j||_{H^s}^2) exactly.
    """
    _check_window(b, window)
    if time_pad < 1:
        raise SpectralError(f"time padding must be >= 1, got {time_pad}")
    phases = np.exp(-1j * times.reshape((-1,) + (1,) * spec.d) * spec.omega)
    pulled = coeffs * phases
    samples = len(times) * (time_pad if window == "sharp" else 1)
    spectrum = np.fft.fft(pulled, n=samples, axis=0) * h
    tau = angular_frequencies(samples, h)
    time_weight = (1.0 + tau ** 2) ** b
    space_weight = spec.bracket ** (2 * s)
    power = np.sum(space_weight * np.abs(spectrum) ** 2, axis=tuple(range(1, spec.d + 1)))
    return math.sqrt(float(np.sum(time_weight * power)) / (samples * h))


def xsb_norm(traj: Trajectory, s: float, b: float, window: str = "sharp",
             time_pad: int = DEFAULT_TIME_PAD) -> float:
    h = traj.stride()
    return xsb_from_samples(traj.spec, traj.times, traj.coeffs, h, s, b, window, time_pad)


class RunningXsbNorm:
    """
    X^{s,b} norm of the trajectory prefix seen so far. The value is recomputed
    every `refresh_stride` pushes and cached in between.
    """

    def __init__(self, spec: TorusSpec, s: float, b: float, h: float,
                 refresh_stride: int = 1, time_pad: int = DEFAULT_TIME_PAD):
        _check_window(b, "sharp")
        if refresh_stride < 1:
            raise SpectralError(f"refresh stride must be >= 1, got {refresh_stride}")
        self.spec = spec
        self.s = s
        self.b = b
        self.h = h
        self.refresh_stride = refresh_stride
        self.time_pad = time_pad
        self._times: list[float] = []
        self._coeffs: list[np.ndarray] = []
        self._value = 0.0
        self._pending = 0

    def __len__(self):
        return len(self._times)

    def push(self, t: float, coeffs: np.ndarray):
        self._times.append(t)
        self._coeffs.append(np.asarray(coeffs))
        self._pending += 1

    def value(self) -> float:
        if self._times and (self._pending >= self.refresh_stride or len(self._times) == 1):
            self._value = xsb_from_samples(
                self.spec, np.asarray(self._times), np.stack(self._coeffs),
                self.h, self.s, self.b, "sharp", self.time_pad,
            )
            self._pending = 0
        return self._value


class FunctionalsObserver:
    """Collects t, mass, energy, H^s norm and the running X^{s,b} norm (when known) per sample."""

    columns = ("t", "mass", "energy", "hs_norm", "running_xsb")

    def __init__(self, nl: NonlinearitySpec, s: float = 1.0):
        self.nl = nl
        self.s = s
        self.rows: list[dict] = []

    def __call__(self, state):
        f = state.field
        running = state.truncation.norm if state.truncation is not None else None
        self.rows.append({
            "t": state.t,
            "mass": mass(f),
            "energy": energy(f, self.nl),
            "hs_norm": sobolev_norm(f, self.s),
            "running_xsb": running,
        })

    def series(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=float)
