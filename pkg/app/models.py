# File: app/models.py
"""
Shared domain types: the discrete torus, spectral fields, the power nonlinearity,
trajectories, and the error hierarchy used across the simulator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np


class SpectralError(ValueError):
    """Invalid field, grid or transform input."""


class NonFiniteError(SpectralError):
    """NaN or infinite values in a field or grid."""


class NoiseError(ValueError):
    """Invalid smoothing operator, noise mode or Wiener increment request."""


class SchemeError(ValueError):
    """Scheme/noise mismatch or a step requested on a stopped state."""


class InstabilityError(SchemeError):
    """Explicit step size too large for the current amplitude of a path."""


class EstimateError(ValueError):
    """Parameters outside the hypotheses of the inequality being sampled."""


class ConfigError(ValueError):
    """Configuration violates one or more invariants; `messages` lists all of them."""

    def __init__(self, messages: list[str]):
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


class Sign(Enum):
    DEFOCUSING = "defocusing"
    FOCUSING = "focusing"

    @property
    def factor(self) -> int:
        return 1 if self is Sign.DEFOCUSING else -1


@dataclass(frozen=True)
class TorusSpec:
    """
    Torus T^d with per-axis periods and a cubic mode set |n_j| <= cutoff.
    Coefficient arrays have shape (2N+1,)*d with index i = n + N on every axis.
    """
    d: int
    cutoff: int
    periods: tuple[float, ...] = ()

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise SpectralError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.cutoff < 0:
            raise SpectralError(f"cutoff must be non-negative, got {self.cutoff}")
        periods = tuple(float(p) for p in self.periods) if self.periods else (1.0,) * self.d
        if len(periods) != self.d:
            raise SpectralError(f"expected {self.d} periods, got {len(periods)}")
        if any(not (p > 0 and math.isfinite(p)) for p in periods):
            raise SpectralError(f"periods must be positive, got {periods}")
        object.__setattr__(self, "periods", periods)

    @property
    def side(self) -> int:
        return 2 * self.cutoff + 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.side,) * self.d

    @property
    def mode_count(self) -> int:
        return self.side ** self.d

    @cached_property
    def axis_modes(self) -> np.ndarray:
        return np.arange(-self.cutoff, self.cutoff + 1)

    @cached_property
    def modes(self) -> np.ndarray:
        """Integer mode vectors, shape (d, *shape)."""
        return np.stack(np.meshgrid(*([self.axis_modes] * self.d), indexing="ij"))

    @cached_property
    def omega(self) -> np.ndarray:
        """Dispersion weight sum_j (n_j / alpha_j)^2 (2π omitted)."""
        scaled = [self.modes[j] / self.periods[j] for j in range(self.d)]
        return np.sum(np.square(scaled), axis=0)

    @cached_property
    def norm(self) -> np.ndarray:
        """Euclidean length |n| of the integer mode vector."""
        return np.sqrt(np.sum(np.square(self.modes), axis=0))

    @cached_property
    def bracket(self) -> np.ndarray:
        """Japanese bracket <n> = sqrt(1 + |n|^2)."""
        return np.sqrt(1.0 + np.square(self.norm))

    def index(self, n) -> tuple[int, ...]:
        n = tuple(int(v) for v in np.atleast_1d(n))
        if len(n) != self.d or any(abs(v) > self.cutoff for v in n):
            raise SpectralError(f"mode {n} outside the mode set of {self}")
        return tuple(v + self.cutoff for v in n)

    def enlarged(self, cutoff: int) -> "TorusSpec":
        return TorusSpec(self.d, cutoff, self.periods)

    def to_dict(self):
        return {"d": self.d, "N": self.cutoff, "periods": list(self.periods)}


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients û(n) on the mode set of `spec`. Immutable."""
    spec: TorusSpec
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=np.complex128)
        if coeffs.shape != self.spec.shape:
            if coeffs.size == self.spec.mode_count:
                coeffs = coeffs.reshape(self.spec.shape)
            else:
                raise SpectralError(
                    f"coefficient shape {coeffs.shape} does not match mode set {self.spec.shape}"
                )
        if not np.all(np.isfinite(coeffs)):
            raise NonFiniteError("coefficients must be finite")
        coeffs.flags.writeable = False
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zeros(cls, spec: TorusSpec) -> "SpectralField":
        return cls(spec, np.zeros(spec.shape, dtype=np.complex128))

    @classmethod
    def constant(cls, spec: TorusSpec, value: complex) -> "SpectralField":
        return cls.mode(spec, (0,) * spec.d, value)

    @classmethod
    def mode(cls, spec: TorusSpec, n, amplitude: complex = 1.0) -> "SpectralField":
        coeffs = np.zeros(spec.shape, dtype=np.complex128)
        coeffs[spec.index(n)] = amplitude
        return cls(spec, coeffs)

    def replace(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.spec, coeffs)

    def scaled(self, factor: complex) -> "SpectralField":
        return SpectralField(self.spec, self.coeffs * factor)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.spec, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.spec, self.coeffs - other.coeffs)

    def __repr__(self):
        return f"<SpectralField d={self.spec.d} N={self.spec.cutoff}>"


@dataclass(frozen=True)
class NonlinearitySpec:
    """Power nonlinearity sign·|u|^{2k}u; `enabled=False` switches it off."""
    k: int = 1
    sign: Sign = Sign.DEFOCUSING
    enabled: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise SpectralError(f"nonlinearity power k must be >= 1, got {self.k}")
        if not isinstance(self.sign, Sign):
            object.__setattr__(self, "sign", Sign(self.sign))

    @property
    def degree(self) -> int:
        return 2 * self.k + 1

    def to_dict(self):
        return {"k": self.k, "sign": self.sign.value, "enabled": self.enabled}


@dataclass(eq=False)
class Trajectory:
    """
    Time-stamped sequence of coefficient arrays sharing one TorusSpec.
    `coeffs` has shape (L, *spec.shape); times must be uniformly spaced.
    """
    spec: TorusSpec
    times: np.ndarray
    coeffs: np.ndarray
    blowup_time: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if self.coeffs.shape != (len(self.times),) + self.spec.shape:
            raise SpectralError(
                f"trajectory coefficients {self.coeffs.shape} do not match "
                f"{len(self.times)} samples on {self.spec.shape}"
            )
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise SpectralError("trajectory timestamps must be strictly increasing")

    @classmethod
    def from_fields(cls, times, fields: list[SpectralField], **kwargs) -> "Trajectory":
        if not fields:
            raise SpectralError("trajectory needs at least one field")
        spec = fields[0].spec
        if any(f.spec != spec for f in fields):
            raise SpectralError("all trajectory fields must share one TorusSpec")
        return cls(spec, np.asarray(times, dtype=float), np.stack([f.coeffs for f in fields]), **kwargs)

    def __len__(self):
        return len(self.times)

    def stride(self) -> float:
        """Uniform time step between samples; raises on non-uniform spacing."""
        if len(self.times) < 2:
            return float(self.meta.get("dt", 1.0))
        steps = np.diff(self.times)
        h = float(steps.mean())
        if np.max(np.abs(steps - h)) > 1e-9 * h:
            raise SpectralError("trajectory is not uniformly sampled")
        return h

    @property
    def fields(self) -> list[SpectralField]:
        return [SpectralField(self.spec, c) for c in self.coeffs]

    @property
    def final(self) -> SpectralField:
        return SpectralField(self.spec, self.coeffs[-1])

    @property
    def blew_up(self) -> bool:
        return self.blowup_time is not None
