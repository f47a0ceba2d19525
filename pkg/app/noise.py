# File: app/noise.py
"""
Smoothing operators, operator norms, seeded Wiener processes and the additive
and multiplicative stochastic convolutions driven by them.

Complex Brownian increments use E|Δβ|^2 = 2·dt (real and imaginary parts each
N(0, dt)). Real noise is built by symmetrising: Δβ_{-n} = conj(Δβ_n).
"""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np

from models import NoiseError, SpectralError, SpectralField, TorusSpec
from spectral import apply_semigroup, ball_mask, project_leq, truncated_product

logger = logging.getLogger(__name__)


class NoiseMode(Enum):
    ADDITIVE_ITO = "additive-ito"
    MULTIPLICATIVE_ITO = "multiplicative-ito"
    MULTIPLICATIVE_STRATONOVICH = "multiplicative-stratonovich-real"

    @property
    def multiplicative(self) -> bool:
        return self is not NoiseMode.ADDITIVE_ITO


class OperatorKind(Enum):
    DIAGONAL = "diagonal"
    DENSE = "dense"


def _reversed(arr: np.ndarray, axes: int) -> np.ndarray:
    """Array indexed by -n instead of n on the first `axes` centered axes."""
    return arr[(slice(None, None, -1),) * axes]


@dataclass(frozen=True, eq=False)
class SmoothingOperator:
    """
    Linear map φ acting on Wiener increments. Diagonal operators carry one
    multiplier per mode; dense ones a (K, K) matrix over flattened modes.
    """
    spec: TorusSpec
    kind: OperatorKind
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.complex128)
        expected = self.spec.shape if self.kind is OperatorKind.DIAGONAL else (self.spec.mode_count,) * 2
        if data.shape != expected:
            raise NoiseError(f"{self.kind.value} operator data has shape {data.shape}, expected {expected}")
        if not np.all(np.isfinite(data)):
            raise NoiseError("operator entries must be finite")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @classmethod
    def diagonal(cls, spec: TorusSpec, multiplier) -> "SmoothingOperator":
        return cls(spec, OperatorKind.DIAGONAL, np.broadcast_to(multiplier, spec.shape))

    @classmethod
    def zero(cls, spec: TorusSpec) -> "SmoothingOperator":
        return cls.diagonal(spec, 0.0)

    @classmethod
    def indicator(cls, spec: TorusSpec, radius: float, amplitude: float = 1.0) -> "SmoothingOperator":
        return cls.diagonal(spec, amplitude * ball_mask(spec, radius))

    @classmethod
    def power_law(cls, spec: TorusSpec, a: float, amplitude: float = 1.0) -> "SmoothingOperator":
        """Multiplier amplitude·<n>^{-a}."""
        return cls.diagonal(spec, amplitude * spec.bracket ** (-a))

    @classmethod
    def dense(cls, spec: TorusSpec, matrix) -> "SmoothingOperator":
        return cls(spec, OperatorKind.DENSE, matrix)

    @property
    def is_diagonal(self) -> bool:
        return self.kind is OperatorKind.DIAGONAL

    def matrix(self) -> np.ndarray:
        if self.is_diagonal:
            return np.diag(self.data.ravel())
        return self.data

    def projected(self, radius: float) -> "SmoothingOperator":
        """P_{<=radius} φ restricted to increments with |j| <= radius."""
        mask = ball_mask(self.spec, radius)
        if self.is_diagonal:
            return SmoothingOperator.diagonal(self.spec, np.where(mask, self.data, 0.0))
        flat = mask.ravel()
        return SmoothingOperator.dense(self.spec, self.data * np.outer(flat, flat))

    def apply(self, increments: np.ndarray) -> np.ndarray:
        if increments.shape != self.spec.shape:
            raise NoiseError(f"increment shape {increments.shape} does not match {self.spec.shape}")
        if self.is_diagonal:
            return self.data * increments
        return (self.data @ increments.ravel()).reshape(self.spec.shape)

    def is_identity(self) -> bool:
        if self.is_diagonal:
            return bool(np.allclose(self.data, 1.0))
        return bool(np.allclose(self.data, np.eye(self.spec.mode_count)))

    def is_real_preserving(self) -> bool:
        """φ maps conjugate-symmetric increments to conjugate-symmetric coefficients."""
        if self.is_diagonal:
            return bool(np.allclose(_reversed(self.data, self.spec.d), np.conj(self.data)))
        tensor = self.data.reshape(self.spec.shape * 2)
        return bool(np.allclose(_reversed(tensor, 2 * self.spec.d), np.conj(tensor)))

    def symmetrized(self) -> "SmoothingOperator":
        """Real-preserving part (φ(n, j) + conj φ(-n, -j)) / 2; a real-preserving φ is returned unchanged."""
        if self.is_diagonal:
            return SmoothingOperator.diagonal(self.spec, (self.data + np.conj(_reversed(self.data, self.spec.d))) / 2)
        tensor = self.data.reshape(self.spec.shape * 2)
        symmetric = (tensor + np.conj(_reversed(tensor, 2 * self.spec.d))) / 2
        return SmoothingOperator.dense(self.spec, symmetric.reshape(self.data.shape))

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "d": self.spec.d,
            "N": self.spec.cutoff,
            "hs": {str(s): hs_norm(self, s) for s in (0.0, 1.0)},
        }


def _weighted_columns(op: SmoothingOperator, weights: np.ndarray) -> np.ndarray:
    """Per-column sums sum_n weights(n)|φ[n, j]|^2, indexed by j."""
    if op.is_diagonal:
        return (weights * np.abs(op.data) ** 2).ravel()
    return (weights.ravel()[:, None] * np.abs(op.data) ** 2).sum(axis=0)


def hs_norm(op: SmoothingOperator, s: float = 0.0) -> float:
    """||φ||_{HS(L^2, H^s)} = sqrt(sum_j sum_n <n>^{2s}|φ[n, j]|^2)."""
    return math.sqrt(float(_weighted_columns(op, op.spec.bracket ** (2 * s)).sum()))


def grad_hs_norm(op: SmoothingOperator) -> float:
    """Hilbert-Schmidt norm weighted by ω(n); drives the energy of additive noise."""
    return math.sqrt(float(_weighted_columns(op, op.spec.omega).sum()))


def flsr_norm(op: SmoothingOperator, s: float, r: float) -> float:
    """
    sqrt(sum_j ||φe_j||^2_{FL^{s,r}}). Columns of a diagonal operator are single
    modes, so there it coincides with the Hilbert-Schmidt H^s norm for every r.
    """
    if r < 1:
        raise NoiseError(f"exponent r must be >= 1, got {r}")
    if op.is_diagonal:
        return hs_norm(op, s)
    weighted = op.spec.bracket.ravel()[:, None] ** s * np.abs(op.data)
    if math.isinf(r):
        columns = weighted.max(axis=0)
    else:
        columns = np.sum(weighted ** r, axis=0) ** (1.0 / r)
    return math.sqrt(float(np.sum(columns ** 2)))


class WienerState:
    """
    Seeded cylindrical Wiener process on the mode set. Optionally records every
    increment, or replays a supplied sequence instead of sampling.
    """

    def __init__(self, spec: TorusSpec, seed: int | None = None, real: bool = False,
                 record: bool = False, t: float = 0.0):
        self.spec = spec
        self.seed = seed
        self.real = real
        self.record = record
        self.t = t
        self.beta = np.zeros(spec.shape, dtype=np.complex128)
        self.increments: list[np.ndarray] = []
        self._rng = np.random.default_rng(seed)
        self._replay: deque | None = None

    @classmethod
    def replaying(cls, spec: TorusSpec, increments, real: bool = False, t: float = 0.0) -> "WienerState":
        state = cls(spec, seed=None, real=real, t=t)
        state._replay = deque(np.asarray(inc, dtype=np.complex128) for inc in increments)
        logger.debug("replaying %d Wiener increments", len(state._replay))
        return state

    def _draw(self, dt: float) -> np.ndarray:
        scale = math.sqrt(dt)
        z = self._rng.normal(0.0, scale, self.spec.shape) + 1j * self._rng.normal(0.0, scale, self.spec.shape)
        if self.real:
            z = (z + np.conj(_reversed(z, self.spec.d))) / math.sqrt(2.0)
        return z

    def sample_increment(self, dt: float) -> np.ndarray:
        if not (dt > 0 and math.isfinite(dt)):
            raise NoiseError(f"increment step must be positive, got {dt}")
        if self._replay is not None:
            if not self._replay:
                raise NoiseError("replayed Wiener path is exhausted")
            increment = self._replay.popleft()
        else:
            increment = self._draw(dt)
        self.beta = self.beta + increment
        self.t += dt
        if self.record:
            self.increments.append(increment.copy())
        return increment


def coarsen_increments(increments, factor: int) -> list[np.ndarray]:
    """Sum consecutive groups of `factor` fine increments (Brownian coupling across step sizes)."""
    if factor < 1:
        raise NoiseError(f"coarsening factor must be >= 1, got {factor}")
    if len(increments) % factor:
        raise NoiseError(f"{len(increments)} increments do not split into groups of {factor}")
    return [np.sum(increments[i:i + factor], axis=0) for i in range(0, len(increments), factor)]


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    mode: NoiseMode
    operator: SmoothingOperator

    def __post_init__(self):
        if not isinstance(self.mode, NoiseMode):
            object.__setattr__(self, "mode", NoiseMode(self.mode))
        spec = self.operator.spec
        if spec.cutoff > 0 and self.operator.is_identity():
            raise NoiseError("identity smoothing operator (space-time white noise) is not supported")
        if self.mode is NoiseMode.MULTIPLICATIVE_STRATONOVICH:
            if not self.operator.is_real_preserving():
                raise NoiseError("real Stratonovich noise needs an operator with φ(-n, -j) = conj φ(n, j)")

    @property
    def real(self) -> bool:
        return self.mode is NoiseMode.MULTIPLICATIVE_STRATONOVICH

    @cached_property
    def ball_operator(self) -> SmoothingOperator:
        """P_{<=N} φ restricted to |j| <= N: the operator the steppers actually apply."""
        return self.operator.projected(self.operator.spec.cutoff)

    def new_wiener(self, seed: int | None, record: bool = False, t: float = 0.0) -> WienerState:
        return WienerState(self.operator.spec, seed, real=self.real, record=record, t=t)

    def to_dict(self):
        return {"mode": self.mode.value, "operator": self.operator.to_dict()}


def convolve_additive_step(psi: SpectralField, op: SmoothingOperator, wiener: WienerState, dt: float) -> SpectralField:
    """One step of Ψ(t+dt) = S(dt)Ψ(t) + φΔW."""
    if not (dt > 0 and math.isfinite(dt)):
        raise NoiseError(f"step must be positive, got {dt}")
    if psi.spec != op.spec:
        raise SpectralError("stochastic convolution and operator live on different mode sets")
    increment = wiener.sample_increment(dt)
    return psi.replace(apply_semigroup(psi, dt).coeffs + op.apply(increment))


def convolve_multiplicative_step(psi: SpectralField, u: SpectralField, op: SmoothingOperator,
                                 wiener: WienerState, dt: float) -> SpectralField:
    """
    One step of Ψ_u(t+dt) = S(dt)(Ψ_u(t) - i·P_{<=N}(u·φΔW)) with u taken at the
    left endpoint, the Itô sum behind the multiplicative Euler scheme.
    """
    if not (dt > 0 and math.isfinite(dt)):
        raise NoiseError(f"step must be positive, got {dt}")
    if psi.spec != op.spec or u.spec != op.spec:
        raise SpectralError("stochastic convolution, solution and operator live on different mode sets")
    increment = wiener.sample_increment(dt)
    kick = project_leq(truncated_product(u, SpectralField(op.spec, op.apply(increment))), op.spec.cutoff)
    return apply_semigroup(psi.replace(psi.coeffs - 1j * kick.coeffs), dt)
