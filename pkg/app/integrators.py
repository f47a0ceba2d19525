# File: app/integrators.py
"""
Time steppers for i∂_t u + Δu = sign|u|^{2k}u + noise, the truncated evolution
with a smooth cutoff on the running X^{s,b} norm, and the local-window
subdivision driver.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable

import numpy as np
from scipy.optimize import brentq

from functionals import RunningXsbNorm, sobolev_norm
from models import NonFiniteError, NonlinearitySpec, SchemeError, SpectralError, SpectralField, Trajectory
from noise import NoiseMode, NoiseSpec, WienerState
from spectral import (
    apply_semigroup,
    nonlinear_phase_flow,
    nonlinear_term,
    project_leq,
    semigroup_phases,
    truncated_product,
)

logger = logging.getLogger(__name__)


class Scheme(Enum):
    STRANG = "deterministic-strang"
    ADDITIVE_EXP_EULER = "additive-exp-euler"
    ITO_EULER = "multiplicative-ito-euler"
    STRAT_MIDPOINT = "multiplicative-strat-midpoint"


SCHEME_NOISE = {
    Scheme.STRANG: None,
    Scheme.ADDITIVE_EXP_EULER: NoiseMode.ADDITIVE_ITO,
    Scheme.ITO_EULER: NoiseMode.MULTIPLICATIVE_ITO,
    Scheme.STRAT_MIDPOINT: NoiseMode.MULTIPLICATIVE_STRATONOVICH,
}

Observer = Callable[["SolverState"], None]


@dataclass(frozen=True)
class StepperConfig:
    scheme: Scheme
    dt: float
    nl: NonlinearitySpec = field(default_factory=NonlinearitySpec)
    noise: NoiseSpec | None = None
    dealias: bool = True
    strat_iterations: int = 4

    def __post_init__(self):
        if not isinstance(self.scheme, Scheme):
            object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise SchemeError(f"time step must be positive, got {self.dt}")
        expected = SCHEME_NOISE[self.scheme]
        actual = self.noise.mode if self.noise is not None else None
        if expected is not actual:
            raise SchemeError(
                f"scheme {self.scheme.value} expects noise "
                f"{expected.value if expected else 'none'}, got {actual.value if actual else 'none'}"
            )
        if not 2 <= self.strat_iterations <= 4:
            raise SchemeError(f"midpoint iterations must be between 2 and 4, got {self.strat_iterations}")

    def to_dict(self):
        return {
            "scheme": self.scheme.value,
            "dt": self.dt,
            "nonlinearity": self.nl.to_dict(),
            "noise": self.noise.to_dict() if self.noise else None,
            "dealias": self.dealias,
            "strat_iterations": self.strat_iterations,
        }


@dataclass
class TruncationState:
    """Cutoff parameters and the running norm/stopping time of a truncated run."""
    R: float
    s: float
    b: float
    norm: float = 0.0
    tau: float | None = None


@dataclass
class SolverState:
    field: SpectralField
    t: float = 0.0
    wiener: WienerState | None = None
    stopped: bool = False
    blowup_time: float | None = None
    truncation: TruncationState | None = None

    @classmethod
    def start(cls, field: SpectralField, cfg: StepperConfig, seed: int | None = None,
              t: float = 0.0, record: bool = False) -> "SolverState":
        """Initial state: datum projected onto the ball |n| <= N, fresh Wiener process if noisy."""
        wiener = cfg.noise.new_wiener(seed, record=record, t=t) if cfg.noise is not None else None
        return cls(project_leq(field, field.spec.cutoff), t, wiener)


def _phase_flow(u: SpectralField, cfg: StepperConfig, dt: float) -> SpectralField:
    flowed = nonlinear_phase_flow(u, cfg.nl, dt, cfg.dealias)
    return project_leq(flowed, u.spec.cutoff)


def _drift(u: SpectralField, cfg: StepperConfig, factor: float) -> np.ndarray:
    """u + i·dt·factor·P N(u) as a coefficient array."""
    if factor == 0 or not cfg.nl.enabled:
        return np.array(u.coeffs)
    nl = project_leq(nonlinear_term(u, cfg.nl, cfg.dealias), u.spec.cutoff)
    return u.coeffs + 1j * cfg.dt * factor * nl.coeffs


def exponential_euler_drift(u: SpectralField, nl: NonlinearitySpec, dt: float, dealias: bool = True) -> SpectralField:
    """Noise-free exponential Euler step S(dt)(u + i·dt·P N(u))."""
    cfg = StepperConfig(Scheme.STRANG, dt, nl, None, dealias)
    return u.replace(_drift(u, cfg, 1.0) * semigroup_phases(u.spec, dt))


def _multiply(u: np.ndarray, noise: np.ndarray, spec) -> np.ndarray:
    product = truncated_product(SpectralField(spec, u), SpectralField(spec, noise))
    return project_leq(product, spec.cutoff).coeffs


def _advance(state: SolverState, cfg: StepperConfig, factor: float) -> np.ndarray:
    u = state.field
    spec = u.spec
    dt = cfg.dt
    if cfg.scheme is Scheme.STRANG:
        half = factor * dt / 2
        u = _phase_flow(u, cfg, half)
        u = apply_semigroup(u, dt)
        return _phase_flow(u, cfg, half).coeffs

    increment = cfg.noise.ball_operator.apply(state.wiener.sample_increment(dt))
    drift = _drift(u, cfg, factor)
    phases = semigroup_phases(spec, dt)
    if cfg.scheme is Scheme.ADDITIVE_EXP_EULER:
        return phases * drift - 1j * increment
    if cfg.scheme is Scheme.ITO_EULER:
        return phases * (drift - 1j * _multiply(u.coeffs, increment, spec))
    # Stratonovich midpoint: v = w - i P(((w + v)/2)·φΔW), fixed-point iterated
    v = drift
    for _ in range(cfg.strat_iterations):
        v = drift - 1j * _multiply((drift + v) / 2, increment, spec)
    return phases * v


def step(state: SolverState, cfg: StepperConfig, nl_factor: float = 1.0) -> SolverState:
    """
    Advance one step of size cfg.dt. `nl_factor` scales the nonlinearity (the
    truncation cutoff). Non-finite output marks the state as stopped with a
    blow-up time instead of raising.
    """
    if state.stopped:
        raise SchemeError(f"state stopped at t={state.blowup_time}; refusing to step")
    if cfg.noise is not None:
        if state.wiener is None:
            raise SchemeError("noisy scheme needs a Wiener process on the state")
        if cfg.noise.operator.spec != state.field.spec:
            raise SpectralError("noise operator and field live on different mode sets")
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            coeffs = _advance(state, cfg, nl_factor)
    except NonFiniteError:
        coeffs = None
    t = state.t + cfg.dt
    if coeffs is None or not np.all(np.isfinite(coeffs)):
        return replace(state, t=t, stopped=True, blowup_time=t)
    return replace(state, field=SpectralField(state.field.spec, coeffs), t=t)


def step_count(t0: float, t_end: float, dt: float) -> int:
    if t_end < t0:
        raise SchemeError(f"end time {t_end} precedes start time {t0}")
    return int(math.ceil((t_end - t0) / dt - 1e-9))


def _run(state: SolverState, cfg: StepperConfig, t_end: float, observers: Iterable[Observer],
         stride: int, advance: Callable[[SolverState], SolverState]) -> tuple[SolverState, Trajectory]:
    if stride < 1:
        raise SchemeError(f"stride must be >= 1, got {stride}")
    observers = list(observers)
    t0 = state.t
    n_steps = step_count(t0, t_end, cfg.dt)
    times = [t0]
    samples = [state.field.coeffs]
    report_every = max(1, n_steps // 10)
    for i in range(1, n_steps + 1):
        state = advance(state)
        if state.stopped:
            logger.warning("non-finite field at t=%.6g; stopping run", state.blowup_time)
            break
        state.t = t0 + i * cfg.dt
        if i % stride == 0:
            times.append(state.t)
            samples.append(state.field.coeffs)
        if i % stride == 0 or i == n_steps:
            for obs in observers:
                obs(state)
        if i % report_every == 0:
            logger.info("step %d/%d t=%.6g", i, n_steps, state.t)
    traj = Trajectory(state.field.spec, np.array(times), np.stack(samples),
                      blowup_time=state.blowup_time, meta={"dt": cfg.dt * stride})
    return state, traj


def evolve_state(state: SolverState, cfg: StepperConfig, t_end: float,
                 observers: Iterable[Observer] = (), stride: int = 1) -> tuple[SolverState, Trajectory]:
    return _run(state, cfg, t_end, observers, stride, lambda s: step(s, cfg))


def evolve(state: SolverState, cfg: StepperConfig, t_end: float,
           observers: Iterable[Observer] = (), stride: int = 1) -> Trajectory:
    """
    Step from state.t to t_end in ceil((t_end - t)/dt) steps. The trajectory
    holds the initial state and every `stride`-th step. Observers see every
    `stride`-th step and the final one, but not the initial state.
    """
    return evolve_state(state, cfg, t_end, observers, stride)[1]


def _smoothstep(y: float) -> float:
    return y ** 3 * (10 - 15 * y + 6 * y ** 2)


def eta(x: float) -> float:
    """C^2 cutoff: 1 on [0, 1], 0 outside (-1, 2), smooth quintic ramps in between."""
    if x <= -1 or x >= 2:
        return 0.0
    if 0 <= x <= 1:
        return 1.0
    if x > 1:
        return 1.0 - _smoothstep(x - 1)
    return _smoothstep(x + 1)


def cutoff_factor(norm: float, R: float, k: int) -> float:
    """η(norm/R)^{2k+1}, multiplying the nonlinearity of the truncated equation."""
    return eta(norm / R) ** (2 * k + 1)


def evolve_truncated_state(state: SolverState, cfg: StepperConfig, R: float, s: float, b: float,
                           t_end: float, observers: Iterable[Observer] = (), stride: int = 1,
                           refresh_stride: int = 1) -> tuple[SolverState, Trajectory]:
    if not R > 0:
        raise SchemeError(f"cutoff radius R must be positive, got {R}")
    if not 0 <= b < 0.5:
        raise SchemeError(f"truncation needs 0 <= b < 1/2, got b={b}")
    running = RunningXsbNorm(state.field.spec, s, b, cfg.dt, refresh_stride)
    running.push(state.t, state.field.coeffs)
    state.truncation = TruncationState(R, s, b, norm=running.value())

    def advance(current: SolverState) -> SolverState:
        trunc = current.truncation
        rho = running.value()
        trunc.norm = rho
        if trunc.tau is None and rho >= R:
            trunc.tau = current.t
            logger.info("running X^{s,b} norm reached R=%g at t=%.6g", R, current.t)
        nxt = step(current, cfg, cutoff_factor(rho, R, cfg.nl.k))
        if not nxt.stopped:
            running.push(nxt.t, nxt.field.coeffs)
            nxt.truncation.norm = running.value()
        return nxt

    return _run(state, cfg, t_end, observers, stride, advance)


def evolve_truncated(state: SolverState, cfg: StepperConfig, R: float, s: float, b: float,
                     t_end: float, observers: Iterable[Observer] = (), stride: int = 1,
                     refresh_stride: int = 1) -> tuple[Trajectory, float | None]:
    """Truncated evolution; returns the trajectory and τ_R (None if never reached)."""
    final, traj = evolve_truncated_state(state, cfg, R, s, b, t_end, observers, stride, refresh_stride)
    if final.truncation.tau is None and final.truncation.norm >= R:
        final.truncation.tau = final.t
    return traj, final.truncation.tau


def s_crit(d: int, k: int) -> float:
    return d / 2 - 1 / k


def theta(k: int, delta: float) -> float:
    """Exponent 2k/δ of the local existence window."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    return 2 * k / delta


def local_window(u0_norm: float, psi_norm: float, c: float, theta_exp: float) -> float:
    """Local existence time T_loc = c·(||u0|| + ||Ψ||)^{-θ}."""
    for name, value in (("datum norm", u0_norm), ("noise norm", psi_norm),
                        ("window constant", c), ("window exponent", theta_exp)):
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value}")
    return c * (u0_norm + psi_norm) ** (-theta_exp)


def subdivision_plan(T: float, R: float, L: float, c: float, theta_exp: float) -> tuple[float, int]:
    """Uniform window length δ = T_loc(R, L) and the number of windows covering [0, T]."""
    delta = local_window(R, L, c, theta_exp)
    return delta, max(1, int(math.ceil(T / delta - 1e-12)))


@dataclass
class SubdivisionReport:
    delta: float
    windows: int
    breakpoints: list[dict]
    first_failure: int | None = None

    def to_dict(self):
        return {
            "delta": self.delta,
            "windows": self.windows,
            "breakpoints": self.breakpoints,
            "first_failure": self.first_failure,
        }


def evolve_subdivided(state: SolverState, cfg: StepperConfig, T: float, R: float, L: float,
                      c: float, theta_exp: float, s: float) -> tuple[SolverState, SubdivisionReport]:
    """
    Run [0, T] window by window, checking at every breakpoint that the H^s
    norm stays within R. The run continues after a failed check; the first
    failing window index is reported.
    """
    delta, windows = subdivision_plan(T, R, L, c, theta_exp)
    report = SubdivisionReport(delta, windows, [])
    t0 = state.t
    for j in range(1, windows + 1):
        target = min(t0 + j * delta, t0 + T)
        state, _ = evolve_state(state, cfg, target)
        if state.stopped:
            report.breakpoints.append({"t": state.t, "norm": None, "ok": False})
            report.first_failure = report.first_failure or j
            break
        norm = sobolev_norm(state.field, s)
        ok = norm <= R
        report.breakpoints.append({"t": state.t, "norm": norm, "ok": ok})
        if not ok and report.first_failure is None:
            report.first_failure = j
            logger.info("H^%g norm %.6g exceeds R=%g at window %d", s, norm, R, j)
    return state, report


def xsb_apriori_bound(K: float, C2: float, tau: float, k: int, delta: float) -> float | None:
    """
    Smallest positive root of C2·τ^δ·x^{2k+1} - x + K, the a-priori bound on the
    X^{s,b} norm over a window of length τ. None when no positive root exists.
    """
    if K < 0 or C2 <= 0 or tau <= 0:
        raise ValueError("bound inputs must satisfy K >= 0, C2 > 0, tau > 0")
    if K == 0:
        return 0.0
    a = C2 * tau ** delta
    turn = ((2 * k + 1) * a) ** (-1.0 / (2 * k))

    def poly(x: float) -> float:
        return a * x ** (2 * k + 1) - x + K

    if poly(turn) > 0:
        return None
    return brentq(poly, 0.0, turn, xtol=1e-14, rtol=1e-12)
