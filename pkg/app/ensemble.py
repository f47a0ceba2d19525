# File: app/ensemble.py
"""
Monte Carlo ensembles over independent noise paths: sup-moment estimates of
observables, and the statistical checks (drift law, isometry, Stratonovich
mass conservation, stopping-time monotonicity) built on them.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np
import psutil

from functionals import energy, mass, sobolev_norm
from integrators import Scheme, SolverState, StepperConfig, evolve_state, evolve_truncated_state
from models import ConfigError, InstabilityError, NoiseError, SchemeError, Sign, SpectralField
from noise import NoiseMode, SmoothingOperator, WienerState, coarsen_increments, convolve_additive_step, grad_hs_norm, hs_norm
from spectral import project_leq, to_physical

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
OBSERVABLES = ("mass", "energy", "hs")
# Bounds on dt·max|u|^{2k} and on the mass ratio between recorded samples
STABILITY_LIMIT = 0.5
MASS_JUMP = 4.0


def path_seed(base_seed: int, index: int) -> int:
    """Independent 32-bit seed for path `index`, spawned from (base_seed, index)."""
    return int(np.random.SeedSequence([int(base_seed), int(index)]).generate_state(1)[0])


def field_digest(f: SpectralField) -> str:
    return hashlib.sha256(np.ascontiguousarray(f.coeffs).tobytes()).hexdigest()


def config_hash(payload: dict) -> str:
    """sha256 of the canonical (sorted-key, compact) JSON form of a config mapping."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True, eq=False)
class EnsembleConfig:
    paths: int
    base_seed: int
    stepper: StepperConfig
    horizon: float
    initial: SpectralField
    observables: tuple[str, ...] = ("mass",)
    moments: tuple[int, ...] = (1,)
    hs_s: float = 1.0
    stride: int = 1
    workers: int = 1

    def __post_init__(self):
        errors = self.validate()
        if errors:
            raise ConfigError(errors)

    def validate(self) -> list[str]:
        errors = []
        if self.paths < 1:
            errors.append(f"paths must be >= 1, got {self.paths}")
        if self.base_seed < 0:
            errors.append(f"base seed must be non-negative, got {self.base_seed}")
        if self.horizon < 0:
            errors.append(f"horizon must be non-negative, got {self.horizon}")
        unknown = [name for name in self.observables if name not in OBSERVABLES]
        if unknown:
            errors.append(f"unknown observables {unknown}, expected a subset of {list(OBSERVABLES)}")
        if any(m < 1 for m in self.moments):
            errors.append(f"moments must be positive integers, got {list(self.moments)}")
        if "energy" in self.observables and self.stepper.nl.enabled and self.stepper.nl.sign is Sign.FOCUSING:
            errors.append("energy moments require a defocusing nonlinearity")
        if self.stride < 1:
            errors.append(f"stride must be >= 1, got {self.stride}")
        if self.workers < 1:
            errors.append(f"workers must be >= 1, got {self.workers}")
        return errors

    def to_dict(self):
        return {
            "paths": self.paths,
            "base_seed": self.base_seed,
            "stepper": self.stepper.to_dict(),
            "horizon": self.horizon,
            "torus": self.initial.spec.to_dict(),
            "initial_sha256": field_digest(self.initial),
            "observables": list(self.observables),
            "moments": list(self.moments),
            "hs_s": self.hs_s,
            "stride": self.stride,
        }

    @property
    def hash(self) -> str:
        return config_hash(self.to_dict())


@dataclass
class PathResult:
    index: int
    seed: int
    times: np.ndarray | None = None
    series: dict = field(default_factory=dict)
    event: str | None = None


class _Recorder:
    """
    Records observables at every sample. Defocusing runs of the explicit
    schemes are also watched for leaving their stability region: dt·max|u|^{2k} above
    STABILITY_LIMIT or a mass jump by more than MASS_JUMP between samples raises
    InstabilityError.
    """

    def __init__(self, cfg: EnsembleConfig):
        self.cfg = cfg
        self.times: list[float] = []
        self.values: dict[str, list[float]] = {name: [] for name in set(cfg.observables) | {"mass"}}
        stepper = cfg.stepper
        self.watch = (stepper.nl.enabled and stepper.nl.sign is Sign.DEFOCUSING
                      and stepper.scheme is not Scheme.STRANG)
        self.mass_scale = mass(project_leq(cfg.initial, cfg.initial.spec.cutoff)) + expected_mass_slope(cfg) * cfg.horizon

    def __call__(self, state: SolverState):
        self.times.append(state.t)
        for name, bucket in self.values.items():
            bucket.append(_observable(name, state.field, self.cfg))
        if self.watch:
            self._check(state)

    def _check(self, state: SolverState):
        stepper = self.cfg.stepper
        peak = float(np.max(np.abs(to_physical(state.field)))) ** (2 * stepper.nl.k)
        if stepper.dt * peak > STABILITY_LIMIT:
            raise InstabilityError(f"unstable at t={state.t:.6g}: dt·max|u|^{2 * stepper.nl.k} = {stepper.dt * peak:.3g}")
        masses = self.values["mass"]
        if len(masses) > 1 and masses[-1] > MASS_JUMP * max(masses[-2], self.mass_scale):
            raise InstabilityError(f"unstable at t={state.t:.6g}: mass jumped from {masses[-2]:.3g} to {masses[-1]:.3g}")


def _observable(name: str, f: SpectralField, cfg: EnsembleConfig) -> float:
    if name == "mass":
        return mass(f)
    if name == "energy":
        return energy(f, cfg.stepper.nl)
    return sobolev_norm(f, cfg.hs_s)


def _stop_label(cfg: EnsembleConfig, t: float) -> str:
    """Non-finite output is blow-up for focusing runs only; otherwise the step size lost stability."""
    nl = cfg.stepper.nl
    if nl.enabled and nl.sign is Sign.FOCUSING:
        return f"blow-up at t={t:.6g}"
    return f"unstable at t={t:.6g}"


def run_path(cfg: EnsembleConfig, index: int) -> PathResult:
    """One independent path; failures become an event instead of an exception."""
    seed = path_seed(cfg.base_seed, index)
    result = PathResult(index, seed)
    recorder = _Recorder(cfg)
    try:
        state = SolverState.start(cfg.initial, cfg.stepper, seed)
        recorder(state)
        final, _ = evolve_state(state, cfg.stepper, cfg.horizon, [recorder], cfg.stride)
    except InstabilityError as exc:
        logger.warning("path %d (seed %d) %s", index, seed, exc)
        result.event = str(exc).split(":")[0]
        return result
    except (ValueError, FloatingPointError) as exc:
        logger.warning("path %d (seed %d) failed: %s", index, seed, exc)
        result.event = f"error: {exc}"
        return result
    if final.stopped:
        result.event = _stop_label(cfg, final.blowup_time)
        return result
    result.times = np.array(recorder.times)
    result.series = {name: np.array(values) for name, values in recorder.values.items()}
    return result


def default_workers() -> int:
    return psutil.cpu_count(logical=False) or 1


def run_paths(cfg: EnsembleConfig) -> list[PathResult]:
    logger.info("ensemble: %d paths on %d worker(s)", cfg.paths, cfg.workers)
    if cfg.workers == 1:
        results = [run_path(cfg, i) for i in range(cfg.paths)]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(partial(run_path, cfg), range(cfg.paths)))
    proc = psutil.Process()
    logger.info("ensemble done: rss %.1f MiB, %d cpu(s), %.1f%% system memory in use",
                proc.memory_info().rss / 2 ** 20, psutil.cpu_count() or 1, psutil.virtual_memory().percent)
    return sorted(results, key=lambda r: r.index)


def mean_and_se(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return math.nan, math.nan
    if values.size < 2:
        return float(values.mean()), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


@dataclass
class MomentEstimate:
    moment: int
    estimate: float
    se: float
    paths: int

    def to_dict(self):
        return {"moment": self.moment, "estimate": self.estimate, "se": self.se, "paths": self.paths}


@dataclass
class EnsembleReport:
    config_hash: str
    seed: int
    paths: int
    observables: dict[str, list[MomentEstimate]]
    drift: list[dict]
    events: list[dict]
    sups: dict[str, np.ndarray] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "config_hash": self.config_hash,
            "config": self.config,
            "seed": self.seed,
            "paths": self.paths,
            "observables": {name: [m.to_dict() for m in moments] for name, moments in sorted(self.observables.items())},
            "drift": self.drift,
            "events": self.events,
        }


def expected_mass_slope(cfg: EnsembleConfig) -> float:
    """d/dt E M(t) for additive noise: ||φ||_HS^2 (E|Δβ|^2 = 2dt, M = ½||u||^2)."""
    noise = cfg.stepper.noise
    if noise is None or noise.mode is not NoiseMode.ADDITIVE_ITO:
        return 0.0
    return hs_norm(noise.ball_operator, 0.0) ** 2


def run_ensemble(cfg: EnsembleConfig) -> EnsembleReport:
    results = run_paths(cfg)
    ok = [r for r in results if r.event is None]
    events = [{"path": r.index, "seed": r.seed, "event": r.event} for r in results if r.event is not None]
    if events:
        logger.warning("%d of %d paths excluded from statistics", len(events), cfg.paths)
    observables, sups = {}, {}
    for name in cfg.observables:
        sup = np.array([np.max(np.abs(r.series[name])) for r in ok])
        sups[name] = sup
        observables[name] = [MomentEstimate(m, *mean_and_se(sup ** m), len(ok)) for m in cfg.moments]
    drift = []
    if ok:
        m0 = mass(project_leq(cfg.initial, cfg.initial.spec.cutoff))
        slope = expected_mass_slope(cfg)
        masses = np.stack([r.series["mass"] for r in ok])
        for j, t in enumerate(ok[0].times):
            mean, se = mean_and_se(masses[:, j])
            drift.append({"t": float(t), "residual": mean - m0 - slope * (t - ok[0].times[0]), "se": se})
    return EnsembleReport(cfg.hash, cfg.base_seed, cfg.paths, observables, drift, events, sups, cfg.to_dict())


@dataclass
class DriftResidual:
    times: np.ndarray
    residual: np.ndarray
    se: np.ndarray
    slope: float
    events: int = 0

    def within(self, bands: float = 3.0, floor: float = 1e-12) -> bool:
        """Residual inside `bands` standard errors at every time; any excluded path fails the check."""
        if self.events:
            return False
        return bool(np.all(np.abs(self.residual) <= bands * self.se + floor))


def _require_additive(cfg: EnsembleConfig):
    noise = cfg.stepper.noise
    if noise is None or noise.mode is not NoiseMode.ADDITIVE_ITO:
        raise SchemeError("drift law applies to additive Itô noise only")


def drift_check(cfg: EnsembleConfig) -> DriftResidual:
    """r(t) = E M(t) - M(0) - ||φ||_HS^2·t with per-time standard errors."""
    _require_additive(cfg)
    report = run_ensemble(cfg)
    if report.events:
        logger.error("drift check: %d path(s) excluded, first: %s", len(report.events), report.events[0]["event"])
    return DriftResidual(
        np.array([row["t"] for row in report.drift]),
        np.array([row["residual"] for row in report.drift]),
        np.array([row["se"] for row in report.drift]),
        expected_mass_slope(cfg),
        len(report.events),
    )


def energy_drift_check(cfg: EnsembleConfig) -> DriftResidual:
    """Linear additive flow: E E(t) - E(0) - ||φ||_{HS,ω}^2·t with standard errors."""
    _require_additive(cfg)
    if cfg.stepper.nl.enabled:
        raise SchemeError("energy drift law holds for the linear equation only")
    cfg = replace(cfg, observables=tuple(set(cfg.observables) | {"energy"}))
    results = [r for r in run_paths(cfg) if r.event is None]
    e0 = energy(project_leq(cfg.initial, cfg.initial.spec.cutoff), cfg.stepper.nl)
    slope = grad_hs_norm(cfg.stepper.noise.ball_operator) ** 2
    energies = np.stack([r.series["energy"] for r in results])
    times = results[0].times
    stats = [mean_and_se(energies[:, j]) for j in range(len(times))]
    residual = np.array([mean - e0 - slope * (t - times[0]) for (mean, _), t in zip(stats, times)])
    return DriftResidual(times, residual, np.array([se for _, se in stats]), slope)


def ito_mass_growth_rate(op: SmoothingOperator) -> float:
    """Rate λ in E M(t) = M(0)e^{λt} for Itô multiplicative noise, λ = 2||φ||_HS^2."""
    return 2 * hs_norm(op, 0.0) ** 2


def ito_mass_growth_check(cfg: EnsembleConfig) -> DriftResidual:
    """r(t) = E M(t) - M(0)e^{λt} for Itô multiplicative noise; `slope` carries λ."""
    noise = cfg.stepper.noise
    if noise is None or noise.mode is not NoiseMode.MULTIPLICATIVE_ITO:
        raise SchemeError("mass growth law applies to Itô multiplicative noise only")
    report = run_ensemble(cfg)
    rate = ito_mass_growth_rate(noise.ball_operator)
    m0 = mass(project_leq(cfg.initial, cfg.initial.spec.cutoff))
    if not report.drift:
        raise SchemeError("mass growth check: every path was excluded")
    times = np.array([row["t"] for row in report.drift])
    # expected_mass_slope is zero for multiplicative noise: residual + M(0) is the mean mass
    means = np.array([row["residual"] for row in report.drift]) + m0
    return DriftResidual(times, means - m0 * np.exp(rate * (times - times[0])),
                         np.array([row["se"] for row in report.drift]), rate, len(report.events))


def _max_mass_drift(state: SolverState, stepper: StepperConfig, horizon: float) -> float:
    m0 = mass(state.field)
    drift = [0.0]

    def observe(s: SolverState):
        drift.append(abs(mass(s.field) - m0) / m0)

    final, _ = evolve_state(state, stepper, horizon, [observe])
    if final.stopped:
        raise SchemeError(f"blow-up at t={final.blowup_time} during mass drift check")
    return max(drift)


@dataclass
class RefinementResult:
    coarse: np.ndarray
    fine: np.ndarray

    @property
    def ratios(self) -> np.ndarray:
        return self.coarse / self.fine


def mass_drift_refinement(cfg: EnsembleConfig, factor: int = 2) -> RefinementResult:
    """
    Max relative mass drift per path at step dt and at dt/factor, the coarse run
    driven by the summed fine increments of the same Brownian path.
    """
    stepper = cfg.stepper
    fine_stepper = replace(stepper, dt=stepper.dt / factor)
    initial = project_leq(cfg.initial, cfg.initial.spec.cutoff)
    coarse, fine = [], []
    for index in range(cfg.paths):
        seed = path_seed(cfg.base_seed, index)
        fine_state = SolverState.start(initial, fine_stepper, seed, record=True)
        fine.append(_max_mass_drift(fine_state, fine_stepper, cfg.horizon))
        coarse_state = SolverState.start(initial, stepper, seed)
        if stepper.noise is not None:
            coarse_state.wiener = WienerState.replaying(
                initial.spec, coarsen_increments(fine_state.wiener.increments, factor), real=stepper.noise.real)
        coarse.append(_max_mass_drift(coarse_state, stepper, cfg.horizon))
    return RefinementResult(np.array(coarse), np.array(fine))


def strat_mass_conservation_check(cfg: EnsembleConfig, factor: int = 2) -> RefinementResult:
    """Mass drift of the Stratonovich midpoint scheme (or a noise-free run) under step refinement."""
    noise = cfg.stepper.noise
    if noise is not None and noise.mode is not NoiseMode.MULTIPLICATIVE_STRATONOVICH:
        raise SchemeError("mass conservation check expects real Stratonovich noise")
    return mass_drift_refinement(cfg, factor)


@dataclass
class TauTable:
    radii: list[float]
    taus: list[list[float | None]]
    violations: list[dict]

    def to_dict(self):
        return {"R": self.radii, "tau": self.taus, "violations": self.violations}


def _later(a: float | None, b: float | None) -> bool:
    """True if stopping time a is strictly later than b (None means never)."""
    if a is None:
        return b is not None
    return b is not None and a > b


def tau_monotonicity_check(cfg: EnsembleConfig, radii, s: float, b: float, refresh_stride: int = 1) -> TauTable:
    """τ_R per path for every R on common noise; τ must not decrease as R grows."""
    noise = cfg.stepper.noise
    if noise is None or not noise.mode.multiplicative:
        raise NoiseError("stopping-time check expects multiplicative noise")
    radii = [float(r) for r in radii]
    table = TauTable(radii, [], [])
    for index in range(cfg.paths):
        seed = path_seed(cfg.base_seed, index)
        row = []
        for R in radii:
            state = SolverState.start(cfg.initial, cfg.stepper, seed)
            final, _ = evolve_truncated_state(state, cfg.stepper, R, s, b, cfg.horizon,
                                              refresh_stride=refresh_stride)
            tau = final.truncation.tau
            if tau is None and final.truncation.norm >= R:
                tau = final.t
            row.append(tau)
        table.taus.append(row)
        for i, (r_small, tau_small) in enumerate(zip(radii, row)):
            for r_big, tau_big in zip(radii[i + 1:], row[i + 1:]):
                if r_small <= r_big and _later(tau_small, tau_big):
                    table.violations.append({"path": index, "R": [r_small, r_big], "tau": [tau_small, tau_big]})
                elif r_small > r_big and _later(tau_big, tau_small):
                    table.violations.append({"path": index, "R": [r_big, r_small], "tau": [tau_big, tau_small]})
    return table


@dataclass
class IsometryResult:
    times: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    expected: np.ndarray

    def within(self, bands: float = 3.0) -> bool:
        return bool(np.all(np.abs(self.mean - self.expected) <= bands * self.se + 1e-12))


def isometry_check(op: SmoothingOperator, s: float, horizon: float, dt: float,
                   paths: int, seed: int, checkpoints: int = 4) -> IsometryResult:
    """E||Ψ(t)||_{H^s}^2 against 2t·||φ||_{HS(L^2,H^s)}^2 at evenly spaced checkpoints."""
    if paths < 1:
        raise NoiseError(f"paths must be >= 1, got {paths}")
    n_steps = int(round(horizon / dt))
    marks = sorted({max(1, int(round(n_steps * (j + 1) / checkpoints))) for j in range(checkpoints)})
    samples = np.zeros((paths, len(marks)))
    for p in range(paths):
        wiener = WienerState(op.spec, path_seed(seed, p))
        psi = SpectralField.zeros(op.spec)
        column = 0
        for i in range(1, n_steps + 1):
            psi = convolve_additive_step(psi, op, wiener, dt)
            if column < len(marks) and i == marks[column]:
                samples[p, column] = sobolev_norm(psi, s) ** 2
                column += 1
    stats = [mean_and_se(samples[:, j]) for j in range(len(marks))]
    times = np.array(marks) * dt
    return IsometryResult(times, np.array([m for m, _ in stats]), np.array([e for _, e in stats]),
                          2 * times * hs_norm(op, s) ** 2)


def lag1_correlation(values) -> float:
    """Lag-1 autocorrelation across consecutive path indices."""
    values = np.asarray(values, dtype=float)
    if values.size < 3:
        raise ValueError("need at least three values")
    return float(np.corrcoef(values[:-1], values[1:])[0, 1])
