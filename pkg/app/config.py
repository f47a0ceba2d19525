# File: app/config.py
"""
Run configuration: flat key/value settings resolved from built-in defaults,
an optional YAML file, SNLS_<KEY> environment variables and command-line
overrides, in that order of precedence.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from ensemble import OBSERVABLES, EnsembleConfig, config_hash, default_workers
from integrators import SCHEME_NOISE, Scheme, StepperConfig
from models import ConfigError, NonlinearitySpec, Sign, SpectralField, TorusSpec
from noise import NoiseMode, NoiseSpec, SmoothingOperator
from spectral import physical_nodes, random_field, to_spectral
from storage import read_operator, read_snapshot

logger = logging.getLogger(__name__)

ENV_PREFIX = "SNLS_"

SCHEME_ALIASES = {
    "strang": Scheme.STRANG.value,
    "additive": Scheme.ADDITIVE_EXP_EULER.value,
    "ito": Scheme.ITO_EULER.value,
    "stratonovich": Scheme.STRAT_MIDPOINT.value,
}
NOISE_MODES = ("none",) + tuple(mode.value for mode in NoiseMode)
OPERATORS = ("zero", "indicator", "power-law", "file")
INITIAL_DATA = ("cosine", "constant", "mode", "random", "file")

_LIST_FIELDS = {"periods": float, "observables": str, "moments": int, "initial_mode": int}


@dataclass
class RunConfig:
    d: int = 1
    N: int = 32
    periods: list = field(default_factory=list)
    k: int = 1
    sign: str = Sign.DEFOCUSING.value
    nonlinear: bool = True
    scheme: str = Scheme.STRANG.value
    dt: float = 1e-3
    T: float = 1.0
    dealias: bool = True
    strat_iterations: int = 4
    noise: str = "none"
    operator: str = "power-law"
    operator_a: float = 2.0
    operator_radius: float = 1.0
    operator_amplitude: float = 1.0
    operator_file: str = ""
    initial: str = "cosine"
    initial_amplitude: float = 0.5
    initial_gamma: float = 1.0
    initial_mode: list = field(default_factory=list)
    initial_file: str = ""
    paths: int = 1
    seed: int = 0
    observables: list = field(default_factory=lambda: ["mass", "energy", "hs"])
    moments: list = field(default_factory=lambda: [1])
    hs_s: float = 1.0
    stride: int = 1
    R: float = 0.0
    xsb_s: float = 0.0
    xsb_b: float = 0.375
    refresh_stride: int = 1
    workers: int = 0
    output_dir: str = "runs"

    # ------------------------------------------------------------------
    # Loading
    # ------------------------------------------------------------------
    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, mapping: dict, source: str = "mapping") -> "RunConfig":
        cfg = cls()
        cfg.update(mapping, source)
        return cfg

    @classmethod
    def load(cls, path: str | None = None, env: dict | None = None,
             overrides: dict | None = None) -> "RunConfig":
        """defaults < YAML file < SNLS_<KEY> environment < explicit overrides."""
        cfg = cls()
        if path:
            text = Path(path).read_text()
            data = yaml.safe_load(text) or {}
            if not isinstance(data, dict):
                raise ConfigError([f"{path}: expected a mapping of keys to values"])
            cfg.update(data, str(path))
        env = os.environ if env is None else env
        from_env = {key: env[ENV_PREFIX + key.upper()] for key in cls.keys() if ENV_PREFIX + key.upper() in env}
        cfg.update(from_env, "environment")
        cfg.update({k: v for k, v in (overrides or {}).items() if v is not None}, "command line")
        return cfg

    def update(self, mapping: dict, source: str):
        errors = []
        known = set(self.keys())
        for key, value in mapping.items():
            if key not in known:
                errors.append(f"{source}: unknown key {key!r}")
                continue
            try:
                setattr(self, key, _coerce(key, value, _DEFAULTS[key]))
            except (TypeError, ValueError) as exc:
                errors.append(f"{source}: {key}: {exc}")
        if errors:
            raise ConfigError(errors)
        self.scheme = SCHEME_ALIASES.get(self.scheme, self.scheme)

    # ------------------------------------------------------------------
    # Validation and identity
    # ------------------------------------------------------------------
    def validate(self, command: str = "simulate") -> list[str]:
        """Every violated invariant, not just the first."""
        errors = []
        if self.d not in (1, 2, 3):
            errors.append(f"d must be 1, 2 or 3, got {self.d}")
        if self.N < 0:
            errors.append(f"N must be non-negative, got {self.N}")
        if self.periods and len(self.periods) != self.d:
            errors.append(f"periods needs {self.d} entries, got {len(self.periods)}")
        if any(not p > 0 for p in self.periods):
            errors.append(f"periods must be positive, got {self.periods}")
        if self.k < 1:
            errors.append(f"k must be >= 1, got {self.k}")
        if self.sign not in {s.value for s in Sign}:
            errors.append(f"sign must be defocusing or focusing, got {self.sign!r}")
        if self.scheme not in {s.value for s in Scheme}:
            errors.append(f"unknown scheme {self.scheme!r}")
        if self.noise not in NOISE_MODES:
            errors.append(f"unknown noise mode {self.noise!r}, expected one of {list(NOISE_MODES)}")
        if self.scheme in {s.value for s in Scheme} and self.noise in NOISE_MODES:
            expected = SCHEME_NOISE[Scheme(self.scheme)]
            if (expected.value if expected else "none") != self.noise:
                errors.append(f"scheme {self.scheme} is incompatible with noise {self.noise}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            errors.append(f"dt must be positive, got {self.dt}")
        if self.T < 0:
            errors.append(f"T must be non-negative, got {self.T}")
        if not 2 <= self.strat_iterations <= 4:
            errors.append(f"strat_iterations must be between 2 and 4, got {self.strat_iterations}")
        if self.operator not in OPERATORS:
            errors.append(f"unknown operator {self.operator!r}, expected one of {list(OPERATORS)}")
        if self.operator == "file" and not self.operator_file:
            errors.append("operator 'file' needs operator_file")
        if self.initial not in INITIAL_DATA:
            errors.append(f"unknown initial datum {self.initial!r}, expected one of {list(INITIAL_DATA)}")
        if self.initial == "file" and not self.initial_file:
            errors.append("initial 'file' needs initial_file")
        if self.initial == "mode" and len(self.initial_mode) != self.d:
            errors.append(f"initial 'mode' needs initial_mode with {self.d} entries")
        if self.paths < 1:
            errors.append(f"paths must be >= 1, got {self.paths}")
        if self.stride < 1:
            errors.append(f"stride must be >= 1, got {self.stride}")
        if self.workers < 0:
            errors.append(f"workers must be >= 0 (0 picks the physical core count), got {self.workers}")
        if self.R < 0:
            errors.append(f"R must be non-negative, got {self.R}")
        if not -0.5 < self.xsb_b < 0.5:
            errors.append(f"xsb_b must lie in (-1/2, 1/2) for sharp time windows, got {self.xsb_b}")
        if self.R > 0 and self.xsb_b < 0:
            errors.append("truncated runs need xsb_b >= 0")
        if self.refresh_stride < 1:
            errors.append(f"refresh_stride must be >= 1, got {self.refresh_stride}")
        unknown = [name for name in self.observables if name not in OBSERVABLES]
        if unknown:
            errors.append(f"unknown observables {unknown}")
        if any(m < 1 for m in self.moments):
            errors.append(f"moments must be positive, got {self.moments}")
        if command == "ensemble" and "energy" in self.observables and self.nonlinear \
                and self.sign == Sign.FOCUSING.value:
            errors.append("energy moments require a defocusing nonlinearity")
        return errors

    def check(self, command: str = "simulate") -> "RunConfig":
        errors = self.validate(command)
        if errors:
            raise ConfigError(errors)
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=None)

    @property
    def hash(self) -> str:
        payload = {key: value for key, value in self.to_dict().items() if key not in ("output_dir", "workers")}
        return config_hash(payload)

    # ------------------------------------------------------------------
    # Builders
    # ------------------------------------------------------------------
    def torus(self) -> TorusSpec:
        return TorusSpec(self.d, self.N, tuple(self.periods))

    def nonlinearity(self) -> NonlinearitySpec:
        return NonlinearitySpec(self.k, Sign(self.sign), self.nonlinear)

    def smoothing_operator(self, spec: TorusSpec | None = None) -> SmoothingOperator:
        spec = spec or self.torus()
        if self.operator == "zero":
            return SmoothingOperator.zero(spec)
        if self.operator == "indicator":
            return SmoothingOperator.indicator(spec, self.operator_radius, self.operator_amplitude)
        if self.operator == "file":
            op = read_operator(self.operator_file)
            if op.spec != spec:
                raise ConfigError([f"operator file is defined on {op.spec.to_dict()}, run uses {spec.to_dict()}"])
            return op
        return SmoothingOperator.power_law(spec, self.operator_a, self.operator_amplitude)

    def noise_spec(self, spec: TorusSpec | None = None) -> NoiseSpec | None:
        if self.noise == "none":
            return None
        return NoiseSpec(NoiseMode(self.noise), self.smoothing_operator(spec))

    def stepper(self, spec: TorusSpec | None = None) -> StepperConfig:
        return StepperConfig(Scheme(self.scheme), self.dt, self.nonlinearity(),
                             self.noise_spec(spec), self.dealias, self.strat_iterations)

    def initial_field(self, spec: TorusSpec | None = None) -> SpectralField:
        spec = spec or self.torus()
        if self.initial == "constant":
            return SpectralField.constant(spec, self.initial_amplitude)
        if self.initial == "mode":
            return SpectralField.mode(spec, self.initial_mode, self.initial_amplitude)
        if self.initial == "random":
            rng = np.random.default_rng(self.seed)
            return random_field(spec, rng, self.initial_gamma).scaled(self.initial_amplitude)
        if self.initial == "file":
            field_, _ = read_snapshot(self.initial_file)
            if field_.spec != spec:
                raise ConfigError([f"initial datum is defined on {field_.spec.to_dict()}, run uses {spec.to_dict()}"])
            return field_
        # A(1 + ½cos(2πx_1/α_1)): smooth and band-limited for N >= 1
        x = physical_nodes(spec)[0]
        grid = self.initial_amplitude * (1 + 0.5 * np.cos(2 * np.pi * x / spec.periods[0]))
        return to_spectral(grid, spec)

    def ensemble(self, spec: TorusSpec | None = None) -> EnsembleConfig:
        spec = spec or self.torus()
        return EnsembleConfig(
            paths=self.paths,
            base_seed=self.seed,
            stepper=self.stepper(spec),
            horizon=self.T,
            initial=self.initial_field(spec),
            observables=tuple(self.observables),
            moments=tuple(self.moments),
            hs_s=self.hs_s,
            stride=self.stride,
            workers=self.workers or default_workers(),
        )


_DEFAULTS = RunConfig().to_dict()


def _parse_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {value!r}")


def _coerce(key: str, value, default):
    if key in _LIST_FIELDS:
        item = _LIST_FIELDS[key]
        if isinstance(value, str):
            value = [part.strip() for part in value.split(",") if part.strip()]
        if not isinstance(value, (list, tuple)):
            value = [value]
        return [item(v) for v in value]
    if isinstance(default, bool):
        return _parse_bool(value)
    if isinstance(default, int):
        if isinstance(value, float) and not value.is_integer():
            raise ValueError(f"expected an integer, got {value!r}")
        return int(float(value)) if isinstance(value, str) and "e" in value.lower() else int(value)
    if isinstance(default, float):
        return float(value)
    return str(value)
