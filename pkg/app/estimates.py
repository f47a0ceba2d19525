# File: app/estimates.py
"""
Numerical checks of the inequalities behind the well-posedness theory: the
Strichartz and L^4 estimates, the Fourier-Lebesgue product estimate and the
multilinear X^{s,b} estimate. Each check reports ratios LHS/RHS over random
profiles; sweeps over N show whether the ratios stay bounded.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from functionals import angular_frequencies, fl_norm, sobolev_norm, xsb_norm, DEFAULT_TIME_PAD
from integrators import s_crit
from models import EstimateError, SpectralField, TorusSpec, Trajectory
from spectral import place, product_field, random_field

logger = logging.getLogger(__name__)

STRICHARTZ_EPS = 0.05
MAX_MULTILINEAR_CUTOFF = 8
MAX_MULTILINEAR_K = 2
PROFILE_GAMMAS = (0.0, "s", "s+1")
_CHUNK = 64


@dataclass
class RatioStats:
    kind: str
    cutoff: int
    ratios: list[tuple[int, float]] = field(default_factory=list)
    params: dict = field(default_factory=dict)

    @property
    def max(self) -> float:
        return max((r for _, r in self.ratios), default=0.0)

    @property
    def mean(self) -> float:
        return float(np.mean([r for _, r in self.ratios])) if self.ratios else 0.0

    def to_dict(self):
        return {
            "kind": self.kind,
            "N": self.cutoff,
            "samples": len(self.ratios),
            "max": self.max,
            "mean": self.mean,
            "params": self.params,
        }


def _resolve_gamma(gamma, s: float) -> float:
    if gamma == "s":
        return s
    if gamma == "s+1":
        return s + 1
    return float(gamma)


def profile(gammas, s: float) -> list[float]:
    """Variance exponents γ of the random profiles, cycled over sample ids."""
    return [_resolve_gamma(g, s) for g in gammas]


def strichartz_exponent(d: int, p: float, eps: float = STRICHARTZ_EPS) -> float:
    return d / 2 - (d + 2) / p + eps


def strichartz_sample_ratio(f: SpectralField, p: float, T: float = 1.0,
                            eps: float = STRICHARTZ_EPS, time_samples: int | None = None) -> float:
    """
    ||S(t)f||_{L^p([0,T]×T^d)} / (N^{d/2-(d+2)/p+eps}·||f||_{L^2}), with the time
    integral by the midpoint rule and the space mean on a pad-ceil(p/2) grid.
    """
    spec = f.spec
    if p < 2 * (spec.d + 2) / spec.d:
        raise EstimateError(f"Strichartz estimate needs p >= 2(d+2)/d = {2 * (spec.d + 2) / spec.d:g}, got {p}")
    l2 = sobolev_norm(f, 0.0)
    if l2 == 0:
        raise EstimateError("profile has zero L^2 norm")
    pad = max(1, math.ceil(p / 2))
    size = pad * spec.side
    if time_samples is None:
        time_samples = max(64, int(math.ceil(p * float(spec.omega.max()) * T / math.pi)) + 1)
    times = (np.arange(time_samples) + 0.5) * T / time_samples
    spectrum = place(f.coeffs, spec, size)
    omega = place(spec.omega, spec, size).real
    integral = 0.0
    axes = tuple(range(1, spec.d + 1))
    for start in range(0, time_samples, _CHUNK):
        chunk = times[start:start + _CHUNK].reshape((-1,) + (1,) * spec.d)
        values = np.fft.ifftn(spectrum * np.exp(1j * chunk * omega), axes=axes) * size ** spec.d
        integral += float(np.sum(np.mean(np.abs(values) ** p, axis=axes)))
    lp = (integral * T / time_samples) ** (1.0 / p)
    return lp / (max(spec.cutoff, 1) ** strichartz_exponent(spec.d, p, eps) * l2)


def strichartz(spec: TorusSpec, p: float, samples: int, seed: int, T: float = 1.0,
               eps: float = STRICHARTZ_EPS, gammas=PROFILE_GAMMAS, s: float = 0.0) -> RatioStats:
    rng = np.random.default_rng(seed)
    gammas = profile(gammas, s)
    stats = RatioStats("strichartz", spec.cutoff,
                       params={"p": p, "T": T, "eps": eps, "seed": seed, "profile": gammas})
    for sample_id in range(samples):
        gamma = gammas[sample_id % len(gammas)]
        stats.ratios.append((sample_id, strichartz_sample_ratio(random_field(spec, rng, gamma), p, T, eps)))
    return stats


def random_spacetime_trajectory(spec: TorusSpec, rng: np.random.Generator, T: float = 1.0,
                                gamma: float = 0.0, modulation: float = 0.0,
                                time_samples: int | None = None) -> Trajectory:
    """
    Band-limited space-time field û(t, n) = a_n e^{it(ω(n) + μ_n)} with Gaussian
    a_n ~ <n>^{-γ} and modulations μ_n uniform in [-modulation, modulation].
    """
    amplitude = random_field(spec, rng, gamma).coeffs
    mu = rng.uniform(-modulation, modulation, spec.shape) if modulation > 0 else 0.0
    if time_samples is None:
        top = float(spec.omega.max()) + modulation
        time_samples = max(32, int(math.ceil(4 * top * T / math.pi)) + 1)
    h = T / time_samples
    times = h * np.arange(time_samples)
    phases = np.exp(1j * times.reshape((-1,) + (1,) * spec.d) * (spec.omega + mu))
    return Trajectory(spec, times, amplitude * phases, meta={"dt": h})


def spacetime_lp_norm(traj: Trajectory, p: float) -> float:
    """||u||_{L^p_{t,x}} with left-point time quadrature on the sampled window."""
    spec = traj.spec
    pad = max(1, math.ceil(p / 2))
    size = pad * spec.side
    axes = tuple(range(1, spec.d + 1))
    total = 0.0
    for start in range(0, len(traj), _CHUNK):
        block = traj.coeffs[start:start + _CHUNK]
        spectrum = np.stack([place(c, spec, size) for c in block])
        values = np.fft.ifftn(spectrum, axes=axes) * size ** spec.d
        total += float(np.sum(np.mean(np.abs(values) ** p, axis=axes)))
    return (total * traj.stride()) ** (1.0 / p)


def l4_sample_ratio(traj: Trajectory, b: float = 3 / 8) -> float:
    """||u||_{L^4_{t,x}} / ||u||_{X^{0,3/8}} on a one-dimensional torus."""
    if traj.spec.d != 1:
        raise EstimateError(f"L^4 estimate is sampled in d = 1 only, got d = {traj.spec.d}")
    denominator = xsb_norm(traj, 0.0, b)
    if denominator == 0:
        raise EstimateError("trajectory has zero X^{0,b} norm")
    return spacetime_lp_norm(traj, 4) / denominator


def l4(spec: TorusSpec, samples: int, seed: int, T: float = 1.0, modulation: float = 4.0,
       gammas=PROFILE_GAMMAS, s: float = 0.0) -> RatioStats:
    if spec.d != 1:
        raise EstimateError(f"L^4 estimate is sampled in d = 1 only, got d = {spec.d}")
    rng = np.random.default_rng(seed)
    gammas = profile(gammas, s)
    stats = RatioStats("l4", spec.cutoff,
                       params={"T": T, "modulation": modulation, "seed": seed, "profile": gammas})
    for sample_id in range(samples):
        gamma = gammas[sample_id % len(gammas)]
        traj = random_spacetime_trajectory(spec, rng, T, gamma, modulation)
        stats.ratios.append((sample_id, l4_sample_ratio(traj)))
    return stats


def product_range_errors(d: int, s: float, r: float) -> list[str]:
    errors = []
    if s < 0:
        errors.append(f"product estimate needs s >= 0, got {s}")
    elif s == 0 and r != 1:
        errors.append("s = 0 requires r = 1")
    elif 0 < s <= d / 2 and not 1 <= r < d / (d - s):
        errors.append(f"0 < s <= d/2 requires 1 <= r < d/(d-s) = {d / (d - s):g}, got r={r}")
    elif s > d / 2 and r != 2:
        errors.append("s > d/2 requires r = 2")
    return errors


def product_sample_ratio(f: SpectralField, u: SpectralField, s: float, r: float) -> float:
    """||f·u||_{H^s} / (||f||_{FL^{s,r}}·||u||_{H^s}), product taken exactly on the enlarged cube."""
    errors = product_range_errors(f.spec.d, s, r)
    if errors:
        raise EstimateError("; ".join(errors))
    denominator = fl_norm(f, s, r) * sobolev_norm(u, s)
    if denominator == 0:
        raise EstimateError("product estimate denominator vanishes")
    return sobolev_norm(product_field([f, u]), s) / denominator


def product(spec: TorusSpec, s: float, r: float, samples: int, seed: int) -> RatioStats:
    errors = product_range_errors(spec.d, s, r)
    if errors:
        raise EstimateError("; ".join(errors))
    rng = np.random.default_rng(seed)
    gammas = profile(PROFILE_GAMMAS, s)
    stats = RatioStats("product", spec.cutoff, params={"s": s, "r": r, "seed": seed, "profile": gammas})
    for sample_id in range(samples):
        f = random_field(spec, rng, gammas[sample_id % len(gammas)])
        u = random_field(spec, rng, gammas[(sample_id + 1) % len(gammas)])
        stats.ratios.append((sample_id, product_sample_ratio(f, u, s, r)))
    return stats


def multilinear_range_errors(d: int, k: int, s: float, b: float, bp: float) -> list[str]:
    errors = []
    if k < 1 or k > MAX_MULTILINEAR_K:
        errors.append(f"multilinear estimate supports 1 <= k <= {MAX_MULTILINEAR_K}, got {k}")
    if d == 1 and k == 1:
        if s < 0:
            errors.append(f"d = k = 1 requires s >= 0, got {s}")
        if b < 3 / 8:
            errors.append(f"d = k = 1 requires b >= 3/8, got {b}")
        if bp > 5 / 8:
            errors.append(f"d = k = 1 requires b' <= 5/8, got {bp}")
    else:
        if s <= s_crit(d, k) or s < 0:
            errors.append(f"need s > s_crit = {s_crit(d, k):g} and s >= 0, got {s}")
        if not b < 0.5 < bp:
            errors.append(f"need b < 1/2 < b', got b={b}, b'={bp}")
    if not bp - 1 > -0.5:
        errors.append(f"output exponent b'-1 must exceed -1/2, got {bp - 1}")
    return errors


def _check_multilinear(spec: TorusSpec, k: int, s: float, b: float, bp: float):
    errors = multilinear_range_errors(spec.d, k, s, b, bp)
    if spec.cutoff > MAX_MULTILINEAR_CUTOFF:
        errors.append(f"multilinear estimate supports N <= {MAX_MULTILINEAR_CUTOFF}, got {spec.cutoff}")
    if errors:
        raise EstimateError("; ".join(errors))


def interaction_trajectory(factors: list[Trajectory]) -> Trajectory:
    """Samples of u_1·conj(u_2)·u_3···u_{2k+1} on the enlarged cube."""
    first = factors[0]
    conjugate = [i % 2 == 1 for i in range(len(factors))]
    coeffs = []
    for j in range(len(first)):
        fields = [SpectralField(f.spec, f.coeffs[j]) for f in factors]
        coeffs.append(product_field(fields, conjugate).coeffs)
    spec = first.spec.enlarged(len(factors) * first.spec.cutoff)
    return Trajectory(spec, first.times, np.stack(coeffs), meta=dict(first.meta))


def multilinear_sample_ratio(factors: list[Trajectory], k: int, s: float, b: float, bp: float) -> float:
    """||u_1 ū_2 u_3···||_{X^{s,b'-1}} / prod ||u_i||_{X^{s,b}} for 2k+1 trajectories."""
    if len(factors) != 2 * k + 1:
        raise EstimateError(f"expected {2 * k + 1} factors, got {len(factors)}")
    _check_multilinear(factors[0].spec, k, s, b, bp)
    if any(len(f) != len(factors[0]) or not np.allclose(f.times, factors[0].times) for f in factors):
        raise EstimateError("factors must share their time samples")
    numerator = xsb_norm(interaction_trajectory(factors), s, bp - 1)
    if numerator == 0:
        return 0.0
    denominator = float(np.prod([xsb_norm(f, s, b) for f in factors]))
    if denominator == 0:
        raise EstimateError("multilinear denominator vanishes")
    return numerator / denominator


def multilinear(spec: TorusSpec, k: int, s: float, b: float, bp: float, samples: int, seed: int,
                T: float = 1.0, modulation: float = 4.0, time_samples: int = 64) -> RatioStats:
    _check_multilinear(spec, k, s, b, bp)
    rng = np.random.default_rng(seed)
    stats = RatioStats("multilinear", spec.cutoff,
                       params={"k": k, "s": s, "b": b, "bp": bp, "T": T, "seed": seed,
                               "profile": profile(PROFILE_GAMMAS, s)})
    for sample_id in range(samples):
        gamma = _resolve_gamma(PROFILE_GAMMAS[sample_id % len(PROFILE_GAMMAS)], s)
        factors = [random_spacetime_trajectory(spec, rng, T, gamma, modulation, time_samples)
                   for _ in range(2 * k + 1)]
        stats.ratios.append((sample_id, multilinear_sample_ratio(factors, k, s, b, bp)))
    return stats


def single_mode_xsb_closed_form(n, periods, s: float, b: float, samples: int, h: float,
                                time_pad: int = DEFAULT_TIME_PAD) -> float:
    """
    X^{s,b} norm of the constant-in-time sampled mode e_n, from the Dirichlet
    kernel |sin(Lθ/2)/sin(θ/2)| with θ = h(ω(n) + τ_m).
    """
    n = np.atleast_1d(np.asarray(n, dtype=float))
    omega = float(np.sum((n / np.asarray(periods, dtype=float)) ** 2))
    padded = samples * time_pad
    tau = angular_frequencies(padded, h)
    half = h * (omega + tau) / 2
    numerator = np.sin(samples * half)
    denominator = np.sin(half)
    small = np.abs(denominator) < 1e-12
    kernel = np.where(small, float(samples), np.abs(numerator) / np.where(small, 1.0, np.abs(denominator)))
    weight = (1.0 + tau ** 2) ** b
    bracket = math.sqrt(1.0 + float(np.sum(n ** 2)))
    return bracket ** s * math.sqrt(float(np.sum(weight * (h * kernel) ** 2)) / (padded * h))


def multilinear_closed_form(spec: TorusSpec, modes: list, k: int, s: float, b: float, bp: float,
                            samples: int, h: float, time_pad: int = DEFAULT_TIME_PAD) -> float:
    """Ratio for 2k+1 constant single modes; the product is the mode n_1 - n_2 + n_3 - ..."""
    if len(modes) != 2 * k + 1:
        raise EstimateError(f"expected {2 * k + 1} modes, got {len(modes)}")
    vectors = [np.atleast_1d(np.asarray(m, dtype=int)) for m in modes]
    out = sum(v if i % 2 == 0 else -v for i, v in enumerate(vectors))
    numerator = single_mode_xsb_closed_form(out, spec.periods, s, bp - 1, samples, h, time_pad)
    denominator = np.prod([single_mode_xsb_closed_form(v, spec.periods, s, b, samples, h, time_pad)
                           for v in vectors])
    return numerator / float(denominator)


def factorization_check(alpha: float, t: float = 1.0, mu: float = 0.0) -> dict:
    """
    ∫_μ^t (t-x)^{α-1}(x-μ)^{-α} dx, which equals π/sin(πα) for 0 < α < 1,
    by algebraic-weight quadrature.
    """
    if not 0 < alpha < 1:
        raise EstimateError(f"factorisation exponent must lie in (0, 1), got {alpha}")
    if not t > mu:
        raise EstimateError(f"need t > mu, got t={t}, mu={mu}")
    value, abserr = quad(lambda x: 1.0, mu, t, weight="alg", wvar=(-alpha, alpha - 1))
    expected = math.pi / math.sin(math.pi * alpha)
    return {
        "alpha": alpha,
        "value": value,
        "expected": expected,
        "error": abs(value - expected),
        "quadrature_error": abserr,
    }


ESTIMATES = {
    "strichartz": strichartz,
    "l4": l4,
    "product": product,
    "multilinear": multilinear,
}


def sweep(kind: str, cutoffs, d: int = 1, periods=(), **params) -> list[RatioStats]:
    """Run one estimate for every cutoff N; extra params go to its sampler."""
    if kind not in ESTIMATES:
        raise EstimateError(f"unknown estimate {kind!r}, expected one of {sorted(ESTIMATES)}")
    results = []
    for cutoff in cutoffs:
        spec = TorusSpec(d, int(cutoff), tuple(periods))
        stats = ESTIMATES[kind](spec, **params)
        logger.info("%s N=%d max ratio %.6g over %d samples", kind, cutoff, stats.max, len(stats.ratios))
        results.append(stats)
    return results


def growth_factor(results: list[RatioStats]) -> float:
    """Max ratio at the largest N over the max ratio at the smallest N."""
    if len(results) < 2:
        raise EstimateError("growth factor needs at least two cutoffs")
    ordered = sorted(results, key=lambda r: r.cutoff)
    if ordered[0].max == 0:
        raise EstimateError("smallest cutoff produced no positive ratio")
    return ordered[-1].max / ordered[0].max
