"""Brute-force and Monte Carlo checks of the decoy bounds and deviation terms.

These routines evaluate the photon-number forward model directly and sample
finite populations explicitly, so they do not share code paths with the
bounds they test beyond the single formula under test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from mcdqkd.bounds import mcdiarmid_deviation
from mcdqkd.channel import REFERENCE_CHANNEL, gain
from mcdqkd.decoy import IntensityProfile, compute_coefficients

DEFAULT_TRUNCATION = 12
VALIDITY_TOL = 1e-9


@dataclass(frozen=True)
class TruncatedSource:
    """Photon-number yields and error rates with ``Y_m = 0`` beyond ``m = M``."""

    Y: tuple[float, ...]
    e: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.Y) != len(self.e) or len(self.Y) < 2:
            raise ValueError("Y and e must have equal length M + 1 >= 2")
        if any(not 0.0 <= y <= 1.0 for y in self.Y):
            raise ValueError("yields must lie in [0, 1]")
        if any(not 0.0 <= x <= 0.5 for x in self.e):
            raise ValueError("error rates must lie in [0, 1/2]")

    @property
    def M(self) -> int:
        return len(self.Y) - 1

    @classmethod
    def random(cls, rng: np.random.Generator, M: int = DEFAULT_TRUNCATION) -> TruncatedSource:
        y = rng.uniform(0.0, 1.0, M + 1)
        e = rng.uniform(0.0, 0.5, M + 1)
        # sparse sources put all weight on a few photon numbers, which stresses the bounds
        if rng.random() < 0.5:
            y *= rng.random(M + 1) < 0.3
        return cls(tuple(y), tuple(e))


def truncated_poisson_forward(source: TruncatedSource, mu: float) -> tuple[float, float]:
    """Exact gain ``Q`` and error product ``Q E`` of a truncated source at intensity ``mu``."""
    if mu < 0.0:
        raise ValueError(f"mu must be non-negative, got {mu}")
    q = []
    qe = []
    weight = math.exp(-mu)
    for m, (y, err) in enumerate(zip(source.Y, source.e)):
        if m > 0:
            weight *= mu / m
        q.append(weight * y)
        qe.append(weight * y * err)
    return math.fsum(q), math.fsum(qe)


def random_profile(
    rng: np.random.Generator, k: int, spacing: float = 0.1, mu_max: float = 1.0
) -> IntensityProfile:
    """Uniform draw from ``{mu_max >= mu_1 > ... > mu_k >= 0}`` with all gaps >= spacing."""
    slack = mu_max - (k - 1) * spacing
    if slack < 0.0:
        raise ValueError(f"k={k} intensities do not fit with spacing {spacing}")
    base = np.sort(rng.uniform(0.0, slack, k))
    mu = base + spacing * np.arange(k)
    p = rng.dirichlet(np.ones(k))
    p = np.maximum(p, 1e-6)
    p /= p.sum()
    return IntensityProfile(tuple(float(m) for m in mu[::-1]), tuple(float(x) for x in p))


@dataclass(frozen=True)
class ValidityReport:
    k: int
    trials: int
    violations_y0: int
    violations_y1: int
    violations_e1: int
    worst_excess: float

    @property
    def violations(self) -> int:
        return self.violations_y0 + self.violations_y1 + self.violations_e1


def bound_validity_check(
    trials: int,
    k: int,
    seed: int = 0,
    *,
    spacing: float = 0.1,
    M: int = DEFAULT_TRUNCATION,
) -> ValidityReport:
    """Count decoy-bound violations over random truncated sources and profiles.

    For each trial the three linear combinations must satisfy
    ``sum a0 Q <= Y_0``, ``sum a1 Q <= Y_1`` and ``sum a2 Q E >= Y_1 e_1`` up to
    ``VALIDITY_TOL``.  ``worst_excess`` is the largest violation margin seen
    (negative when every bound held with room to spare).
    """
    rng = np.random.default_rng(seed)
    v0 = v1 = v2 = 0
    worst = -math.inf
    for _ in range(trials):
        source = TruncatedSource.random(rng, M)
        profile = random_profile(rng, k, spacing)
        forward = [truncated_poisson_forward(source, m) for m in profile.mu]
        coeffs = compute_coefficients(profile)
        y0_est = math.fsum(a * q for a, (q, _) in zip(coeffs.a0, forward))
        y1_est = math.fsum(a * q for a, (q, _) in zip(coeffs.a1, forward))
        e1_est = math.fsum(a * qe for a, (_, qe) in zip(coeffs.a2, forward))
        excess = (
            y0_est - source.Y[0],
            y1_est - source.Y[1],
            source.Y[1] * source.e[1] - e1_est,
        )
        worst = max(worst, *excess)
        v0 += int(excess[0] > VALIDITY_TOL)
        v1 += int(excess[1] > VALIDITY_TOL)
        v2 += int(excess[2] > VALIDITY_TOL)
    return ValidityReport(k, trials, v0, v1, v2, float(worst))


@dataclass(frozen=True)
class CoverageReport:
    """Empirical one-sided failure frequencies of the McDiarmid deviation.

    ``rate_low`` counts trials where the population mean lies more than the
    deviation below the sample mean (what a lower bound must guard against);
    ``rate_high`` the mirror event.
    """

    eps: float
    s: int
    trials: int
    threshold: float
    rate_low: float
    rate_high: float

    @property
    def allowed(self) -> float:
        return self.eps + 3.0 * math.sqrt(self.eps / self.trials)

    @property
    def rate(self) -> float:
        return max(self.rate_low, self.rate_high)

    @property
    def passed(self) -> bool:
        return self.rate <= self.allowed


def coverage_check(
    eps: float,
    s: int,
    k: int = 3,
    trials: int = 10_000,
    seed: int = 0,
    *,
    values=None,
    weights=None,
    population_factor: int = 10,
) -> CoverageReport:
    """Sample ``s`` of ``population_factor * s`` labeled items without replacement.

    By default item values are ``a1_n / p_n`` for a fixed ``k``-intensity profile
    and label frequencies follow the detection fractions ``p_n Q_n / <Q>`` of
    the reference fiber channel.
    """
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must be in (0, 1], got {eps}")
    if s < 1 or trials < 1:
        raise ValueError("s and trials must be positive")
    population = population_factor * s
    if s > population:
        raise ValueError("sample larger than population")

    if values is None:
        profile = reference_profile(k)
        coeffs = compute_coefficients(profile)
        values = [a / p for a, p in zip(coeffs.a1, profile.p_mu)]
        if weights is None:
            weights = [p * gain(REFERENCE_CHANNEL, m) for p, m in zip(profile.p_mu, profile.mu)]
    values = np.asarray(values, dtype=float)
    if weights is None:
        weights = np.ones_like(values)
    counts = _apportion(population, np.asarray(weights, dtype=float))

    spread = float(values.max() - values.min())
    centered = values - np.dot(counts, values) / population if spread > 0.0 else np.zeros_like(values)
    rng = np.random.default_rng(seed)
    draws = rng.multivariate_hypergeometric(counts, s, size=trials)
    sample_minus_pop = draws @ centered / s

    threshold = mcdiarmid_deviation(eps, s, spread)
    return CoverageReport(
        eps=eps,
        s=s,
        trials=trials,
        threshold=threshold,
        rate_low=float(np.mean(sample_minus_pop > threshold)),
        rate_high=float(np.mean(-sample_minus_pop > threshold)),
    )


def _apportion(total: int, weights: np.ndarray) -> np.ndarray:
    """Integer counts summing to ``total``, proportional to ``weights`` (largest remainder)."""
    share = total * weights / weights.sum()
    counts = np.floor(share).astype(np.int64)
    remainder = total - counts.sum()
    order = np.argsort(-(share - counts), kind="stable")
    counts[order[:remainder]] += 1
    return counts


def reference_profile(k: int) -> IntensityProfile:
    """Evenly spaced intensities from 0.6 down to vacuum with equal usage."""
    mu = tuple(0.6 * (k - 1 - i) / (k - 1) if i < k - 1 else 1e-6 for i in range(k))
    return IntensityProfile(mu, (1.0 / k,) * k)
