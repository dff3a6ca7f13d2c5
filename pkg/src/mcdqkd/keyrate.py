"""Finite-key secret key rate and the ``eps_sec = kappa * l_final`` fixed point."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from mcdqkd.bounds import (
    CHI,
    SampleSizes,
    SecurityBudget,
    derive_sample_sizes,
    e_p_upper,
    mcdiarmid_deviation,
    y1_lower_from_sum,
    z_estimates_from_sums,
)
from mcdqkd.channel import ObservedStats
from mcdqkd.decoy import DecoyCoefficients, IntensityProfile, compute_coefficients, width

FIXED_POINT_TOL_BITS = 0.5
FIXED_POINT_MAX_ITER = 100


class FixedPointError(RuntimeError):
    def __init__(self, message: str, trace: list[float]):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class KeyRateReport:
    """All intermediate quantities of one key-rate evaluation.

    ``R`` is clamped at zero; ``raw_R`` keeps the unclamped value (NaN when the
    bounds are undefined).  ``feasible`` is False when a single photon estimate
    is not positive, or when the security fixed point ran into a zero rate.
    """

    R: float
    raw_R: float
    l_final: float
    eps_sec: float
    e_p: float
    e_Z1: float
    lambda_EC: float
    b: tuple[float, ...]
    deviation_X: float
    feasible: bool
    vacuous_gamma: bool
    y_Z1: float = math.nan
    y_X1: float = math.nan
    gamma: float = math.nan
    sizes: SampleSizes | None = None
    iterations: int = 0
    eps_trace: tuple[float, ...] = field(default=())


def binary_entropy(x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"binary entropy needs 0 <= x <= 1, got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def lambda_ec(profile: IntensityProfile, observed: ObservedStats) -> float:
    """Shannon-limit error correction leakage per pulse, ``<Q_X H2(E_X)>``."""
    return profile.mean([q * binary_entropy(e) for q, e in zip(observed.q_x, observed.e_x)])


def compute_b(
    coeffs: DecoyCoefficients,
    profile: IntensityProfile,
    p_X: float,
    e_p: float,
    *,
    vacuum: bool = True,
) -> tuple[float, ...]:
    """Per-intensity weights of the X-basis gains in the key rate.

    ``vacuum=False`` drops the vacuum term, for when the ``Y_0`` bound is not
    positive and is replaced by zero.
    """
    if not 0.0 <= e_p <= 0.5:
        raise ValueError(f"e_p must be in [0, 1/2], got {e_p}")
    m0 = profile.vacuum_weight if vacuum else 0.0
    m1 = profile.single_weight
    privacy = 1.0 - binary_entropy(e_p)
    px2 = p_X * p_X
    return tuple(px2 * (m0 * a0 + m1 * a1 * privacy) for a0, a1 in zip(coeffs.a0, coeffs.a1))


def _composable_overhead(mean_q_x: float, s_x: float, eps_sec: float, eps_cor: float) -> float:
    return mean_q_x / s_x * (6.0 * math.log2(CHI / eps_sec) + math.log2(2.0 / eps_cor))


def _infeasible(eps_sec: float, lam: float, k: int, **extra) -> KeyRateReport:
    return KeyRateReport(
        R=0.0,
        raw_R=math.nan,
        l_final=0.0,
        eps_sec=eps_sec,
        e_p=math.nan,
        e_Z1=math.nan,
        lambda_EC=lam,
        b=(0.0,) * k,
        deviation_X=math.nan,
        feasible=False,
        vacuous_gamma=False,
        **extra,
    )


class _RatePoint:
    """Everything in the key rate that does not depend on the failure probabilities."""

    def __init__(self, profile, observed, p_X, s_X, coeffs):
        self.profile = profile
        self.observed = observed
        self.p_X = p_X
        self.s_X = s_X
        self.coeffs = coeffs
        self.sizes = derive_sample_sizes(s_X, p_X, observed)
        self.lam = lambda_ec(profile, observed)
        self.w1, self.w2 = coeffs.widths(profile.p_mu)
        self.a1_sum_z = math.fsum(a * q for a, q in zip(coeffs.a1, observed.q_z))
        self.a2_sum_z = math.fsum(a * qe for a, qe in zip(coeffs.a2, observed.error_gain_z()))
        self.a1_sum_x = math.fsum(a * q for a, q in zip(coeffs.a1, observed.q_x))
        self.y0_x = math.fsum(a * q for a, q in zip(coeffs.a0, observed.q_x))

    def at(self, budget: SecurityBudget) -> KeyRateReport:
        profile, observed, sizes = self.profile, self.observed, self.sizes
        p_X, s_X = self.p_X, self.s_X
        mean_q_x = observed.mean_q_x
        if sizes.s_z < 1.0:
            return _infeasible(budget.eps_sec, self.lam, profile.k, sizes=sizes)

        eps = budget.eps_test
        z = z_estimates_from_sums(
            self.a1_sum_z, self.a2_sum_z, self.w1, self.w2,
            observed.mean_q_z, observed.mean_qe_z, sizes.s_z, eps,
        )
        y_x1 = y1_lower_from_sum(self.a1_sum_x, self.w1, mean_q_x, s_X, eps)
        if not z.feasible or y_x1 <= 0.0:
            return _infeasible(budget.eps_sec, self.lam, profile.k, y_Z1=z.y1_lower, y_X1=y_x1, sizes=sizes)

        phase = e_p_upper(z.e_Z1, z.y1_lower, y_x1, profile, observed, sizes, budget)
        if not phase.feasible:
            return _infeasible(budget.eps_sec, self.lam, profile.k, y_Z1=z.y1_lower, y_X1=y_x1, sizes=sizes)

        b = compute_b(self.coeffs, profile, p_X, phase.e_p, vacuum=self.y0_x > 0.0)
        dev_x = mean_q_x * mcdiarmid_deviation(
            eps, s_X, width([bn / p for bn, p in zip(b, profile.p_mu)])
        )
        raw = (
            math.fsum(bn * q for bn, q in zip(b, observed.q_x))
            - dev_x
            - p_X * p_X * (self.lam + _composable_overhead(mean_q_x, s_X, budget.eps_sec, budget.eps_cor))
        )
        rate = max(0.0, raw)
        return KeyRateReport(
            R=rate,
            raw_R=raw,
            l_final=rate * s_X / (p_X * p_X * mean_q_x),
            eps_sec=budget.eps_sec,
            e_p=phase.e_p,
            e_Z1=z.e_Z1,
            lambda_EC=self.lam,
            b=b,
            deviation_X=dev_x,
            feasible=True,
            vacuous_gamma=phase.vacuous,
            y_Z1=z.y1_lower,
            y_X1=y_x1,
            gamma=phase.gamma,
            sizes=sizes,
        )


def key_rate(
    profile: IntensityProfile,
    observed: ObservedStats,
    p_X: float,
    s_X: float,
    budget: SecurityBudget,
    *,
    coeffs: DecoyCoefficients | None = None,
) -> KeyRateReport:
    """Finite-key rate in secure bits per pulse at a fixed ``eps_sec``."""
    if coeffs is None:
        coeffs = compute_coefficients(profile)
    return _RatePoint(profile, observed, p_X, s_X, coeffs).at(budget)


def asymptotic_rate(
    profile: IntensityProfile,
    observed: ObservedStats,
    p_X: float,
    s_X: float | None = None,
    budget: SecurityBudget | None = None,
) -> float:
    """Key rate with every statistical deviation and the phase correction removed.

    With ``s_X`` and ``budget`` given, the composable length overhead is kept;
    otherwise this is the infinite-key limit.  Not clamped at zero.
    """
    coeffs = compute_coefficients(profile)
    y1 = math.fsum(a * q for a, q in zip(coeffs.a1, observed.q_z))
    if y1 <= 0.0:
        return -math.inf
    e1 = math.fsum(a * qe for a, qe in zip(coeffs.a2, observed.error_gain_z()))
    e_z1 = min(0.5, max(0.0, e1 / y1))
    y0 = math.fsum(a * q for a, q in zip(coeffs.a0, observed.q_x))
    b = compute_b(coeffs, profile, p_X, e_z1, vacuum=y0 > 0.0)
    overhead = 0.0
    if s_X is not None and budget is not None:
        overhead = _composable_overhead(observed.mean_q_x, s_X, budget.eps_sec, budget.eps_cor)
    return math.fsum(bn * q for bn, q in zip(b, observed.q_x)) - p_X * p_X * (
        lambda_ec(profile, observed) + overhead
    )


def solve_security_fixed_point(
    profile: IntensityProfile,
    observed: ObservedStats,
    p_X: float,
    s_X: float,
    kappa: float,
    eps_cor: float,
) -> KeyRateReport:
    """Resolve ``eps_sec = kappa * l_final(eps_sec)`` by direct iteration.

    Starts from ``eps_sec = kappa * s_X`` and stops once ``l_final`` moves by
    less than half a bit.  A zero rate at any iterate returns an infeasible
    report carrying that iterate's raw value.
    """
    if not 0.0 < kappa < 1.0:
        raise ValueError(f"kappa must be in (0, 1), got {kappa}")
    point = _RatePoint(profile, observed, p_X, s_X, compute_coefficients(profile))
    eps = kappa * s_X
    trace: list[float] = []
    previous = None
    for it in range(1, FIXED_POINT_MAX_ITER + 1):
        trace.append(eps)
        report = point.at(SecurityBudget(eps, eps_cor, kappa))
        if report.R <= 0.0:
            return _zero_rate(report, it, trace)
        if previous is not None and abs(report.l_final - previous) < FIXED_POINT_TOL_BITS:
            return _with_trace(report, it, trace)
        previous = report.l_final
        eps = kappa * report.l_final
    raise FixedPointError(f"security fixed point did not converge in {FIXED_POINT_MAX_ITER} iterations", trace)


def _with_trace(report: KeyRateReport, iterations: int, trace: list[float]) -> KeyRateReport:
    return replace(report, iterations=iterations, eps_trace=tuple(trace))


def _zero_rate(report: KeyRateReport, iterations: int, trace: list[float]) -> KeyRateReport:
    return replace(report, R=0.0, l_final=0.0, feasible=False, iterations=iterations, eps_trace=tuple(trace))

