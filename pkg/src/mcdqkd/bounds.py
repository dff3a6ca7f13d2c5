"""Finite-sample deviation terms and the resulting single photon bounds.

Each observed linear combination ``sum_n c_n Q_n`` is a scaled sum of ``s``
draws without replacement whose values lie in ``{c_n / p_n}``.  The one-sided
McDiarmid bound for such a centering sequence moves the observed value by
``Width({c_n / p_n}) * sqrt(ln(1/eps) / (2 s))`` (times the scale).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from mcdqkd.channel import ObservedStats
from mcdqkd.decoy import DecoyCoefficients, IntensityProfile

CHI = 9
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class SecurityBudget:
    """Failure probabilities.

    ``eps_sec`` is split evenly over ``CHI`` terms; each of the four statistical
    tests (X gain sum, Z gain sum, Z error sum, phase error) gets ``eps_test``.
    """

    eps_sec: float
    eps_cor: float
    kappa: float | None = None
    chi: int = CHI

    def __post_init__(self) -> None:
        if self.chi != CHI:
            raise ValueError(f"chi is fixed at {CHI}")
        for name in ("eps_sec", "eps_cor"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {value}")
        if self.kappa is not None and not 0.0 < self.kappa < 1.0:
            raise ValueError(f"kappa must be in (0, 1), got {self.kappa}")

    @property
    def eps_test(self) -> float:
        return self.eps_sec / self.chi


@dataclass(frozen=True)
class SampleSizes:
    s_x: float
    s_z: float
    s_z_e: float

    def __post_init__(self) -> None:
        if self.s_x < 1.0:
            raise ValueError(f"s_x must be at least 1, got {self.s_x}")
        if not 0.0 <= self.s_z_e <= self.s_z:
            raise ValueError("need 0 <= s_z_e <= s_z")


@dataclass(frozen=True)
class ZBasisEstimates:
    """Finite-key Z-basis single photon estimates.

    ``feasible`` is False when the deviation-corrected single photon yield is
    not positive; ``e_Z1`` is then NaN.
    """

    y1_lower: float
    e1_product_upper: float
    e_Z1: float
    delta_Z: float
    delta_Z_e: float
    feasible: bool


class GammaBar(NamedTuple):
    value: float
    vacuous: bool


class PhaseErrorBound(NamedTuple):
    e_p: float
    gamma: float
    vacuous: bool
    feasible: bool


def mcdiarmid_deviation(eps: float, s: float, w: float) -> float:
    """Deviation ``delta`` with ``exp(-2 delta^2 / (s w^2)) = eps``, divided by ``s``.

    This is the one-sided deviation of the *mean* of ``s`` centering variables
    each ranging over an interval of length ``w``.
    """
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must be in (0, 1], got {eps}")
    if s < 1.0:
        raise ValueError(f"s must be at least 1, got {s}")
    if w < 0.0:
        raise ValueError(f"w must be non-negative, got {w}")
    return w * math.sqrt(-math.log(eps) / (2.0 * s))


def gamma_bar_radicand(a: float, b: float, c: float, d: float) -> float:
    """Expression under the square root of the hypergeometric correction.

    The logarithm is expanded term by term so tiny ``a`` cannot underflow.
    """
    if b <= 0.0 or b >= 1.0:
        return 0.0
    inv = 1.0 / c + 1.0 / d
    log_term = math.log(inv) - _LOG_2PI - math.log1p(-b) - math.log(b) - 2.0 * math.log(a)
    return inv * (1.0 - b) * b * log_term


def gamma_bar(a: float, b: float, c: float, d: float) -> GammaBar:
    """Hypergeometric finite-size correction to the phase error rate.

    A negative radicand means no correction exists at failure probability
    ``a``; the value is then 0 and ``vacuous`` is set.
    """
    if not 0.0 < a < 1.0:
        raise ValueError(f"a must be in (0, 1), got {a}")
    if not 0.0 <= b <= 1.0:
        raise ValueError(f"b must be in [0, 1], got {b}")
    if c <= 0.0 or d <= 0.0:
        raise ValueError(f"c and d must be positive, got c={c}, d={d}")
    r = gamma_bar_radicand(a, b, c, d)
    if r < 0.0:
        return GammaBar(0.0, True)
    return GammaBar(math.sqrt(r), False)


def derive_sample_sizes(s_x: float, p_x: float, observed: ObservedStats) -> SampleSizes:
    if not 0.0 < p_x < 1.0:
        raise ValueError(f"p_x must be in (0, 1), got {p_x}")
    mean_q_x = observed.mean_q_x
    mean_q_z = observed.mean_q_z
    if mean_q_x <= 0.0 or mean_q_z <= 0.0:
        raise ValueError("degenerate observation: zero mean gain")
    p_z = 1.0 - p_x
    s_z = p_z * p_z * s_x * mean_q_z / (p_x * p_x * mean_q_x)
    s_z_e = s_z * observed.mean_qe_z / mean_q_z
    return SampleSizes(s_x=s_x, s_z=s_z, s_z_e=s_z_e)


def y1_lower_bound(
    coeffs: DecoyCoefficients, p_mu, gains, mean_gain: float, s: float, eps: float
) -> float:
    """Single photon yield bound with the one-sided gain-sum deviation removed."""
    w1 = coeffs.widths(p_mu)[0]
    observed_sum = math.fsum(a * q for a, q in zip(coeffs.a1, gains))
    return y1_lower_from_sum(observed_sum, w1, mean_gain, s, eps)


def y1_lower_from_sum(a1_sum: float, w1: float, mean_gain: float, s: float, eps: float) -> float:
    return a1_sum - mean_gain * mcdiarmid_deviation(eps, s, w1)


def z_basis_estimates(
    coeffs: DecoyCoefficients,
    profile: IntensityProfile,
    observed: ObservedStats,
    sizes: SampleSizes,
    budget: SecurityBudget,
) -> ZBasisEstimates:
    if sizes.s_z < 1.0:
        raise ValueError(f"s_z must be at least 1, got {sizes.s_z}")
    w1, w2 = coeffs.widths(profile.p_mu)
    return z_estimates_from_sums(
        math.fsum(a * q for a, q in zip(coeffs.a1, observed.q_z)),
        math.fsum(a * qe for a, qe in zip(coeffs.a2, observed.error_gain_z())),
        w1,
        w2,
        observed.mean_q_z,
        observed.mean_qe_z,
        sizes.s_z,
        budget.eps_test,
    )


def z_estimates_from_sums(
    a1_sum: float,
    a2_sum: float,
    w1: float,
    w2: float,
    mean_q: float,
    mean_qe: float,
    s_z: float,
    eps: float,
) -> ZBasisEstimates:
    """Core of :func:`z_basis_estimates` on precomputed coefficient sums and widths."""
    delta_z = mean_q * mcdiarmid_deviation(eps, s_z, w1)
    delta_z_e = math.sqrt(mean_q * mean_qe) * mcdiarmid_deviation(eps, s_z, w2)
    y1 = a1_sum - delta_z
    e1 = a2_sum + delta_z_e
    if y1 <= 0.0:
        return ZBasisEstimates(y1, e1, math.nan, delta_z, delta_z_e, feasible=False)
    e_z1 = min(0.5, max(0.0, e1 / y1))
    return ZBasisEstimates(y1, e1, e_z1, delta_z, delta_z_e, feasible=True)


def e_p_upper(
    e_Z1: float,
    y_Z1: float,
    y_X1: float,
    profile: IntensityProfile,
    observed: ObservedStats,
    sizes: SampleSizes,
    budget: SecurityBudget,
) -> PhaseErrorBound:
    """Phase error bound ``e_Z1 + gamma_bar(eps, e_Z1, c, d)``, capped at 1/2.

    ``c`` and ``d`` are the expected single photon detection counts in the Z
    and X bases.  Nonpositive counts give an infeasible result (NaN ``e_p``).
    """
    if not 0.0 <= e_Z1 <= 0.5:
        raise ValueError(f"e_Z1 must be in [0, 1/2], got {e_Z1}")
    single = profile.single_weight
    c = sizes.s_z * y_Z1 * single / observed.mean_q_z
    d = sizes.s_x * y_X1 * single / observed.mean_q_x
    if not (c > 0.0 and d > 0.0):
        return PhaseErrorBound(math.nan, math.nan, False, False)
    g = gamma_bar(budget.eps_test, e_Z1, c, d)
    return PhaseErrorBound(min(0.5, e_Z1 + g.value), g.value, g.vacuous, True)
