import math

import mpmath
import numpy as np
import pytest

from mcdqkd import (
    REFERENCE_CHANNEL,
    IntensityProfile,
    SampleSizes,
    SecurityBudget,
    compute_coefficients,
    derive_sample_sizes,
    e_p_upper,
    gamma_bar,
    mcdiarmid_deviation,
    observe,
    z_basis_estimates,
)


def gamma_bar_mp(a, b, c, d):
    """The hypergeometric correction evaluated directly from its closed form at 50 digits."""
    mpmath.mp.dps = 50
    a, b, c, d = (mpmath.mpf(x) for x in (a, b, c, d))
    radicand = (c + d) * (1 - b) * b / (c * d) * mpmath.log((c + d) / (2 * mpmath.pi * c * d * (1 - b) * b * a * a))
    return None if radicand < 0 else mpmath.sqrt(radicand)


def gamma_grid(n=100, seed=2024):
    rng = np.random.default_rng(seed)
    points = []
    while len(points) < n:
        a = 10.0 ** rng.uniform(-30, -1)
        b = rng.uniform(1e-4, 0.5)
        c = 10.0 ** rng.uniform(1, 10)
        d = 10.0 ** rng.uniform(1, 10)
        if gamma_bar_mp(a, b, c, d) is not None:
            points.append((a, b, c, d))
    return points


# ------------------------------------------------------------------ mcdiarmid


def test_mcdiarmid_examples():
    assert mcdiarmid_deviation(1.0, 100, 5) == 0.0
    assert mcdiarmid_deviation(math.exp(-2), 1, 1) == pytest.approx(1.0, rel=1e-15)
    assert mcdiarmid_deviation(math.exp(-2), 4, 3) == pytest.approx(1.5, rel=1e-15)


@pytest.mark.parametrize("args", [(0.0, 10, 1), (1.5, 10, 1), (0.1, 0.5, 1), (0.1, 10, -1)])
def test_mcdiarmid_domain(args):
    with pytest.raises(ValueError):
        mcdiarmid_deviation(*args)


def test_mcdiarmid_monotone_and_linear():
    eps = np.logspace(-20, -1, 20)
    s = np.logspace(0, 12, 13)
    by_eps = [mcdiarmid_deviation(e, 1e6, 2.0) for e in eps]
    assert all(x > y for x, y in zip(by_eps, by_eps[1:]))
    by_s = [mcdiarmid_deviation(1e-10, n, 2.0) for n in s]
    assert all(x > y for x, y in zip(by_s, by_s[1:]))
    base = mcdiarmid_deviation(1e-10, 1e6, 1.0)
    for w in (0.0, 0.5, 3.0, 17.0):
        assert mcdiarmid_deviation(1e-10, 1e6, w) == pytest.approx(w * base, rel=1e-14)


# ------------------------------------------------------------------ gamma_bar


@pytest.mark.parametrize("b", [0.0, 1.0])
def test_gamma_bar_boundary_b(b):
    assert gamma_bar(1e-10, b, 1e4, 1e5).value == 0.0


def test_gamma_bar_vacuous():
    g = gamma_bar(0.5, 0.5, 1e8, 1e8)
    assert g.value == 0.0 and g.vacuous
    assert gamma_bar_mp(0.5, 0.5, 1e8, 1e8) is None


def test_gamma_bar_reference_point():
    got = gamma_bar(1e-10, 0.05, 1e4, 1e4)
    assert not got.vacuous
    assert abs(got.value - float(gamma_bar_mp(1e-10, 0.05, 1e4, 1e4))) <= 1e-12 * got.value


def test_gamma_bar_matches_extended_precision_on_grid():
    for a, b, c, d in gamma_grid():
        want = float(gamma_bar_mp(a, b, c, d))
        got = gamma_bar(a, b, c, d)
        assert not got.vacuous
        assert abs(got.value - want) <= 1e-12 * want, (a, b, c, d)


def test_gamma_bar_tiny_a_does_not_underflow():
    g = gamma_bar(1e-200, 0.1, 1e6, 1e6)
    assert g.value == pytest.approx(float(gamma_bar_mp(1e-200, 0.1, 1e6, 1e6)), rel=1e-12)


@pytest.mark.parametrize("args", [(0.0, 0.1, 1, 1), (1.0, 0.1, 1, 1), (0.1, -0.1, 1, 1), (0.1, 0.1, 0, 1), (0.1, 0.1, 1, -1)])
def test_gamma_bar_domain(args):
    with pytest.raises(ValueError):
        gamma_bar(*args)


def test_gamma_bar_grows_as_counts_shrink():
    values = [gamma_bar(1e-10, 0.05, n, n).value for n in (1e8, 1e6, 1e4, 1e3)]
    assert all(x < y for x, y in zip(values, values[1:]))


# ------------------------------------------------------------------ sample sizes


def test_sample_sizes_symmetric(observed3):
    sizes = derive_sample_sizes(1e6, 0.5, observed3)
    assert sizes.s_z == pytest.approx(1e6, rel=1e-15)
    assert sizes.s_z_e / sizes.s_z == pytest.approx(observed3.mean_qe_z / observed3.mean_q_z, rel=1e-14)


def test_sample_sizes_example(observed3):
    assert derive_sample_sizes(8.1e5, 0.9, observed3).s_z == pytest.approx(1e4, rel=1e-12)


def test_sample_sizes_validation(observed3):
    with pytest.raises(ValueError):
        derive_sample_sizes(1e6, 1.0, observed3)
    with pytest.raises(ValueError):
        SampleSizes(0.5, 1.0, 0.5)
    with pytest.raises(ValueError):
        SampleSizes(10.0, 1.0, 2.0)


def test_security_budget():
    b = SecurityBudget(1e-10, 1e-15)
    assert b.eps_test * b.chi == pytest.approx(1e-10, rel=1e-15)
    with pytest.raises(ValueError):
        SecurityBudget(1e-10, 1e-15, chi=8)
    with pytest.raises(ValueError):
        SecurityBudget(0.0, 1e-15)


# ------------------------------------------------------------------ Z-basis estimates


def _asymptotic_ratio(coeffs, observed):
    num = sum(a * q * e for a, q, e in zip(coeffs.a2, observed.q_z, observed.e_z))
    den = sum(a * q for a, q in zip(coeffs.a1, observed.q_z))
    return num / den


def test_z_estimates_without_deviation(profile3, observed3):
    coeffs = compute_coefficients(profile3)
    sizes = SampleSizes(1e6, 1e6, 1e4)
    z = z_basis_estimates(coeffs, profile3, observed3, sizes, SecurityBudget(0.999999999, 1e-15))
    # eps_test = eps_sec / 9 is never 1, so compare against the explicit zero-deviation limit
    assert z.e_Z1 > _asymptotic_ratio(coeffs, observed3)
    from mcdqkd.bounds import z_estimates_from_sums

    w1, w2 = coeffs.widths(profile3.p_mu)
    exact = z_estimates_from_sums(
        sum(a * q for a, q in zip(coeffs.a1, observed3.q_z)),
        sum(a * qe for a, qe in zip(coeffs.a2, observed3.error_gain_z())),
        w1, w2, observed3.mean_q_z, observed3.mean_qe_z, 1e6, 1.0,
    )
    assert exact.delta_Z == 0.0 and exact.delta_Z_e == 0.0
    assert exact.e_Z1 == pytest.approx(_asymptotic_ratio(coeffs, observed3), rel=1e-12)


def test_z_estimates_converge_in_s_z(profile3, observed3):
    coeffs = compute_coefficients(profile3)
    target = _asymptotic_ratio(coeffs, observed3)
    budget = SecurityBudget(1e-10, 1e-15)
    gaps = []
    for s_z in (1e4, 1e6, 1e8):
        z = z_basis_estimates(coeffs, profile3, observed3, SampleSizes(1e6, s_z, s_z * 0.01), budget)
        gaps.append(z.e_Z1 - target if z.feasible else math.inf)
    assert all(g >= 0 for g in gaps)
    assert gaps[0] > gaps[1] > gaps[2]
    # the deviation scales as 1/sqrt(s_z): 100x more samples, roughly 10x smaller gap
    assert 5 < gaps[1] / gaps[2] < 20


def test_z_estimates_feasibility_smoke(profile3, observed3):
    coeffs = compute_coefficients(profile3)
    sizes = SampleSizes(1e6, 1e6, 1e6 * observed3.mean_qe_z / observed3.mean_q_z)
    z = z_basis_estimates(coeffs, profile3, observed3, sizes, SecurityBudget(9e-10, 1e-15))
    assert z.feasible and z.y1_lower > 0.0 and 0.0 <= z.e_Z1 <= 0.5


def test_z_estimates_infeasible_signal(profile3, observed3):
    coeffs = compute_coefficients(profile3)
    z = z_basis_estimates(coeffs, profile3, observed3, SampleSizes(10.0, 10.0, 0.1), SecurityBudget(1e-10, 1e-15))
    assert not z.feasible and math.isnan(z.e_Z1) and z.y1_lower <= 0.0


# ------------------------------------------------------------------ phase error


def test_e_p_vacuous_correction_returns_e_z1(profile3, observed3):
    # huge counts and a loose failure probability make the log term negative
    sizes = SampleSizes(1e14, 1e14, 1e12)
    bound = e_p_upper(0.3, 1.0, 1.0, profile3, observed3, sizes, SecurityBudget(0.9, 1e-15))
    assert bound.vacuous and bound.e_p == 0.3


def test_e_p_zero_error(profile3, observed3):
    bound = e_p_upper(0.0, 1e-3, 1e-3, profile3, observed3, SampleSizes(1e6, 1e6, 1e4), SecurityBudget(1e-10, 1e-15))
    assert bound.e_p == 0.0


def test_e_p_capped_and_monotone_in_eps(profile3, observed3):
    sizes = SampleSizes(1e5, 1e5, 1e3)
    previous = 0.0
    for eps in np.logspace(-2, -30, 15):
        bound = e_p_upper(0.05, 5e-4, 5e-4, profile3, observed3, sizes, SecurityBudget(eps, 1e-15))
        assert previous <= bound.e_p <= 0.5
        previous = bound.e_p
    assert e_p_upper(0.45, 1e-6, 1e-6, profile3, observed3, sizes, SecurityBudget(1e-20, 1e-15)).e_p == 0.5


def test_e_p_infeasible_signal(profile3, observed3):
    bound = e_p_upper(0.05, -1e-4, 5e-4, profile3, observed3, SampleSizes(1e5, 1e5, 1e3), SecurityBudget(1e-10, 1e-15))
    assert not bound.feasible
