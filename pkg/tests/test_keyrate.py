import math

import numpy as np
import pytest

import mcdqkd.keyrate as keyrate_module
from mcdqkd import (
    REFERENCE_CHANNEL,
    ChannelParams,
    IntensityProfile,
    ObservedStats,
    SecurityBudget,
    asymptotic_rate,
    binary_entropy,
    compute_b,
    compute_coefficients,
    key_rate,
    lambda_ec,
    observe,
    solve_security_fixed_point,
)
from mcdqkd.keyrate import FixedPointError

KAPPA = 1e-15
EPS_COR = 1e-15


def test_binary_entropy():
    assert binary_entropy(0.5) == 1.0
    assert binary_entropy(0.0) == 0.0 and binary_entropy(1.0) == 0.0
    # 0.11 log2(1/0.11) + 0.89 log2(1/0.89) = 0.35029 + 0.14963
    assert binary_entropy(0.11) == pytest.approx(0.499916, abs=1e-6)
    with pytest.raises(ValueError):
        binary_entropy(1.1)


def _stats(profile, q, e):
    return ObservedStats(profile.p_mu, q, e, q, e)


def test_lambda_ec_limits(profile3):
    q = (1e-3, 5e-4, 1e-6)
    assert lambda_ec(profile3, _stats(profile3, q, (0.0, 0.0, 0.0))) == 0.0
    half = _stats(profile3, q, (0.5, 0.5, 0.5))
    assert lambda_ec(profile3, half) == pytest.approx(half.mean_q_x, rel=1e-15)


def test_lambda_ec_hand_sum(profile3, observed3):
    by_hand = 0.0
    for mu in profile3.mu:
        q = (1 + 0.04) * (2 * 6e-7 + 1e-3 * mu)
        qe = (1 + 0.04) * 6e-7 + (5e-3 * 1e-2 + 0.04 * 1e-3 / 2) * mu
        e = qe / q
        by_hand += q * (-e * math.log2(e) - (1 - e) * math.log2(1 - e)) / 3
    assert lambda_ec(profile3, observed3) == pytest.approx(by_hand, rel=1e-12)


def test_compute_b_limits(profile3):
    coeffs = compute_coefficients(profile3)
    b = compute_b(coeffs, profile3, 0.7, 0.5)
    vac = sum(p * math.exp(-m) for p, m in zip(profile3.p_mu, profile3.mu))
    assert b == pytest.approx(tuple(0.49 * vac * a for a in coeffs.a0), rel=1e-14)
    assert all(abs(x) < 1e-20 for x in compute_b(coeffs, profile3, 1e-12, 0.1))
    with pytest.raises(ValueError):
        compute_b(coeffs, profile3, 0.5, 0.6)


def test_compute_b_hand_evaluation(profile3):
    coeffs = compute_coefficients(profile3)
    p_x, e_p = 0.8, 0.07
    m0 = sum(math.exp(-m) for m in profile3.mu) / 3
    m1 = sum(m * math.exp(-m) for m in profile3.mu) / 3
    h = -e_p * math.log2(e_p) - (1 - e_p) * math.log2(1 - e_p)
    want = [p_x**2 * (m0 * a0 + m1 * a1 * (1 - h)) for a0, a1 in zip(coeffs.a0, coeffs.a1)]
    assert compute_b(coeffs, profile3, p_x, e_p) == pytest.approx(tuple(want), rel=1e-13)
    no_vac = compute_b(coeffs, profile3, p_x, e_p, vacuum=False)
    assert no_vac == pytest.approx(tuple(p_x**2 * m1 * a1 * (1 - h) for a1 in coeffs.a1), rel=1e-13)


def test_key_rate_monotone_in_eps(table_point):
    profile, observed, p_x = table_point
    rates = [key_rate(profile, observed, p_x, 1e7, SecurityBudget(e, EPS_COR)).R for e in np.logspace(-3, -30, 10)]
    assert rates[0] > 0.0
    assert all(a >= b for a, b in zip(rates, rates[1:]))


def test_key_rate_monotone_in_s_x(table_point):
    profile, observed, p_x = table_point
    budget = SecurityBudget(1e-10, EPS_COR)
    rates = [key_rate(profile, observed, p_x, 10.0**e, budget).R for e in range(5, 12)]
    assert all(a <= b for a, b in zip(rates, rates[1:]))


def test_asymptotic_limit(table_point):
    profile, observed, p_x = table_point
    finite = key_rate(profile, observed, p_x, 1e13, SecurityBudget(1e-10, EPS_COR))
    limit = asymptotic_rate(profile, observed, p_x)
    assert finite.feasible
    assert abs(finite.R - limit) <= 0.01 * limit


def test_upper_envelope_and_length(table_point):
    profile, observed, p_x = table_point
    limit = asymptotic_rate(profile, observed, p_x)
    for e in range(3, 14):
        s_x = 10.0**e
        rep = key_rate(profile, observed, p_x, s_x, SecurityBudget(1e-10, EPS_COR))
        assert rep.R <= limit
        assert 0.0 <= rep.l_final <= s_x


def test_report_fields(table_point):
    profile, observed, p_x = table_point
    rep = key_rate(profile, observed, p_x, 1e7, SecurityBudget(1e-9, EPS_COR))
    assert rep.feasible and rep.R == rep.raw_R > 0
    assert 0.0 <= rep.e_Z1 <= rep.e_p <= 0.5
    assert rep.l_final == pytest.approx(rep.R * 1e7 / (p_x**2 * observed.mean_q_x), rel=1e-14)
    assert len(rep.b) == 3 and rep.deviation_X > 0


def test_negative_raw_rate_is_clamped(table_point):
    profile, observed, p_x = table_point
    rep = key_rate(profile, observed, p_x, 3e4, SecurityBudget(1e-10, EPS_COR))
    assert rep.feasible and rep.R == 0.0 and rep.raw_R < 0.0 and rep.l_final == 0.0


def test_infeasible_estimates_give_zero(table_point):
    profile, observed, p_x = table_point
    rep = key_rate(profile, observed, p_x, 100.0, SecurityBudget(1e-10, EPS_COR))
    assert not rep.feasible and rep.R == 0.0


def test_fixed_point_self_consistent(table_point):
    profile, observed, p_x = table_point
    rep = solve_security_fixed_point(profile, observed, p_x, 1e7, KAPPA, EPS_COR)
    assert rep.feasible and rep.R * 1e5 == pytest.approx(0.779, rel=0.05)
    assert abs(rep.eps_sec / KAPPA - rep.l_final) < 0.5
    assert rep.eps_trace[0] == KAPPA * 1e7 and rep.iterations == len(rep.eps_trace)


def test_fixed_point_stable_under_perturbation(table_point):
    profile, observed, p_x = table_point
    rep = solve_security_fixed_point(profile, observed, p_x, 1e7, KAPPA, EPS_COR)
    for factor in (0.9, 1.1):
        eps = rep.eps_sec * factor
        previous = None
        for _ in range(100):
            ell = key_rate(profile, observed, p_x, 1e7, SecurityBudget(eps, EPS_COR)).l_final
            if previous is not None and abs(ell - previous) < 0.5:
                break
            previous, eps = ell, KAPPA * ell
        assert abs(ell - rep.l_final) < 0.5


def test_fixed_point_fast_on_clean_channel():
    clean = ChannelParams(p_ap=0.0, p_dc=1e-9, e_mis=0.0, eta_ch=1e-2, eta_sys=1e-3)
    profile = IntensityProfile((0.5, 0.2, 1e-6), (0.4, 0.4, 0.2))
    rep = solve_security_fixed_point(profile, observe(clean, profile), 0.9, 1e12, KAPPA, EPS_COR)
    assert rep.feasible and rep.iterations <= 5


def test_fixed_point_immediate_zero(table_point):
    profile, observed, p_x = table_point
    rep = solve_security_fixed_point(profile, observed, p_x, 1e3, KAPPA, EPS_COR)
    assert rep.R == 0.0 and not rep.feasible and rep.iterations == 1


def test_fixed_point_non_convergence_carries_trace(table_point, monkeypatch):
    profile, observed, p_x = table_point
    monkeypatch.setattr(keyrate_module, "FIXED_POINT_MAX_ITER", 1)
    with pytest.raises(FixedPointError) as info:
        solve_security_fixed_point(profile, observed, p_x, 1e7, KAPPA, EPS_COR)
    assert info.value.trace == [KAPPA * 1e7]


def test_fixed_point_rejects_bad_kappa(table_point):
    profile, observed, p_x = table_point
    with pytest.raises(ValueError):
        solve_security_fixed_point(profile, observed, p_x, 1e7, 0.0, EPS_COR)
