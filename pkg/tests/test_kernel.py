"""Kernel functionals against closed forms, brute-force quadrature oracles,
and the oscillatory Gaussian-average route."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from lks.kernel import (
    KernelSpec,
    QuadratureConfig,
    btbm_ft,
    critical_time_d1,
    energy_bound_constants,
    energy_difference_d1,
    kernel_ft,
    kernel_gaussian_average,
    kernel_value,
    kernel_value_grid,
    l2_energy,
    l2_energy_d2_closed_form,
    l2_energy_time_integrated,
    sfo_energy_constant,
    spatial_difference_l2,
    temporal_difference_l2,
    _ktilde_time_integral,
)

TWO_PI = 2.0 * math.pi


# ----------------------------------------------------------------------------
# spec validation
# ----------------------------------------------------------------------------

def test_spec_rejects_bad_parameters():
    with pytest.raises(ValueError):
        KernelSpec(0.0, 1.0, 1)
    with pytest.raises(ValueError):
        KernelSpec(1.0, 1.0, 4)


def test_time_must_be_positive():
    s = KernelSpec.canonical(1)
    for fn in (lambda: kernel_ft(s, 0.0, 1.0), lambda: l2_energy(s, -1.0)):
        with pytest.raises(ValueError):
            fn()


# ----------------------------------------------------------------------------
# Fourier transform
# ----------------------------------------------------------------------------

def test_ft_exponent_vanishes_on_the_ring():
    # |xi|^2 = 2 theta kills the exponent: value is (2 pi)^{-1/2}
    s = KernelSpec(1.0, 1.0, 1)
    assert kernel_ft(s, 5.0, math.sqrt(2.0)) == pytest.approx(TWO_PI**-0.5, rel=1e-14)


def test_ft_zero_time_limit():
    s = KernelSpec(1.0, 1.0, 1)
    for xi in (0.0, 0.7, 3.0):
        assert kernel_ft(s, 1e-14, xi) == pytest.approx(TWO_PI**-0.5, rel=1e-10)


def test_ft_d2_at_origin():
    s = KernelSpec(1.0, 1.0, 2)
    # direct substitution: (2 pi)^{-1} e^{-1/2}
    want = math.exp(-0.5) / TWO_PI
    assert kernel_ft(s, 1.0, [0.0, 0.0]) == pytest.approx(want, rel=1e-14)
    assert want == pytest.approx(0.096532, abs=1e-6)


@given(
    eps=st.floats(0.1, 10.0),
    theta=st.floats(-2.0, 2.0),
    d=st.sampled_from([1, 2, 3]),
    t=st.floats(1e-3, 50.0),
    xi=st.floats(0.0, 20.0),
)
@settings(max_examples=200, deadline=None)
def test_ft_positive_and_bounded(eps, theta, d, t, xi):
    s = KernelSpec(eps, theta, d)
    v = kernel_ft(s, t, np.r_[xi, np.zeros(d - 1)])
    assert 0.0 <= v <= TWO_PI ** (-d / 2) * (1 + 1e-15)
    exponent = eps * t * (xi**2 - 2 * theta) ** 2 / 8.0
    if exponent < 700.0:  # representable in float64; strictly positive there
        assert v > 0.0


@given(t=st.floats(0.01, 5.0), s_=st.floats(0.01, 5.0), xi=st.floats(0.0, 4.0))
@settings(max_examples=100, deadline=None)
def test_ft_semigroup_multiplier(t, s_, xi):
    spec = KernelSpec.canonical(1)
    lhs = kernel_ft(spec, t + s_, xi)
    rhs = kernel_ft(spec, t, xi) * kernel_ft(spec, s_, xi) * TWO_PI**0.5
    assert lhs == pytest.approx(rhs, rel=1e-12)


# ----------------------------------------------------------------------------
# kernel values (inverse transform)
# ----------------------------------------------------------------------------

def test_value_at_origin_matches_adaptive_oracle():
    # (1/pi) int_0^inf e^{-r^4/8} dr by an independent adaptive quadrature
    oracle = integrate.quad(lambda r: np.exp(-(r**4) / 8.0), 0, np.inf)[0] / math.pi
    got = kernel_value(KernelSpec.simple_fourth_order(1), 1.0, [0.0])
    assert got == pytest.approx(oracle, abs=1e-10)


@given(x=st.floats(-5.0, 5.0), t=st.floats(0.05, 4.0))
@settings(max_examples=60, deadline=None)
def test_value_even_in_x(x, t):
    s = KernelSpec.canonical(1)
    assert kernel_value(s, t, [x]) == pytest.approx(kernel_value(s, t, [-x]), abs=1e-12)


def test_value_pure_function():
    s = KernelSpec.canonical(2)
    a = kernel_value(s, 0.7, [0.3, 0.1])
    b = kernel_value(s, 0.7, [0.3, 0.1])
    assert a == b  # bit-identical


def test_grid_evaluation_matches_scalar_route():
    s = KernelSpec.canonical(1)
    xs = np.linspace(-6.0, 6.0, 41)
    grid_vals = kernel_value_grid(s, 0.5, xs)
    for i in (0, 7, 20, 33, 40):
        assert grid_vals[i] == pytest.approx(kernel_value(s, 0.5, [xs[i]]), abs=1e-9)


def test_oscillatory_regime_d1_and_d3():
    # large |x| exercises the oscillatory-weight branch
    s1 = KernelSpec.canonical(1)
    x = 30.0
    v_osc = kernel_value(s1, 0.2, [x])
    v_ref = kernel_value_grid(s1, 0.2, np.array([x]))[0]
    assert v_osc == pytest.approx(v_ref, abs=1e-9)
    s3 = KernelSpec.canonical(3)
    v3 = kernel_value(s3, 0.5, [20.0, 0.0, 0.0])
    assert np.isfinite(v3)


def test_quadrature_config_validation():
    with pytest.raises(ValueError):
        QuadratureConfig(max_radius=-1.0)
    with pytest.raises(ValueError):
        QuadratureConfig(tol=0.0)


# ----------------------------------------------------------------------------
# Gaussian-average oracle (d = 1)
# ----------------------------------------------------------------------------

def test_gaussian_average_is_real():
    v = kernel_gaussian_average(KernelSpec.canonical(1), 1.0, 0.0)
    assert abs(v.imag) < 1e-8


@pytest.mark.parametrize(
    "spec,t,x",
    [
        (KernelSpec.simple_fourth_order(1), 1.0, 1.0),
        (KernelSpec.canonical(1), 2.0, 0.3),
        (KernelSpec.canonical(1), 1.0, 0.5),
    ],
)
def test_gaussian_average_matches_inversion(spec, t, x):
    avg = kernel_gaussian_average(spec, t, x)
    inv = kernel_value(spec, t, [x])
    assert avg.real == pytest.approx(inv, abs=1e-6)
    assert abs(avg.imag) < 1e-8


def test_gaussian_average_rejects_higher_dim():
    with pytest.raises(ValueError):
        kernel_gaussian_average(KernelSpec.canonical(2), 1.0, 0.0)


# ----------------------------------------------------------------------------
# L^2 energy
# ----------------------------------------------------------------------------

def test_sfo_energy_values():
    assert l2_energy(KernelSpec.simple_fourth_order(2), 4.0) == pytest.approx(
        1.0 / (8.0 * math.sqrt(math.pi)), rel=1e-10
    )
    assert l2_energy(KernelSpec.simple_fourth_order(1), 1.0) == pytest.approx(
        1.0 / (2.0 * special.gamma(0.75)), rel=1e-10
    )


def test_energy_d2_closed_form():
    got = l2_energy(KernelSpec.canonical(2), 1.0)
    want = (1.0 + special.erf(1.0)) / (4.0 * math.sqrt(math.pi))
    assert got == pytest.approx(want, rel=1e-10)
    assert l2_energy_d2_closed_form(1.0) == pytest.approx(want, rel=1e-14)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_sfo_scaling_law(d):
    s = KernelSpec.simple_fourth_order(d)
    vals = [l2_energy(s, t) * t ** (d / 4.0) for t in (1e-3, 1e-1, 1e1, 1e3)]
    assert max(vals) / min(vals) - 1.0 < 1e-9
    assert vals[0] == pytest.approx(sfo_energy_constant(d), rel=1e-9)


def test_epsilon_scaling_of_energy():
    # theta=0 energy is C_d (eps t)^{-d/4}
    s = KernelSpec(3.0, 0.0, 1)
    assert l2_energy(s, 2.0) == pytest.approx(sfo_energy_constant(1) * 6.0**-0.25, rel=1e-9)


def test_canonical_energy_bounds_d3_lower_constant():
    # the canonical d=3 energy dominates the theta=0 one for all t
    s = KernelSpec.canonical(3)
    for t in (0.01, 0.1, 1.0, 10.0, 100.0):
        assert l2_energy(s, t) * t**0.75 >= sfo_energy_constant(3) * (1 - 1e-12)


def test_energy_bound_constants_bracket():
    c_l, c_u = energy_bound_constants(KernelSpec.canonical(1), T=4.0, n_grid=40)
    assert 0 < c_l <= c_u
    for t in (1e-4, 0.3, 3.9):
        v = l2_energy(KernelSpec.canonical(1), t) * t**0.25
        assert c_l * (1 - 1e-9) <= v <= c_u * (1 + 1e-9)


def test_time_integrated_energy_closed_forms():
    # analytic integration of C_d s^{-d/4}
    got1 = l2_energy_time_integrated(KernelSpec.simple_fourth_order(1), 1.0)
    assert got1 == pytest.approx(4.0 / 3.0 * sfo_energy_constant(1), rel=1e-9)
    got3 = l2_energy_time_integrated(KernelSpec.simple_fourth_order(3), 1.0)
    assert got3 == pytest.approx(4.0 * sfo_energy_constant(3), rel=1e-9)


def test_time_integrated_energy_vanishes_at_zero():
    s = KernelSpec.canonical(2)
    assert l2_energy_time_integrated(s, 1e-9) < 1e-6


def test_time_integrated_matches_direct_quadrature():
    s = KernelSpec.canonical(1)
    direct = integrate.quad(lambda u: l2_energy(s, u), 1e-12, 0.35, limit=200)[0]
    assert l2_energy_time_integrated(s, 0.35) == pytest.approx(direct, rel=1e-6)


def test_ktilde_monotone_decreasing():
    # the half-exponent spectral integral decreases in its time argument
    s = KernelSpec.canonical(1)
    ws = np.linspace(0.05, 4.0, 24)
    vals = [(_ktilde_time_integral(s, w + 1e-4) - _ktilde_time_integral(s, w)) / 1e-4 for w in ws]
    assert all(a >= b - 1e-9 for a, b in zip(vals[:-1], vals[1:]))


# ----------------------------------------------------------------------------
# temporal / spatial differences
# ----------------------------------------------------------------------------

def test_temporal_difference_rejects_bad_arguments():
    s = KernelSpec.canonical(1)
    with pytest.raises(ValueError):
        temporal_difference_l2(s, 1.0, 1.0)
    with pytest.raises(ValueError):
        temporal_difference_l2(s, 1.0, -0.1)


def test_temporal_difference_small_gap_vanishes():
    s = KernelSpec.canonical(1)
    assert temporal_difference_l2(s, 1.0, 1.0 - 1e-9) < 1e-6


def test_temporal_difference_brute_force_d2():
    """Independent oracle: 2-D Parseval quadrature with the K_u = 0, u < 0
    convention, integrating the radial spectrum per time slice."""
    spec = KernelSpec.canonical(2)
    t, r = 1.0, 0.5

    def inner(s):
        a, b = t - s, r - s

        def f(rr):
            q = rr * rr - 2.0
            ka = np.exp(-a / 8.0 * q * q) if a > 0 else 0.0
            kb = np.exp(-b / 8.0 * q * q) if b > 0 else 0.0
            return (ka - kb) ** 2 * rr

        return TWO_PI / TWO_PI**2 * integrate.quad(
            f, 0, 40, points=[math.sqrt(2.0)], limit=200
        )[0]

    brute = integrate.quad(inner, 0, t, points=[r], limit=200)[0]
    fast = temporal_difference_l2(spec, t, r)
    assert fast == pytest.approx(brute, abs=1e-6)


def test_temporal_difference_slope_d1():
    s = KernelSpec.simple_fourth_order(1)
    hs = np.geomspace(1e-3, 1e-1, 6)
    vals = [temporal_difference_l2(s, 1.0, 1.0 - h) for h in hs]
    slope = np.polyfit(np.log(hs), np.log(vals), 1)[0]
    assert slope == pytest.approx(0.75, abs=0.05)


def test_spatial_difference_zero_shift():
    assert spatial_difference_l2(KernelSpec.canonical(2), 1.0, [0.0, 0.0]) == 0.0


def test_spatial_difference_brute_force_d1():
    spec = KernelSpec.canonical(1)
    t, z = 1.0, 0.35

    def f(r):
        q = r * r - 2.0
        g = -np.expm1(-t / 4.0 * q * q) * 4.0 / (q * q) if abs(q) > 1e-6 else t
        return g * (1.0 - np.cos(r * z))

    brute = 2.0 * 2.0 / TWO_PI * integrate.quad(
        f, 0, 200, points=[math.sqrt(2.0)], limit=2000
    )[0]
    assert spatial_difference_l2(spec, t, [z]) == pytest.approx(brute, rel=1e-6)


def test_spatial_difference_d1_slope_is_two():
    s = KernelSpec.canonical(1)
    zs = np.geomspace(1e-3, 1e-1, 6)
    vals = [spatial_difference_l2(s, 1.0, [z]) for z in zs]
    slope = np.polyfit(np.log(zs), np.log(vals), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.1)


def test_spatial_difference_d3_slope_approaches_one():
    # canonical d=3: slope tends to 1 as |z| -> 0 (alpha -> 1/2 endpoint);
    # at finite lags the band contribution holds it marginally above 1
    s = KernelSpec.canonical(3)
    slopes = []
    for zlo, zhi in ((1e-2, 1e-1), (1e-3, 1e-2)):
        zs = np.geomspace(zlo, zhi, 5)
        vals = [spatial_difference_l2(s, 1.0, [z, 0.0, 0.0]) for z in zs]
        slopes.append(np.polyfit(np.log(zs), np.log(vals), 1)[0])
    assert abs(slopes[1] - 1.0) < abs(slopes[0] - 1.0)
    assert slopes[1] == pytest.approx(1.0, abs=0.05)


def test_spatial_difference_bounded_by_upper_envelope():
    # |z|^{2 alpha} (1 v t/4) envelope with a fitted constant stays above
    s = KernelSpec.canonical(1)
    base = spatial_difference_l2(s, 1.0, [0.1]) / 0.1**2
    for z in (0.02, 0.05, 0.2):
        assert spatial_difference_l2(s, 1.0, [z]) <= 1.5 * base * z**2


# ----------------------------------------------------------------------------
# BTBM transform and the critical time
# ----------------------------------------------------------------------------

def test_btbm_at_origin_and_zero_time_limit():
    for d in (1, 2, 3):
        assert btbm_ft(1.0, np.zeros(d), d) == pytest.approx(TWO_PI ** (-d / 2), rel=1e-14)
    assert btbm_ft(1e-300, 3.0, 1) == pytest.approx(TWO_PI**-0.5, rel=1e-7)


def test_btbm_scaled_erfc_value():
    # e^{t|xi|^4/8} erfc(sqrt(2t)|xi|^2/4) / sqrt(2 pi) at t=2, |xi|=1,
    # frozen from a 30-digit mpmath evaluation
    want = 0.2456249099334688320430824
    assert btbm_ft(2.0, 1.0, 1) == pytest.approx(want, rel=1e-12)


def test_btbm_no_overflow_for_huge_argument():
    v = btbm_ft(100.0, 50.0, 1)
    assert np.isfinite(v) and v > 0


def test_critical_time_value_and_sign_pattern():
    tc = critical_time_d1()
    assert tc == pytest.approx(1.506188, abs=1e-4)
    assert energy_difference_d1(1.0) < 0  # below t_c the canonical energy wins
    assert energy_difference_d1(2.0) > 0


def test_critical_time_bracket_failure():
    with pytest.raises(RuntimeError):
        critical_time_d1(bracket=(2.0, 3.0))
