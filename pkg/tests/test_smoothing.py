import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracap.mesh import Mesh1D, lp_integral, lumped_mass
from fracap.smoothing import SmoothingFamily, Variant, g_eps, psi, psi_prime

P05 = SmoothingFamily(0.5)
ZERO = SmoothingFamily(0.0)


def test_family_validation():
    assert P05.variant is Variant.POWER_P and ZERO.variant is Variant.ZERO_NORM
    with pytest.raises(ValueError):
        SmoothingFamily(1.0)
    with pytest.raises(ValueError):
        SmoothingFamily(0.5, Variant.ZERO_NORM)
    with pytest.raises(ValueError):
        SmoothingFamily(0.0, "power_p")


def test_psi_examples():
    assert psi(P05, 0.01, 0.1) == pytest.approx(0.1**0.5, rel=1e-14)
    assert psi(P05, 0.0025, 0.1) == pytest.approx(0.25 * 0.0025 / 0.1**1.5 + 0.75 * 0.1**0.5, rel=1e-14)
    assert psi(P05, 0.0025, 0.1) == pytest.approx(0.2569, abs=1e-4)
    assert psi(ZERO, 1.0, 1.0) == 0.5


def test_psi_prime_examples():
    assert psi_prime(P05, 1.0, 0.1) == pytest.approx(0.25)
    assert psi_prime(P05, 0.0, 0.1) == pytest.approx(0.25 * 0.1**-1.5)
    assert psi_prime(P05, 0.0, 0.1) == pytest.approx(7.9057, abs=1e-4)
    assert psi_prime(ZERO, 0.0, 0.5) == pytest.approx(2.0)


def test_domain_errors():
    with pytest.raises(ValueError):
        psi(P05, -1.0, 0.1)
    with pytest.raises(ValueError):
        psi_prime(P05, 1.0, 0.0)


@given(st.floats(0.01, 0.99), st.floats(1e-4, 1.0))
def test_powerp_c1_at_breakpoint(p, eps):
    fam = SmoothingFamily(p)
    t0 = eps * eps
    dt = 1e-9 * t0
    assert psi(fam, t0 - dt, eps) == pytest.approx(psi(fam, t0 + dt, eps), rel=1e-7)
    assert psi_prime(fam, t0 * (1 - 1e-12), eps) == pytest.approx(psi_prime(fam, t0 * (1 + 1e-12), eps), rel=1e-9)


@given(st.one_of(st.just(0.0), st.floats(0.01, 0.99)), st.floats(1e-3, 1.0), st.floats(1e-6, 10.0))
def test_derivative_matches_finite_difference(p, eps, t):
    fam = SmoothingFamily(p)
    if fam.variant is Variant.POWER_P and abs(t - eps * eps) < 1e-3 * eps * eps:
        return
    d = 1e-6 * max(t, 1e-3)
    fd = (psi(fam, t + d, eps) - psi(fam, max(t - d, 0.0), eps)) / (t + d - max(t - d, 0.0))
    assert psi_prime(fam, t, eps) == pytest.approx(fd, rel=1e-4)


@given(st.floats(0.0, 0.99), st.floats(1e-3, 1.0), st.floats(0.0, 10.0), st.floats(0.0, 10.0))
def test_concave_majorization(p, eps, t0, t):
    # concavity in t: the tangent at t0 majorizes psi everywhere
    fam = SmoothingFamily(p)
    tangent = psi(fam, t0, eps) + psi_prime(fam, t0, eps) * (t - t0)
    assert psi(fam, t, eps) <= tangent + 1e-12 * (1 + abs(tangent))


@given(st.floats(0.01, 0.99), st.floats(1e-4, 1.0), st.floats(0.0, 10.0))
def test_powerp_dominates_power(p, eps, t):
    # the tangent-line branch lies above t^(p/2)
    assert psi(SmoothingFamily(p), t, eps) >= t ** (p / 2) - 1e-14


def test_g_eps_of_zero():
    m = Mesh1D(0, 1, 32)
    zero = m.function(np.zeros(31))
    assert g_eps(P05, zero, 0.1) == pytest.approx((1 - 0.25) * 0.1**0.5 * lumped_mass(m).sum())
    assert g_eps(ZERO, zero, 0.1) == 0.0


def test_zero_norm_monotone_convergence():
    m = Mesh1D(0, 1, 64)
    w = m.interpolate(lambda x: np.maximum(np.sin(3 * np.pi * x), 0.0))
    target = lp_integral(w, 0.0)
    vals = [g_eps(ZERO, w, eps, quadrature="gauss", order=20) for eps in 10.0 ** -np.arange(1, 7)]
    assert np.all(np.diff(vals) > 0)
    assert vals[-1] == pytest.approx(target, rel=5e-3)
    assert vals[-1] <= target


def test_g_eps_quadrature_choice():
    m = Mesh1D(0, 1, 16)
    w = m.interpolate(np.sin)
    with pytest.raises(ValueError):
        g_eps(P05, w, 0.1, quadrature="simpson")
    assert g_eps(P05, w, 1e-3, quadrature="gauss", order=30) == pytest.approx(lp_integral(w, 0.5, order=30), rel=1e-3)
