import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fastice.errors import ConfigurationError
from fastice.params import RheologyParams
from fastice.rheology import (
    delta,
    delta_p,
    ice_strength,
    strain_rate,
    stress,
    stress_derivative,
    viscosity,
)

DMIN = 2e-9
grads = arrays(np.float64, (2, 2), elements=st.floats(-1e-5, 1e-5, allow_nan=False))


def test_strain_rate_examples():
    d = 1e-6
    e = strain_rate([[d, 0], [0, d]])
    np.testing.assert_allclose(e.dev, 0.0)
    assert e.trace == pytest.approx(2 * d)
    s = 3e-7
    e = strain_rate([[0, s], [0, 0]])
    np.testing.assert_allclose(e.eps, [[0, s / 2], [s / 2, 0]])
    assert e.trace == 0.0
    e = strain_rate([[0, s], [-s, 0]])
    np.testing.assert_allclose(e.eps, 0.0)


@given(grads)
def test_strain_split(g):
    e = strain_rate(g)
    np.testing.assert_allclose(e.eps, e.eps.T)
    np.testing.assert_allclose(e.eps, e.dev + 0.5 * e.trace * np.eye(2), atol=1e-20)
    assert abs(np.trace(e.dev)) <= 1e-14 * max(np.abs(e.eps).max(), 1e-300)


def test_delta_examples():
    assert delta(strain_rate(np.zeros((2, 2))), DMIN) == pytest.approx(DMIN)
    e = strain_rate(np.diag([1e-6, 1e-6]))
    assert delta_p(e) == pytest.approx(2e-6)
    assert delta(e, DMIN) == pytest.approx(np.sqrt(4e-12 + DMIN**2))
    s1 = 4e-7
    e = strain_rate([[s1, 0], [0, -s1]])  # eps':eps' = 2 s1^2
    assert delta_p(e) == pytest.approx(s1)


@given(grads)
def test_delta_bounded_below(g):
    assert delta(strain_rate(g), DMIN) >= DMIN


def test_delta_approaches_delta_p_for_large_rates(rng):
    g = rng.normal(size=(2, 2))
    for scale in (1e-6, 1e-4, 1e-2):
        e = strain_rate(scale * g)
        ratio = delta(e, DMIN) / delta_p(e)
        assert ratio >= 1.0
    assert ratio == pytest.approx(1.0, abs=1e-12)


def test_ice_strength_examples():
    p = RheologyParams()
    assert ice_strength(1.0, 1.0, p) == pytest.approx(27500.0)
    assert ice_strength(0.0, 0.7, p) == 0.0
    assert ice_strength(1.0, 0.5, p) == pytest.approx(27500 * np.exp(-10))
    assert ice_strength(1.0, 0.5, p) == pytest.approx(1.249, abs=1e-3)
    printed = RheologyParams(strength_sign="printed")
    assert ice_strength(1.0, 1.0, printed) == pytest.approx(27500.0)
    assert ice_strength(1.0, 0.5, printed) > ice_strength(1.0, 1.0, printed)


@given(st.floats(0.01, 5.0), st.floats(0.0, 0.99), st.floats(0.001, 0.01))
def test_strength_increasing(h, a, da):
    p = RheologyParams()
    assert ice_strength(h, a + da, p) > ice_strength(h, a, p)
    assert ice_strength(h * 1.1, a, p) > ice_strength(h, a, p)


def test_rheology_params_validation():
    with pytest.raises(ConfigurationError):
        RheologyParams(delta_min=0.0)
    with pytest.raises(ConfigurationError):
        RheologyParams(strength_sign="plus")


def test_viscosity_examples():
    assert viscosity(27500.0, 2e-9) == pytest.approx(6.875e12)
    assert viscosity(0.0, 2e-9) == 0.0
    assert viscosity(100.0, 4e-9) == pytest.approx(viscosity(100.0, 2e-9) / 2)


def test_stress_examples():
    P, zeta = 27500.0, 1e10
    np.testing.assert_allclose(stress(strain_rate(np.zeros((2, 2))), zeta, P), -P / 2 * np.eye(2))
    s = 1e-7
    e = strain_rate([[s, 0], [0, -s]])
    np.testing.assert_allclose(stress(e, zeta, P), 0.5 * zeta * e.dev - P / 2 * np.eye(2))
    d = 1e-7
    e = strain_rate(np.diag([d, d]))
    np.testing.assert_allclose(stress(e, zeta, P), (2 * zeta * d - P / 2) * np.eye(2))


@given(grads, st.floats(0.0, 3e4))
def test_stress_symmetric(g, P):
    e = strain_rate(g)
    sig = stress(e, viscosity(P, delta(e, DMIN)), P)
    np.testing.assert_allclose(sig, sig.T, rtol=1e-14, atol=1e-14 * (abs(sig).max() + 1e-300))


@given(grads, st.floats(0.0, 2 * np.pi))
def test_frame_indifference(g, angle):
    P = 1000.0
    Q = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])

    def sigma(grad):
        e = strain_rate(grad)
        return stress(e, viscosity(P, delta(e, DMIN)), P)

    np.testing.assert_allclose(sigma(Q @ g @ Q.T), Q @ sigma(g) @ Q.T, atol=1e-12 * P)


def test_stress_derivative_matches_finite_differences(rng):
    P = 1.2
    for _ in range(100):
        g = rng.normal(scale=1e-6, size=(2, 2))
        dg = rng.normal(scale=1e-6, size=(2, 2))

        def sigma(grad):
            e = strain_rate(grad)
            return stress(e, viscosity(P, delta(e, DMIN)), P)

        h = 1e-4
        fd = (sigma(g + h * dg) - sigma(g - h * dg)) / (2 * h)
        an = stress_derivative(g, dg, P, DMIN)
        assert np.abs(an - fd).max() <= 1e-6 * np.abs(an).max()


def test_picard_derivative_freezes_viscosity(rng):
    g, dg = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
    e = strain_rate(g)
    zeta = viscosity(5.0, delta(e, DMIN))
    expected = stress(strain_rate(dg), zeta, 0.0)
    np.testing.assert_allclose(stress_derivative(g, dg, 5.0, DMIN, newton=False), expected)


def test_batched_evaluation(rng):
    g = rng.normal(scale=1e-6, size=(7, 3, 2, 2))
    e = strain_rate(g)
    D = delta(e, DMIN)
    assert D.shape == (7, 3)
    sig = stress(e, viscosity(2.0, D), 2.0)
    single = stress(strain_rate(g[4, 1]), viscosity(2.0, delta(strain_rate(g[4, 1]), DMIN)), 2.0)
    np.testing.assert_allclose(sig[4, 1], single)
