import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy import integrate as spi

from flslab import bounds
from flslab.bounds import BoundInputs
from flslab.errors import ConfigurationError, DegenerateError, InapplicableError, ParameterError


def _inputs(**kw):
    base = dict(alpha=1e-4, n_plus=10, h=16, x_max=2.0, x_min=1.0, W_ref_max=1.5, x_plus_norm=12.0,
                lam=0.2, t1=0.01, t_alpha=0.05, t2=0.3, risk_at_t_alpha=0.69, risk_at_t2=0.6, eta=0.05,
                sigma=1.0, kappa=1.5, d=8, phi=0.5, Psi_at_stop=0.9, delta=0.1)
    base.update(kw)
    return BoundInputs(**base)


def test_phi_reference_values():
    # 30-digit reference values
    assert bounds.bayes_error(1.0, 1.0) == pytest.approx(0.158655253931457051414767, rel=1e-14)
    assert bounds.bayes_error(1.5, 1.0) == pytest.approx(0.066807201268858066004494, rel=1e-14)
    assert bounds.Phi(-37.0) > 0.0
    assert bounds.Phi(-37.0) == pytest.approx(0.5 * math.erfc(37 / math.sqrt(2)), rel=1e-12)


def test_phase1_lower_reference():
    inp = _inputs()
    assert bounds.nu(inp) == pytest.approx(120.0, rel=1e-15)
    assert bounds.zeta(inp) == pytest.approx(0.988, rel=1e-15)
    assert bounds.phase1_lower(inp) == pytest.approx(0.441255571385646843604, rel=1e-13)


def test_phase1_lower_vacuous_cases():
    assert bounds.phase1_lower(_inputs(alpha=1e-2)) == 0.0
    assert bounds.phase1_lower(_inputs(t1=0.06)) == 0.0


def test_phase1_angle_upper():
    ang, ok = bounds.phase1_angle_upper(_inputs(alpha=1e-8))
    assert ok and ang == pytest.approx(0.771702603281792062701, rel=1e-12)
    assert bounds.phase1_angle_upper(_inputs()) == (math.pi / 2, False)
    assert bounds.phase1_angle_upper(_inputs(alpha=1e-2)) == (math.pi / 2, False)


@given(a=st.floats(-12, -6), t=st.floats(0.0, 0.04))
def test_angle_bound_shrinks_with_alpha(a, t):
    small, big = _inputs(alpha=10**a, t1=t), _inputs(alpha=10 ** (a + 1), t1=t)
    assert bounds.phase1_angle_upper(small)[0] <= bounds.phase1_angle_upper(big)[0] + 1e-15


def test_corollary_condition():
    assert bounds.corollary_condition(_inputs())
    assert not bounds.corollary_condition(_inputs(x_plus_norm=100.0))


def test_g_flow_and_phase2():
    inp = _inputs()
    assert bounds.beta(inp) == pytest.approx(0.000625, rel=1e-15)
    assert bounds.g_flow(inp) == pytest.approx(79520.4627932160099, rel=1e-12)
    low = bounds.phase2_lower(_inputs(t2=0.05, risk_at_t2=0.06), 0.9)
    g = bounds.g_flow(_inputs(t2=0.05, risk_at_t2=0.06))
    assert low == pytest.approx(0.2 + 0.7 * math.exp(-g))
    with pytest.raises(InapplicableError):
        bounds.g_flow(_inputs(lam=0.0))
    with pytest.raises(ConfigurationError):
        bounds.g_flow(_inputs(eta=0.65))


def test_zero_one_error_scale_invariant_and_bayes():
    s = np.array([1.0, 0.0, 0.0])
    assert bounds.zero_one_error(s, 1.5, 1.0, s) == pytest.approx(bounds.bayes_error(1.5, 1.0))
    assert bounds.zero_one_error(np.array([0.0, 1.0, 0.0]), 1.5, 1.0, s) == pytest.approx(0.5)
    with pytest.raises(DegenerateError):
        bounds.zero_one_error(np.zeros(3), 1.0, 1.0, s)


@given(c=st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3), seed=st.integers(0, 1000))
def test_zero_one_scale_invariance(c, seed):
    w = np.random.default_rng(seed).standard_normal(5)
    s = np.eye(5)[0]
    e1 = bounds.zero_one_error(w, 1.2, 0.8, s)
    e2 = bounds.zero_one_error(abs(c) * w, 1.2, 0.8, s)
    assert e1 == pytest.approx(e2, rel=1e-12)


def _plane(phi):
    s = np.array([1.0, 0.0, 0.0])
    xbar = np.array([math.cos(phi), math.sin(phi), 0.0])
    return s, xbar


def test_v_star_cases():
    s, xbar = _plane(0.8)
    assert np.array_equal(bounds.v_star(0.5, xbar, s), s)  # s already inside the cap
    assert np.allclose(bounds.v_star(0.9, s, s), s)
    with pytest.raises(DegenerateError):
        bounds.v_star(0.9, -s, s)
    with pytest.raises(ParameterError):
        bounds.v_star(1.5, xbar, s)


@given(phi=st.floats(0.05, 3.0), frac=st.floats(0.0, 1.0))
def test_v_star_lies_on_cap_boundary(phi, frac):
    s, xbar = _plane(phi)
    Psi = math.cos(phi) + frac * (1 - math.cos(phi))
    assume(Psi > math.cos(phi) + 1e-9)
    v = bounds.v_star(Psi, 5.0 * xbar, s)
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)
    assert v @ xbar == pytest.approx(Psi, abs=1e-9)
    assert v @ s == pytest.approx(bounds.best_signal_cosine(Psi, phi), abs=1e-9)


@given(phi=st.floats(0.05, 1.5), frac=st.floats(0.0, 1.0), kappa=st.floats(0.5, 3), sigma=st.floats(0.3, 2))
def test_oa_forms_agree_and_are_nonnegative(phi, frac, kappa, sigma):
    s, xbar = _plane(phi)
    Psi = math.cos(phi) + frac * (1 - math.cos(phi))
    a = bounds.oa_term(Psi, kappa, sigma, xbar, s)
    b = bounds.oa_from_angle(Psi, phi, kappa, sigma)
    assert a == pytest.approx(b, abs=1e-12)
    assert a >= 0.0


def test_g_geom_endpoints_and_critical_point():
    phi, sigma, d = 0.6, 0.8, 10
    assert bounds.g_geom(1.0, phi, sigma, d) == pytest.approx(math.sqrt(math.cos(phi) ** 2 + sigma**2))
    c = bounds.g_geom_critical(phi, sigma, d)
    h = 1e-6
    slope = (bounds.g_geom(c + h, phi, sigma, d) - bounds.g_geom(c - h, phi, sigma, d)) / (2 * h)
    assert abs(slope) < 1e-6


def test_of_bound_reference():
    inp = _inputs(kappa=1.5, sigma=1.0, Psi_at_stop=1.0, phi=0.0, d=8, n_plus=10, eta=0.05, delta=0.1)
    pre = 4.37375507634455414851
    assert bounds.of_prefactor(1.5, 1.0) == pytest.approx(pre, rel=1e-14)
    g = math.sqrt(1 + 1)
    expected = pre * (4 / math.sqrt(10) * g + 0.05 + (1 + math.sqrt(8)) * math.sqrt(math.log(20) / 10))
    assert bounds.of_bound(inp) == pytest.approx(expected, rel=1e-14)
    with pytest.raises(ParameterError):
        bounds.of_bound(_inputs(C_complexity=0.0))


@given(seed=st.integers(0, 10_000), Psi=st.floats(-1, 1))
def test_decomposition_identity(seed, Psi):
    r = np.random.default_rng(seed)
    d = 6
    s = np.eye(d)[0]
    xp = s * 3 + r.standard_normal(d)
    w = r.standard_normal(d)
    dec = bounds.decompose(w, Psi, _inputs(d=d, Psi_at_stop=Psi), xp, s)
    assert abs(dec.OA_exact + dec.OF_exact - dec.excess_exact) <= 1e-12
    assert dec.OA_exact >= 0.0


def test_decompose_side_conditions():
    s = np.eye(3)[0]
    X_pos = np.array([[1.0, 0.1, 0.0], [0.5, -0.2, 0.0]])
    dec = bounds.decompose(0.5 * s, 0.9, _inputs(d=3), X_pos.sum(0), s, X_pos)
    assert dec.norm_ok and dec.margin_ok
    dec = bounds.decompose(-2 * s, 0.9, _inputs(d=3), X_pos.sum(0), s, X_pos)
    assert not dec.norm_ok and not dec.margin_ok


@pytest.mark.parametrize("c", [1.0, 0.3, -0.5])
def test_population_logistic_risk_against_quadrature(c):
    w = np.array([c, math.sqrt(1 - c * c)])
    kappa, sigma = 1.5, 0.7
    mu = kappa * c

    def integrand(g):
        u = mu + sigma * g
        return np.logaddexp(0.0, -u) * math.exp(-g * g / 2) / math.sqrt(2 * math.pi)

    ref, _ = spi.quad(integrand, -np.inf, np.inf, epsabs=1e-13)
    assert bounds.population_logistic_risk(w, kappa, sigma, np.array([1.0, 0.0])) == pytest.approx(ref, rel=1e-8)


def test_population_risk_validation():
    with pytest.raises(ParameterError):
        bounds.population_logistic_risk(np.array([2.0, 0.0]), 1.0, 1.0)
    with pytest.raises(ParameterError):
        bounds.population_logistic_risk(np.array([1.0, 0.0]), 1.0, 1.0, nodes=5)


def test_bound_inputs_validation():
    with pytest.raises(ParameterError):
        _inputs(x_max=0.0)
    with pytest.raises(ParameterError):
        _inputs(delta=1.0)
    with pytest.raises(ParameterError):
        _inputs(Psi_at_stop=1.2)
