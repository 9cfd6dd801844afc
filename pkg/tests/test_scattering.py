import math

import numpy as np
import pytest
from hypothesis import given, settings
from scipy.integrate import trapezoid
from hypothesis import strategies as st

from rlmfcs.errors import ConfigError, NumericalError
from rlmfcs.scattering import (ModelParams, MollifierSpec, basis_function, even_norm2,
                               mollifier_c, mollifier_inner, mollifier_Phi, odd_spectrum,
                               overlap_ee, phase_factor, phase_shift, solve_quantization,
                               spread_limit_check, spread_phase, transmission_prob, w_coeff)

reals = st.floats(-50, 50, allow_nan=False)
taus = st.floats(0.05, 3.0)
eps_s = st.floats(-2.0, 2.0)


# -- closed-form scattering data --------------------------------------------------

def test_model_params_validation():
    with pytest.raises(ConfigError):
        ModelParams(tau=0.0)
    with pytest.raises(ConfigError):
        ModelParams(tau=1.0, epsilon=math.inf)
    p = ModelParams(1.2, 0.4)
    assert p.gamma == pytest.approx(0.72)
    assert p.b == complex(0.72, 0.4)


def test_phase_factor_on_resonance(params):
    assert phase_factor(params.epsilon, params) == pytest.approx(-1.0, abs=1e-15)


def test_phase_factor_far_away(params):
    assert abs(phase_factor(1e9, params) - 1) < 1e-8
    assert abs(phase_factor(-1e9, params) - 1) < 1e-8


@given(p=reals, tau=taus, eps=eps_s)
def test_phase_factor_unimodular(p, tau, eps):
    assert abs(abs(phase_factor(p, ModelParams(tau, eps))) - 1) < 1e-14


def test_w_on_resonance(params):
    assert w_coeff(params.epsilon, params) == pytest.approx(-2.0, abs=1e-15)
    assert abs(w_coeff(1e9, params)) < 1e-8


@given(p=reals, tau=taus, eps=eps_s)
def test_w_is_v_minus_one(p, tau, eps):
    prm = ModelParams(tau, eps)
    assert abs(w_coeff(p, prm) - (phase_factor(p, prm) - 1)) < 1e-14


def test_transmission_examples(params):
    g = params.gamma
    assert transmission_prob(params.epsilon, params) == 1.0
    # half width of |w/2|^2, evaluated from w directly
    for p in (params.epsilon + g, params.epsilon - g):
        assert abs(w_coeff(p, params) / 2) ** 2 == pytest.approx(0.5, abs=1e-15)
        assert transmission_prob(p, params) == pytest.approx(0.5, abs=1e-15)
    assert transmission_prob(1e8, params) < 1e-15


@given(p=reals, tau=taus, eps=eps_s)
def test_transmission_is_sin_squared_half_phase(p, tau, eps):
    prm = ModelParams(tau, eps)
    phi = np.angle(phase_factor(p, prm))
    assert abs(transmission_prob(p, prm) - np.sin(phi / 2) ** 2) < 1e-12
    assert abs(np.exp(1j * phase_shift(p, prm)) - phase_factor(p, prm)) < 1e-13


@given(tau=taus, eps=eps_s)
def test_phase_shift_monotone_in_range(tau, eps):
    prm = ModelParams(tau, eps)
    phi = phase_shift(np.linspace(-30, 30, 2001), prm)
    assert np.all(np.diff(phi) > 0)
    assert np.all((phi > 0) & (phi < 2 * np.pi))


def test_basis_function_examples(params):
    assert basis_function(0.0, -1.0, params) == pytest.approx(1.0)
    assert basis_function(params.epsilon, 1.0, params) == pytest.approx(-np.exp(1j * params.epsilon))
    p = 0.7
    assert basis_function(p, 0.0, params) == pytest.approx(0.5 * (1 + phase_factor(p, params)))


# -- quantization -------------------------------------------------------------

def _residual(spec, L, prm):
    p = spec.momenta
    return np.abs(np.exp(2j * p * L) - np.conj(phase_factor(p, prm)))


@pytest.mark.parametrize("L,tau,eps,window", [(50, 1.0, 0.0, 3.0), (200, 1.0, 0.3, 8.0),
                                              (400, 1.4, -0.2, 4.0), (13.7, 0.3, 1.0, 20.0)])
def test_quantization_residual(L, tau, eps, window):
    prm = ModelParams(tau, eps)
    spec = solve_quantization(L, prm, window)
    assert spec.sector == "even"
    assert _residual(spec, L, prm).max() <= 1e-10
    assert np.all(np.diff(spec.momenta) > 0)
    assert np.all(np.abs(spec.momenta) <= window)


def test_quantization_small_tau_approaches_free_grid():
    L = 30.0

    def offset(tau):
        spec = solve_quantization(L, ModelParams(tau, 0.2), 3.0)
        k = np.rint(spec.momenta * L / np.pi)
        # the resonant interval holds an extra root; compare the others
        far = np.abs(spec.momenta - 0.2) > 0.05
        return np.max(np.abs(spec.momenta[far] - k[far] * np.pi / L))

    d2, d3 = offset(1e-2), offset(1e-3)
    assert d3 < 1e-6
    # the shift is Gamma / (L (p - eps)) to leading order, i.e. ~ tau^2
    assert d2 / d3 == pytest.approx(100, rel=0.05)


def test_quantization_count_against_dense_scan():
    L, prm, window = 50.0, ModelParams(1.0, 0.0), 3.0
    spec = solve_quantization(L, prm, window)
    # independent count: sign changes of sin((2pL + arg v_p) / 2) on a fine grid
    p = np.linspace(-window, window, 400_001)
    arg = np.mod(np.angle(phase_factor(p, prm)), 2 * np.pi)
    s = np.sin(p * L + 0.5 * arg)
    scan = int(np.sum(np.sign(s[1:]) != np.sign(s[:-1])))
    assert len(spec) == scan
    free = odd_spectrum(L, window)
    assert abs(len(spec) - len(free)) <= 2


def test_double_root_interval_sits_on_resonance():
    L = 50.0
    for eps in (0.0, 0.41):
        spec = solve_quantization(L, ModelParams(1.0, eps), 3.0)
        assert len(spec.flagged) == 1
        lo, hi = spec.flagged[0]
        assert lo <= eps <= hi


def test_quantization_rejects_bad_sizes(params):
    with pytest.raises(ConfigError):
        solve_quantization(-1.0, params, 3.0)
    with pytest.raises(ConfigError):
        solve_quantization(10.0, params, 0.0)


def test_spectrum_rows(params):
    spec = solve_quantization(20.0, params, 1.0)
    rows = spec.to_rows()
    assert len(rows) == len(spec)
    sector, p, n2 = rows[0]
    assert sector == "even"
    assert n2 == pytest.approx(2 * 20.0 + abs(w_coeff(p, params)) ** 2)
    odd = odd_spectrum(20.0, 1.0)
    assert np.allclose(odd.norms, 40.0)
    assert np.allclose(odd.momenta * 20.0 / np.pi, np.rint(odd.momenta * 20.0 / np.pi))


# -- overlaps and Gram identity ---------------------------------------------------

def _trapezoid_overlap(p, p2, L, prm, n=10_000):
    left = np.linspace(-L, 0.0, n)
    right = np.linspace(0.0, L, n)
    fl = np.exp(1j * (p2 - p) * left)
    fr = phase_factor(p2, prm) * np.conj(phase_factor(p, prm)) * np.exp(1j * (p2 - p) * right)
    return trapezoid(fl, left) + trapezoid(fr, right)


def test_overlap_matches_trapezoid(rng):
    # h = 5e-4 keeps the trapezoid error of e^{ikx}, ~ k h^2 / 6, far below 1e-6
    L, prm = 5.0, ModelParams(1.0, 0.3)
    p = solve_quantization(L, prm, 1.2).momenta
    for _ in range(100):
        i, j = rng.choice(p.size, size=2, replace=False)
        exact = overlap_ee(p[i], p[j], L, prm)
        approx = _trapezoid_overlap(p[i], p[j], L, prm)
        assert abs(exact - approx) <= 1e-6 * max(abs(exact), 1e-3)


def test_overlap_diagonal_and_free_limit(params):
    L = 10.0
    p = solve_quantization(L, params, 2.0).momenta
    assert overlap_ee(p[3], p[3], L, params) == 2 * L
    tiny = ModelParams(1e-3, 0.3)
    q = solve_quantization(L, tiny, 2.0).momenta
    assert abs(overlap_ee(q[1], q[4], L, tiny)) < 1e-6


@pytest.mark.parametrize("L,window", [(25.0, 4.0), (120.0, 2.0)])
def test_gram_identity(params, L, window):
    p = solve_quantization(L, params, window).momenta
    w = w_coeff(p, params)
    gram = overlap_ee(p[:, None], p[None, :], L, params)
    gram = gram + np.conj(1j * w[:, None] / params.tau) * (1j * w[None, :] / params.tau)
    n = np.sqrt(even_norm2(p, L, params))
    gram = gram / np.outer(n, n)
    assert np.max(np.abs(gram - np.eye(p.size))) <= 1e-8


# -- spread impurity ----------------------------------------------------------------

def test_mollifier_rejects_bad_width():
    with pytest.raises(ConfigError):
        MollifierSpec(0.0)
    with pytest.raises(ConfigError):
        MollifierSpec(0.1, shape="gauss")


def test_mollifier_primitive_trivial_values():
    spec = MollifierSpec(0.1)
    assert mollifier_Phi(3.0, -0.05, spec) == 0
    assert mollifier_Phi(3.0, -1.0, spec) == 0
    assert mollifier_Phi(0.0, 0.05, spec) == pytest.approx(1.0)
    assert mollifier_Phi(0.0, 0.0, spec) == pytest.approx(0.5)


def test_mollifier_primitive_against_quadrature():
    a, p, x = 0.1, 2.0, 0.05
    y = np.linspace(-a / 2, x, 10_000)
    ref = trapezoid(np.exp(-1j * p * y) / a, y)
    assert abs(mollifier_Phi(p, x, MollifierSpec(a)) - ref) <= 1e-8


def test_mollifier_inner_closed_form():
    # box: <phi, Phi> = (e^{2iu} - 1 - 2iu) / (2iu)^2 with u = p a / 2
    for p, a in [(2.0, 0.1), (-3.0, 0.4), (0.7, 1.3)]:
        u = 0.5 * p * a
        exact = (np.exp(2j * u) - 1 - 2j * u) / (2j * u) ** 2
        assert abs(mollifier_inner(p, MollifierSpec(a)) - exact) < 1e-12


@settings(max_examples=40, deadline=None)
@given(p=st.floats(-4, 4), a=st.floats(0.01, 0.8), tau=taus, eps=eps_s)
def test_mollifier_unitarity(p, a, tau, eps):
    spec, prm = MollifierSpec(a), ModelParams(tau, eps)
    edge = complex(mollifier_Phi(p, a / 2, spec))
    assert abs(2 * mollifier_inner(p, spec).real - abs(edge) ** 2) <= 1e-10
    assert abs(abs(spread_phase(p, spec, prm)) - 1) <= 1e-10


def test_mollifier_c_small_width_limit(params):
    limit = (1j * (1.3 - params.epsilon) - params.gamma) / params.tau**2
    assert abs(mollifier_c(1.3, MollifierSpec(1e-5), params) - limit) < 1e-4
    assert abs(spread_phase(1.3, MollifierSpec(1e-5), params) - phase_factor(1.3, params)) < 1e-4


def test_mollifier_c_guard(params):
    with pytest.raises(NumericalError):
        mollifier_c(2 * np.pi / 0.5, MollifierSpec(0.5), params)


def test_spread_limit_exact_at_zero_momentum(params):
    rep = spread_limit_check(0.0, [0.2, 0.1, 0.05], params)
    assert rep.exact and rep.monotone and np.all(rep.deviation <= 1e-14)


def test_spread_limit_on_resonance(params):
    rep = spread_limit_check(params.epsilon, [0.2, 0.1, 0.05, 0.025], params)
    assert rep.monotone
    # O(a^2) corrections pull any finite-a regression just below 1
    assert rep.order >= 0.999 and rep.phase_order >= 0.999
    assert np.all(np.isfinite(rep.local_order))


def test_spread_limit_rejects_bad_sequence(params):
    with pytest.raises(ConfigError):
        spread_limit_check(1.0, [0.1, 0.2], params)
    with pytest.raises(ConfigError):
        spread_limit_check(1.0, [0.1], params)
