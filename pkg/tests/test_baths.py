import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rlmfcs.basis import build_basis
from rlmfcs.baths import BathConfig, free_correlation_matrix, nhat_block, occupation
from rlmfcs.errors import ConfigError
from rlmfcs.scattering import ModelParams

betas = st.floats(0.1, 20.0)
mus = st.floats(-3.0, 3.0)
SX = np.array([[0, 1], [1, 0]])


def test_config_validation():
    with pytest.raises(ConfigError):
        BathConfig(beta1=-1.0, beta2=1.0)
    with pytest.raises(ConfigError):
        BathConfig(beta1=1.0, beta2=1.0, n_d=1.5)
    with pytest.raises(ConfigError):
        BathConfig(beta1="hot", beta2=1.0)
    with pytest.raises(ConfigError):
        BathConfig.from_mapping({"beta1": 1.0})
    with pytest.raises(ConfigError):
        BathConfig.from_mapping({"beta1": 1.0, "beta2": 1.0, "mu3": 0.0})


def test_infinite_beta_round_trip():
    cfg = BathConfig.from_mapping({"beta1": "inf", "beta2": 2.0, "mu1": 0.5})
    assert math.isinf(cfg.beta1) and cfg.T1 == 0.0
    assert BathConfig.from_mapping(cfg.to_dict()) == cfg


def test_derived_parameters():
    cfg = BathConfig(2.0, 4.0, 0.5, -0.25)
    assert cfg.beta == 3.0
    assert cfg.W == -2.0
    s = cfg.shift
    assert cfg.beta1 * (cfg.mu1 - s) + cfg.beta2 * (cfg.mu2 - s) == pytest.approx(0.0, abs=1e-15)
    assert cfg.V == pytest.approx(cfg.beta1 * (cfg.mu1 - s) - cfg.beta2 * (cfg.mu2 - s))
    assert cfg.t_max == 0.5


def test_occupation_examples():
    cfg = BathConfig(1.0, 3.0, 0.0, 0.4)
    assert occupation(0.0, 1, cfg) == 0.5
    assert occupation(0.4, 2, cfg) == 0.5
    assert occupation(1.0, 1, cfg) == pytest.approx(1 / (math.e + 1), abs=1e-15)
    assert occupation(1e4, 1, cfg) == 0.0
    assert occupation(-1e4, 2, cfg) == 1.0
    with pytest.raises(ConfigError):
        occupation(0.0, 3, cfg)


def test_zero_temperature_step():
    cfg = BathConfig("inf", "inf", 1.0, 0.0)
    w = np.array([-0.1, 0.0, 0.5, 1.0, 1.1])
    assert np.array_equal(occupation(w, 1, cfg), [1, 1, 1, 0.5, 0])
    assert np.array_equal(occupation(w, 2, cfg), [1, 0.5, 0, 0, 0])


@given(beta=betas, mu=mus)
def test_occupation_monotone(beta, mu):
    cfg = BathConfig(beta, beta, mu, mu)
    n = occupation(np.linspace(-10, 10, 501), 1, cfg)
    assert np.all(np.diff(n) <= 0)
    assert np.all((n >= 0) & (n <= 1))


def test_nhat_examples():
    eq = BathConfig(2.0, 2.0, 0.1, 0.1)
    blk = nhat_block(0.3, eq).m
    assert np.allclose(blk, occupation(0.3, 1, eq) * np.eye(2), atol=1e-15)
    full = BathConfig("inf", "inf", 1.0, -1.0)
    proj = nhat_block(0.0, full).m
    assert np.allclose(proj, 0.5 * (np.eye(2) + SX))
    assert np.allclose(proj @ proj, proj)


@given(p=st.floats(-5, 5), b1=betas, b2=betas, m1=mus, m2=mus)
def test_nhat_spectrum(p, b1, b2, m1, m2):
    cfg = BathConfig(b1, b2, m1, m2)
    m = nhat_block(p, cfg).m
    assert np.allclose(m, m.conj().T)
    ev = np.sort(np.linalg.eigvalsh(m))
    ref = np.sort([occupation(p, 1, cfg), occupation(p, 2, cfg)])
    assert np.allclose(ev, ref, atol=1e-14)


def test_nhat_batched():
    cfg = BathConfig(1.0, 2.0, 0.3, -0.3)
    p = np.linspace(-1, 1, 7)
    blk = nhat_block(p, cfg).m
    assert blk.shape == (7, 2, 2)
    assert np.allclose(blk[3], nhat_block(p[3], cfg).m)


@given(b1=betas, b2=betas, m1=mus, m2=mus, s0=st.floats(-2, 2), p=st.floats(-4, 4))
def test_energy_shift_invariance(b1, b2, m1, m2, s0, p):
    cfg = BathConfig(b1, b2, m1, m2)
    moved = cfg.shifted(s0)
    assert moved.V == pytest.approx(cfg.V, abs=1e-9)
    assert moved.W == cfg.W and moved.beta == cfg.beta
    assert np.allclose(nhat_block(p + s0, moved).m, nhat_block(p, cfg).m, atol=1e-12)


@pytest.fixture(scope="module")
def free_basis():
    return build_basis("free", 20.0, 3.0, ModelParams(1.0, 0.3))


def test_free_correlation_equilibrium_is_diagonal(free_basis):
    cfg = BathConfig(2.0, 2.0, 0.2, 0.2, n_d=0.3)
    g = free_correlation_matrix(free_basis, cfg).data
    assert np.count_nonzero(g - np.diag(np.diag(g))) == 0
    n = occupation(free_basis.energy[free_basis.even], 1, cfg)
    assert np.allclose(np.diag(g)[free_basis.even], n)
    assert g[free_basis.dot[0], free_basis.dot[0]] == 0.3


def test_free_correlation_spectrum_and_trace(free_basis):
    cfg = BathConfig(2.5, 4.0, 0.5, -0.5, n_d=0.7)
    gm = free_correlation_matrix(free_basis, cfg)
    assert gm.hermitian_defect() == 0.0
    ev = np.linalg.eigvalsh(gm.data)
    assert ev.min() >= -1e-12 and ev.max() <= 1 + 1e-12
    p = free_basis.energy[free_basis.even]
    ref = math.fsum(occupation(p, 1, cfg)) + math.fsum(occupation(p, 2, cfg)) + 0.7
    assert np.trace(gm.data).real == pytest.approx(ref, abs=1e-12)


def test_free_correlation_needs_free_basis():
    inter = build_basis("interacting", 20.0, 2.0, ModelParams(1.0))
    with pytest.raises(ConfigError):
        free_correlation_matrix(inter, BathConfig(1.0, 1.0))
