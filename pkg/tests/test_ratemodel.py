import numpy as np
import pytest

from cranbeam.ratemodel import (
    BeamSet,
    RateConfig,
    all_sinr,
    constraint_residuals,
    net_rate,
    sinr,
    smooth_indicator,
)
from cranbeam.statistics import BeliefModel, StatSet


def _toy_stats(K=2, L=1, M=2, noise=1.0, a_scale=1.0):
    """Synthetic unit-scale statistics for closed-form checks."""
    D = L * M
    rng = np.random.default_rng(0)
    a_kk = np.zeros((K, D, D), dtype=complex)
    for k in range(K):
        g = rng.standard_normal(D) + 1j * rng.standard_normal(D)
        a_kk[k] = a_scale * np.outer(g, g.conj())
    e_diag = np.zeros((K, D))
    a_cross = np.zeros((K, K, D, D), dtype=complex)
    for l in range(K):
        for k in range(K):
            if l != k:
                a_cross[l, k] = 0.1 * np.eye(D)
    clusters = tuple(tuple(range(L)) for _ in range(K))
    return StatSet(belief=BeliefModel.FULL_ROBUST, a_kk=a_kk, e_diag=e_diag,
                   a_cross=a_cross, clusters=clusters, antennas=M, noise_mw=noise,
                   believed_dir=np.zeros((K, L, M), dtype=complex))


def _cfg(K=2, I=1, T=200, tau=8, r_min=3.0, c_max=9.0, p_max=100.0):
    return RateConfig(frame_slots=T, train_slots=tau,
                      r_min=np.full(K, r_min), c_max=np.full(I, c_max),
                      p_max=np.full(I, p_max))


def test_eta_inversion_identity():
    for T, tau, r in [(200, 8, 3.0), (200, 14, 1.0), (100, 10, 6.0)]:
        cfg = _cfg(T=T, tau=tau, r_min=r)
        eta = cfg.eta_min[0]
        back = cfg.overhead * np.log2(1 + eta)
        assert back == pytest.approx(r, abs=1e-12)


def test_eta_value_from_formula():
    cfg = _cfg(T=200, tau=8, r_min=3.0)
    assert cfg.eta_min[0] == pytest.approx(2 ** (200 / 192 * 3) - 1, rel=1e-12)
    assert cfg.eta_min[0] == pytest.approx(7.7240618613, abs=1e-9)


def test_tau_zero_rate():
    cfg = _cfg(T=100, tau=0, r_min=3.0)
    stats = _toy_stats(K=1)
    g = np.linalg.eigh(stats.a_kk[0])[1][:, -1]
    lam = np.linalg.eigvalsh(stats.a_kk[0])[-1]
    # single UE, rank-one A, no residual: SINR = p * lam / noise
    p = 7.0 / lam
    beams = BeamSet((0,), (np.sqrt(p) * g)[None, :], stats.clusters, stats.antennas)
    assert sinr(beams, stats, 0) == pytest.approx(7.0, rel=1e-12)
    assert net_rate(beams, stats, cfg, 0) == pytest.approx(3.0, rel=1e-12)


def test_zero_beams_zero_sinr():
    stats = _toy_stats()
    beams = BeamSet((0, 1), np.zeros((2, 2), dtype=complex), stats.clusters, 2)
    assert np.allclose(all_sinr(beams, stats), 0.0)


def test_interference_reduces_sinr():
    stats = _toy_stats()
    rng = np.random.default_rng(1)
    w = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    beams = BeamSet((0, 1), w, stats.clusters, 2)
    s1 = sinr(beams, stats, 0)
    w2 = w.copy()
    w2[1] *= 2.0  # double the interferer's amplitude
    s2 = sinr(BeamSet((0, 1), w2, stats.clusters, 2), stats, 0)
    assert s2 < s1


def test_smooth_indicator_bounds():
    theta = 1e-5
    assert smooth_indicator(0.0, theta) == 0.0
    assert smooth_indicator(1.0, theta) == pytest.approx(1 / (1 + 1e-5))
    x = np.logspace(-9, 3, 200)
    assert (smooth_indicator(x, theta) <= 1.0).all()
    # never exceeds the exact indicator
    assert (smooth_indicator(x, theta) <= (x > 0).astype(float)).all()


def test_constraint_residuals_counting():
    # one RRH serving both UEs at full rate against a tight fronthaul cap
    stats = _toy_stats()
    cfg = _cfg(K=2, I=1, r_min=3.0, c_max=3.0, p_max=10.0)
    w = np.ones((2, 2), dtype=complex)
    beams = BeamSet((0, 1), w, stats.clusters, 2)
    rep = constraint_residuals(beams, stats, cfg, theta=1e-5)
    assert rep.fronthaul_exact[0] == pytest.approx(6.0)
    assert rep.fronthaul_margin[0] == pytest.approx(-3.0)
    assert rep.power_margin[0] == pytest.approx(10.0 - 4.0)
    assert (rep.fronthaul_smooth <= rep.fronthaul_exact + 1e-12).all()


def test_all_zero_beams_full_margins():
    stats = _toy_stats()
    cfg = _cfg(K=2, I=1)
    beams = BeamSet((0, 1), np.zeros((2, 2), dtype=complex), stats.clusters, 2)
    rep = constraint_residuals(beams, stats, cfg, theta=1e-5)
    assert rep.power_margin[0] == pytest.approx(cfg.p_max[0])
    assert rep.fronthaul_exact[0] == 0.0
    rows = rep.rows()
    assert any(r[2] == "power" for r in rows)
    assert any(r[2] == "sinr" for r in rows)


def test_rate_config_validation():
    with pytest.raises(ValueError):
        _cfg(T=100, tau=100)
    with pytest.raises(ValueError):
        _cfg(r_min=0.0)
