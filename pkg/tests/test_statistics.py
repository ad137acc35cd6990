import numpy as np
import pytest
from scipy import integrate, special

from cranbeam.channels import estimation_stats, noise_power_mw, sample_channels
from cranbeam.feedback import FeedbackConfig, build_feedback
from cranbeam.pilots import build_conflict_graph, dsatur_color
from cranbeam.statistics import (
    BeliefModel,
    build_statset,
    desired_matrix,
    interference_matrix,
    lemma_constants,
    mc_desired_matrix,
    mc_interference_matrix,
    mean_cdi_alignment,
    mean_cdi_error,
    mean_estimate_norm,
    pa_coherence,
)
from cranbeam.topology import NetworkConfig, generate


def _scenario(seed=17, b_cdi=2, b_pa=1, num_rrh=6, num_ue=3, cluster_size=2):
    topo = generate(NetworkConfig(num_rrh=num_rrh, num_ue=num_ue,
                                  cluster_size=cluster_size, seed=seed))
    pa = dsatur_color(build_conflict_graph(topo), 2, topo.antennas)
    est = estimation_stats(topo, pa, 200.0, noise_power_mw())
    draw = sample_channels(topo, est, np.random.default_rng(seed + 1))
    fb = build_feedback(FeedbackConfig(b_cdi=b_cdi, b_pa=b_pa, codebook_seed=seed),
                        topo, draw)
    return topo, est, fb


# -- scalar constants ---------------------------------------------------------

def test_mean_cdi_error_values():
    assert mean_cdi_error(2, 2) == pytest.approx(0.2, abs=1e-13)
    assert mean_cdi_error(1, 2) == pytest.approx(1.0 / 3.0, abs=1e-13)
    for b in (1, 2, 4, 8):
        assert mean_cdi_error(b, 2) == pytest.approx(1.0 / (1 + 2**b), rel=1e-12)
    assert mean_cdi_error(None, 2) == 0.0


def test_pa_coherence_values():
    assert pa_coherence(1) == pytest.approx(2.0 / np.pi, abs=1e-14)
    assert pa_coherence(0) == pytest.approx(0.0, abs=1e-15)
    assert pa_coherence(None) == 1.0
    assert pa_coherence(20) == pytest.approx(1.0, abs=1e-10)


def test_mean_estimate_norm_value():
    # omega = 1, M = 2: Gamma(2.5)/Gamma(2) = 0.75 sqrt(pi)
    assert mean_estimate_norm(1.0, 2) == pytest.approx(0.75 * np.sqrt(np.pi), rel=1e-12)
    rng = np.random.default_rng(0)
    h = (rng.standard_normal((200_000, 2)) + 1j * rng.standard_normal((200_000, 2))) / np.sqrt(2)
    assert np.linalg.norm(h, axis=1).mean() == pytest.approx(0.75 * np.sqrt(np.pi), rel=0.005)


def test_mean_alignment_against_quadrature():
    """Independent oracle: E{sqrt(v)} = 1 - int_0^1 [1-(1-s^2)^(M-1)]^N ds."""
    for M in (2, 3, 4):
        for b in (1, 2, 4, 6, 8):
            N = 2**b
            val, _ = integrate.quad(lambda s: (1 - (1 - s * s) ** (M - 1)) ** N, 0, 1,
                                    limit=200)
            assert mean_cdi_alignment(b, M) == pytest.approx(1 - val, abs=1e-12)
    assert mean_cdi_alignment(1, 2) == pytest.approx(0.8, abs=1e-13)
    assert mean_cdi_alignment(None, 3) == 1.0


def test_monotonicity_in_bits():
    xi = [pa_coherence(b) for b in range(1, 9)]
    assert all(b > a for a, b in zip(xi, xi[1:]))
    rho = [mean_cdi_error(b, 2) for b in range(1, 9)]
    assert all(b < a for a, b in zip(rho, rho[1:]))


def test_lemma_constants_assembly():
    topo, est, fb = _scenario()
    cl = np.array([list(c) for c in topo.clusters])
    omega = est.omega[cl, np.arange(topo.num_ue)[:, None]]
    consts = lemma_constants(omega, fb.b_cdi, fb.b_pa, fb.q, topo.antennas)
    assert (consts.rho >= 0).all() and (consts.rho <= 1).all()
    assert (consts.xi >= 0).all() and (consts.xi <= 1).all()
    assert (consts.varsigma > 0).all()
    assert (consts.omega_bar >= 0).all() and (consts.omega_bar <= 1).all()
    # null projector: Hermitian PSD with trace 1, annihilates q
    for k in range(topo.num_ue):
        for s in range(topo.cluster_size):
            O = consts.null_proj[k, s]
            assert np.allclose(O, O.conj().T, atol=1e-14)
            assert np.trace(O).real == pytest.approx(1.0, abs=1e-12)
            assert np.linalg.norm(O @ fb.q[k, s]) < 1e-12


# -- matrix assembly ----------------------------------------------------------

def test_error_covariance_is_blockdiag_delta(scenario=None):
    topo, est, fb = _scenario()
    stats = build_statset(BeliefModel.FULL_ROBUST, fb, est, topo)
    for k, cl in enumerate(topo.clusters):
        expect = np.repeat([est.delta[i, k] for i in cl], topo.antennas)
        assert np.allclose(stats.e_diag[k], expect)
        full = stats.e_kk(k)
        assert np.allclose(full, np.diag(expect))


def test_diag_block_trace_and_perfect_cdi_limit():
    topo, est, fb = _scenario()
    M = topo.antennas
    stats = build_statset(BeliefModel.FULL_ROBUST, fb, est, topo)
    for k, cl in enumerate(topo.clusters):
        for s, i in enumerate(cl):
            blk = stats.a_kk[k][s * M:(s + 1) * M, s * M:(s + 1) * M]
            assert np.trace(blk).real == pytest.approx(est.omega[i, k] * M, rel=1e-12)

    # exact direction feedback: diagonal blocks collapse to omega*M*qq^H
    fb_exact = build_feedback(FeedbackConfig(b_cdi=None, b_pa=None), topo,
                              sample_channels(topo, est, np.random.default_rng(5)))
    stats2 = build_statset(BeliefModel.FULL_ROBUST, fb_exact, est, topo)
    k = 0
    i = topo.clusters[k][0]
    q = fb_exact.q[k, 0]
    blk = stats2.a_kk[k][:M, :M]
    assert np.allclose(blk, est.omega[i, k] * M * np.outer(q, q.conj()), atol=1e-15)


def test_statsets_hermitian_psd_all_beliefs():
    topo, est, fb = _scenario()
    for belief in BeliefModel:
        stats = build_statset(belief, fb, est, topo)
        stats.validate()


def test_belief_semantics():
    topo, est, fb = _scenario()
    M = topo.antennas
    full = build_statset(BeliefModel.FULL_ROBUST, fb, est, topo)
    quant = build_statset(BeliefModel.QUANT_ONLY, fb, est, topo)
    estim = build_statset(BeliefModel.ESTIM_ONLY, fb, est, topo)
    cdi = build_statset(BeliefModel.CDI_ONLY, fb, est, topo)
    nonrob = build_statset(BeliefModel.NON_ROBUST, fb, est, topo)

    # quantization-only drops the estimation error everywhere
    assert np.allclose(quant.e_diag, 0.0)
    assert np.allclose(quant.a_kk, full.a_kk)
    # estimation-only keeps delta but believes a deterministic channel
    assert np.allclose(estim.e_diag, full.e_diag)
    for k in range(topo.num_ue):
        assert np.linalg.matrix_rank(estim.a_kk[k], tol=1e-12) == 1
        assert np.linalg.matrix_rank(nonrob.a_kk[k], tol=1e-12) == 1
    # direction-only zeroes every off-diagonal block of the desired matrix
    D = full.dim
    for k in range(topo.num_ue):
        for si in range(topo.cluster_size):
            for sl in range(topo.cluster_size):
                if si == sl:
                    continue
                blk = cdi.a_kk[k][si * M:(si + 1) * M, sl * M:(sl + 1) * M]
                assert np.allclose(blk, 0.0)
    assert np.allclose(cdi.e_diag, full.e_diag)
    assert np.allclose(nonrob.e_diag, 0.0)


def test_case_structure_of_interference_matrix():
    topo, est, fb = _scenario(seed=33, num_rrh=8, num_ue=4, cluster_size=2)
    M = topo.antennas
    stats = build_statset(BeliefModel.FULL_ROBUST, fb, est, topo)
    slot_of = [{i: s for s, i in enumerate(cl)} for cl in topo.clusters]
    for l in range(topo.num_ue):
        for k in range(topo.num_ue):
            if l == k:
                continue
            mat = stats.a_cross[l, k]
            assert np.allclose(mat, interference_matrix(
                BeliefModel.FULL_ROBUST, fb, est, topo, l, k))
            for s, rrh in enumerate(topo.clusters[l]):
                blk = mat[s * M:(s + 1) * M, s * M:(s + 1) * M]
                if rrh in slot_of[k]:
                    # same RRH inside the victim's cluster: conditional moment + delta I
                    assert np.trace(blk).real == pytest.approx(
                        (est.omega[rrh, k] + est.delta[rrh, k]) * M, rel=1e-12)
                else:
                    assert np.allclose(blk, topo.alpha[rrh, k] * np.eye(M))
            # cross blocks touching an out-of-cluster RRH vanish
            for si, ri in enumerate(topo.clusters[l]):
                for sj, rj in enumerate(topo.clusters[l]):
                    if si == sj:
                        continue
                    blk = mat[si * M:(si + 1) * M, sj * M:(sj + 1) * M]
                    if ri not in slot_of[k] or rj not in slot_of[k]:
                        assert np.allclose(blk, 0.0)


def test_disjoint_clusters_give_scaled_identity():
    topo, est, fb = _scenario(seed=41, num_rrh=8, num_ue=4, cluster_size=2)
    stats = build_statset(BeliefModel.FULL_ROBUST, fb, est, topo)
    M = topo.antennas
    for l in range(topo.num_ue):
        for k in range(topo.num_ue):
            if l == k or set(topo.clusters[l]) & set(topo.clusters[k]):
                continue
            expect = np.kron(np.diag([topo.alpha[i, k] for i in topo.clusters[l]]),
                             np.eye(M))
            assert np.allclose(stats.a_cross[l, k], expect)


def test_desired_matrix_helper_matches_statset():
    topo, est, fb = _scenario()
    stats = build_statset(BeliefModel.FULL_ROBUST, fb, est, topo)
    for k in range(topo.num_ue):
        assert np.allclose(
            desired_matrix(BeliefModel.FULL_ROBUST, fb, est, topo, k), stats.a_kk[k])


# -- conditional Monte Carlo oracle -------------------------------------------

def test_oracle_matches_closed_form_desired():
    topo, est, fb = _scenario(seed=29)
    stats = build_statset(BeliefModel.FULL_ROBUST, fb, est, topo)
    rng = np.random.default_rng(100)
    mc = mc_desired_matrix(fb, est, topo, 0, 200_000, rng)
    ref = stats.a_kk[0]
    rel = np.linalg.norm(mc - ref) / np.linalg.norm(ref)
    assert rel < 0.03


def test_oracle_matches_closed_form_interference():
    topo, est, fb = _scenario(seed=29)
    stats = build_statset(BeliefModel.FULL_ROBUST, fb, est, topo)
    rng = np.random.default_rng(101)
    mc = mc_interference_matrix(fb, est, topo, 1, 0, 200_000, rng)
    ref = stats.a_cross[1, 0]
    rel = np.linalg.norm(mc - ref) / np.linalg.norm(ref)
    assert rel < 0.03
