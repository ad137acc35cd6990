import numpy as np
import pytest
from scipy import stats as sps

from cranbeam.channels import complex_normal, estimation_stats, noise_power_mw, sample_channels
from cranbeam.feedback import (
    DegenerateChannel,
    FeedbackConfig,
    build_feedback,
    generate_codebooks,
    mc_quantization_constants,
    quantize_cdi,
    quantize_pa,
)
from cranbeam.pilots import build_conflict_graph, dsatur_color
from cranbeam.statistics import mean_cdi_alignment, mean_cdi_error
from cranbeam.topology import NetworkConfig, generate


@pytest.fixture(scope="module")
def setup():
    topo = generate(NetworkConfig(num_rrh=6, num_ue=4, cluster_size=2, seed=21))
    pa = dsatur_color(build_conflict_graph(topo), 2, topo.antennas)
    est = estimation_stats(topo, pa, 200.0, noise_power_mw())
    draw = sample_channels(topo, est, np.random.default_rng(3))
    return topo, est, draw


def test_codebooks_unit_norm_and_reproducible(setup):
    topo, _, _ = setup
    cfg = FeedbackConfig(b_cdi=3, b_pa=2, codebook_seed=5)
    cb1 = generate_codebooks(cfg, topo)
    cb2 = generate_codebooks(cfg, topo)
    assert cb1.shape == (4, 2, 8, 2)
    assert np.allclose(np.linalg.norm(cb1, axis=-1), 1.0, atol=1e-12)
    assert np.array_equal(cb1, cb2)


def test_single_codeword_isotropy():
    # E{|h^H c|^2} = 1/M for an isotropic unit codeword
    rng = np.random.default_rng(0)
    M, n = 4, 200_000
    h = complex_normal(rng, 1.0, (n, M))
    h /= np.linalg.norm(h, axis=1, keepdims=True)
    c = complex_normal(rng, 1.0, (n, M))
    c /= np.linalg.norm(c, axis=1, keepdims=True)
    val = (np.abs(np.einsum("ni,ni->n", h.conj(), c)) ** 2).mean()
    assert val == pytest.approx(1.0 / M, rel=0.02)


def test_exact_codeword_in_codebook():
    rng = np.random.default_rng(1)
    h = complex_normal(rng, 1.0, 3)
    cb = complex_normal(rng, 1.0, (4, 3))
    cb /= np.linalg.norm(cb, axis=1, keepdims=True)
    cb[2] = h / np.linalg.norm(h)
    q, a, phi = quantize_cdi(h, cb)
    assert np.allclose(q, cb[2])
    assert a == pytest.approx(0.0, abs=1e-12)
    assert phi == pytest.approx(0.0, abs=1e-9) or phi == pytest.approx(2 * np.pi, abs=1e-9)


def test_orthogonal_single_codeword_full_error():
    h = np.array([1.0 + 0j, 0.0])
    cb = np.array([[0.0, 1.0 + 0j]])
    q, a, _ = quantize_cdi(h, cb)
    assert a == pytest.approx(1.0)


def test_zero_estimate_raises():
    with pytest.raises(DegenerateChannel):
        quantize_cdi(np.zeros(2, dtype=complex), np.eye(2, dtype=complex))


def test_reconstruction_identity():
    """h_tilde = sqrt(1-a) e^{j phi} q + sqrt(a) u with unit u orthogonal to q."""
    rng = np.random.default_rng(2)
    for _ in range(200):
        M = rng.integers(2, 5)
        h = complex_normal(rng, 1.0, M)
        cb = complex_normal(rng, 1.0, (8, M))
        cb /= np.linalg.norm(cb, axis=1, keepdims=True)
        q, a, phi = quantize_cdi(h, cb)
        if a <= 1e-12:
            continue
        h_tilde = h / np.linalg.norm(h)
        u = (h_tilde - np.sqrt(1 - a) * np.exp(1j * phi) * q) / np.sqrt(a)
        assert np.linalg.norm(u) == pytest.approx(1.0, abs=1e-10)
        assert abs(np.vdot(q, u)) < 1e-10


def test_pa_cell_centers():
    # 1 bit: cells [0, pi), [pi, 2pi) with centers pi/2 and 3pi/2
    assert quantize_pa(0.1, 1) == pytest.approx(np.pi / 2)
    assert quantize_pa(3.3, 1) == pytest.approx(3 * np.pi / 2)
    # 2 bits: phi = pi falls in [pi, 3pi/2) with center pi + pi/4
    assert quantize_pa(np.pi, 2) == pytest.approx(np.pi + np.pi / 4)
    # stated error bound
    rng = np.random.default_rng(3)
    for b in (1, 2, 3, 6):
        phis = rng.uniform(0, 2 * np.pi, 500)
        err = np.array([p - quantize_pa(p, b) for p in phis])
        assert (np.abs(err) <= np.pi / 2**b + 1e-12).all()


def test_pa_limits():
    assert quantize_pa(1.234, None) == pytest.approx(1.234)
    assert quantize_pa(1.234, 0) == 0.0
    assert quantize_pa(1.234, 16) == pytest.approx(1.234, abs=2 * np.pi / 2**16)


def test_pa_error_uniform_ks():
    """Realized in-cell errors follow U[-pi/2^b, pi/2^b] (KS at 1%)."""
    rng = np.random.default_rng(4)
    M, b_cdi, b_pa, n = 2, 2, 2, 4000
    h = complex_normal(rng, 1.0, (n, M))
    errs = []
    for row in h:
        cb = complex_normal(rng, 1.0, (2**b_cdi, M))
        cb /= np.linalg.norm(cb, axis=1, keepdims=True)
        _, _, phi = quantize_cdi(row, cb)
        err = phi - quantize_pa(phi, b_pa)
        errs.append(err)
    half = np.pi / 2**b_pa
    stat = sps.kstest(np.asarray(errs), sps.uniform(loc=-half, scale=2 * half).cdf)
    assert stat.pvalue > 0.01


def test_mean_error_closed_form_m2():
    """At M=2 the mean quantization error is 1/(1 + 2^b); Monte Carlo agrees."""
    rng = np.random.default_rng(5)
    a_hat, _ = mc_quantization_constants(M=2, b_cdi=2, n_draws=400_000, rng=rng)
    assert mean_cdi_error(2, 2) == pytest.approx(0.2, abs=1e-12)
    assert a_hat == pytest.approx(0.2, rel=0.01)


def test_mean_alignment_matches_mc():
    rng = np.random.default_rng(6)
    _, align = mc_quantization_constants(M=2, b_cdi=1, n_draws=400_000, rng=rng)
    assert mean_cdi_alignment(1, 2) == pytest.approx(0.8, abs=1e-12)
    assert align == pytest.approx(0.8, rel=0.01)


def test_build_feedback_shapes_and_exact_modes(setup):
    topo, est, draw = setup
    fb = build_feedback(FeedbackConfig(b_cdi=2, b_pa=1, codebook_seed=0), topo, draw)
    assert fb.q.shape == (4, 2, 2)
    assert np.allclose(np.linalg.norm(fb.q, axis=-1), 1.0)
    assert ((fb.a >= 0) & (fb.a <= 1)).all()
    assert ((fb.phi >= 0) & (fb.phi < 2 * np.pi)).all()

    exact = build_feedback(FeedbackConfig(b_cdi=None, b_pa=None), topo, draw)
    assert np.allclose(exact.a, 0.0)
    for k, cl in enumerate(topo.clusters):
        for s, i in enumerate(cl):
            direction = draw.h_hat[i, k] / np.linalg.norm(draw.h_hat[i, k])
            assert np.allclose(exact.q[k, s], direction)
