"""Closed-form conditional channel statistics under a selectable belief model.

Given the realized feedback (codewords and quantized co-phasing angles), the
central processor models each intra-cluster estimate as

    h_hat = ||h_hat|| (sqrt(1-a) e^{j phi} q + sqrt(a) u),

with the norm, the quantization error ``a``, the residual direction ``u`` and
the in-cell angle error unknown. Averaging over those unknowns gives, per
pair, a second-moment matrix and a mean vector from which every matrix needed
by the rate model assembles:

* desired-signal matrix: mean-vector outer product with per-pair second
  moments on the diagonal blocks,
* interference matrices: the same, with estimation-error and out-of-cluster
  terms (``delta I`` / ``alpha I``) on the diagonal blocks and zero cross
  blocks for pairs the victim has no feedback about,
* error covariance: block-diagonal ``delta I``.

The mis-specified beliefs of the baseline designs drop or idealize individual
ingredients; the conditional Monte Carlo sampler at the bottom is the
independent oracle the closed forms are validated against.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import mpmath as mp
from scipy import special

from .channels import EstimationStats, complex_normal, noise_power_mw
from .feedback import FeedbackState, TWO_PI
from .topology import Topology

__all__ = [
    "BeliefModel",
    "LemmaConstants",
    "StatSet",
    "mean_cdi_error",
    "pa_coherence",
    "mean_estimate_norm",
    "mean_cdi_alignment",
    "lemma_constants",
    "desired_matrix",
    "interference_matrix",
    "build_statset",
    "mc_desired_matrix",
    "mc_interference_matrix",
]


class BeliefModel(enum.Enum):
    """Which uncertainties the beamforming design accounts for."""

    FULL_ROBUST = "full_robust"        # estimation + direction + angle quantization
    QUANT_ONLY = "quant_only"          # quantization only; estimation error ignored
    ESTIM_ONLY = "estim_only"          # estimation error only; feedback treated exact
    CDI_ONLY = "cdi_only"              # no angle feedback used; rest fully robust
    NON_ROBUST = "non_robust"          # all feedback treated exact, no estimation error

    @property
    def uses_quantization_stats(self) -> bool:
        return self in (BeliefModel.FULL_ROBUST, BeliefModel.QUANT_ONLY, BeliefModel.CDI_ONLY)

    @property
    def uses_estimation_error(self) -> bool:
        return self in (BeliefModel.FULL_ROBUST, BeliefModel.ESTIM_ONLY, BeliefModel.CDI_ONLY)


def mean_cdi_error(b_cdi: "int | None", M: int) -> float:
    """Mean direction quantization error E{a} of a 2^b random codebook."""
    if b_cdi is None:
        return 0.0
    n = 2.0**b_cdi
    return float(n * np.exp(special.betaln(n, M / (M - 1.0))))


def pa_coherence(b_pa: "int | None") -> float:
    """|E{e^{j error}}| of a b-bit uniform angle quantizer: (2^b/pi) sin(pi/2^b).

    0 bits means the angle is unknown on the whole circle, so the coherence is
    exactly zero; None means the angle is fed back unquantized.
    """
    if b_pa is None:
        return 1.0
    n = 2.0**b_pa
    return float(n / np.pi * np.sin(np.pi / n))


def mean_estimate_norm(omega, M: int):
    """E{||h_hat||} for h_hat ~ CN(0, omega I_M): sqrt(omega) Gamma(M+1/2)/Gamma(M)."""
    ratio = np.exp(special.gammaln(M + 0.5) - special.gammaln(M))
    return np.sqrt(np.asarray(omega, dtype=float)) * ratio


@lru_cache(maxsize=None)
def mean_cdi_alignment(b_cdi: "int | None", M: int) -> float:
    """Mean alignment E{sqrt(1-a)}: alternating binomial-beta sum.

    The sum cancels catastrophically in float64 once 2^b(M-1) is large, so it
    is evaluated in arbitrary precision sized to the largest binomial term.
    """
    if b_cdi is None:
        return 1.0
    n = 2**b_cdi
    dps = 30 + int(0.302 * n * (M - 1))
    with mp.workdps(dps):
        total = mp.mpf(0)
        for m in range(1, n + 1):
            total += (
                mp.binomial(n, m)
                * (-1) ** (m + 1)
                * m * (M - 1)
                * mp.beta(m * (M - 1), mp.mpf(3) / 2)
            )
        return float(total)


@dataclass(frozen=True)
class LemmaConstants:
    """Per intra-cluster pair constants, arranged (K, L) in cluster order.

    rho: mean direction quantization error; xi: angle-feedback coherence;
    varsigma: mean estimate norm; omega_bar: mean alignment E{sqrt(1-a)};
    null_proj: (I - qq^H)/(M-1), the residual-direction covariance.
    """

    rho: np.ndarray
    xi: np.ndarray
    varsigma: np.ndarray
    omega_bar: np.ndarray
    null_proj: np.ndarray


def lemma_constants(omega, b_cdi, b_pa, q, M: int) -> LemmaConstants:
    """Evaluate the closed-form constants for given variances and codewords.

    ``omega`` and ``q`` are (K, L) and (K, L, M) arrays in cluster order.
    """
    if M < 2:
        raise ValueError("constants need M >= 2")
    omega = np.asarray(omega, dtype=float)
    rho = np.full(omega.shape, mean_cdi_error(b_cdi, M))
    xi = np.full(omega.shape, pa_coherence(b_pa))
    varsigma = mean_estimate_norm(omega, M)
    omega_bar = np.full(omega.shape, mean_cdi_alignment(b_cdi, M))
    eye = np.eye(M)
    null_proj = (eye[None, None] - q[..., :, None] * q.conj()[..., None, :]) / (M - 1)
    return LemmaConstants(rho=rho, xi=xi, varsigma=varsigma, omega_bar=omega_bar,
                          null_proj=null_proj)


@dataclass(frozen=True)
class StatSet:
    """All second-order matrices needed to evaluate rates of a UE set.

    a_kk[k]      : desired-signal second moment, (D, D) with D = M*L.
    e_diag[k]    : diagonal of the error covariance (block-diagonal delta I).
    a_cross[l,k] : second moment of UE l's serving channels seen by UE k
                   (interference matrix; the [k, k] slot is unused and zero).
    """

    belief: BeliefModel
    a_kk: np.ndarray
    e_diag: np.ndarray
    a_cross: np.ndarray
    clusters: tuple
    antennas: int
    noise_mw: float
    believed_dir: np.ndarray = None  # (K, L, M) unit beam directions the design believes in

    @property
    def num_ue(self) -> int:
        return self.a_kk.shape[0]

    @property
    def dim(self) -> int:
        return self.a_kk.shape[1]

    def e_kk(self, k: int) -> np.ndarray:
        return np.diag(self.e_diag[k]).astype(complex)

    def validate(self, herm_tol: float = 1e-12, psd_tol: float = -1e-10) -> None:
        """Assert every matrix is Hermitian and PSD within tolerance."""
        mats = [self.a_kk[k] for k in range(self.num_ue)]
        for l in range(self.num_ue):
            for k in range(self.num_ue):
                if l != k:
                    mats.append(self.a_cross[l, k])
        scale = max(float(np.abs(self.a_kk).max()), 1e-300)
        for m in mats:
            herm = np.abs(m - m.conj().T).max()
            if herm > herm_tol * max(scale, 1.0) and herm > herm_tol * scale:
                raise AssertionError(f"matrix not Hermitian: deviation {herm:.2e}")
            w = np.linalg.eigvalsh((m + m.conj().T) / 2)
            if w.min() < psd_tol * scale:
                raise AssertionError(f"matrix not PSD: min eigenvalue {w.min():.2e}")
        if (self.e_diag < 0).any():
            raise AssertionError("negative error variance")


def _pair_moments(belief: BeliefModel, fb: FeedbackState, est: EstimationStats,
                  topo: Topology):
    """Per intra pair (K, L): second-moment blocks, mean vectors, effective delta."""
    M = topo.antennas
    K, L = topo.num_ue, topo.cluster_size
    cl_idx = np.array([list(c) for c in topo.clusters])  # (K, L)
    ue_idx = np.arange(K)[:, None]
    omega = est.omega[cl_idx, ue_idx]  # (K, L)
    delta = est.delta[cl_idx, ue_idx]

    consts = lemma_constants(omega, fb.b_cdi, fb.b_pa, fb.q, M)
    xi = consts.xi if belief is not BeliefModel.CDI_ONLY else np.zeros_like(consts.xi)

    qq = fb.q[..., :, None] * fb.q.conj()[..., None, :]  # (K, L, M, M)
    phase = np.exp(1j * fb.phi_hat)
    if belief.uses_quantization_stats:
        p2 = (omega * M)[..., None, None] * (
            (1.0 - consts.rho)[..., None, None] * qq
            + consts.rho[..., None, None] * consts.null_proj
        )
        mean = (consts.varsigma * consts.omega_bar * xi * phase)[..., None] * fb.q
    else:
        mean = (consts.varsigma * phase)[..., None] * fb.q
        p2 = mean[..., :, None] * mean.conj()[..., None, :]

    delta_eff = delta if belief.uses_estimation_error else np.zeros_like(delta)
    return p2, mean, delta_eff


def desired_matrix(belief: BeliefModel, fb: FeedbackState, est: EstimationStats,
                   topo: Topology, k: int) -> np.ndarray:
    """Second moment of UE k's stacked serving-channel estimate, (D, D)."""
    p2, mean, _ = _pair_moments(belief, fb, est, topo)
    M, L = topo.antennas, topo.cluster_size
    stacked = mean[k].reshape(L * M)
    out = stacked[:, None] * stacked.conj()[None, :]
    for s in range(L):
        out[s * M:(s + 1) * M, s * M:(s + 1) * M] = p2[k, s]
    return out


def interference_matrix(belief: BeliefModel, fb: FeedbackState, est: EstimationStats,
                        topo: Topology, l: int, k: int) -> np.ndarray:
    """Second moment of UE l's serving channels as seen by UE k, (D, D).

    Diagonal blocks: in-cluster RRHs of UE k get the conditional second moment
    plus ``delta I``; RRHs outside its cluster only contribute their
    large-scale gain ``alpha I``. Cross blocks survive only between two
    distinct RRHs that are both inside UE k's cluster; any block touching an
    out-of-cluster RRH averages to zero.
    """
    if l == k:
        raise ValueError("interference matrix requires l != k")
    p2, mean, delta_eff = _pair_moments(belief, fb, est, topo)
    M, L = topo.antennas, topo.cluster_size
    slot_of = {i: s for s, i in enumerate(topo.clusters[k])}
    stacked = np.zeros(L * M, dtype=complex)
    blocks = np.zeros((L, M, M), dtype=complex)
    for s, rrh in enumerate(topo.clusters[l]):
        if rrh in slot_of:
            sk = slot_of[rrh]
            stacked[s * M:(s + 1) * M] = mean[k, sk]
            blocks[s] = p2[k, sk] + delta_eff[k, sk] * np.eye(M)
        else:
            blocks[s] = topo.alpha[rrh, k] * np.eye(M)
    out = stacked[:, None] * stacked.conj()[None, :]
    for s in range(L):
        out[s * M:(s + 1) * M, s * M:(s + 1) * M] = blocks[s]
    return out


def build_statset(belief: BeliefModel, fb: FeedbackState, est: EstimationStats,
                  topo: Topology, noise_mw: float = noise_power_mw()) -> StatSet:
    """Assemble every matrix of the rate model under one belief."""
    M, L, K = topo.antennas, topo.cluster_size, topo.num_ue
    D = M * L
    p2, mean, delta_eff = _pair_moments(belief, fb, est, topo)

    stacked = mean.reshape(K, D)
    a_kk = stacked[:, :, None] * stacked.conj()[:, None, :]
    for s in range(L):
        a_kk[:, s * M:(s + 1) * M, s * M:(s + 1) * M] = p2[:, s]

    e_diag = np.repeat(delta_eff, M, axis=1)  # (K, D)

    a_cross = np.zeros((K, K, D, D), dtype=complex)
    eye = np.eye(M)
    slot_of = [{i: s for s, i in enumerate(cl)} for cl in topo.clusters]
    for l in range(K):
        for k in range(K):
            if l == k:
                continue
            stacked_lk = np.zeros(D, dtype=complex)
            for s, rrh in enumerate(topo.clusters[l]):
                if rrh in slot_of[k]:
                    stacked_lk[s * M:(s + 1) * M] = mean[k, slot_of[k][rrh]]
            out = stacked_lk[:, None] * stacked_lk.conj()[None, :]
            for s, rrh in enumerate(topo.clusters[l]):
                blk = slice(s * M, (s + 1) * M)
                if rrh in slot_of[k]:
                    sk = slot_of[k][rrh]
                    out[blk, blk] = p2[k, sk] + delta_eff[k, sk] * eye
                else:
                    out[blk, blk] = topo.alpha[rrh, k] * eye
            a_cross[l, k] = out

    # co-phasing directions available to the design (no angle info: plain q)
    if belief is BeliefModel.CDI_ONLY:
        believed_dir = fb.q.copy()
    else:
        believed_dir = np.exp(1j * fb.phi_hat)[..., None] * fb.q

    return StatSet(belief=belief, a_kk=a_kk, e_diag=e_diag, a_cross=a_cross,
                   clusters=topo.clusters, antennas=M, noise_mw=noise_mw,
                   believed_dir=believed_dir)


# ---------------------------------------------------------------------------
# Conditional Monte Carlo oracle
# ---------------------------------------------------------------------------

def _sample_intra_estimates(fb: FeedbackState, est: EstimationStats, topo: Topology,
                            k: int, rrhs, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw UE k's estimates for the given in-cluster RRHs, conditioned on feedback.

    Implements the decomposition directly: scaled-chi norm, error ``a`` as the
    minimum of 2^b Beta(M-1, 1) draws (inverse-CDF sampling), isotropic unit
    residual in the codeword's nullspace, uniform in-cell angle error.
    Returns (n, len(rrhs), M).
    """
    M = topo.antennas
    slot_of = {i: s for s, i in enumerate(topo.clusters[k])}
    out = np.empty((n, len(rrhs), M), dtype=complex)
    for j, rrh in enumerate(rrhs):
        s = slot_of[rrh]
        omega = est.omega[rrh, k]
        q = fb.q[k, s]
        norm = np.sqrt(rng.chisquare(2 * M, size=n) * omega / 2.0)
        if fb.b_cdi is None:
            a = np.zeros(n)
        else:
            u01 = rng.random((n, 2**fb.b_cdi))
            a = (u01 ** (1.0 / (M - 1))).min(axis=1)
        g = complex_normal(rng, 1.0, (n, M))
        g -= (g @ q.conj())[:, None] * q[None, :]
        u = g / np.linalg.norm(g, axis=1, keepdims=True)
        if fb.b_pa is None:
            tilt = np.zeros(n)
        else:
            half = np.pi / 2**fb.b_pa
            tilt = rng.uniform(-half, half, size=n)
        phase = np.exp(1j * (fb.phi_hat[k, s] + tilt))
        out[:, j, :] = norm[:, None] * (
            np.sqrt(1.0 - a)[:, None] * phase[:, None] * q[None, :]
            + np.sqrt(a)[:, None] * u
        )
    return out


def _mean_outer(samples: np.ndarray) -> np.ndarray:
    n, D = samples.shape
    return np.einsum("ni,nj->ij", samples, samples.conj()) / n


def mc_desired_matrix(fb: FeedbackState, est: EstimationStats, topo: Topology,
                      k: int, n_draws: int, rng: np.random.Generator,
                      chunk: int = 200_000) -> np.ndarray:
    """Monte Carlo estimate of the desired-signal matrix of UE k."""
    M, L = topo.antennas, topo.cluster_size
    D = M * L
    acc = np.zeros((D, D), dtype=complex)
    done = 0
    while done < n_draws:
        m = min(chunk, n_draws - done)
        smp = _sample_intra_estimates(fb, est, topo, k, topo.clusters[k], m, rng)
        acc += _mean_outer(smp.reshape(m, D)) * m
        done += m
    return acc / n_draws


def mc_interference_matrix(fb: FeedbackState, est: EstimationStats, topo: Topology,
                           l: int, k: int, n_draws: int, rng: np.random.Generator,
                           chunk: int = 200_000) -> np.ndarray:
    """Monte Carlo estimate of the interference matrix A_{l,k}.

    In-cluster channels are the conditional estimates plus an independent
    CN(0, delta I) estimation error; out-of-cluster channels are CN(0, alpha I).
    """
    M, L = topo.antennas, topo.cluster_size
    D = M * L
    in_k = set(topo.clusters[k])
    acc = np.zeros((D, D), dtype=complex)
    done = 0
    while done < n_draws:
        m = min(chunk, n_draws - done)
        h = np.empty((m, L, M), dtype=complex)
        shared = [rrh for rrh in topo.clusters[l] if rrh in in_k]
        smp = _sample_intra_estimates(fb, est, topo, k, shared, m, rng) if shared else None
        j = 0
        for s, rrh in enumerate(topo.clusters[l]):
            if rrh in in_k:
                err = complex_normal(rng, est.delta[rrh, k], (m, M))
                h[:, s, :] = smp[:, j, :] + err
                j += 1
            else:
                h[:, s, :] = complex_normal(rng, topo.alpha[rrh, k], (m, M))
        acc += _mean_outer(h.reshape(m, D)) * m
        done += m
    return acc / n_draws
