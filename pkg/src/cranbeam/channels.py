"""Small-scale fading, MMSE channel estimation under pilot reuse, and error statistics.

Two sampling paths exist on purpose: the default draws (estimate, error) pairs
directly from the derived distributions, while :func:`estimate_from_pilots`
simulates the actual training signal with explicit orthonormal pilot matrices
and applies the MMSE filter. The second is the validation oracle for the first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pilots import PilotAssignment
from .topology import Topology

__all__ = [
    "EstimationStats",
    "ChannelDraw",
    "noise_power_mw",
    "estimation_stats",
    "sample_channels",
    "estimate_from_pilots",
]


def noise_power_mw(bandwidth_hz: float = 20e6, density_dbm_hz: float = -174.0) -> float:
    """Thermal noise power in mW over the given bandwidth."""
    return 10.0 ** ((density_dbm_hz + 10.0 * np.log10(bandwidth_hz)) / 10.0)


def complex_normal(rng: np.random.Generator, var, shape) -> np.ndarray:
    """CN(0, var) samples: independent real/imaginary parts of variance var/2."""
    scale = np.sqrt(np.asarray(var, dtype=float) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@dataclass(frozen=True)
class EstimationStats:
    """Per-antenna variances of the channel estimate and of its error.

    ``omega + delta == alpha`` pairwise; ``sigma_hat2`` is the noise power
    divided by the pilot power, in the same linear-gain units as ``alpha``.
    """

    omega: np.ndarray
    delta: np.ndarray
    sigma_hat2: float


@dataclass
class ChannelDraw:
    """One realization of all channels and of the intra-cluster estimates.

    ``h`` holds true channels for every (RRH, UE) pair, shape (I, K, M).
    ``h_hat`` and ``e`` are only meaningful on intra-cluster pairs (zero
    elsewhere) and satisfy ``h = h_hat + e`` there.
    """

    h: np.ndarray
    h_hat: np.ndarray
    e: np.ndarray


def estimation_stats(
    topo: Topology,
    pa: PilotAssignment,
    p_t_mw: float,
    noise_mw: float,
    perfect: bool = False,
) -> EstimationStats:
    """MMSE estimation variances under the given pilot reuse pattern.

    For each pair, ``omega = alpha^2 / (S + sigma_hat2)`` and
    ``delta = alpha * (S - alpha + sigma_hat2) / (S + sigma_hat2)`` where S sums
    ``alpha`` over all RRHs sharing the pair's pilot (pilot contamination).
    ``perfect=True`` returns the error-free limit (omega = alpha, delta = 0).
    """
    if p_t_mw <= 0:
        raise ValueError("pilot power must be positive")
    alpha = topo.alpha
    if perfect:
        return EstimationStats(omega=alpha.copy(), delta=np.zeros_like(alpha), sigma_hat2=0.0)
    sigma_hat2 = noise_mw / p_t_mw
    contam = np.zeros_like(alpha)
    for members in pa.reuse_sets:
        members = list(members)
        contam[members, :] = alpha[members, :].sum(axis=0, keepdims=True)
    denom = contam + sigma_hat2
    omega = alpha**2 / denom
    delta = alpha * (contam - alpha + sigma_hat2) / denom
    return EstimationStats(omega=omega, delta=delta, sigma_hat2=sigma_hat2)


def sample_channels(
    topo: Topology, stats: EstimationStats, rng: np.random.Generator
) -> ChannelDraw:
    """Draw channels directly from the derived estimate/error distributions.

    Intra-cluster: ``h_hat ~ CN(0, omega I)`` and ``e ~ CN(0, delta I)``
    independently, ``h = h_hat + e``. Out-of-cluster: ``h ~ CN(0, alpha I)``.
    """
    I, K, M = topo.num_rrh, topo.num_ue, topo.antennas
    intra = topo.intra_mask()
    h_hat = complex_normal(rng, stats.omega[..., None], (I, K, M))
    e = complex_normal(rng, stats.delta[..., None], (I, K, M))
    h_out = complex_normal(rng, topo.alpha[..., None], (I, K, M))
    h_hat[~intra] = 0.0
    e[~intra] = 0.0
    h = np.where(intra[..., None], h_hat + e, h_out)
    return ChannelDraw(h=h, h_hat=h_hat, e=e)


def pilot_matrix(pa: PilotAssignment, rrh: int) -> np.ndarray:
    """Orthonormal (tau, M) pilot matrix of one RRH: identity-basis columns."""
    M = pa.antennas
    c = int(pa.color[rrh])
    X = np.zeros((pa.tau, M))
    X[c * M : (c + 1) * M, :] = np.eye(M)
    return X


def estimate_from_pilots(
    topo: Topology,
    pa: PilotAssignment,
    p_t_mw: float,
    noise_mw: float,
    rng: np.random.Generator,
) -> ChannelDraw:
    """Simulate the training phase explicitly and MMSE-estimate every intra pair.

    True channels are drawn CN(0, alpha I); every RRH transmits its pilot
    matrix at power ``p_t_mw`` per antenna; each UE's received block is passed
    through the MMSE filter. Statistically equivalent to
    :func:`sample_channels` (same omega/delta), but much slower.
    """
    I, K, M = topo.num_rrh, topo.num_ue, topo.antennas
    h = complex_normal(rng, topo.alpha[..., None], (I, K, M))
    stats = estimation_stats(topo, pa, p_t_mw, noise_mw)
    sigma_hat2 = stats.sigma_hat2

    # Received training signal per UE, as a column: sum_i sqrt(p_t) X_i h_{i,k} + n.
    # With identity-basis pilots the color-c segment collects the co-colored RRHs.
    y_seg = complex_normal(rng, noise_mw, (K, pa.num_colors, M))
    for i in range(I):
        y_seg[:, int(pa.color[i]), :] += np.sqrt(p_t_mw) * h[i]

    contam = np.zeros((I, K))
    for members in pa.reuse_sets:
        members = list(members)
        contam[members, :] = topo.alpha[members, :].sum(axis=0, keepdims=True)
    coef = topo.alpha / (contam + sigma_hat2)

    intra = topo.intra_mask()
    h_hat = np.zeros_like(h)
    for i in range(I):
        seg = y_seg[:, int(pa.color[i]), :] / np.sqrt(p_t_mw)  # X_i^H y / sqrt(p_t)
        h_hat[i] = coef[i][:, None] * seg
    h_hat[~intra] = 0.0
    e = np.where(intra[..., None], h - h_hat, 0.0)
    return ChannelDraw(h=h, h_hat=h_hat, e=e)
