"""Per-RRH limited feedback: RVQ codebook quantization of the channel direction
plus uniform scalar quantization of the co-phasing angle.

Bit budgets of ``None`` mean unquantized feedback of that quantity (used for
perfect-CSI reference runs); ``b_pa = 0`` means the angle is not fed back at
all, which the statistics module treats as a uniformly unknown phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channels import ChannelDraw, complex_normal
from .topology import Topology

__all__ = [
    "FeedbackConfig",
    "FeedbackState",
    "DegenerateChannel",
    "generate_codebooks",
    "quantize_cdi",
    "quantize_pa",
    "build_feedback",
    "mc_quantization_constants",
]

TWO_PI = 2.0 * np.pi


class DegenerateChannel(ValueError):
    """Raised when a zero-norm estimate leaves no direction to quantize."""


@dataclass(frozen=True)
class FeedbackConfig:
    """Bit budgets shared by all (RRH, UE) pairs.

    ``b_cdi``: bits per codeword for the channel direction (None = exact).
    ``b_pa``: bits for the co-phasing angle (0 = not fed back, None = exact).
    """

    b_cdi: "int | None" = 4
    b_pa: "int | None" = 2
    codebook_seed: int = 0

    def __post_init__(self):
        if self.b_cdi is not None and self.b_cdi < 1:
            raise ValueError("b_cdi must be >= 1 (or None for exact feedback)")
        if self.b_pa is not None and self.b_pa < 0:
            raise ValueError("b_pa must be >= 0 (or None for exact feedback)")


@dataclass
class FeedbackState:
    """What the central processor knows after feedback, for intra-cluster pairs.

    Arrays are indexed (K, L, ...) following each UE's cluster order.
    ``q`` are unit-norm codewords, ``a`` the realized direction quantization
    errors ``1 - |h_tilde^H q|^2``, ``phi``/``phi_hat`` the true and quantized
    co-phasing angles in [0, 2pi).
    """

    q: np.ndarray
    a: np.ndarray
    phi: np.ndarray
    phi_hat: np.ndarray
    b_cdi: "int | None"
    b_pa: "int | None"


def generate_codebooks(
    cfg: FeedbackConfig, topo: Topology, rng: "np.random.Generator | None" = None
) -> "np.ndarray | None":
    """Independent isotropic unit-vector codebooks, one per intra-cluster pair.

    Returns an array of shape (K, L, 2^b_cdi, M), or None when ``b_cdi`` is
    None (exact direction feedback needs no codebook). Reproducible from
    ``cfg.codebook_seed`` when no generator is passed.
    """
    if cfg.b_cdi is None:
        return None
    if rng is None:
        rng = np.random.default_rng(cfg.codebook_seed)
    K, L, M = topo.num_ue, topo.cluster_size, topo.antennas
    n = 2**cfg.b_cdi
    cb = complex_normal(rng, 1.0, (K, L, n, M))
    cb /= np.linalg.norm(cb, axis=-1, keepdims=True)
    return cb


def quantize_cdi(h_hat: np.ndarray, codebook: np.ndarray):
    """Pick the codeword best aligned with the estimate's direction.

    Returns ``(q, a, phi)`` with ``q`` the argmax of ``|h_tilde^H c|`` over the
    codebook (ties to the lowest index), ``a = 1 - |h_tilde^H q|^2`` and
    ``phi = arg(q^H h_tilde)`` wrapped to [0, 2pi), so that
    ``h_tilde = sqrt(1-a) e^{j phi} q + sqrt(a) u`` with ``u`` a unit vector
    orthogonal to ``q``.
    """
    norm = np.linalg.norm(h_hat)
    if norm == 0.0:
        raise DegenerateChannel("zero-norm channel estimate")
    h_tilde = h_hat / norm
    proj = codebook.conj() @ h_tilde  # entries q_n^H h_tilde
    best = int(np.argmax(np.abs(proj)))
    q = codebook[best]
    a = float(np.clip(1.0 - np.abs(proj[best]) ** 2, 0.0, 1.0))
    phi = float(np.angle(proj[best]) % TWO_PI)
    return q, a, phi


def quantize_pa(phi: float, b_pa: "int | None") -> float:
    """Uniform scalar quantization of an angle in [0, 2pi) to its cell center.

    ``b_pa = 0`` returns 0.0 (nothing fed back); ``b_pa = None`` returns the
    angle itself. Otherwise the error lies in [-pi/2^b, pi/2^b].
    """
    if b_pa is None:
        return float(phi)
    if b_pa == 0:
        return 0.0
    width = TWO_PI / 2**b_pa
    cell = np.floor(np.asarray(phi) / width)
    return float((cell + 0.5) * width)


def build_feedback(
    cfg: FeedbackConfig,
    topo: Topology,
    draw: ChannelDraw,
    codebooks: "np.ndarray | None" = None,
) -> FeedbackState:
    """Quantize every intra-cluster estimate of one channel draw."""
    if codebooks is None:
        codebooks = generate_codebooks(cfg, topo)
    K, L, M = topo.num_ue, topo.cluster_size, topo.antennas
    q = np.zeros((K, L, M), dtype=complex)
    a = np.zeros((K, L))
    phi = np.zeros((K, L))
    phi_hat = np.zeros((K, L))
    for k, cl in enumerate(topo.clusters):
        for s, i in enumerate(cl):
            h_hat = draw.h_hat[i, k]
            if cfg.b_cdi is None:
                norm = np.linalg.norm(h_hat)
                if norm == 0.0:
                    raise DegenerateChannel("zero-norm channel estimate")
                q[k, s] = h_hat / norm
                a[k, s] = 0.0
                phi[k, s] = 0.0
            else:
                q[k, s], a[k, s], phi[k, s] = quantize_cdi(h_hat, codebooks[k, s])
            phi_hat[k, s] = quantize_pa(phi[k, s], cfg.b_pa)
    return FeedbackState(q=q, a=a, phi=phi, phi_hat=phi_hat, b_cdi=cfg.b_cdi, b_pa=cfg.b_pa)


def mc_quantization_constants(
    M: int,
    b_cdi: int,
    n_draws: int,
    rng: np.random.Generator,
    chunk: int = 50_000,
):
    """Monte Carlo over explicit random codebooks: mean of ``a`` and of ``sqrt(1-a)``.

    Draws isotropic directions and fresh 2^b_cdi codebooks per draw, runs the
    actual argmax selection, and averages the realized quantization error.
    Oracle for the closed-form constants of the statistics module.
    """
    n_cw = 2**b_cdi
    sum_a = 0.0
    sum_align = 0.0
    done = 0
    while done < n_draws:
        m = min(chunk, n_draws - done)
        h = complex_normal(rng, 1.0, (m, M))
        h /= np.linalg.norm(h, axis=-1, keepdims=True)
        cb = complex_normal(rng, 1.0, (m, n_cw, M))
        cb /= np.linalg.norm(cb, axis=-1, keepdims=True)
        gain = np.abs(np.einsum("mnj,mj->mn", cb.conj(), h)) ** 2
        best = gain.max(axis=1)
        sum_a += float((1.0 - best).sum())
        sum_align += float(np.sqrt(best).sum())
        done += m
    return sum_a / n_draws, sum_align / n_draws
