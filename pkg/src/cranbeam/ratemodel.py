"""SINR, net achievable rate, and constraint residual evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .statistics import StatSet

__all__ = [
    "RateConfig",
    "BeamSet",
    "ConstraintReport",
    "smooth_indicator",
    "smooth_indicator_slope",
    "sinr",
    "all_sinr",
    "net_rate",
    "constraint_residuals",
]


def smooth_indicator(x, theta: float):
    """Concave surrogate x/(x+theta) of the is-nonzero indicator."""
    x = np.asarray(x, dtype=float)
    return x / (x + theta)


def smooth_indicator_slope(x, theta: float):
    """Derivative theta/(x+theta)^2 of the smooth indicator."""
    x = np.asarray(x, dtype=float)
    return theta / (x + theta) ** 2


@dataclass(frozen=True)
class RateConfig:
    """Frame structure, per-UE rate targets and per-RRH resource limits.

    ``r_min`` (K,) in bit/s/Hz, ``c_max`` (I,) in bit/s/Hz, ``p_max`` (I,) in mW.
    The SINR target equivalent of a rate target after training overhead is
    ``eta_min = 2^(T/(T-tau) * r_min) - 1``.
    """

    frame_slots: int
    train_slots: int
    r_min: np.ndarray
    c_max: np.ndarray
    p_max: np.ndarray

    def __post_init__(self):
        if not 0 <= self.train_slots < self.frame_slots:
            raise ValueError("need 0 <= tau < T")
        if (np.asarray(self.r_min) <= 0).any():
            raise ValueError("rate targets must be positive")

    @property
    def overhead(self) -> float:
        return (self.frame_slots - self.train_slots) / self.frame_slots

    @property
    def eta_min(self) -> np.ndarray:
        return 2.0 ** (np.asarray(self.r_min) / self.overhead) - 1.0


@dataclass
class BeamSet:
    """Stacked beamformers of the admitted UEs.

    ``ues`` are global UE indices (ascending); row k of ``w`` is the
    length-``M*L`` stack of that UE's per-RRH beams in its cluster order.
    """

    ues: tuple
    w: np.ndarray
    clusters: tuple
    antennas: int

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=complex)
        if self.w.ndim != 2 or self.w.shape[0] != len(self.ues):
            raise ValueError("w must be (len(ues), M*L)")

    @property
    def cluster_size(self) -> int:
        return self.w.shape[1] // self.antennas if len(self.ues) else len(self.clusters[0])

    def copy(self) -> "BeamSet":
        return BeamSet(self.ues, self.w.copy(), self.clusters, self.antennas)

    def slice_powers(self) -> np.ndarray:
        """Per (admitted UE, cluster slot) transmit power ||w_{i,k}||^2, (n, L)."""
        n = len(self.ues)
        L = self.cluster_size
        return (np.abs(self.w) ** 2).reshape(n, L, self.antennas).sum(axis=2)

    def cluster_index(self) -> np.ndarray:
        """(n, L) array of the RRH serving each slot."""
        if not self.ues:
            return np.zeros((0, self.cluster_size), dtype=int)
        return np.array([list(self.clusters[k]) for k in self.ues], dtype=int)

    def rrh_powers(self, num_rrh: int) -> np.ndarray:
        out = np.zeros(num_rrh)
        if len(self.ues):
            np.add.at(out, self.cluster_index(), self.slice_powers())
        return out

    def total_power(self) -> float:
        return float((np.abs(self.w) ** 2).sum())


def _ue_row(beams: BeamSet, k: int) -> int:
    try:
        return beams.ues.index(k)
    except ValueError:
        raise KeyError(f"UE {k} not in beam set") from None


def all_sinr(beams: BeamSet, stats: StatSet) -> np.ndarray:
    """SINR of every admitted UE under the given statistics."""
    n = len(beams.ues)
    if n == 0:
        return np.zeros(0)
    idx = list(beams.ues)
    w = beams.w
    a_kk = stats.a_kk[idx]
    sig = np.einsum("ki,kij,kj->k", w.conj(), a_kk, w).real
    resid = (stats.e_diag[idx] * np.abs(w) ** 2).sum(axis=1)
    ac = stats.a_cross[np.ix_(idx, idx)]
    cross = np.einsum("lkij,li,lj->lk", ac, w.conj(), w).real
    inter = cross.sum(axis=0)
    return sig / (resid + inter + stats.noise_mw)


def sinr(beams: BeamSet, stats: StatSet, k: int) -> float:
    """SINR of UE k: desired quadratic over residual + interference + noise."""
    return float(all_sinr(beams, stats)[_ue_row(beams, k)])


def net_rate(beams: BeamSet, stats: StatSet, cfg: RateConfig, k: int) -> float:
    """Net achievable rate (T-tau)/T * log2(1 + SINR_k) in bit/s/Hz."""
    return float(cfg.overhead * np.log2(1.0 + sinr(beams, stats, k)))


def all_net_rates(beams: BeamSet, stats: StatSet, cfg: RateConfig) -> np.ndarray:
    return cfg.overhead * np.log2(1.0 + all_sinr(beams, stats))


@dataclass
class ConstraintReport:
    """Per-constraint margins; positive margin means satisfied."""

    power_margin: np.ndarray          # (I,) p_max - sum ||w_{i,k}||^2
    fronthaul_exact: np.ndarray       # (I,) indicator load, bit/s/Hz
    fronthaul_smooth: np.ndarray      # (I,) smoothed load
    fronthaul_margin: np.ndarray      # (I,) c_max - exact load
    sinr_margin: np.ndarray           # (n,) SINR - eta_min
    ues: tuple

    def rows(self):
        """CSV-style (ue, rrh, constraint, margin) rows."""
        out = []
        for i, m in enumerate(self.power_margin):
            out.append(("", i, "power", float(m)))
        for i, m in enumerate(self.fronthaul_margin):
            out.append(("", i, "fronthaul", float(m)))
        for k, m in zip(self.ues, self.sinr_margin):
            out.append((k, "", "sinr", float(m)))
        return out


def constraint_residuals(
    beams: BeamSet,
    stats: StatSet,
    cfg: RateConfig,
    theta: float,
    tol_zero_mw: float = 1e-9,
) -> ConstraintReport:
    """Evaluate power, exact and smoothed fronthaul, and SINR margins.

    The exact fronthaul load counts a UE's full rate target whenever its slice
    power exceeds ``tol_zero_mw``; the smoothed load uses x/(x+theta) and never
    exceeds the exact one.
    """
    num_rrh = len(cfg.p_max)
    power = beams.rrh_powers(num_rrh)
    exact = np.zeros(num_rrh)
    smooth = np.zeros(num_rrh)
    if len(beams.ues):
        sp = beams.slice_powers()
        cl = beams.cluster_index()
        r = np.asarray(cfg.r_min)[list(beams.ues)][:, None]
        np.add.at(exact, cl, (sp > tol_zero_mw) * r)
        np.add.at(smooth, cl, smooth_indicator(sp, theta) * r)
    sinr_vals = all_sinr(beams, stats)
    eta = cfg.eta_min[list(beams.ues)] if len(beams.ues) else np.zeros(0)
    return ConstraintReport(
        power_margin=np.asarray(cfg.p_max) - power,
        fronthaul_exact=exact,
        fronthaul_smooth=smooth,
        fronthaul_margin=np.asarray(cfg.c_max) - exact,
        sinr_margin=sinr_vals - eta,
        ues=beams.ues,
    )
