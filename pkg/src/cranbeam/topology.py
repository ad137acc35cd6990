"""Random UD-CRAN deployments: positions, large-scale gains, user-centric clusters."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

__all__ = ["NetworkConfig", "Topology", "generate", "pathloss_db"]


@dataclass(frozen=True)
class NetworkConfig:
    """Deployment parameters of a square service area.

    Distances are meters, powers are milliwatts throughout the package.
    The path-loss model is ``PL(d) = intercept + slope * log10(d_km)`` in dB
    with log-normal shadowing on top.
    """

    area_side_m: float = 400.0
    num_rrh: int = 14
    num_ue: int = 8
    antennas: int = 2
    cluster_size: int = 3
    pathloss_intercept_db: float = 148.1
    pathloss_slope_db: float = 37.6
    shadow_std_db: float = 8.0
    min_dist_m: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.num_rrh < 1 or self.num_ue < 1:
            raise ValueError("need at least one RRH and one UE")
        if not 1 <= self.cluster_size <= self.num_rrh:
            raise ValueError("cluster_size must be in [1, num_rrh]")
        if self.antennas < 2:
            # M - 1 appears in denominators of the quantization statistics
            raise ValueError("antennas must be >= 2")
        if self.area_side_m <= 0 or self.min_dist_m < 0:
            raise ValueError("area_side_m must be positive")


@dataclass(frozen=True)
class Topology:
    """A realized deployment.

    Attributes
    ----------
    rrh_pos, ue_pos : ndarray
        Planar coordinates in meters, shapes (I, 2) and (K, 2).
    alpha : ndarray
        Large-scale channel gains (linear power ratio), shape (I, K).
    clusters : tuple of tuples
        Per UE, the serving candidate RRH indices ordered nearest first.
    served : tuple of tuples
        Per RRH, the UEs whose cluster contains it (ascending).
    """

    rrh_pos: np.ndarray
    ue_pos: np.ndarray
    alpha: np.ndarray
    clusters: tuple
    served: tuple
    antennas: int

    @property
    def num_rrh(self) -> int:
        return self.rrh_pos.shape[0]

    @property
    def num_ue(self) -> int:
        return self.ue_pos.shape[0]

    @property
    def cluster_size(self) -> int:
        return len(self.clusters[0])

    def intra_mask(self) -> np.ndarray:
        """Boolean (I, K) mask of intra-cluster pairs."""
        mask = np.zeros((self.num_rrh, self.num_ue), dtype=bool)
        for k, cl in enumerate(self.clusters):
            mask[list(cl), k] = True
        return mask

    def to_json(self) -> str:
        doc = {
            "rrh_pos": self.rrh_pos.tolist(),
            "ue_pos": self.ue_pos.tolist(),
            "alpha": self.alpha.tolist(),
            "clusters": [list(c) for c in self.clusters],
            "antennas": self.antennas,
        }
        return json.dumps(doc)

    @staticmethod
    def from_json(text: str) -> "Topology":
        doc = json.loads(text)
        clusters = tuple(tuple(c) for c in doc["clusters"])
        num_rrh = len(doc["rrh_pos"])
        return Topology(
            rrh_pos=np.asarray(doc["rrh_pos"], dtype=float),
            ue_pos=np.asarray(doc["ue_pos"], dtype=float),
            alpha=np.asarray(doc["alpha"], dtype=float),
            clusters=clusters,
            served=_served_from_clusters(clusters, num_rrh),
            antennas=int(doc["antennas"]),
        )


def pathloss_db(dist_km, intercept_db: float = 148.1, slope_db: float = 37.6):
    """Distance-dependent path loss in dB; ``dist_km`` is in kilometers."""
    return intercept_db + slope_db * np.log10(dist_km)


def _served_from_clusters(clusters, num_rrh) -> tuple:
    served = [[] for _ in range(num_rrh)]
    for k, cl in enumerate(clusters):
        for i in cl:
            served[i].append(k)
    return tuple(tuple(s) for s in served)


def generate(cfg: NetworkConfig) -> Topology:
    """Draw a deployment: uniform positions, shadowed path-loss gains, nearest clusters.

    Gains are ``alpha = 10^-((PL(d) + S)/10)`` with ``S ~ N(0, shadow_std_db^2)``
    and the distance floored at ``cfg.min_dist_m``. Each UE's cluster is its
    ``cluster_size`` nearest RRHs, ties broken by RRH index, kept in distance order.
    """
    rng = np.random.default_rng(cfg.seed)
    rrh_pos = rng.uniform(0.0, cfg.area_side_m, size=(cfg.num_rrh, 2))
    ue_pos = rng.uniform(0.0, cfg.area_side_m, size=(cfg.num_ue, 2))

    dist_m = np.linalg.norm(rrh_pos[:, None, :] - ue_pos[None, :, :], axis=-1)
    dist_m = np.maximum(dist_m, cfg.min_dist_m)
    pl_db = pathloss_db(dist_m / 1000.0, cfg.pathloss_intercept_db, cfg.pathloss_slope_db)
    shadow_db = rng.normal(0.0, cfg.shadow_std_db, size=dist_m.shape)
    alpha = 10.0 ** (-(pl_db + shadow_db) / 10.0)

    clusters = []
    rrh_idx = np.arange(cfg.num_rrh)
    for k in range(cfg.num_ue):
        order = np.lexsort((rrh_idx, dist_m[:, k]))
        clusters.append(tuple(int(i) for i in order[: cfg.cluster_size]))
    clusters = tuple(clusters)

    return Topology(
        rrh_pos=rrh_pos,
        ue_pos=ue_pos,
        alpha=alpha,
        clusters=clusters,
        served=_served_from_clusters(clusters, cfg.num_rrh),
        antennas=cfg.antennas,
    )
