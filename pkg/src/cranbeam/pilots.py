"""Pilot allocation: RRH conflict graph and capacity-limited DSatur coloring."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .topology import Topology

__all__ = ["ConflictGraph", "PilotAssignment", "build_conflict_graph", "dsatur_color"]


@dataclass(frozen=True)
class ConflictGraph:
    """Undirected graph on RRHs; an edge means the two RRHs co-serve some UE."""

    num_vertices: int
    edges: frozenset

    def neighbors(self, v: int) -> set:
        out = set()
        for (a, b) in self.edges:
            if a == v:
                out.add(b)
            elif b == v:
                out.add(a)
        return out

    def adjacency(self) -> list:
        adj = [set() for _ in range(self.num_vertices)]
        for (a, b) in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return adj


@dataclass(frozen=True)
class PilotAssignment:
    """Proper coloring of the conflict graph plus the implied training length.

    Each color consumes one orthogonal pilot matrix of ``antennas`` sequences,
    so the training length is ``tau = antennas * num_colors``.
    """

    color: np.ndarray
    num_colors: int
    antennas: int
    reuse_sets: tuple

    @property
    def tau(self) -> int:
        return self.antennas * self.num_colors

    def to_json(self) -> str:
        return json.dumps({
            "color": [int(c) for c in self.color],
            "num_colors": self.num_colors,
            "antennas": self.antennas,
            "tau": self.tau,
        })


def build_conflict_graph(topo: Topology) -> ConflictGraph:
    """Edges are exactly the RRH pairs that appear together in some UE's cluster."""
    edges = set()
    for cl in topo.clusters:
        for i in range(len(cl)):
            for j in range(i + 1, len(cl)):
                a, b = cl[i], cl[j]
                if a != b:
                    edges.add((min(a, b), max(a, b)))
    return ConflictGraph(num_vertices=topo.num_rrh, edges=frozenset(edges))


def dsatur_color(graph: ConflictGraph, n_max: int, antennas: int = 2) -> PilotAssignment:
    """Color the conflict graph with DSatur under a per-color capacity bound.

    Vertex choice: highest saturation, then highest degree, then lowest index.
    A color already used by ``n_max`` vertices is treated as unavailable, so
    every pilot is reused at most ``n_max`` times; new colors open as needed,
    hence a proper coloring always exists.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    n = graph.num_vertices
    adj = graph.adjacency()
    degree = [len(adj[v]) for v in range(n)]
    color = np.full(n, -1, dtype=int)
    neighbor_colors = [set() for _ in range(n)]
    class_size: list = []

    for _ in range(n):
        best = -1
        best_key = None
        for v in range(n):
            if color[v] >= 0:
                continue
            key = (len(neighbor_colors[v]), degree[v], -v)
            if best_key is None or key > best_key:
                best, best_key = v, key
        c = 0
        while c < len(class_size) and (c in neighbor_colors[best] or class_size[c] >= n_max):
            c += 1
        if c == len(class_size):
            class_size.append(0)
        color[best] = c
        class_size[c] += 1
        for u in adj[best]:
            neighbor_colors[u].add(c)

    num_colors = len(class_size)
    reuse_sets = tuple(
        tuple(int(v) for v in np.flatnonzero(color == c)) for c in range(num_colors)
    )
    return PilotAssignment(
        color=color, num_colors=num_colors, antennas=antennas, reuse_sets=reuse_sets
    )
