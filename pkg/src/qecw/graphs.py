"""Detector graphs: the annotated, degree-capped input of the neural decoder.

Edges of the complete detector graph are weighted by the inverse square
supremum norm of the space-time separation; the repetition code drops the
y term, perfect-stabilizer data drops the t term. Edges are then admitted
greedily by descending weight while both endpoints have degree below six,
which guarantees the degree bound that a per-node top-k rule would not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import FEATURE_DIMS, DataPoint, DetectorEvent

MAX_DEGREE = 6


@dataclass
class DetectorGraph:
    """Weighted detector graph plus per-head labels and availability mask."""

    features: np.ndarray       # float32 (n_nodes, dim), input order
    edges: np.ndarray          # int64 (n_edges, 2)
    weights: np.ndarray        # float64 (n_edges,)
    lam_z: int | None
    lam_x: int | None
    mode: str

    @property
    def n_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_nodes, dtype=np.int64)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg


def _axes(mode: str) -> tuple[bool, bool]:
    """(use_y, use_t) for the sup-norm distance in the given mode."""
    if mode == "circuit-surface":
        return True, True
    if mode == "perfect-surface":
        return True, False
    if mode == "repetition":
        return False, True
    raise ValueError(f"unknown feature mode {mode!r}")


def edge_weight(a: DetectorEvent, b: DetectorEvent, mode: str = "circuit-surface") -> float:
    """Inverse square sup-norm between two detector events, in grid units.

    Coordinates are doubled integers, so the distance is an exact half
    integer and the weight an exact ratio of integers.
    """
    use_y, use_t = _axes(mode)
    sup2 = abs(a.x - b.x)  # doubled distance
    if use_y:
        sup2 = max(sup2, abs(a.y - b.y))
    if use_t:
        sup2 = max(sup2, 2 * abs(a.t - b.t))
    if sup2 == 0:
        raise ValueError(f"coincident detector coordinates: {a} vs {b}")
    return 4.0 / (sup2 * sup2)


def build_graph(point: DataPoint, mode: str) -> DetectorGraph:
    """Degree-capped weighted graph for one data point.

    Candidate edges are ranked by descending weight; ties break on the
    lexicographic order of the endpoints' canonical coordinate ranks, so a
    permuted detector list yields the same edge set on the same events.
    """
    events = point.detectors
    n = len(events)
    dim = FEATURE_DIMS[mode]
    feats = np.zeros((n, dim), dtype=np.float32)
    for i, ev in enumerate(events):
        feats[i] = ev.features(mode)

    # canonical node ranks from the coordinate key, independent of input order
    order = sorted(range(n), key=lambda i: (events[i].stab_type, events[i].t,
                                            events[i].x, events[i].y))
    rank = np.empty(n, dtype=np.int64)
    for r, i in enumerate(order):
        rank[i] = r

    cands = []
    for i in range(n):
        for j in range(i + 1, n):
            w = edge_weight(events[i], events[j], mode)
            ri, rj = (rank[i], rank[j]) if rank[i] < rank[j] else (rank[j], rank[i])
            cands.append((-w, ri, rj, i, j))
    cands.sort()

    deg = np.zeros(n, dtype=np.int64)
    sel_edges = []
    sel_weights = []
    for negw, _, _, i, j in cands:
        if deg[i] < MAX_DEGREE and deg[j] < MAX_DEGREE:
            deg[i] += 1
            deg[j] += 1
            sel_edges.append((i, j))
            sel_weights.append(-negw)

    return DetectorGraph(
        features=feats,
        edges=np.array(sel_edges, dtype=np.int64).reshape(-1, 2),
        weights=np.array(sel_weights, dtype=np.float64),
        lam_z=point.lam_z,
        lam_x=point.lam_x,
        mode=mode,
    )
