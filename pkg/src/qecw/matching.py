"""Minimum-weight perfect matching decoders.

Two graph constructions: "informed" graphs take edge weights ln((1-q)/q)
from a detector error model, "uninformed" graphs use 1-norm space-time
distances only. Decoding computes shortest paths between fired detectors
(carrying logical-flip parity along the path), then solves the pairing
exactly: subset dynamic programming for small fired sets, blossom matching
(networkx) beyond that. Optimality is the contract; the test suite checks
it against brute-force enumeration over all pairings.
"""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass, field

import networkx as nx

from .codes import CodeLayout
from .data import DetectorEvent
from .dem import DetectorErrorModel

_DP_LIMIT = 18  # beyond this many fired detectors, use blossom matching


class MatchingError(ValueError):
    pass


@dataclass
class MatchingGraph:
    """Weighted detector graph of one stabilizer type plus a virtual boundary."""

    stab_type: str
    node_coords: list[tuple[int, int, int]]        # (x, y, t) per node
    adj: list[list[tuple[int, float, int]]]        # node -> (nbr, weight, flip)
    boundary: list[tuple[float, int] | None]       # node -> (weight, flip)

    @property
    def n_nodes(self) -> int:
        return len(self.node_coords)

    def index_of(self, coord: tuple[int, int, int]) -> int:
        return self._index[coord]

    def __post_init__(self):
        self._index = {c: i for i, c in enumerate(self.node_coords)}

    def add_edge(self, u: int, v: int, q: float, flip: int) -> None:
        """Insert or merge an independent error mechanism between u and v."""
        for k, (nbr, w1, fl1) in enumerate(self.adj[u]):
            if nbr == v:
                w, fl = _merge_mechanisms(w1, fl1, q, flip)
                self.adj[u][k] = (v, w, fl)
                for k2, (nbr2, _, _) in enumerate(self.adj[v]):
                    if nbr2 == u:
                        self.adj[v][k2] = (u, w, fl)
                return
        w = _weight_from_q(q)
        self.adj[u].append((v, w, flip))
        self.adj[v].append((u, w, flip))

    def add_boundary_edge(self, u: int, q: float, flip: int) -> None:
        if self.boundary[u] is None:
            self.boundary[u] = (_weight_from_q(q), flip)
        else:
            w1, fl1 = self.boundary[u]
            self.boundary[u] = _merge_mechanisms(w1, fl1, q, flip)


def _merge_mechanisms(w1: float, flip1: int, q2: float, flip2: int
                      ) -> tuple[float, int]:
    """Combine an existing edge with a new mechanism of probability q2."""
    q1 = _q_from_weight(w1)
    q = q1 * (1 - q2) + q2 * (1 - q1)
    # differing flips cannot merge faithfully; keep the likelier mechanism
    flip = flip1 if q1 >= q2 else flip2
    return _weight_from_q(q), flip


def _weight_from_q(q: float) -> float:
    if q >= 0.5:
        warnings.warn(f"error mechanism with q={q:.3g} >= 0.5; weight clamped to 0")
        return 0.0
    return math.log((1.0 - q) / q)


def _q_from_weight(w: float) -> float:
    return 1.0 / (1.0 + math.exp(w))


def build_informed(dem: DetectorErrorModel) -> dict[str, MatchingGraph]:
    """Per-type matching graphs from a circuit's detector error model.

    Entries are restricted to each stabilizer type; singletons become
    boundary edges, pairs internal edges, and larger same-type sets are
    decomposed into time-ordered consecutive pairs (lossy, flip carried by
    the first derived edge). The logical flip is meaningful only on the
    basis-aligned type; the other type's graph keeps flip 0 everywhere.
    """
    if not dem.entries:
        raise MatchingError("empty detector error model")
    graphs: dict[str, MatchingGraph] = {}
    idx_by_type: dict[str, dict[int, int]] = {}
    for st in ("Z", "X"):
        nodes = [i for i, c in enumerate(dem.detector_coords) if c[0] == st]
        if not nodes:
            continue
        coords = [tuple(dem.detector_coords[i][1:]) for i in nodes]
        graphs[st] = MatchingGraph(st, coords, [[] for _ in nodes],
                                   [None] * len(nodes))
        idx_by_type[st] = {g: k for k, g in enumerate(nodes)}

    for entry in dem.entries:
        by_type: dict[str, list[int]] = {}
        for d in entry.detectors:
            by_type.setdefault(dem.detector_coords[d][0], []).append(d)
        for st, dets in by_type.items():
            g = graphs[st]
            local = [idx_by_type[st][d] for d in dets]
            flip = entry.logical_flip if st == dem.label_basis else 0
            if len(local) == 1:
                g.add_boundary_edge(local[0], entry.probability, flip)
            elif len(local) == 2:
                g.add_edge(local[0], local[1], entry.probability, flip)
            else:
                # order in time, then space, and pair consecutively
                local.sort(key=lambda n: (g.node_coords[n][2], g.node_coords[n][0],
                                          g.node_coords[n][1]))
                for k in range(0, len(local) - 1, 2):
                    g.add_edge(local[k], local[k + 1], entry.probability,
                               flip if k == 0 else 0)
                if len(local) % 2:
                    g.add_boundary_edge(local[-1], entry.probability, 0)
    return graphs


def build_informed_perfect(layout: CodeLayout, p: float) -> dict[str, MatchingGraph]:
    """Matching graphs for perfect stabilizers under depolarizing noise p.

    On the Z side every data qubit carries an X-component with probability
    2p/3 (X or Y), firing its adjacent Z stabilizers and flipping the Z
    label when it lies on the logical-Z support; symmetrically for X.
    """
    q = 2.0 * p / 3.0
    graphs = {}
    for st, logical in (("Z", layout.logical_z), ("X", layout.logical_x)):
        stabs = [s for s in layout.stabilizers if s.pauli_type == st]
        coords = [(s.ancilla_coord[0], s.ancilla_coord[1], 0) for s in stabs]
        g = MatchingGraph(st, coords, [[] for _ in stabs], [None] * len(stabs))
        sup = set(logical)
        for qb in range(layout.n_data):
            touching = [k for k, s in enumerate(stabs) if qb in s.support]
            flip = 1 if qb in sup else 0
            if len(touching) == 1:
                g.add_boundary_edge(touching[0], q, flip)
            elif len(touching) == 2:
                g.add_edge(touching[0], touching[1], q, flip)
        graphs[st] = g
    return graphs


def build_uninformed(detectors: list[DetectorEvent], layout: CodeLayout,
                     stab_type: str) -> MatchingGraph:
    """Complete 1-norm graph over the fired detectors of one type.

    Boundary edges use the spatial 1-norm distance to the nearest absorbing
    boundary for that detector type; the edge flips the label exactly when
    that boundary is the one crossed by the logical string (north for the
    Z side, west for the X side and for the repetition code).
    """
    events = [e for e in detectors if e.stab_type == stab_type]
    d = layout.distance
    coords = [(e.x, e.y, e.t) for e in events]
    g = MatchingGraph(stab_type, coords, [[] for _ in events], [None] * len(events))
    for i in range(len(events)):
        for j in range(i + 1, len(events)):
            a, b = events[i], events[j]
            w = (abs(a.x - b.x) + abs(a.y - b.y)) / 2.0 + abs(a.t - b.t)
            g.adj[i].append((j, w, 0))
            g.adj[j].append((i, w, 0))
        e = events[i]
        if layout.kind == "repetition" or stab_type == "X":
            near = (e.x + 1) / 2.0                  # west, crosses the logical
            far = (2 * d - 1 - e.x) / 2.0           # east
        else:
            near = (e.y + 1) / 2.0                  # north, crosses the logical
            far = (2 * d - 1 - e.y) / 2.0           # south
        if near <= far:
            g.boundary[i] = (near, 1)
        else:
            g.boundary[i] = (far, 0)
    return g


def _shortest_paths(graph: MatchingGraph, source: int
                    ) -> tuple[dict[int, tuple[float, int]], tuple[float, int]]:
    """Dijkstra from one node: distances and path flips to every node and
    to the boundary (reachable through any node's boundary edge)."""
    dist: dict[int, tuple[float, int]] = {}
    best_boundary = (math.inf, 0)
    heap = [(0.0, 0, source, 0)]
    counter = 1
    while heap:
        d, _, u, flip = heapq.heappop(heap)
        if u in dist:
            continue
        dist[u] = (d, flip)
        b = graph.boundary[u]
        if b is not None and d + b[0] < best_boundary[0]:
            best_boundary = (d + b[0], flip ^ b[1])
        for v, w, fl in graph.adj[u]:
            if v not in dist:
                heapq.heappush(heap, (d + w, counter, v, flip ^ fl))
                counter += 1
    return dist, best_boundary


def _pairing_costs(graph: MatchingGraph, fired: list[int]):
    k = len(fired)
    pair = [[(math.inf, 0)] * k for _ in range(k)]
    bnd = [(math.inf, 0)] * k
    for a in range(k):
        dist, boundary = _shortest_paths(graph, fired[a])
        bnd[a] = boundary
        for b in range(k):
            if fired[b] in dist:
                pair[a][b] = dist[fired[b]]
    return pair, bnd


def _match_dp(pair, bnd, k: int) -> tuple[float, int]:
    """Exact min-weight pairing (boundary allowed per node) over bitmasks."""
    memo: dict[int, tuple[float, int]] = {0: (0.0, 0)}

    def solve(mask: int) -> tuple[float, int]:
        if mask in memo:
            return memo[mask]
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        best = (math.inf, 0)
        wb, fb = bnd[i]
        if math.isfinite(wb):
            sub = solve(rest)
            cand = (wb + sub[0], fb ^ sub[1])
            if cand[0] < best[0]:
                best = cand
        j = rest
        while j:
            b = (j & -j).bit_length() - 1
            j &= j - 1
            wij, fij = pair[i][b]
            if math.isfinite(wij):
                sub = solve(rest & ~(1 << b))
                cand = (wij + sub[0], fij ^ sub[1])
                if cand[0] < best[0]:
                    best = cand
        memo[mask] = best
        return best

    return solve((1 << k) - 1)


def _match_blossom(pair, bnd, k: int) -> tuple[float, int]:
    g = nx.Graph()
    for a in range(k):
        for b in range(a + 1, k):
            if math.isfinite(pair[a][b][0]):
                g.add_edge(("d", a), ("d", b), weight=pair[a][b][0])
        if math.isfinite(bnd[a][0]):
            g.add_edge(("d", a), ("b", a), weight=bnd[a][0])
        for b in range(a):
            g.add_edge(("b", a), ("b", b), weight=0.0)
    mate = nx.min_weight_matching(g)
    if len(mate) * 2 != g.number_of_nodes():
        raise MatchingError("no perfect matching exists for the fired detectors")
    total, flip = 0.0, 0
    for u, v in mate:
        if u[0] == "b" and v[0] == "b":
            continue
        if u[0] == "b":
            u, v = v, u
        if v[0] == "b":
            total += bnd[u[1]][0]
            flip ^= bnd[u[1]][1]
        else:
            total += pair[u[1]][v[1]][0]
            flip ^= pair[u[1]][v[1]][1]
    return total, flip


def decode(graph: MatchingGraph, fired: list[int]) -> int:
    """Predicted label flip from the exact minimum-weight matching."""
    return decode_with_weight(graph, fired)[1]


def decode_with_weight(graph: MatchingGraph, fired: list[int]) -> tuple[float, int]:
    if not fired:
        return 0.0, 0
    pair, bnd = _pairing_costs(graph, fired)
    k = len(fired)
    if k <= _DP_LIMIT:
        weight, flip = _match_dp(pair, bnd, k)
    else:
        weight, flip = _match_blossom(pair, bnd, k)
    if not math.isfinite(weight):
        raise MatchingError("fired detectors admit no perfect matching")
    return weight, flip
