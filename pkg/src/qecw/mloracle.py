"""Brute-force maximum-likelihood decoding of the d=3 surface code.

Enumerates all 4^9 Pauli errors once per (distance, p), bucketing each
error's depolarizing probability by (syndrome, logical coset). Coset index
encodes the label flips: 0=I, 1=X (Z label flips), 2=Z (X label flips),
3=Y (both); argmax with this ordering realizes the I < X < Z < Y
tie-break. Distances above 3 are rejected: 4^25 is not desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codes import CodeLayout

_MAX_DISTANCE = 3
_tables: dict[tuple[str, int, float], np.ndarray] = {}


@dataclass(frozen=True)
class CosetProbabilities:
    p_i: float
    p_x: float
    p_z: float
    p_y: float

    @property
    def total(self) -> float:
        return self.p_i + self.p_x + self.p_z + self.p_y

    def normalized(self) -> tuple[float, float, float, float]:
        t = self.total
        if t == 0.0:
            raise ValueError("syndrome has zero probability")
        return (self.p_i / t, self.p_x / t, self.p_z / t, self.p_y / t)


def _check_layout(layout: CodeLayout) -> None:
    if layout.kind != "rotated-surface":
        raise ValueError("maximum-likelihood oracle requires a surface layout")
    if layout.distance > _MAX_DISTANCE:
        raise ValueError(
            f"d={layout.distance} enumeration is 4^{layout.n_data} errors; "
            f"the oracle is capped at d={_MAX_DISTANCE}"
        )


def coset_table(layout: CodeLayout, p: float) -> np.ndarray:
    """(2^n_stab, 4) table of summed error probabilities per syndrome/coset."""
    _check_layout(layout)
    key = (layout.kind, layout.distance, p)
    if key in _tables:
        return _tables[key]

    n = layout.n_data
    xs = np.arange(1 << n, dtype=np.uint64)
    x_bits, z_bits = np.meshgrid(xs, xs, indexing="ij")
    x_bits = x_bits.ravel()
    z_bits = z_bits.ravel()

    def mask(support) -> np.uint64:
        m = 0
        for q in support:
            m |= 1 << q
        return np.uint64(m)

    def parity(bits, m) -> np.ndarray:
        return (np.bitwise_count(bits & m) & 1).astype(np.uint64)

    syndrome = np.zeros(x_bits.shape, dtype=np.uint64)
    for k, s in enumerate(layout.stabilizers):
        bits = x_bits if s.pauli_type == "Z" else z_bits
        syndrome |= parity(bits, mask(s.support)) << np.uint64(k)

    coset = parity(x_bits, mask(layout.logical_z)) \
        | (parity(z_bits, mask(layout.logical_x)) << np.uint64(1))

    weight = np.bitwise_count(x_bits | z_bits).astype(np.int64)
    if p > 0.0:
        prob = (1.0 - p) ** (n - weight) * (p / 3.0) ** weight
    else:
        prob = (weight == 0).astype(np.float64)

    table = np.zeros((1 << len(layout.stabilizers), 4))
    np.add.at(table, (syndrome.astype(np.int64), coset.astype(np.int64)), prob)
    _tables[key] = table
    return table


def syndrome_index(layout: CodeLayout, fired_stabs) -> int:
    """Pack fired stabilizer indices (layout order) into a table row index."""
    idx = 0
    for k in fired_stabs:
        idx |= 1 << int(k)
    return idx


def coset_probabilities(layout: CodeLayout, syndrome: int, p: float) -> CosetProbabilities:
    row = coset_table(layout, p)[syndrome]
    return CosetProbabilities(p_i=row[0], p_x=row[1], p_z=row[2], p_y=row[3])


def ml_decode(layout: CodeLayout, syndrome: int, p: float) -> tuple[int, int]:
    """Most likely coset for the syndrome, as (z-label flip, x-label flip)."""
    row = coset_table(layout, p)[syndrome]
    c = int(np.argmax(row))  # first maximum realizes the I < X < Z < Y tie-break
    return c & 1, (c >> 1) & 1


def ml_failure_rate(layout: CodeLayout, p: float) -> float:
    """Exact failure rate of maximum-likelihood decoding, all syndromes."""
    table = coset_table(layout, p)
    return float((table.sum(axis=1) - table.max(axis=1)).sum())
