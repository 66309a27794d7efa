"""Detector error model: exhaustive single-fault enumeration of a circuit.

Every noise site contributes one entry per non-identity Pauli outcome;
entries with identical (detector set, logical flip) signatures are merged
with the independent-mechanism rule q = q1(1-q2) + q2(1-q1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .circuits import Circuit
from .sampler import propagate_faults

_PAULIS1 = ("X", "Y", "Z")
_PAULIS2 = tuple(
    a + b for a in "IXYZ" for b in "IXYZ" if a + b != "II"
)


@dataclass(frozen=True)
class DemEntry:
    probability: float
    detectors: tuple[int, ...]  # indices into the detector table, sorted
    logical_flip: int


@dataclass
class DetectorErrorModel:
    entries: list[DemEntry]
    detector_coords: tuple[tuple[str, int, int, int], ...]  # (type, x, y, t)
    label_basis: str
    dropped_invisible: float = 0.0  # probability mass of undetectable flips

    def __post_init__(self):
        for e in self.entries:
            if not 0.0 < e.probability < 1.0:
                raise ValueError(f"entry probability {e.probability} outside (0,1)")
            if not e.detectors:
                raise ValueError("entry with empty detector set")

    def first_order_flip_rate(self) -> float:
        """Small-p estimate of the logical failure rate: sum of flip masses."""
        return sum(e.probability for e in self.entries if e.logical_flip)

    def first_order_detector_rates(self) -> list[float]:
        """Small-p marginal firing probability per detector."""
        rates = [0.0] * len(self.detector_coords)
        for e in self.entries:
            for d in e.detectors:
                rates[d] += e.probability
        return rates

    def dump_text(self) -> str:
        lines = [f"# detector error model, label basis {self.label_basis}"]
        lines.append(f"# detectors: {len(self.detector_coords)}, entries: {len(self.entries)}")
        for i, (st, x, y, t) in enumerate(self.detector_coords):
            lines.append(f"detector D{i} type={st} x={x / 2:g} y={y / 2:g} t={t}")
        for e in sorted(self.entries, key=lambda e: (e.detectors, e.logical_flip)):
            dets = " ".join(f"D{i}" for i in e.detectors)
            lines.append(f"error {e.probability:.10g} {dets} flip={e.logical_flip}")
        if self.dropped_invisible:
            lines.append(f"# dropped undetectable flip mass {self.dropped_invisible:.3g}")
        return "\n".join(lines) + "\n"


def _combine(q1: float, q2: float) -> float:
    return q1 * (1.0 - q2) + q2 * (1.0 - q1)


def enumerate_single_faults(circuit: Circuit) -> DetectorErrorModel:
    """Propagate every possible single fault and tabulate its signature."""
    acc: dict[tuple[tuple[int, ...], int], float] = {}
    dropped = 0.0
    for site in circuit.noise_sites():
        ins = circuit.instructions[site]
        kind, p = ins[0], ins[-1]
        if kind == "DEPOL1":
            outcomes = [(pl, p / 3.0) for pl in _PAULIS1]
        elif kind == "DEPOL2":
            outcomes = [(pl, p / 15.0) for pl in _PAULIS2]
        else:  # XERR
            outcomes = [("X", p)]
        for pauli, q in outcomes:
            fired, flip = propagate_faults(circuit, [(site, pauli)])
            if not fired:
                if flip:
                    dropped = _combine(dropped, q)
                continue
            key = (fired, flip)
            acc[key] = _combine(acc[key], q) if key in acc else q

    entries = [
        DemEntry(prob, dets, flip)
        for (dets, flip), prob in sorted(acc.items())
    ]
    coords = tuple((d.stab_type, d.x, d.y, d.t) for d in circuit.detectors)
    return DetectorErrorModel(
        entries=entries,
        detector_coords=coords,
        label_basis=circuit.label_basis,
        dropped_invisible=dropped,
    )
