"""Noisy stabilizer-measurement circuits for memory experiments.

Instruction stream semantics (Pauli-frame level):

    ("H", q)                  swap X/Z frame bits on q
    ("CNOT", c, t)            X propagates c->t, Z propagates t->c
    ("DEPOL1", q, p)          X/Y/Z each with probability p/3
    ("DEPOL2", a, b, p)       each of the 15 non-identity pairs with p/15
    ("XERR", q, p)            X with probability p (measurement/reset flip;
                              emitted via the FLIP_MEAS / FLIP_RESET builders)
    ("MEASURE", q)            record Z-basis outcome (frame X bit), index order
    ("RESET", q)              clear both frame bits
    ("TICK",)                 cycle boundary marker

Weight-4 stabilizers are measured with the CNOT circuits: Z stabilizers use
data-controlled CNOTs onto the ancilla, X stabilizers conjugate the ancilla
with Hadamards and use ancilla-controlled CNOTs. Noise placement: one-qubit
depolarizing on all data qubits at the start of every cycle and after every
Hadamard, two-qubit depolarizing after every CNOT, X flips with probability
p before each measurement and after each reset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .codes import CodeLayout

Instruction = tuple

# Within-round entangling schedule, doubled-coordinate offsets from ancilla
# to data qubit. All stabilizers of one type share the step order; the two
# orders never touch the same data qubit in the same step.
X_SCHEDULE = ((1, 1), (-1, 1), (1, -1), (-1, -1))   # SE, SW, NE, NW
Z_SCHEDULE = ((1, 1), (1, -1), (-1, 1), (-1, -1))   # SE, NE, SW, NW
REP_SCHEDULE = ((-1, 0), (1, 0))                     # west then east neighbor


class CircuitError(ValueError):
    """Raised for invalid circuit construction parameters."""


@dataclass(frozen=True)
class NoiseParams:
    """Circuit-level noise strengths, all defaulting to the headline p.

    The uniform model of the noisy-circuit construction uses a single p for
    every channel; individual channels can be overridden (e.g. data-only
    bit-flip noise with perfect measurements for analytic checks).
    """

    p: float
    p_data: float | None = None    # one-qubit channel on data, each cycle
    p_gate1: float | None = None   # after single-qubit gates
    p_gate2: float | None = None   # after two-qubit gates
    p_meas: float | None = None    # measurement flip
    p_reset: float | None = None   # reset flip
    data_channel: str = "depolarizing"  # or "bitflip"

    def __post_init__(self):
        for name in ("p", "p_data", "p_gate1", "p_gate2", "p_meas", "p_reset"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v < 1.0:
                raise CircuitError(f"{name}={v} outside [0, 1)")
        if self.data_channel not in ("depolarizing", "bitflip"):
            raise CircuitError(f"unknown data channel {self.data_channel!r}")

    @property
    def data(self) -> float:
        return self.p if self.p_data is None else self.p_data

    @property
    def gate1(self) -> float:
        return self.p if self.p_gate1 is None else self.p_gate1

    @property
    def gate2(self) -> float:
        return self.p if self.p_gate2 is None else self.p_gate2

    @property
    def meas(self) -> float:
        return self.p if self.p_meas is None else self.p_meas

    @property
    def reset(self) -> float:
        return self.p if self.p_reset is None else self.p_reset


@dataclass(frozen=True)
class DetectorDef:
    """XOR of the referenced measurement indices; fires when it is 1."""

    stab_type: str
    x: int  # doubled ancilla coordinate
    y: int
    t: int  # round, 1..d_t+1
    meas_indices: tuple[int, ...]


@dataclass
class Circuit:
    """Compiled memory-experiment circuit with detector and label definitions."""

    n_qubits: int
    instructions: list[Instruction]
    detectors: list[DetectorDef]
    label_meas: tuple[int, ...]  # XOR of these measurements gives the label
    label_basis: str             # "Z" or "X"
    n_measurements: int
    layout: CodeLayout = field(repr=False)
    d_t: int = 1
    noise: NoiseParams | None = field(default=None, repr=False)
    # measurement bookkeeping: (stabilizer index, round) and data qubit maps
    ancilla_meas: dict[tuple[int, int], int] = field(default_factory=dict, repr=False)
    data_meas: tuple[int, ...] = ()

    @property
    def feature_mode(self) -> str:
        return "repetition" if self.layout.kind == "repetition" else "circuit-surface"

    def noise_sites(self) -> list[int]:
        """Instruction indices that carry randomness."""
        return [
            i for i, ins in enumerate(self.instructions)
            if ins[0] in ("DEPOL1", "DEPOL2", "XERR") and ins[-1] > 0.0
        ]


def build_memory_circuit(layout: CodeLayout, d_t: int, basis: str,
                         noise: NoiseParams) -> Circuit:
    """Construct a d_t-round memory experiment on the given code.

    Detectors of the basis-aligned stabilizer type cover rounds 1..d_t+1
    (round 1 against the implicit initialization round, the final round from
    the transversal data readout); the other type covers rounds 2..d_t only.
    The label is the parity of the final data readout over the logical
    support of the measured basis.
    """
    if d_t < 1:
        raise CircuitError(f"need at least one measurement round, got d_t={d_t}")
    basis = basis.upper()
    if basis not in ("Z", "X"):
        raise CircuitError(f"basis must be Z or X, got {basis!r}")
    if layout.kind == "repetition" and basis == "X":
        raise CircuitError("repetition code cannot run a memory-X experiment")

    n_data = layout.n_data
    stabs = layout.stabilizers
    anc = {s.ancilla_coord: n_data + k for k, s in enumerate(stabs)}
    coord_to_data = {c: i for i, c in enumerate(layout.data_coords)}

    ins: list[Instruction] = []
    meas_index: dict[tuple[int, int], int] = {}  # (ancilla qubit, round) -> index
    final_meas: dict[int, int] = {}              # data qubit -> index
    n_meas = 0

    def measure(q: int) -> int:
        nonlocal n_meas
        ins.append(("XERR", q, noise.meas))
        ins.append(("MEASURE", q))
        idx = n_meas
        n_meas += 1
        return idx

    x_ancillas = [anc[s.ancilla_coord] for s in stabs if s.pauli_type == "X"]

    # initial ancilla preparation (data preparation is the all-zero reference
    # frame; basis-X data preparation only redefines which detectors exist)
    for s in stabs:
        q = anc[s.ancilla_coord]
        ins.append(("RESET", q))
        ins.append(("XERR", q, noise.reset))

    if layout.kind == "repetition":
        schedules = {"Z": REP_SCHEDULE}
    else:
        schedules = {"Z": Z_SCHEDULE, "X": X_SCHEDULE}

    for t in range(1, d_t + 1):
        # cycle noise on data qubits
        for q in range(n_data):
            if noise.data > 0.0:
                if noise.data_channel == "bitflip":
                    ins.append(("XERR", q, noise.data))
                else:
                    ins.append(("DEPOL1", q, noise.data))
        for q in x_ancillas:
            ins.append(("H", q))
            ins.append(("DEPOL1", q, noise.gate1))
        n_steps = len(next(iter(schedules.values())))
        for step in range(n_steps):
            for s in stabs:
                off = schedules[s.pauli_type][step]
                ax, ay = s.ancilla_coord
                target = coord_to_data.get((ax + off[0], ay + off[1]))
                if target is None:
                    continue  # boundary stabilizer, neighbor outside the grid
                a = anc[s.ancilla_coord]
                if s.pauli_type == "Z":
                    ins.append(("CNOT", target, a))
                    ins.append(("DEPOL2", target, a, noise.gate2))
                else:
                    ins.append(("CNOT", a, target))
                    ins.append(("DEPOL2", a, target, noise.gate2))
        for q in x_ancillas:
            ins.append(("H", q))
            ins.append(("DEPOL1", q, noise.gate1))
        for k, s in enumerate(stabs):
            q = anc[s.ancilla_coord]
            meas_index[(q, t)] = measure(q)
            ins.append(("RESET", q))
            ins.append(("XERR", q, noise.reset))
        ins.append(("TICK",))

    # transversal data readout; memory-X reads in the Hadamard basis, the
    # basis change itself treated as part of noiseless readout
    for q in range(n_data):
        if basis == "X":
            ins.append(("H", q))
        final_meas[q] = measure(q)

    detectors: list[DetectorDef] = []
    for k, s in enumerate(stabs):
        q = anc[s.ancilla_coord]
        ax, ay = s.ancilla_coord
        aligned = s.pauli_type == basis
        if aligned:
            detectors.append(DetectorDef(s.pauli_type, ax, ay, 1, (meas_index[(q, 1)],)))
        for t in range(2, d_t + 1):
            detectors.append(DetectorDef(
                s.pauli_type, ax, ay, t, (meas_index[(q, t - 1)], meas_index[(q, t)])
            ))
        if aligned:
            readout = tuple(final_meas[i] for i in s.support)
            detectors.append(DetectorDef(
                s.pauli_type, ax, ay, d_t + 1, (meas_index[(q, d_t)], *readout)
            ))
    detectors.sort(key=lambda det: (det.t, det.stab_type, det.x, det.y))

    logical = layout.logical_z if basis == "Z" else layout.logical_x
    label_meas = tuple(final_meas[i] for i in logical)

    ancilla_meas = {
        (k, t): meas_index[(anc[s.ancilla_coord], t)]
        for k, s in enumerate(stabs) for t in range(1, d_t + 1)
    }
    return Circuit(
        n_qubits=n_data + len(stabs),
        instructions=ins,
        detectors=detectors,
        label_meas=label_meas,
        label_basis=basis,
        n_measurements=n_meas,
        layout=layout,
        d_t=d_t,
        noise=noise,
        ancilla_meas=ancilla_meas,
        data_meas=tuple(final_meas[q] for q in range(n_data)),
    )
