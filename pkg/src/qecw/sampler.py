"""Pauli-frame sampling of memory circuits and perfect-stabilizer shots.

Frames are bit-packed: one uint64 word carries 64 shots, so a batch
propagates through Clifford gates as word-wise XOR. Randomness comes from
counter-based Philox streams keyed by (seed, stream), which gives parallel
workers non-overlapping streams from one master seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuits import Circuit
from .codes import CodeLayout
from .data import DataPoint, DetectorEvent


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), stream]))


def _pack(bits: np.ndarray) -> np.ndarray:
    """Pack a boolean shot vector (length divisible by 64) into uint64 words."""
    return np.packbits(bits, bitorder="little").view(np.uint64)


def _unpack(words: np.ndarray, n: int) -> np.ndarray:
    """Inverse of _pack, truncated to n shots. Works on 1D or 2D (rows kept)."""
    u8 = words.view(np.uint64).reshape(words.shape[0], -1).view(np.uint8) \
        if words.ndim == 2 else words.view(np.uint8)
    bits = np.unpackbits(u8, axis=-1, bitorder="little")
    return bits[..., :n].astype(bool)


@dataclass
class ShotBatch:
    """Sampled detector events and labels for a block of shots."""

    circuit: Circuit
    detector_bits: np.ndarray  # bool (shots, n_detectors), detector list order
    labels: np.ndarray         # bool (shots,)
    seed: int
    measurements: np.ndarray | None = None  # bool (shots, n_measurements)

    @property
    def shots(self) -> int:
        return self.detector_bits.shape[0]

    def to_datapoints(self) -> list[DataPoint]:
        dets = self.circuit.detectors
        basis = self.circuit.label_basis
        p = self.circuit.noise.p if self.circuit.noise else 0.0
        src = f"sim:p={p}"
        out = []
        for s in range(self.shots):
            fired = tuple(
                DetectorEvent(dets[k].stab_type, dets[k].x, dets[k].y, dets[k].t)
                for k in np.flatnonzero(self.detector_bits[s])
            )
            lam = int(self.labels[s])
            out.append(DataPoint(
                detectors=fired,
                lam_z=lam if basis == "Z" else None,
                lam_x=lam if basis == "X" else None,
                basis=basis,
                source=src,
            ))
        return out


def sample_shots(circuit: Circuit, seed: int, shots: int, stream: int = 0,
                 keep_measurements: bool = False) -> ShotBatch:
    """Sample `shots` independent executions of the circuit.

    Deterministic for fixed (circuit, seed, shots, stream): noise sites draw
    in instruction order from a single Philox stream.
    """
    if shots < 1:
        raise ValueError("shots must be positive")
    rng = make_rng(seed, stream)
    n_pad = ((shots + 63) // 64) * 64
    n_words = n_pad // 64
    nq = circuit.n_qubits
    x = np.zeros((nq, n_words), dtype=np.uint64)
    z = np.zeros((nq, n_words), dtype=np.uint64)
    meas = np.zeros((circuit.n_measurements, n_words), dtype=np.uint64)
    mi = 0

    for ins in circuit.instructions:
        kind = ins[0]
        if kind == "CNOT":
            c, t = ins[1], ins[2]
            x[t] ^= x[c]
            z[c] ^= z[t]
        elif kind == "DEPOL2":
            a, b, p = ins[1], ins[2], ins[3]
            if p <= 0.0:
                continue
            u = rng.random(n_pad)
            hit = u < p
            # reuse the event draw as a uniform index over the 15 pairs
            k = np.zeros(n_pad, dtype=np.int64)
            k[hit] = (u[hit] * (15.0 / p)).astype(np.int64) + 1
            np.clip(k, 0, 15, out=k)
            pa, pb = k >> 2, k & 3
            x[a] ^= _pack((pa == 1) | (pa == 2))
            z[a] ^= _pack((pa == 2) | (pa == 3))
            x[b] ^= _pack((pb == 1) | (pb == 2))
            z[b] ^= _pack((pb == 2) | (pb == 3))
        elif kind == "DEPOL1":
            q, p = ins[1], ins[2]
            if p <= 0.0:
                continue
            u = rng.random(n_pad)
            hit = u < p
            k = np.zeros(n_pad, dtype=np.int64)
            k[hit] = (u[hit] * (3.0 / p)).astype(np.int64)
            np.clip(k, 0, 2, out=k)
            x[q] ^= _pack(hit & (k != 2))   # X or Y
            z[q] ^= _pack(hit & (k != 0))   # Y or Z
        elif kind == "XERR":
            q, p = ins[1], ins[2]
            if p <= 0.0:
                continue
            x[q] ^= _pack(rng.random(n_pad) < p)
        elif kind == "MEASURE":
            meas[mi] = x[ins[1]]
            mi += 1
        elif kind == "RESET":
            q = ins[1]
            x[q] = 0
            z[q] = 0
        elif kind == "H":
            q = ins[1]
            tmp = x[q].copy()
            x[q] = z[q]
            z[q] = tmp
        elif kind == "TICK":
            pass
        else:
            raise ValueError(f"unknown instruction {kind!r}")

    n_det = len(circuit.detectors)
    det_words = np.zeros((n_det, n_words), dtype=np.uint64)
    for k, det in enumerate(circuit.detectors):
        for m in det.meas_indices:
            det_words[k] ^= meas[m]
    lab_words = np.zeros(n_words, dtype=np.uint64)
    for m in circuit.label_meas:
        lab_words ^= meas[m]

    return ShotBatch(
        circuit=circuit,
        detector_bits=_unpack(det_words, shots).T,
        labels=_unpack(lab_words, shots),
        seed=seed,
        measurements=_unpack(meas, shots).T if keep_measurements else None,
    )


def sample(circuit: Circuit, seed: int) -> DataPoint:
    """Single-shot convenience wrapper around sample_shots."""
    return sample_shots(circuit, seed, 1).to_datapoints()[0]


def propagate_faults(circuit: Circuit,
                     faults: list[tuple[int, str]]) -> tuple[tuple[int, ...], int]:
    """Deterministically propagate explicit faults through a noiseless run.

    Each fault is (instruction index, pauli string) where the instruction
    must be a noise site: DEPOL1/XERR take one of "X", "Y", "Z"; DEPOL2
    takes a two-letter string over I/X/Y/Z (not "II") applied to its two
    qubits in order. The fault is injected in place of that site's noise.
    Returns (indices of fired detectors, label flip bit); Pauli frames
    compose linearly, so joint injection fires the XOR of the individual
    signatures.
    """
    by_site: dict[int, str] = {}
    for site, pauli in faults:
        ins = circuit.instructions[site]
        if ins[0] not in ("DEPOL1", "DEPOL2", "XERR"):
            raise ValueError(f"instruction {site} is {ins[0]}, not a noise site")
        by_site[site] = by_site.get(site, "I" * (2 if ins[0] == "DEPOL2" else 1))
        # compose multiple faults at one site as a Pauli product
        prev = by_site[site]
        by_site[site] = _pauli_mul(prev, pauli)

    nq = circuit.n_qubits
    x = [0] * nq
    z = [0] * nq
    meas = [0] * circuit.n_measurements
    mi = 0
    for idx, ins in enumerate(circuit.instructions):
        kind = ins[0]
        if kind == "CNOT":
            c, t = ins[1], ins[2]
            x[t] ^= x[c]
            z[c] ^= z[t]
        elif kind == "H":
            q = ins[1]
            x[q], z[q] = z[q], x[q]
        elif kind == "MEASURE":
            meas[mi] = x[ins[1]]
            mi += 1
        elif kind == "RESET":
            x[ins[1]] = 0
            z[ins[1]] = 0
        elif kind in ("DEPOL1", "DEPOL2", "XERR") and idx in by_site:
            pauli = by_site[idx]
            qubits = (ins[1],) if kind in ("DEPOL1", "XERR") else (ins[1], ins[2])
            if len(pauli) != len(qubits):
                raise ValueError(f"fault {pauli!r} does not fit {kind}")
            for q, ch in zip(qubits, pauli):
                if ch in ("X", "Y"):
                    x[q] ^= 1
                if ch in ("Y", "Z"):
                    z[q] ^= 1

    fired = []
    for k, det in enumerate(circuit.detectors):
        v = 0
        for m in det.meas_indices:
            v ^= meas[m]
        if v:
            fired.append(k)
    flip = 0
    for m in circuit.label_meas:
        flip ^= meas[m]
    return tuple(fired), flip


def _pauli_mul(a: str, b: str) -> str:
    table = {frozenset("XZ"): "Y", frozenset("XY"): "Z", frozenset("YZ"): "X"}
    out = []
    for ca, cb in zip(a, b):
        if ca == "I":
            out.append(cb)
        elif cb == "I" or ca == cb:
            out.append("I" if ca == cb else ca)
        else:
            out.append(table[frozenset((ca, cb))])
    return "".join(out)


@dataclass
class PerfectBatch:
    """Perfect-stabilizer shots: violated stabilizers plus both labels."""

    layout: CodeLayout
    detector_bits: np.ndarray  # bool (shots, n_stabilizers), layout order
    lam_z: np.ndarray          # bool (shots,)
    lam_x: np.ndarray
    p: float

    @property
    def shots(self) -> int:
        return self.detector_bits.shape[0]

    def to_datapoints(self) -> list[DataPoint]:
        stabs = self.layout.stabilizers
        src = f"perfect:p={self.p}"
        out = []
        for s in range(self.shots):
            fired = tuple(
                DetectorEvent(stabs[k].pauli_type, *stabs[k].ancilla_coord, 0)
                for k in np.flatnonzero(self.detector_bits[s])
            )
            out.append(DataPoint(
                detectors=fired,
                lam_z=int(self.lam_z[s]),
                lam_x=int(self.lam_x[s]),
                basis="ZX",
                source=src,
            ))
        return out


def sample_perfect_shots(layout: CodeLayout, p: float, seed: int, shots: int,
                         stream: int = 0) -> PerfectBatch:
    """Depolarize every data qubit once, then read all stabilizers perfectly."""
    if layout.kind != "rotated-surface":
        raise ValueError("perfect-stabilizer sampling is defined for surface layouts")
    rng = make_rng(seed, stream)
    n = layout.n_data
    u = rng.random((n, shots))
    hit = u < p
    k = np.zeros((n, shots), dtype=np.int64)
    if p > 0.0:
        k[hit] = (u[hit] * (3.0 / p)).astype(np.int64)
        np.clip(k, 0, 2, out=k)
    xerr = hit & (k != 2)
    zerr = hit & (k != 0)

    stabs = layout.stabilizers
    det = np.zeros((len(stabs), shots), dtype=bool)
    for i, s in enumerate(stabs):
        err = xerr if s.pauli_type == "Z" else zerr
        acc = np.zeros(shots, dtype=bool)
        for q in s.support:
            acc ^= err[q]
        det[i] = acc

    lam_z = np.zeros(shots, dtype=bool)
    for q in layout.logical_z:
        lam_z ^= xerr[q]
    lam_x = np.zeros(shots, dtype=bool)
    for q in layout.logical_x:
        lam_x ^= zerr[q]

    return PerfectBatch(layout, det.T, lam_z, lam_x, p)


def sample_perfect(layout: CodeLayout, p: float, seed: int) -> DataPoint:
    return sample_perfect_shots(layout, p, seed, 1).to_datapoints()[0]
