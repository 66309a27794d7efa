"""Dataset persistence, raw experiment records, and sub-windowing.

DatasetFile: little-endian binary container for DataPoints.

    header: magic "QGD1" | u8 code kind (0 rep, 1 surface) | u16 d | u16 d_t
            | u8 basis (0 Z, 1 X, 2 both) | u8 feature mode | u8 descriptor
            length | descriptor utf-8 | u64 record count
    record: u16 detector count, per detector (u8 type, i16 doubled x,
            i16 doubled y, u16 t), then one label byte.

Label byte: bit 2 clear means a single measured label, bit 0 its value and
bit 1 the head it belongs to (0 = Z, 1 = X); bit 2 set means both labels
present, bit 0 = lambda_Z and bit 1 = lambda_X.

Raw experiment records hold the measurement bits of repetition-code memory
runs (ancilla bits per round, final and initial data bits), dense-packed
per shot with a JSON schema sidecar; detectors and labels are recomputed
from them on ingest exactly as in a live experiment.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .circuits import Circuit
from .codes import CodeLayout, build_repetition
from .data import DataPoint, DetectorEvent
from .sampler import ShotBatch

_MAGIC = b"QGD1"
_KIND_CODES = {"repetition": 0, "rotated-surface": 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}
_BASIS_CODES = {"Z": 0, "X": 1, "ZX": 2}
_BASIS_NAMES = {v: k for k, v in _BASIS_CODES.items()}
_MODE_CODES = {"circuit-surface": 0, "perfect-surface": 1, "repetition": 2}
_MODE_NAMES = {v: k for k, v in _MODE_CODES.items()}


class DatasetFormatError(IOError):
    pass


@dataclass(frozen=True)
class DatasetHeader:
    kind: str
    d: int
    d_t: int
    basis: str
    feature_mode: str
    descriptor: str
    count: int


def _label_byte(p: DataPoint) -> int:
    if p.lam_z is not None and p.lam_x is not None:
        return 4 | (p.lam_z & 1) | ((p.lam_x & 1) << 1)
    if p.lam_z is not None:
        return p.lam_z & 1
    if p.lam_x is not None:
        return 2 | (p.lam_x & 1)
    raise DatasetFormatError("data point carries no label")


def _labels_from_byte(b: int) -> tuple[int | None, int | None, str]:
    if b & 4:
        return b & 1, (b >> 1) & 1, "ZX"
    if b & 2:
        return None, b & 1, "X"
    return b & 1, None, "Z"


def write_dataset(path, header: DatasetHeader, points: list[DataPoint]) -> None:
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<BHHBB", _KIND_CODES[header.kind], header.d,
                            header.d_t, _BASIS_CODES[header.basis],
                            _MODE_CODES[header.feature_mode]))
        desc = header.descriptor.encode()
        if len(desc) > 255:
            raise DatasetFormatError("descriptor longer than 255 bytes")
        f.write(struct.pack("<B", len(desc)))
        f.write(desc)
        f.write(struct.pack("<Q", len(points)))
        for p in points:
            f.write(struct.pack("<H", len(p.detectors)))
            for ev in p.detectors:
                f.write(struct.pack("<BhhH", 0 if ev.stab_type == "Z" else 1,
                                    ev.x, ev.y, ev.t))
            f.write(struct.pack("<B", _label_byte(p)))


def read_dataset(path) -> tuple[DatasetHeader, list[DataPoint]]:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != _MAGIC:
        raise DatasetFormatError(f"bad magic {raw[:4]!r}, expected {_MAGIC!r}")
    off = 4
    try:
        kind_c, d, d_t, basis_c, mode_c = struct.unpack_from("<BHHBB", raw, off)
        off += 7
        (dlen,) = struct.unpack_from("<B", raw, off)
        off += 1
        descriptor = raw[off:off + dlen].decode()
        off += dlen
        (count,) = struct.unpack_from("<Q", raw, off)
        off += 8
        header = DatasetHeader(_KIND_NAMES[kind_c], d, d_t, _BASIS_NAMES[basis_c],
                               _MODE_NAMES[mode_c], descriptor, count)
        points = []
        max_c = 2 * d  # doubled coordinates live in [-1, 2d-1]
        for _ in range(count):
            (ndet,) = struct.unpack_from("<H", raw, off)
            off += 2
            dets = []
            for _ in range(ndet):
                tc, x, y, t = struct.unpack_from("<BhhH", raw, off)
                off += 7
                if not (-1 <= x <= max_c and -1 <= y <= max_c and t <= d_t + 1):
                    raise DatasetFormatError(
                        f"detector coordinate ({x}, {y}, t={t}) outside layout bounds")
                dets.append(DetectorEvent("Z" if tc == 0 else "X", x, y, t))
            (lb,) = struct.unpack_from("<B", raw, off)
            off += 1
            lam_z, lam_x, basis = _labels_from_byte(lb)
            points.append(DataPoint(tuple(dets), lam_z, lam_x, basis, descriptor))
    except struct.error as exc:
        raise DatasetFormatError(f"truncated dataset file: {exc}") from exc
    if off != len(raw):
        raise DatasetFormatError(f"{len(raw) - off} trailing bytes after records")
    return header, points


# ---------------------------------------------------------------------------
# raw experiment records (repetition code)

@dataclass
class RawRecordBatch:
    """Measurement bits of repetition-code memory shots.

    ancilla: (shots, d_t, d-1), final/initial data: (shots, d). All uint8.
    """

    d: int
    d_t: int
    basis: str
    ancilla: np.ndarray
    final_data: np.ndarray
    initial_data: np.ndarray

    def __post_init__(self):
        shots = self.ancilla.shape[0]
        if self.ancilla.shape != (shots, self.d_t, self.d - 1):
            raise DatasetFormatError(f"ancilla bits shaped {self.ancilla.shape}, "
                                     f"want {(shots, self.d_t, self.d - 1)}")
        if self.final_data.shape != (shots, self.d) or \
                self.initial_data.shape != (shots, self.d):
            raise DatasetFormatError("data bit arrays do not match d")
        for arr in (self.ancilla, self.final_data, self.initial_data):
            if arr.max(initial=0) > 1:
                raise DatasetFormatError("raw records must be binary")

    @property
    def shots(self) -> int:
        return self.ancilla.shape[0]


def raw_from_shots(batch: ShotBatch) -> RawRecordBatch:
    """Repackage a sampled repetition-code batch as raw measurement records."""
    circuit = batch.circuit
    if batch.measurements is None:
        raise ValueError("sample with keep_measurements=True to export raw records")
    if circuit.layout.kind != "repetition":
        raise ValueError("raw records are defined for repetition-code runs")
    d = circuit.layout.distance
    d_t = circuit.d_t
    shots = batch.detector_bits.shape[0]
    m = batch.measurements
    anc = np.zeros((shots, d_t, d - 1), dtype=np.uint8)
    for (k, t), mi in circuit.ancilla_meas.items():
        anc[:, t - 1, k] = m[:, mi]
    fin = np.zeros((shots, d), dtype=np.uint8)
    for q, mi in enumerate(circuit.data_meas):
        fin[:, q] = m[:, mi]
    init = np.zeros((shots, d), dtype=np.uint8)  # all-zero reference preparation
    return RawRecordBatch(d, d_t, "Z", anc, fin, init)


def write_raw(data_path, schema_path, batch: RawRecordBatch) -> None:
    """Dense bit-packed rows (LSB first) plus a JSON schema sidecar."""
    n_bits = batch.d_t * (batch.d - 1) + 2 * batch.d
    stride = (n_bits + 7) // 8
    schema = {
        "code": "repetition",
        "d": batch.d,
        "d_t": batch.d_t,
        "basis": batch.basis,
        "row_stride_bytes": stride,
        "bit_order": "lsb0",
        "layout": "ancilla rounds row-major, then final data, then initial data",
        "shots": batch.shots,
    }
    rows = np.concatenate([
        batch.ancilla.reshape(batch.shots, -1),
        batch.final_data,
        batch.initial_data,
    ], axis=1).astype(np.uint8)
    packed = np.packbits(rows, axis=1, bitorder="little")
    with open(schema_path, "w") as f:
        json.dump(schema, f, indent=1)
    packed.tofile(data_path)


def read_raw(data_path, schema_path) -> RawRecordBatch:
    with open(schema_path) as f:
        schema = json.load(f)
    d, d_t = schema["d"], schema["d_t"]
    stride = schema["row_stride_bytes"]
    raw = np.fromfile(data_path, dtype=np.uint8)
    if raw.size % stride:
        raise DatasetFormatError("raw data size is not a multiple of the row stride")
    rows = raw.reshape(-1, stride)
    bits = np.unpackbits(rows, axis=1, bitorder="little")
    n_anc = d_t * (d - 1)
    return RawRecordBatch(
        d=d, d_t=d_t, basis=schema["basis"],
        ancilla=bits[:, :n_anc].reshape(-1, d_t, d - 1),
        final_data=bits[:, n_anc:n_anc + d],
        initial_data=bits[:, n_anc + d:n_anc + 2 * d],
    )


def ingest_raw(batch: RawRecordBatch, layout: CodeLayout | None = None
               ) -> list[DataPoint]:
    """Recompute detectors and labels from raw measurement bits.

    Round-1 detectors compare against the stabilizer values implied by the
    initial data bits, later rounds against the previous round, and the
    final round against the data-readout parities; the label is the parity
    change of the logical-Z support between initial and final data bits.
    """
    layout = layout or build_repetition(batch.d)
    if layout.kind != "repetition" or layout.distance != batch.d:
        raise DatasetFormatError("layout does not match the raw records")
    d, d_t, shots = batch.d, batch.d_t, batch.shots
    anc = batch.ancilla.astype(np.uint8)
    init = batch.initial_data.astype(np.uint8)
    fin = batch.final_data.astype(np.uint8)

    implied0 = init[:, :-1] ^ init[:, 1:]
    impliedF = fin[:, :-1] ^ fin[:, 1:]
    det = np.zeros((shots, d_t + 1, d - 1), dtype=np.uint8)
    det[:, 0] = anc[:, 0] ^ implied0
    for t in range(1, d_t):
        det[:, t] = anc[:, t] ^ anc[:, t - 1]
    det[:, d_t] = impliedF ^ anc[:, d_t - 1]

    lam = np.zeros(shots, dtype=np.uint8)
    for q in layout.logical_z:
        lam ^= init[:, q] ^ fin[:, q]

    anc_x = [s.ancilla_coord[0] for s in layout.stabilizers]
    points = []
    for s in range(shots):
        fired = []
        for t in range(d_t + 1):
            for k in np.flatnonzero(det[s, t]):
                fired.append(DetectorEvent("Z", anc_x[k], 0, t + 1))
        points.append(DataPoint(tuple(fired), int(lam[s]), None, "Z", "raw"))
    return points


def subwindow(batch: RawRecordBatch, d: int) -> list[RawRecordBatch]:
    """Derive all distance-d windows of a distance-D repetition-code run.

    Window at offset w keeps the d-1 interior ancilla streams and the d
    data-qubit columns starting at w; its label is recomputed from the
    window's own initial/final data bits on ingest (a window can flip when
    the full code does not).
    """
    if d > batch.d:
        raise ValueError(f"window distance {d} exceeds record distance {batch.d}")
    if d < 2:
        raise ValueError("window distance must be at least 2")
    windows = []
    for w in range(batch.d - d + 1):
        windows.append(RawRecordBatch(
            d=d, d_t=batch.d_t, basis=batch.basis,
            ancilla=batch.ancilla[:, :, w:w + d - 1].copy(),
            final_data=batch.final_data[:, w:w + d].copy(),
            initial_data=batch.initial_data[:, w:w + d].copy(),
        ))
    return windows


def header_for_circuit(circuit: Circuit, descriptor: str, count: int) -> DatasetHeader:
    mode = "repetition" if circuit.layout.kind == "repetition" else "circuit-surface"
    return DatasetHeader(circuit.layout.kind, circuit.layout.distance, circuit.d_t,
                         circuit.label_basis, mode, descriptor, count)
