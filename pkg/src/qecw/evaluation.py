"""Paired decoder evaluation, failure-rate statistics, timing benchmarks.

Evaluation groups sampled shots by their detector signature so each
decoder runs once per distinct syndrome; all decoders in a comparison
consume the identical shot stream. Reported wall time is therefore
amortized; the bench path times per-graph inference without caching.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import matching, mloracle, nn
from .circuits import Circuit
from .codes import CodeLayout
from .data import DataPoint, DetectorEvent
from .dem import DetectorErrorModel, enumerate_single_faults
from .graphs import build_graph
from .sampler import PerfectBatch, ShotBatch, sample_perfect_shots, sample_shots

DECODER_IDS = ("gnn", "mwpm", "mwpm-uninformed", "mlo", "majority")


def wilson_interval(failures: int, shots: int, z: float = 1.96) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if shots == 0:
        return 0.0, 1.0
    phat = failures / shots
    denom = 1.0 + z * z / shots
    center = (phat + z * z / (2 * shots)) / denom
    half = z * math.sqrt(phat * (1 - phat) / shots + z * z / (4 * shots * shots)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def per_round_rate(p_total: float, d_t: int) -> float:
    """Invert the fidelity decay 1-2P = (1-2eps)^d_t to an error rate per round."""
    if p_total >= 0.5:
        return 0.5
    return 0.5 * (1.0 - (1.0 - 2.0 * p_total) ** (1.0 / d_t))


@dataclass
class EvalResult:
    decoder: str
    code: str
    d: int
    d_t: int
    p: float
    shots: int
    failures: int
    wall_time_per_shot: float
    per_round: float | None = None

    @property
    def failure_rate(self) -> float:
        return self.failures / self.shots if self.shots else 0.0

    @property
    def wilson(self) -> tuple[float, float]:
        return wilson_interval(self.failures, self.shots)

    def to_line(self) -> str:
        lo, hi = self.wilson
        parts = [
            f"decoder={self.decoder}", f"code={self.code}", f"d={self.d}",
            f"dt={self.d_t}", f"p={self.p:g}", f"shots={self.shots}",
            f"failures={self.failures}", f"rate={self.failure_rate:.6g}",
            f"wilson95=[{lo:.6g},{hi:.6g}]",
        ]
        if self.per_round is not None:
            parts.append(f"per_round={self.per_round:.6g}")
        parts.append(f"time_per_shot={self.wall_time_per_shot:.3e}s")
        return " ".join(parts)


# ---------------------------------------------------------------------------
# signature tables: unique (fired detectors, label) rows with counts

@dataclass
class SignatureTable:
    """Distinct (detector signature, measured label) pairs with shot counts."""

    fired: list[tuple[int, ...]]   # indices into the detector table
    labels: np.ndarray             # int (n,) label bits (bit0 Z, bit1 X)
    counts: np.ndarray             # int (n,)
    label_mask: int                # which label bits are meaningful
    shots: int

    @property
    def n_rows(self) -> int:
        return len(self.fired)

    def unique_signatures(self) -> tuple[list[tuple[int, ...]], np.ndarray]:
        """De-duplicated signatures and the row -> signature index map."""
        seen: dict[tuple[int, ...], int] = {}
        inverse = np.zeros(self.n_rows, dtype=np.int64)
        sigs: list[tuple[int, ...]] = []
        for i, f in enumerate(self.fired):
            k = seen.get(f)
            if k is None:
                k = len(sigs)
                seen[f] = k
                sigs.append(f)
            inverse[i] = k
        return sigs, inverse


def _group_rows(bits: np.ndarray, labels: np.ndarray, label_mask: int) -> SignatureTable:
    rows = np.concatenate([
        np.packbits(bits, axis=1, bitorder="little"),
        labels.astype(np.uint8).reshape(-1, 1),
    ], axis=1)
    uniq, counts = np.unique(rows, axis=0, return_counts=True)
    n_det = bits.shape[1]
    fired = []
    labs = np.zeros(len(uniq), dtype=np.int64)
    for i, row in enumerate(uniq):
        det_bits = np.unpackbits(row[:-1], bitorder="little")[:n_det]
        fired.append(tuple(np.flatnonzero(det_bits)))
        labs[i] = row[-1]
    return SignatureTable(fired, labs, counts.astype(np.int64), label_mask, bits.shape[0])


def signature_table_circuit(batch: ShotBatch) -> SignatureTable:
    mask = 1 if batch.circuit.label_basis == "Z" else 2
    labels = batch.labels.astype(np.uint8)
    if batch.circuit.label_basis == "X":
        labels = labels << 1
    return _group_rows(batch.detector_bits, labels, mask)


def signature_table_perfect(batch: PerfectBatch) -> SignatureTable:
    labels = batch.lam_z.astype(np.uint8) | (batch.lam_x.astype(np.uint8) << 1)
    return _group_rows(batch.detector_bits, labels, 3)


# ---------------------------------------------------------------------------
# per-signature decoders (circuit-level)

class CircuitGnnDecoder:
    def __init__(self, model: nn.Model):
        self.model = model

    def predict(self, circuit: Circuit, sigs: list[tuple[int, ...]]) -> np.ndarray:
        mode = self.model.config.feature_mode
        want = "repetition" if circuit.layout.kind == "repetition" else "circuit-surface"
        if mode != want:
            raise ValueError(f"checkpoint feature mode {mode!r} does not fit {want!r}")
        dets = circuit.detectors
        graphs = []
        for f in sigs:
            events = tuple(DetectorEvent(dets[k].stab_type, dets[k].x, dets[k].y,
                                         dets[k].t) for k in f)
            graphs.append(build_graph(
                DataPoint(events, 0, None, circuit.label_basis, "eval"), mode))
        probs = nn.predict_proba(self.model, graphs)
        head = self.model.config.heads.index(circuit.label_basis) \
            if circuit.label_basis in self.model.config.heads else 0
        bit = 0 if circuit.label_basis == "Z" else 1
        return (probs[:, head] > 0.5).astype(np.int64) << bit


class CircuitMwpmDecoder:
    """Informed (DEM-weighted) or uninformed (1-norm) matching decoder."""

    def __init__(self, informed: bool, dem: DetectorErrorModel | None = None):
        self.informed = informed
        self.dem = dem
        self._graphs = None

    def predict(self, circuit: Circuit, sigs: list[tuple[int, ...]]) -> np.ndarray:
        basis = circuit.label_basis
        dets = circuit.detectors
        bit = 0 if basis == "Z" else 1
        out = np.zeros(len(sigs), dtype=np.int64)
        if self.informed:
            if self._graphs is None:
                dem = self.dem or enumerate_single_faults(circuit)
                self._graphs = matching.build_informed(dem)
            g = self._graphs[basis]
            for i, f in enumerate(sigs):
                fired = [g.index_of((dets[k].x, dets[k].y, dets[k].t))
                         for k in f if dets[k].stab_type == basis]
                out[i] = matching.decode(g, fired) << bit
        else:
            for i, f in enumerate(sigs):
                events = [DetectorEvent(dets[k].stab_type, dets[k].x, dets[k].y,
                                        dets[k].t) for k in f]
                g = matching.build_uninformed(events, circuit.layout, basis)
                out[i] = matching.decode(g, list(range(g.n_nodes))) << bit
        return out


class MajorityDecoder:
    """Repetition code: lighter-coset vote on the cumulative syndrome.

    XOR of a detector chain over all rounds telescopes to the net change of
    that stabilizer between initialization and final readout, so the vote
    sees the net data-error syndrome; measurement errors cancel.
    """

    def predict(self, circuit: Circuit, sigs: list[tuple[int, ...]]) -> np.ndarray:
        layout = circuit.layout
        if layout.kind != "repetition":
            # surface-code "majority of nothing" baseline: always identity
            return np.zeros(len(sigs), dtype=np.int64)
        dets = circuit.detectors
        d = layout.distance
        anc_index = {s.ancilla_coord[0]: k for k, s in enumerate(layout.stabilizers)}
        out = np.zeros(len(sigs), dtype=np.int64)
        for i, f in enumerate(sigs):
            net = [0] * (d - 1)
            for k in f:
                net[anc_index[dets[k].x]] ^= 1
            e = [0] * d
            for q in range(1, d):
                e[q] = e[q - 1] ^ net[q - 1]
            # pick the lighter of the two consistent patterns; ties (even d)
            # keep e, whose logical-support parity is 0
            cand = e if 2 * sum(e) <= d else [1 - b for b in e]
            flip = 0
            for q in layout.logical_z:
                flip ^= cand[q]
            out[i] = flip
        return out


def make_circuit_decoder(name: str, model: nn.Model | None = None,
                         dem: DetectorErrorModel | None = None):
    if name == "gnn":
        if model is None:
            raise ValueError("gnn decoder needs a checkpoint")
        return CircuitGnnDecoder(model)
    if name == "mwpm":
        return CircuitMwpmDecoder(True, dem)
    if name == "mwpm-uninformed":
        return CircuitMwpmDecoder(False)
    if name == "majority":
        return MajorityDecoder()
    raise ValueError(f"decoder {name!r} not available for circuit-level data")


def evaluate_circuit(decoders: dict[str, object], circuit: Circuit, shots: int,
                     seed: int, p: float, stream: int = 0) -> dict[str, EvalResult]:
    batch = sample_shots(circuit, seed, shots, stream=stream)
    table = signature_table_circuit(batch)
    sigs, inverse = table.unique_signatures()
    results = {}
    for name, dec in decoders.items():
        t0 = time.perf_counter()
        preds = dec.predict(circuit, sigs)
        dt = time.perf_counter() - t0
        wrong = (preds[inverse] & table.label_mask) != (table.labels & table.label_mask)
        failures = int(table.counts[wrong].sum())
        results[name] = EvalResult(
            decoder=name, code=circuit.layout.kind, d=circuit.layout.distance,
            d_t=circuit.d_t, p=p, shots=table.shots, failures=failures,
            wall_time_per_shot=dt / table.shots,
            per_round=per_round_rate(failures / table.shots, circuit.d_t),
        )
    return results


# ---------------------------------------------------------------------------
# perfect-stabilizer decoders: predictions carry both label bits

class PerfectGnnDecoder:
    def __init__(self, model: nn.Model):
        if model.config.feature_mode != "perfect-surface":
            raise ValueError("checkpoint feature mode does not fit perfect-stabilizer data")
        self.model = model

    def predict(self, layout: CodeLayout, p: float,
                sigs: list[tuple[int, ...]]) -> np.ndarray:
        stabs = layout.stabilizers
        graphs = []
        for f in sigs:
            events = tuple(DetectorEvent(stabs[k].pauli_type, *stabs[k].ancilla_coord, 0)
                           for k in f)
            graphs.append(build_graph(DataPoint(events, 0, 0, "ZX", "eval"),
                                      "perfect-surface"))
        probs = nn.predict_proba(self.model, graphs)
        hz = self.model.config.heads.index("Z")
        hx = self.model.config.heads.index("X")
        return ((probs[:, hz] > 0.5).astype(np.int64)
                | ((probs[:, hx] > 0.5).astype(np.int64) << 1))


class PerfectMwpmDecoder:
    def __init__(self, informed: bool):
        self.informed = informed
        self._graphs = None

    def predict(self, layout: CodeLayout, p: float,
                sigs: list[tuple[int, ...]]) -> np.ndarray:
        stabs = layout.stabilizers
        z_local = {k: i for i, k in
                   enumerate(k for k, s in enumerate(stabs) if s.pauli_type == "Z")}
        x_local = {k: i for i, k in
                   enumerate(k for k, s in enumerate(stabs) if s.pauli_type == "X")}
        if self.informed and self._graphs is None:
            self._graphs = matching.build_informed_perfect(layout, p)
        out = np.zeros(len(sigs), dtype=np.int64)
        for i, f in enumerate(sigs):
            if self.informed:
                gz, gx = self._graphs["Z"], self._graphs["X"]
                fz = [z_local[k] for k in f if k in z_local]
                fx = [x_local[k] for k in f if k in x_local]
            else:
                events = [DetectorEvent(stabs[k].pauli_type, *stabs[k].ancilla_coord, 0)
                          for k in f]
                gz = matching.build_uninformed(events, layout, "Z")
                gx = matching.build_uninformed(events, layout, "X")
                fz = list(range(gz.n_nodes))
                fx = list(range(gx.n_nodes))
            out[i] = matching.decode(gz, fz) | (matching.decode(gx, fx) << 1)
        return out


class PerfectMlOracleDecoder:
    def predict(self, layout: CodeLayout, p: float,
                sigs: list[tuple[int, ...]]) -> np.ndarray:
        out = np.zeros(len(sigs), dtype=np.int64)
        for i, f in enumerate(sigs):
            fz, fx = mloracle.ml_decode(layout, mloracle.syndrome_index(layout, f), p)
            out[i] = fz | (fx << 1)
        return out


class PerfectIdentityDecoder:
    def predict(self, layout, p, sigs) -> np.ndarray:
        return np.zeros(len(sigs), dtype=np.int64)


def make_perfect_decoder(name: str, model: nn.Model | None = None):
    if name == "gnn":
        if model is None:
            raise ValueError("gnn decoder needs a checkpoint")
        return PerfectGnnDecoder(model)
    if name == "mwpm":
        return PerfectMwpmDecoder(True)
    if name == "mwpm-uninformed":
        return PerfectMwpmDecoder(False)
    if name == "mlo":
        return PerfectMlOracleDecoder()
    if name == "majority":
        return PerfectIdentityDecoder()
    raise ValueError(f"unknown decoder {name!r}")


def evaluate_perfect(decoders: dict[str, object], layout: CodeLayout, p: float,
                     shots: int, seed: int, stream: int = 0) -> dict[str, EvalResult]:
    batch = sample_perfect_shots(layout, p, seed, shots, stream=stream)
    table = signature_table_perfect(batch)
    sigs, inverse = table.unique_signatures()
    results = {}
    for name, dec in decoders.items():
        t0 = time.perf_counter()
        preds = dec.predict(layout, p, sigs)
        dt = time.perf_counter() - t0
        wrong = preds[inverse] != table.labels
        failures = int(table.counts[wrong].sum())
        results[name] = EvalResult(
            decoder=name, code=layout.kind, d=layout.distance, d_t=0, p=p,
            shots=table.shots, failures=failures,
            wall_time_per_shot=dt / table.shots,
        )
    return results


def merge_eval_results(a: EvalResult, b: EvalResult) -> EvalResult:
    """Combine two chunks of the same paired evaluation."""
    shots = a.shots + b.shots
    rate = (a.failures + b.failures) / shots if shots else 0.0
    return EvalResult(
        decoder=a.decoder, code=a.code, d=a.d, d_t=a.d_t, p=a.p,
        shots=shots, failures=a.failures + b.failures,
        wall_time_per_shot=(a.wall_time_per_shot * a.shots
                            + b.wall_time_per_shot * b.shots) / shots,
        per_round=per_round_rate(rate, a.d_t) if a.per_round is not None else None,
    )


# ---------------------------------------------------------------------------
# timing benchmark and the decode-time scaling fit

@dataclass
class ScalingFit:
    points: list[tuple[int, int, float]]  # (d, d_t, mean decode seconds)
    coefficient: float
    alpha: float
    residuals: list[float]

    def to_lines(self) -> list[str]:
        lines = [
            f"fit T = C * (d^2*d_t)^alpha: C={self.coefficient:.3e} alpha={self.alpha:.3f}"
        ]
        for (d, d_t, t), r in zip(self.points, self.residuals):
            lines.append(f"point d={d} dt={d_t} T={t:.3e}s log_residual={r:+.3f}")
        return lines


def fit_scaling(points: list[tuple[int, int, float]]) -> ScalingFit:
    if len(points) < 4:
        raise ValueError("scaling fit needs at least 4 points")
    vol = np.array([d * d * max(dt, 1) for d, dt, _ in points], dtype=float)
    t = np.array([p[2] for p in points])
    alpha, logc = np.polyfit(np.log(vol), np.log(t), 1)
    resid = np.log(t) - (logc + alpha * np.log(vol))
    return ScalingFit(points, float(np.exp(logc)), float(alpha),
                      [float(r) for r in resid])


def bench_gnn_perfect(model: nn.Model, layout: CodeLayout, p: float, shots: int,
                      seed: int) -> tuple[float, float]:
    """(mean decode seconds, mean graph-construction seconds) per shot.

    Graphs are built first and inference is timed one graph at a time, so
    the decode series excludes construction and batching effects.
    """
    batch = sample_perfect_shots(layout, p, seed, shots)
    points = batch.to_datapoints()
    t0 = time.perf_counter()
    graphs = [build_graph(pt, "perfect-surface") for pt in points]
    t_build = (time.perf_counter() - t0) / len(points)
    nonempty = [g for g in graphs if g.n_nodes > 0] or graphs
    t0 = time.perf_counter()
    for g in nonempty:
        nn.predict_proba(model, [g])
    t_decode = (time.perf_counter() - t0) / len(nonempty)
    return t_decode, t_build
