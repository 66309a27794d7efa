"""Shared shot-level records: detector events, data points, feature modes."""

from __future__ import annotations

from dataclasses import dataclass

# Node feature layouts the decoder understands. Width per mode:
#   circuit-surface: (b1, b2, x, y, t)   one-hot stabilizer type + space-time
#   perfect-surface: (b1, b2, x, y)      single perfect readout, no time axis
#   repetition:      (x, t)              one stabilizer type, 1D space
FEATURE_MODES = ("circuit-surface", "perfect-surface", "repetition")
FEATURE_DIMS = {"circuit-surface": 5, "perfect-surface": 4, "repetition": 2}


@dataclass(frozen=True)
class DetectorEvent:
    """A fired detector: stabilizer type plus space-time coordinate.

    x and y are doubled grid coordinates (ancillas live on half-integers),
    t is the measurement round, 0 for perfect-stabilizer data.
    """

    stab_type: str  # "X" or "Z"
    x: int
    y: int
    t: int

    def features(self, mode: str) -> tuple[float, ...]:
        if mode == "circuit-surface":
            b = (1.0, 0.0) if self.stab_type == "X" else (0.0, 1.0)
            return (*b, self.x / 2.0, self.y / 2.0, float(self.t))
        if mode == "perfect-surface":
            b = (1.0, 0.0) if self.stab_type == "X" else (0.0, 1.0)
            return (*b, self.x / 2.0, self.y / 2.0)
        if mode == "repetition":
            return (self.x / 2.0, float(self.t))
        raise ValueError(f"unknown feature mode {mode!r}")


@dataclass(frozen=True)
class DataPoint:
    """One memory-experiment shot: detectors plus measured logical label(s).

    lam_z / lam_x are None when that label was not measured; a memory-Z
    experiment carries only lam_z, perfect-stabilizer sampling carries both.
    """

    detectors: tuple[DetectorEvent, ...]
    lam_z: int | None
    lam_x: int | None
    basis: str   # "Z", "X", or "ZX" when both labels are available
    source: str  # noise descriptor or external-dataset id

    def label(self, head: str) -> int | None:
        return self.lam_z if head == "Z" else self.lam_x
