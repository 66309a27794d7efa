"""Code geometry: repetition and rotated surface code layouts.

Coordinates are stored as twice their grid value so that ancilla positions
(half-integers) stay exact integers. Data qubits of a distance-d surface
code sit at doubled coordinates (2i, 2j) with i, j in 0..d-1; x grows east,
y grows south. The logical Z string runs along the north edge (y = 0), the
logical X string along the west edge (x = 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class StabilizerDef:
    """One stabilizer generator: Pauli type, data-qubit support, ancilla spot."""

    pauli_type: str            # "X" or "Z"
    support: tuple[int, ...]   # data-qubit indices
    ancilla_coord: tuple[int, int]  # doubled grid coordinates


@dataclass(frozen=True)
class CodeLayout:
    """Immutable description of one code instance."""

    kind: str                  # "repetition" or "rotated-surface"
    distance: int
    data_coords: tuple[tuple[int, int], ...]  # doubled coords, index order
    stabilizers: tuple[StabilizerDef, ...]
    logical_z: tuple[int, ...]
    logical_x: tuple[int, ...]

    @property
    def n_data(self) -> int:
        return len(self.data_coords)

    def stabilizers_of_type(self, pauli_type: str) -> list[StabilizerDef]:
        return [s for s in self.stabilizers if s.pauli_type == pauli_type]


class LayoutError(ValueError):
    """Raised for invalid construction parameters."""


def build_rotated_surface(d: int) -> CodeLayout:
    """Distance-d rotated surface code: d^2 data qubits, d^2-1 stabilizers.

    Interior plaquettes follow a checkerboard with the Z plaquette in the
    northwest corner cell; weight-2 X stabilizers sit on the north/south
    edges, weight-2 Z stabilizers on the east/west edges. This puts the
    logical Z (north row) and logical X (west column) strings on boundaries
    they commute with.
    """
    if d < 3 or d % 2 == 0:
        raise LayoutError(f"rotated surface code needs odd distance >= 3, got {d}")

    data_coords = tuple((2 * i, 2 * j) for j in range(d) for i in range(d))
    index = {c: k for k, c in enumerate(data_coords)}

    def cell_support(i: int, j: int) -> tuple[int, ...]:
        # data qubits on the four corners of cell (i, j); corners outside
        # the grid are dropped (boundary half-plaquettes)
        qs = []
        for di in (0, 1):
            for dj in (0, 1):
                c = (2 * (i + di), 2 * (j + dj))
                if c in index:
                    qs.append(index[c])
        return tuple(sorted(qs))

    stabs: list[StabilizerDef] = []
    # interior cells: Z-type iff (i + j) even
    for j in range(d - 1):
        for i in range(d - 1):
            ptype = "Z" if (i + j) % 2 == 0 else "X"
            stabs.append(StabilizerDef(ptype, cell_support(i, j), (2 * i + 1, 2 * j + 1)))
    # north (j = -1) and south (j = d-1) half cells carry X stabilizers
    for i in range(d - 1):
        if i % 2 == 0:
            stabs.append(StabilizerDef("X", cell_support(i, -1), (2 * i + 1, -1)))
        else:
            stabs.append(StabilizerDef("X", cell_support(i, d - 1), (2 * i + 1, 2 * d - 1)))
    # west (i = -1) and east (i = d-1) half cells carry Z stabilizers
    for j in range(d - 1):
        if j % 2 == 1:
            stabs.append(StabilizerDef("Z", cell_support(-1, j), (-1, 2 * j + 1)))
        else:
            stabs.append(StabilizerDef("Z", cell_support(d - 1, j), (2 * d - 1, 2 * j + 1)))

    logical_z = tuple(index[(2 * i, 0)] for i in range(d))       # north row
    logical_x = tuple(index[(0, 2 * j)] for j in range(d))       # west column
    return CodeLayout(
        kind="rotated-surface",
        distance=d,
        data_coords=data_coords,
        stabilizers=tuple(stabs),
        logical_z=logical_z,
        logical_x=logical_x,
    )


def build_repetition(d: int) -> CodeLayout:
    """Distance-d repetition code: d qubits in a line, d-1 ZZ stabilizers."""
    if d < 2:
        raise LayoutError(f"repetition code needs distance >= 2, got {d}")
    data_coords = tuple((2 * i, 0) for i in range(d))
    stabs = tuple(
        StabilizerDef("Z", (i, i + 1), (2 * i + 1, 0)) for i in range(d - 1)
    )
    return CodeLayout(
        kind="repetition",
        distance=d,
        data_coords=data_coords,
        stabilizers=stabs,
        logical_z=(0,),
        logical_x=tuple(range(d)),
    )


def commutes(a_type: str, a_support: tuple[int, ...],
             b_type: str, b_support: tuple[int, ...]) -> bool:
    """Symplectic commutation of two single-type Pauli products.

    Same-type products always commute; opposite types anticommute iff their
    supports overlap on an odd number of qubits.
    """
    if a_type == b_type:
        return True
    overlap = len(set(a_support) & set(b_support))
    return overlap % 2 == 0


def validate(layout: CodeLayout) -> list[str]:
    """Return a list of invariant violations; empty iff the layout is sound."""
    violations: list[str] = []
    d = layout.distance
    n_stab = len(layout.stabilizers)

    if layout.kind == "rotated-surface":
        want = d * d - 1
        if n_stab != want:
            violations.append(f"stabilizer count {n_stab} != d^2-1 = {want}")
        n_z = len(layout.stabilizers_of_type("Z"))
        n_x = len(layout.stabilizers_of_type("X"))
        if n_z != want // 2 or n_x != want // 2:
            violations.append(f"type split Z={n_z} X={n_x}, expected {want // 2} each")
        for s in layout.stabilizers:
            if len(s.support) not in (2, 4):
                violations.append(f"stabilizer at {s.ancilla_coord} has weight {len(s.support)}")
    elif layout.kind == "repetition":
        if n_stab != d - 1:
            violations.append(f"stabilizer count {n_stab} != d-1 = {d - 1}")
        for s in layout.stabilizers:
            if s.pauli_type != "Z" or len(s.support) != 2:
                violations.append(f"stabilizer at {s.ancilla_coord} is not a weight-2 Z")
    else:
        violations.append(f"unknown code kind {layout.kind!r}")

    coords = [s.ancilla_coord for s in layout.stabilizers]
    if len(set(coords)) != len(coords):
        violations.append("duplicate ancilla coordinates")

    for i, a in enumerate(layout.stabilizers):
        for b in layout.stabilizers[i + 1:]:
            if not commutes(a.pauli_type, a.support, b.pauli_type, b.support):
                violations.append(
                    f"stabilizers at {a.ancilla_coord} and {b.ancilla_coord} anticommute"
                )

    for s in layout.stabilizers:
        if not commutes("Z", tuple(layout.logical_z), s.pauli_type, s.support):
            violations.append(f"logical Z anticommutes with stabilizer at {s.ancilla_coord}")
        if not commutes("X", tuple(layout.logical_x), s.pauli_type, s.support):
            violations.append(f"logical X anticommutes with stabilizer at {s.ancilla_coord}")

    if layout.kind == "rotated-surface":
        if commutes("Z", tuple(layout.logical_z), "X", tuple(layout.logical_x)):
            violations.append("logical Z and logical X commute")

    return violations
