"""Surface-code layout on a rectangular qubit grid, with frames and homology.

Qubits sit on the vertices of an ``height x width`` grid.  Checks are
plaquettes in two colours: interior faces act on their four corner qubits,
and a subset of boundary dominoes act on two edge qubits.  The two colours
alternate like a checkerboard, X-type on even face parity.  Exactly
``n_qubits - 1`` independent commuting checks survive, leaving one encoded
qubit whose Z logical runs down the left column and whose X logical runs
along the bottom row.

Rather than hard-coding which boundary dominoes survive for every grid
shape, ``build_lattice`` tries the small set of per-edge colour choices in a
fixed preference order and keeps the first one that passes a full
stabilizer-group audit (commutation, GF(2) independence, logical algebra).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

PAULIS = ("I", "X", "Y", "Z")


class LatticeError(ValueError):
    """Raised when no valid check layout exists for the requested shape."""


@dataclass(frozen=True)
class Face:
    """One check: a coloured plaquette acting on two or four qubits.

    ``row``/``col`` locate the face in plaquette coordinates; boundary
    dominoes carry a coordinate of -1 or height-1 / width-1 just outside the
    grid.  ``kind`` is ``"x"`` or ``"z"``.  ``mask`` holds the acted-on
    qubits as a bitmask over row-major qubit indices.
    """

    row: int
    col: int
    kind: str
    qubits: tuple
    mask: int


@dataclass(frozen=True)
class PauliFrame:
    """A Pauli operator on the grid, up to global phase.

    ``x_mask`` and ``z_mask`` are bitmasks over row-major qubit indices; a
    qubit flagged in both carries Y.  Composition is mask XOR (phases are
    not tracked).
    """

    x_mask: int = 0
    z_mask: int = 0

    def compose(self, other: "PauliFrame") -> "PauliFrame":
        return PauliFrame(self.x_mask ^ other.x_mask, self.z_mask ^ other.z_mask)

    @property
    def weight(self) -> int:
        return (self.x_mask | self.z_mask).bit_count()

    def op_at(self, index: int) -> str:
        x = (self.x_mask >> index) & 1
        z = (self.z_mask >> index) & 1
        return ("I", "X", "Z", "Y")[x + 2 * z]


@dataclass(frozen=True)
class Syndrome:
    """Measured check outcomes, one bit per check in the lattice order."""

    bits: tuple

    @property
    def weight(self) -> int:
        return sum(self.bits)

    def as_int(self) -> int:
        out = 0
        for i, b in enumerate(self.bits):
            out |= (b & 1) << i
        return out

    @classmethod
    def from_int(cls, value: int, n_checks: int) -> "Syndrome":
        return cls(tuple((value >> i) & 1 for i in range(n_checks)))


def _gf2_rank(rows) -> int:
    rank = 0
    pivots = []
    for row in rows:
        for p in pivots:
            row = min(row, row ^ p)
        if row:
            pivots.append(row)
            rank += 1
    return rank


@dataclass
class Lattice:
    """A built surface-code layout with fast mask-based frame operations."""

    height: int
    width: int
    checks: tuple = field(repr=False)
    x_checks: tuple = field(repr=False)
    z_checks: tuple = field(repr=False)
    x_logical_mask: int = field(repr=False, default=0)
    z_logical_mask: int = field(repr=False, default=0)
    _face_by_pos: dict = field(repr=False, default_factory=dict)

    @property
    def n_qubits(self) -> int:
        return self.height * self.width

    @property
    def n_checks(self) -> int:
        return len(self.checks)

    def qubit_index(self, row: int, col: int) -> int:
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise ValueError(f"qubit ({row},{col}) outside {self.height}x{self.width}")
        return row * self.width + col

    def face_at(self, row: int, col: int):
        """The check at plaquette position (row, col), or None."""
        return self._face_by_pos.get((row, col))

    # -- frames --------------------------------------------------------------

    def frame_from_ops(self, ops: dict) -> PauliFrame:
        """Build a frame from a mapping ``(row, col) -> 'X'|'Y'|'Z'``."""
        x_mask = z_mask = 0
        for (r, c), op in ops.items():
            bit = 1 << self.qubit_index(r, c)
            if op in ("X", "Y"):
                x_mask ^= bit
            if op in ("Z", "Y"):
                z_mask ^= bit
            if op not in ("I", "X", "Y", "Z"):
                raise ValueError(f"unknown Pauli {op!r}")
        return PauliFrame(x_mask, z_mask)

    def frame_ops(self, frame: PauliFrame) -> dict:
        out = {}
        for r in range(self.height):
            for c in range(self.width):
                op = frame.op_at(self.qubit_index(r, c))
                if op != "I":
                    out[(r, c)] = op
        return out

    def logical_frame(self, label: str) -> PauliFrame:
        """The representative logical frame for 'I', 'X', 'Y' or 'Z'.

        X runs along the bottom row, Z down the left column; Y is their
        product (global phase dropped).
        """
        if label not in PAULIS:
            raise ValueError(f"unknown logical label {label!r}")
        x_mask = self.x_logical_mask if label in ("X", "Y") else 0
        z_mask = self.z_logical_mask if label in ("Z", "Y") else 0
        return PauliFrame(x_mask, z_mask)

    # -- syndromes -----------------------------------------------------------

    def syndrome_of(self, frame: PauliFrame) -> Syndrome:
        """Check outcomes flipped by ``frame`` (0 for +1, 1 for -1)."""
        bits = []
        for face in self.checks:
            if face.kind == "x":
                flip = (frame.z_mask & face.mask).bit_count() & 1
            else:
                flip = (frame.x_mask & face.mask).bit_count() & 1
            bits.append(flip)
        return Syndrome(tuple(bits))

    def recovery_frame(self, syndrome: Syndrome) -> PauliFrame:
        """A deterministic frame producing ``syndrome``.

        Every flagged X check is cleared by a Z string running from the face
        to the top edge; every flagged Z check by an X string running to the
        left edge.  The strings of all flagged checks are composed.
        """
        if len(syndrome.bits) != self.n_checks:
            raise ValueError("syndrome length does not match check count")
        x_mask = z_mask = 0
        for face, bit in zip(self.checks, syndrome.bits):
            if not bit:
                continue
            if face.kind == "x":
                col = max(face.col, 0)
                for r in range(face.row + 1):
                    z_mask ^= 1 << self.qubit_index(r, col)
            else:
                row = max(face.row, 0)
                for c in range(face.col + 1):
                    x_mask ^= 1 << self.qubit_index(row, c)
        frame = PauliFrame(x_mask, z_mask)
        return frame

    def homology_class(self, frame: PauliFrame) -> str:
        """Which logical a syndrome-free frame implements ('I','X','Y','Z').

        Determined by overlap parities with the crossing logical strings; a
        frame with a non-trivial syndrome has no class and raises.
        """
        if any(self.syndrome_of(frame).bits):
            raise ValueError("frame has a non-trivial syndrome")
        a = (frame.x_mask & self.z_logical_mask).bit_count() & 1
        b = (frame.z_mask & self.x_logical_mask).bit_count() & 1
        return ("I", "X", "Z", "Y")[a + 2 * b]

    # -- serialization -------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "checks": [
                {
                    "row": f.row,
                    "col": f.col,
                    "kind": f.kind,
                    "qubits": [list(q) for q in f.qubits],
                }
                for f in self.checks
            ],
            "x_logical": [
                [r, c]
                for r in range(self.height)
                for c in range(self.width)
                if (self.x_logical_mask >> (r * self.width + c)) & 1
            ],
            "z_logical": [
                [r, c]
                for r in range(self.height)
                for c in range(self.width)
                if (self.z_logical_mask >> (r * self.width + c)) & 1
            ],
        }


def _face_colour(row: int, col: int) -> str:
    return "x" if (row + col) % 2 == 0 else "z"


def _candidate_faces(height: int, width: int, edge_colours: dict):
    """All interior faces plus the boundary dominoes kept by ``edge_colours``."""
    faces = []
    for fr in range(height - 1):
        for fc in range(width - 1):
            qubits = ((fr, fc), (fr, fc + 1), (fr + 1, fc), (fr + 1, fc + 1))
            faces.append((fr, fc, _face_colour(fr, fc), qubits))
    for fc in range(width - 1):
        colour = _face_colour(-1, fc)
        if colour == edge_colours["top"]:
            faces.append((-1, fc, colour, ((0, fc), (0, fc + 1))))
        colour = _face_colour(height - 1, fc)
        if colour == edge_colours["bottom"]:
            faces.append((height - 1, fc, colour, ((height - 1, fc), (height - 1, fc + 1))))
    for fr in range(height - 1):
        colour = _face_colour(fr, -1)
        if colour == edge_colours["left"]:
            faces.append((fr, -1, colour, ((fr, 0), (fr + 1, 0))))
        colour = _face_colour(fr, width - 1)
        if colour == edge_colours["right"]:
            faces.append((fr, width - 1, colour, ((fr, width - 1), (fr + 1, width - 1))))
    return faces


def _audit(height: int, width: int, faces, x_logical_mask: int, z_logical_mask: int) -> bool:
    """Full stabilizer-group audit of a candidate check set."""
    n = height * width
    if len(faces) != n - 1:
        return False
    masks = []
    for _, _, kind, qubits in faces:
        mask = 0
        for r, c in qubits:
            mask |= 1 << (r * width + c)
        masks.append((kind, mask))
    # pairwise commutation: differing kinds must overlap on an even qubit set
    for i in range(len(masks)):
        for j in range(i + 1, len(masks)):
            if masks[i][0] != masks[j][0]:
                if (masks[i][1] & masks[j][1]).bit_count() & 1:
                    return False
    # GF(2) independence in symplectic form (x part | z part)
    rows = []
    for kind, mask in masks:
        rows.append(mask if kind == "x" else (mask << n))
    if _gf2_rank(rows) != n - 1:
        return False
    # logicals: commute with every check, anticommute with each other
    for kind, mask in masks:
        if kind == "x" and (mask & z_logical_mask).bit_count() & 1:
            return False
        if kind == "z" and (mask & x_logical_mask).bit_count() & 1:
            return False
    if not (x_logical_mask & z_logical_mask).bit_count() & 1:
        return False
    return True


def build_lattice(height: int, width: int) -> Lattice:
    """Construct the surface-code layout on a ``height x width`` qubit grid.

    Both dimensions must be at least 2.  The per-edge boundary colour
    choices are tried in a fixed preference order (top and bottom keeping
    z-coloured dominoes, left and right keeping x-coloured, first) and the
    first choice passing the stabilizer audit wins, so construction is
    deterministic and every returned lattice is verified.
    """
    if height < 2 or width < 2:
        raise LatticeError("both grid dimensions must be at least 2")

    n = height * width
    x_logical_mask = 0
    for c in range(width):
        x_logical_mask |= 1 << ((height - 1) * width + c)
    z_logical_mask = 0
    for r in range(height):
        z_logical_mask |= 1 << (r * width + 0)

    preferred = ("z", "z", "x", "x")
    candidates = sorted(
        itertools.product("zx", repeat=4),
        key=lambda t: (sum(a != b for a, b in zip(t, preferred)), t),
    )
    for top, bottom, left, right in candidates:
        colours = {"top": top, "bottom": bottom, "left": left, "right": right}
        faces = _candidate_faces(height, width, colours)
        if len(faces) != n - 1:
            continue
        if not _audit(height, width, faces, x_logical_mask, z_logical_mask):
            continue
        built = []
        for fr, fc, kind, qubits in faces:
            mask = 0
            for r, c in qubits:
                mask |= 1 << (r * width + c)
            built.append(Face(fr, fc, kind, tuple(sorted(qubits)), mask))
        x_checks = tuple(sorted((f for f in built if f.kind == "x"),
                                key=lambda f: (f.row, f.col)))
        z_checks = tuple(sorted((f for f in built if f.kind == "z"),
                                key=lambda f: (f.row, f.col)))
        checks = x_checks + z_checks
        return Lattice(
            height=height,
            width=width,
            checks=checks,
            x_checks=x_checks,
            z_checks=z_checks,
            x_logical_mask=x_logical_mask,
            z_logical_mask=z_logical_mask,
            _face_by_pos={(f.row, f.col): f for f in checks},
        )
    raise LatticeError(f"no valid check layout for a {height}x{width} grid")
