"""Tests for the surface-code layout, syndromes, frames and homology.

The distance-3 layout is pinned against hand-derived face sets, and the
stabilizer-group properties are re-checked here with an independent
numpy-based GF(2) elimination rather than the builder's internal audit.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tncode.lattice import (
    Lattice,
    LatticeError,
    PauliFrame,
    Syndrome,
    build_lattice,
)


def gf2_rank_numpy(mat):
    """Row-reduce a 0/1 matrix over GF(2) and return its rank."""
    m = np.array(mat, dtype=np.uint8) % 2
    rank = 0
    rows, cols = m.shape
    for c in range(cols):
        pivot = None
        for r in range(rank, rows):
            if m[r, c]:
                pivot = r
                break
        if pivot is None:
            continue
        m[[rank, pivot]] = m[[pivot, rank]]
        for r in range(rows):
            if r != rank and m[r, c]:
                m[r] ^= m[rank]
        rank += 1
    return rank


def symplectic_rows(lat):
    """(x part | z part) rows for every check, as a numpy 0/1 matrix."""
    n = lat.n_qubits
    rows = []
    for face in lat.checks:
        row = np.zeros(2 * n, dtype=np.uint8)
        for r, c in face.qubits:
            idx = lat.qubit_index(r, c)
            if face.kind == "x":
                row[idx] = 1
            else:
                row[n + idx] = 1
        rows.append(row)
    return np.array(rows, dtype=np.uint8)


def face_set(lat, kind):
    return {
        (f.row, f.col): set(f.qubits) for f in lat.checks if f.kind == kind
    }


class TestDistanceThreeLayout:
    lat = build_lattice(3, 3)

    def test_check_count(self):
        assert self.lat.n_checks == 8

    def test_x_faces_pinned(self):
        assert face_set(self.lat, "x") == {
            (0, 0): {(0, 0), (0, 1), (1, 0), (1, 1)},
            (1, 1): {(1, 1), (1, 2), (2, 1), (2, 2)},
            (1, -1): {(1, 0), (2, 0)},
            (0, 2): {(0, 2), (1, 2)},
        }

    def test_z_faces_pinned(self):
        assert face_set(self.lat, "z") == {
            (0, 1): {(0, 1), (0, 2), (1, 1), (1, 2)},
            (1, 0): {(1, 0), (1, 1), (2, 0), (2, 1)},
            (-1, 0): {(0, 0), (0, 1)},
            (2, 1): {(2, 1), (2, 2)},
        }

    def test_check_order_x_then_z_row_major(self):
        kinds = [f.kind for f in self.lat.checks]
        assert kinds == ["x"] * 4 + ["z"] * 4
        x_pos = [(f.row, f.col) for f in self.lat.x_checks]
        assert x_pos == sorted(x_pos)
        z_pos = [(f.row, f.col) for f in self.lat.z_checks]
        assert z_pos == sorted(z_pos)

    def test_logical_supports(self):
        ops = self.lat.frame_ops(self.lat.logical_frame("Z"))
        assert ops == {(0, 0): "Z", (1, 0): "Z", (2, 0): "Z"}
        ops = self.lat.frame_ops(self.lat.logical_frame("X"))
        assert ops == {(2, 0): "X", (2, 1): "X", (2, 2): "X"}
        ops = self.lat.frame_ops(self.lat.logical_frame("Y"))
        assert ops[(2, 0)] == "Y"
        assert len(ops) == 5


class TestGroupStructure:
    @pytest.mark.parametrize("h,w", [(2, 2), (2, 3), (3, 2), (3, 3), (3, 4),
                                     (4, 3), (4, 4), (4, 5), (5, 3), (5, 5), (3, 5)])
    def test_checks_commute_and_are_independent(self, h, w):
        lat = build_lattice(h, w)
        assert lat.n_checks == lat.n_qubits - 1
        rows = symplectic_rows(lat)
        n = lat.n_qubits
        # symplectic products vanish pairwise
        for i in range(len(rows)):
            for j in range(i + 1, len(rows)):
                sp = (rows[i][:n] @ rows[j][n:] + rows[i][n:] @ rows[j][:n]) % 2
                assert sp == 0, (i, j)
        assert gf2_rank_numpy(rows) == lat.n_qubits - 1

    @pytest.mark.parametrize("h,w", [(2, 2), (3, 3), (3, 4), (5, 3), (5, 5)])
    def test_logicals_commute_with_checks_and_anticommute(self, h, w):
        lat = build_lattice(h, w)
        zl = lat.logical_frame("Z")
        xl = lat.logical_frame("X")
        assert not any(lat.syndrome_of(zl).bits)
        assert not any(lat.syndrome_of(xl).bits)
        assert (zl.z_mask & xl.x_mask).bit_count() % 2 == 1

    def test_every_qubit_covered(self):
        lat = build_lattice(4, 5)
        cover = 0
        for f in lat.checks:
            cover |= f.mask
        assert cover == (1 << lat.n_qubits) - 1

    def test_rejects_degenerate_shapes(self):
        with pytest.raises(LatticeError):
            build_lattice(1, 5)
        with pytest.raises(LatticeError):
            build_lattice(3, 1)


class TestFrames:
    lat = build_lattice(3, 3)

    def test_compose_is_xor(self):
        a = self.lat.frame_from_ops({(0, 0): "X", (1, 1): "Z"})
        b = self.lat.frame_from_ops({(0, 0): "X", (2, 2): "Y"})
        c = a.compose(b)
        assert self.lat.frame_ops(c) == {(1, 1): "Z", (2, 2): "Y"}

    def test_x_and_z_compose_to_y(self):
        a = self.lat.frame_from_ops({(1, 1): "X"})
        b = self.lat.frame_from_ops({(1, 1): "Z"})
        assert self.lat.frame_ops(a.compose(b)) == {(1, 1): "Y"}

    def test_weight(self):
        f = self.lat.frame_from_ops({(0, 0): "Y", (2, 1): "X"})
        assert f.weight == 2

    def test_rejects_unknown_op(self):
        with pytest.raises(ValueError):
            self.lat.frame_from_ops({(0, 0): "Q"})

    def test_single_z_error_syndrome(self):
        s = self.lat.syndrome_of(self.lat.frame_from_ops({(1, 1): "Z"}))
        flagged = {
            (f.row, f.col) for f, b in zip(self.lat.checks, s.bits) if b
        }
        assert flagged == {(0, 0), (1, 1)}

    def test_single_x_error_syndrome(self):
        s = self.lat.syndrome_of(self.lat.frame_from_ops({(1, 1): "X"}))
        flagged = {
            (f.row, f.col) for f, b in zip(self.lat.checks, s.bits) if b
        }
        assert flagged == {(0, 1), (1, 0)}

    def test_syndrome_int_roundtrip(self):
        s = Syndrome((1, 0, 1, 1, 0, 0, 0, 1))
        assert Syndrome.from_int(s.as_int(), 8) == s


class TestRecoveryAndHomology:
    lat = build_lattice(3, 3)

    def test_recovery_hits_every_syndrome(self):
        for v in range(256):
            s = Syndrome.from_int(v, 8)
            frame = self.lat.recovery_frame(s)
            assert self.lat.syndrome_of(frame) == s, v

    def test_recovery_of_trivial_syndrome_is_identity(self):
        s = Syndrome((0,) * 8)
        assert self.lat.recovery_frame(s) == PauliFrame(0, 0)

    def test_logical_classes(self):
        for label in "IXYZ":
            frame = self.lat.logical_frame(label)
            assert self.lat.homology_class(frame) == label

    def test_stabilizer_elements_are_class_i(self):
        # product of a few checks applied as a frame
        frame = PauliFrame(0, 0)
        for face in self.lat.checks[:3]:
            if face.kind == "x":
                frame = frame.compose(PauliFrame(face.mask, 0))
            else:
                frame = frame.compose(PauliFrame(0, face.mask))
        assert self.lat.homology_class(frame) == "I"

    def test_charged_frame_has_no_class(self):
        frame = self.lat.frame_from_ops({(1, 1): "X"})
        with pytest.raises(ValueError):
            self.lat.homology_class(frame)

    @given(st.integers(0, 2**18 - 1))
    @settings(max_examples=60, deadline=None)
    def test_recovery_matches_any_frame_syndrome(self, packed):
        x_mask = packed & 0x1FF
        z_mask = (packed >> 9) & 0x1FF
        frame = PauliFrame(x_mask, z_mask)
        s = self.lat.syndrome_of(frame)
        assert self.lat.syndrome_of(self.lat.recovery_frame(s)) == s

    @given(st.integers(0, 2**18 - 1), st.integers(0, 255))
    @settings(max_examples=60, deadline=None)
    def test_class_invariant_under_stabilizers(self, packed, subset):
        base = PauliFrame(packed & 0x1FF, (packed >> 9) & 0x1FF)
        s = self.lat.syndrome_of(base)
        frame = base.compose(self.lat.recovery_frame(s))
        cls = self.lat.homology_class(frame)
        for i, face in enumerate(self.lat.checks):
            if (subset >> i) & 1:
                if face.kind == "x":
                    frame = frame.compose(PauliFrame(face.mask, 0))
                else:
                    frame = frame.compose(PauliFrame(0, face.mask))
        assert self.lat.homology_class(frame) == cls

    @given(st.integers(0, 2**18 - 1))
    @settings(max_examples=40, deadline=None)
    def test_syndrome_is_a_homomorphism(self, packed):
        a = PauliFrame(packed & 0x1FF, (packed >> 9) & 0x1FF)
        b = PauliFrame((packed >> 3) & 0x1FF, (packed >> 6) & 0x1FF)
        sa = np.array(self.lat.syndrome_of(a).bits)
        sb = np.array(self.lat.syndrome_of(b).bits)
        sab = np.array(self.lat.syndrome_of(a.compose(b)).bits)
        assert np.array_equal(sab, (sa + sb) % 2)


class TestSerialization:
    def test_json_layout(self):
        lat = build_lattice(3, 3)
        doc = lat.to_json()
        assert doc["height"] == 3 and doc["width"] == 3
        assert len(doc["checks"]) == 8
        assert doc["z_logical"] == [[0, 0], [1, 0], [2, 0]]
        assert doc["x_logical"] == [[2, 0], [2, 1], [2, 2]]
        kinds = {c["kind"] for c in doc["checks"]}
        assert kinds == {"x", "z"}
