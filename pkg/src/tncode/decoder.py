"""Logical-channel decoding by grid contraction of a stabilizer-expanded operator.

The quantity computed for a syndrome ``s`` with recovery ``r`` is the 4x4
table ``C[i][j] = tr[L_i R_r P_s N(L_j P_C) P_s R_r]`` over the logical
Paulis.  Both the codespace projector ``P_C`` and the syndrome projector
``P_s`` expand as averages over the check group, so every check carries two
binary summation variables; a diagonal node on the check's plaquette holds
them with weight ``1/4`` and the syndrome sign attached to the output-side
bit.  Each qubit holds its noise factor's Pauli-transfer block, sandwiched
between the X/Z letters selected by the adjacent plaquette variables and the
inserted logical strings.  Letter products are normal-ordered X-before-Z;
because the lattice lists X checks before Z checks this ordering is global
and introduces no extra signs, while XZ products on a site carry an explicit
``-i`` (the Y phase).  The recovery conjugation reduces to a global sign per
output logical, applied after contraction.

Qubits and plaquette nodes interleave on a 45-degree-rotated square grid of
side ``height + width - 1``; a qubit at (r, c) sits at grid cell
(r + c, r - c + width - 1) with its four plaquettes as nearest neighbours.
Noise bonds between lattice neighbours are routed through the plaquette cell
at the lesser endpoint's position as identity pass-throughs.  The grid is
contracted by a boundary MPS absorbing columns left to right with bond cap
``chi``; logical strings live in the right half of the grid, so the
insertion-free left columns are contracted once and shared between all
sixteen table entries.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .channels import PAULI_LABELS, LogicalChoi, ZeroProbabilityError, select_correction
from .lattice import Lattice, PauliFrame, Syndrome
from .noise import NoiseNetworkFactor
from .tensors import BoundaryChain, GridNetwork, Tensor


class NetworkBuildError(ValueError):
    """Raised for mismatched geometry or out-of-order network operations."""


# Two-bit Pauli letters: W(x, z) = X^x Z^z.  Index into the (I, X, Y, Z)
# transfer-matrix basis, and the phase making W(1,1) = -i Y.
_IDX = {(0, 0): 0, (1, 0): 1, (1, 1): 2, (0, 1): 3}
_OMEGA = {(0, 0): 1.0, (1, 0): 1.0, (0, 1): 1.0, (1, 1): -1.0j}
_PHI = {"I": 1.0, "X": 1.0, "Y": 1.0j, "Z": 1.0}

# A table entry whose boundary chain loses more than this (natural-log)
# magnitude in a single column step is a cancellation residue, not a value:
# genuine conditional weights shrink the chain by modest per-column factors
# (never past e^-14 anywhere in the supported parameter range), while exact
# cancellation drops it to the chain's own round-off or truncation noise in
# one step (e^-27 and below for lattices up to 5x5 at bond cap 8).
_COLLAPSE_DROP = -23.0


@dataclass(frozen=True)
class DecoderConfig:
    """Contraction and selection settings.

    ``chi`` caps the boundary-MPS bond dimension (None removes the cap, which
    together with a small ``tol`` makes the contraction exact up to rounding).
    ``norm`` picks the distance minimized when selecting the correction.
    """

    chi: int | None = 8
    norm: str = "diamond"
    tol: float = 1e-12

    def __post_init__(self):
        if self.chi is not None and self.chi < 1:
            raise ValueError(f"bond cap must be at least 1, got {self.chi}")
        if self.norm not in ("trace", "diamond"):
            raise ValueError(f"unknown selection norm {self.norm!r}")
        if self.tol < 0.0:
            raise ValueError(f"negative truncation tolerance {self.tol}")


@dataclass
class CodeNetwork:
    """The operator network for one lattice and noise model.

    Instances are immutable in use; ``impose_syndrome`` returns a new view
    sharing the tensor caches, so one network per noise model serves every
    syndrome.  ``syndrome``/``recovery`` are None until imposed.
    """

    lattice: Lattice
    noise: NoiseNetworkFactor
    syndrome: Syndrome | None = None
    recovery: PauliFrame | None = None
    _qubit_cache: dict = field(default_factory=dict, repr=False)
    _face_cache: dict = field(default_factory=dict, repr=False)

    @property
    def grid_side(self) -> int:
        return self.lattice.height + self.lattice.width - 1

    # -- tensor builders -----------------------------------------------------

    def _qubit_cell(self, r, c, out_bits, in_bits, two_sided=True) -> Tensor:
        key = (r, c, out_bits, in_bits, two_sided)
        cached = self._qubit_cache.get(key)
        if cached is not None:
            return cached
        t = _qubit_tensor(self.lattice, self.noise, r, c, out_bits, in_bits, two_sided)
        self._qubit_cache[key] = t
        return t

    def _face_cell(self, fr, fc, sign, two_sided=True) -> Tensor:
        key = (fr, fc, sign, two_sided)
        cached = self._face_cache.get(key)
        if cached is not None:
            return cached
        t = _face_tensor(self.lattice, self.noise, fr, fc, sign, two_sided)
        self._face_cache[key] = t
        return t

    # -- grid assembly -------------------------------------------------------

    def grid(self, out_label: str, in_label: str) -> GridNetwork:
        """The full network for one (output, input) logical insertion pair.

        Requires an imposed syndrome: plaquette weights carry its signs.
        """
        if self.syndrome is None:
            raise NetworkBuildError("impose a syndrome before building grids")
        signs = {}
        for face, bit in zip(self.lattice.checks, self.syndrome.bits):
            signs[(face.row, face.col)] = -1.0 if bit else 1.0
        return self._assemble(out_label, in_label, signs, two_sided=True)

    def trace_grid(self) -> GridNetwork:
        """The network whose value is the trace of the noisy projector."""
        return self._assemble("I", "I", None, two_sided=False)

    def _assemble(self, out_label, in_label, signs, two_sided) -> GridNetwork:
        lat = self.lattice
        h, w, side = lat.height, lat.width, self.grid_side
        out_frame = lat.logical_frame(out_label)
        in_frame = lat.logical_frame(in_label)
        cells = [[None] * side for _ in range(side)]
        for r in range(h):
            for c in range(w):
                idx = lat.qubit_index(r, c)
                ob = ((out_frame.x_mask >> idx) & 1, (out_frame.z_mask >> idx) & 1)
                ib = ((in_frame.x_mask >> idx) & 1, (in_frame.z_mask >> idx) & 1)
                if not two_sided:
                    ob = ib = (0, 0)
                cells[r + c][r - c + w - 1] = self._qubit_cell(r, c, ob, ib, two_sided)
        for fr in range(-1, h):
            for fc in range(-1, w):
                has_check = lat.face_at(fr, fc) is not None
                has_h = 0 <= fr < h and 0 <= fc <= w - 2
                has_v = 0 <= fr <= h - 2 and 0 <= fc < w
                if not (has_check or has_h or has_v):
                    continue
                sign = signs[(fr, fc)] if (signs is not None and has_check) else 1.0
                cells[fr + fc + 1][fr - fc + w - 1] = self._face_cell(
                    fr, fc, sign, two_sided
                )
        one = Tensor(np.ones((1, 1, 1, 1)), ("up", "down", "left", "right"))
        for gr in range(side):
            for gc in range(side):
                if cells[gr][gc] is None:
                    cells[gr][gc] = one
        return GridNetwork(cells)


def _qubit_tensor(lat, noise, r, c, out_bits, in_bits, two_sided) -> Tensor:
    """One qubit's cell: check letters and logical insertions folded into the
    noise factor's transfer block.

    Grid legs: up = plaquette (r-1, c-1), down = (r, c) plus the east/south
    noise bonds, left = (r-1, c) plus the north bond, right = (r, c-1) plus
    the west bond.
    """
    m = noise.site_tensor(r, c)
    positions = ((r - 1, c - 1), (r, c), (r - 1, c), (r, c - 1))
    faces = [lat.face_at(fr, fc) for fr, fc in positions]
    base = 4 if two_sided else 2
    dims = tuple(base if f is not None else 1 for f in faces)
    ix, iz = out_bits
    jx, jz = in_bits
    if two_sided:
        coeff = np.zeros((4, 4) + dims, dtype=np.complex128)
    else:
        coeff = np.zeros((4,) + dims, dtype=np.complex128)
    for alphas in product(*(range(d) for d in dims)):
        sx = sz = sxp = szp = 0
        for alpha, face in zip(alphas, faces):
            if face is None:
                continue
            u = alpha & 1
            up = (alpha >> 1) & 1
            if face.kind == "x":
                sx ^= u
                sxp ^= up
            else:
                sz ^= u
                szp ^= up
        a = (jx ^ sx, jz ^ sz)
        if two_sided:
            b = (ix ^ sxp, iz ^ szp)
            sign = -1.0 if ((iz & sxp) ^ (jz & sx)) else 1.0
            val = 2.0 * sign * _OMEGA[b] * _OMEGA[a]
            coeff[(_IDX[b], _IDX[a]) + alphas] = val
        else:
            coeff[(_IDX[a],) + alphas] = 2.0 * _OMEGA[a]
    if two_sided:
        data = np.tensordot(coeff, m, axes=([0, 1], [0, 1]))
    else:
        data = np.tensordot(coeff, m[0], axes=([0], [0]))
    if not np.any(data.imag):
        # The i/-i letter phases cancelled against the factor's zero pattern,
        # so the whole contraction can run in real arithmetic.
        data = np.ascontiguousarray(data.real)
    t = Tensor(data, ("uf", "df", "lf", "rf", "n", "s", "w", "e"))
    t = t.fuse(("uf",), "up")
    t = t.fuse(("df", "e", "s"), "down")
    t = t.fuse(("lf", "n"), "left")
    t = t.fuse(("rf", "w"), "right")
    return t


def _face_tensor(lat, noise, fr, fc, sign, two_sided) -> Tensor:
    """One plaquette cell: the check's summation variable plus pass-throughs.

    Legs point at the member qubits: up = (fr, fc), left = (fr, fc+1),
    right = (fr+1, fc), down = (fr+1, fc+1).  The east noise bond of qubit
    (fr, fc) passes through between up and left; its south bond between up
    and right.
    """
    h, w = lat.height, lat.width
    members = (
        0 <= fr < h and 0 <= fc < w,
        0 <= fr < h and 0 <= fc + 1 < w,
        0 <= fr + 1 < h and 0 <= fc < w,
        0 <= fr + 1 < h and 0 <= fc + 1 < w,
    )
    face = lat.face_at(fr, fc)
    base = 4 if two_sided else 2
    if face is not None:
        dims = tuple(base if q else 1 for q in members)
        core = np.zeros(dims)
        for alpha in range(base):
            if sign is None:
                # Both outcomes summed: the projector pair collapses to the
                # identity, leaving only the sign-free rows at double weight.
                weight = 0.0 if (alpha >> 1) & 1 else 0.5
            elif two_sided:
                weight = 0.25 * (sign if (alpha >> 1) & 1 else 1.0)
            else:
                weight = 0.5
            core[tuple(alpha if d == base else 0 for d in dims)] = weight
    else:
        core = np.ones((1, 1, 1, 1))
    if 0 <= fr < h and 0 <= fc <= w - 2:
        dh = noise.site_tensor(fr, fc).shape[5]
    else:
        dh = 1
    if 0 <= fr <= h - 2 and 0 <= fc < w:
        dv = noise.site_tensor(fr, fc).shape[3]
    else:
        dv = 1
    data = np.multiply.outer(np.multiply.outer(core, np.eye(dh)), np.eye(dv))
    t = Tensor(data, ("uf", "lf", "rf", "df", "hu", "hl", "vu", "vr"))
    t = t.fuse(("uf", "hu", "vu"), "up")
    t = t.fuse(("lf", "hl"), "left")
    t = t.fuse(("rf", "vr"), "right")
    t = t.fuse(("df",), "down")
    return t


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def build_code_network(lat: Lattice, noise: NoiseNetworkFactor) -> CodeNetwork:
    """Assemble the reusable network for one lattice and noise model."""
    nl = noise.lattice
    if nl.height != lat.height or nl.width != lat.width:
        raise NetworkBuildError(
            f"noise factors built for {nl.height}x{nl.width} cannot dress a "
            f"{lat.height}x{lat.width} lattice"
        )
    # The site tensors normal-order letters X-before-Z with no reordering
    # sign, which is only valid when the global check order does the same.
    kinds = [f.kind for f in lat.checks]
    first_z = kinds.index("z") if "z" in kinds else len(kinds)
    if "x" in kinds[first_z:]:
        raise NetworkBuildError("check list must order every X check before Z checks")
    return CodeNetwork(lattice=lat, noise=noise)


def impose_syndrome(net: CodeNetwork, s: Syndrome, r: PauliFrame) -> CodeNetwork:
    """Attach syndrome signs and the recovery frame; caches are shared."""
    if len(s.bits) != net.lattice.n_checks:
        raise NetworkBuildError("syndrome length does not match the check count")
    if net.lattice.syndrome_of(r) != s:
        raise NetworkBuildError("recovery frame does not produce this syndrome")
    return CodeNetwork(
        lattice=net.lattice,
        noise=net.noise,
        syndrome=s,
        recovery=r,
        _qubit_cache=net._qubit_cache,
        _face_cache=net._face_cache,
    )


def _conjugation_sign(r: PauliFrame, logical: PauliFrame) -> float:
    overlap = (r.x_mask & logical.z_mask).bit_count()
    overlap += (r.z_mask & logical.x_mask).bit_count()
    return -1.0 if overlap & 1 else 1.0


def _sweep(chain: BoundaryChain, grid: GridNetwork, start: int):
    """Absorb the remaining columns; returns (mantissa, log_scale,
    truncation_error, min_step) with min_step the deepest single-column fall
    of the chain magnitude."""
    min_step = math.inf
    for c in range(start, grid.cols):
        before = chain.log_scale
        chain.absorb_compress(grid.column(c))
        min_step = min(min_step, chain.log_scale - before)
    mantissa, log_scale = chain.close_scaled()
    return mantissa, log_scale, chain.truncation_error, min_step


def logical_choi(
    net: CodeNetwork,
    lat: Lattice,
    cfg: DecoderConfig,
    reuse_environments: bool = True,
) -> LogicalChoi:
    """Contract all sixteen logical-insertion grids into the channel table.

    With ``reuse_environments`` the insertion-free left columns are swept
    once and the boundary chain is copied for each pair; the arithmetic is
    identical to sixteen independent sweeps.

    A pair whose boundary chain collapses by more than ``_COLLAPSE_DROP`` in
    one column carries no value, only cancellation residue; its entry is set
    to exact zero.  When that happens to the (I, I) pair, whose value is the
    syndrome mass, ``ZeroProbabilityError`` is raised instead.
    """
    if net.syndrome is None or net.recovery is None:
        raise NetworkBuildError("impose a syndrome before extracting the channel")
    if lat is not net.lattice and (
        lat.height != net.lattice.height or lat.width != net.lattice.width
    ):
        raise NetworkBuildError("lattice does not match the network")

    grids = {}
    for i in PAULI_LABELS:
        for j in PAULI_LABELS:
            grids[(i, j)] = net.grid(i, j)

    # Leftmost grid column touched by any logical string; columns before it
    # are identical across every pair.
    support = net.lattice.logical_frame("Y")
    first_col = net.grid_side
    for r in range(net.lattice.height):
        for c in range(net.lattice.width):
            idx = net.lattice.qubit_index(r, c)
            if (support.x_mask | support.z_mask) >> idx & 1:
                first_col = min(first_col, r - c + net.lattice.width - 1)

    raw = {}
    prefix_step = math.inf
    if reuse_environments and first_col > 0:
        base = grids[("I", "I")]
        prefix = BoundaryChain.from_column(base.column(0), max_bond=cfg.chi, tol=cfg.tol)
        prefix.compress()
        for c in range(1, first_col):
            before = prefix.log_scale
            prefix.absorb_compress(base.column(c))
            prefix_step = min(prefix_step, prefix.log_scale - before)
        for pair, grid in grids.items():
            raw[pair] = _sweep(prefix.copy(), grid, first_col)
    else:
        for pair, grid in grids.items():
            chain = BoundaryChain.from_column(grid.column(0), max_bond=cfg.chi, tol=cfg.tol)
            chain.compress()
            raw[pair] = _sweep(chain, grid, 1)

    def vanished(entry) -> bool:
        mantissa, _, _, min_step = entry
        return mantissa == 0 or min(min_step, prefix_step) < _COLLAPSE_DROP

    # The (I, I) entry is the syndrome mass itself; when it collapses the
    # syndrome cannot occur and no channel exists.
    if vanished(raw[("I", "I")]):
        raise ZeroProbabilityError(
            "the syndrome-mass contraction cancelled to round-off: the "
            "syndrome has zero probability under this noise model"
        )

    # Reference scale: the magnitude of the largest surviving value.  A pair
    # that cancels to (near) zero at closure still carries a large
    # accumulated chain scale, so ranking by log_scale alone would crush
    # every finite entry.
    log_ref = max(
        entry[1] + math.log(abs(entry[0]))
        for entry in raw.values()
        if not vanished(entry)
    )
    c = np.zeros((4, 4), dtype=np.complex128)
    trunc = 0.0
    for (i, j), entry in raw.items():
        mantissa, log_scale, err, _ = entry
        trunc = max(trunc, err)
        if vanished(entry):
            continue
        scale = _PHI[i] * _PHI[j] * _conjugation_sign(net.recovery, net.lattice.logical_frame(i))
        shift = log_scale - log_ref
        if shift > -745.0:
            c[PAULI_LABELS.index(i), PAULI_LABELS.index(j)] = scale * mantissa * math.exp(shift)
    return LogicalChoi(c, log_magnitude=log_ref, truncation_error=trunc)


def network_trace(net: CodeNetwork, chi: int | None = None, tol: float = 1e-12):
    """The trace of the noisy projector, as (value, truncation_error).

    Uses the single-variable expansion of the codespace projector alone (no
    syndrome side), so the value equals tr of the noise factors applied to
    the projector; 2 for any trace-preserving, properly normalized factors.
    """
    grid = net.trace_grid()
    chain = BoundaryChain.from_column(grid.column(0), max_bond=chi, tol=tol)
    chain.compress()
    mantissa, log_scale, err, _ = _sweep(chain, grid, 1)
    return mantissa * math.exp(log_scale), err


def syndrome_prefix_mass(
    net: CodeNetwork,
    bits,
    chi: int | None = None,
    tol: float = 1e-12,
) -> float:
    """Joint probability that the first ``len(bits)`` checks read ``bits``.

    Checks beyond the prefix are left unconstrained: their two projectors
    are summed, which replaces them by the identity.  An empty prefix
    therefore gives 1 for trace-preserving factors, and a full-length prefix
    gives p(s).  Contraction is exact unless a bond cap is supplied.
    """
    bits = tuple(int(b) for b in bits)
    lat = net.lattice
    if len(bits) > lat.n_checks:
        raise NetworkBuildError(
            f"prefix of {len(bits)} bits exceeds {lat.n_checks} checks"
        )
    if any(b not in (0, 1) for b in bits):
        raise NetworkBuildError("prefix bits must be 0 or 1")
    signs: dict = {}
    for i, face in enumerate(lat.checks):
        if i < len(bits):
            signs[(face.row, face.col)] = -1.0 if bits[i] else 1.0
        else:
            signs[(face.row, face.col)] = None
    grid = net._assemble("I", "I", signs, two_sided=True)
    chain = BoundaryChain.from_column(grid.column(0), max_bond=chi, tol=tol)
    chain.compress()
    mantissa, log_scale, _, _ = _sweep(chain, grid, 1)
    return float(complex(mantissa).real) * math.exp(log_scale) / 2.0


def decode(
    s: Syndrome,
    noise: NoiseNetworkFactor,
    lat: Lattice,
    cfg: DecoderConfig,
    network: CodeNetwork | None = None,
    rng: np.random.Generator | None = None,
):
    """Full pipeline: recovery, contraction, and correction selection.

    Passing a prebuilt ``network`` (from ``build_code_network``) skips
    reassembly; callers decoding many syndromes of one noise model should do
    so.  Returns ``(correction, lc, diagnostics)`` where diagnostics carry
    the truncation error, wall time, and the normalized transfer matrix.
    """
    start = time.perf_counter()
    if network is None:
        network = build_code_network(lat, noise)
    r = lat.recovery_frame(s)
    imposed = impose_syndrome(network, s, r)
    lc = logical_choi(imposed, lat, cfg)
    correction = select_correction(lc, norm=cfg.norm, rng=rng)
    elapsed = time.perf_counter() - start
    diagnostics = {
        "truncation_error": lc.truncation_error,
        "wall_time": elapsed,
        "ptm": lc.normalized_ptm(),
    }
    return correction, lc, diagnostics
