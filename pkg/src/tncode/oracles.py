"""Reference decoders and dense simulators that cross-check the network.

Everything here travels a different computational route from the grid
contraction: the matching baseline works on defect geometry, the dense
simulator on full state vectors, and the exhaustive bit-flip decoder on
spin enumeration.  Agreement between these routes and the tensor network
is the package's main correctness evidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channels import (
    KrausChannel,
    LogicalChoi,
    PAULI_LABELS,
    ZeroProbabilityError,
    select_correction,
)
from .lattice import Lattice, PauliFrame, Syndrome, _face_colour
from .noise import CapacityError, IsingParams, cbf_exact_distribution

_MATCH_NODE_CAP = 32
_DENSE_QUBIT_CAP = 12
_BATCH_ENTRY_CAP = 1 << 26

# Y insertions are phased so the inserted word is Hermitian: Y = i (X Z).
_LOGICAL_PHASE = {"I": 1.0 + 0j, "X": 1.0 + 0j, "Y": 1j, "Z": 1.0 + 0j}


# ---------------------------------------------------------------------------
# Minimum-weight matching
# ---------------------------------------------------------------------------


def _chain_metric(a, b) -> int:
    """Qubits in the shortest chain joining two same-coloured plaquettes.

    Same-coloured plaquettes form a square grid along the diagonals, one
    qubit per step, so the step count is the larger coordinate difference.
    """
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def _open_slots(lat: Lattice, kind: str):
    """Plaquette slots of the given colour that carry no check.

    A chain may end on such a slot without flagging anything, so these are
    the boundary attachment points for matching.
    """
    out = []
    for row in range(-1, lat.height):
        for col in range(-1, lat.width):
            if _face_colour(row, col) == kind and lat.face_at(row, col) is None:
                out.append((row, col))
    return out


@dataclass(frozen=True)
class DefectGraph:
    """Flagged plaquettes of one kind with pairwise and boundary weights.

    Weights count qubits: a pair entry is the shortest chain joining two
    defects, a boundary entry the shortest chain from a defect to any open
    slot of the same colour.  Each defect owns one virtual boundary node,
    keeping the total node count even; ``exits`` records the open slot its
    boundary node stands for.
    """

    kind: str
    defects: tuple
    pair_weights: tuple
    boundary_weights: tuple
    exits: tuple

    def __post_init__(self):
        k = len(self.defects)
        if len(self.boundary_weights) != k or len(self.exits) != k:
            raise ValueError("per-defect fields must align with the defect list")
        if any(len(row) != k for row in self.pair_weights):
            raise ValueError("pair weight matrix must be square")
        entries = [w for row in self.pair_weights for w in row]
        entries += list(self.boundary_weights)
        if any(w < 0 for w in entries):
            raise ValueError("chain lengths cannot be negative")


def build_defect_graph(s: Syndrome, lat: Lattice, kind: str) -> DefectGraph:
    if kind not in ("x", "z"):
        raise ValueError(f"check kind must be 'x' or 'z', got {kind!r}")
    if len(s.bits) != lat.n_checks:
        raise ValueError("syndrome length does not match check count")
    defects = [
        (f.row, f.col) for f, bit in zip(lat.checks, s.bits) if bit and f.kind == kind
    ]
    slots = _open_slots(lat, kind)
    if not slots:
        raise ValueError(f"lattice has no open {kind} slots to terminate chains")
    exits = []
    bweights = []
    for d in defects:
        # Nearest open slot; ties go to the smallest position so repeated
        # runs route identically.
        target = min(slots, key=lambda p: (_chain_metric(d, p), p))
        exits.append(target)
        bweights.append(_chain_metric(d, target))
    pair = tuple(tuple(_chain_metric(a, b) for b in defects) for a in defects)
    return DefectGraph(kind, tuple(defects), pair, tuple(bweights), tuple(exits))


def _min_weight_pairing(graph: DefectGraph):
    """Cheapest way to settle every defect: subset DP over defect bitmasks.

    Each defect either pairs with another or retires to its boundary node.
    Reconstruction walks the table preferring, for the lowest unsettled
    defect, the boundary and then partners in index order, so tied optima
    resolve to a fixed pairing.
    """
    k = len(graph.defects)
    if 2 * k > _MATCH_NODE_CAP:
        raise CapacityError(
            f"{2 * k} matching nodes exceed the supported {_MATCH_NODE_CAP}"
        )
    full = (1 << k) - 1
    best = [0] * (full + 1)
    for mask in range(1, full + 1):
        i = (mask & -mask).bit_length() - 1
        rest = mask ^ (1 << i)
        cand = graph.boundary_weights[i] + best[rest]
        m = rest
        while m:
            j = (m & -m).bit_length() - 1
            m &= m - 1
            c = graph.pair_weights[i][j] + best[rest ^ (1 << j)]
            if c < cand:
                cand = c
        best[mask] = cand
    pairs = []
    singles = []
    mask = full
    while mask:
        i = (mask & -mask).bit_length() - 1
        rest = mask ^ (1 << i)
        if graph.boundary_weights[i] + best[rest] == best[mask]:
            singles.append(i)
            mask = rest
            continue
        m = rest
        found = False
        while m:
            j = (m & -m).bit_length() - 1
            m &= m - 1
            if graph.pair_weights[i][j] + best[rest ^ (1 << j)] == best[mask]:
                pairs.append((i, j))
                mask = rest ^ (1 << j)
                found = True
                break
        if not found:
            raise RuntimeError("pairing reconstruction lost the optimum")
    return best[full], pairs, singles


def _chain_between(lat: Lattice, a, b) -> int:
    """Qubit bitmask of one shortest chain joining plaquette slots a and b.

    Steps move diagonally toward the target; when one coordinate already
    matches, the step zigzags through whichever neighbouring row or column
    stays on the lattice.  Equal-endpoint routes differ only by closed
    loops, so any shortest route represents the same homology.
    """
    mask = 0
    r, c = a
    for _ in range(_chain_metric(a, b)):
        dr, dc = b[0] - r, b[1] - c
        if dr:
            sr = 1 if dr > 0 else -1
        else:
            sr = 1 if r + 1 <= lat.height - 1 else -1
        if dc:
            sc = 1 if dc > 0 else -1
        else:
            sc = 1 if c + 1 <= lat.width - 1 else -1
        mask ^= 1 << lat.qubit_index(max(r, r + sr), max(c, c + sc))
        r, c = r + sr, c + sc
    if (r, c) != tuple(b):
        raise RuntimeError(f"chain from {a} failed to reach {b}")
    return mask


def mwpm_frame(s: Syndrome, lat: Lattice) -> PauliFrame:
    """A minimum-weight frame reproducing ``s``, one matching per kind.

    Flagged z checks are cleared by X chains, flagged x checks by Z chains;
    the two problems are independent and each is solved exactly.
    """
    x_mask = z_mask = 0
    for kind in ("z", "x"):
        graph = build_defect_graph(s, lat, kind)
        _, pairs, singles = _min_weight_pairing(graph)
        chain = 0
        for i, j in pairs:
            chain ^= _chain_between(lat, graph.defects[i], graph.defects[j])
        for i in singles:
            chain ^= _chain_between(lat, graph.defects[i], graph.exits[i])
        if kind == "z":
            x_mask = chain
        else:
            z_mask = chain
    return PauliFrame(x_mask, z_mask)


def mwpm_decode(s: Syndrome, lat: Lattice) -> str:
    """Logical label implied by matching, relative to the canonical recovery."""
    frame = mwpm_frame(s, lat)
    return lat.homology_class(frame.compose(lat.recovery_frame(s)))


# ---------------------------------------------------------------------------
# Dense simulation
# ---------------------------------------------------------------------------


def _basis_mask(qubit_mask: int, n: int) -> int:
    """Qubit bitmask rewritten over basis-index bits (site 0 most significant)."""
    out = 0
    for j in range(n):
        if (qubit_mask >> j) & 1:
            out |= 1 << (n - 1 - j)
    return out


def _parity_signs(values: np.ndarray, mask: int) -> np.ndarray:
    bits = values & mask
    par = np.zeros(len(values), dtype=np.int64)
    while np.any(bits):
        par ^= bits & 1
        bits >>= 1
    return (1.0 - 2.0 * par).astype(np.float64)


def _apply_word(cols: np.ndarray, frame: PauliFrame, lat: Lattice) -> np.ndarray:
    """Columns hit by the frame's product operator, X left of Z per site.

    On a basis state the Z part contributes a sign, the X part flips the
    index, so the whole word is an index permutation with signs.  With both
    parts present the per-site factor is X @ Z, the phaseless companion of
    Y; callers supply any wanted phase themselves.
    """
    n = lat.n_qubits
    bx = _basis_mask(frame.x_mask, n)
    bz = _basis_mask(frame.z_mask, n)
    idx = np.arange(len(cols)) ^ bx
    out = cols[idx]
    if bz:
        out = out * _parity_signs(idx, bz)[:, None]
    return out


def _check_word(face) -> PauliFrame:
    if face.kind == "x":
        return PauliFrame(face.mask, 0)
    return PauliFrame(0, face.mask)


def _code_columns(lat: Lattice) -> np.ndarray:
    """Orthonormal columns spanning the code space, Z-basis reference first."""
    n = lat.n_qubits
    if n > _DENSE_QUBIT_CAP:
        raise CapacityError(
            f"dense simulation capped at {_DENSE_QUBIT_CAP} qubits, got {n}"
        )
    v = np.zeros((1 << n, 1), dtype=np.complex128)
    v[0, 0] = 1.0
    for f in lat.x_checks:
        v = 0.5 * (v + _apply_word(v, PauliFrame(f.mask, 0), lat))
    v /= np.linalg.norm(v)
    flipped = _apply_word(v, lat.logical_frame("X"), lat)
    cols = np.hstack([v, flipped])
    gram = cols.conj().T @ cols
    if not np.allclose(gram, np.eye(2), atol=1e-12):
        raise RuntimeError("code-space columns came out non-orthonormal")
    return cols


def _site_kraus_lists(noise, lat: Lattice):
    n = lat.n_qubits
    if isinstance(noise, KrausChannel):
        return [noise.ops] * n
    seq = list(noise)
    if len(seq) == n and all(isinstance(c, KrausChannel) for c in seq):
        return [c.ops for c in seq]
    raise ValueError(
        "noise must be a KrausChannel, one KrausChannel per qubit, or a "
        "list of (probability, PauliFrame) mixture terms"
    )


def _as_mixture(noise):
    if isinstance(noise, KrausChannel):
        return None
    try:
        items = list(noise)
    except TypeError:
        return None
    if items and all(
        isinstance(t, tuple) and len(t) == 2 and isinstance(t[1], PauliFrame)
        for t in items
    ):
        return items
    return None


def _noise_columns(cols: np.ndarray, noise, lat: Lattice) -> np.ndarray:
    """Pure branches of the state after noise: one output column per branch."""
    n = lat.n_qubits
    mixture = _as_mixture(noise)
    if mixture is not None:
        parts = [
            math.sqrt(p) * _apply_word(cols, frame, lat) for p, frame in mixture
        ]
        return np.concatenate(parts, axis=1)
    site_ops = _site_kraus_lists(noise, lat)
    branches = cols.shape[1]
    for ops in site_ops:
        branches *= len(ops)
    if branches << n > _BATCH_ENTRY_CAP:
        raise CapacityError(
            f"{branches} Kraus branches on {n} qubits exceed the dense budget"
        )
    out = cols
    for site, ops in enumerate(site_ops):
        left = 1 << site
        right = 1 << (n - site - 1)
        shaped = out.reshape(left, 2, right, -1)
        stack = np.stack(
            [np.einsum("ps,asbm->apbm", np.asarray(k), shaped) for k in ops],
            axis=-1,
        )
        out = stack.reshape(1 << n, -1)
    return out


def _project_syndrome(cols: np.ndarray, s: Syndrome, lat: Lattice) -> np.ndarray:
    for face, bit in zip(lat.checks, s.bits):
        sign = -1.0 if bit else 1.0
        cols = 0.5 * (cols + sign * _apply_word(cols, _check_word(face), lat))
    return cols


class DenseChannelOracle:
    """Exact logical channels by full simulation, reusable across syndromes.

    The code projector is carried as two spanning columns; noise branches
    them into one pure component per Kraus string (or mixture term).  Those
    noisy batches do not depend on the syndrome, so a full syndrome sweep
    pays the branching cost once.  Entry convention matches the network
    decoder: the (I, I) value is 2 p(s).
    """

    def __init__(self, noise, lat: Lattice):
        self.lattice = lat
        base = _code_columns(lat)
        self._noisy = {}
        for label in PAULI_LABELS:
            cols = base
            if label != "I":
                cols = _apply_word(base, lat.logical_frame(label), lat)
            self._noisy[label] = _noise_columns(cols, noise, lat)

    def channel(self, s: Syndrome):
        """The (LogicalChoi, p(s)) pair for one syndrome."""
        lat = self.lattice
        if len(s.bits) != lat.n_checks:
            raise ValueError("syndrome length does not match check count")
        rec = lat.recovery_frame(s)
        pushed = {
            label: _apply_word(_project_syndrome(cols, s, lat), rec, lat)
            for label, cols in self._noisy.items()
        }
        reference = pushed["I"]
        c = np.zeros((4, 4), dtype=np.complex128)
        for j, lj in enumerate(PAULI_LABELS):
            for i, li in enumerate(PAULI_LABELS):
                hit = _apply_word(pushed[lj], lat.logical_frame(li), lat)
                val = np.sum(np.conj(reference) * hit)
                c[i, j] = _LOGICAL_PHASE[li] * _LOGICAL_PHASE[lj] * val
        p_s = float(c[0, 0].real) / 2.0
        return LogicalChoi(c), p_s


def dense_logical_channel(s: Syndrome, noise, lat: Lattice):
    """Exact logical channel and syndrome probability for one syndrome."""
    return DenseChannelOracle(noise, lat).channel(s)


def optimal_decode_dense(
    s: Syndrome,
    noise,
    lat: Lattice,
    norm: str = "diamond",
    rng: np.random.Generator | None = None,
) -> str:
    """Correction chosen from the exact logical channel."""
    lc, _ = dense_logical_channel(s, noise, lat)
    return select_correction(lc, norm=norm, rng=rng)


# ---------------------------------------------------------------------------
# Exhaustive bit-flip decoding
# ---------------------------------------------------------------------------


def ml_decode_cbf_exact(s: Syndrome, p: IsingParams, lat: Lattice) -> str:
    """Most likely homology class under the correlated-flip model, exactly.

    Every spin pattern consistent with the syndrome contributes its
    Boltzmann probability to the class of (pattern frame composed with the
    canonical recovery); the heaviest class wins, ties in I < X < Y < Z
    order.  Flip patterns are pure X, so only the I and X classes can carry
    mass and any flagged x check leaves nothing consistent.
    """
    if len(s.bits) != lat.n_checks:
        raise ValueError("syndrome length does not match check count")
    dist = cbf_exact_distribution(p, lat)
    flips = (dist.spins < 0).astype(np.uint8)
    ok = np.ones(len(flips), dtype=bool)
    for face, bit in zip(lat.checks, s.bits):
        if face.kind == "x":
            if bit:
                raise ZeroProbabilityError(
                    "flip noise cannot flag an x check; this syndrome has "
                    "zero probability"
                )
            continue
        members = [lat.qubit_index(r, c) for r, c in face.qubits]
        ok &= (flips[:, members].sum(axis=1) & 1) == bit
    rec = lat.recovery_frame(s)
    rec_par = (rec.x_mask & lat.z_logical_mask).bit_count() & 1
    crossing = [
        i for i in range(lat.n_qubits) if (lat.z_logical_mask >> i) & 1
    ]
    par = (flips[:, crossing].sum(axis=1) & 1) ^ rec_par
    mass = np.zeros(4)
    mass[0] = float(dist.probabilities[ok & (par == 0)].sum())
    mass[1] = float(dist.probabilities[ok & (par == 1)].sum())
    if mass.sum() <= 0.0:
        raise ZeroProbabilityError("no flip pattern matches this syndrome")
    return PAULI_LABELS[int(np.argmax(mass))]


# ---------------------------------------------------------------------------
# Exact syndrome sampling
# ---------------------------------------------------------------------------


@dataclass
class DenseState:
    """A positive operator carried as pure branches: rho = F F^dagger.

    ``factors`` holds one column per branch; the represented operator is
    Hermitian and positive by construction, and materializing it is only
    sensible at desk scale.
    """

    factors: np.ndarray

    @property
    def operator(self) -> np.ndarray:
        return self.factors @ self.factors.conj().T

    @property
    def trace(self) -> float:
        return float(np.sum(np.abs(self.factors) ** 2))


class DenseSyndromeSampler:
    """Draws syndromes from the exact post-noise state.

    A pure branch is drawn with its Born weight, then each check outcome in
    lattice order is drawn from the branch's conditional distribution.
    Marginalizing the branch index reproduces tr[P_s rho] exactly, so the
    draws follow the true syndrome distribution.
    """

    def __init__(self, noise, lat: Lattice):
        self.lattice = lat
        base = _code_columns(lat) / math.sqrt(2.0)
        self.state = DenseState(_noise_columns(base, noise, lat))
        weights = np.sum(np.abs(self.state.factors) ** 2, axis=0).real
        total = float(weights.sum())
        if not math.isclose(total, 1.0, rel_tol=0.0, abs_tol=1e-9):
            raise ValueError(f"branch weights sum to {total}, expected 1")
        self._cumulative = np.cumsum(weights)
        self._words = [_check_word(f) for f in lat.checks]

    def sample(self, rng: np.random.Generator) -> Syndrome:
        draw = rng.random() * self._cumulative[-1]
        branch = int(np.searchsorted(self._cumulative, draw))
        branch = min(branch, len(self._cumulative) - 1)
        col = self.state.factors[:, branch : branch + 1]
        norm = float(np.sum(np.abs(col) ** 2))
        bits = []
        for word in self._words:
            kept = 0.5 * (col + _apply_word(col, word, self.lattice))
            p_plus = float(np.sum(np.abs(kept) ** 2)) / norm
            if rng.random() < p_plus:
                bits.append(0)
                col = kept
                norm *= p_plus
            else:
                bits.append(1)
                col = col - kept
                norm *= 1.0 - p_plus
        return Syndrome(tuple(bits))

    def syndrome_probability(self, s: Syndrome) -> float:
        """Exact p(s): the chain-rule product over checks on all branches."""
        if len(s.bits) != self.lattice.n_checks:
            raise ValueError("syndrome length does not match check count")
        cols = _project_syndrome(self.state.factors, s, self.lattice)
        return float(np.sum(np.abs(cols) ** 2))


def sample_syndrome_general(noise, lat: Lattice, rng_seed) -> Syndrome:
    """One syndrome draw from the exact distribution of the noisy code state."""
    if isinstance(rng_seed, np.random.Generator):
        rng = rng_seed
    else:
        rng = np.random.default_rng(rng_seed)
    return DenseSyndromeSampler(noise, lat).sample(rng)


class NetworkSyndromeSampler:
    """Chain-rule syndrome draws backed by exact network contractions.

    Same draw semantics as ``DenseSyndromeSampler``, but each conditional
    check probability comes from a grid contraction with the undrawn checks
    marginalized away, so memory stays flat on lattices past dense reach.
    Prefix masses are cached; once the likely syndromes have been visited,
    further draws walk cached paths without contracting anything.  The
    complement branch of every cut is filled in by subtraction, which keeps
    the cached tree exactly normalized level by level.
    """

    def __init__(self, noise, lat: Lattice, chi: int | None = None, tol: float = 1e-12):
        from .decoder import build_code_network, syndrome_prefix_mass
        from .noise import iid_network_factors

        self.lattice = lat
        if not hasattr(noise, "site_tensor"):
            noise = iid_network_factors(noise, lat)
        self.network = build_code_network(lat, noise)
        self._mass_of = lambda bits: syndrome_prefix_mass(
            self.network, bits, chi=chi, tol=tol
        )
        total = self._mass_of(())
        if not math.isclose(total, 1.0, rel_tol=0.0, abs_tol=1e-6):
            raise ValueError(
                f"noise factors are not trace preserving: total mass {total}"
            )
        self._mass = {(): total}

    def _extend(self, bits):
        """Cache both children of ``bits``; one contraction, one subtraction."""
        parent = self._mass[bits]
        zero = bits + (0,)
        if zero not in self._mass:
            p0 = min(max(self._mass_of(zero), 0.0), parent)
            self._mass[zero] = p0
            self._mass[bits + (1,)] = parent - p0

    def sample(self, rng: np.random.Generator) -> Syndrome:
        bits = ()
        for _ in range(self.lattice.n_checks):
            self._extend(bits)
            parent = self._mass[bits]
            p_plus = self._mass[bits + (0,)] / parent if parent > 0.0 else 0.0
            bits += (0,) if rng.random() < p_plus else (1,)
        return Syndrome(bits)

    def syndrome_probability(self, s: Syndrome) -> float:
        """Exact p(s), sharing the prefix cache with ``sample``."""
        if len(s.bits) != self.lattice.n_checks:
            raise ValueError("syndrome length does not match check count")
        bits = tuple(s.bits)
        for k in range(len(bits)):
            self._extend(bits[:k])
        return self._mass[bits]
