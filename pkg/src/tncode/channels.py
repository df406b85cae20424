"""Single-qubit channel representations and the distances used for decoding.

A channel lives here in one of three forms: Kraus operators, the Pauli
transfer matrix (PTM) ``M[i][j] = tr[P_i E(P_j)]/2`` over the order
(I, X, Y, Z), or the Choi matrix.  The Choi is normalized so the identity
channel's Choi is the maximally entangled state with trace 1; both distance
measures are quoted under that convention.

``diamond_distance_from_identity`` maximizes over pure two-qubit inputs
directly (the input space is tiny) and certifies the result against random
sampling and the maximally entangled input, so a silent under-estimate
raises instead of returning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import minimize

PAULI_LABELS = ("I", "X", "Y", "Z")
PAULI_MATS = (
    np.eye(2, dtype=np.complex128),
    np.array([[0, 1], [1, 0]], dtype=np.complex128),
    np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    np.array([[1, 0], [0, -1]], dtype=np.complex128),
)

# PTM of conjugation by each Pauli: P L P = +/- L.
CONJUGATION_SIGNS = {
    "I": (1, 1, 1, 1),
    "X": (1, 1, -1, -1),
    "Y": (1, -1, 1, -1),
    "Z": (1, -1, -1, 1),
}


class ChannelValidationError(ValueError):
    """Raised for inputs violating a representation invariant."""


class ZeroProbabilityError(ValueError):
    """Raised when a logical channel cannot be normalized (syndrome has
    essentially zero probability)."""


class DiamondConvergenceError(RuntimeError):
    """Raised when the diamond-distance optimizer ends below its certified
    floor; carries the best known lower bound."""

    def __init__(self, message: str, lower_bound: float):
        super().__init__(message)
        self.lower_bound = lower_bound


@dataclass
class KrausChannel:
    """A channel given by Kraus operators ``rho -> sum_i K_i rho K_i^dag``."""

    ops: list

    def __post_init__(self):
        ops = [np.asarray(k, dtype=np.complex128) for k in self.ops]
        if not ops or any(k.shape != (2, 2) for k in ops):
            raise ChannelValidationError("Kraus operators must be 2x2 matrices")
        total = sum(k.conj().T @ k for k in ops)
        if not np.allclose(total, np.eye(2), atol=1e-10):
            raise ChannelValidationError(
                "Kraus operators do not preserve trace (sum K^dag K != I)"
            )
        self.ops = ops

    def apply(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho, dtype=np.complex128)
        return sum(k @ rho @ k.conj().T for k in self.ops)


def choi_from_ptm(ptm: np.ndarray) -> np.ndarray:
    """Choi matrix of a PTM, normalized so the identity channel gives the
    maximally entangled state (trace 1 for trace-preserving maps)."""
    out = np.zeros((4, 4), dtype=np.complex128)
    for a in range(4):
        for b in range(4):
            out += ptm[b, a] * np.kron(PAULI_MATS[a].T, PAULI_MATS[b])
    return out / 4.0


@dataclass
class QubitChannel:
    """A qubit map in PTM form.

    Any real 4x4 matrix is accepted: normalized logical channels recovered
    from truncated contractions may fall slightly outside the physical set,
    and the distance measures below only require Hermiticity preservation.
    """

    ptm: np.ndarray

    def __post_init__(self):
        ptm = np.asarray(self.ptm)
        if ptm.shape != (4, 4):
            raise ChannelValidationError(f"PTM must be 4x4, got {ptm.shape}")
        if np.iscomplexobj(ptm):
            if np.max(np.abs(ptm.imag)) > 1e-9:
                raise ChannelValidationError("PTM must be real")
            ptm = ptm.real
        self.ptm = ptm.astype(float)

    @classmethod
    def identity(cls) -> "QubitChannel":
        return cls(np.eye(4))

    @cached_property
    def choi(self) -> np.ndarray:
        return choi_from_ptm(self.ptm)

    def compose(self, other: "QubitChannel") -> "QubitChannel":
        """This channel applied after ``other``."""
        return QubitChannel(self.ptm @ other.ptm)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        coeffs = np.array([np.trace(p @ rho) for p in PAULI_MATS])
        out_coeffs = self.ptm @ coeffs
        return sum(c * p for c, p in zip(out_coeffs, PAULI_MATS)) / 2.0

    def is_trace_preserving(self, atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.ptm[0], [1, 0, 0, 0], atol=atol))


def ptm_from_kraus(k: KrausChannel) -> QubitChannel:
    ptm = np.zeros((4, 4))
    for i in range(4):
        for j in range(4):
            val = sum(
                np.trace(PAULI_MATS[i] @ op @ PAULI_MATS[j] @ op.conj().T)
                for op in k.ops
            )
            ptm[i, j] = 0.5 * val.real
    return QubitChannel(ptm)


def trace_distance_from_identity(e: QubitChannel) -> float:
    """Half the trace norm of the Choi difference from the identity channel."""
    diff = e.choi - QubitChannel.identity().choi
    eigs = np.linalg.eigvalsh(diff)
    return 0.5 * float(np.sum(np.abs(eigs)))


# ---------------------------------------------------------------------------
# Diamond distance by primal maximization
# ---------------------------------------------------------------------------


def _superoperator(ptm: np.ndarray) -> np.ndarray:
    """Natural 4x4 representation acting on row-major vec(rho)."""
    out = np.zeros((4, 4), dtype=np.complex128)
    for i in range(4):
        for j in range(4):
            out += 0.5 * ptm[i, j] * np.outer(
                PAULI_MATS[i].reshape(-1), PAULI_MATS[j].conj().reshape(-1)
            )
    return out


def _state_from_params(p: np.ndarray) -> np.ndarray:
    t1, t2, t3, f1, f2, f3 = p
    s1, s2 = math.sin(t1), math.sin(t2)
    return np.array(
        [
            math.cos(t1),
            s1 * math.cos(t2) * np.exp(1j * f1),
            s1 * s2 * math.cos(t3) * np.exp(1j * f2),
            s1 * s2 * math.sin(t3) * np.exp(1j * f3),
        ],
        dtype=np.complex128,
    )


def _params_from_state(psi: np.ndarray) -> np.ndarray:
    psi = psi / np.linalg.norm(psi)
    if abs(psi[0]) > 1e-12:
        psi = psi * np.exp(-1j * np.angle(psi[0]))
    a0 = min(max(psi[0].real, -1.0), 1.0)
    t1 = math.acos(a0)
    s1 = math.sqrt(max(0.0, 1.0 - a0 * a0))
    r1 = abs(psi[1])
    t2 = math.acos(min(r1 / s1, 1.0)) if s1 > 1e-12 else 0.0
    t3 = math.atan2(abs(psi[3]), abs(psi[2]))
    return np.array(
        [t1, t2, t3, np.angle(psi[1]), np.angle(psi[2]), np.angle(psi[3])]
    )


_BELL_PARAMS = np.array([math.pi / 4, math.pi / 2, math.pi / 2, 0.0, 0.0, 0.0])


def _output_deviation_norms(states: np.ndarray, super4: np.ndarray) -> np.ndarray:
    """Trace norms of (Delta x id) applied to a batch of pure states.

    ``states`` has shape (n, 4) with system-major amplitude order; ``super4``
    is the deviation map's natural representation reshaped to (2, 2, 2, 2).
    """
    rho = np.einsum("ni,nj->nij", states, states.conj()).reshape(-1, 2, 2, 2, 2)
    out = np.einsum("pqtu,ntaub->npaqb", super4, rho).reshape(-1, 4, 4)
    eigs = np.linalg.eigvalsh(out)
    return np.sum(np.abs(eigs), axis=1)


def diamond_distance_from_identity(
    e: QubitChannel,
    rng: np.random.Generator | None = None,
    n_starts: int = 8,
    n_samples: int = 1000,
) -> float:
    """Worst-case output trace norm of (e - identity) over pure 2-qubit inputs.

    Multi-start Nelder-Mead over a 6-angle pure-state family.  The starts
    always include the maximally entangled input and the best of
    ``n_samples`` uniformly random pure states; the returned value must
    come out at least as large as every certification sample, otherwise a
    ``DiamondConvergenceError`` reports the best lower bound.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    delta = e.ptm - np.eye(4)
    if np.max(np.abs(delta)) < 1e-14:
        return 0.0
    super4 = _superoperator(delta).reshape(2, 2, 2, 2)

    raw = rng.normal(size=(n_samples, 4)) + 1j * rng.normal(size=(n_samples, 4))
    samples = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    sample_vals = _output_deviation_norms(samples, super4)
    best_idx = int(np.argmax(sample_vals))
    floor = float(sample_vals[best_idx])

    bell_val = float(
        _output_deviation_norms(_state_from_params(_BELL_PARAMS)[None, :], super4)[0]
    )
    floor = max(floor, bell_val)

    def negative_objective(p):
        psi = _state_from_params(p)
        return -float(_output_deviation_norms(psi[None, :], super4)[0])

    starts = [_BELL_PARAMS, _params_from_state(samples[best_idx])]
    for _ in range(max(n_starts - 2, 0)):
        starts.append(
            np.concatenate(
                [rng.uniform(0, math.pi, 3), rng.uniform(0, 2 * math.pi, 3)]
            )
        )

    best = -np.inf
    for p0 in starts:
        res = minimize(
            negative_objective,
            p0,
            method="Nelder-Mead",
            options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 4000},
        )
        best = max(best, -res.fun)

    if best < floor - 1e-8:
        raise DiamondConvergenceError(
            f"optimizer reached {best:.9f} below the certified floor {floor:.9f}",
            lower_bound=floor,
        )
    return max(best, floor)


# ---------------------------------------------------------------------------
# Logical channels and correction selection
# ---------------------------------------------------------------------------


@dataclass
class LogicalChoi:
    """Raw logical-channel contraction values C[i][j] over (I, X, Y, Z).

    ``norm_factor`` is the (I, I) entry; dividing by it yields the logical
    channel's PTM.  ``log_magnitude`` carries the overall scale factored out
    during contraction, so the represented values are
    ``c * exp(log_magnitude)`` without overflow risk.  ``truncation_error``
    is the relative weight discarded by whatever approximate contraction
    produced the values (zero for exact computations).
    """

    c: np.ndarray
    log_magnitude: float = 0.0
    truncation_error: float = 0.0
    norm_factor: complex = field(init=False)

    def __post_init__(self):
        c = np.asarray(self.c, dtype=np.complex128)
        if c.shape != (4, 4):
            raise ChannelValidationError(f"logical values must be 4x4, got {c.shape}")
        self.c = c
        self.norm_factor = complex(c[0, 0])

    def normalized_ptm(self) -> np.ndarray:
        scale = float(np.max(np.abs(self.c)))
        if scale == 0.0 or abs(self.norm_factor) < 1e-10 * scale:
            raise ZeroProbabilityError(
                "logical channel has no weight on this syndrome"
            )
        ratio = self.c / self.norm_factor
        return ratio.real

    def channel(self) -> QubitChannel:
        return QubitChannel(self.normalized_ptm())

    def syndrome_probability(self) -> float:
        """p(s) under the convention that these values sum to 2 over all
        syndromes at the (I, I) entry."""
        return float(self.norm_factor.real) * math.exp(self.log_magnitude) / 2.0


def select_correction(
    lc: LogicalChoi,
    norm: str = "diamond",
    rng: np.random.Generator | None = None,
) -> str:
    """The logical Pauli whose application brings the channel closest to the
    identity; ties break in the fixed order I < X < Y < Z."""
    if norm not in ("trace", "diamond"):
        raise ValueError(f"unknown norm {norm!r}")
    ptm = lc.normalized_ptm()
    if rng is None:
        rng = np.random.default_rng(0)
    children = rng.spawn(4)
    dists = []
    for label, child in zip(PAULI_LABELS, children):
        corrected = QubitChannel(np.diag(CONJUGATION_SIGNS[label]) @ ptm)
        if norm == "trace":
            dists.append(trace_distance_from_identity(corrected))
        else:
            dists.append(diamond_distance_from_identity(corrected, rng=child))
    return PAULI_LABELS[int(np.argmin(dists))]
