"""Benchmark noise models: i.i.d. amplitude damping and correlated bit flips.

The correlated model draws bit-flip patterns from the Boltzmann weight of an
Ising energy on the qubit grid,

    E(sigma) = -h sum_i sigma_i - j1 sum_<ij> sigma_i sigma_j
               - j2 sum_f prod_{i in f} sigma_i,

with sigma_i = -1 meaning qubit i is flipped and the four-body sum running
over the z-check faces.  That face choice makes the j2 term a function of
the syndrome alone, so conditional distributions given a syndrome (and hence
decoding) do not depend on j2; the decoder-facing factorization therefore
drops it.

Each model is available in three forms: exact distribution (enumeration,
small systems), Markov-chain sampling, and local tensor-network factors with
one physical Pauli-action index per site and virtual bonds of dimension D
(1 for product noise, 2 for the correlated model).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .channels import KrausChannel, ptm_from_kraus
from .lattice import Lattice, PauliFrame


class CapacityError(ValueError):
    """Raised when an exact-enumeration routine is asked to exceed its bound."""


@dataclass(frozen=True)
class IsingParams:
    """Couplings of the correlated bit-flip energy."""

    beta: float
    h: float
    j1: float
    j2: float

    def __post_init__(self):
        vals = (self.beta, self.h, self.j1, self.j2)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("all couplings must be finite")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")


@dataclass
class SpinConfig:
    """One bit-flip pattern: +1 keeps a qubit, -1 flips it."""

    spins: np.ndarray

    def __post_init__(self):
        spins = np.asarray(self.spins, dtype=np.int8)
        if spins.ndim != 1 or not np.all(np.abs(spins) == 1):
            raise ValueError("spins must be a flat array of +1/-1 values")
        self.spins = spins

    def frame(self, lat: Lattice) -> PauliFrame:
        """The Pauli frame applying X wherever the spin is -1."""
        if len(self.spins) != lat.n_qubits:
            raise ValueError("spin count does not match the lattice")
        x_mask = 0
        for i, s in enumerate(self.spins):
            if s < 0:
                x_mask |= 1 << i
        return PauliFrame(x_mask, 0)


@dataclass
class ExactDistribution:
    """All spin configurations with their Boltzmann probabilities."""

    spins: np.ndarray
    probabilities: np.ndarray
    log_partition: float

    @property
    def partition_function(self) -> float:
        return math.exp(self.log_partition)


@dataclass
class NoiseNetworkFactor:
    """Per-site noise tensors for the decoder's grid network.

    ``site_tensor(r, c)`` has axes (pauli_out, pauli_in, north, south, west,
    east): a 4x4 Pauli-transfer block and one virtual bond per grid
    neighbour.  Bond axes toward absent neighbours have dimension 1, so all
    tensors are uniformly rank 6.  Contracting every bond reproduces the
    global channel's Pauli transfer matrix up to an overall scale.
    """

    lattice: Lattice
    bond_dim: int
    _tensors: dict = field(repr=False)

    def site_tensor(self, row: int, col: int) -> np.ndarray:
        return self._tensors[(row, col)]


# ---------------------------------------------------------------------------
# Amplitude damping
# ---------------------------------------------------------------------------


def amplitude_damping(gamma: float) -> KrausChannel:
    """The single-qubit damping channel with decay probability ``gamma``."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"damping parameter must lie in [0, 1], got {gamma}")
    k0 = np.array([[1.0, 0.0], [0.0, math.sqrt(1.0 - gamma)]])
    k1 = np.array([[0.0, math.sqrt(gamma)], [0.0, 0.0]])
    return KrausChannel([k0, k1])


# ---------------------------------------------------------------------------
# Correlated bit-flip energy and distributions
# ---------------------------------------------------------------------------


def _grid_edges(lat: Lattice):
    """Nearest-neighbour site-index pairs, row-major, right then down."""
    edges = []
    for r in range(lat.height):
        for c in range(lat.width):
            i = lat.qubit_index(r, c)
            if c + 1 < lat.width:
                edges.append((i, lat.qubit_index(r, c + 1)))
            if r + 1 < lat.height:
                edges.append((i, lat.qubit_index(r + 1, c)))
    return edges


def _zface_sites(lat: Lattice):
    """Site groups of the plaquette terms: every z-check face, including
    the weight-2 boundary checks.  Each product is then fixed by the
    corresponding syndrome bit, which is what makes the coupling drop out
    of the conditional error distribution."""
    return [
        tuple(lat.qubit_index(r, c) for r, c in f.qubits) for f in lat.z_checks
    ]


def _batch_energies(spins: np.ndarray, p: IsingParams, lat: Lattice) -> np.ndarray:
    s = spins.astype(np.float64)
    energy = -p.h * s.sum(axis=-1)
    for i, j in _grid_edges(lat):
        energy -= p.j1 * s[..., i] * s[..., j]
    for sites in _zface_sites(lat):
        prod = np.ones(s.shape[:-1])
        for i in sites:
            prod = prod * s[..., i]
        energy -= p.j2 * prod
    return energy


def cbf_energy(sigma: SpinConfig, p: IsingParams, lat: Lattice) -> float:
    """The Ising energy of one flip pattern."""
    if len(sigma.spins) != lat.n_qubits:
        raise ValueError("spin count does not match the lattice")
    return float(_batch_energies(sigma.spins[None, :], p, lat)[0])


def cbf_exact_distribution(p: IsingParams, lat: Lattice) -> ExactDistribution:
    """Boltzmann probabilities of every flip pattern (needs N <= 20)."""
    n = lat.n_qubits
    if n > 20:
        raise CapacityError(f"exact enumeration capped at 20 qubits, got {n}")
    codes = np.arange(1 << n, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n)) & 1
    spins = (1 - 2 * bits).astype(np.int8)
    log_w = -p.beta * _batch_energies(spins, p, lat)
    log_z = float(logsumexp(log_w))
    return ExactDistribution(
        spins=spins,
        probabilities=np.exp(log_w - log_z),
        log_partition=log_z,
    )


def cbf_mcmc_sample(
    p: IsingParams,
    lat: Lattice,
    n_sweeps: int,
    rng,
    start: str = "plus",
    initial: SpinConfig | None = None,
) -> SpinConfig:
    """One configuration from single-site Metropolis dynamics.

    Sites are visited once per sweep in fixed row-major order; a proposed
    flip is accepted with probability min(1, exp(-beta * dE)).  ``rng`` is a
    numpy Generator or an integer seed.

    ``start`` selects the initial configuration: ``"plus"`` (default) starts
    from all +1, which keeps the chain in the physical low-flip sector the
    benchmarks sample from; ``"uniform"`` starts from a uniformly random
    pattern.  With the near-degenerate field used in the benchmarks a
    uniform start falls into the globally flipped sector about half the
    time, which represents an undetectable logical flip rather than a noise
    droplet, so it is not the default.  An explicit ``initial``
    configuration overrides ``start``.
    """
    if n_sweeps < 1:
        raise ValueError("need at least one sweep")
    if start not in ("plus", "uniform"):
        raise ValueError(f"unknown start mode {start!r}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)

    n = lat.n_qubits
    if initial is not None:
        if len(initial.spins) != n:
            raise ValueError("initial spin count does not match the lattice")
        spins = [int(s) for s in initial.spins]
    elif start == "plus":
        spins = [1] * n
    else:
        spins = [1 - 2 * int(b) for b in rng.integers(0, 2, size=n)]

    neighbours = [[] for _ in range(n)]
    for i, j in _grid_edges(lat):
        neighbours[i].append(j)
        neighbours[j].append(i)
    neighbours = [tuple(v) for v in neighbours]
    zfaces = _zface_sites(lat)
    faces_of = [[] for _ in range(n)]
    for fi, sites in enumerate(zfaces):
        for i in sites:
            faces_of[i].append(fi)
    faces_of = [tuple(v) for v in faces_of]
    face_prod = [1] * len(zfaces)
    for fi, sites in enumerate(zfaces):
        for i in sites:
            face_prod[fi] *= spins[i]

    beta, h, j1, j2 = p.beta, p.h, p.j1, p.j2
    exp_fn = math.exp
    for _ in range(n_sweeps):
        draws = rng.random(n)
        for i in range(n):
            s = spins[i]
            nbr_sum = 0
            for j in neighbours[i]:
                nbr_sum += spins[j]
            face_sum = 0
            for f in faces_of[i]:
                face_sum += face_prod[f]
            delta = 2.0 * s * (h + j1 * nbr_sum) + 2.0 * j2 * face_sum
            if delta <= 0.0 or draws[i] < exp_fn(-beta * delta):
                spins[i] = -s
                for f in faces_of[i]:
                    face_prod[f] = -face_prod[f]
    return SpinConfig(np.array(spins, dtype=np.int8))


# ---------------------------------------------------------------------------
# Tensor-network factors
# ---------------------------------------------------------------------------


def _symmetric_sqrt(mat: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(mat)
    root = np.sqrt(w.astype(np.complex128))
    out = (v * root) @ v.T
    if np.max(np.abs(out.imag)) < 1e-14:
        return out.real
    return out


def cbf_network_factors(p: IsingParams, lat: Lattice) -> NoiseNetworkFactor:
    """Bond-dimension-2 factors of the correlated model with j2 dropped.

    Every grid edge carries the Boltzmann matrix B[s, s'] = exp(beta j1 s s')
    split symmetrically between its two endpoint tensors; every site sums
    its spin against the field weight exp(beta h s) and the conditional
    Pauli action diag(1, 1, s, s).  The j2 term is omitted because it cannot
    change conditional probabilities given the syndrome.
    """
    b = p.beta * p.j1
    bond = np.array([[math.exp(b), math.exp(-b)], [math.exp(-b), math.exp(b)]])
    half = _symmetric_sqrt(bond)
    dtype = np.complex128 if np.iscomplexobj(half) else np.float64
    tensors = {}
    for r in range(lat.height):
        for c in range(lat.width):
            has = {
                "n": r > 0,
                "s": r + 1 < lat.height,
                "w": c > 0,
                "e": c + 1 < lat.width,
            }
            dims = tuple(2 if has[d] else 1 for d in "nswe")
            t = np.zeros((4, 4) + dims, dtype=dtype)
            for idx, s in ((0, 1), (1, -1)):
                action = np.diag([1.0, 1.0, float(s), float(s)])
                legs = [
                    half[idx, :] if has[d] else np.ones(1) for d in "nswe"
                ]
                outer = np.einsum("a,b,c,d->abcd", *legs)
                t += math.exp(p.beta * p.h * s) * action[:, :, None, None, None, None] * outer
            tensors[(r, c)] = t
    return NoiseNetworkFactor(lattice=lat, bond_dim=2, _tensors=tensors)


def iid_network_factors(k: KrausChannel, lat: Lattice) -> NoiseNetworkFactor:
    """Bond-dimension-1 factors of a product channel: one PTM per site."""
    ptm = ptm_from_kraus(k).ptm.astype(np.float64)
    block = ptm.reshape(4, 4, 1, 1, 1, 1)
    tensors = {
        (r, c): block for r in range(lat.height) for c in range(lat.width)
    }
    return NoiseNetworkFactor(lattice=lat, bond_dim=1, _tensors=tensors)
