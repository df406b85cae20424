"""Label-addressed dense tensors and boundary-MPS contraction of square grids.

Tensors carry a name for every axis.  Contraction pairs up equal labels
between two tensors, so no positional index bookkeeping leaks into callers.
On top of that sit a boundary chain (an MPS that sweeps across a grid of
tensors column by column) and ``contract_grid``, which reduces a rectangular
network to a scalar with bounded bond dimension.

Tensor data is stored as ``float64`` or ``complex128``; real inputs stay
real so the factorizations backing compression run in real arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class TensorError(ValueError):
    """Raised for malformed tensors or incompatible contractions."""


class GridStructureError(ValueError):
    """Raised when a grid network violates the rectangular bond layout."""


class Tensor:
    """A dense array whose axes are addressed by string labels.

    Parameters
    ----------
    data : array_like
        Numerical entries; converted to ``complex128`` when complex and
        ``float64`` otherwise.
    labels : sequence of str
        One label per axis, all distinct.
    """

    __slots__ = ("data", "labels")

    def __init__(self, data, labels):
        arr = np.asarray(data)
        want = np.complex128 if np.iscomplexobj(arr) else np.float64
        if arr.dtype != want:
            arr = arr.astype(want)
        labels = tuple(labels)
        if arr.ndim != len(labels):
            raise TensorError(
                f"tensor of rank {arr.ndim} given {len(labels)} labels {labels}"
            )
        if len(set(labels)) != len(labels):
            raise TensorError(f"duplicate axis labels in {labels}")
        self.data = arr
        self.labels = labels

    # -- bookkeeping helpers -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    def dim(self, label: str) -> int:
        return self.data.shape[self.labels.index(label)]

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), self.labels)

    def relabel(self, mapping: dict) -> "Tensor":
        """Return a view-equivalent tensor with axis labels renamed."""
        return Tensor(self.data, tuple(mapping.get(l, l) for l in self.labels))

    def transpose_to(self, labels) -> "Tensor":
        labels = tuple(labels)
        if set(labels) != set(self.labels):
            raise TensorError(f"cannot transpose {self.labels} to {labels}")
        perm = tuple(self.labels.index(l) for l in labels)
        return Tensor(self.data.transpose(perm), labels)

    def fuse(self, group, new_label: str) -> "Tensor":
        """Merge the axes named in ``group`` (in the given order) into one axis.

        The fused axis is appended after the surviving axes, so matching
        fusions on neighbouring tensors stay index-compatible as long as the
        group order agrees.
        """
        group = tuple(group)
        rest = tuple(l for l in self.labels if l not in group)
        t = self.transpose_to(rest + group)
        shape = t.data.shape[: len(rest)] + (-1,)
        return Tensor(t.data.reshape(shape), rest + (new_label,))

    def conj(self) -> "Tensor":
        return Tensor(self.data.conj(), self.labels)

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def item(self) -> complex:
        if self.data.size != 1:
            raise TensorError(f"tensor of shape {self.shape} is not a scalar")
        return complex(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(labels={self.labels}, shape={self.shape})"


def contract(a: Tensor, b: Tensor) -> Tensor:
    """Contract two tensors over every label they share.

    The output carries ``a``'s surviving labels followed by ``b``'s, in their
    original order.  If the tensors share no label the result is their outer
    product.  Shared labels with mismatched dimensions raise ``TensorError``.
    """
    shared = [l for l in a.labels if l in b.labels]
    axes_a = [a.labels.index(l) for l in shared]
    axes_b = [b.labels.index(l) for l in shared]
    for l, ia, ib in zip(shared, axes_a, axes_b):
        if a.data.shape[ia] != b.data.shape[ib]:
            raise TensorError(
                f"label {l!r} has dimension {a.data.shape[ia]} in one tensor "
                f"and {b.data.shape[ib]} in the other"
            )
    out = np.tensordot(a.data, b.data, axes=(axes_a, axes_b))
    keep_a = tuple(l for l in a.labels if l not in shared)
    keep_b = tuple(l for l in b.labels if l not in shared)
    return Tensor(out, keep_a + keep_b)


def svd_split(
    t: Tensor,
    left_labels,
    max_bond: int | None = None,
    tol: float = 0.0,
    new_label: str = "bond",
    absorb: str = "right",
    method: str = "svd",
):
    """Split ``t`` into ``left`` and ``right`` factors across an SVD.

    ``left_labels`` selects the axes grouped on the left of the cut (kept in
    their order within ``t``); the remaining axes form the right group.  The
    singular values are absorbed into the factor named by ``absorb``, leaving
    the other factor an exact isometry.  The kept bond dimension is
    ``min(max_bond, number of singular values above tol * largest)`` and at
    least 1.

    ``method="gram"`` computes the left isometry from the row Gram matrix and
    the right factor by projection, which is markedly cheaper at wide shapes.
    It applies only when ``max_bond`` is set, ``absorb`` is ``"right"`` and
    the left group is not the larger one; the squared spectrum cannot resolve
    singular values below roughly the root of machine epsilon, so directions
    that small may be retained up to the cap despite ``tol``.  The kept
    values themselves are exact either way.

    Returns
    -------
    (left, right, discarded) where ``discarded`` is the square root of the
    sum of squared discarded singular values.
    """
    keep_set = set(left_labels)
    left_labels = tuple(l for l in t.labels if l in keep_set)
    right_labels = tuple(l for l in t.labels if l not in keep_set)
    if not left_labels or not right_labels:
        raise TensorError("svd_split needs a nonempty group on both sides")
    if new_label in t.labels:
        raise TensorError(f"bond label {new_label!r} collides with an axis label")
    if absorb not in ("left", "right"):
        raise TensorError(f"absorb must be 'left' or 'right', got {absorb!r}")
    if method not in ("svd", "gram"):
        raise TensorError(f"method must be 'svd' or 'gram', got {method!r}")

    tt = t.transpose_to(left_labels + right_labels)
    lshape = tt.data.shape[: len(left_labels)]
    rshape = tt.data.shape[len(left_labels):]
    mat = tt.data.reshape(int(np.prod(lshape)), int(np.prod(rshape)))

    if (
        method == "gram"
        and max_bond is not None
        and absorb == "right"
        and mat.shape[0] <= mat.shape[1]
    ):
        # The left factor is the top eigenbasis of the row Gram matrix and the
        # right factor is its adjoint applied to the matrix, so the kept
        # weights are never squared or divided through.  Roughly halves the
        # factorization cost at the bond shapes the column sweep produces.
        w, q = np.linalg.eigh(mat @ mat.conj().T)
        ssq = np.maximum(w[::-1], 0.0)
        if ssq.size == 0 or ssq[0] == 0.0:
            keep = 1
        else:
            keep = max(int(np.count_nonzero(ssq > (tol * tol) * ssq[0])), 1)
        keep = min(keep, int(max_bond))
        discarded = float(np.sqrt(np.sum(ssq[keep:])))
        lmat = q[:, ::-1][:, :keep]
        rmat = lmat.conj().T @ mat
    else:
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        if s.size == 0 or s[0] == 0.0:
            keep = 1
        else:
            keep = max(int(np.count_nonzero(s > tol * s[0])), 1)
        if max_bond is not None:
            keep = min(keep, int(max_bond))
        discarded = float(np.sqrt(np.sum(s[keep:] ** 2)))
        lmat = u[:, :keep]
        rmat = vh[:keep]
        if absorb == "right":
            rmat = s[:keep, None] * rmat
        else:
            lmat = lmat * s[None, :keep]
    left = Tensor(lmat.reshape(lshape + (keep,)), left_labels + (new_label,))
    right = Tensor(rmat.reshape((keep,) + rshape), (new_label,) + right_labels)
    return left, right, discarded


# ---------------------------------------------------------------------------
# Boundary chain
# ---------------------------------------------------------------------------

_UP, _DOWN, _PHYS = "_bc_up", "_bc_down", "_bc_phys"


@dataclass
class BoundaryChain:
    """MPS over the rows of a grid column, swept left to right across columns.

    Each site tensor carries labels ``_bc_up``/``_bc_down`` (chain bonds;
    dimension 1 at the two ends) and ``_bc_phys`` (the open index facing the
    unconsumed part of the grid).  ``log_scale`` accumulates the logarithm of
    factored-out magnitudes so stored entries stay well scaled; the
    represented object is ``exp(log_scale)`` times the stored chain.
    ``truncation_error`` accumulates the relative weight discarded across all
    bond cuts.  ``centre`` names the end currently holding the orthogonality
    centre, which fixes the direction of the next ``absorb_compress`` pass.
    """

    sites: list
    max_bond: int | None = None
    tol: float = 0.0
    log_scale: float = 0.0
    truncation_error: float = 0.0
    centre: str = "top"

    @classmethod
    def from_column(cls, cells, max_bond=None, tol=0.0):
        """Start a chain from the leftmost grid column.

        Every cell must have a dimension-1 ``left`` axis, which is squeezed
        away; ``right`` becomes the physical axis and ``up``/``down`` the
        chain bonds.
        """
        sites = []
        for cell in cells:
            if cell.dim("left") != 1:
                raise GridStructureError("leftmost column has a nontrivial left bond")
            t = contract(cell, Tensor(np.ones(1), ("left",)))
            sites.append(t.relabel({"up": _UP, "down": _DOWN, "right": _PHYS}))
        chain = cls(sites, max_bond=max_bond, tol=tol)
        chain._rescale()
        return chain

    def __len__(self):
        return len(self.sites)

    def _rescale(self):
        for i, site in enumerate(self.sites):
            nrm = site.norm()
            if nrm > 0.0 and nrm != 1.0:
                self.sites[i] = Tensor(site.data / nrm, site.labels)
                self.log_scale += math.log(nrm)

    def absorb_column(self, cells):
        """Contract one grid column into the chain, merging vertical bonds."""
        if len(cells) != len(self.sites):
            raise GridStructureError(
                f"column of height {len(cells)} absorbed into chain of {len(self.sites)}"
            )
        new_sites = []
        for site, cell in zip(self.sites, cells):
            if site.dim(_PHYS) != cell.dim("left"):
                raise GridStructureError("horizontal bond dimension mismatch")
            merged = contract(
                site.relabel({_PHYS: "_absorb"}), cell.relabel({"left": "_absorb"})
            )
            merged = merged.fuse((_UP, "up"), "_fused_up").relabel({"_fused_up": _UP})
            merged = merged.fuse((_DOWN, "down"), "_fused_down").relabel(
                {"_fused_down": _DOWN}
            )
            new_sites.append(merged.relabel({"right": _PHYS}))
        self.sites = new_sites
        self._rescale()

    def absorb_compress(self, cells):
        """Contract one grid column into the chain, truncating on the fly.

        A zip-up pass: the orthogonality centre starts at one end of the
        chain and is carried to the other, cutting each bond right after the
        site it leaves is absorbed.  Every factorization therefore acts on
        matrices whose chain bonds are already truncated, instead of the cap
        times the grid bond.  Consecutive calls alternate direction, so no
        separate re-canonicalization sweep is needed between columns.
        """
        if len(cells) != len(self.sites):
            raise GridStructureError(
                f"column of height {len(cells)} absorbed into chain of {len(self.sites)}"
            )
        if self.centre == "top":
            lead, lead_cell, trail, trail_cell = _UP, "up", _DOWN, "down"
            order = range(len(self.sites))
            self.centre = "bottom"
        else:
            lead, lead_cell, trail, trail_cell = _DOWN, "down", _UP, "up"
            order = range(len(self.sites) - 1, -1, -1)
            self.centre = "top"
        carry = None
        new_sites = []
        for count, i in enumerate(order):
            site, cell = self.sites[i], cells[i]
            if site.dim(_PHYS) != cell.dim("left"):
                raise GridStructureError("horizontal bond dimension mismatch")
            merged = contract(
                site.relabel({_PHYS: "_absorb"}), cell.relabel({"left": "_absorb"})
            )
            merged = merged.fuse((lead, lead_cell), "_zip_lead")
            if carry is not None:
                merged = contract(carry, merged)
            merged = merged.relabel({"_zip_lead": lead})
            if count == len(self.sites) - 1:
                merged = merged.fuse((trail, trail_cell), "_zip_trail")
                new_sites.append(
                    merged.relabel({"_zip_trail": trail, "right": _PHYS})
                )
                break
            total = merged.norm()
            left, right, discarded = svd_split(
                merged,
                (lead, "right"),
                max_bond=self.max_bond,
                tol=self.tol,
                new_label="_cut",
                absorb="right",
                method="gram",
            )
            new_sites.append(left.relabel({"right": _PHYS, "_cut": trail}))
            carry = right.relabel({"_cut": lead}).fuse(
                (trail, trail_cell), "_zip_lead"
            )
            if total > 0.0:
                self.truncation_error += discarded / total
        if order.step == -1:
            new_sites.reverse()
        self.sites = new_sites
        self._rescale()

    def canonicalize(self):
        """One top-to-bottom QR sweep.

        Afterwards every site but the last is an exact isometry from its down
        bond into its (up, phys) pair, and the orthogonality centre sits at
        the bottom site.
        """
        for i in range(len(self.sites) - 1):
            t = self.sites[i].transpose_to((_UP, _PHYS, _DOWN))
            u_dim, p_dim, d_dim = t.data.shape
            q, r = np.linalg.qr(t.data.reshape(u_dim * p_dim, d_dim))
            k = q.shape[1]
            self.sites[i] = Tensor(q.reshape(u_dim, p_dim, k), (_UP, _PHYS, _DOWN))
            carry = Tensor(r, ("_qr_new", "_qr_old"))
            nxt = contract(carry, self.sites[i + 1].relabel({_UP: "_qr_old"}))
            self.sites[i + 1] = nxt.relabel({"_qr_new": _UP})
        self.centre = "bottom"

    def truncate(self):
        """Bottom-to-top SVD sweep cutting each bond to the chain's limits.

        Assumes the orthogonality centre is at the bottom (run
        ``canonicalize`` first); each cut then minimizes the error of the
        whole chain, and the centre finishes at the top.  The relative
        discarded weight of every cut is added to ``truncation_error``.
        """
        for i in range(len(self.sites) - 1, 0, -1):
            t = self.sites[i]
            total = t.norm()
            iso, carry, discarded = svd_split(
                t,
                (_PHYS, _DOWN),
                max_bond=self.max_bond,
                tol=self.tol,
                new_label="_cut",
                absorb="right",
            )
            # carry (labels _cut, _bc_up) holds the singular values and moves
            # the centre up; iso becomes the new bottom-anchored site.
            self.sites[i] = iso.relabel({"_cut": _UP})
            prev = contract(
                self.sites[i - 1].relabel({_DOWN: "_link"}),
                carry.relabel({_UP: "_link"}),
            )
            self.sites[i - 1] = prev.relabel({"_cut": _DOWN})
            if total > 0.0:
                self.truncation_error += discarded / total
        self._rescale()
        self.centre = "top"

    def compress(self):
        self.canonicalize()
        self.truncate()

    def max_bond_dimension(self) -> int:
        return max(max(s.dim(_UP), s.dim(_DOWN)) for s in self.sites)

    def copy(self) -> "BoundaryChain":
        return BoundaryChain(
            [s.copy() for s in self.sites],
            max_bond=self.max_bond,
            tol=self.tol,
            log_scale=self.log_scale,
            truncation_error=self.truncation_error,
            centre=self.centre,
        )

    def close_scaled(self):
        """Collapse a chain with trivial physical axes to (mantissa, log_scale).

        The represented scalar is ``mantissa * exp(log_scale)``; keeping the
        two apart avoids overflow when the accumulated scale is large.
        """
        acc = Tensor(np.ones(1), (_DOWN,))
        for site in self.sites:
            if site.dim(_PHYS) != 1:
                raise GridStructureError("closing a chain with open physical axes")
            t = contract(site, Tensor(np.ones(1), (_PHYS,)))
            t = t.relabel({_UP: _DOWN, _DOWN: "_next"})
            acc = contract(acc, t).relabel({"_next": _DOWN})
        value = contract(acc, Tensor(np.ones(1), (_DOWN,))).item()
        return value, self.log_scale

    def close(self) -> complex:
        """Collapse a chain whose physical axes are all trivial to a scalar."""
        value, log_scale = self.close_scaled()
        return value * math.exp(log_scale)


@dataclass
class GridNetwork:
    """A rows-by-columns array of tensors with matched nearest-neighbour bonds.

    Cell axes are named ``up``, ``down``, ``left``, ``right``; missing axes
    are added with dimension 1 so every cell is rank 4.  ``down`` of a cell
    must match ``up`` of the cell below, ``right`` must match ``left`` of the
    cell to its right, and every outward-facing axis must have dimension 1.
    """

    cells: list
    rows: int = field(init=False)
    cols: int = field(init=False)

    def __post_init__(self):
        if not self.cells or not self.cells[0]:
            raise GridStructureError("empty grid")
        self.rows = len(self.cells)
        self.cols = len(self.cells[0])
        norm_cells = []
        for r, row in enumerate(self.cells):
            if len(row) != self.cols:
                raise GridStructureError("ragged grid")
            norm_row = []
            for c, cell in enumerate(row):
                extra = set(cell.labels) - {"up", "down", "left", "right"}
                if extra:
                    raise GridStructureError(f"cell ({r},{c}) has stray axes {extra}")
                data = cell.data
                labels = list(cell.labels)
                for missing in ("up", "down", "left", "right"):
                    if missing not in labels:
                        data = data.reshape(data.shape + (1,))
                        labels.append(missing)
                norm_row.append(Tensor(data, labels))
            norm_cells.append(norm_row)
        self.cells = norm_cells
        for r in range(self.rows):
            for c in range(self.cols):
                cell = self.cells[r][c]
                if r == 0 and cell.dim("up") != 1:
                    raise GridStructureError(f"cell (0,{c}) has an open up bond")
                if r == self.rows - 1 and cell.dim("down") != 1:
                    raise GridStructureError(f"cell ({r},{c}) has an open down bond")
                if c == 0 and cell.dim("left") != 1:
                    raise GridStructureError(f"cell ({r},0) has an open left bond")
                if c == self.cols - 1 and cell.dim("right") != 1:
                    raise GridStructureError(f"cell ({r},{c}) has an open right bond")
                if r + 1 < self.rows and cell.dim("down") != self.cells[r + 1][c].dim("up"):
                    raise GridStructureError(f"vertical bond mismatch below ({r},{c})")
                if c + 1 < self.cols and cell.dim("right") != self.cells[r][c + 1].dim("left"):
                    raise GridStructureError(f"horizontal bond mismatch right of ({r},{c})")

    def column(self, c: int):
        return [self.cells[r][c] for r in range(self.rows)]

    def transposed(self) -> "GridNetwork":
        """Swap row and column roles (up/left and down/right exchange)."""
        swap = {"up": "left", "left": "up", "down": "right", "right": "down"}
        cells = [
            [self.cells[r][c].relabel(swap) for r in range(self.rows)]
            for c in range(self.cols)
        ]
        return GridNetwork(cells)


def contract_grid_scaled(net: GridNetwork, max_bond: int | None = None, tol: float = 0.0):
    """Contract a grid network, keeping the magnitude as a separate logarithm.

    Columns are absorbed left to right; after each one the boundary chain is
    canonicalized (QR sweep) and truncated (SVD sweep) down to ``max_bond``
    with relative singular value cutoff ``tol``.

    Returns
    -------
    (mantissa, log_magnitude, truncation_error) : the network value is
    ``mantissa * exp(log_magnitude)``; the last entry is the accumulated
    relative discarded weight over all bond cuts (zero means the contraction
    was exact up to rounding).
    """
    chain = BoundaryChain.from_column(net.column(0), max_bond=max_bond, tol=tol)
    chain.compress()
    for c in range(1, net.cols):
        chain.absorb_compress(net.column(c))
    if any(s.dim(_PHYS) != 1 for s in chain.sites):
        raise GridStructureError("rightmost column has a nontrivial right bond")
    value, log_scale = chain.close_scaled()
    return value, log_scale, chain.truncation_error


def contract_grid(net: GridNetwork, max_bond: int | None = None, tol: float = 0.0):
    """Contract a grid network to a scalar by absorbing columns left to right.

    Same sweep as ``contract_grid_scaled`` but with the magnitude folded back
    into the returned value.

    Returns
    -------
    (value, truncation_error) : the scalar value of the network and the
    accumulated relative discarded weight over all bond cuts.
    """
    value, log_scale, err = contract_grid_scaled(net, max_bond=max_bond, tol=tol)
    return value * math.exp(log_scale), err
