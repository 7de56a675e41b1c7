"""Hierarchical piecewise-linear wavelet bases on the interval and torus.

Detail blocks follow the classical construction: block 0 holds the coarse
functions, block l (l >= 1) holds 2**l wavelets living on the grid with
2**(l+1) cells, scaled by 2**(-l/2).  The interior wavelet interpolates
(0, -1, 2, -1, 0) on consecutive nodes; boundary wavelets are one-sided
((-2, 2, -1) at a Dirichlet-free interval end, (0, 2, -1) where the function
must vanish, mirrored on the right).  Three families are provided:

    interval_full  spans all of P1 on [0,1]        (3, 2, 4, 8, ... functions)
    interval_zero  spans P1 with zero boundary     (1, 2, 4, 8, ...)
    torus_detail   spans periodic P1 vanishing at 0 (1, 2, 4, 8, ...),
                   a complement of constants in periodic P1

A solver-level-L space uses blocks 0..L-1 on the 2**L-cell grid.  Exact L2
norms and H1 seminorms of every basis function are tabulated for the Riesz
norm-equivalence scalings and the diagonal preconditioner.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .meshes import Grid1D, prolongation_1d

__all__ = [
    "DetailFamily1D",
    "build_family",
    "WaveletBasis1D",
    "build_wavelet_basis_1d",
    "TensorLevels",
    "count_dofs",
]

_FAMILIES = ("interval_full", "interval_zero", "torus_detail")


def _block_nodal(family: str, block: int) -> tuple[Grid1D, sp.csr_matrix]:
    """Nodal values of the block's functions on its own grid (2**(block+1) cells)."""
    n_cells = 2 ** (block + 1)
    kind = "torus" if family == "torus_detail" else "interval"
    grid = Grid1D(kind, n_cells)
    n_nodes = grid.n_nodes
    cols = []
    if block == 0:
        if family == "interval_full":
            cols = [np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]),
                    np.array([0.0, 0.0, 1.0])]
        elif family == "interval_zero":
            cols = [np.array([0.0, 1.0, 0.0])]
        else:
            cols = [np.array([0.0, 1.0])]
    else:
        scale = 2.0 ** (-block / 2.0)
        n_funcs = 2**block
        for k in range(1, n_funcs + 1):
            v = np.zeros(n_nodes)
            center = 2 * k - 1
            if k == 1:
                if family == "interval_full":
                    v[0], v[1], v[2] = -2.0, 2.0, -1.0
                else:
                    v[1], v[2] = 2.0, -1.0
            elif k == n_funcs:
                if family == "interval_full":
                    v[center - 1], v[center], v[center + 1] = -1.0, 2.0, -2.0
                elif family == "interval_zero":
                    v[center - 1], v[center] = -1.0, 2.0
                else:
                    v[center - 1], v[center] = -1.0, 2.0  # node center+1 == 0 on torus
            else:
                v[center - 1], v[center], v[center + 1] = -1.0, 2.0, -1.0
            cols.append(scale * v)
    mat = sp.csr_matrix(np.stack(cols, axis=1))
    return grid, mat


def _mass_stiffness(grid: Grid1D) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Exact P1 mass and stiffness matrices on a uniform 1d grid."""
    n = grid.n_nodes
    h = grid.h
    left, right = grid.cell_node_indices()
    rows = np.concatenate([left, left, right, right])
    cols = np.concatenate([left, right, left, right])
    mvals = np.concatenate([np.full(grid.n_cells, h / 3.0), np.full(grid.n_cells, h / 6.0),
                            np.full(grid.n_cells, h / 6.0), np.full(grid.n_cells, h / 3.0)])
    svals = np.concatenate([np.full(grid.n_cells, 1.0 / h), np.full(grid.n_cells, -1.0 / h),
                            np.full(grid.n_cells, -1.0 / h), np.full(grid.n_cells, 1.0 / h)])
    mass = sp.csr_matrix((mvals, (rows, cols)), shape=(n, n))
    stiff = sp.csr_matrix((svals, (rows, cols)), shape=(n, n))
    return mass, stiff


@dataclass(frozen=True)
class DetailFamily1D:
    """Blocks 0..n_blocks-1 of one family, synthesised on the fine grid."""

    family: str
    n_blocks: int
    grid: Grid1D                    # fine grid with 2**n_blocks cells
    synthesis: sp.csr_matrix        # (n_nodes, n_coeffs): nodal <- detail
    block_of: np.ndarray            # (n_coeffs,) block index per column
    index_in_block: np.ndarray      # (n_coeffs,) 1-based k within the block
    l2_norms: np.ndarray            # exact L2 norms per column
    h1_seminorms: np.ndarray        # exact H1 seminorms per column

    @property
    def n_coeffs(self) -> int:
        return self.synthesis.shape[1]

    def block_slice(self, block: int) -> slice:
        idx = np.flatnonzero(self.block_of == block)
        return slice(int(idx[0]), int(idx[-1]) + 1)


def build_family(family: str, n_blocks: int) -> DetailFamily1D:
    if family not in _FAMILIES:
        raise ValueError(f"unknown family '{family}'")
    if n_blocks < 1:
        raise ValueError("need at least one block")
    kind = "torus" if family == "torus_detail" else "interval"
    fine = Grid1D(kind, 2**n_blocks)
    pieces, blocks, indices = [], [], []
    for b in range(n_blocks):
        grid_b, nodal_b = _block_nodal(family, b)
        embed = prolongation_1d(grid_b, fine) if grid_b.n_cells != fine.n_cells \
            else sp.identity(fine.n_nodes, format="csr")
        cols = embed @ nodal_b
        pieces.append(cols)
        blocks += [b] * nodal_b.shape[1]
        indices += list(range(1, nodal_b.shape[1] + 1))
    synthesis = sp.csr_matrix(sp.hstack(pieces))
    mass, stiff = _mass_stiffness(fine)
    dense = synthesis.toarray()
    l2 = np.sqrt(np.einsum("nc,nc->c", dense, mass @ dense))
    h1 = np.sqrt(np.maximum(np.einsum("nc,nc->c", dense, stiff @ dense), 0.0))
    return DetailFamily1D(family=family, n_blocks=n_blocks, grid=fine,
                          synthesis=synthesis, block_of=np.array(blocks),
                          index_in_block=np.array(indices),
                          l2_norms=l2, h1_seminorms=h1)


# ---------------------------------------------------------------------------
# levelwise basis view
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WaveletBasis1D:
    """Levelwise 1d wavelet basis with norm-equivalence scaling factors."""

    kind: str                      # "L2-interval" | "H1-periodic"
    max_level: int
    family: DetailFamily1D

    @property
    def n_functions(self) -> int:
        return self.family.n_coeffs

    def index_set(self, level: int) -> np.ndarray:
        return self.family.index_in_block[self.family.block_of == level]

    def evaluate(self, level: int, k: int, x: np.ndarray) -> np.ndarray:
        """Pointwise values of one basis function (piecewise linear)."""
        sel = (self.family.block_of == level) & (self.family.index_in_block == k)
        cols = np.flatnonzero(sel)
        if len(cols) != 1:
            raise KeyError(f"no basis function at level {level}, index {k}")
        nodal = self.family.synthesis[:, cols[0]].toarray().ravel()
        grid = self.family.grid
        x = np.asarray(x, dtype=float)
        if grid.kind == "torus":
            xs = np.mod(x, 1.0)
            nodes = np.append(grid.nodes, 1.0)
            vals = np.append(nodal, nodal[0])
            return np.interp(xs, nodes, vals)
        return np.interp(x, grid.nodes, nodal)

    def l2_scalings(self) -> np.ndarray:
        """Coefficient scalings making the basis L2-normalised."""
        return 1.0 / self.family.l2_norms

    def h1_scalings(self) -> np.ndarray:
        """Coefficient scalings making the basis H1-seminorm-normalised."""
        return 1.0 / self.family.h1_seminorms


def build_wavelet_basis_1d(kind: str, max_level: int) -> WaveletBasis1D:
    """Levelwise basis on the 2**(max_level+1)-cell grid.

    kind "L2-interval" spans P1 on [0,1]; "H1-periodic" spans the complement
    of constants in periodic P1 (all functions vanish at the origin).
    """
    if kind == "L2-interval":
        fam = build_family("interval_full", max_level + 1)
    elif kind == "H1-periodic":
        fam = build_family("torus_detail", max_level + 1)
    else:
        raise ValueError(f"unknown basis kind '{kind}'")
    return WaveletBasis1D(kind=kind, max_level=max_level, family=fam)


# ---------------------------------------------------------------------------
# tensorised level bookkeeping for the solver spaces
# ---------------------------------------------------------------------------

class TensorLevels:
    """Per-column levels and norms of a d-fold tensor product of one family.

    Column ordering is the kron order of the per-axis coefficient indices.
    `with_constant` prepends a constant column per axis (used for the torus
    factor so d >= 2 tensor products contain functions constant in some axes).
    """

    def __init__(self, family: DetailFamily1D, dim: int, with_constant: bool = False):
        self.family = family
        self.dim = dim
        self.with_constant = with_constant
        synth = family.synthesis
        blocks = family.block_of
        l2 = family.l2_norms
        h1 = family.h1_seminorms
        if with_constant:
            const = sp.csr_matrix(np.ones((family.grid.n_nodes, 1)))
            synth = sp.csr_matrix(sp.hstack([const, family.synthesis]))
            blocks = np.concatenate([[0], blocks])
            l2 = np.concatenate([[1.0], l2])  # ||1||_{L2(0,1)} = 1
            h1 = np.concatenate([[0.0], h1])
        self.axis_synthesis = synth
        self.axis_blocks = blocks
        self.axis_l2 = l2
        self.axis_h1 = h1
        self.n_axis = synth.shape[1]

        # tensor synthesis over the d axes
        mat = synth
        for _ in range(dim - 1):
            mat = sp.kron(mat, synth, format="csr")
        self.synthesis = sp.csr_matrix(mat)

        # per-column tensor metadata
        grids = np.meshgrid(*([np.arange(self.n_axis)] * dim), indexing="ij")
        flat = [g.ravel() for g in grids]
        self.levels = np.maximum.reduce([blocks[f] for f in flat])
        l2_prod = np.ones(self.n_axis**dim)
        h1_prod = np.zeros(self.n_axis**dim)
        for ax in range(dim):
            l2_prod = l2_prod * l2[flat[ax]]
        for ax in range(dim):
            term = np.ones(self.n_axis**dim)
            for other in range(dim):
                term = term * (h1[flat[other]] ** 2 if other == ax else l2[flat[other]] ** 2)
            h1_prod = h1_prod + term
        self.l2_sq = l2_prod**2
        self.h1_sq = h1_prod
        if with_constant:
            self.is_constant = np.logical_and.reduce([f == 0 for f in flat])
        else:
            self.is_constant = np.zeros(self.n_axis**dim, dtype=bool)

    @property
    def n_columns(self) -> int:
        return self.n_axis**self.dim


def count_dofs(level: int, dim: int) -> dict[str, int]:
    """Exact degree-of-freedom counts of the level-L spaces.

    "formal" counts follow the tensor space definitions (the micro factor
    counted as periodic nodal classes, constants included); "solve" counts
    drop the pure-constant micro modes the solver excludes.
    """
    if level < 0:
        raise ValueError("level must be >= 0")
    n = 2**level
    u0 = (n - 1) ** dim
    u1_x = (n + 1) ** dim
    u1_y = n**dim
    full_u1 = u1_x * u1_y
    if level == 0:
        sparse_u1 = full_u1
    else:
        fam_x = build_family("interval_full", level)
        fam_y = build_family("torus_detail", level)
        tx = TensorLevels(fam_x, dim)
        ty = TensorLevels(fam_y, dim, with_constant=True)
        lx = tx.levels
        ly = ty.levels
        sparse_u1 = int(np.sum(lx[:, None] + ly[None, :] <= level - 1))
    return {
        "level": level,
        "dim": dim,
        "u0": u0,
        "u1_full": full_u1,
        "u1_sparse": sparse_u1,
        "total_full": u0 + full_u1,
        "total_sparse": u0 + sparse_u1,
        "u1_full_solve": full_u1 - u1_x,
        "u1_sparse_solve": sparse_u1 - u1_x if level > 0 else full_u1 - u1_x,
    }
