"""Tensor-product Q1 grids with quadrature evaluation/gradient operators.

Grids are uniform dyadic boxes: the unit interval (with or without boundary
nodes) and the unit torus (periodically identified nodes).  All finite element
work in the library reduces to sparse matrices that evaluate nodal fields and
their gradients at tensor Gauss points.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

__all__ = ["Grid1D", "TensorGrid", "gauss_rule", "prolongation_1d"]


@lru_cache(maxsize=None)
def gauss_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [0, 1]."""
    g, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (g + 1.0), 0.5 * w


@dataclass(frozen=True)
class Grid1D:
    """Uniform 1d grid: 'interval' keeps both endpoints, 'torus' identifies them."""

    kind: str
    n_cells: int

    def __post_init__(self) -> None:
        if self.kind not in ("interval", "torus"):
            raise ValueError(f"unknown grid kind '{self.kind}'")
        if self.n_cells < 1:
            raise ValueError("need at least one cell")

    @property
    def h(self) -> float:
        return 1.0 / self.n_cells

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1 if self.kind == "interval" else self.n_cells

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_nodes) * self.h

    def cell_node_indices(self) -> tuple[np.ndarray, np.ndarray]:
        """(left, right) node index per cell, with torus wrap-around."""
        cells = np.arange(self.n_cells)
        left = cells
        right = cells + 1
        if self.kind == "torus":
            right = right % self.n_cells
        return left, right

    def quadrature(self, n_gauss: int = 2) -> "Quad1D":
        return Quad1D(self, n_gauss)

    def interior_mask(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        if self.kind == "interval":
            mask[0] = mask[-1] = False
        return mask


class Quad1D:
    """Per-axis quadrature with sparse nodal evaluation/gradient operators."""

    def __init__(self, grid: Grid1D, n_gauss: int):
        self.grid = grid
        self.n_gauss = n_gauss
        t, w = gauss_rule(n_gauss)
        h = grid.h
        cells = np.arange(grid.n_cells)
        self.points = (cells[:, None] * h + t[None, :] * h).ravel()
        self.weights = np.tile(w * h, grid.n_cells)
        left, right = grid.cell_node_indices()
        rows = np.repeat(np.arange(grid.n_cells * n_gauss), 1)
        li = np.repeat(left, n_gauss)
        ri = np.repeat(right, n_gauss)
        tq = np.tile(t, grid.n_cells)
        n_q = grid.n_cells * n_gauss
        self.eval_op = sp.csr_matrix(
            (np.concatenate([1.0 - tq, tq]),
             (np.concatenate([rows, rows]), np.concatenate([li, ri]))),
            shape=(n_q, grid.n_nodes))
        self.grad_op = sp.csr_matrix(
            (np.concatenate([-np.full(n_q, 1.0 / h), np.full(n_q, 1.0 / h)]),
             (np.concatenate([rows, rows]), np.concatenate([li, ri]))),
            shape=(n_q, grid.n_nodes))


def _kron_all(mats: list[sp.spmatrix]) -> sp.spmatrix:
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return sp.csr_matrix(out)


class TensorGrid:
    """d-dimensional tensor product of identical-per-axis 1d grids."""

    def __init__(self, kind: str, n_cells: int, dim: int, n_gauss: int = 2):
        self.kind = kind
        self.dim = dim
        self.n_cells = n_cells
        self.n_gauss = n_gauss
        self.axis = Grid1D(kind, n_cells)
        self._q1 = self.axis.quadrature(n_gauss)
        self._eval = None
        self._grads: dict[int, sp.spmatrix] = {}

    @property
    def n_nodes(self) -> int:
        return self.axis.n_nodes**self.dim

    @property
    def n_quad(self) -> int:
        return len(self._q1.points) ** self.dim

    @property
    def h(self) -> float:
        return self.axis.h

    def node_points(self) -> np.ndarray:
        """(n_nodes, dim) coordinates in kron (axis-1 outer) ordering."""
        axes = [self.axis.nodes] * self.dim
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def quad_points(self) -> np.ndarray:
        axes = [self._q1.points] * self.dim
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def quad_weights(self) -> np.ndarray:
        w = self._q1.weights
        out = w
        for _ in range(self.dim - 1):
            out = np.kron(out, w)
        return out

    def eval_matrix(self) -> sp.spmatrix:
        if self._eval is None:
            self._eval = _kron_all([self._q1.eval_op] * self.dim)
        return self._eval

    def grad_matrix(self, p: int) -> sp.spmatrix:
        """Gradient component p (1-based) at quadrature points."""
        if p not in self._grads:
            mats = [self._q1.eval_op] * self.dim
            mats[p - 1] = self._q1.grad_op
            self._grads[p] = _kron_all(mats)
        return self._grads[p]

    def interior_mask(self) -> np.ndarray:
        m = self.axis.interior_mask()
        out = m
        for _ in range(self.dim - 1):
            out = np.kron(out, m).astype(bool)
        return out

    def interpolate(self, nodal: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Multilinear interpolation of a nodal field at arbitrary points.

        Torus grids wrap coordinates periodically.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n1 = self.axis.n_nodes
        vals = np.asarray(nodal, dtype=float).reshape([n1] * self.dim)
        h = self.h
        coords = points.copy()
        if self.kind == "torus":
            coords = np.mod(coords, 1.0)
        idx = np.clip(np.floor(coords / h).astype(int), 0, self.n_cells - 1)
        t = coords / h - idx
        # accumulate over the 2^dim cell corners
        out = np.zeros(points.shape[0])
        for corner in range(2**self.dim):
            weight = np.ones(points.shape[0])
            index = []
            for ax in range(self.dim):
                bit = (corner >> ax) & 1
                node = idx[:, ax] + bit
                if self.kind == "torus":
                    node = node % n1
                index.append(node)
                weight = weight * (t[:, ax] if bit else 1.0 - t[:, ax])
            out += weight * vals[tuple(index)]
        return out


    def gradient(self, nodal: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Gradient of the multilinear interpolant at points, shape (n, dim).

        Piecewise constant per cell along each axis; points sitting exactly
        on cell faces take the left/lower cell's value.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n1 = self.axis.n_nodes
        vals = np.asarray(nodal, dtype=float).reshape([n1] * self.dim)
        h = self.h
        coords = np.mod(points, 1.0) if self.kind == "torus" else points
        idx = np.clip(np.floor(coords / h).astype(int), 0, self.n_cells - 1)
        t = coords / h - idx
        out = np.zeros((points.shape[0], self.dim))
        for corner in range(2**self.dim):
            index = []
            for ax in range(self.dim):
                bit = (corner >> ax) & 1
                node = idx[:, ax] + bit
                if self.kind == "torus":
                    node = node % n1
                index.append(node)
            corner_vals = vals[tuple(index)]
            for p in range(self.dim):
                w = np.ones(points.shape[0])
                for ax in range(self.dim):
                    bit = (corner >> ax) & 1
                    if ax == p:
                        w = w * (1.0 / h if bit else -1.0 / h)
                    else:
                        w = w * (t[:, ax] if bit else 1.0 - t[:, ax])
                out[:, p] += w * corner_vals
        return out


def nodal_gradient(grid: TensorGrid, nodal: np.ndarray) -> np.ndarray:
    """Recovered (central-difference) gradients at grid nodes, (n_nodes, dim).

    Second-order accurate for smooth fields, one-sided at interval ends;
    interpolating these multilinearly gives a gradient evaluation without the
    O(h) pointwise error of the raw piecewise-constant Q1 gradient.
    """
    n1 = grid.axis.n_nodes
    vals = np.asarray(nodal, dtype=float).reshape([n1] * grid.dim)
    h = grid.h
    out = np.empty((grid.n_nodes, grid.dim))
    for p in range(grid.dim):
        if grid.kind == "torus":
            diff = (np.roll(vals, -1, axis=p) - np.roll(vals, 1, axis=p)) / (2 * h)
        else:
            diff = np.gradient(vals, h, axis=p, edge_order=2)
        out[:, p] = diff.ravel()
    return out


def prolongation_1d(coarse: Grid1D, fine: Grid1D) -> sp.spmatrix:
    """Nodal embedding of a coarse dyadic grid into a nested finer one."""
    if fine.kind != coarse.kind or fine.n_cells % coarse.n_cells:
        raise ValueError("grids are not nested")
    ratio = fine.n_cells // coarse.n_cells
    rows, cols, vals = [], [], []
    for j in range(fine.n_nodes):
        pos = j / ratio
        base = int(np.floor(pos))
        t = pos - base
        if coarse.kind == "torus":
            left, right = base % coarse.n_nodes, (base + 1) % coarse.n_nodes
        else:
            left = min(base, coarse.n_nodes - 1)
            right = min(base + 1, coarse.n_nodes - 1)
        if t < 1e-12:
            rows.append(j); cols.append(left); vals.append(1.0)
        else:
            rows += [j, j]; cols += [left, right]; vals += [1.0 - t, t]
    return sp.csr_matrix((vals, (rows, cols)), shape=(fine.n_nodes, coarse.n_nodes))
