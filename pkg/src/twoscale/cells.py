"""Periodic unit-cell problems and the effective (homogenized) tensor.

For a coefficient realisation A(z; x, .) at a macroscopic point x, the cell
responses w^l solve

    div_y(A grad_y w^l) = -div_y(A e^l)   on the unit torus,

and the effective tensor is assembled by the symmetric quadrature

    A0_kl(x) = sum_q w_q A_q (e^k + grad w^k)_q . (e^l + grad w^l)_q.

Cell meshes at level `L_cell` have 2**L_cell cells per axis.  Solves at
distinct macro points are independent and may run in a process pool.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .coefficients import TwoScaleCoefficient
from .errors import CoercivityError
from .iterative import pcg
from .meshes import TensorGrid, nodal_gradient

__all__ = [
    "CellSolutionSet",
    "HomogenizedTensorField",
    "solve_cell_problems",
    "homogenized_tensor",
    "corrector_field",
    "CorrectorField",
    "dump_tensor_csv",
    "dump_cell_slice_csv",
]


@dataclass(frozen=True)
class CellSolutionSet:
    """Mean-zero periodic cell responses w^l at a set of macro points."""

    macro_points: np.ndarray          # (n_pts, d)
    level: int
    dim: int
    solutions: np.ndarray             # (n_pts, d, n_nodes)
    residuals: np.ndarray             # (n_pts, d) relative solver residuals
    coercivity: tuple[float, float]

    @property
    def grid(self) -> TensorGrid:
        return TensorGrid("torus", 2**self.level, self.dim)

    def gradient_at_quad(self, pt_index: int) -> np.ndarray:
        """grad_y w^l at the cell quadrature points, shape (d, d, n_quad).

        First index l (which cell problem), second the gradient component.
        """
        grid = self.grid
        out = np.empty((self.dim, self.dim, grid.n_quad))
        for l in range(self.dim):
            for p in range(self.dim):
                out[l, p] = grid.grad_matrix(p + 1) @ self.solutions[pt_index, l]
        return out


@dataclass(frozen=True)
class HomogenizedTensorField:
    """Symmetric effective tensors A0(x) sampled at macro points."""

    macro_points: np.ndarray  # (n_pts, d)
    tensors: np.ndarray       # (n_pts, d, d)

    @property
    def dim(self) -> int:
        return self.tensors.shape[-1]

    def as_scalar(self) -> np.ndarray:
        """1d convenience accessor: A0 values as a flat array."""
        if self.dim != 1:
            raise ValueError("scalar view only available for d=1")
        return self.tensors[:, 0, 0]


def _solve_single(args):
    (a_quad, dim, level, tol, max_iter) = args
    grid = TensorGrid("torus", 2**level, dim)
    w_q = grid.quad_weights()
    aw = a_quad * w_q
    grads = [grid.grad_matrix(p + 1) for p in range(dim)]

    def apply_op(v):
        out = np.zeros_like(v)
        for g in grads:
            out += g.T @ (aw * (g @ v))
        return out

    diag = np.zeros(grid.n_nodes)
    for g in grads:
        diag += g.multiply(g).T @ aw
    n = grid.n_nodes

    def project(v):
        return v - v.mean()

    sols = np.empty((dim, n))
    residuals = np.empty(dim)
    for l in range(dim):
        rhs = -(grads[l].T @ aw)
        rhs = rhs - rhs.mean()
        w, _ = pcg(apply_op, rhs, precond_diag=diag, tol=tol,
                   max_iter=max_iter, project=project)
        w -= w.mean()
        residuals[l] = np.linalg.norm(apply_op(w) - rhs) / max(np.linalg.norm(rhs), 1e-300)
        sols[l] = w
    return sols, residuals


def solve_cell_problems(coeff: TwoScaleCoefficient, z: np.ndarray,
                        macro_points: np.ndarray, level: int,
                        tol: float = 1e-12, max_iter: int = 50000,
                        jobs: int = 1) -> CellSolutionSet:
    """Solve the d periodic cell problems at each macro point."""
    if level < 2:
        raise ValueError("cell level must be >= 2")
    macro_points = np.atleast_2d(np.asarray(macro_points, dtype=float))
    if macro_points.shape[1] != coeff.dim:
        raise ValueError(
            f"macro points have dimension {macro_points.shape[1]}, coefficient is {coeff.dim}d")
    dim = coeff.dim
    grid = TensorGrid("torus", 2**level, dim)
    y_q = grid.quad_points()
    a_all = coeff.evaluate_tensor(z, macro_points, y_q)  # (n_pts, n_quad)
    if a_all.min() <= 0.0:
        raise CoercivityError(
            f"coefficient is not positive at sampled cell nodes (min {a_all.min():.3e})")
    c_low, c_high = coeff.coercivity_bounds(z)
    tasks = [(a_all[i], dim, level, tol, max_iter) for i in range(macro_points.shape[0])]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_solve_single, tasks))
    else:
        results = [_solve_single(t) for t in tasks]
    sols = np.stack([r[0] for r in results])
    residuals = np.stack([r[1] for r in results])
    return CellSolutionSet(macro_points=macro_points, level=level, dim=dim,
                           solutions=sols, residuals=residuals,
                           coercivity=(c_low, c_high))


def effective_tensor_from_values(a_quad: np.ndarray, dim: int, level: int,
                                 tol: float = 1e-12) -> np.ndarray:
    """Effective d x d tensor for a y-only coefficient given at quadrature points.

    Low-level single-cell entry used by oracle studies with coefficients
    outside the catalogue (e.g. mollified laminates); `a_quad` must match the
    quadrature ordering of TensorGrid("torus", 2**level, dim).
    """
    a_quad = np.asarray(a_quad, dtype=float)
    if a_quad.min() <= 0.0:
        raise CoercivityError(f"coefficient values must be positive (min {a_quad.min():.3e})")
    sols, _ = _solve_single((a_quad, dim, level, tol, 50000))
    grid = TensorGrid("torus", 2**level, dim)
    w_q = grid.quad_weights()
    aw = a_quad * w_q
    g = np.empty((dim, dim, grid.n_quad))
    for l in range(dim):
        for p in range(dim):
            g[l, p] = grid.grad_matrix(p + 1) @ sols[l]
        g[l, l] += 1.0
    out = np.empty((dim, dim))
    for k in range(dim):
        for l in range(k, dim):
            val = float(np.einsum("pq,q,pq->", g[k], aw, g[l]))
            out[k, l] = out[l, k] = val
    return out


def homogenized_tensor(coeff: TwoScaleCoefficient, z: np.ndarray,
                       cells: CellSolutionSet) -> HomogenizedTensorField:
    """Assemble the symmetric effective tensor from cell responses."""
    dim = cells.dim
    grid = cells.grid
    y_q = grid.quad_points()
    w_q = grid.quad_weights()
    a_all = coeff.evaluate_tensor(z, cells.macro_points, y_q)
    n_pts = cells.macro_points.shape[0]
    tensors = np.empty((n_pts, dim, dim))
    for i in range(n_pts):
        g = cells.gradient_at_quad(i)  # (l, p, q)
        for l in range(dim):
            g[l, l] += 1.0
        aw = a_all[i] * w_q
        for k in range(dim):
            for l in range(k, dim):
                val = float(np.einsum("pq,q,pq->", g[k], aw, g[l]))
                tensors[i, k, l] = val
                tensors[i, l, k] = val
    return HomogenizedTensorField(macro_points=cells.macro_points, tensors=tensors)


class CorrectorField:
    """First-order micro correction u1(x, y) = du0/dx_l (x) * w^l(x, y).

    Macro points must form a tensor grid for x-interpolation in d >= 2; in 1d
    any sorted point set works.  Values are mean-free in y by construction
    (the stored cell responses have zero nodal mean).
    """

    def __init__(self, cells: CellSolutionSet, grad_u0: np.ndarray):
        grad_u0 = np.atleast_2d(np.asarray(grad_u0, dtype=float))
        if grad_u0.shape != (cells.macro_points.shape[0], cells.dim):
            raise ValueError(
                f"grad_u0 has shape {grad_u0.shape}, expected "
                f"{(cells.macro_points.shape[0], cells.dim)}")
        self.cells = cells
        self.grad_u0 = grad_u0
        self.grid = cells.grid
        # nodal field of u1 coefficients per macro point: sum_l grad_l * w^l
        self._combined = np.einsum("il,iln->in", grad_u0, cells.solutions)
        self._rec_grads: np.ndarray | None = None

    def _macro_weights(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Piecewise-linear interpolation weights over the macro point set."""
        pts = self.cells.macro_points
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.cells.dim == 1:
            xs = pts[:, 0]
            order = np.argsort(xs)
            xs_sorted = xs[order]
            pos = np.clip(np.searchsorted(xs_sorted, x[:, 0]) - 1, 0, len(xs_sorted) - 2)
            x0 = xs_sorted[pos]
            x1 = xs_sorted[pos + 1]
            t = np.where(x1 > x0, (x[:, 0] - x0) / np.where(x1 > x0, x1 - x0, 1.0), 0.0)
            idx = np.stack([order[pos], order[pos + 1]], axis=1)
            wts = np.stack([1.0 - t, t], axis=1)
            return idx, wts
        raise NotImplementedError(
            "x-interpolation of cell data beyond d=1 requires macro grid structure; "
            "evaluate at the stored macro points instead")

    def _eval(self, x: np.ndarray, y: np.ndarray, field: np.ndarray) -> np.ndarray:
        idx, wts = self._macro_weights(x)
        y = np.atleast_2d(np.asarray(y, dtype=float))
        out = np.zeros(idx.shape[0])
        for corner in range(idx.shape[1]):
            macro_ids = idx[:, corner]
            for uid in np.unique(macro_ids):
                sel = macro_ids == uid
                out[sel] += wts[sel, corner] * self.grid.interpolate(field[uid], y[sel])
        return out

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self._eval(x, y, self._combined)

    def grad_y(self, x: np.ndarray, y: np.ndarray, recovered: bool = False) -> np.ndarray:
        """grad_y u1 at paired points, shape (n_pts, d).

        The raw Q1 gradient is piecewise constant per micro cell; with
        `recovered` the interpolated central-difference nodal gradient is used
        instead (second order for smooth responses, used by the
        homogenization-gap studies).
        """
        y = np.atleast_2d(np.asarray(y, dtype=float))
        out = np.empty((y.shape[0], self.cells.dim))
        if recovered:
            if self._rec_grads is None:
                self._rec_grads = np.stack(
                    [nodal_gradient(self.grid, f) for f in self._combined])
            for p in range(self.cells.dim):
                out[:, p] = self._eval(x, y, self._rec_grads[:, :, p])
            return out
        h = self.grid.h
        for p in range(self.cells.dim):
            shifted_hi = y.copy()
            shifted_lo = y.copy()
            cell = np.floor(np.mod(y[:, p], 1.0) / h)
            mid = (cell + 0.5) * h
            shifted_hi[:, p] = mid + 0.25 * h
            shifted_lo[:, p] = mid - 0.25 * h
            out[:, p] = (self._eval(x, shifted_hi, self._combined)
                         - self._eval(x, shifted_lo, self._combined)) / (0.5 * h)
        return out


def corrector_field(cells: CellSolutionSet, grad_u0: np.ndarray) -> CorrectorField:
    return CorrectorField(cells, grad_u0)


def dump_tensor_csv(field: HomogenizedTensorField, path) -> None:
    """Effective tensor field as CSV: x coordinates then row-major entries."""
    dim = field.dim
    header = [f"x{i + 1}" for i in range(dim)]
    header += [f"a0_{k + 1}{l + 1}" for k in range(dim) for l in range(dim)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for pt, ten in zip(field.macro_points, field.tensors):
            writer.writerow([repr(float(v)) for v in pt] +
                            [repr(float(v)) for v in ten.ravel()])


def dump_cell_slice_csv(cells: CellSolutionSet, pt_index: int, path) -> None:
    """Nodal values of each w^l at one macro point."""
    grid = cells.grid
    nodes = grid.node_points()
    header = [f"y{i + 1}" for i in range(cells.dim)]
    header += [f"w{l + 1}" for l in range(cells.dim)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, y in enumerate(nodes):
            writer.writerow([repr(float(v)) for v in y] +
                            [repr(float(cells.solutions[pt_index, l, i]))
                             for l in range(cells.dim)])
