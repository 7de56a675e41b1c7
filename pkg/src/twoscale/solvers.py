"""Galerkin solvers for the coupled macro/micro variational problem.

The unknown pair (u0, u1) lives on [0,1]^d x torus^d.  The bilinear form

    B(z; u, v) = int_D int_Y A(z; x, y) (grad u0 + grad_y u1) . (grad v0 + grad_y v1)

is applied matrix-free: wavelet coefficients are synthesised to nodal fields,
the nodal flux is formed at tensor Gauss points, and the residual is pulled
back by the transposed synthesis.  "full" mode keeps every macro/micro detail
pair, "sparse" mode the pairs with block levels l0 + l1 <= L - 1.  Conjugate
gradients are preconditioned by the Riesz diagonal (L2 norm of the macro
factor times H1 seminorm of the micro factor).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .catalogue import SeparableTerm
from .cells import HomogenizedTensorField
from .coefficients import TwoScaleCoefficient
from .errors import CoercivityError, MemoryGuardError
from .iterative import pcg
from .meshes import Grid1D, TensorGrid, prolongation_1d
from .wavelets import TensorLevels, build_family

__all__ = [
    "TwoScaleSpace",
    "build_space",
    "CoefficientQuadCache",
    "TwoScaleSystem",
    "assemble_two_scale",
    "solve_two_scale",
    "TwoScaleSolution",
    "solve_homogenized",
    "HomogenizedSolution",
    "energy_norm_nodal",
    "prolong_nodal",
]

_DEFAULT_GUARD_BYTES = 4e9


def _memory_guard() -> float:
    return float(os.environ.get("TWOSCALE_MEMORY_GUARD_BYTES", _DEFAULT_GUARD_BYTES))


class TwoScaleSpace:
    """Discrete trial space of the coupled problem at one level and mode."""

    def __init__(self, dim: int, level: int, mode: str = "sparse", n_gauss: int = 2):
        if mode not in ("full", "sparse"):
            raise ValueError(f"unknown mode '{mode}'")
        if level < 1:
            raise ValueError("level must be >= 1")
        self.dim = dim
        self.level = level
        self.mode = mode
        self.n_gauss = n_gauss
        n_cells = 2**level

        self.grid_x = TensorGrid("interval", n_cells, dim, n_gauss)
        self.grid_y = TensorGrid("torus", n_cells, dim, n_gauss)

        est = self.grid_x.n_quad * self.grid_y.n_quad * 8.0 * 5
        if est > _memory_guard():
            n_dof_est = self.grid_x.n_nodes * self.grid_y.n_nodes
            raise MemoryGuardError(
                f"level {level} in {dim}d needs ~{est / 1e9:.1f} GB of quadrature workspace "
                f"({self.grid_x.n_quad} x {self.grid_y.n_quad} points, about "
                f"{n_dof_est} micro-pair unknowns in {mode} mode); "
                "raise TWOSCALE_MEMORY_GUARD_BYTES to override")

        fam_x = build_family("interval_full", level)
        fam_0 = build_family("interval_zero", level)
        fam_y = build_family("torus_detail", level)
        self.tensor_x = TensorLevels(fam_x, dim)
        self.tensor_0 = TensorLevels(fam_0, dim)
        self.tensor_y = TensorLevels(fam_y, dim, with_constant=True)

        # active micro columns: never the pure constant; sparse couples levels
        lx = self.tensor_x.levels
        ly = self.tensor_y.levels
        pair_ok = np.ones((self.tensor_x.n_columns, self.tensor_y.n_columns), dtype=bool)
        if mode == "sparse":
            pair_ok = lx[:, None] + ly[None, :] <= level - 1
        pair_ok[:, self.tensor_y.is_constant] = False
        self.active = pair_ok
        self.active_idx = np.flatnonzero(pair_ok.ravel())

        self.n_u0 = self.tensor_0.n_columns
        self.n_u1 = len(self.active_idx)
        self.n_dof = self.n_u0 + self.n_u1

        self.interior = self.grid_x.interior_mask()
        ex = self.grid_x.eval_matrix()
        self.eval_x = ex
        self.eval_0 = sp.csr_matrix(ex[:, self.interior])
        self.grad_0 = [sp.csr_matrix(self.grid_x.grad_matrix(p + 1)[:, self.interior])
                       for p in range(dim)]
        self.grad_y = [self.grid_y.grad_matrix(p + 1) for p in range(dim)]
        self.w_x = self.grid_x.quad_weights()
        self.w_y = self.grid_y.quad_weights()

        # synthesis restricted to interior rows (boundary rows are zero anyway)
        self.synth_0 = sp.csr_matrix(self.tensor_0.synthesis[self.interior, :])
        self.synth_x = self.tensor_x.synthesis
        self.synth_y = self.tensor_y.synthesis

        diag_u0 = self.tensor_0.h1_sq
        diag_u1 = (self.tensor_x.l2_sq[:, None] * self.tensor_y.h1_sq[None, :])
        self.precond = np.concatenate([diag_u0, diag_u1.ravel()[self.active_idx]])

    # -- vector packing ------------------------------------------------------

    def split(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return v[:self.n_u0], v[self.n_u0:]

    def micro_matrix(self, c1: np.ndarray) -> np.ndarray:
        full = np.zeros(self.tensor_x.n_columns * self.tensor_y.n_columns)
        full[self.active_idx] = c1
        return full.reshape(self.tensor_x.n_columns, self.tensor_y.n_columns)

    def nodal_fields(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(u0 full macro nodal incl. boundary zeros, u1 nodal matrix)."""
        c0, c1 = self.split(v)
        u0_int = self.synth_0 @ c0
        u0 = np.zeros(self.grid_x.n_nodes)
        u0[self.interior] = u0_int
        u1 = np.asarray((self.synth_x @ self.micro_matrix(c1)) @ self.synth_y.T)
        return u0, u1


def build_space(dim: int, level: int, mode: str = "sparse", n_gauss: int = 2) -> TwoScaleSpace:
    return TwoScaleSpace(dim, level, mode, n_gauss)


@dataclass
class TwoScaleSystem:
    """Assembled (matrix-free) SPD system for one coefficient realisation."""

    space: TwoScaleSpace
    coeff: TwoScaleCoefficient
    z: np.ndarray
    a_quad: np.ndarray       # (n_xq, n_yq)
    aw: np.ndarray           # a_quad * (w_x outer w_y)
    rhs: np.ndarray
    f_quad: np.ndarray

    def apply(self, v: np.ndarray) -> np.ndarray:
        s = self.space
        c0, c1 = s.split(v)
        u0n = s.synth_0 @ c0
        U = np.asarray((s.synth_x @ s.micro_matrix(c1)) @ s.synth_y.T)
        EU = np.asarray(s.eval_x @ U)
        out0 = np.zeros(s.synth_0.shape[0])
        R1 = np.zeros_like(U)
        for p in range(s.dim):
            g0 = s.grad_0[p] @ u0n
            S = np.asarray(EU @ s.grad_y[p].T)
            S += g0[:, None]
            S *= self.aw
            out0 += s.grad_0[p].T @ S.sum(axis=1)
            R1 += np.asarray((s.eval_x.T @ S) @ s.grad_y[p])
        c0_out = s.synth_0.T @ out0
        c1_out = np.asarray(s.synth_x.T @ R1 @ s.synth_y).ravel()[s.active_idx]
        return np.concatenate([c0_out, c1_out])

    def as_linear_operator(self) -> spla.LinearOperator:
        n = self.space.n_dof
        return spla.LinearOperator((n, n), matvec=self.apply, dtype=float)

    def dense_matrix(self) -> np.ndarray:
        """Explicit matrix for small diagnostic problems."""
        n = self.space.n_dof
        if n > 6000:
            raise MemoryGuardError(f"refusing to densify a {n}x{n} system")
        cols = [self.apply(col) for col in np.eye(n)]
        return np.stack(cols, axis=1)


def _profile_at(term_list, pts: np.ndarray) -> np.ndarray:
    """Sum of x-only catalogue terms at macro points (n, d)."""
    pts = np.atleast_2d(pts)
    out = np.zeros(pts.shape[0])
    for t in term_list:
        prof = np.full(pts.shape[0], t.scale)
        for f in t.factors:
            if f.var != "x":
                raise ValueError("source profiles must not depend on the micro variable")
            prof = prof * f.evaluate(pts[:, f.axis - 1])
        out += prof
    return out


class CoefficientQuadCache:
    """z-independent coefficient profiles on a space's quadrature grids.

    Realising A(z; ., .) for a new parameter vector then costs one weighted
    sum (plus an exponential for log-Gaussian kinds) instead of re-evaluating
    every catalogue factor; chains reuse one cache across all proposals.
    """

    def __init__(self, coeff: TwoScaleCoefficient, space: TwoScaleSpace):
        self.coeff = coeff
        xq = space.grid_x.quad_points()
        yq = space.grid_y.quad_points()
        self.mean, self.stack = coeff.profile_tensor(xq, yq)
        self.offset = coeff.offset_tensor(xq, yq) if coeff.offset_terms else None

    def realize(self, z: np.ndarray) -> np.ndarray:
        series = self.mean if self.stack.size == 0 else \
            self.mean + np.einsum("j,jxy->xy", z, self.stack)
        if self.coeff.kind == "uniform":
            out = series
        else:
            out = np.exp(series)
            if self.offset is not None:
                out = out + self.offset
        return out


def assemble_two_scale(coeff: TwoScaleCoefficient, z: np.ndarray,
                       level: int, mode: str = "sparse",
                       source: list[SeparableTerm] | SeparableTerm | float = 1.0,
                       n_gauss: int = 2,
                       space: TwoScaleSpace | None = None,
                       quad_cache: CoefficientQuadCache | None = None) -> TwoScaleSystem:
    """Assemble the coupled system; `source` is the right-hand side f(x)."""
    if space is None:
        space = build_space(coeff.dim, level, mode, n_gauss)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    z = coeff.check_parameters(z)
    if quad_cache is not None:
        a_quad = quad_cache.realize(z)
    else:
        xq = space.grid_x.quad_points()
        yq = space.grid_y.quad_points()
        a_quad = coeff.evaluate_tensor(z, xq, yq)
    if not np.all(np.isfinite(a_quad)):
        raise CoercivityError("coefficient evaluation produced non-finite values")
    aw = a_quad * np.outer(space.w_x, space.w_y)
    if isinstance(source, (int, float)):
        source = [SeparableTerm(scale=float(source))]
    elif isinstance(source, SeparableTerm):
        source = [source]
    f_quad = _profile_at(source, space.grid_x.quad_points())
    b0 = space.synth_0.T @ (space.eval_0.T @ (space.w_x * f_quad))
    rhs = np.concatenate([b0, np.zeros(space.n_u1)])
    return TwoScaleSystem(space=space, coeff=coeff, z=z, a_quad=a_quad,
                          aw=aw, rhs=rhs, f_quad=f_quad)


@dataclass
class TwoScaleSolution:
    """Solved coefficient pair with nodal caches and evaluators."""

    space: TwoScaleSpace
    coeffs: np.ndarray
    iterations: int
    u0_nodal: np.ndarray          # full macro nodal (boundary zeros included)
    u1_nodal: np.ndarray          # (n macro nodes, n micro nodes), mean-free in y
    coeff: TwoScaleCoefficient | None = None
    z: np.ndarray | None = None

    @property
    def level(self) -> int:
        return self.space.level

    @property
    def mode(self) -> str:
        return self.space.mode

    def u0_at(self, points: np.ndarray) -> np.ndarray:
        return self.space.grid_x.interpolate(self.u0_nodal, points)

    def u1_at(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """u1 at paired points (multilinear in both variables)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        gx, gy = self.space.grid_x, self.space.grid_y
        U = self.u1_nodal
        out = np.zeros(x.shape[0])
        ix, wx = _corner_weights(gx, x)
        iy, wy = _corner_weights(gy, y)
        for cx in range(ix.shape[1]):
            for cy in range(iy.shape[1]):
                out += wx[:, cx] * wy[:, cy] * U[ix[:, cx], iy[:, cy]]
        return out

    def u1_slice(self, x_point: np.ndarray) -> np.ndarray:
        """Micro nodal profile u1(x, .) at one macro point."""
        x = np.atleast_2d(np.asarray(x_point, dtype=float))
        ix, wx = _corner_weights(self.space.grid_x, x)
        out = np.zeros(self.u1_nodal.shape[1])
        for c in range(ix.shape[1]):
            out += wx[0, c] * self.u1_nodal[ix[0, c]]
        return out


def _corner_weights(grid: TensorGrid, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flat node indices and multilinear weights of the cells containing points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n1 = grid.axis.n_nodes
    h = grid.h
    coords = np.mod(pts, 1.0) if grid.kind == "torus" else pts
    idx = np.clip(np.floor(coords / h).astype(int), 0, grid.n_cells - 1)
    t = coords / h - idx
    n_corners = 2**grid.dim
    indices = np.empty((pts.shape[0], n_corners), dtype=int)
    weights = np.empty((pts.shape[0], n_corners))
    for corner in range(n_corners):
        w = np.ones(pts.shape[0])
        flat = np.zeros(pts.shape[0], dtype=int)
        for ax in range(grid.dim):
            bit = (corner >> ax) & 1
            node = idx[:, ax] + bit
            if grid.kind == "torus":
                node = node % n1
            flat = flat * n1 + node
            w = w * (t[:, ax] if bit else 1.0 - t[:, ax])
        indices[:, corner] = flat
        weights[:, corner] = w
    return indices, weights


def solve_two_scale(system: TwoScaleSystem, tol: float = 1e-10,
                    max_iter: int = 20000) -> TwoScaleSolution:
    """Conjugate-gradient solve with Riesz diagonal preconditioning."""
    space = system.space
    v, iters = pcg(system.apply, system.rhs, precond_diag=space.precond,
                   tol=tol, max_iter=max_iter)
    u0, u1 = space.nodal_fields(v)
    u1 = u1 - u1.mean(axis=1, keepdims=True)  # mean-free micro representative
    return TwoScaleSolution(space=space, coeffs=v, iterations=iters,
                            u0_nodal=u0, u1_nodal=u1,
                            coeff=system.coeff, z=system.z)


# ---------------------------------------------------------------------------
# macro-only solver driven by an effective tensor field
# ---------------------------------------------------------------------------

@dataclass
class HomogenizedSolution:
    """Standard Galerkin solution of the effective macroscopic equation."""

    level: int
    dim: int
    grid: TensorGrid
    u0_nodal: np.ndarray  # full nodal, boundary zeros

    def u0_at(self, points: np.ndarray) -> np.ndarray:
        return self.grid.interpolate(self.u0_nodal, points)

    def grad_at_quad(self, n_gauss: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(points, weights, gradients (n_q, d)) at tensor Gauss points."""
        grid = self.grid if n_gauss is None else \
            TensorGrid("interval", self.grid.n_cells, self.dim, n_gauss)
        g = np.stack([grid.grad_matrix(p + 1) @ self.u0_nodal for p in range(self.dim)], axis=-1)
        return grid.quad_points(), grid.quad_weights(), g


def solve_homogenized(a0: HomogenizedTensorField, source, level: int,
                      n_gauss: int = 2) -> HomogenizedSolution:
    """Solve -div(A0 grad u0) = f on the unit box with zero boundary values.

    The tensor field is interpolated from its macro points (1d: piecewise
    linear in x; d >= 2: the macro points must be the grid nodes).
    """
    dim = a0.dim
    grid = TensorGrid("interval", 2**level, dim, n_gauss)
    xq = grid.quad_points()
    interior = grid.interior_mask()
    grads = [sp.csr_matrix(grid.grad_matrix(p + 1)[:, interior]) for p in range(dim)]
    ev = sp.csr_matrix(grid.eval_matrix()[:, interior])
    w = grid.quad_weights()
    a_at_q = _tensor_at_points(a0, grid, xq)
    K = None
    for p in range(dim):
        for r in range(dim):
            block = grads[p].T @ sp.diags(w * a_at_q[:, p, r]) @ grads[r]
            K = block if K is None else K + block
    if isinstance(source, (int, float)):
        source = [SeparableTerm(scale=float(source))]
    elif isinstance(source, SeparableTerm):
        source = [source]
    b = ev.T @ (w * _profile_at(source, xq))
    u_int = spla.spsolve(sp.csc_matrix(K), b)
    u = np.zeros(grid.n_nodes)
    u[interior] = u_int
    return HomogenizedSolution(level=level, dim=dim, grid=grid, u0_nodal=u)


def _tensor_at_points(a0: HomogenizedTensorField, grid: TensorGrid,
                      pts: np.ndarray) -> np.ndarray:
    """Interpolated effective tensors at points, shape (n, d, d)."""
    dim = a0.dim
    n_pts_given = a0.macro_points.shape[0]
    out = np.empty((pts.shape[0], dim, dim))
    if n_pts_given == 1:
        out[:] = a0.tensors[0]
        return out
    if dim == 1:
        xs = a0.macro_points[:, 0]
        order = np.argsort(xs)
        out[:, 0, 0] = np.interp(pts[:, 0], xs[order], a0.tensors[order, 0, 0])
        return out
    node_grid = TensorGrid("interval", grid.n_cells, dim)
    nodes = node_grid.node_points()
    if a0.macro_points.shape != nodes.shape or not np.allclose(a0.macro_points, nodes):
        raise ValueError(
            "effective tensors in d >= 2 must be sampled at the macro grid nodes")
    for k in range(dim):
        for l in range(dim):
            out[:, k, l] = node_grid.interpolate(a0.tensors[:, k, l], pts)
    return out


# ---------------------------------------------------------------------------
# nodal utilities shared by the error studies
# ---------------------------------------------------------------------------

def energy_norm_nodal(system: TwoScaleSystem, u0_nodal: np.ndarray,
                      u1_nodal: np.ndarray) -> float:
    """sqrt(B(v, v)) of a nodal pair on the system's quadrature."""
    s = system.space
    total = 0.0
    EU = np.asarray(s.eval_x @ u1_nodal)
    for p in range(s.dim):
        g0 = s.grid_x.grad_matrix(p + 1) @ u0_nodal
        g = np.asarray(EU @ s.grad_y[p].T)
        g += g0[:, None]
        total += float(np.sum(system.aw * g * g))
    return float(np.sqrt(total))


def prolong_nodal(dim: int, level_from: int, level_to: int,
                  u0_nodal: np.ndarray, u1_nodal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Embed nodal macro/micro fields into a finer dyadic level."""
    px = prolongation_1d(Grid1D("interval", 2**level_from), Grid1D("interval", 2**level_to))
    py = prolongation_1d(Grid1D("torus", 2**level_from), Grid1D("torus", 2**level_to))
    PX, PY = px, py
    for _ in range(dim - 1):
        PX = sp.kron(PX, px, format="csr")
        PY = sp.kron(PY, py, format="csr")
    u0f = PX @ u0_nodal
    u1f = np.asarray(PX @ u1_nodal @ PY.T)
    return u0f, u1f
