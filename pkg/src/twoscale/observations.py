"""Observation functionals, misfit potentials and synthetic data records.

Observations are integrals of vector weights against solution gradients:

    corrector mode:  O_i = int_D int_Y l_i(x,y) . (grad u0 + grad_y u1) dy dx
    flux mode:       O_p = int_D int_Y A(z;x,y) (grad u0 + grad_y u1)_p dy dx

and their oscillatory counterparts int_D l_i(x, x/eps) . grad u_eps dx.  The
weights come from the separable catalogue, so batched evaluation reduces to
profile matrices times flux arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .catalogue import SeparableTerm
from .errors import NumericalError
from .finescale import Exact1DSolution, FineScaleSolution
from .meshes import TensorGrid, gauss_rule
from .solvers import TwoScaleSolution

__all__ = [
    "ObservationSpec",
    "ForwardData",
    "forward_map_homogenized",
    "forward_map_eps",
    "potential",
    "synthesize_from_values",
    "save_data",
    "load_data",
]


@dataclass(frozen=True)
class ObservationSpec:
    """A list of catalogue observation weights plus the functional form."""

    mode: str  # "corrector" | "flux"
    functionals: tuple[SeparableTerm, ...] = ()
    dim: int = 1

    def __post_init__(self) -> None:
        if self.mode not in ("corrector", "flux"):
            raise ValueError(f"unknown observation mode '{self.mode}'")
        if self.mode == "corrector":
            if not self.functionals:
                raise ValueError("corrector observations need at least one weight")
            for t in self.functionals:
                if not 1 <= t.direction <= self.dim:
                    raise ValueError(
                        f"weight '{t.id}' needs a direction e1..e{self.dim}")

    @property
    def n_obs(self) -> int:
        return len(self.functionals) if self.mode == "corrector" else self.dim

    def profile_matrices(self, x_pts: np.ndarray, y_pts: np.ndarray):
        """(X (N, nx), Y (N, ny), directions (N,)) on a tensor grid."""
        x_pts = np.atleast_2d(x_pts)
        y_pts = np.atleast_2d(y_pts)
        n = len(self.functionals)
        X = np.empty((n, x_pts.shape[0]))
        Y = np.empty((n, y_pts.shape[0]))
        dirs = np.empty(n, dtype=int)
        for i, t in enumerate(self.functionals):
            xv = np.full(x_pts.shape[0], t.scale)
            yv = np.ones(y_pts.shape[0])
            for f in t.factors:
                if f.var == "x":
                    xv = xv * f.evaluate(x_pts[:, f.axis - 1])
                else:
                    yv = yv * f.evaluate(y_pts[:, f.axis - 1])
            X[i], Y[i], dirs[i] = xv, yv, t.direction
        return X, Y, dirs

    def paired_values(self, x_pts: np.ndarray, y_pts: np.ndarray):
        """(values (N, n_pts), directions) at paired points."""
        x_pts = np.atleast_2d(x_pts)
        y_pts = np.atleast_2d(y_pts)
        n = len(self.functionals)
        vals = np.empty((n, x_pts.shape[0]))
        dirs = np.empty(n, dtype=int)
        for i, t in enumerate(self.functionals):
            v = np.full(x_pts.shape[0], t.scale)
            for f in t.factors:
                pts = x_pts if f.var == "x" else y_pts
                v = v * f.evaluate(pts[:, f.axis - 1])
            vals[i], dirs[i] = v, t.direction
        return vals, dirs


@dataclass
class ForwardData:
    """Noisy observation vector with its Gaussian noise covariance."""

    delta: np.ndarray
    sigma: np.ndarray
    noise_seed: int | None = None
    z_ref: np.ndarray | None = None
    _chol: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.delta = np.atleast_1d(np.asarray(self.delta, dtype=float))
        self.sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        n = len(self.delta)
        if self.sigma.shape != (n, n):
            raise ValueError(f"covariance shape {self.sigma.shape} != ({n}, {n})")
        try:
            self._chol = sla.cholesky(self.sigma, lower=True)
        except sla.LinAlgError as exc:
            raise NumericalError(f"noise covariance is not positive definite: {exc}") from exc
        if self.z_ref is not None:
            self.z_ref = np.atleast_1d(np.asarray(self.z_ref, dtype=float))

    @property
    def n_obs(self) -> int:
        return len(self.delta)

    def whiten(self, residual: np.ndarray) -> np.ndarray:
        """Sigma^{-1/2} residual (batched over leading axes).

        Non-finite residuals pass through so callers can report the offending
        parameter vector instead of dying inside the solve.
        """
        res = np.asarray(residual, dtype=float)
        return sla.solve_triangular(self._chol, res.reshape(-1, res.shape[-1]).T,
                                    lower=True, check_finite=False).T.reshape(res.shape)


def potential(g_values: np.ndarray, data: ForwardData) -> np.ndarray | float:
    """Misfit 0.5 |delta - G|_Sigma^2; batched when g_values is (B, N)."""
    g = np.asarray(g_values, dtype=float)
    if g.shape[-1] != data.n_obs:
        raise ValueError(f"forward vector length {g.shape[-1]} != data length {data.n_obs}")
    white = data.whiten(data.delta - g)
    out = 0.5 * np.sum(white * white, axis=-1)
    return float(out) if np.isscalar(out) or out.ndim == 0 else out


# ---------------------------------------------------------------------------
# quadrature forward maps on solved fields
# ---------------------------------------------------------------------------

def forward_map_homogenized(spec: ObservationSpec, sol: TwoScaleSolution,
                            n_gauss: int | None = None) -> np.ndarray:
    """Observation vector of a coupled macro/micro solution.

    Quadrature runs one Gauss order above the assembly default so the smooth
    weights are integrated sharply; flux mode weighs the gradient sum by the
    coefficient realisation stored on the solution.
    """
    space = sol.space
    ng = space.n_gauss + 1 if n_gauss is None else n_gauss
    gx = TensorGrid("interval", space.grid_x.n_cells, space.dim, ng)
    gy = TensorGrid("torus", space.grid_y.n_cells, space.dim, ng)
    wx, wy = gx.quad_weights(), gy.quad_weights()
    EU = np.asarray(gx.eval_matrix() @ sol.u1_nodal)
    grads = []
    for p in range(space.dim):
        du0 = gx.grad_matrix(p + 1) @ sol.u0_nodal
        du1 = np.asarray(EU @ gy.grad_matrix(p + 1).T)
        grads.append(du0[:, None] + du1)

    if spec.mode == "flux":
        a_q = sol.coeff.evaluate_tensor(sol.z, gx.quad_points(), gy.quad_points())
        return np.array([float(wx @ (a_q * g) @ wy) for g in grads])

    X, Y, dirs = spec.profile_matrices(gx.quad_points(), gy.quad_points())
    out = np.empty(spec.n_obs)
    for p in range(1, space.dim + 1):
        sel = np.flatnonzero(dirs == p)
        if len(sel) == 0:
            continue
        Sw = grads[p - 1] * np.outer(wx, wy)
        T = X[sel] @ Sw
        out[sel] = np.einsum("iy,iy->i", T, Y[sel])
    return out


def forward_map_eps(spec: ObservationSpec, eps_sol, points_per_cell: int = 8,
                    n_gauss: int = 4) -> np.ndarray:
    """Observation vector of a fine-scale solution (oscillatory weights)."""
    if isinstance(eps_sol, Exact1DSolution):
        prob = eps_sol.prob
        if points_per_cell < 4:
            raise ValueError("quadrature must resolve the microscale: >= 4 points per cell")
        n_panels = prob.periods * points_per_cell
        nodes = np.linspace(0.0, 1.0, n_panels + 1)
        t, w = gauss_rule(n_gauss)
        pts = (nodes[:-1][:, None] + np.diff(nodes)[:, None] * t[None, :]).ravel()
        wts = (np.diff(nodes)[:, None] * w[None, :]).ravel()
        if spec.mode == "flux":
            return np.array([float(wts @ eps_sol.flux(pts))])
        du = eps_sol.gradient(pts)
        vals, _ = spec.paired_values(pts[:, None], np.mod(pts / prob.epsilon, 1.0)[:, None])
        return vals @ (wts * du)

    if isinstance(eps_sol, FineScaleSolution):
        prob = eps_sol.prob
        grid = eps_sol.grid
        if grid.h > prob.epsilon / 4:
            raise ValueError(
                f"fine mesh h = {grid.h:.3e} is coarser than eps/4 = {prob.epsilon / 4:.3e}")
        xq = grid.quad_points()
        wq = grid.quad_weights()
        du = np.stack([grid.grad_matrix(p + 1) @ eps_sol.u_nodal
                       for p in range(grid.dim)], axis=-1)
        if spec.mode == "flux":
            a = prob.coefficient_at(xq)
            return np.array([float(wq @ (a * du[:, p])) for p in range(grid.dim)])
        vals, dirs = spec.paired_values(xq, np.mod(xq / prob.epsilon, 1.0))
        return np.array([float((vals[i] * wq) @ du[:, dirs[i] - 1])
                         for i in range(spec.n_obs)])

    raise TypeError(f"unsupported fine-scale solution type {type(eps_sol)!r}")


# ---------------------------------------------------------------------------
# synthetic data and its on-disk record
# ---------------------------------------------------------------------------

def synthesize_from_values(g_ref: np.ndarray, sigma: np.ndarray, noise_seed: int,
                           z_ref: np.ndarray | None = None) -> ForwardData:
    """delta = G(z_ref) + nu with nu ~ N(0, Sigma), reproducible by seed."""
    g_ref = np.atleast_1d(np.asarray(g_ref, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    rng = np.random.default_rng(noise_seed)
    chol = sla.cholesky(sigma, lower=True)
    noise = chol @ rng.standard_normal(len(g_ref))
    return ForwardData(delta=g_ref + noise, sigma=sigma,
                       noise_seed=noise_seed, z_ref=z_ref)


def save_data(data: ForwardData, path) -> None:
    """Plain-text record; floats use repr so values round-trip exactly."""
    lines = ["# twoscale forward data v1", f"n_obs {data.n_obs}"]
    lines.append("delta " + " ".join(repr(float(v)) for v in data.delta))
    off_diag = data.sigma - np.diag(np.diag(data.sigma))
    if np.all(off_diag == 0.0):
        lines.append("sigma_diag " + " ".join(repr(float(v)) for v in np.diag(data.sigma)))
    else:
        for i in range(data.n_obs):
            lines.append("sigma_row " + " ".join(repr(float(v))
                                                 for v in data.sigma[i, :i + 1]))
    if data.noise_seed is not None:
        lines.append(f"noise_seed {data.noise_seed}")
    if data.z_ref is not None:
        lines.append("z_ref " + " ".join(repr(float(v)) for v in data.z_ref))
    Path(path).write_text("\n".join(lines) + "\n")


def load_data(path) -> ForwardData:
    delta = None
    sigma_diag = None
    rows: list[list[float]] = []
    noise_seed = None
    z_ref = None
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, *vals = line.split()
        if key == "delta":
            delta = np.array([float(v) for v in vals])
        elif key == "sigma_diag":
            sigma_diag = np.array([float(v) for v in vals])
        elif key == "sigma_row":
            rows.append([float(v) for v in vals])
        elif key == "noise_seed":
            noise_seed = int(vals[0])
        elif key == "z_ref":
            z_ref = np.array([float(v) for v in vals])
    if delta is None:
        raise ValueError(f"no delta record in {path}")
    if sigma_diag is not None:
        sigma = np.diag(sigma_diag)
    elif rows:
        n = len(rows)
        sigma = np.zeros((n, n))
        for i, r in enumerate(rows):
            sigma[i, :len(r)] = r
        sigma = sigma + np.tril(sigma, -1).T
    else:
        raise ValueError(f"no covariance record in {path}")
    return ForwardData(delta=delta, sigma=sigma, noise_seed=noise_seed, z_ref=z_ref)
