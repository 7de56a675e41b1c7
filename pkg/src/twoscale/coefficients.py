"""Parametric two-scale coefficient families and their priors.

A coefficient is either

    uniform:      A(z; x, y) = Abar(x, y) + sum_j z_j psi_j(x, y),   z_j ~ U[-1, 1]
    log_gaussian: A(z; x, y) = Astar(x, y) + exp(Abar + sum_j z_j psi_j),  z_j ~ N(0, 1)

with the expansion truncated at J terms drawn from the closed-form catalogue.
Construction validates the uniform-contrast condition

    sum_j sup|psi_j| <= kappa/(1+kappa) * inf Abar

on a sampling grid, and coercivity envelopes are returned analytically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .catalogue import SeparableTerm
from .errors import CoercivityError

__all__ = [
    "ExpansionTerm",
    "TwoScaleCoefficient",
    "uniform_coefficient",
    "log_gaussian_coefficient",
    "sample_prior",
]

# sampling density per axis for the construction-time bound checks
_GRID_PER_AXIS = 64
# tolerance on the sampled checks relative to the analytic bounds
_GRID_MARGIN = 0.01


@dataclass(frozen=True)
class ExpansionTerm:
    """One expansion direction psi_j with its analytic norm metadata."""

    psi: SeparableTerm
    sup_norm: float
    smoothness: float

    @classmethod
    def from_term(cls, term: SeparableTerm) -> "ExpansionTerm":
        return cls(psi=term, sup_norm=term.sup(), smoothness=term.smoothness_bound())


def _term_tensor(term: SeparableTerm, x_pts: np.ndarray, y_pts: np.ndarray) -> np.ndarray:
    """Values of a separable term on a tensor grid, shape (nx, ny)."""
    xprof = np.full(x_pts.shape[0], 1.0)
    yprof = np.full(y_pts.shape[0], 1.0)
    for f in term.factors:
        if f.var == "x":
            xprof = xprof * f.evaluate(x_pts[:, f.axis - 1])
        else:
            yprof = yprof * f.evaluate(y_pts[:, f.axis - 1])
    return term.scale * np.outer(xprof, yprof)


def _grid(dim: int, n: int = _GRID_PER_AXIS) -> np.ndarray:
    axes = [np.linspace(0.0, 1.0, n) for _ in range(dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _expression_range(terms: list[SeparableTerm], dim: int) -> tuple[float, float]:
    """(inf, sup) of a sum of separable terms, sampled on the check grid."""
    const = sum(t.scale for t in terms if not t.factors)
    varying = [t for t in terms if t.factors]
    if not varying:
        return const, const
    xg = _grid(dim)
    yg = _grid(dim)
    vals = np.full((xg.shape[0], yg.shape[0]), const)
    for t in varying:
        vals += _term_tensor(t, xg, yg)
    return float(vals.min()), float(vals.max())


@dataclass(frozen=True)
class TwoScaleCoefficient:
    """A locally periodic two-scale coefficient family A(z; x, y)."""

    kind: str  # "uniform" | "log_gaussian"
    dim: int
    mean_terms: tuple[SeparableTerm, ...]  # Abar as a sum of catalogue terms
    terms: tuple[ExpansionTerm, ...]
    offset_terms: tuple[SeparableTerm, ...] = ()  # Astar (log_gaussian only)
    kappa: float = 0.0
    mean_inf: float = field(default=0.0, compare=False)
    mean_sup: float = field(default=0.0, compare=False)
    offset_inf: float = field(default=0.0, compare=False)
    offset_sup: float = field(default=0.0, compare=False)

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @property
    def sup_norms(self) -> np.ndarray:
        """b_j = sup |psi_j|."""
        return np.array([t.sup_norm for t in self.terms])

    @property
    def smoothness_norms(self) -> np.ndarray:
        """bbar_j, the rate-diagnostic regularity bounds."""
        return np.array([t.smoothness for t in self.terms])

    # -- evaluation --------------------------------------------------------

    def check_parameters(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if z.shape[-1] != self.n_terms:
            raise ValueError(
                f"parameter vector has {z.shape[-1]} coordinates, expected {self.n_terms}")
        if not np.all(np.isfinite(z)):
            raise ValueError("parameter vector contains non-finite coordinates")
        return z

    def evaluate(self, z: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """A(z; x, y) at broadcastable points x (..., d), y (..., d)."""
        z = self.check_parameters(z)
        mean = sum(t.eval_xy(x, y) for t in self.mean_terms)
        series = mean
        for zj, term in zip(z, self.terms):
            series = series + zj * term.psi.eval_xy(x, y)
        if self.kind == "uniform":
            out = series
        else:
            offset = sum(t.eval_xy(x, y) for t in self.offset_terms) if self.offset_terms else 0.0
            out = offset + np.exp(series)
        out = np.asarray(out, dtype=float)
        if not np.all(np.isfinite(out)):
            raise CoercivityError("coefficient evaluation produced non-finite values")
        return out

    def profile_tensor(self, x_pts: np.ndarray, y_pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(mean_grid, term_grids) on the tensor grid x_pts x y_pts.

        x_pts, y_pts are (n, d) scattered point lists; returns mean of shape
        (nx, ny) and term stack (J, nx, ny).  Used by the batched forward maps
        and the solver quadrature.
        """
        x_pts = np.atleast_2d(x_pts)
        y_pts = np.atleast_2d(y_pts)
        nx, ny = x_pts.shape[0], y_pts.shape[0]
        mean = np.zeros((nx, ny))
        for t in self.mean_terms:
            mean += _term_tensor(t, x_pts, y_pts)
        stack = np.stack([_term_tensor(t.psi, x_pts, y_pts) for t in self.terms]) \
            if self.terms else np.zeros((0, nx, ny))
        return mean, stack

    def offset_tensor(self, x_pts: np.ndarray, y_pts: np.ndarray) -> np.ndarray:
        x_pts = np.atleast_2d(x_pts)
        y_pts = np.atleast_2d(y_pts)
        out = np.zeros((x_pts.shape[0], y_pts.shape[0]))
        for t in self.offset_terms:
            out += _term_tensor(t, x_pts, y_pts)
        return out

    def paired_profiles(self, x_pts: np.ndarray, y_pts: np.ndarray):
        """(mean, term stack, offset) at PAIRED points, for batched z-evaluation.

        x_pts and y_pts are (n, d) with matching length; returns vectors of
        length n (stack has shape (J, n)).  A realisation is then
        mean + z @ stack (uniform) or offset + exp(mean + z @ stack).
        """
        x_pts = np.atleast_2d(x_pts)
        y_pts = np.atleast_2d(y_pts)
        if x_pts.shape[0] != y_pts.shape[0]:
            raise ValueError("paired evaluation needs equally many x and y points")

        def values(term: SeparableTerm) -> np.ndarray:
            out = np.full(x_pts.shape[0], term.scale)
            for f in term.factors:
                pts = x_pts if f.var == "x" else y_pts
                out = out * f.evaluate(pts[:, f.axis - 1])
            return out

        mean = np.zeros(x_pts.shape[0])
        for t in self.mean_terms:
            mean += values(t)
        stack = np.stack([values(t.psi) for t in self.terms]) if self.terms else \
            np.zeros((0, x_pts.shape[0]))
        offset = np.zeros(x_pts.shape[0])
        for t in self.offset_terms:
            offset += values(t)
        return mean, stack, offset

    def realize_paired(self, z: np.ndarray, mean: np.ndarray, stack: np.ndarray,
                       offset: np.ndarray) -> np.ndarray:
        """Coefficient values from paired_profiles output; z may be a batch.

        z of shape (J,) gives (n,); shape (B, J) gives (B, n).
        """
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        zb = np.atleast_2d(z)
        if zb.shape[1] != self.n_terms:
            raise ValueError(f"parameter batch has {zb.shape[1]} coordinates, "
                             f"expected {self.n_terms}")
        series = mean[None, :] + (zb @ stack if stack.size else 0.0)
        out = series if self.kind == "uniform" else offset[None, :] + np.exp(series)
        if not np.all(np.isfinite(out)):
            raise CoercivityError("coefficient evaluation produced non-finite values")
        return out[0] if single else out

    def evaluate_tensor(self, z: np.ndarray, x_pts: np.ndarray, y_pts: np.ndarray) -> np.ndarray:
        """A(z; ., .) on a tensor grid, shape (nx, ny)."""
        z = self.check_parameters(z)
        mean, stack = self.profile_tensor(x_pts, y_pts)
        series = mean if stack.size == 0 else mean + np.einsum("j,jxy->xy", z, stack)
        if self.kind == "uniform":
            out = series
        else:
            out = self.offset_tensor(x_pts, y_pts) + np.exp(series)
        if not np.all(np.isfinite(out)):
            raise CoercivityError("coefficient evaluation produced non-finite values")
        return out

    # -- coercivity --------------------------------------------------------

    def coercivity_bounds(self, z: np.ndarray) -> tuple[float, float]:
        """(c_low, c_high) envelopes of A(z; ., .).

        Uniform families return z-independent bounds
            c_low = inf Abar / (1+kappa),
            c_high = sup Abar + kappa/(1+kappa) inf Abar;
        log-Gaussian families return
            c_low = inf Astar + exp(inf Abar - sum |z_j| b_j),
            c_high = sup Astar + exp(sup Abar + sum |z_j| b_j).
        """
        z = self.check_parameters(z)
        if self.kind == "uniform":
            frac = self.kappa / (1.0 + self.kappa)
            return (self.mean_inf / (1.0 + self.kappa),
                    self.mean_sup + frac * self.mean_inf)
        weighted = float(np.abs(z) @ self.sup_norms) if self.n_terms else 0.0
        c_low = self.offset_inf + np.exp(self.mean_inf - weighted)
        c_high = self.offset_sup + np.exp(self.mean_sup + weighted)
        if not (c_low > 0.0 and np.isfinite(c_high)):
            raise CoercivityError(
                f"degenerate coercivity bounds ({c_low:.3e}, {c_high:.3e}) at |z|b = {weighted:.3e}")
        return float(c_low), float(c_high)


def uniform_coefficient(mean_terms, terms, dim: int, kappa: float | None = None) -> TwoScaleCoefficient:
    """Build a uniform-prior family, checking the contrast assumption.

    kappa defaults to the tightest admissible value sum_b/(inf Abar - sum_b).
    """
    mean_terms = tuple(mean_terms)
    exp_terms = tuple(ExpansionTerm.from_term(t) for t in terms)
    mean_inf, mean_sup = _expression_range(list(mean_terms), dim)
    if mean_inf <= 0.0:
        raise CoercivityError(f"mean field must be positive; sampled inf = {mean_inf:.6g}")
    total_b = sum(t.sup_norm for t in exp_terms)
    if kappa is None:
        if total_b >= mean_inf:
            raise CoercivityError(
                f"expansion sup norms sum to {total_b:.6g} >= inf mean {mean_inf:.6g}; "
                "no admissible contrast constant exists")
        kappa = total_b / (mean_inf - total_b) if total_b > 0 else 0.0
    allowed = kappa / (1.0 + kappa) * mean_inf
    if total_b > allowed * (1.0 + _GRID_MARGIN) + 1e-14:
        raise CoercivityError(
            f"sum of expansion sup norms {total_b:.6g} exceeds kappa/(1+kappa)*inf Abar = "
            f"{allowed:.6g}")
    return TwoScaleCoefficient(
        kind="uniform", dim=dim, mean_terms=mean_terms, terms=exp_terms,
        kappa=float(kappa), mean_inf=mean_inf, mean_sup=mean_sup)


def log_gaussian_coefficient(mean_terms, terms, dim: int, offset_terms=()) -> TwoScaleCoefficient:
    """Build a log-Gaussian family; the offset field must be nonnegative."""
    mean_terms = tuple(mean_terms)
    offset_terms = tuple(offset_terms)
    exp_terms = tuple(ExpansionTerm.from_term(t) for t in terms)
    mean_inf, mean_sup = _expression_range(list(mean_terms), dim)
    if offset_terms:
        off_inf, off_sup = _expression_range(list(offset_terms), dim)
    else:
        off_inf = off_sup = 0.0
    if off_inf < -1e-12:
        raise CoercivityError(f"offset field must be nonnegative; sampled inf = {off_inf:.6g}")
    if not np.isfinite(sum(t.sup_norm for t in exp_terms)):
        raise CoercivityError("expansion sup norms do not sum to a finite value")
    return TwoScaleCoefficient(
        kind="log_gaussian", dim=dim, mean_terms=mean_terms, terms=exp_terms,
        offset_terms=offset_terms, mean_inf=mean_inf, mean_sup=mean_sup,
        offset_inf=off_inf, offset_sup=off_sup)


def sample_prior(kind: str, n_terms: int, rng: np.random.Generator | int,
                 size: int | None = None) -> np.ndarray:
    """Draw parameter vectors from the prior.

    kind "uniform" gives iid U[-1,1] coordinates, "log_gaussian" (or
    "gaussian") iid N(0,1).  `rng` may be a Generator or a seed.  With
    size=None a single vector (n_terms,) is returned, else (size, n_terms).
    """
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    shape = (n_terms,) if size is None else (size, n_terms)
    if kind == "uniform":
        return rng.uniform(-1.0, 1.0, size=shape)
    if kind in ("log_gaussian", "gaussian"):
        return rng.standard_normal(size=shape)
    raise ValueError(f"unknown prior kind '{kind}'")
