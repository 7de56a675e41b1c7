"""Posterior sampling and comparison of posterior approximations.

The posterior density relative to the prior is proportional to exp(-Phi(z))
with Phi the covariance-weighted misfit.  Sampling uses an independence
sampler: proposals are iid prior draws and a move is accepted with probability
min(1, exp(Phi_current - Phi_proposal)).  Distances between posterior
approximations are estimated by shared-draw Monte Carlo in the squared
Hellinger metric, with bootstrap error bars.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .coefficients import TwoScaleCoefficient, sample_prior
from .errors import NumericalError
from .observations import ForwardData, potential

__all__ = [
    "PosteriorModel",
    "PosteriorChain",
    "run_independence_sampler",
    "NormalizerEstimate",
    "estimate_normalizer",
    "HellingerEstimate",
    "hellinger_estimate",
    "hellinger_from_potentials",
    "RateStudyRow",
    "RateStudyTable",
    "hellinger_rate_study",
    "posterior_field_mean",
]


@dataclass
class PosteriorModel:
    """Prior + forward map + data, defining one posterior approximation."""

    prior_kind: str
    n_terms: int
    forward: object  # anything with gmap(Z) -> (B, N), or a callable
    data: ForwardData
    prior_sampler: Callable[[np.random.Generator, int], np.ndarray] | None = None

    def sample_prior(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.prior_sampler is not None:
            return self.prior_sampler(rng, n)
        return sample_prior(self.prior_kind, self.n_terms, rng, size=n)

    def gmap(self, Z: np.ndarray) -> np.ndarray:
        fwd = self.forward
        if hasattr(fwd, "gmap"):
            return fwd.gmap(Z)
        return fwd(Z)

    def potential_batch(self, Z: np.ndarray) -> np.ndarray:
        phi = potential(self.gmap(np.atleast_2d(Z)), self.data)
        return np.atleast_1d(phi)


@dataclass
class PosteriorChain:
    """Record of one independence-sampler run."""

    samples: np.ndarray       # (n_steps, J) state after each step
    potentials: np.ndarray    # (n_steps,)
    accepted: np.ndarray      # (n_steps,) bool
    seed: int
    burn_in: int
    prior_kind: str

    @property
    def n_steps(self) -> int:
        return len(self.samples)

    @property
    def acceptance_rate(self) -> float:
        return float(self.accepted.mean())

    def post_burn_in(self) -> np.ndarray:
        return self.samples[self.burn_in:]

    def summary(self) -> dict:
        post = self.post_burn_in()
        return {
            "n_steps": self.n_steps,
            "burn_in": self.burn_in,
            "acceptance_rate": self.acceptance_rate,
            "mean": post.mean(axis=0).tolist(),
            "std": post.std(axis=0, ddof=1).tolist(),
            "seed": self.seed,
        }


def run_independence_sampler(model: PosteriorModel, n_steps: int, seed: int,
                             burn_in_fraction: float = 0.1) -> PosteriorChain:
    """Sample the posterior; proposals are iid prior draws.

    The RNG protocol is fixed for reproducibility: initial state, then all
    proposals, then the acceptance uniforms.  Every proposal triggers exactly
    one forward evaluation (batched).
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    rng = np.random.default_rng(seed)
    z0 = model.sample_prior(rng, 1)[0]
    proposals = model.sample_prior(rng, n_steps)
    log_u = np.log(rng.uniform(size=n_steps))
    try:
        phi0 = float(model.potential_batch(z0[None, :])[0])
        phi_prop = model.potential_batch(proposals)
    except NumericalError as exc:
        raise NumericalError(f"forward solve failed during sampling: {exc}") from exc
    if not np.all(np.isfinite(phi_prop)) or not np.isfinite(phi0):
        bad = proposals[np.flatnonzero(~np.isfinite(phi_prop))[:1]]
        raise NumericalError(f"non-finite potential at proposal z = {bad!r}")

    samples = np.empty_like(proposals)
    potentials = np.empty(n_steps)
    accepted = np.zeros(n_steps, dtype=bool)
    z_cur, phi_cur = z0, phi0
    for t in range(n_steps):
        if log_u[t] < phi_cur - phi_prop[t]:
            z_cur = proposals[t]
            phi_cur = phi_prop[t]
            accepted[t] = True
        samples[t] = z_cur
        potentials[t] = phi_cur
    burn = int(round(burn_in_fraction * n_steps))
    return PosteriorChain(samples=samples, potentials=potentials, accepted=accepted,
                          seed=seed, burn_in=burn, prior_kind=model.prior_kind)


@dataclass(frozen=True)
class NormalizerEstimate:
    value: float
    std_error: float
    n_samples: int


def estimate_normalizer(model: PosteriorModel, n_samples: int, seed: int) -> NormalizerEstimate:
    """Monte-Carlo mean of exp(-Phi) over prior draws."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    Z = model.sample_prior(rng, n_samples)
    w = np.exp(-model.potential_batch(Z))
    return NormalizerEstimate(value=float(w.mean()),
                              std_error=float(w.std(ddof=1) / np.sqrt(n_samples))
                              if n_samples > 1 else float("nan"),
                              n_samples=n_samples)


@dataclass(frozen=True)
class HellingerEstimate:
    distance: float
    bootstrap_std: float
    n_samples: int
    normalizer_a: float
    normalizer_b: float


def _hellinger_from_potentials(phi_a: np.ndarray, phi_b: np.ndarray) -> float:
    # per-model potential shifts cancel between numerator and normaliser
    sa = phi_a - phi_a.min()
    sb = phi_b - phi_b.min()
    ra = np.exp(-0.5 * sa) / np.sqrt(np.exp(-sa).mean())
    rb = np.exp(-0.5 * sb) / np.sqrt(np.exp(-sb).mean())
    return float(np.sqrt(0.5 * np.mean((ra - rb) ** 2)))


def hellinger_from_potentials(phi_a: np.ndarray, phi_b: np.ndarray,
                              n_bootstrap: int = 200, seed: int = 0) -> HellingerEstimate:
    """Hellinger estimate from precomputed shared-draw potentials."""
    phi_a = np.asarray(phi_a, dtype=float)
    phi_b = np.asarray(phi_b, dtype=float)
    n = len(phi_a)
    dist = _hellinger_from_potentials(phi_a, phi_b)
    rng = np.random.default_rng(seed)
    boots = np.empty(n_bootstrap)
    for b in range(n_bootstrap):
        idx = rng.integers(0, n, size=n)
        boots[b] = _hellinger_from_potentials(phi_a[idx], phi_b[idx])
    za = float(np.exp(logsumexp(-phi_a) - np.log(n)))
    zb = float(np.exp(logsumexp(-phi_b) - np.log(n)))
    return HellingerEstimate(distance=dist, bootstrap_std=float(boots.std(ddof=1)),
                             n_samples=n, normalizer_a=za, normalizer_b=zb)


def hellinger_estimate(model_a: PosteriorModel, model_b: PosteriorModel,
                       n_samples: int, seed: int,
                       n_bootstrap: int = 200) -> HellingerEstimate:
    """Shared-draw Monte-Carlo Hellinger distance of two posteriors.

    Both models must share the prior; one set of prior draws feeds both
    potentials and both normaliser estimates (common random numbers), which
    makes the estimate exactly zero for identical models and symmetric in its
    arguments.
    """
    if (model_a.prior_kind, model_a.n_terms) != (model_b.prior_kind, model_b.n_terms):
        raise ValueError("Hellinger comparison requires a shared prior")
    rng = np.random.default_rng(seed)
    Z = model_a.sample_prior(rng, n_samples)
    phi_a = model_a.potential_batch(Z)
    phi_b = model_b.potential_batch(Z)
    if not (np.all(np.isfinite(phi_a)) and np.all(np.isfinite(phi_b))):
        raise NumericalError(
            "non-finite potentials in Hellinger estimation; "
            f"log-scale ranges phi_a [{np.nanmin(phi_a):.3g}, {np.nanmax(phi_a):.3g}], "
            f"phi_b [{np.nanmin(phi_b):.3g}, {np.nanmax(phi_b):.3g}]")
    dist = _hellinger_from_potentials(phi_a, phi_b)
    boot_rng = np.random.default_rng(seed + 1)
    boots = np.empty(n_bootstrap)
    for b in range(n_bootstrap):
        idx = boot_rng.integers(0, n_samples, size=n_samples)
        boots[b] = _hellinger_from_potentials(phi_a[idx], phi_b[idx])
    za = float(np.exp(logsumexp(-phi_a) - np.log(n_samples)))
    zb = float(np.exp(logsumexp(-phi_b) - np.log(n_samples)))
    return HellingerEstimate(distance=dist, bootstrap_std=float(boots.std(ddof=1)),
                             n_samples=n_samples, normalizer_a=za, normalizer_b=zb)


@dataclass(frozen=True)
class RateStudyRow:
    tag: float
    distance: float
    bootstrap_std: float


@dataclass(frozen=True)
class RateStudyTable:
    rows: tuple[RateStudyRow, ...]
    slope: float
    slope_valid: bool
    note: str = ""

    def distances(self) -> np.ndarray:
        return np.array([r.distance for r in self.rows])


def hellinger_rate_study(rungs: Sequence[tuple[float, PosteriorModel]],
                         reference: PosteriorModel, n_samples: int, seed: int,
                         n_bootstrap: int = 100) -> RateStudyTable:
    """Hellinger distances of a ladder of models against one reference.

    One shared draw set feeds every rung (common random numbers across the
    ladder).  If the Monte-Carlo error of any rung swamps its signal, the
    slope fit is refused and reported as NaN.
    """
    if len(rungs) < 3:
        raise ValueError("a rate study needs at least 3 rungs")
    rng = np.random.default_rng(seed)
    Z = reference.sample_prior(rng, n_samples)
    phi_ref = reference.potential_batch(Z)
    boot_rng = np.random.default_rng(seed + 1)
    boot_idx = boot_rng.integers(0, n_samples, size=(n_bootstrap, n_samples))
    rows = []
    for tag, model in rungs:
        phi = model.potential_batch(Z)
        dist = _hellinger_from_potentials(phi, phi_ref)
        boots = np.array([_hellinger_from_potentials(phi[i], phi_ref[i]) for i in boot_idx])
        rows.append(RateStudyRow(tag=float(tag), distance=dist,
                                 bootstrap_std=float(boots.std(ddof=1))))
    dists = np.array([r.distance for r in rows])
    errs = np.array([r.bootstrap_std for r in rows])
    if np.any(dists <= 3.0 * errs) or np.any(dists <= 0.0):
        return RateStudyTable(rows=tuple(rows), slope=float("nan"), slope_valid=False,
                              note="Monte-Carlo error exceeds signal; slope fit refused")
    tags = np.array([r.tag for r in rows])
    slope = float(np.polyfit(np.log(tags), np.log(dists), 1)[0])
    return RateStudyTable(rows=tuple(rows), slope=slope, slope_valid=True)


def posterior_field_mean(chain: PosteriorChain, coeff: TwoScaleCoefficient,
                         x_pts: np.ndarray, y_pts: np.ndarray,
                         max_samples: int = 5000) -> np.ndarray:
    """Pointwise mean of coefficient realisations over the post-burn-in chain.

    Long chains are thinned deterministically to at most `max_samples`
    realisations before averaging.
    """
    post = chain.post_burn_in()
    if len(post) == 0:
        raise ValueError("chain has no post-burn-in samples")
    if len(post) > max_samples:
        idx = np.linspace(0, len(post) - 1, max_samples).round().astype(int)
        post = post[idx]
    x_pts = np.atleast_2d(x_pts)
    y_pts = np.atleast_2d(y_pts)
    mean, stack = coeff.profile_tensor(x_pts, y_pts)
    offset = coeff.offset_tensor(x_pts, y_pts) if coeff.offset_terms else None
    total = np.zeros((x_pts.shape[0], y_pts.shape[0]))
    chunk = max(1, int(2e7 // max(mean.size, 1)))
    for lo in range(0, len(post), chunk):
        zb = post[lo:lo + chunk]
        series = mean[None] + (np.einsum("bj,jxy->bxy", zb, stack) if stack.size else 0.0)
        if coeff.kind == "uniform":
            total += series.sum(axis=0)
        else:
            vals = np.exp(series)
            if offset is not None:
                vals = vals + offset[None]
            total += vals.sum(axis=0)
    return total / len(post)
