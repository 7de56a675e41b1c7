"""Experiment configuration: line-oriented key = value files with [sections].

Configs are plain INI.  Validation reports the offending section, key and, when
possible, the line number of the input file.  Every catalogue id referenced
must parse, covariances must be positive definite, and FE levels must be >= 2.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .catalogue import (COEFFICIENT_PRESETS, OBSERVATION_PRESETS, SeparableTerm,
                        coefficient_preset, observation_preset, parse_terms)
from .coefficients import TwoScaleCoefficient, log_gaussian_coefficient, \
    sample_prior, uniform_coefficient
from .errors import ConfigError
from .observations import ObservationSpec

__all__ = ["ExperimentConfig", "load_config"]

_KINDS = ("mcmc", "rate_study", "fe_study", "hellinger_eps", "hellinger_fe",
          "homogenize", "cell")
_ROUTES = ("semi_analytic", "fe_sparse", "fe_full", "fine_scale")
_SOLVER_MODES = ("semi_analytic", "sparse", "full")


def _parse_fraction(text: str) -> float:
    return float(Fraction(text))


def _parse_floats(text: str) -> np.ndarray:
    return np.array([float(Fraction(tok)) for tok in text.replace(",", " ").split()])


def _parse_points(text: str, dim: int) -> np.ndarray:
    """Comma-separated points, each a whitespace-separated coordinate tuple."""
    pts = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        vals = [float(v) for v in tok.split()]
        if len(vals) != dim:
            raise ValueError(f"point '{tok}' has {len(vals)} coordinates, expected {dim}")
        pts.append(vals)
    return np.array(pts)


@dataclass
class ExperimentConfig:
    """Validated experiment description."""

    path: str
    experiment_id: str
    kind: str
    dim: int
    prior_kind: str
    mean_terms: list[SeparableTerm]
    terms: list[SeparableTerm]
    offset_terms: list[SeparableTerm]
    kappa: float | None
    obs_mode: str
    functionals: list[SeparableTerm]
    z_ref: np.ndarray | None
    z_ref_seed: int | None
    sigma: np.ndarray
    noise_seed: int
    data_route: str
    data_level: int | None
    data_epsilon: float | None
    level: int
    cell_level: int
    solver_mode: str
    cg_tol: float
    source: list[SeparableTerm]
    steps: int
    burn_in_fraction: float
    mcmc_seed: int
    epsilons: list[float]
    levels: list[int]
    reference_level: int
    n_samples: int
    output_dir: str
    slices: np.ndarray
    raw_text: str = field(repr=False, default="")

    def coefficient(self) -> TwoScaleCoefficient:
        if self.prior_kind == "uniform":
            return uniform_coefficient(self.mean_terms, self.terms, dim=self.dim,
                                       kappa=self.kappa)
        return log_gaussian_coefficient(self.mean_terms, self.terms, dim=self.dim,
                                        offset_terms=self.offset_terms)

    def observation_spec(self) -> ObservationSpec:
        return ObservationSpec(mode=self.obs_mode, functionals=tuple(self.functionals),
                               dim=self.dim)

    def reference_vector(self) -> np.ndarray:
        if self.z_ref is not None:
            return self.z_ref
        return sample_prior(self.prior_kind, max(len(self.terms), 1), self.z_ref_seed)

    @property
    def n_terms(self) -> int:
        return len(self.terms)


class _Reader:
    """configparser wrapper that raises ConfigError with file/line context."""

    def __init__(self, path):
        self.path = Path(path)
        if not self.path.exists():
            raise ConfigError(f"config file not found: {path}")
        self.text = self.path.read_text()
        self.cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
        try:
            self.cp.read_string(self.text)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    def _line_of(self, section: str, key: str) -> str:
        current = None
        for i, line in enumerate(self.text.splitlines(), start=1):
            s = line.strip()
            if s.startswith("[") and s.endswith("]"):
                current = s[1:-1].strip()
            elif current == section and s.split("=")[0].strip() == key:
                return f"{self.path.name}:{i}"
        return f"{self.path.name}:[{section}] {key}"

    def fail(self, section: str, key: str, message: str):
        raise ConfigError(f"{self._line_of(section, key)}: [{section}] {key}: {message}")

    def get(self, section: str, key: str, default=None, required: bool = False) -> str | None:
        if self.cp.has_option(section, key):
            return self.cp.get(section, key).strip()
        if required:
            if not self.cp.has_section(section):
                raise ConfigError(f"{self.path.name}: missing section [{section}]")
            self.fail(section, key, "required key is missing")
        return default

    def get_typed(self, section: str, key: str, convert, default=None, required: bool = False):
        raw = self.get(section, key, required=required)
        if raw is None:
            return default
        try:
            return convert(raw)
        except (ValueError, ZeroDivisionError) as exc:
            self.fail(section, key, f"cannot parse '{raw}' ({exc})")


def load_config(path) -> ExperimentConfig:
    r = _Reader(path)

    kind = r.get("experiment", "kind", required=True)
    if kind not in _KINDS:
        r.fail("experiment", "kind", f"must be one of {_KINDS}")
    experiment_id = r.get("experiment", "id", default=Path(path).stem)
    dim = r.get_typed("experiment", "dimension", int, required=True)
    if dim not in (1, 2):
        r.fail("experiment", "dimension", "must be 1 or 2")

    prior_kind = r.get("prior", "kind", default="uniform")
    if prior_kind not in ("uniform", "log_gaussian"):
        r.fail("prior", "kind", "must be 'uniform' or 'log_gaussian'")
    mean_terms = r.get_typed("prior", "mean_field", parse_terms, default=[])
    family = r.get("prior", "family")
    if family is not None:
        if family not in COEFFICIENT_PRESETS:
            r.fail("prior", "family",
                   f"unknown preset (have {sorted(COEFFICIENT_PRESETS)})")
        terms = coefficient_preset(family)
    else:
        terms = r.get_typed("prior", "terms", parse_terms, default=[])
    offset_terms = r.get_typed("prior", "offset_field", parse_terms, default=[])
    kappa = r.get_typed("prior", "kappa", float, default=None)
    for t in terms + mean_terms + offset_terms:
        for f in t.factors:
            if f.axis > dim:
                r.fail("prior", "terms" if t in terms else "mean_field",
                       f"term '{t.id}' references axis {f.axis} beyond dimension {dim}")

    obs_mode = r.get("observations", "mode", default="corrector")
    if obs_mode not in ("corrector", "flux"):
        r.fail("observations", "mode", "must be 'corrector' or 'flux'")
    preset = r.get("observations", "preset")
    if preset is not None:
        if preset not in OBSERVATION_PRESETS:
            r.fail("observations", "preset",
                   f"unknown preset (have {sorted(OBSERVATION_PRESETS)})")
        functionals = observation_preset(preset)
    else:
        functionals = r.get_typed("observations", "functionals", parse_terms, default=[])
    if obs_mode == "corrector" and kind in ("mcmc", "hellinger_eps", "hellinger_fe") \
            and not functionals:
        r.fail("observations", "functionals", "corrector mode needs at least one weight")
    for t in functionals:
        if obs_mode == "corrector" and not 1 <= t.direction <= dim:
            r.fail("observations", "functionals",
                   f"weight '{t.id}' needs a direction e1..e{dim}")

    z_ref = r.get_typed("data", "z_ref", _parse_floats, default=None)
    z_ref_seed = r.get_typed("data", "z_ref_seed", int, default=None)
    if z_ref is not None and len(z_ref) != len(terms) and terms:
        r.fail("data", "z_ref", f"has {len(z_ref)} coordinates, family has {len(terms)} terms")
    n_obs = len(functionals) if obs_mode == "corrector" else dim
    sigma_iso = r.get_typed("data", "sigma_iso", float, default=None)
    sigma_diag = r.get_typed("data", "sigma_diag", _parse_floats, default=None)
    if sigma_diag is not None:
        if len(sigma_diag) != n_obs:
            r.fail("data", "sigma_diag", f"has {len(sigma_diag)} entries, need {n_obs}")
        sigma = np.diag(sigma_diag)
    else:
        sigma = np.eye(n_obs) * (sigma_iso if sigma_iso is not None else 1e-3)
    if np.any(np.diag(sigma) <= 0):
        r.fail("data", "sigma_diag" if sigma_diag is not None else "sigma_iso",
               "covariance must be positive definite")
    noise_seed = r.get_typed("data", "noise_seed", int, default=0)
    data_route = r.get("data", "route", default="semi_analytic" if dim == 1 else "fe_sparse")
    if data_route not in _ROUTES:
        r.fail("data", "route", f"must be one of {_ROUTES}")
    data_level = r.get_typed("data", "data_level", int, default=None)
    data_epsilon = r.get_typed("data", "epsilon", _parse_fraction, default=None)
    if data_route == "fine_scale" and data_epsilon is None:
        r.fail("data", "epsilon", "fine-scale data route needs epsilon")

    level = r.get_typed("solver", "level", int, default=4)
    if level < 2:
        r.fail("solver", "level", "level must be >= 2")
    cell_level = r.get_typed("solver", "cell_level", int, default=max(level, 6))
    if cell_level < 2:
        r.fail("solver", "cell_level", "cell level must be >= 2")
    solver_mode = r.get("solver", "mode",
                        default="semi_analytic" if dim == 1 else "sparse")
    if solver_mode not in _SOLVER_MODES:
        r.fail("solver", "mode", f"must be one of {_SOLVER_MODES}")
    if solver_mode == "semi_analytic" and dim != 1:
        r.fail("solver", "mode", "semi_analytic forward is only available in 1d")
    cg_tol = r.get_typed("solver", "cg_tol", float, default=1e-8)
    source = r.get_typed("solver", "source", parse_terms, default=[SeparableTerm(scale=1.0)])
    for t in source:
        if t.factors_on("y"):
            r.fail("solver", "source", f"source '{t.id}' must not depend on y")

    steps = r.get_typed("mcmc", "steps", int, default=10000)
    if steps < 1:
        r.fail("mcmc", "steps", "steps must be >= 1")
    burn_in = r.get_typed("mcmc", "burn_in_fraction", float, default=0.1)
    if not 0.0 <= burn_in < 1.0:
        r.fail("mcmc", "burn_in_fraction", "must lie in [0, 1)")
    mcmc_seed = r.get_typed("mcmc", "seed", int, default=0)

    def _parse_eps_list(text: str) -> list[float]:
        return [float(Fraction(tok)) for tok in text.replace(",", " ").split()]

    epsilons = r.get_typed("rate_study", "epsilons", _parse_eps_list,
                           default=[1 / 8, 1 / 16, 1 / 32, 1 / 64])
    for e in epsilons:
        if abs(1.0 / e - round(1.0 / e)) > 1e-9:
            r.fail("rate_study", "epsilons", f"1/epsilon must be integer (got {e})")
    levels = r.get_typed("rate_study", "levels",
                         lambda s: [int(t) for t in s.replace(",", " ").split()],
                         default=[3, 4, 5])
    reference_level = r.get_typed("rate_study", "reference_level", int, default=8)
    n_samples = r.get_typed("rate_study", "n_samples", int, default=20000)

    output_dir = r.get("output", "directory", default=experiment_id)
    slices = r.get_typed("output", "slices", lambda s: _parse_points(s, dim),
                         default=np.zeros((0, dim)))

    cfg = ExperimentConfig(
        path=str(path), experiment_id=experiment_id, kind=kind, dim=dim,
        prior_kind=prior_kind, mean_terms=mean_terms, terms=terms,
        offset_terms=offset_terms, kappa=kappa, obs_mode=obs_mode,
        functionals=functionals, z_ref=z_ref, z_ref_seed=z_ref_seed, sigma=sigma,
        noise_seed=noise_seed, data_route=data_route, data_level=data_level,
        data_epsilon=data_epsilon, level=level, cell_level=cell_level,
        solver_mode=solver_mode, cg_tol=cg_tol, source=source, steps=steps,
        burn_in_fraction=burn_in, mcmc_seed=mcmc_seed, epsilons=epsilons,
        levels=levels, reference_level=reference_level, n_samples=n_samples,
        output_dir=output_dir, slices=slices, raw_text=r.text)

    if kind == "mcmc" and z_ref is None and z_ref_seed is None:
        r.fail("data", "z_ref", "mcmc experiments need z_ref or z_ref_seed")
    if kind == "mcmc" and not terms:
        r.fail("prior", "terms", "mcmc experiments need a nonempty expansion")
    try:
        cfg.coefficient()
    except Exception as exc:
        raise ConfigError(f"{Path(path).name}: [prior]: {exc}") from exc
    return cfg
