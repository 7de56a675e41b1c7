"""Experiment drivers: one deterministic output bundle per config.

Each driver writes its delimited outputs, renders the companion figures, and
finishes with a manifest listing every produced file with a content hash, the
seeds and the package version.  Identical configs and seeds reproduce the
bundle byte for byte.
"""

from __future__ import annotations

import hashlib
import os
import time
from pathlib import Path

import numpy as np

from . import __version__
from .cells import dump_cell_slice_csv, dump_tensor_csv, homogenized_tensor, \
    solve_cell_problems
from .config import ExperimentConfig
from .errors import ConfigError
from .finescale import EpsilonProblem, corrector_error
from .forward import EpsForward1D, FEForward, SemiAnalytic1D, synthesize_data
from .mcmc import PosteriorModel, hellinger_rate_study, posterior_field_mean, \
    run_independence_sampler
from .meshes import TensorGrid
from .observations import ForwardData, save_data
from .report import (fig_cell_slice, fig_fe_study, fig_fields, fig_hellinger,
                     fig_rate, fig_scatter, fig_tensor_field, write_chain_csv,
                     write_fe_study_csv, write_field_csv, write_hellinger_csv,
                     write_manifest, write_rate_csv, write_scatter_csv,
                     write_solution_csv, write_summary)
from .solvers import assemble_two_scale, energy_norm_nodal, prolong_nodal, \
    solve_homogenized, solve_two_scale
from .wavelets import count_dofs

__all__ = ["output_root", "run_experiment"]

_ENV_ROOT = "TWOSCALE_OUTPUT_ROOT"


def output_root(override: str | None = None) -> Path:
    if override:
        return Path(override)
    return Path(os.environ.get(_ENV_ROOT, "runs"))


def _make_forward(cfg: ExperimentConfig, coeff, spec, level: int | None = None,
                  mode: str | None = None):
    mode = mode or cfg.solver_mode
    if mode == "semi_analytic":
        return SemiAnalytic1D(coeff, cfg.source, spec)
    return FEForward(coeff, cfg.source, spec, level or cfg.level, mode=mode,
                     tol=cfg.cg_tol)


def _make_data(cfg: ExperimentConfig, coeff, spec, z_ref) -> ForwardData:
    level = cfg.data_level if cfg.data_level is not None else cfg.level + 1
    return synthesize_data(spec, coeff, z_ref, cfg.noise_seed, cfg.sigma,
                           cfg.source, route=cfg.data_route, level=level,
                           epsilon=cfg.data_epsilon)


def _manifest_meta(cfg: ExperimentConfig, extra: dict | None = None) -> dict:
    meta = {
        "experiment": cfg.experiment_id,
        "kind": cfg.kind,
        "version": __version__,
        "dimension": cfg.dim,
        "prior_kind": cfg.prior_kind,
        "n_terms": cfg.n_terms,
        "noise_seed": cfg.noise_seed,
        "mcmc_seed": cfg.mcmc_seed,
        "config_sha256": hashlib.sha256(cfg.raw_text.encode()).hexdigest(),
    }
    meta.update(extra or {})
    return meta


def run_experiment(cfg: ExperimentConfig, root: str | None = None, jobs: int = 1) -> dict:
    """Dispatch a config to its driver; returns {'outdir': ..., 'outputs': [...]}."""
    out = output_root(root) / cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    drivers = {
        "mcmc": _run_mcmc,
        "rate_study": _run_rate_study,
        "fe_study": _run_fe_study,
        "hellinger_eps": _run_hellinger_eps,
        "hellinger_fe": _run_hellinger_fe,
        "homogenize": _run_homogenize,
        "cell": _run_cell,
    }
    driver = drivers.get(cfg.kind)
    if driver is None:
        raise ConfigError(f"no driver for experiment kind '{cfg.kind}'")
    outputs, extra = driver(cfg, out, jobs)
    manifest = out / "manifest.json"
    write_manifest(manifest, outputs, _manifest_meta(cfg, extra))
    return {"outdir": out, "outputs": [p.name for p in outputs] + [manifest.name]}


# ---------------------------------------------------------------------------
# mcmc experiments
# ---------------------------------------------------------------------------

def _field_grids(cfg: ExperimentConfig):
    if cfg.dim == 1:
        x = np.linspace(0.0, 1.0, 65)[:, None]
        y = np.linspace(0.0, 1.0, 65)[:, None]
        return [(None, x, y)]
    yax = np.linspace(0.0, 1.0, 33)
    g1, g2 = np.meshgrid(yax, yax, indexing="ij")
    y = np.stack([g1.ravel(), g2.ravel()], axis=-1)
    slices = cfg.slices if len(cfg.slices) else np.array([[0.25, 0.25]])
    return [(xs, np.array([xs]), y) for xs in slices]


def _run_mcmc(cfg: ExperimentConfig, out: Path, jobs: int):
    coeff = cfg.coefficient()
    spec = cfg.observation_spec()
    z_ref = cfg.reference_vector()
    data = _make_data(cfg, coeff, spec, z_ref)
    forward = _make_forward(cfg, coeff, spec)
    model = PosteriorModel(cfg.prior_kind, cfg.n_terms, forward, data)
    chain = run_independence_sampler(model, cfg.steps, cfg.mcmc_seed,
                                     cfg.burn_in_fraction)

    outputs = []
    save_data(data, out / "data.txt")
    outputs.append(out / "data.txt")
    write_chain_csv(chain, out / "chain.csv")
    outputs.append(out / "chain.csv")
    write_scatter_csv(chain, out / "scatter.csv")
    outputs.append(out / "scatter.csv")
    write_summary(chain, out / "summary.txt",
                  extra={"n_obs": data.n_obs, "z_ref": " ".join(repr(float(v)) for v in z_ref)})
    outputs.append(out / "summary.txt")
    fig_scatter(chain.samples, out / "scatter.png", z_ref=z_ref,
                title=f"{cfg.experiment_id}: {cfg.steps} samples")
    outputs.append(out / "scatter.png")

    for k, (xs, x_pts, y_pts) in enumerate(_field_grids(cfg)):
        ref_field = coeff.evaluate_tensor(z_ref, x_pts, y_pts)
        mean_field = posterior_field_mean(chain, coeff, x_pts, y_pts)
        label = "" if xs is None else "_x" + "_".join(f"{v:g}" for v in np.atleast_1d(xs))
        csv_path = out / f"field{label}.csv"
        write_field_csv(csv_path, x_pts, y_pts, ref_field, mean_field)
        outputs.append(csv_path)
        png_path = out / f"field{label}.png"
        if cfg.dim == 1:
            fig_fields(x_pts, y_pts, ref_field, mean_field, png_path, dim=1)
        else:
            n1 = int(round(np.sqrt(y_pts.shape[0])))
            fig_fields(x_pts, y_pts, ref_field.reshape(n1, n1),
                       mean_field.reshape(n1, n1), png_path, dim=2,
                       slice_label=f"at x = {np.atleast_1d(xs)}")
        outputs.append(png_path)

    extra = {"acceptance_rate": chain.acceptance_rate, "n_obs": data.n_obs,
             "z_ref": [float(v) for v in z_ref]}
    return outputs, extra


# ---------------------------------------------------------------------------
# rate studies
# ---------------------------------------------------------------------------

def _run_rate_study(cfg: ExperimentConfig, out: Path, jobs: int):
    coeff = cfg.coefficient()
    z_ref = cfg.reference_vector()
    macro_nodes = TensorGrid("interval", 2**6, 1).node_points()
    cells = solve_cell_problems(coeff, z_ref, macro_nodes, cfg.cell_level, jobs=jobs)
    a0 = homogenized_tensor(coeff, z_ref, cells)
    u0 = solve_homogenized(a0, cfg.source, cfg.level)

    rows = []
    for eps in cfg.epsilons:
        prob = EpsilonProblem(coeff, z_ref, epsilon=eps, source=cfg.source)
        err = corrector_error(prob, u0, cells)
        rows.append({"epsilon": eps, "corrector_error": err,
                     "h_fine": eps / prob.resolution, "L_two_scale": cfg.level})
    errs = np.array([r["corrector_error"] for r in rows])
    slope = float(np.polyfit(np.log(cfg.epsilons), np.log(errs), 1)[0])
    write_rate_csv(out / "rate.csv", rows, slope)
    fig_rate(cfg.epsilons, errs, out / "rate.png", "microscale",
             "corrector error", ref_order=0.5)

    spec = cfg.observation_spec()
    g0 = SemiAnalytic1D(coeff, cfg.source, spec).gmap(z_ref[None])[0]
    gaps = []
    for eps in cfg.epsilons:
        ge = EpsForward1D(coeff, cfg.source, spec, eps).gmap(z_ref[None])[0]
        gaps.append(float(np.linalg.norm(ge - g0)))
    gap_slope = float(np.polyfit(np.log(cfg.epsilons), np.log(gaps), 1)[0])
    with open(out / "forward_gap.csv", "w", newline="") as fh:
        import csv as _csv
        w = _csv.writer(fh)
        w.writerow(["epsilon", "forward_gap", "slope_estimate"])
        for eps, gap in zip(cfg.epsilons, gaps):
            w.writerow([repr(float(eps)), repr(gap), repr(gap_slope)])
    fig_rate(cfg.epsilons, gaps, out / "forward_gap.png", "microscale",
             "forward map gap", ref_order=0.5)

    outputs = [out / "rate.csv", out / "rate.png",
               out / "forward_gap.csv", out / "forward_gap.png"]
    return outputs, {"corrector_slope": slope, "forward_gap_slope": gap_slope,
                     "z_ref": [float(v) for v in z_ref]}


def _run_fe_study(cfg: ExperimentConfig, out: Path, jobs: int):
    coeff = cfg.coefficient()
    z_ref = cfg.reference_vector()
    ref_level = cfg.reference_level
    sys_ref = assemble_two_scale(coeff, z_ref, ref_level, "full", source=cfg.source)
    sol_ref = solve_two_scale(sys_ref, tol=cfg.cg_tol)
    rows = []
    for L in cfg.levels:
        t0 = time.perf_counter()
        sol_f = solve_two_scale(
            assemble_two_scale(coeff, z_ref, L, "full", source=cfg.source), tol=cfg.cg_tol)
        sol_s = solve_two_scale(
            assemble_two_scale(coeff, z_ref, L, "sparse", source=cfg.source), tol=cfg.cg_tol)
        seconds = time.perf_counter() - t0
        u0f, u1f = prolong_nodal(cfg.dim, L, ref_level, sol_f.u0_nodal, sol_f.u1_nodal)
        u0s, u1s = prolong_nodal(cfg.dim, L, ref_level, sol_s.u0_nodal, sol_s.u1_nodal)
        d = count_dofs(L, cfg.dim)
        rows.append({
            "L": L,
            "dofs_full": d["total_full"],
            "dofs_sparse": d["total_sparse"],
            "err_full": energy_norm_nodal(sys_ref, u0f - sol_ref.u0_nodal,
                                          u1f - sol_ref.u1_nodal),
            "err_sparse": energy_norm_nodal(sys_ref, u0s - sol_ref.u0_nodal,
                                            u1s - sol_ref.u1_nodal),
            "seconds": seconds,
        })
    write_fe_study_csv(out / "fe_study.csv", rows)
    fig_fe_study(rows, out / "fe_study.png")
    slice_xs = cfg.slices if len(cfg.slices) else np.full((1, cfg.dim), 0.5)
    write_solution_csv(sol_ref, out / "u0_reference.csv", out / "u1_slices.csv", slice_xs)
    outputs = [out / "fe_study.csv", out / "fe_study.png",
               out / "u0_reference.csv", out / "u1_slices.csv"]
    return outputs, {"reference_level": ref_level, "z_ref": [float(v) for v in z_ref]}


def _run_hellinger_eps(cfg: ExperimentConfig, out: Path, jobs: int):
    coeff = cfg.coefficient()
    spec = cfg.observation_spec()
    z_ref = cfg.reference_vector()
    data = _make_data(cfg, coeff, spec, z_ref)
    ref_model = PosteriorModel(cfg.prior_kind, cfg.n_terms,
                               SemiAnalytic1D(coeff, cfg.source, spec), data)
    rungs = [(eps, PosteriorModel(cfg.prior_kind, cfg.n_terms,
                                  EpsForward1D(coeff, cfg.source, spec, eps), data))
             for eps in cfg.epsilons]
    table = hellinger_rate_study(rungs, ref_model, cfg.n_samples, cfg.mcmc_seed)
    write_hellinger_csv(out / "hellinger.csv", table)
    fig_hellinger(table, out / "hellinger.png", "microscale")
    return [out / "hellinger.csv", out / "hellinger.png"], \
        {"slope": table.slope if table.slope_valid else None, "note": table.note}


def _run_hellinger_fe(cfg: ExperimentConfig, out: Path, jobs: int):
    coeff = cfg.coefficient()
    spec = cfg.observation_spec()
    z_ref = cfg.reference_vector()
    data = _make_data(cfg, coeff, spec, z_ref)
    ref_model = PosteriorModel(
        cfg.prior_kind, cfg.n_terms,
        _make_forward(cfg, coeff, spec, level=cfg.reference_level, mode="sparse"), data)
    rungs = [(2.0**-L, PosteriorModel(
        cfg.prior_kind, cfg.n_terms,
        _make_forward(cfg, coeff, spec, level=L, mode="sparse"), data))
        for L in cfg.levels]
    table = hellinger_rate_study(rungs, ref_model, cfg.n_samples, cfg.mcmc_seed)
    write_hellinger_csv(out / "hellinger.csv", table)
    fig_hellinger(table, out / "hellinger.png", "mesh width")
    return [out / "hellinger.csv", out / "hellinger.png"], \
        {"slope": table.slope if table.slope_valid else None, "note": table.note,
         "reference_level": cfg.reference_level}


# ---------------------------------------------------------------------------
# homogenization utilities
# ---------------------------------------------------------------------------

def _run_homogenize(cfg: ExperimentConfig, out: Path, jobs: int):
    coeff = cfg.coefficient()
    z_ref = cfg.reference_vector()
    macro = TensorGrid("interval", 2**cfg.level, cfg.dim).node_points()
    cells = solve_cell_problems(coeff, z_ref, macro, cfg.cell_level, jobs=jobs)
    field = homogenized_tensor(coeff, z_ref, cells)
    dump_tensor_csv(field, out / "effective_tensor.csv")
    fig_tensor_field(field, out / "effective_tensor.png")
    u0 = solve_homogenized(field, cfg.source, cfg.level)
    nodes = u0.grid.node_points()
    import csv as _csv
    with open(out / "u0.csv", "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(cfg.dim)] + ["u0"])
        for pt, val in zip(nodes, u0.u0_nodal):
            w.writerow([repr(float(v)) for v in pt] + [repr(float(val))])
    outputs = [out / "effective_tensor.csv", out / "effective_tensor.png", out / "u0.csv"]
    return outputs, {"n_macro_points": len(macro),
                     "max_cell_residual": float(cells.residuals.max()),
                     "z_ref": [float(v) for v in z_ref]}


def _run_cell(cfg: ExperimentConfig, out: Path, jobs: int):
    coeff = cfg.coefficient()
    z_ref = cfg.reference_vector()
    pts = cfg.slices if len(cfg.slices) else np.full((1, cfg.dim), 0.5)
    cells = solve_cell_problems(coeff, z_ref, pts, cfg.cell_level, jobs=jobs)
    outputs = []
    for i in range(len(pts)):
        label = "_".join(f"{v:g}" for v in pts[i])
        dump_cell_slice_csv(cells, i, out / f"cell_x{label}.csv")
        fig_cell_slice(cells, i, out / f"cell_x{label}.png")
        outputs += [out / f"cell_x{label}.csv", out / f"cell_x{label}.png"]
    return outputs, {"max_cell_residual": float(cells.residuals.max()),
                     "z_ref": [float(v) for v in z_ref]}
