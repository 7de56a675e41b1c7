"""Delimited outputs and the figures rendered alongside them.

Every writer prints floats with repr, so runs with identical configs and
seeds produce byte-identical files.  Figures are rendered with the Agg
backend next to each CSV.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "write_chain_csv",
    "write_scatter_csv",
    "write_summary",
    "write_field_csv",
    "write_rate_csv",
    "write_hellinger_csv",
    "write_fe_study_csv",
    "write_manifest",
    "fig_scatter",
    "fig_fields",
    "fig_rate",
    "fig_hellinger",
    "fig_fe_study",
    "fig_tensor_field",
    "fig_cell_slice",
]


def _fmt(v) -> str:
    return repr(float(v))


def write_chain_csv(chain, path) -> None:
    """Columns: step, z_1..z_J, potential, accepted."""
    n, J = chain.samples.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step"] + [f"z_{j + 1}" for j in range(J)] + ["potential", "accepted"])
        for t in range(n):
            w.writerow([t] + [_fmt(v) for v in chain.samples[t]]
                       + [_fmt(chain.potentials[t]), int(chain.accepted[t])])


def write_scatter_csv(chain, path) -> None:
    """First two coordinates of every state, for scatter reproduction."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["z_1", "z_2"])
        for row in chain.samples:
            w.writerow([_fmt(row[0]), _fmt(row[1] if len(row) > 1 else 0.0)])


def write_summary(chain, path, extra: dict | None = None) -> None:
    s = chain.summary()
    lines = [
        f"n_steps = {s['n_steps']}",
        f"burn_in = {s['burn_in']}",
        f"seed = {s['seed']}",
        f"acceptance_rate = {_fmt(s['acceptance_rate'])}",
    ]
    for j, (m, sd) in enumerate(zip(s["mean"], s["std"]), start=1):
        lines.append(f"posterior_mean_z{j} = {_fmt(m)}")
        lines.append(f"posterior_std_z{j} = {_fmt(sd)}")
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {v}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_field_csv(path, x_pts: np.ndarray, y_pts: np.ndarray,
                    reference: np.ndarray, posterior_mean: np.ndarray) -> None:
    """Tensor-grid field table: x coords, y coords, reference, posterior mean."""
    x_pts = np.atleast_2d(x_pts)
    y_pts = np.atleast_2d(y_pts)
    dx, dy = x_pts.shape[1], y_pts.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(dx)] + [f"y{i + 1}" for i in range(dy)]
                   + ["reference", "posterior_mean"])
        for i in range(x_pts.shape[0]):
            for j in range(y_pts.shape[0]):
                w.writerow([_fmt(v) for v in x_pts[i]] + [_fmt(v) for v in y_pts[j]]
                           + [_fmt(reference[i, j]), _fmt(posterior_mean[i, j])])


def write_rate_csv(path, rows: list[dict], slope: float) -> None:
    """Corrector-rate table: epsilon, corrector_error, h_fine, L_two_scale, slope_estimate."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epsilon", "corrector_error", "h_fine", "L_two_scale", "slope_estimate"])
        for r in rows:
            w.writerow([_fmt(r["epsilon"]), _fmt(r["corrector_error"]),
                        _fmt(r["h_fine"]), r["L_two_scale"], _fmt(slope)])


def write_hellinger_csv(path, table) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tag", "distance", "bootstrap_std", "slope", "slope_valid"])
        for r in table.rows:
            w.writerow([_fmt(r.tag), _fmt(r.distance), _fmt(r.bootstrap_std),
                        _fmt(table.slope), int(table.slope_valid)])


def write_fe_study_csv(path, rows: list[dict]) -> None:
    """Columns: L, dofs_full, dofs_sparse, err_full, err_sparse, seconds."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["L", "dofs_full", "dofs_sparse", "err_full", "err_sparse", "seconds"])
        for r in rows:
            w.writerow([r["L"], r["dofs_full"], r["dofs_sparse"],
                        _fmt(r["err_full"]), _fmt(r["err_sparse"]), _fmt(r["seconds"])])


def write_solution_csv(sol, u0_path, u1_path, slice_points: np.ndarray) -> None:
    """Macro nodal values and micro slices u1(x, .) of a coupled solution."""
    gx = sol.space.grid_x
    gy = sol.space.grid_y
    dim = sol.space.dim
    with open(u0_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(dim)] + ["u0"])
        for pt, val in zip(gx.node_points(), sol.u0_nodal):
            w.writerow([_fmt(v) for v in pt] + [_fmt(val)])
    slice_points = np.atleast_2d(slice_points)
    with open(u1_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(dim)] + [f"y{i + 1}" for i in range(dim)]
                   + ["u1"])
        for xs in slice_points:
            prof = sol.u1_slice(xs)
            for node, val in zip(gy.node_points(), prof):
                w.writerow([_fmt(v) for v in xs] + [_fmt(v) for v in node] + [_fmt(val)])


def write_manifest(path, outputs: list[Path], meta: dict) -> None:
    """JSON manifest: seeds, versions and a content hash per output file."""
    files = {}
    for p in sorted(outputs, key=lambda q: q.name):
        digest = hashlib.sha256(Path(p).read_bytes()).hexdigest()
        files[p.name] = {"sha256": digest, "bytes": Path(p).stat().st_size}
    record = dict(meta)
    record["files"] = files
    Path(path).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------

def _save(fig, path) -> None:
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def fig_scatter(samples: np.ndarray, path, z_ref=None, title="posterior samples") -> None:
    fig, ax = plt.subplots(figsize=(5.2, 5))
    ax.scatter(samples[:, 0], samples[:, 1] if samples.shape[1] > 1 else
               np.zeros(len(samples)), s=2, alpha=0.25, c="steelblue", rasterized=True)
    if z_ref is not None:
        ax.plot(z_ref[0], z_ref[1] if len(z_ref) > 1 else 0.0, "r*", ms=12,
                label="reference")
        ax.legend(loc="upper right", fontsize=8)
    ax.set_xlabel("$z_1$")
    ax.set_ylabel("$z_2$")
    ax.set_xlim(-1.1, 1.1)
    ax.set_ylim(-1.1, 1.1)
    ax.set_title(title, fontsize=10)
    _save(fig, path)


def fig_fields(x_pts, y_pts, reference, posterior_mean, path, dim: int,
               slice_label: str = "") -> None:
    """Side-by-side reference / posterior-mean coefficient fields."""
    fig, axes = plt.subplots(1, 2, figsize=(9.6, 4), sharey=True)
    if dim == 1:
        extent = [y_pts[:, 0].min(), y_pts[:, 0].max(), x_pts[:, 0].min(), x_pts[:, 0].max()]
        labels = ("y", "x")
    else:
        extent = [y_pts[:, 1].min(), y_pts[:, 1].max(), y_pts[:, 0].min(), y_pts[:, 0].max()]
        labels = ("$y_2$", "$y_1$")
    vmin = min(reference.min(), posterior_mean.min())
    vmax = max(reference.max(), posterior_mean.max())
    for ax, fld, name in ((axes[0], reference, "reference"),
                          (axes[1], posterior_mean, "posterior mean")):
        im = ax.imshow(fld, origin="lower", aspect="auto", extent=extent,
                       vmin=vmin, vmax=vmax, cmap="viridis")
        ax.set_title(f"{name} {slice_label}", fontsize=10)
        ax.set_xlabel(labels[0])
    axes[0].set_ylabel(labels[1])
    fig.colorbar(im, ax=axes, shrink=0.85)
    _save(fig, path)


def fig_rate(tags, values, path, xlabel, ylabel, ref_order: float | None = None) -> None:
    fig, ax = plt.subplots(figsize=(5.2, 4))
    ax.loglog(tags, values, "ko-", lw=1.5, label="measured")
    if ref_order is not None:
        scale = values[0] / tags[0] ** ref_order
        ax.loglog(tags, scale * np.asarray(tags) ** ref_order, "r--", lw=1.2,
                  label=f"order {ref_order:g}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    _save(fig, path)


def fig_hellinger(table, path, xlabel) -> None:
    tags = [r.tag for r in table.rows]
    vals = [r.distance for r in table.rows]
    errs = [r.bootstrap_std for r in table.rows]
    fig, ax = plt.subplots(figsize=(5.2, 4))
    ax.errorbar(tags, vals, yerr=errs, fmt="ko-", lw=1.5, capsize=3)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("Hellinger distance")
    note = f"slope {table.slope:.2f}" if table.slope_valid else table.note
    ax.set_title(note, fontsize=9)
    ax.grid(True, which="both", alpha=0.3)
    _save(fig, path)


def fig_fe_study(rows, path) -> None:
    L = [r["L"] for r in rows]
    fig, axes = plt.subplots(1, 2, figsize=(9.6, 4))
    axes[0].semilogy(L, [r["err_full"] for r in rows], "ko-", label="full")
    axes[0].semilogy(L, [r["err_sparse"] for r in rows], "rs--", label="sparse")
    axes[0].set_xlabel("level")
    axes[0].set_ylabel("energy error vs reference")
    axes[0].legend(fontsize=8)
    axes[0].grid(True, alpha=0.3)
    axes[1].semilogy(L, [r["dofs_full"] for r in rows], "ko-", label="full")
    axes[1].semilogy(L, [r["dofs_sparse"] for r in rows], "rs--", label="sparse")
    axes[1].set_xlabel("level")
    axes[1].set_ylabel("degrees of freedom")
    axes[1].legend(fontsize=8)
    axes[1].grid(True, alpha=0.3)
    _save(fig, path)


def fig_tensor_field(field, path) -> None:
    """Effective-tensor entries against the first macro coordinate."""
    fig, ax = plt.subplots(figsize=(5.6, 4))
    x = field.macro_points[:, 0]
    order = np.argsort(x)
    d = field.dim
    for k in range(d):
        for l in range(k, d):
            ax.plot(x[order], field.tensors[order, k, l], "-o", ms=3,
                    label=f"$A^{{eff}}_{{{k + 1}{l + 1}}}$")
    ax.set_xlabel("$x_1$")
    ax.set_ylabel("effective tensor entries")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    _save(fig, path)


def fig_cell_slice(cells, pt_index, path) -> None:
    grid = cells.grid
    fig, ax = plt.subplots(figsize=(5.6, 4))
    if cells.dim == 1:
        y = grid.node_points()[:, 0]
        order = np.argsort(y)
        ax.plot(y[order], cells.solutions[pt_index, 0][order], "-", lw=1.5)
        ax.set_xlabel("y")
        ax.set_ylabel("cell response")
    else:
        n1 = grid.axis.n_nodes
        im = ax.imshow(cells.solutions[pt_index, 0].reshape(n1, n1), origin="lower",
                       extent=[0, 1, 0, 1], cmap="viridis")
        fig.colorbar(im, ax=ax, shrink=0.85)
        ax.set_xlabel("$y_2$")
        ax.set_ylabel("$y_1$")
    ax.set_title("first cell response", fontsize=10)
    _save(fig, path)
