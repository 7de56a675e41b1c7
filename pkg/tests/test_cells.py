import numpy as np
import pytest

from twoscale.catalogue import coefficient_preset, parse_term
from twoscale.cells import (corrector_field, effective_tensor_from_values,
                            homogenized_tensor, solve_cell_problems)
from twoscale.meshes import TensorGrid, gauss_rule


@pytest.fixture(scope="module")
def osc_1d():
    # micro-only oscillation: A(y) = 9 + sin(2 pi y)
    return parse_term("9"), parse_term("sin(2pi*y1)")


def _coeff_1d(osc_1d):
    from twoscale.coefficients import uniform_coefficient
    mean, osc = osc_1d
    return uniform_coefficient([mean, osc], [], dim=1)


def test_constant_coefficient_gives_zero_responses():
    from twoscale.coefficients import uniform_coefficient
    coeff = uniform_coefficient([parse_term("7")], [], dim=2)
    cells = solve_cell_problems(coeff, [], [[0.3, 0.6]], level=3)
    assert np.abs(cells.solutions).max() < 1e-14
    field = homogenized_tensor(coeff, [], cells)
    assert np.allclose(field.tensors[0], 7.0 * np.eye(2))


def test_1d_harmonic_mean(osc_1d):
    coeff = _coeff_1d(osc_1d)
    cells = solve_cell_problems(coeff, [], [[0.0]], level=10)
    field = homogenized_tensor(coeff, [], cells)
    assert field.as_scalar()[0] == pytest.approx(np.sqrt(80.0), abs=1e-6)


def test_1d_flux_reconstruction(osc_1d):
    # discrete responses satisfy a(y)(1 + w') = const elementwise
    coeff = _coeff_1d(osc_1d)
    level = 7
    cells = solve_cell_problems(coeff, [], [[0.0]], level=level)
    grid = cells.grid
    a_q = coeff.evaluate_tensor([], np.zeros((1, 1)), grid.quad_points())[0]
    dw = grid.grad_matrix(1) @ cells.solutions[0, 0]
    flux = a_q * (1.0 + dw)
    per_cell = flux.reshape(grid.n_cells, grid.n_gauss).mean(axis=1)
    assert per_cell.std() / per_cell.mean() < 2e-4


def test_residuals_below_tolerance(osc_1d):
    coeff = _coeff_1d(osc_1d)
    cells = solve_cell_problems(coeff, [], [[0.0]], level=6, tol=1e-12)
    assert cells.residuals.max() < 1e-10


def test_mean_zero_normalisation(osc_1d):
    coeff = _coeff_1d(osc_1d)
    cells = solve_cell_problems(coeff, [], [[0.0]], level=6)
    assert abs(cells.solutions[0, 0].mean()) < 1e-14


def test_shift_equivariance():
    # replacing A(y) by A(y + s) shifts the response by s on shift-compatible grids
    from twoscale.coefficients import uniform_coefficient
    level = 5
    n = 2**level
    grid = TensorGrid("torus", n, 1)
    yq = grid.quad_points()
    base = uniform_coefficient([parse_term("9"), parse_term("sin(2pi*y1)")], [], dim=1)
    a0 = base.evaluate_tensor([], np.zeros((1, 1)), yq)[0]
    shift_cells = 4
    a_shifted = 9.0 + np.sin(2 * np.pi * (yq[:, 0] + shift_cells * grid.h))
    from twoscale.cells import _solve_single
    w0, _ = _solve_single((a0, 1, level, 1e-12, 50000))
    ws, _ = _solve_single((a_shifted, 1, level, 1e-12, 50000))
    rolled = np.roll(ws[0], shift_cells)
    assert np.abs(w0[0] - rolled).max() < 1e-9


def test_2d_laminate_matches_mean_formulas():
    alpha, beta, wdt = 1.0, 4.0, 0.05

    def prof(y1):
        s = 0.5 * (1.0 + np.tanh(np.sin(2 * np.pi * y1) / wdt))
        return beta + (alpha - beta) * s

    level = 6
    grid = TensorGrid("torus", 2**level, 2)
    a_quad = prof(grid.quad_points()[:, 0])
    A0 = effective_tensor_from_values(a_quad, 2, level)
    t, w = gauss_rule(4)
    fine = (np.arange(4096)[:, None] / 4096 + t[None, :] / 4096).ravel()
    fw = np.tile(w / 4096, 4096)
    vals = prof(fine)
    harm = 1.0 / np.sum(fw / vals)
    arith = np.sum(fw * vals)
    assert A0[0, 0] == pytest.approx(harm, rel=5e-3)
    assert A0[1, 1] == pytest.approx(arith, rel=1e-6)
    assert abs(A0[0, 1]) < 1e-12


def test_tensor_symmetric_and_spectral_bounds():
    from twoscale.coefficients import uniform_coefficient
    coeff = uniform_coefficient([parse_term("10")], coefficient_preset("2d_uniform_16"), dim=2)
    z = np.linspace(-0.8, 0.8, 16)
    cells = solve_cell_problems(coeff, z, [[0.3, 0.7]], level=4)
    field = homogenized_tensor(coeff, z, cells)
    A0 = field.tensors[0]
    assert np.array_equal(A0, A0.T)
    c_low, c_high = coeff.coercivity_bounds(z)
    rng = np.random.default_rng(0)
    grid = cells.grid
    w_q = grid.quad_weights()
    h1_max = 0.0
    for l in range(2):
        g = np.stack([grid.grad_matrix(p + 1) @ cells.solutions[0, l] for p in (0, 1)])
        h1_max = max(h1_max, float(np.sum(w_q * (g * g).sum(axis=0))))
    for _ in range(25):
        xi = rng.standard_normal(2)
        quad = xi @ A0 @ xi
        assert quad >= 0.99 * c_low * xi @ xi
        assert quad <= c_high * (1.0 + 2 * h1_max) * xi @ xi


def test_mesh_convergence_ratio(osc_1d):
    coeff = _coeff_1d(osc_1d)
    exact = np.sqrt(80.0)
    errs = []
    for level in (4, 5, 6):
        cells = solve_cell_problems(coeff, [], [[0.0]], level=level)
        errs.append(abs(homogenized_tensor(coeff, [], cells).as_scalar()[0] - exact))
    assert errs[0] / errs[1] >= 3.0
    assert errs[1] / errs[2] >= 3.0


def test_corrector_field_trivial_cases(osc_1d):
    from twoscale.coefficients import uniform_coefficient
    coeff = _coeff_1d(osc_1d)
    pts = np.linspace(0, 1, 5)[:, None]
    cells = solve_cell_problems(coeff, [], pts, level=5)
    zero_grad = corrector_field(cells, np.zeros((5, 1)))
    xs = np.full((7, 1), 0.4)
    ys = np.linspace(0, 1, 7)[:, None]
    assert np.abs(zero_grad(xs, ys)).max() == 0.0
    const = uniform_coefficient([parse_term("7")], [], dim=1)
    cells_const = solve_cell_problems(const, [], pts, level=5)
    fld = corrector_field(cells_const, np.ones((5, 1)))
    assert np.abs(fld(xs, ys)).max() < 1e-13


def test_corrector_micro_gradient_integrates_to_zero(osc_1d):
    coeff = _coeff_1d(osc_1d)
    pts = np.linspace(0, 1, 9)[:, None]
    cells = solve_cell_problems(coeff, [], pts, level=6)
    fld = corrector_field(cells, np.linspace(0.5, 1.5, 9)[:, None])
    grid = cells.grid
    yq = grid.quad_points()
    w = grid.quad_weights()
    for x0 in (0.11, 0.62):
        g = fld.grad_y(np.full((len(yq), 1), x0), yq)[:, 0]
        assert abs(w @ g) < 1e-12


def test_macro_points_dimension_checked(osc_1d):
    coeff = _coeff_1d(osc_1d)
    with pytest.raises(ValueError):
        solve_cell_problems(coeff, [], [[0.1, 0.2]], level=4)
    pts = np.linspace(0, 1, 3)[:, None]
    cells = solve_cell_problems(coeff, [], pts, level=4)
    with pytest.raises(ValueError):
        corrector_field(cells, np.zeros((2, 1)))
