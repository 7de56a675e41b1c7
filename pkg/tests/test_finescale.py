import numpy as np
import pytest

from twoscale.catalogue import coefficient_preset, parse_term
from twoscale.cells import solve_cell_problems
from twoscale.coefficients import uniform_coefficient
from twoscale.errors import MemoryGuardError
from twoscale.finescale import (EpsilonProblem, corrector_error, solve_eps_1d_exact,
                                solve_eps_fem)


@pytest.fixture(scope="module")
def family_1d():
    return uniform_coefficient([parse_term("9")], coefficient_preset("1d_sincos"), dim=1)


@pytest.fixture(scope="module")
def const_1d():
    return uniform_coefficient([parse_term("1")], [], dim=1)


def test_unit_coefficient_closed_form(const_1d):
    prob = EpsilonProblem(const_1d, [], epsilon=1 / 8, source=1.0)
    sol = solve_eps_1d_exact(prob)
    xs = np.linspace(0, 1, 33)
    assert np.abs(sol(xs) - 0.5 * xs * (1 - xs)).max() < 1e-12
    assert np.abs(sol.flux(xs) - 0.5 * (1 - 2 * xs)).max() < 1e-14


def test_zero_source_gives_zero_solution(family_1d):
    prob = EpsilonProblem(family_1d, [0.5, -0.5], epsilon=1 / 8, source=0.0)
    sol = solve_eps_1d_exact(prob)
    xs = np.linspace(0, 1, 17)
    assert np.abs(sol(xs)).max() < 1e-14
    assert np.abs(sol.flux(xs)).max() < 1e-14


def test_flux_is_antiderivative_complement(family_1d):
    prob = EpsilonProblem(family_1d, [0.7, -0.4], epsilon=1 / 16, source=1.0)
    sol = solve_eps_1d_exact(prob)
    xs = np.linspace(0, 1, 40)
    a = prob.coefficient_at(xs[:, None])
    assert np.allclose(a * sol.gradient(xs), sol.flux(xs))


def test_epsilon_and_resolution_validation(family_1d):
    with pytest.raises(ValueError):
        EpsilonProblem(family_1d, [0, 0], epsilon=0.3)
    with pytest.raises(ValueError):
        EpsilonProblem(family_1d, [0, 0], epsilon=1 / 8, resolution=4)


def test_solution_approaches_macroscopic_limit(family_1d):
    # || u_eps - u0 ||_inf decreases with the microscale; for z = (1, 0) the
    # effective coefficient is sqrt(81 - (1+x)^2) (harmonic mean in closed form)
    from scipy.integrate import quad
    z = np.array([1.0, 0.0])
    xs = np.linspace(0, 1, 21)

    def a0(x):
        return np.sqrt(81.0 - (1.0 + x) ** 2)

    den = quad(lambda t: 1.0 / a0(t), 0, 1, epsabs=1e-12)[0]
    num = quad(lambda t: t / a0(t), 0, 1, epsabs=1e-12)[0]
    C = num / den
    u0_at = np.array([quad(lambda t: (C - t) / a0(t), 0, x, epsabs=1e-12)[0] for x in xs])
    errs = []
    for eps in (1 / 8, 1 / 32, 1 / 128):
        sol = solve_eps_1d_exact(EpsilonProblem(family_1d, z, epsilon=eps, source=1.0))
        errs.append(np.abs(sol(xs) - u0_at).max())
    assert errs[0] > errs[1] > errs[2]


def test_corrector_error_rate(family_1d):
    from twoscale.cells import homogenized_tensor
    from twoscale.meshes import TensorGrid
    from twoscale.solvers import solve_homogenized
    z = np.array([0.7, -0.4])
    macro = TensorGrid("interval", 2**5, 1).node_points()
    cells = solve_cell_problems(family_1d, z, macro, level=8)
    a0 = homogenized_tensor(family_1d, z, cells)
    u0 = solve_homogenized(a0, 1.0, level=8)
    eps_list = [1 / 8, 1 / 16, 1 / 32]
    errs = [corrector_error(EpsilonProblem(family_1d, z, epsilon=e, source=1.0), u0, cells)
            for e in eps_list]
    slope = np.polyfit(np.log(eps_list), np.log(errs), 1)[0]
    assert slope >= 0.5


def test_corrector_error_ignores_micro_constants(family_1d):
    # adding a y-constant to the responses cannot change the gradient mismatch
    from twoscale.cells import CellSolutionSet, homogenized_tensor
    from twoscale.meshes import TensorGrid
    from twoscale.solvers import solve_homogenized
    z = np.array([0.5, -0.5])
    macro = TensorGrid("interval", 2**4, 1).node_points()
    cells = solve_cell_problems(family_1d, z, macro, level=6)
    a0 = homogenized_tensor(family_1d, z, cells)
    u0 = solve_homogenized(a0, 1.0, level=6)
    prob = EpsilonProblem(family_1d, z, epsilon=1 / 8, source=1.0)
    base = corrector_error(prob, u0, cells)
    shifted = CellSolutionSet(
        macro_points=cells.macro_points, level=cells.level, dim=cells.dim,
        solutions=cells.solutions + 0.37, residuals=cells.residuals,
        coercivity=cells.coercivity)
    assert corrector_error(prob, u0, shifted) == pytest.approx(base, rel=1e-12)


def test_corrector_error_constant_coefficient_small(const_1d):
    # constant coefficient: the micro correction vanishes exactly and the
    # mismatch reduces to pure discretisation error of the macro gradient
    from twoscale.cells import homogenized_tensor
    from twoscale.meshes import TensorGrid
    from twoscale.solvers import solve_homogenized
    macro = TensorGrid("interval", 2**4, 1).node_points()
    cells = solve_cell_problems(const_1d, [], macro, level=6)
    a0 = homogenized_tensor(const_1d, [], cells)
    prob = EpsilonProblem(const_1d, [], epsilon=1 / 8, source=1.0)
    raw = []
    for L in (5, 7):
        u0 = solve_homogenized(a0, 1.0, level=L)
        # recovered gradients reproduce the quadratic solution exactly
        assert corrector_error(prob, u0, cells) < 1e-12
        raw.append(corrector_error(prob, u0, cells, recovered_gradients=False))
    assert raw[1] < raw[0] / 3.0  # raw Q1 gradients converge at first order


# -- fine Q1 solver -----------------------------------------------------------

def test_fem_matches_poisson_for_constant_coefficient():
    const_2d = uniform_coefficient([parse_term("1")], [], dim=2)
    prob = EpsilonProblem(const_2d, [], epsilon=1 / 4, source=1.0, resolution=8)
    sol = solve_eps_fem(prob)
    # compare against a separable-series reference at the center
    x = y = 0.5
    ref = 0.0
    for k in range(1, 40, 2):
        for l in range(1, 40, 2):
            ref += 16.0 / (np.pi**4 * k * l * (k**2 + l**2)) * \
                np.sin(k * np.pi * x) * np.sin(l * np.pi * y)
    assert sol.u_at(np.array([[0.5, 0.5]]))[0] == pytest.approx(ref, rel=2e-3)


def test_fem_apriori_energy_bound():
    coeff2 = uniform_coefficient([parse_term("10")], coefficient_preset("2d_uniform_16"),
                                 dim=2)
    rng = np.random.default_rng(1)
    z = rng.uniform(-1, 1, 16)
    prob = EpsilonProblem(coeff2, z, epsilon=1 / 4, source=1.0, resolution=8)
    sol = solve_eps_fem(prob)
    c_low, c_high = coeff2.coercivity_bounds(z)
    # || f ||_{V'} measured through the unit-coefficient solve
    unit = uniform_coefficient([parse_term("1")], [], dim=2)
    ref = solve_eps_fem(EpsilonProblem(unit, [], epsilon=1 / 4, source=1.0, resolution=8))
    f_dual = ref.h1_seminorm()
    assert sol.h1_seminorm() <= 1.1 * (c_high / c_low) * f_dual


def test_fem_mesh_halving_first_order():
    coeff2 = uniform_coefficient([parse_term("10")], coefficient_preset("2d_uniform_16"),
                                 dim=2)
    z = np.full(16, 0.3)
    sols = [solve_eps_fem(EpsilonProblem(coeff2, z, epsilon=1 / 2, source=1.0,
                                         resolution=r)) for r in (8, 16, 32)]
    # Richardson: H1 distance between consecutive meshes should halve
    d01 = _h1_distance(sols[0], sols[1])
    d12 = _h1_distance(sols[1], sols[2])
    assert 1.5 < d01 / d12 < 2.6


def _h1_distance(sa, sb):
    grid = sb.grid
    pts = grid.quad_points()
    w = grid.quad_weights()
    ga = sa.gradient_at(pts)
    gb = sb.gradient_at(pts)
    return np.sqrt(np.sum(w * ((ga - gb) ** 2).sum(axis=1)))


def test_fem_memory_guard():
    const_2d = uniform_coefficient([parse_term("1")], [], dim=2)
    with pytest.raises(MemoryGuardError):
        solve_eps_fem(EpsilonProblem(const_2d, [], epsilon=1 / 256, source=1.0,
                                     resolution=8))
