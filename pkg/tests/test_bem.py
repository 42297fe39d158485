"""Galerkin assembly, solve, energy norms, potential evaluation and residual tables."""
import math
from dataclasses import replace

import numpy as np
import pytest

from igabem.discretization.geometry import circle, slit
from igabem.discretization.mesh import initial_mesh, refine, uniform_marks
from igabem.errors import DomainError, FactorizationError
from igabem.solver.bem import (
    Density,
    GalerkinSystem,
    QuadConfig,
    ResidualTable,
    assemble,
    discrete_energy,
    element_pairs,
    energy_error,
    energy_norm,
    eval_V,
    potential,
    residual_samples,
    solve,
)
from igabem.solver.problems import build_problem

CIRCLE_DENSITY = 2.0 / math.log(2.0)
CIRCLE_ENERGY = 2.0 * math.pi / math.log(2.0)


def _solve_on(mesh, problem_name="constant", quad=None):
    problem = build_problem(problem_name, mesh.curve)
    system = assemble(mesh.space, mesh, problem, quad)
    return system, solve(system), problem


def _constant_density(mesh, value=1.0):
    # constants are reproduced exactly only by the B-spline weights
    return Density(mesh.space, np.full(mesh.dim, value), mesh)


@pytest.mark.parametrize("p", [0, 1, 2])
def test_circle_reproduces_constant_density(p):
    mesh = initial_mesh(circle(), p, 4)
    system, density, _ = _solve_on(mesh)
    np.testing.assert_allclose(density.coeffs, CIRCLE_DENSITY, rtol=1e-8)
    assert discrete_energy(system, density) == pytest.approx(CIRCLE_ENERGY, rel=1e-8)
    assert energy_error(system, density, CIRCLE_ENERGY) <= 1e-3


def test_energy_norm_of_solution_matches_energy(circle_mesh):
    system, density, _ = _solve_on(circle_mesh)
    assert energy_norm(density, system) ** 2 == pytest.approx(discrete_energy(system, density), rel=1e-10)
    assert energy_norm(np.zeros(circle_mesh.dim), system) == 0.0
    with pytest.raises(DomainError, match="coefficient_count_mismatch"):
        energy_norm(np.ones(circle_mesh.dim + 1), system)


def test_matrix_is_symmetric_positive_definite(fast_quad):
    mesh = initial_mesh(slit(), 2, 6)
    system = assemble(mesh.space, mesh, build_problem("constant", mesh.curve), fast_quad)
    np.testing.assert_allclose(system.matrix, system.matrix.T)
    assert np.linalg.eigvalsh(system.matrix).min() > 0.0


def test_space_mesh_mismatch(fast_quad):
    coarse = initial_mesh(slit(), 1, 2)
    fine, _ = refine(coarse, uniform_marks(coarse), mode="h")
    with pytest.raises(DomainError, match="space_mesh_mismatch"):
        assemble(coarse.space, fine, build_problem("constant", coarse.curve), fast_quad)


def test_threaded_assembly_matches_serial(monkeypatch, fast_quad):
    monkeypatch.setenv("IGABEM_BLOCK_ROWS", "64")
    mesh = initial_mesh(slit(), 1, 16)
    problem = build_problem("constant", mesh.curve)
    serial = assemble(mesh.space, mesh, problem, fast_quad, workers=1)
    threaded = assemble(mesh.space, mesh, problem, fast_quad, workers=3)
    np.testing.assert_allclose(threaded.matrix, serial.matrix, rtol=1e-13, atol=1e-15)


def test_non_spd_system_fails_to_factor(circle_mesh):
    system = GalerkinSystem(-np.eye(circle_mesh.dim), np.ones(circle_mesh.dim), circle_mesh.space, circle_mesh)
    with pytest.raises(FactorizationError, match="cholesky_failed"):
        solve(system)


def test_slit_energies_increase_towards_closed_form(fast_quad):
    mesh = initial_mesh(slit(), 0, 4)
    reference = build_problem("constant", mesh.curve).reference_energy
    energies = []
    for _ in range(3):
        system, density, _ = _solve_on(mesh, quad=fast_quad)
        energies.append(discrete_energy(system, density))
        mesh, _ = refine(mesh, uniform_marks(mesh), mode="h")
    assert energies[0] < energies[1] < energies[2] < reference


def test_element_pairs_closed_and_open(circle_mesh):
    closed = element_pairs(circle_mesh)
    assert closed["coincident"][0].size == 4
    assert sorted(zip(*(a.tolist() for a in closed["adjacent"]))) == [(0, 1), (1, 2), (2, 3), (3, 0)]
    assert sorted(zip(*(a.tolist() for a in closed["near"]))) == [(0, 2), (1, 3)]

    opened = element_pairs(initial_mesh(slit(), 0, 4))
    assert sorted(zip(*(a.tolist() for a in opened["adjacent"]))) == [(0, 1), (1, 2), (2, 3)]
    assert sorted(zip(*(a.tolist() for a in opened["near"]))) == [(0, 2), (1, 3)]


# ── potential ──


def test_eval_V_panel_midpoint(make_segment):
    mesh = initial_mesh(make_segment(0.0, 2.0), 0, 1)
    density = _constant_density(mesh)
    assert eval_V(density, 1.0) == pytest.approx(1.0 / math.pi, rel=1e-12)


def test_eval_V_off_centre_and_endpoint(make_segment):
    mesh = initial_mesh(make_segment(0.0, 2.0), 0, 1)
    density = _constant_density(mesh)
    inner = (0.5 * math.log(0.5) - 0.5) + (1.5 * math.log(1.5) - 1.5)
    assert eval_V(density, 0.5) == pytest.approx(-inner / (2 * math.pi), rel=1e-12)
    assert eval_V(density, 0.0) == pytest.approx(-(2 * math.log(2) - 2) / (2 * math.pi), rel=1e-12)


def test_potential_of_split_panel_matches_single_panel(make_segment):
    one = initial_mesh(make_segment(0.0, 2.0), 0, 1)
    many = initial_mesh(make_segment(0.0, 2.0), 0, 8)
    t = np.array([0.0, 0.3, 0.5, 1.0, 1.75, 2.0])
    np.testing.assert_allclose(
        potential(_constant_density(many), t), potential(_constant_density(one), t), rtol=1e-7, atol=1e-9
    )


def test_circle_constant_potential(circle_mesh):
    c = 1.7
    density = _constant_density(circle_mesh, c)
    ts = np.array([0.0, 0.3, math.pi / 2, 2.0, 5.9])
    np.testing.assert_allclose(potential(density, ts), 0.5 * math.log(2.0) * c, rtol=1e-7)


def test_potential_keeps_input_shape(circle_mesh):
    density = _constant_density(circle_mesh)
    assert potential(density, np.zeros((2, 3))).shape == (2, 3)


# ── residual tables ──


def test_residual_table_of_linear_function(make_segment):
    mesh = initial_mesh(make_segment(), 1, 4)
    table = ResidualTable.from_function(mesh, lambda x, t: 3.0 * x[:, 0] - 1.0, 4)
    np.testing.assert_allclose(table.derivs, 3.0, atol=1e-12)
    np.testing.assert_allclose(table.deriv_l2_sq(), 9.0 * mesh.hcheck, rtol=1e-12)
    xi = np.array([[0.0, 0.5, 1.0]] * mesh.n_elements)
    elems = np.arange(mesh.n_elements)
    expected = 3.0 * (mesh.node_params[:-1][:, None] + mesh.hcheck[:, None] * xi) - 1.0
    np.testing.assert_allclose(table.value_at(elems, xi), expected, atol=1e-12)
    np.testing.assert_allclose(table.deriv_at(elems, xi), 3.0, atol=1e-11)


def test_residual_table_needs_two_samples(circle_mesh):
    with pytest.raises(DomainError, match="too_few_samples"):
        ResidualTable.from_values(circle_mesh, 1, np.zeros(circle_mesh.n_elements))


def test_exact_solution_has_vanishing_residual(circle_mesh):
    _, density, problem = _solve_on(circle_mesh)
    table = residual_samples(density, problem, circle_mesh, 6)
    assert np.abs(table.values).max() <= 1e-7
    assert table.value_l2_sq().sum() <= 1e-12


def test_residual_derivative_takes_exact_data_derivative(slit_curve, fast_quad):
    mesh = initial_mesh(slit_curve, 1, 4)
    _, density, problem = _solve_on(mesh, "harmonic", fast_quad)
    exact = residual_samples(density, problem, mesh, 6, fast_quad)
    interpolated = residual_samples(density, replace(problem, f_deriv=None), mesh, 6, fast_quad)
    np.testing.assert_array_equal(exact.values, interpolated.values)
    # f = t² on the slit, reproduced by the degree-5 interpolant
    np.testing.assert_allclose(exact.derivs, interpolated.derivs, atol=1e-8)
    shifted = replace(problem, f_deriv=lambda x, t, tangent: np.full(x.shape[0], 5.0))
    moved = residual_samples(density, shifted, mesh, 6, fast_quad)
    np.testing.assert_allclose(moved.derivs - exact.derivs, 5.0 - 2.0 * exact.params, atol=1e-8)


def test_residual_mesh_mismatch(circle_mesh):
    _, density, problem = _solve_on(circle_mesh)
    other = initial_mesh(circle(), 0, 6)
    with pytest.raises(DomainError, match="mesh_mismatch"):
        residual_samples(density, problem, other, 4)


def test_quad_config_defaults_follow_environment(monkeypatch):
    monkeypatch.setenv("IGABEM_QUAD_N", "7")
    monkeypatch.setenv("IGABEM_RESIDUAL_K", "5")
    cfg = QuadConfig()
    assert cfg.quad_n == 7
    assert cfg.residual_k == 5
