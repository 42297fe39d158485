"""Knot meshes: construction, patches, refinement, overlay and h̃."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from igabem.discretization.geometry import circle, pacman, slit
from igabem.discretization.mesh import (
    KnotMesh,
    default_q1,
    initial_mesh,
    mesh_ratio,
    node_patch_length,
    overlay,
    patch,
    patch_nodes,
    refine,
    refined_elements,
    tilde_h,
    uniform_marks,
)
from igabem.discretization.splines import knot_difference
from igabem.errors import ConfigurationError, DomainError, ResolutionError


def _mesh_on(curve, nodes, p=0, mults=None):
    m = [p + 1] + [1] * (len(nodes) - 2) + [p + 1] if mults is None else mults
    return KnotMesh(curve, p, np.asarray(nodes, dtype=float), np.asarray(m), np.ones(sum(m) - p - 1), 1.0)


def _random_chain(mesh, seed, steps, mode="hk"):
    rng = np.random.default_rng(seed)
    chain = [mesh]
    for _ in range(steps):
        nodes = list(mesh.node_indices())
        k = int(rng.integers(1, min(3, len(nodes)) + 1))
        marks = rng.choice(nodes, size=k, replace=False).tolist()
        mesh, _ = refine(mesh, marks, mode=mode)
        chain.append(mesh)
    return chain


# ── construction ──


def test_initial_mesh_slit_p1():
    mesh = initial_mesh(slit(), 1, 2)
    np.testing.assert_allclose(mesh.node_params, [-0.49, 0.0, 0.49], atol=1e-15)
    assert mesh.mults.tolist() == [2, 1, 2]
    assert mesh.dim == 3
    assert mesh.knot_count == 5
    assert mesh.kappa0 == pytest.approx(1.0)


def test_initial_mesh_closed_counts():
    mesh = initial_mesh(circle(), 2, 4)
    assert mesh.n_elements == 4
    assert mesh.mults.tolist() == [3, 1, 1, 1, 3]
    assert mesh.knot_count == 6
    assert list(mesh.node_indices()) == [1, 2, 3, 4]


def test_initial_mesh_square_breaks_get_full_multiplicity():
    from igabem.discretization.geometry import square

    mesh = initial_mesh(square(), 1, 4)
    np.testing.assert_allclose(mesh.node_params, [0.0, 0.4, 0.8, 1.2, 1.6], atol=1e-14)
    assert mesh.mults.tolist() == [2, 2, 2, 2, 2]
    assert mesh.dim == 8


def test_initial_mesh_rejects_bad_input():
    with pytest.raises(ConfigurationError, match="invalid_initial_size"):
        initial_mesh(circle(), 0, 3)
    with pytest.raises(ConfigurationError, match="weight_count_mismatch"):
        initial_mesh(slit(), 1, 2, weights=[1.0, 1.0])
    with pytest.raises(ConfigurationError, match="invalid_degree"):
        initial_mesh(slit(), -1, 2)


def test_malformed_mesh_rejected(make_segment):
    with pytest.raises(DomainError, match="malformed_mesh"):
        _mesh_on(make_segment(), [0.0, 0.6, 0.4, 1.0])
    with pytest.raises(DomainError, match="multiplicity_out_of_range"):
        _mesh_on(make_segment(), [0.0, 0.5, 1.0], p=1, mults=[2, 3, 2])


# ── mesh quantities ──


def test_mesh_ratio_examples(make_segment):
    assert mesh_ratio(_mesh_on(make_segment(0.0, 0.7), [0.0, 0.1, 0.3, 0.7])) == pytest.approx(2.0)
    assert mesh_ratio(_mesh_on(make_segment(0.0, 0.6), [0.0, 0.1, 0.5, 0.6])) == pytest.approx(4.0)
    assert mesh_ratio(_mesh_on(make_segment(), [0.0, 0.25, 0.5, 0.75, 1.0])) == pytest.approx(1.0)
    assert mesh_ratio(_mesh_on(make_segment(), [0.0, 1.0])) == 1.0


def test_closed_mesh_ratio_wraps():
    curve = circle()
    L = 2 * np.pi
    mesh = _mesh_on(curve, [0.0, 0.1 * L, 0.5 * L, 0.9 * L, L])
    # wrap pair: last element (0.1 L) against first (0.1 L), inner pairs 4
    assert mesh_ratio(mesh) == pytest.approx(4.0)


def test_closed_patches(circle_mesh):
    assert circle_mesh.node_elements(0) == (0, 3)
    assert circle_mesh.element_nodes(0) == (4, 1)
    assert patch(circle_mesh, [0], 1) == {3, 0, 1}
    assert patch(circle_mesh, [0], 2) == {0, 1, 2, 3}
    assert patch(circle_mesh, [4], kind="node") == {0, 3}
    assert patch(circle_mesh, [2], 0) == {2}
    assert patch_nodes(circle_mesh, [0]) == {4, 1}


def test_open_patches():
    mesh = initial_mesh(slit(), 0, 4)
    assert mesh.node_elements(0) == (0,)
    assert mesh.node_elements(4) == (3,)
    assert patch(mesh, [0], 1) == {0, 1}
    assert node_patch_length(mesh, 2) == pytest.approx(0.49)


def test_patch_errors(circle_mesh):
    with pytest.raises(DomainError, match="element_out_of_range"):
        patch(circle_mesh, [7])
    with pytest.raises(DomainError, match="negative_patch_order"):
        patch(circle_mesh, [0], -1)
    with pytest.raises(DomainError, match="node_out_of_range"):
        circle_mesh.node_elements(9)


def test_tilde_h_interior_formula():
    mesh = initial_mesh(slit(0.5), 1, 6)
    s = 1.0 / 6.0
    assert tilde_h(mesh, 0.5)[2] == pytest.approx(3 * s * 0.5**4)


def test_tilde_h_multiplicity_increase_contracts():
    mesh = initial_mesh(slit(0.5), 1, 6)
    raised, _ = refine(mesh, [2])
    assert raised.n_elements == mesh.n_elements
    assert tilde_h(raised, 0.5)[2] == pytest.approx(0.5 * tilde_h(mesh, 0.5)[2])


def test_tilde_h_default_and_bounds():
    mesh = initial_mesh(pacman(), 1, 8)
    q = default_q1(1, 2 * mesh.kappa0)
    assert 0.0 < q < 1.0
    np.testing.assert_allclose(tilde_h(mesh), tilde_h(mesh, q))
    ht = tilde_h(mesh)
    assert np.all(ht > 0)
    assert np.all(ht <= (1 + 2 * mesh_ratio(mesh)) * mesh.hcheck * (1 + 1e-12))
    with pytest.raises(DomainError, match="invalid_q1"):
        tilde_h(mesh, 1.0)


# ── refinement ──


def test_refine_bisects_element_with_two_marked_nodes():
    mesh = initial_mesh(slit(), 1, 2)
    fine, _ = refine(mesh, [0, 1])
    # closure is strict on the sizes before bisection: [0, 0.49] has ȟ equal to
    # its marked neighbour, so it stays and the result has κ̌ = 2 = 2κ̌₀
    np.testing.assert_allclose(fine.node_params, [-0.49, -0.245, 0.0, 0.49], atol=1e-15)
    assert mesh_ratio(fine) == 2.0 * mesh.kappa0
    assert fine.mults.tolist() == [2, 1, 1, 2]
    assert refined_elements(mesh, fine) == {0}


def test_refine_raises_multiplicity_then_bisects():
    mesh = initial_mesh(slit(), 1, 2)
    once, _ = refine(mesh, [1])
    assert once.mults.tolist() == [2, 2, 2]
    assert once.n_elements == 2
    assert once.knot_count == 6
    twice, _ = refine(once, [1])
    assert twice.n_elements == 4
    assert twice.mults.tolist() == [2, 1, 2, 1, 2]


def test_refine_h_mode_never_raises_multiplicity():
    mesh = initial_mesh(slit(), 1, 2)
    fine, _ = refine(mesh, [1], mode="h")
    assert fine.mults.max() == 2
    assert fine.mults.tolist() == [2, 1, 1, 1, 2]
    assert fine.n_elements == 4


def test_refine_empty_marks_is_identity():
    mesh = initial_mesh(slit(), 1, 2)
    same, coeffs = refine(mesh, [], [1.0, 2.0, 3.0])
    assert same is mesh
    np.testing.assert_allclose(coeffs, [1.0, 2.0, 3.0])


def test_refine_invalid_mode():
    with pytest.raises(ConfigurationError, match="invalid_refinement_mode"):
        refine(initial_mesh(slit(), 0, 2), [1], mode="p")  # type: ignore[arg-type]


def test_refine_closure_respects_initial_ratio(make_segment):
    mesh = _mesh_on(make_segment(), [0.0, 0.5, 0.75, 1.0])
    # κ̌₀ pinned to 1: the longer left neighbour of element 1 must follow
    fine, _ = refine(mesh, [1, 2], mode="h")
    assert refined_elements(mesh, fine) == {0, 1}
    np.testing.assert_allclose(fine.hcheck, [0.25, 0.25, 0.125, 0.125, 0.25])


def test_uniform_marks_bisect_everything(circle_mesh):
    fine, _ = refine(circle_mesh, uniform_marks(circle_mesh), mode="h")
    assert fine.n_elements == 2 * circle_mesh.n_elements
    np.testing.assert_allclose(fine.hcheck, np.pi / 4)


def test_refine_transports_coefficients():
    mesh = initial_mesh(pacman(), 2, 5)
    coeffs = np.linspace(-1.0, 2.0, mesh.dim)
    fine, new_coeffs = refine(mesh, [1, 3, 4], coeffs)
    t = np.linspace(*mesh.curve.param_interval, 57)
    np.testing.assert_allclose(fine.space.evaluate(new_coeffs, t), mesh.space.evaluate(coeffs, t), atol=1e-12)


def test_overlay_examples(make_segment):
    a = initial_mesh(make_segment(), 1, 2)
    b, _ = refine(a, [1])
    both = overlay(a, b)
    assert both.mults.tolist() == [2, 2, 2]
    assert both.knot_count == 6 <= a.knot_count + b.knot_count - a.root_knot_count

    same = overlay(b, b)
    np.testing.assert_array_equal(same.node_params, b.node_params)
    np.testing.assert_array_equal(same.mults, b.mults)

    left, _ = refine(a, [0], mode="h")
    right, _ = refine(a, [2], mode="h")
    np.testing.assert_allclose(overlay(left, right).node_params, [0.0, 0.25, 0.5, 0.75, 1.0])


def test_overlay_rejects_other_ancestry():
    with pytest.raises(DomainError, match="incompatible_meshes"):
        overlay(initial_mesh(slit(), 1, 2), initial_mesh(slit(), 1, 4))


# ── refinement axioms on random chains ──


@settings(max_examples=15, deadline=None)
@given(
    st.sampled_from(["slit", "pacman", "circle"]),
    st.integers(0, 2),
    st.sampled_from(["hk", "h"]),
    st.integers(0, 2**31 - 1),
)
def test_random_chains_keep_mesh_axioms(name, p, mode, seed):
    curve = {"slit": slit, "pacman": pacman, "circle": circle}[name]()
    start = initial_mesh(curve, p, 4)
    chain = _random_chain(start, seed, 12, mode)
    for before, after in zip(chain[:-1], chain[1:]):
        assert mesh_ratio(after) <= 2 * start.kappa0
        extra = knot_difference(before.knots, after.knots)
        assert extra.size == after.knot_count - before.knot_count
        assert after.knot_count > before.knot_count
        assert len(refined_elements(before, after)) <= 2 * (after.knot_count - before.knot_count)
        assert after.mults.max() <= p + 1
        if mode == "h":
            assert set(np.unique(after.mults[1:-1]).tolist()) <= {1, p + 1}


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["slit", "pacman"]), st.integers(0, 2), st.integers(0, 2**31 - 1), st.integers(0, 2**31 - 1))
def test_overlay_knot_bound_on_random_pairs(name, p, seed_a, seed_b):
    curve = slit() if name == "slit" else pacman()
    start = initial_mesh(curve, p, 4)
    a = _random_chain(start, seed_a, 6)[-1]
    b = _random_chain(start, seed_b, 6)[-1]
    both = overlay(a, b)
    assert both.knot_count <= a.knot_count + b.knot_count - start.knot_count
    knot_difference(a.knots, both.knots)
    knot_difference(b.knots, both.knots)
    np.testing.assert_allclose(both.hcheck, both.widths, rtol=1e-9)


# ── modified mesh size along random chains ──


def _parents(coarse, fine):
    mids = 0.5 * (fine.node_params[:-1] + fine.node_params[1:])
    return np.searchsorted(coarse.node_params, mids) - 1


def _equivalence_constant(mesh):
    """C with C⁻¹ ȟ ≤ h̃ ≤ C ȟ for every mesh refined from ``mesh``."""
    kappa = 2.0 * mesh.kappa0
    return max(1.0 + 2.0 * kappa, default_q1(mesh.p, kappa) ** (-4 * (mesh.p + 1)))


@settings(max_examples=25, deadline=None)
@given(
    st.sampled_from(["slit", "pacman"]),
    st.integers(0, 2),
    st.sampled_from(["hk", "h"]),
    st.integers(0, 2**31 - 1),
)
def test_tilde_h_is_monotone_and_contracts_on_children(name, p, mode, seed):
    curve = slit() if name == "slit" else pacman()
    start = initial_mesh(curve, p, 4)
    q1 = default_q1(p, 2.0 * start.kappa0)
    c_wt = _equivalence_constant(start)
    chain = _random_chain(start, seed, 10, mode)
    for before, after in zip(chain[:-1], chain[1:]):
        coarse, fine = tilde_h(before), tilde_h(after)
        parent = _parents(before, after)
        assert np.all(fine <= coarse[parent] * (1 + 1e-12))
        children = np.isin(parent, sorted(refined_elements(before, after)))
        assert np.all(fine[children] <= q1 * coarse[parent[children]] * (1 + 1e-12))
        ratio = fine / after.hcheck
        assert np.all(ratio >= 1.0 / c_wt)
        assert np.all(ratio <= c_wt)


# ── resolution limit ──


def test_endpoint_chain_stops_before_nodes_collide():
    mesh = initial_mesh(slit(), 1, 2)
    steps = 0
    with pytest.raises(ResolutionError, match="node_collision"):
        while steps < 200:
            mesh, _ = refine(mesh, [0], mode="h")
            steps += 1
            assert mesh.hcheck[0] == 0.49 * 0.5**steps
            assert mesh_ratio(mesh) <= 2.0 * mesh.kappa0
            assert np.all(np.diff(mesh.node_params) > 0)
    assert 40 <= steps < 200


def test_hcheck_stays_dyadic_where_parameters_round():
    mesh = initial_mesh(pacman(), 2, 7)
    roots = dict(zip(mesh.node_params[:-1].tolist(), mesh.hcheck.tolist()))
    for _ in range(8):
        mesh, _ = refine(mesh, uniform_marks(mesh)[:3], mode="h")
    for size in mesh.hcheck:
        exponents = [np.log2(root / size) for root in roots.values()]
        assert any(e == round(e) for e in exponents)
    np.testing.assert_allclose(mesh.hcheck, mesh.widths, rtol=1e-9)
