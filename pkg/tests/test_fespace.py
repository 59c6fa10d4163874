"""Tests for the piecewise-linear spaces, fields and cross-mesh integration."""

import math

import numpy as np
import pytest

from mmdft import fespace, hgt
from mmdft.errors import ContractViolation, OutOfDomainError


def analytic_monomial_integral(a, b, c, d):
    # int over reference tet of l1^a l2^b l3^c l4^d, volume-normalized
    num = (math.factorial(a) * math.factorial(b) * math.factorial(c)
           * math.factorial(d) * 6)
    return num / math.factorial(a + b + c + d + 3)


@pytest.mark.parametrize("order", [1, 2, 4])
def test_quadrature_exactness(order):
    q = fespace.tet_quadrature(order)
    assert np.all(q.weights > 0)
    assert q.weights.sum() == pytest.approx(1.0, abs=1e-14)
    for a in range(q.order + 1):
        for b in range(q.order + 1 - a):
            for c in range(q.order + 1 - a - b):
                d = 0
                exact = analytic_monomial_integral(a, b, c, d)
                approx = np.sum(
                    q.weights * np.prod(q.points ** [a, b, c, d], axis=1))
                assert approx == pytest.approx(exact, abs=1e-14), (a, b, c)


@pytest.fixture
def uniform_space():
    tree = hgt.TetTree(half_width=1.0, n_cells=2)
    return fespace.build_space(hgt.MeshView.root_view(tree))


@pytest.fixture
def hanging_space():
    # refine a couple of leaves so twin/four macro elements appear
    tree = hgt.TetTree(half_width=1.0, n_cells=1)
    view = hgt.MeshView.root_view(tree)
    view = hgt.refine(view, [view.leaves[0], view.leaves[4]])
    return fespace.build_space(view)


def test_uniform_space_dof_count(uniform_space):
    # no hanging points: one dof per lattice vertex, no macro elements
    assert uniform_space.n_dofs == uniform_space.mesh.n_vertices == 5 ** 3 - 98
    assert uniform_space.macro_elements == []


def test_single_root_tet_four_dofs():
    tree = hgt.TetTree(half_width=1.0, n_cells=1)
    view = hgt.MeshView(tree, [tree.roots[0]])
    space = fespace.build_space(view)
    assert space.n_dofs == 4
    assert space.n_elems == 1


def test_hanging_faces_covered_by_macro_elements(hanging_space):
    space = hanging_space
    tree = space.tree
    assert len(space.macro_elements) > 0
    kinds = {k for _, k, _ in space.macro_elements}
    assert kinds <= {"twin", "four"}
    # every coarse leaf adjacent to a refined cell is covered by a macro
    refined = {nid for nid in space.mesh.leaves if tree.level_of(nid) == 1}
    coarse = [nid for nid in space.mesh.leaves if tree.level_of(nid) == 0]
    macro_leaves = {nid for nid, _, _ in space.macro_elements}
    for nid in coarse:
        shared = any(
            len(set(tree.node_vertices(nid)) & set(tree.node_vertices(f))) >= 2
            for f in refined)
        if shared:
            assert nid in macro_leaves


def test_partition_of_unity(hanging_space):
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, size=(100, 3)) * 0.999
    ones = fespace.Field(hanging_space, np.ones(hanging_space.n_dofs))
    vals = ones.evaluate(pts)
    assert np.max(np.abs(vals - 1.0)) <= 1e-12


def test_linear_reproduced(hanging_space):
    space = hanging_space
    coeffs = space.dof_points[:, 0]  # interpolant of g(r) = x
    f = fespace.Field(space, coeffs)
    rng = np.random.default_rng(1)
    pts = rng.uniform(-1, 1, size=(50, 3)) * 0.999
    assert np.max(np.abs(f.evaluate(pts) - pts[:, 0])) <= 1e-12


def test_evaluate_outside_domain_raises(uniform_space):
    f = fespace.Field(uniform_space, np.zeros(uniform_space.n_dofs))
    with pytest.raises(OutOfDomainError):
        f.evaluate(np.array([2.5, 0.0, 0.0]))


def test_quadratic_interpolation_error_on_edges():
    # interpolating x^2 on a single element: the error at an edge midpoint is
    # (edge x-extent)^2 / 4, bounded by h^2/4 for h the longest edge
    tree = hgt.TetTree(half_width=1.0, n_cells=1)
    view = hgt.MeshView(tree, [tree.roots[0]])
    space = fespace.build_space(view)
    f = fespace.Field(space, space.dof_points[:, 0] ** 2)
    verts = space.elem_coords[0]
    h = max(np.linalg.norm(verts[i] - verts[j])
            for i in range(4) for j in range(i + 1, 4))
    worst = 0.0
    for i in range(4):
        for j in range(i + 1, 4):
            mid = 0.5 * (verts[i] + verts[j])
            err = abs(f.evaluate(mid) - mid[0] ** 2)
            exact = (verts[i, 0] - verts[j, 0]) ** 2 / 4.0
            assert err == pytest.approx(exact, abs=1e-13)
            worst = max(worst, err)
    assert worst <= h ** 2 / 4 + 1e-13


def test_conformity_across_subelement_faces(hanging_space):
    # the two linear pieces adjacent to every interior face agree at the
    # face centroid for a random conforming field
    space = hanging_space
    rng = np.random.default_rng(2)
    coeffs = rng.standard_normal(space.n_dofs)
    faces = {}
    for e in range(space.n_elems):
        for tri in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
            key = tuple(sorted(space.elem_dofs[e, list(tri)]))
            faces.setdefault(key, []).append((e, tri))
    checked = 0
    for key, owners in faces.items():
        if len(owners) != 2:
            continue
        vals = []
        for e, tri in owners:
            centroid = space.elem_coords[e, list(tri)].mean(axis=0)
            xh = np.concatenate([[1.0], centroid])
            bary = space._bary_T[e] @ xh
            vals.append(np.dot(coeffs[space.elem_dofs[e]], bary))
        assert abs(vals[0] - vals[1]) <= 1e-12
        checked += 1
    assert checked > 40


def test_interpolate_identity_and_midpoints():
    tree = hgt.TetTree(half_width=1.0, n_cells=1)
    coarse_view = hgt.MeshView(tree, [tree.roots[0]])
    coarse = fespace.build_space(coarse_view)
    rng = np.random.default_rng(3)
    f = fespace.Field(coarse, rng.standard_normal(coarse.n_dofs))

    same = fespace.interpolate(f, coarse)
    assert np.array_equal(same.coeffs, f.coeffs)

    fine_view = hgt.refine(coarse_view, coarse_view.leaves)
    fine = fespace.build_space(fine_view)
    g = fespace.interpolate(f, fine)
    # child vertices sit at edge midpoints: values are endpoint averages
    for d, vid in enumerate(fine.dof_vertex_ids):
        pe = tree.parent_edge(vid)
        if pe is None:
            src = coarse.dof_index[vid]
            assert g.coeffs[d] == pytest.approx(f.coeffs[src], abs=1e-14)
        else:
            a, b = pe
            expect = 0.5 * (f.coeffs[coarse.dof_index[a]]
                            + f.coeffs[coarse.dof_index[b]])
            assert g.coeffs[d] == pytest.approx(expect, abs=1e-13)


def test_interpolate_round_trip():
    tree = hgt.TetTree(half_width=1.0, n_cells=1)
    coarse_view = hgt.MeshView(tree, [tree.roots[0]])
    fine_view = hgt.refine(coarse_view, coarse_view.leaves)
    coarse = fespace.build_space(coarse_view)
    fine = fespace.build_space(fine_view)

    # generic fine data: fine -> coarse -> fine is lossy
    rng = np.random.default_rng(4)
    f_fine = fespace.Field(fine, rng.standard_normal(fine.n_dofs))
    back = fespace.interpolate(fespace.interpolate(f_fine, coarse), fine)
    assert not np.allclose(back.coeffs, f_fine.coeffs)

    # linear fine data survives the fine -> coarse round trip exactly
    lin = fespace.Field(fine, 2 * fine.dof_points[:, 0]
                        - fine.dof_points[:, 2] + 0.25)
    down = fespace.interpolate(lin, coarse)
    up = fespace.interpolate(down, fine)
    assert np.max(np.abs(up.coeffs - lin.coeffs)) <= 1e-12


def test_interpolate_projection_on_nested():
    tree = hgt.TetTree(half_width=1.0, n_cells=1)
    va = hgt.MeshView.root_view(tree)
    vb = hgt.refine(va, va.leaves[:2])
    sa, sb = fespace.build_space(va), fespace.build_space(vb)
    rng = np.random.default_rng(5)
    f = fespace.Field(sa, rng.standard_normal(sa.n_dofs))
    once = fespace.interpolate(f, sb)
    twice = fespace.interpolate(fespace.interpolate(once, sb), sb)
    assert np.max(np.abs(twice.coeffs - once.coeffs)) <= 1e-13


def test_integrate_cross_constants():
    tree = hgt.TetTree(half_width=1.0, n_cells=1)
    va = hgt.MeshView.root_view(tree)
    vb = hgt.refine(va, va.leaves[:3])
    sa, sb = fespace.build_space(va), fespace.build_space(vb)
    one_a = fespace.Field(sa, np.ones(sa.n_dofs))
    one_b = fespace.Field(sb, np.ones(sb.n_dofs))
    q = fespace.tet_quadrature(2)
    val = fespace.integrate_cross([(one_a, 1), (one_b, 1)], q)
    assert val == pytest.approx(8.0, rel=1e-12)


def test_integrate_cross_linear_fields_exact():
    tree = hgt.TetTree(half_width=1.0, n_cells=1)
    va = hgt.MeshView.root_view(tree)
    vb = hgt.refine(va, va.leaves[::2])
    vb = hgt.refine(vb, [n for n in vb.leaves if tree.level_of(n) == 1][:5])
    sa, sb = fespace.build_space(va), fespace.build_space(vb)
    fa = fespace.Field(sa, sa.dof_points @ [1.0, -2.0, 0.5] + 0.3)
    fb = fespace.Field(sb, sb.dof_points @ [0.25, 1.0, -1.0] - 0.1)
    q = fespace.tet_quadrature(2)
    cross = fespace.integrate_cross([(fa, 1), (fb, 1)], q)

    # oracle: interpolate both onto the common refinement and integrate there
    merged = fespace.build_space(hgt.merge_views([va, vb]))
    ga = fespace.interpolate(fa, merged)
    gb = fespace.interpolate(fb, merged)
    single = fespace.integrate_cross([(ga, 1), (gb, 1)], q)
    assert cross == pytest.approx(single, rel=1e-12)

    # exact value for globally linear polynomials
    pts, w = merged.quad_points_phys(q)
    exact = float(np.sum(w * ((pts @ [1.0, -2.0, 0.5] + 0.3)
                              * (pts @ [0.25, 1.0, -1.0] - 0.1))))
    assert cross == pytest.approx(exact, rel=1e-12)


def test_integrate_cross_symmetry_and_linearity():
    tree = hgt.TetTree(half_width=1.0, n_cells=1)
    va = hgt.MeshView.root_view(tree)
    vb = hgt.refine(va, va.leaves[:2])
    sa, sb = fespace.build_space(va), fespace.build_space(vb)
    rng = np.random.default_rng(6)
    fa = fespace.Field(sa, rng.standard_normal(sa.n_dofs))
    fb = fespace.Field(sb, rng.standard_normal(sb.n_dofs))
    q = fespace.tet_quadrature(2)
    v1 = fespace.integrate_cross([(fa, 1), (fb, 1)], q)
    v2 = fespace.integrate_cross([(fb, 1), (fa, 1)], q)
    assert v1 == pytest.approx(v2, rel=1e-13)
    fa2 = fespace.Field(sa, 2.0 * fa.coeffs)
    assert fespace.integrate_cross([(fa2, 1), (fb, 1)], q) == pytest.approx(
        2.0 * v1, rel=1e-13)
    with pytest.raises(ContractViolation):
        fespace.integrate_cross([], q)


def test_hartree_style_energy_cross_vs_merged():
    # 1/2 * int phi * psi^2 with phi and psi on different meshes matches the
    # merged-mesh evaluation; phi lives on a uniformly refined view (linear
    # on every common tile) and psi is globally linear, so both quadratures
    # integrate the same piecewise cubic exactly
    tree = hgt.TetTree(half_width=1.0, n_cells=1)
    va = hgt.MeshView.root_view(tree)
    va = hgt.refine(va, va.leaves)
    vb = hgt.MeshView.root_view(tree)
    vb = hgt.refine(vb, vb.leaves[3:5])
    sa, sb = fespace.build_space(va), fespace.build_space(vb)

    def smooth(p):
        return np.exp(-(p ** 2).sum(axis=1))

    phi = fespace.Field(sa, smooth(sa.dof_points))
    psi = fespace.Field(sb, 1.0 + 0.5 * sb.dof_points[:, 0])
    q = fespace.tet_quadrature(4)
    cross = 0.5 * fespace.integrate_cross([(phi, 1), (psi, 2)], q)

    merged = fespace.build_space(hgt.merge_views([va, vb]))
    phi_m = fespace.interpolate(phi, merged)
    psi_m = fespace.interpolate(psi, merged)
    single = 0.5 * fespace.integrate_cross([(phi_m, 1), (psi_m, 2)], q)
    assert cross == pytest.approx(single, rel=1e-12)


def test_transfer_after_adapt():
    tree = hgt.TetTree(half_width=1.0, n_cells=1)
    view = hgt.MeshView.root_view(tree)
    space = fespace.build_space(view)

    # no-op adapt keeps the coefficients
    view2 = hgt.refine(view, [])
    space2 = fespace.build_space(view2)
    rng = np.random.default_rng(7)
    f = fespace.Field(space, rng.standard_normal(space.n_dofs))
    g = fespace.transfer_after_adapt(f, space2)
    assert np.array_equal(g.coeffs, f.coeffs)

    # uniform refinement of a linear field is exact
    lin = fespace.Field(space, space.dof_points @ [1.0, 1.0, -0.5])
    view3 = hgt.refine(view, view.leaves)
    space3 = fespace.build_space(view3)
    g3 = fespace.transfer_after_adapt(lin, space3)
    assert np.max(np.abs(g3.coeffs - space3.dof_points @ [1.0, 1.0, -0.5])) <= 1e-12

    other_tree = hgt.TetTree(half_width=1.0, n_cells=1)
    other = fespace.build_space(hgt.MeshView.root_view(other_tree))
    with pytest.raises(ContractViolation):
        fespace.transfer_after_adapt(f, other)


def test_transfer_refine_coarsen_second_order():
    # refine-then-coarsen of a quadratic field loses O(h^2) in L2
    def run(n_cells):
        # a quadratic sampled on the fine mesh loses its curvature when
        # transferred to the coarse mesh; the loss is the coarse-mesh
        # interpolation error, O(h^2)
        tree = hgt.TetTree(half_width=1.0, n_cells=n_cells)
        view = hgt.MeshView.root_view(tree)
        fine_view = hgt.refine(view, view.leaves)
        fine = fespace.build_space(fine_view)
        up = fespace.Field(fine, (fine.dof_points ** 2).sum(axis=1))
        back_view, skipped = hgt.coarsen(fine_view, fine_view.leaves)
        assert skipped == []
        back = fespace.build_space(back_view)
        down = fespace.transfer_after_adapt(up, back)
        again = fespace.interpolate(down, fine)
        q = fespace.tet_quadrature(2)
        diff = fespace.Field(fine, again.coeffs - up.coeffs)
        return math.sqrt(fespace.integrate_cross([(diff, 2)], q))

    e1 = run(1)
    e2 = run(2)
    order = math.log2(e1 / e2)
    assert 1.6 <= order <= 2.4


def test_field_vtk_export(tmp_path):
    tree = hgt.TetTree(half_width=1.0, n_cells=1)
    space = fespace.build_space(hgt.MeshView.root_view(tree))
    f = fespace.Field(space, space.dof_points[:, 1])
    out = tmp_path / "f.vtk"
    fespace.write_field_vtk(f, out, name="y")
    text = out.read_text()
    assert "POINT_DATA" in text and "SCALARS y double 1" in text
