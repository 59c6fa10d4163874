"""Tests for sparse assembly and the CG solver."""

import numpy as np
import pytest
import scipy.sparse as sp

from mmdft import fespace, hgt, sparse
from mmdft.errors import ContractViolation, IndefiniteOperatorError


def mass_kernel(geo):
    base = np.full((4, 4), 1.0 / 20.0)
    np.fill_diagonal(base, 1.0 / 10.0)
    return geo.volume * base


def stiffness_kernel(geo):
    return geo.volume * (geo.grads @ geo.grads.T)


@pytest.fixture
def space():
    tree = hgt.TetTree(half_width=1.0, n_cells=1)
    view = hgt.MeshView.root_view(tree)
    view = hgt.refine(view, view.leaves[:2])
    return fespace.build_space(view)


def test_mass_matrix_single_tet():
    tree = hgt.TetTree(half_width=1.0, n_cells=1)
    space = fespace.build_space(hgt.MeshView(tree, [tree.roots[0]]))
    M = sparse.assemble(space, mass_kernel)
    V = space.elem_vols[0]
    dense = M.toarray()
    assert np.allclose(np.diag(dense), V / 10.0, atol=1e-14)
    off = dense[~np.eye(4, dtype=bool)]
    assert np.allclose(off, V / 20.0, atol=1e-14)


def test_mass_kernel_matches_quadrature():
    # the analytic V/10, V/20 entries equal order-2 quadrature of phi_i phi_j
    q = fespace.tet_quadrature(2)
    tree = hgt.TetTree(half_width=1.0, n_cells=1)
    space = fespace.build_space(hgt.MeshView(tree, [tree.roots[0]]))
    V = space.elem_vols[0]
    local = V * np.einsum("q,qi,qj->ij", q.weights, q.points, q.points)
    expect = np.full((4, 4), V / 20.0)
    np.fill_diagonal(expect, V / 10.0)
    assert np.allclose(local, expect, atol=1e-14)


def test_stiffness_row_sums_vanish(space):
    A = sparse.assemble(space, stiffness_kernel)
    rows = np.asarray(A.mat.sum(axis=1)).ravel()
    assert np.max(np.abs(rows)) <= 1e-12


def test_mass_total_is_volume(space):
    M = sparse.assemble(space, mass_kernel)
    assert M.mat.sum() == pytest.approx(8.0, rel=1e-12)


def test_assembly_order_independent(space):
    M = sparse.assemble(space, mass_kernel)
    ne = space.n_elems
    local = np.empty((ne, 4, 4))
    for e in range(ne):
        geo = sparse.ElementGeometry(e, space.elem_dofs[e],
                                     space.elem_coords[e],
                                     space.elem_vols[e], space.elem_grads[e])
        local[e] = mass_kernel(geo)
    rng = np.random.default_rng(0)
    perm = rng.permutation(ne)

    class Shuffled:
        n_dofs = space.n_dofs
        n_elems = ne
        elem_dofs = space.elem_dofs[perm]

    M2 = sparse.assemble_batch(Shuffled, local[perm])
    diff = abs(M.mat - M2.mat)
    assert diff.nnz == 0 or diff.data.max() <= 1e-13


def test_asymmetric_kernel_rejected(space):
    def bad(geo):
        m = mass_kernel(geo)
        m[0, 1] += 1e-6
        return m

    with pytest.raises(ContractViolation):
        sparse.assemble(space, bad)


def test_matvec_reproduces_columns():
    rng = np.random.default_rng(1)
    dense = rng.standard_normal((12, 12))
    dense = dense + dense.T
    A = sparse.SparseMatrix(sp.csr_matrix(dense))
    for j in range(12):
        e = np.zeros(12)
        e[j] = 1.0
        assert np.allclose(A.matvec(e), dense[:, j], atol=1e-14)


def test_cg_identity_one_iteration():
    A = sparse.SparseMatrix(sp.identity(30, format="csr"))
    b = np.arange(30, dtype=float)
    res = sparse.cg_solve(A, b, tol=1e-12)
    assert res.converged
    assert res.iterations == 1
    assert np.allclose(res.x, b, atol=1e-12)


def test_cg_poisson_matches_direct():
    n = 100
    main = np.full(n, 2.0)
    off = np.full(n - 1, -1.0)
    dense = np.diag(main) + np.diag(off, 1) + np.diag(off, -1)
    A = sparse.SparseMatrix(sp.csr_matrix(dense))
    b = np.ones(n)
    res = sparse.cg_solve(A, b, tol=1e-12, maxit=1000)
    assert res.converged
    x_direct = np.linalg.solve(dense, b)
    assert np.max(np.abs(res.x - x_direct)) <= 1e-10


def test_cg_error_norms_non_increasing():
    # the CG iterate error ||x - x_k|| decreases monotonically (the raw
    # residual 2-norm does not: this very matrix makes it jump on step one)
    n = 100
    main = np.full(n, 2.0)
    off = np.full(n - 1, -1.0)
    dense = np.diag(main) + np.diag(off, 1) + np.diag(off, -1)
    A = sparse.SparseMatrix(
        sp.diags([off, main, off], [-1, 0, 1], format="csr"))
    b = np.ones(n)
    x_true = np.linalg.solve(dense, b)
    errs = []
    for cap in range(0, 30, 3):
        res = sparse.cg_solve(A, b, tol=1e-14, maxit=cap)
        errs.append(np.linalg.norm(res.x - x_true))
    d = np.diff(errs)
    assert np.all(d <= 1e-13 * errs[0])
    # residual history is recorded per iteration
    res = sparse.cg_solve(A, b, tol=1e-12, maxit=1000)
    assert len(res.residual_norms) == res.iterations + 1
    assert res.residual_norms[-1] <= 1e-12 * np.linalg.norm(b)


def test_cg_zero_budget_returns_x0():
    A = sparse.SparseMatrix(sp.identity(5, format="csr"))
    x0 = np.full(5, 3.0)
    res = sparse.cg_solve(A, np.ones(5), x0=x0, tol=1e-12, maxit=0)
    assert not res.converged
    assert res.iterations == 0
    assert np.array_equal(res.x, x0)


def test_cg_indefinite_breakdown():
    dense = np.diag([1.0, -1.0, 2.0])
    A = sparse.SparseMatrix(sp.csr_matrix(dense), symmetric=True)
    with pytest.raises(IndefiniteOperatorError):
        sparse.cg_solve(A, np.array([0.0, 1.0, 0.0]), tol=1e-14)


def test_jacobi_preconditioned_cg(space):
    A = sparse.assemble(space, stiffness_kernel)
    # make it definite by adding the mass matrix
    M = sparse.assemble(space, mass_kernel)
    H = A.scaled_add(1.0, M)
    b = np.ones(H.n)
    plain = sparse.cg_solve(H, b, tol=1e-10, maxit=5000)
    pre = sparse.cg_solve(H, b, tol=1e-10, maxit=5000,
                          M=sparse.jacobi_preconditioner(H))
    assert plain.converged and pre.converged
    assert np.allclose(plain.x, pre.x, atol=1e-8)


def test_dirichlet_reduce_solves_lifted_system():
    rng = np.random.default_rng(2)
    n = 20
    Q = rng.standard_normal((n, n))
    dense = Q @ Q.T + n * np.eye(n)
    A = sparse.SparseMatrix(sp.csr_matrix(dense))
    boundary = np.array([0, 5, 19])
    free = np.setdiff1d(np.arange(n), boundary)
    g = np.array([1.0, -2.0, 0.5])
    b = rng.standard_normal(n)
    A_ff, rhs = sparse.dirichlet_reduce(A, b, boundary, g, free)
    res = sparse.cg_solve(A_ff, rhs, tol=1e-13, maxit=2000)
    x = np.empty(n)
    x[boundary] = g
    x[free] = res.x
    # the free rows of the full system are satisfied
    resid = dense @ x - b
    assert np.max(np.abs(resid[free])) <= 1e-9


def test_matrix_market_roundtrip(tmp_path, space):
    import scipy.io
    M = sparse.assemble(space, mass_kernel)
    path = tmp_path / "m.mtx"
    sparse.write_matrix_market(M, path)
    back = scipy.io.mmread(str(path)).tocsr()
    diff = abs(back - M.mat)
    assert diff.nnz == 0 or diff.data.max() <= 1e-12
