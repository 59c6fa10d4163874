"""Symmetric sparse matrices in compressed-row form, element-wise assembly
and a preconditioned conjugate-gradient solver.

Matrices are immutable after assembly; matvecs are safe for concurrent
reads.  Assembly accumulates element contributions commutatively, so the
result does not depend on element iteration order.
"""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import ContractViolation, IndefiniteOperatorError

__all__ = [
    "SparseMatrix", "ElementGeometry", "assemble", "assemble_batch",
    "CgResult", "cg_solve", "jacobi_preconditioner", "restrict",
    "dirichlet_reduce", "write_matrix_market",
]


class SparseMatrix:
    """Compressed-row symmetric sparse operator."""

    def __init__(self, mat, symmetric: bool = True, check: bool = False):
        mat = sp.csr_matrix(mat)
        mat.sum_duplicates()
        mat.sort_indices()
        self.mat = mat
        self.symmetric = symmetric
        if check and symmetric:
            d = abs(mat - mat.T)
            scale = max(abs(mat.data).max() if mat.nnz else 0.0, 1.0)
            if d.nnz and d.data.max() > 1e-12 * scale:
                raise ContractViolation("matrix is not symmetric")

    @property
    def n(self):
        return self.mat.shape[0]

    @property
    def shape(self):
        return self.mat.shape

    @property
    def row_offsets(self):
        return self.mat.indptr

    @property
    def col_indices(self):
        return self.mat.indices

    @property
    def values(self):
        return self.mat.data

    def matvec(self, x):
        return self.mat @ x

    def __matmul__(self, x):
        if isinstance(x, SparseMatrix):
            return SparseMatrix(self.mat @ x.mat, symmetric=False)
        return self.mat @ x

    def diagonal(self):
        return self.mat.diagonal()

    def toarray(self):
        return self.mat.toarray()

    def scaled_add(self, alpha, other: "SparseMatrix", beta: float = 1.0):
        """beta*self + alpha*other as a new matrix."""
        return SparseMatrix(beta * self.mat + alpha * other.mat,
                            symmetric=self.symmetric and other.symmetric)


ElementGeometry = namedtuple(
    "ElementGeometry", ["index", "dofs", "coords", "volume", "grads"])


def assemble(space, element_kernel: Callable, symmetric_check: bool = True
             ) -> SparseMatrix:
    """Scatter per-element local matrices into the global operator.

    `element_kernel` maps an :class:`ElementGeometry` to a symmetric 4x4
    local matrix over the element's dofs; macro elements contribute through
    their sub-elements, i.e. through the constrained basis.
    """
    ne = space.n_elems
    local = np.empty((ne, 4, 4))
    for e in range(ne):
        geo = ElementGeometry(e, space.elem_dofs[e], space.elem_coords[e],
                              space.elem_vols[e], space.elem_grads[e])
        local[e] = element_kernel(geo)
    if symmetric_check:
        skew = np.abs(local - np.swapaxes(local, 1, 2)).max()
        scale = max(np.abs(local).max(), 1.0)
        if skew > 1e-12 * scale:
            raise ContractViolation("element kernel returned an asymmetric matrix")
    return assemble_batch(space, local)


def assemble_batch(space, local: np.ndarray) -> SparseMatrix:
    """Scatter a stack of local matrices (ne, 4, 4) into CSR form."""
    dofs = space.elem_dofs
    rows = np.repeat(dofs, 4, axis=1).ravel()
    cols = np.tile(dofs, (1, 4)).ravel()
    coo = sp.coo_matrix((local.ravel(), (rows, cols)),
                        shape=(space.n_dofs, space.n_dofs))
    return SparseMatrix(coo, symmetric=True)


def restrict(A: SparseMatrix, keep: np.ndarray) -> SparseMatrix:
    """Principal submatrix on the index set `keep`."""
    sub = A.mat[keep][:, keep]
    return SparseMatrix(sub, symmetric=A.symmetric)


def dirichlet_reduce(A: SparseMatrix, b: np.ndarray, boundary: np.ndarray,
                     values: np.ndarray, free: np.ndarray):
    """Row/column elimination with right-hand-side lift.

    Returns the reduced SPD system ``(A_ff, b_f - A_fb g)`` so CG applies;
    the caller scatters the solution back and re-inserts `values` on the
    boundary rows.
    """
    A_ff = restrict(A, free)
    lift = A.mat[free][:, boundary] @ values
    return A_ff, b[free] - lift


@dataclass
class CgResult:
    x: np.ndarray
    converged: bool
    iterations: int
    residual_norms: np.ndarray = field(default_factory=lambda: np.empty(0))


def jacobi_preconditioner(A: SparseMatrix):
    d = A.diagonal().copy()
    d[d == 0.0] = 1.0
    inv = 1.0 / d

    def apply(r):
        return inv * r

    return apply


def cg_solve(A: SparseMatrix, b: np.ndarray, x0: Optional[np.ndarray] = None,
             tol: float = 1e-10, maxit: Optional[int] = None,
             M: Optional[Callable] = None) -> CgResult:
    """Preconditioned conjugate gradients for SPD systems.

    Stops when ||b - A x|| <= tol * ||b|| or after `maxit` iterations
    (reported through ``converged``).  A nonpositive curvature p'Ap signals
    an indefinite operator and raises.
    """
    n = A.n
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    if maxit is None:
        maxit = 10 * n
    r = b - A.matvec(x)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        bnorm = 1.0
    norms = [np.linalg.norm(r)]
    if maxit == 0:
        return CgResult(x, bool(norms[0] <= tol * bnorm), 0, np.asarray(norms))
    z = M(r) if M is not None else r
    p = z.copy()
    rz = float(np.dot(r, z))
    it = 0
    converged = norms[0] <= tol * bnorm
    while not converged and it < maxit:
        Ap = A.matvec(p)
        pAp = float(np.dot(p, Ap))
        if pAp <= 0.0:
            raise IndefiniteOperatorError(
                f"nonpositive curvature p'Ap = {pAp:.3e} in CG")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        rn = np.linalg.norm(r)
        norms.append(rn)
        if rn <= tol * bnorm:
            converged = True
            break
        z = M(r) if M is not None else r
        rz_new = float(np.dot(r, z))
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
    return CgResult(x, converged, it, np.asarray(norms))


def write_matrix_market(A: SparseMatrix, path):
    """Matrix-market text export for debugging."""
    scipy.io.mmwrite(str(path), A.mat.tocoo())
