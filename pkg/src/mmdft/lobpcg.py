"""Block LOBPCG for the generalized symmetric eigenproblem A x = lambda B x.

The solver targets the smallest eigenpairs, locks converged Ritz pairs
strictly in index order (soft-locking: locked columns stay in the
Rayleigh-Ritz basis but leave the residual and direction blocks), and
supports a prefix of externally supplied converged eigenvectors.  Prefix
columns are exempt from convergence checks, never modified and returned
bit-identical; the computed columns converge to the eigenpairs directly
above the prefix.

The per-column preconditioner is the shifted kinetic operator
``T_l = L_half - lambda_l * B`` for negative Ritz values (identity
otherwise), applied approximately by a fixed number of Jacobi-CG steps;
there is no need to solve these systems accurately.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import ContractViolation, IndefiniteOperatorError
from .sparse import SparseMatrix, cg_solve, jacobi_preconditioner

__all__ = [
    "EigenRequest", "EigenResult", "solve", "rayleigh_ritz",
    "build_preconditioner", "b_orthonormalize",
]


@dataclass
class EigenRequest:
    A: SparseMatrix
    B: SparseMatrix
    X0: np.ndarray
    n_prefix_locked: int = 0
    tol: float = 1e-7
    maxit: int = 200
    preconditioner: Optional[Callable] = None   # (R, lambdas) -> W
    rng: Optional[np.random.Generator] = None
    history_csv: Optional[str] = None           # debug dump of residuals


@dataclass
class EigenResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    converged: np.ndarray
    iterations: int
    residual_history: list = field(default_factory=list)
    restarts: int = 0


def b_orthonormalize(V, B: SparseMatrix, drop_tol: float = 1e-12):
    """B-orthonormalize the columns of V, dropping dependent directions.

    Returns (Q, n_kept) with Q^T B Q = I on the kept columns.  Well
    conditioned blocks go through Cholesky (already-orthonormal input is
    returned essentially unchanged); rank-deficient ones fall back to a
    pivoted spectral decomposition that drops dependent columns.
    """
    if V.shape[1] == 0:
        return V, 0
    BV = B.matvec(V)
    G = V.T @ BV
    G = 0.5 * (G + G.T)
    try:
        L = np.linalg.cholesky(G)
        d = np.diag(L) ** 2
        if d.min() > drop_tol * d.max():
            Q = scipy.linalg.solve_triangular(L, V.T, lower=True).T
            return Q, Q.shape[1]
    except np.linalg.LinAlgError:
        pass
    w, U = np.linalg.eigh(G)
    keep = w > drop_tol * max(w.max(), 0.0) if w.size else np.zeros(0, bool)
    if not keep.any():
        return V[:, :0], 0
    Q = V @ (U[:, keep] / np.sqrt(w[keep]))
    return Q, int(keep.sum())


def rayleigh_ritz(S, A: SparseMatrix, B: SparseMatrix, drop_tol: float = 1e-12,
                  AS=None, BS=None):
    """Ritz pairs of the pencil (A, B) in the span of the basis S.

    Solves the dense projected problem (S^T A S) C = (S^T B S) C Lambda with
    Lambda ascending; rank-deficient bases are handled by a pivoted
    B-orthonormalization that drops dependent columns (the returned C then
    has fewer columns than S).
    """
    if AS is None:
        AS = A.matvec(S)
    if BS is None:
        BS = B.matvec(S)
    G = S.T @ BS
    G = 0.5 * (G + G.T)
    w, U = np.linalg.eigh(G)
    if w.size == 0 or w.max() <= 0.0:
        raise IndefiniteOperatorError("B is not positive definite on the basis")
    keep = w > drop_tol * w.max()
    T = U[:, keep] / np.sqrt(w[keep])            # S @ T is B-orthonormal
    H = T.T @ (S.T @ AS) @ T
    H = 0.5 * (H + H.T)
    lam, Y = np.linalg.eigh(H)
    C = T @ Y
    return C, lam


def build_preconditioner(L_half: SparseMatrix, B: SparseMatrix,
                         lambdas=None, cg_iters: int = 5):
    """Per-column shifted-kinetic preconditioner.

    ``apply(R, lambdas)`` solves ``(L_half - lambda_l B) w = r_l``
    approximately with `cg_iters` Jacobi-CG steps for every column with
    lambda_l < 0 and returns r_l unchanged otherwise.
    """
    fixed = None if lambdas is None else np.asarray(lambdas, dtype=float)

    def apply(R, lambdas=None):
        lams = fixed if lambdas is None else np.asarray(lambdas, dtype=float)
        R = np.atleast_2d(R.T).T
        W = R.copy()
        for j in range(R.shape[1]):
            lam = lams[j]
            if lam >= 0.0:
                continue
            T = L_half.scaled_add(-lam, B)
            res = cg_solve(T, R[:, j], tol=0.0, maxit=cg_iters,
                           M=jacobi_preconditioner(T))
            W[:, j] = res.x
        return W

    apply.cg_iters = cg_iters
    return apply


def _project_out(V, X, BX):
    """Remove the B-projection onto span(X) from the columns of V."""
    if X.shape[1] == 0:
        return V
    G = X.T @ BX
    rhs = BX.T @ V
    try:
        coef = np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        coef, *_ = np.linalg.lstsq(G, rhs, rcond=None)
    return V - X @ coef


def solve(req: EigenRequest) -> EigenResult:
    """Run LOBPCG with in-order soft-locking.

    Columns ``0..n_prefix_locked-1`` of X0 are treated as already-converged
    external eigenvectors: they join the trial subspace but are excluded
    from residual, preconditioning and direction blocks, and come back
    unmodified.  The remaining columns converge (in index order) to the
    smallest non-prefix eigenpairs.
    """
    A, B = req.A, req.B
    X = np.array(req.X0, dtype=float, copy=True)
    if X.ndim != 2:
        raise ContractViolation("X0 must be a block of column vectors")
    n, k = X.shape
    q = int(req.n_prefix_locked)
    if not 0 <= q < k:
        raise ContractViolation("need 0 <= n_prefix_locked < block size")
    rng = req.rng if req.rng is not None else np.random.default_rng(0)
    restarts = 0

    AX = np.empty_like(X)
    BX = np.empty_like(X)
    AX[:, :q] = A.matvec(X[:, :q]) if q else 0.0
    BX[:, :q] = B.matvec(X[:, :q]) if q else 0.0

    # B-orthonormalize the free columns against the prefix and each other
    free = _project_out(X[:, q:], X[:, :q], BX[:, :q])
    Qf, kept = b_orthonormalize(free, B)
    if kept < k - q:
        restarts += 1
        extra = rng.standard_normal((n, k - q - kept))
        extra = _project_out(extra, np.hstack([X[:, :q], Qf]),
                             B.matvec(np.hstack([X[:, :q], Qf])))
        Qe, ke = b_orthonormalize(extra, B)
        if kept + ke < k - q:
            raise ContractViolation("cannot build a full-rank starting block")
        Qf = np.hstack([Qf, Qe])
    X[:, q:] = Qf
    AX[:, q:] = A.matvec(X[:, q:])
    BX[:, q:] = B.matvec(X[:, q:])

    xbx = np.einsum("ij,ij->j", X, BX)
    lam = np.einsum("ij,ij->j", X, AX) / xbx

    locked = q
    P = np.zeros((n, 0))
    history = []
    resvec = np.full(k, np.nan)
    it = 0

    for it in range(1, req.maxit + 1):
        R = AX[:, locked:] - BX[:, locked:] * lam[locked:]
        norms = np.linalg.norm(R, axis=0) / (np.abs(lam[locked:]) + 1.0)
        resvec[locked:] = norms
        history.append(resvec.copy())
        # in-order locking: column j+1 may not lock before column j
        newly = 0
        while locked + newly < k and norms[newly] <= req.tol:
            newly += 1
        if newly:
            locked += newly
            R = R[:, newly:]
            P = P[:, newly:] if P.shape[1] > newly else P[:, :0]
        if locked == k:
            break

        act = slice(locked, k)
        W = (req.preconditioner(R, lam[act]) if req.preconditioner is not None
             else R.copy())

        # directions B-orthogonal to the current block, dependent ones dropped
        extra = np.hstack([W, P])
        extra = _project_out(extra, X, BX)
        extra, m_extra = b_orthonormalize(extra, B, drop_tol=1e-12)
        if m_extra == 0:
            restarts += 1
            extra = rng.standard_normal((n, k - locked))
            extra = _project_out(extra, X, BX)
            extra, m_extra = b_orthonormalize(extra, B)
            if m_extra == 0:
                break
        n_w = extra.shape[1]

        S = np.hstack([X, extra])
        A_extra = A.matvec(extra)
        B_extra = B.matvec(extra)
        AS = np.hstack([AX, A_extra])
        BS = np.hstack([BX, B_extra])
        C, lamS = rayleigh_ritz(S, A, B, AS=AS, BS=BS)
        if C.shape[1] < k:
            raise IndefiniteOperatorError("trial basis collapsed below block size")
        sel = slice(locked, k)
        Csel = C[:, sel]
        X[:, act] = S @ Csel
        AX[:, act] = AS @ Csel
        BX[:, act] = BS @ Csel
        lam[act] = lamS[sel]

        P = extra @ Csel[k:, :]

    converged = np.zeros(k, dtype=bool)
    converged[:locked] = True
    if req.history_csv:
        with open(req.history_csv, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["iteration"] + [f"col{j}" for j in range(k)])
            for i, row in enumerate(history):
                wr.writerow([i] + [f"{v:.6e}" for v in row])
    return EigenResult(eigenvalues=lam.copy(), eigenvectors=X,
                       converged=converged, iterations=it,
                       residual_history=history, restarts=restarts)
