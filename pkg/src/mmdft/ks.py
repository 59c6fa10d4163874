"""Kohn-Sham problem assembly and observables.

Hamiltonian and overlap matrices per mesh, densities with occupation
numbers, the total energy with double-counting corrections, and the
HOMO-LUMO gap.  Assembly runs vectorized over sub-elements; contributions
accumulate commutatively so element order does not matter.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field
from typing import Optional, Sequence

import numpy as np

from . import fespace, xc
from .errors import ContractViolation
from .fespace import Field, FESpace, Quadrature, tet_quadrature
from .sparse import SparseMatrix, assemble_batch

__all__ = [
    "AtomSpec", "EigenGroup", "OccupationRule", "external_potential",
    "assemble_hamiltonian", "assemble_stiffness_half", "assemble_mass",
    "compute_density", "total_energy", "homo_lumo_gap",
    "initial_orbital_guess",
]


@dataclass(frozen=True)
class AtomSpec:
    """A nucleus: position (Bohr) and charge."""

    position: np.ndarray
    charge: float

    def __post_init__(self):
        object.__setattr__(self, "position",
                           np.asarray(self.position, dtype=float))
        if self.charge <= 0:
            raise ContractViolation("nuclear charge must be positive")


@dataclass
class EigenGroup:
    """One split group: its space, orbitals and spectral data."""

    index: int
    space: FESpace
    orbitals: list              # Fields, ascending eigenvalue order
    eigenvalues: np.ndarray     # ascending within the group
    occupations: np.ndarray     # f_l in [0, 2]; 0 for unoccupied (LUMO)

    @property
    def orbital_count(self):
        return len(self.orbitals)


@dataclass(frozen=True)
class OccupationRule:
    """Closed-shell filling: N_occ orbitals, two electrons each except for
    a single electron in the top orbital when N_ele is odd."""

    n_ele: int

    @property
    def n_occ(self):
        return self.n_ele // 2 if self.n_ele % 2 == 0 else (self.n_ele + 1) // 2

    def occupations(self):
        f = np.full(self.n_occ, 2.0)
        if self.n_ele % 2 == 1:
            f[-1] = 1.0
        return f


def external_potential(points, atoms: Sequence[AtomSpec]):
    """Coulomb attraction sum -Z_I / |R_I - r| at the given points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    v = np.zeros(len(pts))
    for atom in atoms:
        d = np.linalg.norm(pts - atom.position, axis=1)
        v -= atom.charge / d
    return v


def _guard_nuclear_points(pts, h, edge_dir, atoms):
    """Move quadrature points off nuclei (degenerate configurations only).

    A point coinciding with a nucleus is shifted by 1e-8*h along the
    element's first edge so all potential integrals stay finite.
    """
    for atom in atoms:
        d = np.linalg.norm(pts - atom.position, axis=1)
        hit = d < 1e-12
        if hit.any():
            pts = pts.copy()
            pts[hit] += (1e-8 * h[hit])[:, None] * edge_dir[hit]
    return pts


def assemble_stiffness_half(space: FESpace) -> SparseMatrix:
    """The discretized kinetic operator: entries int 1/2 grad_i . grad_j."""
    local = 0.5 * np.einsum("eik,ejk,e->eij", space.elem_grads,
                            space.elem_grads, space.elem_vols)
    return assemble_batch(space, local)


def assemble_mass(space: FESpace, quad: Optional[Quadrature] = None
                  ) -> SparseMatrix:
    if quad is None:
        quad = tet_quadrature(2)
    local = np.einsum("q,qi,qj->ij", quad.weights, quad.points, quad.points)
    local = np.einsum("ij,e->eij", local, space.elem_vols)
    return assemble_batch(space, local)


def assemble_hamiltonian(space: FESpace, atoms: Sequence[AtomSpec],
                         phi: Optional[Field], rho: Optional[Field],
                         quad: Optional[Quadrature] = None,
                         phi_values: Optional[np.ndarray] = None):
    """Hamiltonian and overlap matrices on one space.

    ``A = 1/2 stiffness + (V_ext + phi + V_xc[rho]) mass-weighted`` with the
    Hartree potential interpolated cross-mesh at the quadrature points and
    the LDA potential evaluated pointwise from `rho` (which lives on this
    space).  `phi_values` short-circuits the cross-mesh interpolation with
    precomputed values at this space's quadrature points.
    """
    if quad is None:
        quad = tet_quadrature(4)
    pts, w = space.quad_points_phys(quad)          # (ne, nq, 3), (ne, nq)
    ne, nq, _ = pts.shape
    flat = pts.reshape(-1, 3)

    V = np.zeros(ne * nq)
    if atoms:
        edge_dir = space.elem_coords[:, 1] - space.elem_coords[:, 0]
        edge_dir = edge_dir / np.linalg.norm(edge_dir, axis=1)[:, None]
        h = np.repeat(np.cbrt(space.elem_vols), nq)
        dirs = np.repeat(edge_dir, nq, axis=0)
        flat = _guard_nuclear_points(flat, h, dirs, atoms)
        V += external_potential(flat, atoms)
    if phi is not None:
        if phi_values is not None:
            V += phi_values
        elif phi.space is space:
            V += (phi.coeffs[space.elem_dofs][:, None, :]
                  * quad.points[None, :, :]).sum(axis=2).ravel()
        else:
            V += phi.evaluate(flat)
    if rho is not None:
        if rho.space is not space:
            raise ContractViolation("rho must live on the assembled space")
        rho_q = (rho.coeffs[space.elem_dofs][:, None, :]
                 * quad.points[None, :, :]).sum(axis=2).ravel()
        V += xc.eval_lda(rho_q).v_xc

    Vq = (w * V.reshape(ne, nq))                   # weights * V per point
    local = np.einsum("eq,qi,qj->eij", Vq, quad.points, quad.points)
    local += 0.5 * np.einsum("eik,ejk,e->eij", space.elem_grads,
                             space.elem_grads, space.elem_vols)
    A = assemble_batch(space, local)
    M = assemble_mass(space, quad)
    return A, M


def compute_density(groups: Sequence[EigenGroup], target: FESpace) -> Field:
    """Occupation-weighted density at the target dof points.

    rho(r_k) = sum_groups sum_l f_l psi_l(r_k)^2; orbitals from other meshes
    are interpolated, so the result is nonnegative by construction.
    """
    rho = np.zeros(target.n_dofs)
    for g in groups:
        for f_l, orb in zip(g.occupations, g.orbitals):
            if f_l == 0.0:
                continue
            if orb.space is target:
                vals = orb.coeffs
            else:
                vals = fespace.interpolate(orb, target).coeffs
            rho += f_l * vals * vals
    return Field(target, rho)


def total_energy(groups: Sequence[EigenGroup], phi: Optional[Field],
                 rho_H: Optional[Field],
                 quad: Optional[Quadrature] = None,
                 include_hartree: bool = True,
                 include_xc: bool = True) -> float:
    """Total energy from the eigenvalue sum with double-counting corrections.

    E = sum_l f_l eps_l - E_Har + int rho (e_xc - v_xc), the Hartree energy
    evaluated orbital-wise by cross-mesh integration of phi psi_l^2 and the
    xc correction on the Hartree-mesh density.
    """
    if quad is None:
        quad = tet_quadrature(4)
    e_band = 0.0
    for g in groups:
        e_band += float(np.dot(g.occupations, g.eigenvalues[:len(g.occupations)]))
    e = e_band
    if include_hartree and phi is not None:
        e_har = 0.0
        for g in groups:
            for f_l, orb in zip(g.occupations, g.orbitals):
                if f_l == 0.0:
                    continue
                e_har += 0.5 * f_l * fespace.integrate_cross(
                    [(phi, 1), (orb, 2)], quad)
        e -= e_har
    if include_xc and rho_H is not None:
        space = rho_H.space
        pts, w = space.quad_points_phys(quad)
        rho_q = (rho_H.coeffs[space.elem_dofs][:, None, :]
                 * quad.points[None, :, :]).sum(axis=2)
        ev = xc.eval_lda(rho_q.ravel())
        corr = np.dot(w.ravel(), rho_q.ravel() * (ev.e_xc - ev.v_xc))
        e += float(corr)
    return float(e)


def homo_lumo_gap(eigenvalues, n_occ: int) -> float:
    """eps_LUMO - eps_HOMO from an ascending eigenvalue list."""
    ev = np.asarray(eigenvalues, dtype=float)
    if len(ev) < n_occ + 1:
        raise ContractViolation(
            f"need at least {n_occ + 1} eigenvalues, got {len(ev)}")
    return float(ev[n_occ] - ev[n_occ - 1])


def initial_orbital_guess(space: FESpace, atoms: Sequence[AtomSpec],
                          n_orbitals: int,
                          rng: Optional[np.random.Generator] = None,
                          random_fallback: bool = False) -> np.ndarray:
    """Atom-centered exponential starting block (n_dofs, n_orbitals).

    Column l sums exp(-Z_I |r - R_I| / n_shell) over atoms with a cycling
    polynomial modulation so the columns are independent; boundary rows are
    zeroed.  With `random_fallback` the block is seeded randomness instead.
    """
    pts = space.dof_points
    if rng is None:
        rng = np.random.default_rng(0)
    if random_fallback:
        X = rng.standard_normal((space.n_dofs, n_orbitals))
    else:
        mods = (lambda d: np.ones(len(d)),
                lambda d: d[:, 0], lambda d: d[:, 1], lambda d: d[:, 2],
                lambda d: d[:, 0] * d[:, 1], lambda d: d[:, 0] - d[:, 2])
        X = np.zeros((space.n_dofs, n_orbitals))
        for l in range(n_orbitals):
            shell = 1 + l // len(mods)
            mod = mods[l % len(mods)]
            for atom in atoms:
                d = pts - atom.position
                r = np.linalg.norm(d, axis=1)
                X[:, l] += mod(d) * np.exp(-atom.charge * r / shell)
        norms = np.linalg.norm(X, axis=0)
        if (norms < 1e-12).any():
            X += 1e-3 * rng.standard_normal(X.shape)
    X[space.boundary_dofs, :] = 0.0
    return X
