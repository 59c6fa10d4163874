"""Conforming piecewise-linear finite element spaces on tree mesh views.

Hanging points left by one-level local refinement are resolved with the
twin-tetrahedron / four-tetrahedron macro elements: a leaf with one hanging
edge midpoint is split into two sub-tetrahedra through that midpoint, a leaf
with one fully refined face is split into four sub-tetrahedra coned over the
face's sub-triangles.  The midpoints become regular interpolation points
whose basis support is limited to the sub-tetrahedra that contain them, while
the points shared by all sub-tetrahedra keep support over the whole macro
element.  The resulting space is globally continuous.

Spaces and fields are immutable after construction; all queries are safe
under shared concurrent reads.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import hgt
from .errors import ContractViolation, OutOfDomainError

__all__ = [
    "Quadrature", "tet_quadrature", "FESpace", "build_space", "Field",
    "evaluate", "interpolate", "transfer_after_adapt", "integrate_cross",
    "Transfer", "write_field_vtk",
]


@dataclass(frozen=True)
class Quadrature:
    """Symmetric quadrature rule on the reference tetrahedron.

    `points` are barycentric coordinates (nq, 4); `weights` are positive and
    sum to one (integrals are weighted by the cell volume).
    """

    order: int
    points: np.ndarray
    weights: np.ndarray


def _perm_orbit(vals):
    seen = []
    from itertools import permutations
    for p in permutations(vals):
        if p not in seen:
            seen.append(p)
    return seen


def tet_quadrature(order: int) -> Quadrature:
    """Rules of polynomial exactness degree 1, 2 and 4 (the latter is the
    14-point degree-5 rule with positive weights)."""
    if order <= 1:
        pts = np.array([[0.25, 0.25, 0.25, 0.25]])
        w = np.array([1.0])
        return Quadrature(1, pts, w)
    if order == 2:
        a = 0.5854101966249685
        b = 0.1381966011250105
        pts = np.array(_perm_orbit((a, b, b, b)))
        w = np.full(4, 0.25)
        return Quadrature(2, pts, w)
    if order <= 5:
        a1, w1 = 0.3108859192633005, 0.1126879257180162
        a2, w2 = 0.0927352503108912, 0.0734930431163619
        c, w3 = 0.0455037041256496, 0.0425460207770812
        pts = []
        wts = []
        for a, w in ((a1, w1), (a2, w2)):
            orbit = _perm_orbit((1.0 - 3 * a, a, a, a))
            pts.extend(orbit)
            wts.extend([w] * len(orbit))
        orbit = _perm_orbit((0.5 - c, 0.5 - c, c, c))
        pts.extend(orbit)
        wts.extend([w3] * len(orbit))
        pts = np.array(pts)
        w = np.array(wts)
        return Quadrature(min(order, 5), pts, w / w.sum())
    raise ContractViolation(f"no tetrahedral rule of order {order}")


def _orient_sub(tree, verts):
    if tree._det3(verts) < 0:
        return (verts[0], verts[1], verts[3], verts[2])
    return tuple(verts)


class FESpace:
    """Continuous piecewise-linear space over a :class:`hgt.MeshView`.

    One degree of freedom per mesh vertex used by the view's leaves; each
    basis function is 1 at its vertex and 0 at all others, linear on every
    sub-element of the macro decomposition (so the basis sums to one
    everywhere).
    """

    def __init__(self, mesh: hgt.MeshView):
        tree = mesh.tree
        if tree.dim != 3:
            raise ContractViolation("finite element spaces require a 3-D tree")
        self.mesh = mesh
        self.tree = tree
        self.generation = mesh.generation

        vids = mesh.vertex_ids()
        self.dof_vertex_ids = np.asarray(vids, dtype=np.int64)
        self.dof_index = {v: i for i, v in enumerate(vids)}
        self.n_dofs = len(vids)
        all_xyz = tree.vertex_array()
        self.dof_points = all_xyz[self.dof_vertex_ids]

        sub_vert_ids = []
        owner = []
        self.macro_elements = []
        incidence = mesh._incidence
        leaf_pos = mesh.leaf_index()
        n_leaves = len(mesh.leaves)
        leaf_subs: list = [[] for _ in range(n_leaves)]

        for nid in mesh.leaves:
            kind, data = tree.leaf_admissibility(nid, incidence)
            v = tree.node_vertices(nid)
            if kind is None:
                raise ContractViolation(
                    f"mesh is not balanced/admissible at leaf {nid}")
            if kind == "plain":
                subs = [v]
            elif kind == "twin":
                m, (i, j) = data
                rest = [v[k] for k in range(4) if k not in (i, j)]
                subs = [(m, v[i], rest[0], rest[1]),
                        (m, v[j], rest[0], rest[1])]
                self.macro_elements.append(
                    (nid, "twin", (v[i], v[j], rest[0], rest[1], m)))
            else:  # four
                apex_l, face_l, mids = data
                A = v[apex_l]
                fi, fj, fk = (v[i] for i in face_l)

                def mid_of(a, b):
                    key = (a, b) if a < b else (b, a)
                    return mids[key]

                mij = mid_of(face_l[0], face_l[1])
                mjk = mid_of(face_l[1], face_l[2])
                mik = mid_of(face_l[0], face_l[2])
                subs = [(A, fi, mij, mik), (A, fj, mjk, mij),
                        (A, fk, mik, mjk), (A, mij, mjk, mik)]
                self.macro_elements.append(
                    (nid, "four", (A, fi, fj, fk, mij, mjk, mik)))
            pos = leaf_pos[nid]
            for s in subs:
                leaf_subs[pos].append(len(sub_vert_ids))
                sub_vert_ids.append(_orient_sub(tree, s))
                owner.append(pos)

        sub_vert_ids = np.asarray(sub_vert_ids, dtype=np.int64)
        self.n_elems = len(sub_vert_ids)
        self.elem_dofs = np.vectorize(self.dof_index.__getitem__,
                                      otypes=[np.int64])(sub_vert_ids)
        self.elem_coords = all_xyz[sub_vert_ids]          # (ne, 4, 3)
        self.owner_leaf = np.asarray(owner, dtype=np.int64)

        e = self.elem_coords
        B = np.concatenate([np.ones((self.n_elems, 4, 1)), e], axis=2)
        det = np.linalg.det(B)
        self.elem_vols = np.abs(det) / 6.0
        # bary(x) = T @ (1, x, y, z); rows of T give the linear basis coeffs
        self._bary_T = np.linalg.inv(np.swapaxes(B, 1, 2))
        self.elem_grads = self._bary_T[:, :, 1:]           # (ne, 4, 3)

        max_sub = max(len(s) for s in leaf_subs)
        self.leaf_sub = np.full((n_leaves, max_sub), -1, dtype=np.int64)
        for i, subs in enumerate(leaf_subs):
            self.leaf_sub[i, :len(subs)] = subs

        self._find_boundary()
        self._child_T_cache: dict = {}
        self._leaf_pos = leaf_pos

    # -- construction helpers ------------------------------------------------

    def _find_boundary(self):
        faces: dict = {}
        dofs = self.elem_dofs
        for tri in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
            f = np.sort(dofs[:, tri], axis=1)
            for row in f:
                key = (row[0], row[1], row[2])
                faces[key] = faces.get(key, 0) + 1
        bset = set()
        for key, cnt in faces.items():
            if cnt == 1:
                bset.update(key)
            elif cnt > 2:
                raise ContractViolation("non-conforming face detected")
        self.boundary_dofs = np.asarray(sorted(bset), dtype=np.int64)
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.boundary_dofs] = False
        self.free_dofs = np.nonzero(mask)[0]

    # -- geometry queries ----------------------------------------------------

    def quad_points_phys(self, quad: Quadrature):
        """Physical quadrature points (ne, nq, 3) and weights (ne, nq) whose
        row sums equal the element volumes."""
        pts = np.einsum("qi,eik->eqk", quad.points, self.elem_coords)
        w = np.outer(self.elem_vols, quad.weights)
        return pts, w

    def _bary_in_elems(self, elems, points):
        xh = np.concatenate([np.ones((len(points), 1)), points], axis=1)
        return np.einsum("nij,nj->ni", self._bary_T[elems], xh)

    def locate_in_leaves(self, points, leaf_positions):
        """Sub-element index and barycentric coordinates for points whose
        containing leaf (position in preorder) is already known."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        cand = self.leaf_sub[leaf_positions]               # (n, ms)
        n, ms = cand.shape
        safe = np.where(cand >= 0, cand, 0)
        xh = np.concatenate([np.ones((n, 1)), points], axis=1)
        bary = np.einsum("nmij,nj->nmi", self._bary_T[safe], xh)
        score = bary.min(axis=2)
        score[cand < 0] = -np.inf
        best = score.argmax(axis=1)
        idx = np.arange(n)
        return safe[idx, best], bary[idx, best]

    def _root_lookup(self, points):
        tree = self.tree
        L, m = tree.half_width, tree.n_cells
        h = 2.0 * L / m
        ijk = np.floor((points + L) / h).astype(np.int64)
        out_of_box = ((points < -L - 1e-9 * L) | (points > L + 1e-9 * L)).any(axis=1)
        if out_of_box.any():
            raise OutOfDomainError("point outside the computational box")
        ijk = np.clip(ijk, 0, m - 1)
        cube = (ijk[:, 0] * m + ijk[:, 1]) * m + ijk[:, 2]
        return cube * 6  # id of the first of the six Kuhn roots in this cube

    def locate(self, points):
        """Containing sub-element and barycentric coordinates by tree descent."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = len(points)
        tree = self.tree
        leafset = self.mesh.leafset
        node = np.empty(n, dtype=np.int64)

        first_root = self._root_lookup(points)
        # pick among the six Kuhn tets of the cube
        roots = first_root[:, None] + np.arange(6)[None, :]
        best_node = np.full(n, -1, dtype=np.int64)
        best_score = np.full(n, -np.inf)
        for t in range(6):
            cand = roots[:, t]
            T = self._node_T(cand)
            xh = np.concatenate([np.ones((n, 1)), points], axis=1)
            bary = np.einsum("nij,nj->ni", T, xh)
            score = bary.min(axis=1)
            better = score > best_score
            best_score[better] = score[better]
            best_node[better] = cand[better]
        if (best_score < -1e-9).any():
            raise OutOfDomainError("point outside the computational box")
        node = best_node

        active = np.asarray([nid not in leafset for nid in node])
        while active.any():
            idx = np.nonzero(active)[0]
            order = np.argsort(node[idx], kind="stable")
            idx = idx[order]
            nodes_sorted = node[idx]
            bounds = np.nonzero(np.diff(nodes_sorted))[0] + 1
            groups = np.split(idx, bounds)
            for grp in groups:
                nid = int(node[grp[0]])
                kids = tree.children_of(nid)
                T = self._children_T(nid, kids)
                pts = points[grp]
                xh = np.concatenate([np.ones((len(grp), 1)), pts], axis=1)
                bary = np.einsum("kij,nj->nki", T, xh)
                score = bary.min(axis=2)
                pick = score.argmax(axis=1)
                node[grp] = np.asarray(kids, dtype=np.int64)[pick]
            active = np.asarray([nid not in leafset for nid in node])

        leaf_positions = np.asarray([self._leaf_pos[int(nid)] for nid in node])
        return self.locate_in_leaves(points, leaf_positions)

    def _node_T(self, nids):
        xyz = self.tree.vertex_array()
        vv = np.asarray([self.tree.node_vertices(int(i)) for i in nids])
        B = np.concatenate([np.ones((len(nids), 4, 1)), xyz[vv]], axis=2)
        return np.linalg.inv(np.swapaxes(B, 1, 2))

    def _children_T(self, nid, kids):
        T = self._child_T_cache.get(nid)
        if T is None:
            T = self._node_T(np.asarray(kids))
            self._child_T_cache[nid] = T
        return T

    def evaluate_coeffs(self, coeffs, points):
        elems, bary = self.locate(points)
        vals = (coeffs[self.elem_dofs[elems]] * bary).sum(axis=1)
        return vals

    def mass_diag_volumes(self):
        """Per-dof share of the domain volume (row sums of the mass matrix)."""
        out = np.zeros(self.n_dofs)
        np.add.at(out, self.elem_dofs.ravel(),
                  np.repeat(self.elem_vols / 4.0, 4))
        return out


def build_space(mesh: hgt.MeshView) -> FESpace:
    """Build the conforming piecewise-linear space over a balanced view."""
    return FESpace(mesh)


@dataclass
class Field:
    """Coefficient vector (values at dof points) over a space."""

    space: FESpace
    coeffs: np.ndarray
    space_generation: int = dataclass_field(default=-1)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.n_dofs,):
            raise ContractViolation("coefficient vector has the wrong length")
        if self.space_generation < 0:
            self.space_generation = self.space.generation

    def _check_current(self):
        if self.space_generation != self.space.mesh.generation:
            raise ContractViolation("field is stale: mesh generation changed")

    def evaluate(self, points):
        """Barycentric-linear interpolation inside the containing leaf."""
        self._check_current()
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        vals = self.space.evaluate_coeffs(self.coeffs, np.atleast_2d(pts))
        return float(vals[0]) if single else vals

    def copy(self):
        return Field(self.space, self.coeffs.copy(), self.space_generation)


def evaluate(f: Field, point) -> float:
    return f.evaluate(point)


class Transfer:
    """Precomputed interpolation of a source space at fixed target points."""

    def __init__(self, source: FESpace, points, leaf_positions=None):
        self.source = source
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if leaf_positions is None:
            self.elems, self.bary = source.locate(points)
        else:
            self.elems, self.bary = source.locate_in_leaves(points, leaf_positions)
        self.dofs = source.elem_dofs[self.elems]

    def apply(self, coeffs):
        return (coeffs[self.dofs] * self.bary).sum(axis=1)


def interpolate(f: Field, target: FESpace) -> Field:
    """Evaluate `f` at every dof point of `target`.

    Exact (lossless) whenever the target mesh refines the source mesh
    everywhere; a projection for nested meshes.
    """
    if f.space.tree is not target.tree:
        raise ContractViolation("spaces live on different trees")
    if f.space is target:
        return f.copy()
    vals = f.space.evaluate_coeffs(f.coeffs, target.dof_points)
    return Field(target, vals)


def transfer_after_adapt(f: Field, new_space: FESpace) -> Field:
    """Carry a field to the space built after one adapt of its mesh.

    Values at persisting vertices are copied, values at new midpoints are
    edge averages, values on coarsened cells are evaluations of the fine
    field; all three are what ancestry-based interpolation produces.
    """
    if f.space.tree is not new_space.tree:
        raise ContractViolation("spaces live on unrelated meshes")
    return interpolate(f, new_space)


def integrate_cross(fs: Sequence, quad: Quadrature) -> float:
    """Integral over the domain of a product of fields on one tree.

    `fs` is a list of ``(field, multiplicity)``; the integrand is
    ``prod f_i(x)**m_i``.  The domain is tiled with the finest common cells
    of all participating meshes and `quad` is applied on every tile, each
    field evaluated by interpolation at the tile quadrature points.  Mesh
    mismatch therefore costs no accuracy beyond the quadrature itself:
    whenever every field is linear on every tile the result is exact.
    """
    if not fs:
        raise ContractViolation("empty field list")
    fields = [f for f, _ in fs]
    mults = [m for _, m in fs]
    tree = fields[0].space.tree
    for f in fields:
        if f.space.tree is not tree:
            raise ContractViolation("fields live on different trees")
        f._check_current()

    views = []
    view_of_field = []
    for f in fields:
        for i, v in enumerate(views):
            if v is f.space.mesh:
                view_of_field.append(i)
                break
        else:
            views.append(f.space.mesh)
            view_of_field.append(len(views) - 1)

    tiles = hgt.common_leaves(views)
    xyz = tree.vertex_array()
    tile_verts = np.asarray([tree.node_vertices(t) for t, _ in tiles])
    corners = xyz[tile_verts]                       # (nt, 4, 3)
    B = np.concatenate([np.ones((len(tiles), 4, 1)), corners], axis=2)
    vols = np.abs(np.linalg.det(B)) / 6.0
    pts = np.einsum("qi,tik->tqk", quad.points, corners)   # (nt, nq, 3)
    nt, nq, _ = pts.shape
    flat = pts.reshape(-1, 3)

    leaf_pos_per_view = []
    for i, v in enumerate(views):
        pos_map = v.leaf_index()
        pos = np.asarray([pos_map[cov[i]] for _, cov in tiles])
        leaf_pos_per_view.append(np.repeat(pos, nq))

    prod = np.ones(nt * nq)
    cache = {}
    for f, m, vi in zip(fields, mults, view_of_field):
        key = (id(f.space), vi)
        located = cache.get(key)
        if located is None:
            space = f.space
            pos = leaf_pos_per_view[vi]
            located = space.locate_in_leaves(flat, pos)
            cache[key] = located
        elems, bary = located
        vals = (f.coeffs[f.space.elem_dofs[elems]] * bary).sum(axis=1)
        prod *= vals ** m
    w = np.outer(vols, quad.weights).ravel()
    return float(np.dot(w, prod))


def write_field_vtk(f: Field, path, name="field"):
    """Export a field as VTK point data on its owning mesh."""
    hgt.write_vtk(f.space.mesh, path, point_data=f.coeffs, point_data_name=name)
