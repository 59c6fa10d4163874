"""Hierarchical geometry trees: shared refinement trees of cells from which
several meshes over one domain are expressed as leaf sets.

The 3-D tree (:class:`TetTree`) is an octree of tetrahedra: refining a cell
creates eight children by midpoint octasection.  The 1-D specialization
(:class:`IntervalTree`) bisects intervals into two children.  A mesh is a
:class:`MeshView`, i.e. a set of leaves of one shared tree; several views of
the same tree coexist and cell relations between them are decided purely from
tree ancestry.

Tree mutation (creating children) happens only inside :func:`refine` /
:func:`coarsen` and is single-writer; all read-only queries are safe under
shared concurrent access between mutations.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ContractViolation

_EDGE_PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
_FACE_TRIPLES = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))

# Kuhn triangulation of the unit cube: six tetrahedra sharing the main
# diagonal (0,0,0)-(1,1,1); conforming across translated copies.
_KUHN_TETS = (
    ((0, 0, 0), (1, 0, 0), (1, 1, 0), (1, 1, 1)),
    ((0, 0, 0), (1, 0, 0), (1, 0, 1), (1, 1, 1)),
    ((0, 0, 0), (0, 1, 0), (1, 1, 0), (1, 1, 1)),
    ((0, 0, 0), (0, 1, 0), (0, 1, 1), (1, 1, 1)),
    ((0, 0, 0), (0, 0, 1), (1, 0, 1), (1, 1, 1)),
    ((0, 0, 0), (0, 0, 1), (0, 1, 1), (1, 1, 1)),
)


class Relation(enum.Enum):
    """Ancestry relation between two nodes of one tree."""

    EQUAL = "equal"
    CONTAINS = "contains"
    CONTAINED_BY = "contained_by"
    DISJOINT = "disjoint"


@dataclass(frozen=True)
class GeometryNode:
    """Read-only snapshot of one tree cell."""

    id: int
    dim: int
    vertices: tuple
    parent: Optional[int]
    children: Optional[tuple]
    level: int
    on_boundary: bool


class _TreeBase:
    """Storage and ancestry queries shared by the 3-D and 1-D trees."""

    dim = 0
    n_children = 0

    def __init__(self):
        self._verts: list = []
        self._node_verts: list = []
        self._parent: list = []
        self._children: list = []
        self._level: list = []
        self._path: list = []          # preorder sort key per node
        self._edge_mid: dict = {}      # canonical edge -> midpoint vertex id
        self._mid_edge: dict = {}      # midpoint vertex id -> canonical edge
        self.roots: list = []

    # -- vertices ----------------------------------------------------------

    def vertex(self, vid):
        return self._verts[vid]

    @property
    def n_vertices(self):
        return len(self._verts)

    def vertex_array(self):
        return np.asarray(self._verts, dtype=float)

    def _new_vertex(self, xyz):
        self._verts.append(tuple(xyz))
        return len(self._verts) - 1

    def midpoint_id(self, a, b):
        """Midpoint vertex of edge (a, b) if it was ever created, else None."""
        return self._edge_mid.get((a, b) if a < b else (b, a))

    def _get_or_make_midpoint(self, a, b):
        key = (a, b) if a < b else (b, a)
        mid = self._edge_mid.get(key)
        if mid is None:
            pa, pb = self._verts[a], self._verts[b]
            mid = self._new_vertex(tuple(0.5 * (x + y) for x, y in zip(pa, pb)))
            self._edge_mid[key] = mid
            self._mid_edge[mid] = key
        return mid

    def parent_edge(self, vid):
        """The edge whose midpoint is `vid`, or None for original vertices."""
        return self._mid_edge.get(vid)

    # -- nodes -------------------------------------------------------------

    def _new_node(self, verts, parent, path):
        self._node_verts.append(tuple(verts))
        self._parent.append(parent)
        self._children.append(None)
        self._level.append(0 if parent is None else self._level[parent] + 1)
        self._path.append(path)
        return len(self._node_verts) - 1

    @property
    def n_nodes(self):
        return len(self._node_verts)

    def node_vertices(self, nid):
        return self._node_verts[nid]

    def parent_of(self, nid):
        return self._parent[nid]

    def children_of(self, nid):
        return self._children[nid]

    def level_of(self, nid):
        return self._level[nid]

    def preorder_key(self, nid):
        return self._path[nid]

    def node(self, nid) -> GeometryNode:
        return GeometryNode(
            id=nid,
            dim=self.dim,
            vertices=self._node_verts[nid],
            parent=self._parent[nid],
            children=self._children[nid],
            level=self._level[nid],
            on_boundary=self._node_on_boundary(nid),
        )

    def relation(self, a, b) -> Relation:
        """Classify two nodes by ancestry in O(level difference)."""
        if not (0 <= a < self.n_nodes and 0 <= b < self.n_nodes):
            raise ContractViolation("node id outside this tree")
        if a == b:
            return Relation.EQUAL
        la, lb = self._level[a], self._level[b]
        x, y = a, b
        while self._level[x] > lb:
            x = self._parent[x]
        if x == b:
            return Relation.CONTAINED_BY
        while self._level[y] > la:
            y = self._parent[y]
        if y == a:
            return Relation.CONTAINS
        return Relation.DISJOINT

    def subdivide(self, nid):
        """Create the children of `nid` if absent (idempotent)."""
        raise NotImplementedError

    def volume(self, nid):
        raise NotImplementedError

    def _node_on_boundary(self, nid):
        raise NotImplementedError

    def leaf_admissibility(self, nid, incidence):
        """Classify a view leaf against the hanging-point rules.

        Returns ('plain'|'twin'|'four', data) when the leaf is admissible,
        or (None, None) when the leaf must itself be refined.
        """
        raise NotImplementedError


class TetTree(_TreeBase):
    """Octree of tetrahedra over the box [-L, L]^3.

    The box is pre-partitioned into six Kuhn tetrahedra per cube cell of an
    n x n x n coarse grid.  Refinement is midpoint octasection: the four
    corner tetrahedra are cut off and the interior octahedron is split into
    four tetrahedra along its shortest diagonal (ties broken by a fixed
    diagonal ordering), so subdivision is deterministic and reproducible.
    Node identifiers are stable across adapts; nodes are never re-keyed.
    """

    dim = 3
    n_children = 8

    def __init__(self, half_width: float, n_cells: int):
        super().__init__()
        if half_width <= 0 or n_cells < 1:
            raise ContractViolation("box half-width and cell count must be positive")
        self.half_width = float(half_width)
        self.n_cells = int(n_cells)
        h = 2.0 * self.half_width / self.n_cells
        self._h_root = h
        # lattice vertices
        vid = {}
        m = self.n_cells
        for i in range(m + 1):
            for j in range(m + 1):
                for k in range(m + 1):
                    vid[(i, j, k)] = self._new_vertex(
                        (-self.half_width + i * h,
                         -self.half_width + j * h,
                         -self.half_width + k * h))
        for i in range(m):
            for j in range(m):
                for k in range(m):
                    for tet in _KUHN_TETS:
                        verts = [vid[(i + d[0], j + d[1], k + d[2])] for d in tet]
                        verts = self._orient(verts)
                        nid = self._new_node(verts, None, (len(self.roots),))
                        self.roots.append(nid)

    # -- geometry helpers --------------------------------------------------

    def _det3(self, verts):
        p0, p1, p2, p3 = (self._verts[v] for v in verts)
        a = (p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2])
        b = (p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2])
        c = (p3[0] - p0[0], p3[1] - p0[1], p3[2] - p0[2])
        return (a[0] * (b[1] * c[2] - b[2] * c[1])
                - a[1] * (b[0] * c[2] - b[2] * c[0])
                + a[2] * (b[0] * c[1] - b[1] * c[0]))

    def _orient(self, verts):
        if self._det3(verts) < 0:
            verts = [verts[0], verts[1], verts[3], verts[2]]
        return verts

    def volume(self, nid):
        return abs(self._det3(self._node_verts[nid])) / 6.0

    def _node_on_boundary(self, nid):
        L = self.half_width
        p = np.asarray([self._verts[i] for i in self._node_verts[nid]])
        for axis in range(3):
            for s in (-L, L):
                if np.sum(np.abs(p[:, axis] - s) < 1e-12 * max(L, 1.0)) >= 3:
                    return True
        return False

    def subdivide(self, nid):
        if self._children[nid] is not None:
            return self._children[nid]
        v = self._node_verts[nid]
        mid = {}
        for (i, j) in _EDGE_PAIRS:
            mid[(i, j)] = self._get_or_make_midpoint(v[i], v[j])

        def m(i, j):
            return mid[(i, j) if i < j else (j, i)]

        children_verts = [
            (v[0], m(0, 1), m(0, 2), m(0, 3)),
            (m(0, 1), v[1], m(1, 2), m(1, 3)),
            (m(0, 2), m(1, 2), v[2], m(2, 3)),
            (m(0, 3), m(1, 3), m(2, 3), v[3]),
        ]
        # interior octahedron: three candidate diagonals, shortest wins
        diags = (((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2)))

        def dlen(d):
            a = self._verts[m(*d[0])]
            b = self._verts[m(*d[1])]
            return ((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2
                    + (a[2] - b[2]) ** 2)

        lengths = [dlen(d) for d in diags]
        pick = min(range(3), key=lambda i: (round(lengths[i] / max(lengths), 12), i))
        (e0, e1) = diags[pick]
        d0, d1 = m(*e0), m(*e1)
        ring_edges = [d for i, d in enumerate(diags) if i != pick]
        ring = [m(*ring_edges[0][0]), m(*ring_edges[1][0]),
                m(*ring_edges[0][1]), m(*ring_edges[1][1])]
        for a, b in zip(ring, ring[1:] + ring[:1]):
            children_verts.append((d0, d1, a, b))

        kids = []
        for k, cv in enumerate(children_verts):
            cv = self._orient(list(cv))
            kids.append(self._new_node(cv, nid, self._path[nid] + (k,)))
        self._children[nid] = tuple(kids)
        return self._children[nid]

    # -- admissibility -----------------------------------------------------

    def leaf_admissibility(self, nid, incidence):
        v = self._node_verts[nid]

        def used(vid):
            if vid is None:
                return False
            s = incidence.get(vid)
            return bool(s)

        hang = []
        for (i, j) in _EDGE_PAIRS:
            a, b = v[i], v[j]
            mid = self.midpoint_id(a, b)
            if mid is None or not used(mid):
                continue
            # two-level hanging on this edge: quarter points in use
            if used(self.midpoint_id(a, mid)) or used(self.midpoint_id(mid, b)):
                return None, None
            hang.append((mid, (i, j)))
        if not hang:
            return "plain", None
        if len(hang) == 1:
            return "twin", hang[0]
        if len(hang) == 3:
            locals_ = set()
            for _, (i, j) in hang:
                locals_.update((i, j))
            if len(locals_) == 3:
                apex = ({0, 1, 2, 3} - locals_).pop()
                mids = [h[0] for h in hang]
                # two-level refinement interior to the face
                for x in range(3):
                    for y in range(x + 1, 3):
                        if used(self.midpoint_id(mids[x], mids[y])):
                            return None, None
                return "four", (apex, tuple(sorted(locals_)), {h[1]: h[0] for h in hang})
        return None, None

    def _recheck_scope(self, nid, incidence):
        """Leaves whose admissibility may change after `nid` was subdivided."""
        out = set()
        v = self._node_verts[nid]

        def edge_sharers(a, b):
            sa = incidence.get(a)
            sb = incidence.get(b)
            if sa and sb:
                out.update(sa & sb)

        for (i, j) in _EDGE_PAIRS:
            a, b = v[i], v[j]
            edge_sharers(a, b)
            # coarser cells for which the new midpoint is a quarter point
            for e in (a, b):
                pe = self.parent_edge(e)
                if pe is not None:
                    edge_sharers(*pe)
            pa, pb = self.parent_edge(a), self.parent_edge(b)
            if pa is not None and pb is not None:
                tri = set(pa) | set(pb)
                if len(tri) == 3:
                    # (a, b) is an interior edge of a coarse face
                    sets = [incidence.get(x) for x in tri]
                    if all(sets):
                        s0, s1, s2 = sets
                        out.update(s0 & s1 & s2)
        return out


class IntervalTree(_TreeBase):
    """1-D specialization: a binary tree of intervals over [a, b]."""

    dim = 1
    n_children = 2

    def __init__(self, lo: float, hi: float, n_cells: int = 1):
        super().__init__()
        if hi <= lo or n_cells < 1:
            raise ContractViolation("empty interval or nonpositive cell count")
        self.lo, self.hi = float(lo), float(hi)
        xs = np.linspace(lo, hi, n_cells + 1)
        vids = [self._new_vertex((x,)) for x in xs]
        for i in range(n_cells):
            nid = self._new_node((vids[i], vids[i + 1]), None, (i,))
            self.roots.append(nid)

    def volume(self, nid):
        a, b = self._node_verts[nid]
        return abs(self._verts[b][0] - self._verts[a][0])

    def _node_on_boundary(self, nid):
        a, b = self._node_verts[nid]
        eps = 1e-12 * max(abs(self.lo), abs(self.hi), 1.0)
        return (abs(self._verts[a][0] - self.lo) < eps
                or abs(self._verts[b][0] - self.hi) < eps)

    def subdivide(self, nid):
        if self._children[nid] is not None:
            return self._children[nid]
        a, b = self._node_verts[nid]
        mid = self._get_or_make_midpoint(a, b)
        k0 = self._new_node((a, mid), nid, self._path[nid] + (0,))
        k1 = self._new_node((mid, b), nid, self._path[nid] + (1,))
        self._children[nid] = (k0, k1)
        return self._children[nid]

    def leaf_admissibility(self, nid, incidence):
        # no hanging points in 1-D; only the 2:1 level rule applies
        lvl = self._level[nid]
        for vid in self._node_verts[nid]:
            for other in incidence.get(vid, ()):
                if other != nid and self._level[other] > lvl + 1:
                    return None, None
        return "plain", None

    def _recheck_scope(self, nid, incidence):
        out = set()
        for vid in self._node_verts[nid]:
            out.update(incidence.get(vid, ()))
        mid = self.midpoint_id(*self._node_verts[nid])
        if mid is not None:
            out.update(incidence.get(mid, ()))
        return out


# ---------------------------------------------------------------------------
# Mesh views


class MeshView:
    """A mesh expressed as a set of leaves of a shared tree.

    Views are immutable: :func:`refine` and :func:`coarsen` return new views
    with the generation counter bumped.  Leaves are kept in deterministic
    tree-preorder so exports are byte-stable given the same adapt history.
    """

    def __init__(self, tree, leaves: Iterable[int], generation: int = 0,
                 _incidence=None):
        self.tree = tree
        self.leaves = tuple(sorted(set(leaves), key=tree.preorder_key))
        self.leafset = frozenset(self.leaves)
        self.generation = int(generation)
        if _incidence is None:
            _incidence = {}
            for nid in self.leaves:
                for v in tree.node_vertices(nid):
                    _incidence.setdefault(v, set()).add(nid)
        self._incidence = _incidence

    @classmethod
    def root_view(cls, tree):
        return cls(tree, tree.roots, generation=0)

    def __len__(self):
        return len(self.leaves)

    def vertex_ids(self):
        """Ids of vertices used as leaf corners, ascending."""
        return sorted(self._incidence.keys())

    @property
    def n_vertices(self):
        return len(self._incidence)

    def total_volume(self):
        return math.fsum(self.tree.volume(nid) for nid in self.leaves)

    def leaf_index(self):
        """Map leaf node id -> position in preorder."""
        return {nid: i for i, nid in enumerate(self.leaves)}

    def copy_incidence(self):
        return {k: set(v) for k, v in self._incidence.items()}

    def check_invariants(self):
        """Raise when 2:1 balance / admissibility is violated (test helper)."""
        for nid in self.leaves:
            kind, _ = self.tree.leaf_admissibility(nid, self._incidence)
            if kind is None:
                raise AssertionError(f"leaf {nid} violates mesh admissibility")


def _split_leaf(tree, nid, leaves, incidence):
    kids = tree.subdivide(nid)
    leaves.discard(nid)
    for v in tree.node_vertices(nid):
        s = incidence.get(v)
        if s is not None:
            s.discard(nid)
            if not s:
                del incidence[v]
    for k in kids:
        leaves.add(k)
        for v in tree.node_vertices(k):
            incidence.setdefault(v, set()).add(k)
    return kids


def _enforce(tree, leaves, incidence, seed_nodes):
    """Refine until every leaf passes the admissibility test.

    `seed_nodes` are freshly subdivided nodes whose neighborhoods must be
    rechecked; the closure propagates through the worklist.
    """
    queue = deque()
    for nid in seed_nodes:
        queue.extend(tree._recheck_scope(nid, incidence))
        queue.extend(tree.children_of(nid) or ())
    while queue:
        k = queue.popleft()
        if k not in leaves:
            continue
        kind, _ = tree.leaf_admissibility(k, incidence)
        if kind is None:
            _split_leaf(tree, k, leaves, incidence)
            queue.extend(tree._recheck_scope(k, incidence))
            queue.extend(tree.children_of(k))


def refine(mesh: MeshView, marked: Iterable[int]) -> MeshView:
    """Replace each marked leaf by its children; re-establish balance.

    A 2:1 ripple (plus the twin/four admissibility closure) may refine
    further leaves beyond the marked set.  The generation is incremented
    even for an empty mark set.
    """
    marked = list(dict.fromkeys(marked))
    if not set(marked) <= mesh.leafset:
        raise ContractViolation("marked node is not a leaf of this view")
    tree = mesh.tree
    leaves = set(mesh.leafset)
    incidence = mesh.copy_incidence()
    for nid in marked:
        _split_leaf(tree, nid, leaves, incidence)
    _enforce(tree, leaves, incidence, marked)
    return MeshView(tree, leaves, mesh.generation + 1, _incidence=incidence)


def coarsen(mesh: MeshView, marked: Iterable[int]):
    """Replace complete sibling sets by their parent where balance allows.

    Returns ``(new_view, skipped)`` where `skipped` lists parents whose
    coarsening request was dropped (partial sibling set, root cell, or a
    violation of the balance/admissibility rules).
    """
    marked = set(marked)
    if not marked <= mesh.leafset:
        raise ContractViolation("marked node is not a leaf of this view")
    tree = mesh.tree
    by_parent: dict = {}
    skipped = []
    for nid in marked:
        p = tree.parent_of(nid)
        if p is None:
            skipped.append(nid)
            continue
        by_parent.setdefault(p, set()).add(nid)

    candidates = []
    for p, kids in sorted(by_parent.items(),
                          key=lambda kv: (-tree.level_of(kv[0]),
                                          tree.preorder_key(kv[0]))):
        sibs = set(tree.children_of(p))
        if kids != sibs or not sibs <= mesh.leafset:
            skipped.append(p)
            continue
        candidates.append(p)

    leaves = set(mesh.leafset)
    incidence = mesh.copy_incidence()

    def apply(p):
        for c in tree.children_of(p):
            leaves.discard(c)
            for v in tree.node_vertices(c):
                s = incidence.get(v)
                if s is not None:
                    s.discard(c)
                    if not s:
                        del incidence[v]
        leaves.add(p)
        for v in tree.node_vertices(p):
            incidence.setdefault(v, set()).add(p)

    def revert(p):
        leaves.discard(p)
        for v in tree.node_vertices(p):
            s = incidence.get(v)
            if s is not None:
                s.discard(p)
                if not s:
                    del incidence[v]
        for c in tree.children_of(p):
            leaves.add(c)
            for v in tree.node_vertices(c):
                incidence.setdefault(v, set()).add(c)

    # optimistic bulk apply, then revert exactly the parents implicated in
    # balance/admissibility violations (requests are skipped, never forced)
    applied = set()
    for p in candidates:
        apply(p)
        applied.add(p)

    def adjacent_applied(k):
        out = set()
        v = tree.node_vertices(k)
        for i in range(len(v)):
            for j in range(i + 1, len(v)):
                sa, sb = incidence.get(v[i]), incidence.get(v[j])
                if sa and sb:
                    out.update(q for q in (sa & sb) if q in applied and q != k)
        return out

    while applied:
        violating = [k for k in sorted(leaves, key=tree.preorder_key)
                     if tree.leaf_admissibility(k, incidence)[0] is None]
        if not violating:
            break
        changed = False
        for k in violating:
            if k not in leaves:
                continue
            if tree.leaf_admissibility(k, incidence)[0] is not None:
                continue
            if k in applied:
                revert(k)
                applied.discard(k)
                changed = True
            else:
                for q in sorted(adjacent_applied(k), key=tree.preorder_key):
                    revert(q)
                    applied.discard(q)
                    changed = True
        if not changed:
            raise ContractViolation(
                "coarsening produced an unresolvable balance violation")
    skipped.extend(p for p in candidates if p not in applied)
    return (MeshView(tree, leaves, mesh.generation + 1, _incidence=incidence),
            sorted(set(skipped)))


def relation(tree, a: int, b: int) -> Relation:
    """Ancestry relation of two nodes of one tree."""
    return tree.relation(a, b)


def merge_views(views: Sequence[MeshView], generation: Optional[int] = None) -> MeshView:
    """Union-refinement of several views on one tree.

    A cell is a merged leaf iff it is a leaf in some view and no view
    refines it further; the balance/admissibility closure may refine the
    union slightly.
    """
    leaves = set(t for t, _ in common_leaves(views))
    tree = views[0].tree
    incidence: dict = {}
    for nid in leaves:
        for v in tree.node_vertices(nid):
            incidence.setdefault(v, set()).add(nid)
    queue = deque(sorted(leaves, key=tree.preorder_key))
    while queue:
        k = queue.popleft()
        if k not in leaves:
            continue
        kind, _ = tree.leaf_admissibility(k, incidence)
        if kind is None:
            _split_leaf(tree, k, leaves, incidence)
            queue.extend(tree._recheck_scope(k, incidence))
            queue.extend(tree.children_of(k))
    if generation is None:
        generation = 1 + max(v.generation for v in views)
    return MeshView(tree, leaves, generation, _incidence=incidence)


def common_cells(a: MeshView, b: MeshView):
    """All leaf pairs of two views whose cells overlap.

    Yields ``(leaf_a, leaf_b)`` with relation in {Equal, Contains,
    ContainedBy}; collected over all pairs, the finer cell of each pair
    partitions the domain.
    """
    if a.tree is not b.tree:
        raise ContractViolation("views live on different trees")
    tree = a.tree
    pairs = []
    for la in a.leaves:
        if la in b.leafset:
            pairs.append((la, la))
            continue
        anc = tree.parent_of(la)
        while anc is not None and anc not in b.leafset:
            anc = tree.parent_of(anc)
        if anc is not None:
            pairs.append((la, anc))
            continue
        stack = list(tree.children_of(la) or ())
        found = []
        while stack:
            n = stack.pop()
            if n in b.leafset:
                found.append(n)
            else:
                stack.extend(tree.children_of(n) or ())
        found.sort(key=tree.preorder_key)
        pairs.extend((la, lb) for lb in found)
    return pairs


def common_leaves(views: Sequence[MeshView]):
    """Tiling of the domain by the finest common cells of several views.

    Returns a list of ``(tile, covering)`` where `tile` is a node id and
    `covering[i]` is the leaf of ``views[i]`` containing the tile.
    """
    if not views:
        raise ContractViolation("need at least one view")
    tree = views[0].tree
    for v in views[1:]:
        if v.tree is not tree:
            raise ContractViolation("views live on different trees")
    out = []
    stack = [(r, (None,) * len(views)) for r in reversed(tree.roots)]
    while stack:
        node, covering = stack.pop()
        covering = tuple(
            node if (c is None and node in v.leafset) else c
            for v, c in zip(views, covering))
        if all(c is not None for c in covering):
            out.append((node, covering))
            continue
        kids = tree.children_of(node)
        if kids is None:
            raise ContractViolation("view leaves do not cover the tree")
        stack.extend((k, covering) for k in reversed(kids))
    return out


def write_vtk(mesh: MeshView, path, cell_data=None, cell_data_name="eta",
              point_data=None, point_data_name="field"):
    """Legacy ASCII VTK export of a 3-D view (unstructured grid, cell type 10).

    Leaf ordering is tree preorder and vertex ordering ascending id, so the
    output is byte-stable given the same adapt history.  `cell_data` is one
    value per leaf (preorder); `point_data` one value per used vertex
    (ascending vertex id).
    """
    tree = mesh.tree
    if tree.dim != 3:
        raise ContractViolation("VTK export is defined for 3-D views")
    vids = mesh.vertex_ids()
    local = {v: i for i, v in enumerate(vids)}
    lines = ["# vtk DataFile Version 3.0", "mmdft mesh", "ASCII",
             "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(vids)} double"]
    for v in vids:
        x, y, z = tree.vertex(v)
        lines.append(f"{x:.17g} {y:.17g} {z:.17g}")
    lines.append(f"CELLS {len(mesh.leaves)} {5 * len(mesh.leaves)}")
    for nid in mesh.leaves:
        a, b, c, d = (local[v] for v in tree.node_vertices(nid))
        lines.append(f"4 {a} {b} {c} {d}")
    lines.append(f"CELL_TYPES {len(mesh.leaves)}")
    lines.extend("10" for _ in mesh.leaves)
    if cell_data is not None:
        lines.append(f"CELL_DATA {len(mesh.leaves)}")
        lines.append(f"SCALARS {cell_data_name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(f"{val:.17g}" for val in cell_data)
    if point_data is not None:
        lines.append(f"POINT_DATA {len(vids)}")
        lines.append(f"SCALARS {point_data_name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(f"{val:.17g}" for val in point_data)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
