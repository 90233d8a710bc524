"""Conforming triangular meshes with tagged boundaries and local refinement.

Triangles are stored counter-clockwise and rotated so that local edge 0,
i.e. ``(t[:, 0], t[:, 1])``, is the refinement edge used by newest-vertex
bisection.  The newest vertex is therefore always ``t[:, 2]``.

Local edge ``k`` of a triangle joins ``t[k]`` and ``t[(k + 1) % 3]``.

Examples
--------
>>> m = build_unit_square(2)
>>> m = refine_marked(m, [0, 3])
>>> mesh_statistics(m).elements
12
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable

import numpy as np


class BoundaryClass(enum.IntEnum):
    DIRICHLET = 0
    NEUMANN = 1
    CONTACT = 2

    @classmethod
    def parse(cls, name: str) -> "BoundaryClass":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown boundary tag {name!r}") from None


class MeshError(ValueError):
    """Raised for invalid mesh input."""


_LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])


class Mesh:
    """Immutable conforming triangulation.

    Parameters
    ----------
    p : array (nv, 2)
        Vertex coordinates.
    t : array (nt, 3)
        Counter-clockwise triangles with the refinement edge first.
    boundary : array (nb, 2)
        Boundary edges as vertex pairs (any orientation).
    tags : array (nb,)
        :class:`BoundaryClass` value of each boundary edge.
    validate : bool
        Check conformity, orientation, boundary coverage and the
        separation of the Dirichlet and contact parts.
    """

    def __init__(self, p, t, boundary, tags, validate=True):
        self.p = np.ascontiguousarray(p, dtype=float)
        self.t = np.ascontiguousarray(t, dtype=np.int64)
        boundary = np.asarray(boundary, dtype=np.int64).reshape(-1, 2)
        tags = np.asarray(tags, dtype=np.int64).reshape(-1)
        for a in (self.p, self.t):
            a.setflags(write=False)

        nt = self.t.shape[0]
        loc = self.t[:, _LOCAL_EDGES]  # (nt, 3, 2)
        keys = np.sort(loc.reshape(-1, 2), axis=1)
        self.edges, inv, counts = np.unique(
            keys, axis=0, return_inverse=True, return_counts=True)
        inv = inv.reshape(-1)
        self.t2e = inv.reshape(nt, 3)
        ne = self.edges.shape[0]

        if validate:
            self._validate_elements(counts)

        # e2t[:, 0] is the first triangle seen, e2t[:, 1] the second or -1
        self.e2t = -np.ones((ne, 2), dtype=np.int64)
        self.e2l = -np.ones((ne, 2), dtype=np.int64)
        flat_t = np.repeat(np.arange(nt), 3)
        flat_l = np.tile(np.arange(3), nt)
        order = np.argsort(inv, kind="stable")
        first = np.ones(len(order), dtype=bool)
        first[1:] = inv[order][1:] != inv[order][:-1]
        sel = order[first]
        self.e2t[inv[sel], 0] = flat_t[sel]
        self.e2l[inv[sel], 0] = flat_l[sel]
        sel = order[~first]
        self.e2t[inv[sel], 1] = flat_t[sel]
        self.e2l[inv[sel], 1] = flat_l[sel]

        is_bnd = self.e2t[:, 1] < 0
        self.edge_tag = -np.ones(ne, dtype=np.int64)
        bkeys = np.sort(boundary, axis=1)
        bidx = _lookup_edges(self.edges, bkeys)
        if validate:
            if np.any(bidx < 0):
                raise MeshError("boundary edge is not an edge of the mesh")
            if len(np.unique(bidx)) != len(bidx):
                raise MeshError("boundary edge listed twice")
            if np.any(~is_bnd[bidx]) or len(bidx) != int(is_bnd.sum()):
                raise MeshError("tagged edges do not cover the boundary exactly once")
            if np.any((tags < 0) | (tags > 2)):
                raise MeshError("invalid boundary tag")
        self.edge_tag[bidx] = tags

        # boundary edges in triangle orientation, so the outward normal is
        # the clockwise rotation of the edge vector
        self.boundary_edges = np.flatnonzero(is_bnd)
        K = self.e2t[self.boundary_edges, 0]
        k = self.e2l[self.boundary_edges, 0]
        self.boundary = np.stack(
            [self.t[K, k], self.t[K, (k + 1) % 3]], axis=1)
        self.boundary_tags = self.edge_tag[self.boundary_edges]
        self.interior_edges = np.flatnonzero(~is_bnd)

        if validate:
            dv = np.unique(self.boundary[self.boundary_tags == BoundaryClass.DIRICHLET])
            cv = np.unique(self.boundary[self.boundary_tags == BoundaryClass.CONTACT])
            if len(np.intersect1d(dv, cv)):
                raise MeshError("Dirichlet and contact boundaries share a vertex")

    def _validate_elements(self, counts):
        nv = self.p.shape[0]
        if self.t.ndim != 2 or self.t.shape[1] != 3:
            raise MeshError("triangles must be an (nt, 3) array")
        if self.t.size and (self.t.min() < 0 or self.t.max() >= nv):
            raise MeshError("vertex index out of range")
        if not np.all(np.isfinite(self.p)):
            raise MeshError("non-finite vertex coordinates")
        if np.any(self.t[:, 0] == self.t[:, 1]) or np.any(self.t[:, 1] == self.t[:, 2]) \
                or np.any(self.t[:, 0] == self.t[:, 2]):
            raise MeshError("degenerate triangle")
        if np.any(_signed_area(self.p, self.t) <= 0):
            raise MeshError("triangles must have positive orientation")
        if np.any(counts > 2):
            raise MeshError("non-conforming mesh: edge shared by more than two triangles")

    # geometry ------------------------------------------------------------

    @property
    def nv(self) -> int:
        return self.p.shape[0]

    @property
    def nt(self) -> int:
        return self.t.shape[0]

    @property
    def ne(self) -> int:
        return self.edges.shape[0]

    @cached_property
    def area(self) -> np.ndarray:
        return _signed_area(self.p, self.t)

    @cached_property
    def edge_length(self) -> np.ndarray:
        d = self.p[self.edges[:, 1]] - self.p[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def h(self) -> np.ndarray:
        """Element diameters (longest edge)."""
        return self.edge_length[self.t2e].max(axis=1)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.p[self.t].mean(axis=1)

    @cached_property
    def affine(self):
        """Affine maps ``x = B @ xi + p0`` of the reference triangle.

        Returns ``(B, detB, invBT)`` with shapes (nt, 2, 2), (nt,), (nt, 2, 2).
        """
        p0 = self.p[self.t[:, 0]]
        B = np.stack([self.p[self.t[:, 1]] - p0, self.p[self.t[:, 2]] - p0], axis=2)
        det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
        invBT = np.empty_like(B)
        invBT[:, 0, 0] = B[:, 1, 1] / det
        invBT[:, 1, 1] = B[:, 0, 0] / det
        invBT[:, 0, 1] = -B[:, 1, 0] / det
        invBT[:, 1, 0] = -B[:, 0, 1] / det
        return B, det, invBT

    def edges_with_tag(self, tag: BoundaryClass) -> np.ndarray:
        """Global indices of boundary edges carrying ``tag``."""
        return self.boundary_edges[self.boundary_tags == tag]

    def boundary_normals(self, edges) -> np.ndarray:
        """Outward unit normals of boundary edges."""
        edges = np.asarray(edges)
        K = self.e2t[edges, 0]
        k = self.e2l[edges, 0]
        d = self.p[self.t[K, (k + 1) % 3]] - self.p[self.t[K, k]]
        return np.stack([d[:, 1], -d[:, 0]], axis=1) / self.edge_length[edges, None]

    def tag_lengths(self) -> dict:
        return {c: float(self.edge_length[self.edges_with_tag(c)].sum())
                for c in BoundaryClass}

    def euler_characteristic(self) -> int:
        return self.nv - self.ne + self.nt

    def contact_sides(self, tol=1e-12) -> int:
        """Number of distinct straight lines carrying contact edges."""
        E = self.edges[self.edges_with_tag(BoundaryClass.CONTACT)]
        if len(E) == 0:
            return 0
        d = self.p[E[:, 1]] - self.p[E[:, 0]]
        d /= np.hypot(d[:, 0], d[:, 1])[:, None]
        d *= np.where((d[:, 0] < -tol) | ((abs(d[:, 0]) <= tol) & (d[:, 1] < 0)), -1, 1)[:, None]
        off = d[:, 0] * self.p[E[:, 0], 1] - d[:, 1] * self.p[E[:, 0], 0]
        lines = np.round(np.column_stack([d, off]) / 1e-9).astype(np.int64)
        return len(np.unique(lines, axis=0))

    def __repr__(self):
        return f"Mesh(nv={self.nv}, nt={self.nt}, nb={len(self.boundary_edges)})"


def _signed_area(p, t):
    a, b, c = p[t[:, 0]], p[t[:, 1]], p[t[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                  - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def _lookup_edges(edges, keys):
    """Row index of each sorted vertex pair in ``edges`` (-1 if absent)."""
    if len(keys) == 0:
        return np.zeros(0, dtype=np.int64)
    base = max(int(edges.max()), int(keys.max())) + 1
    ecode = edges[:, 0] * base + edges[:, 1]
    kcode = keys[:, 0] * base + keys[:, 1]
    pos = np.searchsorted(ecode, kcode)
    pos = np.minimum(pos, len(ecode) - 1)
    return np.where(ecode[pos] == kcode, pos, -1)


def make_mesh(p, t, boundary, tags, validate=True) -> Mesh:
    """Build a mesh from arbitrary triangle input.

    Triangles are reoriented counter-clockwise and rotated so that the
    longest edge becomes the refinement edge; ties go to the edge whose
    opposite vertex has the smallest index.
    """
    p = np.asarray(p, dtype=float)
    t = np.array(t, dtype=np.int64).reshape(-1, 3)
    flip = _signed_area(p, t) < 0
    t[flip] = t[flip][:, [0, 2, 1]]
    # length of local edge k, opposite vertex t[(k + 2) % 3]
    a, b = t[:, _LOCAL_EDGES[:, 0]], t[:, _LOCAL_EDGES[:, 1]]
    L = np.hypot(*(p[b] - p[a]).transpose(2, 0, 1))
    opp = t[:, [2, 0, 1]]
    Lmax = L.max(axis=1, keepdims=True)
    cand = L >= Lmax * (1 - 1e-12)
    key = np.where(cand, opp, np.iinfo(np.int64).max)
    k = key.argmin(axis=1)
    rot = (k[:, None] + np.arange(3)[None, :]) % 3
    t = np.take_along_axis(t, rot, axis=1)
    return Mesh(p, t, boundary, tags, validate=validate)


def paper_tagging(x, y, tol=1e-12):
    """Unit-square tagging: x=0 Dirichlet, x=1 contact, y=0 and y=1 Neumann."""
    x = np.asarray(x)
    tag = np.full(x.shape, int(BoundaryClass.NEUMANN))
    tag[np.abs(x) < tol] = BoundaryClass.DIRICHLET
    tag[np.abs(x - 1) < tol] = BoundaryClass.CONTACT
    return tag


def build_unit_square(n: int, tagging: Callable = paper_tagging) -> Mesh:
    """Structured mesh of (0, 1)^2 with ``2 n^2`` triangles.

    Each cell is cut along its (0,0)-(1,1) diagonal.  ``tagging`` maps
    arrays of boundary-edge midpoint coordinates to boundary classes.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x)
    p = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (i + j * (n + 1)).ravel()
    v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
    t = np.concatenate([np.column_stack([v00, v10, v11]),
                        np.column_stack([v00, v11, v01])])
    r = np.arange(n)
    boundary = np.concatenate([
        np.column_stack([r, r + 1]),                                  # y = 0
        np.column_stack([r * (n + 1) + n, (r + 1) * (n + 1) + n]),    # x = 1
        np.column_stack([n * (n + 1) + r, n * (n + 1) + r + 1]),      # y = 1
        np.column_stack([r * (n + 1), (r + 1) * (n + 1)]),            # x = 0
    ])
    mid = p[boundary].mean(axis=1)
    tags = np.asarray(tagging(mid[:, 0], mid[:, 1]))
    return make_mesh(p, t, boundary, tags)


def _split_boundary(m: Mesh, split, mid_index):
    """Boundary pairs and tags after splitting the edges flagged in ``split``."""
    be = m.boundary_edges
    pairs, tags = m.boundary, m.boundary_tags
    s = split[be]
    mids = mid_index[be[s]]
    new_pairs = np.concatenate([
        pairs[~s],
        np.column_stack([pairs[s, 0], mids]),
        np.column_stack([mids, pairs[s, 1]]),
    ])
    new_tags = np.concatenate([tags[~s], tags[s], tags[s]])
    return new_pairs, new_tags


def refine_uniform(m: Mesh) -> Mesh:
    """Red refinement: every triangle into four similar children.

    New vertices are numbered ``nv + e`` for global edge ``e``, which
    makes the refined vertex set coincide with the P2 node numbering of
    ``m``.
    """
    mid = m.p[m.edges].mean(axis=1)
    p = np.vstack([m.p, mid])
    a, b, c = m.t.T
    m0, m1, m2 = (m.nv + m.t2e).T
    # refinement edges follow the parent's refinement edge under similarity
    t = np.concatenate([
        np.column_stack([a, m0, m2]),
        np.column_stack([m0, b, m1]),
        np.column_stack([m2, m1, c]),
        np.column_stack([m1, m2, m0]),
    ])
    split = np.ones(m.ne, dtype=bool)
    boundary, tags = _split_boundary(m, split, m.nv + np.arange(m.ne))
    return Mesh(p, t, boundary, tags, validate=False)


def _closure(m: Mesh, marked_edges):
    """Propagate edge marks until every triangle with a marked edge also
    has its refinement edge marked."""
    marked_edges = marked_edges.copy()
    while True:
        need = marked_edges[m.t2e].any(axis=1) & ~marked_edges[m.t2e[:, 0]]
        if not need.any():
            return marked_edges
        marked_edges[m.t2e[need, 0]] = True


def _bisect(tri, mid):
    """Children of (a, b, c) bisected at its refinement edge (a, b)."""
    a, b, c = tri.T
    return np.column_stack([c, a, mid]), np.column_stack([b, c, mid])


def refine_marked(m: Mesh, marked: Iterable[int]) -> Mesh:
    """Newest-vertex bisection of the marked elements with conforming closure.

    Every marked element is bisected at least once.  Neighbours are refined
    as needed so that no hanging nodes remain.
    """
    marked = np.asarray(list(marked) if not isinstance(marked, np.ndarray) else marked,
                        dtype=np.int64)
    edge_marks = np.zeros(m.ne, dtype=bool)
    edge_marks[m.t2e[marked, 0]] = True
    edge_marks = _closure(m, edge_marks)

    mid_index = -np.ones(m.ne, dtype=np.int64)
    split = np.flatnonzero(edge_marks)
    mid_index[split] = m.nv + np.arange(len(split))
    p = np.vstack([m.p, m.p[m.edges[split]].mean(axis=1)])

    em = edge_marks[m.t2e]
    mids = mid_index[m.t2e]
    keep = ~em[:, 0]
    out = [m.t[keep]]
    for pat1 in (False, True):
        for pat2 in (False, True):
            sel = em[:, 0] & (em[:, 1] == pat1) & (em[:, 2] == pat2)
            if not sel.any():
                continue
            left, right = _bisect(m.t[sel], mids[sel, 0])
            # left = (c, a, m0) has refinement edge (c, a) = parent edge 2
            # right = (b, c, m0) has refinement edge (b, c) = parent edge 1
            if pat2:
                out.extend(_bisect(left, mids[sel, 2]))
            else:
                out.append(left)
            if pat1:
                out.extend(_bisect(right, mids[sel, 1]))
            else:
                out.append(right)
    t = np.concatenate(out)
    boundary, tags = _split_boundary(m, edge_marks, mid_index)
    return Mesh(p, t, boundary, tags, validate=False)


@dataclass(frozen=True)
class MeshStats:
    h_max: float
    min_angle: float  # degrees
    elements: int
    vertices: int


def min_angles(m: Mesh) -> np.ndarray:
    """Smallest interior angle of each triangle, in degrees."""
    P = m.p[m.t]
    out = np.full(m.nt, np.inf)
    for k in range(3):
        u = P[:, (k + 1) % 3] - P[:, k]
        v = P[:, (k + 2) % 3] - P[:, k]
        cosang = (u * v).sum(1) / np.hypot(*u.T) / np.hypot(*v.T)
        out = np.minimum(out, np.degrees(np.arccos(np.clip(cosang, -1, 1))))
    return out


def mesh_statistics(m: Mesh) -> MeshStats:
    return MeshStats(float(m.h.max()), float(min_angles(m).min()), m.nt, m.nv)


# text format -------------------------------------------------------------

def write_mesh(m: Mesh, path) -> None:
    names = {c: c.name.lower() for c in BoundaryClass}
    lines = [f"vertices {m.nv} / triangles {m.nt} / boundary {len(m.boundary)}"]
    lines += [f"{x!r} {y!r}" for x, y in m.p.tolist()]
    lines += [f"{i} {j} {k}" for i, j, k in m.t.tolist()]
    lines += [f"{i} {j} {names[BoundaryClass(c)]}"
              for (i, j), c in zip(m.boundary.tolist(), m.boundary_tags.tolist())]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    """Read the line-oriented text format written by :func:`write_mesh`.

    Refinement edges are reassigned as in :func:`make_mesh`, so a file is
    always treated as an initial mesh.
    """
    with open(path) as fh:
        rows = []
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if line:
                rows.append(line)
    if not rows:
        raise MeshError(f"{path}: empty mesh file")
    head = rows[0].replace("/", " ").split()
    try:
        counts = {head[i].lower(): int(head[i + 1]) for i in range(0, len(head), 2)}
        nv, nt, nb = counts["vertices"], counts["triangles"], counts["boundary"]
    except (KeyError, ValueError, IndexError):
        raise MeshError(f"{path}: bad header {rows[0]!r}") from None
    body = rows[1:]
    if len(body) != nv + nt + nb:
        raise MeshError(f"{path}: expected {nv + nt + nb} data lines, got {len(body)}")
    try:
        p = np.array([[float(v) for v in r.split()] for r in body[:nv]]).reshape(nv, 2)
        t = np.array([[int(v) for v in r.split()] for r in body[nv:nv + nt]]).reshape(nt, 3)
        bnd, tags = [], []
        for r in body[nv + nt:]:
            i, j, tag = r.split()
            bnd.append((int(i), int(j)))
            tags.append(int(BoundaryClass.parse(tag)))
    except ValueError as exc:
        raise MeshError(f"{path}: {exc}") from None
    return make_mesh(p, t, bnd, tags)
