"""Lagrange P1/P2 reference bases and global degree-of-freedom numbering.

Local P2 ordering: vertices 0, 1, 2 followed by the midpoints of the local
edges (0,1), (1,2), (2,0).
"""
from __future__ import annotations

import numpy as np

from .mesh import BoundaryClass, Mesh

_DL = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])  # grad of barycentrics
_PAIRS = ((0, 1), (1, 2), (2, 0))


def _barycentric(xi):
    xi = np.asarray(xi, dtype=float)
    return np.stack([1.0 - xi[..., 0] - xi[..., 1], xi[..., 0], xi[..., 1]], axis=-1)


def nloc(degree: int) -> int:
    return {1: 3, 2: 6}[degree]


def shape_values(degree: int, xi) -> np.ndarray:
    """Basis values at reference points ``xi`` (..., 2) -> (..., nloc)."""
    L = _barycentric(xi)
    if degree == 1:
        return L
    if degree == 2:
        vals = [L[..., i] * (2 * L[..., i] - 1) for i in range(3)]
        vals += [4 * L[..., a] * L[..., b] for a, b in _PAIRS]
        return np.stack(vals, axis=-1)
    raise ValueError(f"unsupported degree {degree}")


def shape_gradients(degree: int, xi) -> np.ndarray:
    """Reference gradients (..., 2) -> (..., nloc, 2)."""
    L = _barycentric(xi)
    shape = L.shape[:-1]
    if degree == 1:
        return np.broadcast_to(_DL, shape + (3, 2)).copy()
    if degree == 2:
        g = [(4 * L[..., i, None] - 1) * _DL[i] for i in range(3)]
        g += [4 * (L[..., b, None] * _DL[a] + L[..., a, None] * _DL[b]) for a, b in _PAIRS]
        return np.stack(g, axis=-2)
    raise ValueError(f"unsupported degree {degree}")


def shape_hessians(degree: int) -> np.ndarray:
    """Constant reference Hessians (nloc, 2, 2)."""
    if degree == 1:
        return np.zeros((3, 2, 2))
    if degree == 2:
        H = [4 * np.outer(_DL[i], _DL[i]) for i in range(3)]
        H += [4 * (np.outer(_DL[a], _DL[b]) + np.outer(_DL[b], _DL[a])) for a, b in _PAIRS]
        return np.array(H)
    raise ValueError(f"unsupported degree {degree}")


def reference_nodes(degree: int) -> np.ndarray:
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    if degree == 1:
        return v
    return np.vstack([v, [(v[a] + v[b]) / 2 for a, b in _PAIRS]])


def edge_reference_points(k, s) -> np.ndarray:
    """Reference coordinates of parameter ``s`` along local edge ``k``.

    ``k`` has shape (ne,), ``s`` shape (nq,); returns (ne, nq, 2).
    """
    v = reference_nodes(1)
    a = v[np.asarray(k)]
    b = v[(np.asarray(k) + 1) % 3]
    s = np.asarray(s)
    return a[:, None, :] * (1 - s)[None, :, None] + b[:, None, :] * s[None, :, None]


class DofMap:
    """Global numbering of Lagrange degrees of freedom.

    Vertex dofs come first (index = vertex index); for ``degree=2`` edge
    midpoint dofs follow (index = ``nv + edge``).  A dof is constrained iff
    it lies on the closure of the Dirichlet boundary.
    """

    def __init__(self, mesh: Mesh, degree: int = 2):
        if degree not in (1, 2):
            raise ValueError("degree must be 1 or 2")
        self.mesh = mesh
        self.degree = degree
        if degree == 1:
            self.element_dofs = mesh.t.copy()
            self.ndofs = mesh.nv
        else:
            self.element_dofs = np.hstack([mesh.t, mesh.nv + mesh.t2e])
            self.ndofs = mesh.nv + mesh.ne
        dedges = mesh.edges_with_tag(BoundaryClass.DIRICHLET)
        dirichlet = [mesh.edges[dedges].ravel()]
        if degree == 2:
            dirichlet.append(mesh.nv + dedges)
        self.dirichlet = np.unique(np.concatenate(dirichlet)).astype(np.int64)
        mask = np.ones(self.ndofs, dtype=bool)
        mask[self.dirichlet] = False
        self.free = np.flatnonzero(mask)

    @property
    def N(self) -> int:
        """Number of free (unconstrained) degrees of freedom."""
        return len(self.free)

    @property
    def nloc(self) -> int:
        return self.element_dofs.shape[1]

    def coordinates(self) -> np.ndarray:
        m = self.mesh
        if self.degree == 1:
            return m.p.copy()
        return np.vstack([m.p, m.p[m.edges].mean(axis=1)])

    def interpolate(self, fun) -> np.ndarray:
        """Nodal interpolant of ``fun(x, y)``."""
        x = self.coordinates()
        return np.asarray(fun(x[:, 0], x[:, 1]), dtype=float) * np.ones(self.ndofs)

    def expand(self, u_free) -> np.ndarray:
        """Full coefficient vector with zeros on constrained dofs."""
        u = np.zeros(self.ndofs)
        u[self.free] = u_free
        return u
