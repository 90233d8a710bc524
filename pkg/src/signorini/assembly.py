"""Assembly of the stiffness, load and Nitsche contact forms."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .element import (DofMap, edge_reference_points, shape_gradients,
                      shape_values)
from .mesh import BoundaryClass, Mesh
from .quadrature import QuadratureRule, interval_rule, triangle_rule

LoadFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


def scatter_matrix(dofs, local, n) -> sp.csr_matrix:
    """Sum local matrices (nel, nloc, nloc) into an (n, n) CSR matrix."""
    nl = dofs.shape[1]
    rows = np.repeat(dofs, nl, axis=1).ravel()
    cols = np.tile(dofs, (1, nl)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    return A


def scatter_vector(dofs, local, n) -> np.ndarray:
    return np.bincount(dofs.ravel(), weights=local.ravel(), minlength=n)


def to_reference(m: Mesh, elements, x) -> np.ndarray:
    """Reference coordinates of physical points ``x`` (..., 2).

    ``elements`` has the shape of ``x`` without the last axis.
    """
    _, _, invBT = m.affine
    elements = np.asarray(elements)
    d = np.asarray(x, dtype=float) - m.p[m.t[elements, 0]]
    # xi = B^{-1} d and B^{-1} = invBT^T
    return np.einsum("...ba,...b->...a", invBT[elements], d)


def global_gradients(m: Mesh, degree: int, elements, xi) -> np.ndarray:
    """Physical basis gradients (..., nloc, 2) at reference points ``xi``.

    ``xi`` is (ne, nq, 2) matched with ``elements`` (ne,), or (nq, 2) shared
    by all elements.
    """
    _, _, invBT = m.affine
    G = invBT[np.asarray(elements)]
    dphi = shape_gradients(degree, xi)
    if dphi.ndim == 3:
        return np.einsum("kab,qib->kqia", G, dphi)
    return np.einsum("kab,kqib->kqia", G, dphi)


def assemble_stiffness(m: Mesh, d: DofMap, rule: QuadratureRule | None = None) -> sp.csr_matrix:
    """Matrix of (grad phi_i, grad phi_j) over all dofs."""
    rule = rule or triangle_rule(2 * (d.degree - 1))
    _, det, _ = m.affine
    g = global_gradients(m, d.degree, np.arange(m.nt), rule.points)
    w = rule.weights[None, :] * np.abs(det)[:, None]
    local = np.einsum("kq,kqia,kqja->kij", w, g, g)
    return scatter_matrix(d.element_dofs, local, d.ndofs)


def assemble_mass(m: Mesh, d: DofMap, rule: QuadratureRule | None = None) -> sp.csr_matrix:
    rule = rule or triangle_rule(2 * d.degree)
    _, det, _ = m.affine
    phi = shape_values(d.degree, rule.points)
    local = np.einsum("q,qi,qj->ij", rule.weights, phi, phi)[None] * np.abs(det)[:, None, None]
    return scatter_matrix(d.element_dofs, local, d.ndofs)


def quadrature_points(m: Mesh, rule: QuadratureRule) -> np.ndarray:
    """Physical quadrature points (nt, nq, 2)."""
    B, _, _ = m.affine
    p0 = m.p[m.t[:, 0]]
    return p0[:, None, :] + np.einsum("kab,qb->kqa", B, rule.points)


def assemble_load(m: Mesh, d: DofMap, f: LoadFunction,
                  rule: QuadratureRule | None = None) -> np.ndarray:
    """Vector of (f, phi_i) by quadrature of degree at least ``k + 2``."""
    rule = rule or triangle_rule(4)
    if rule.degree < d.degree + 2:
        raise ValueError("load quadrature degree must be at least k + 2")
    _, det, _ = m.affine
    x = quadrature_points(m, rule)
    fx = np.broadcast_to(np.asarray(f(x[..., 0], x[..., 1]), dtype=float), x.shape[:2])
    phi = shape_values(d.degree, rule.points)
    local = np.einsum("q,kq,qi->ki", rule.weights, fx, phi) * np.abs(det)[:, None]
    return scatter_vector(d.element_dofs, local, d.ndofs)


@dataclass
class BoundaryTrace:
    """Basis data at quadrature points of a set of boundary edges.

    Arrays are indexed (edge, point[, local dof]).  ``weights`` already
    include the edge length.
    """
    edges: np.ndarray
    elements: np.ndarray
    dofs: np.ndarray
    h: np.ndarray
    normals: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    phi: np.ndarray
    dphidn: np.ndarray

    def trace(self, u) -> np.ndarray:
        return np.einsum("eqi,ei->eq", self.phi, u[self.dofs])

    def normal_derivative(self, u) -> np.ndarray:
        return np.einsum("eqi,ei->eq", self.dphidn, u[self.dofs])


def boundary_trace(m: Mesh, d: DofMap, edges, rule: QuadratureRule | None = None) -> BoundaryTrace:
    rule = rule or interval_rule(5)
    edges = np.asarray(edges, dtype=np.int64)
    K = m.e2t[edges, 0]
    k = m.e2l[edges, 0]
    if np.any(m.e2t[edges, 1] >= 0):
        raise ValueError("boundary_trace needs boundary edges")
    xi = edge_reference_points(k, rule.points)
    B, _, _ = m.affine
    pts = m.p[m.t[K, 0]][:, None, :] + np.einsum("kab,kqb->kqa", B[K], xi)
    h = m.edge_length[edges]
    n = m.boundary_normals(edges) if len(edges) else np.zeros((0, 2))
    grad = global_gradients(m, d.degree, K, xi)
    return BoundaryTrace(
        edges=edges, elements=K, dofs=d.element_dofs[K], h=h, normals=n,
        points=pts, weights=rule.weights[None, :] * h[:, None],
        phi=shape_values(d.degree, xi),
        dphidn=np.einsum("kqia,ka->kqi", grad, n),
    )


def assemble_nitsche_blocks(m: Mesh, d: DofMap, alpha: float, activity,
                            trace: BoundaryTrace | None = None):
    """Contact-boundary blocks of the Nitsche system.

    Parameters
    ----------
    activity : bool array (ncontact, nq)
        Active flag at every contact-edge quadrature point.
    trace : BoundaryTrace, optional
        Precomputed trace of the contact edges.

    Returns
    -------
    penalty, consistency, stabilisation : csr_matrix
        Integrals of alpha^-1 h^-1 u v and (du/dn v + u dv/dn) over active
        points, and alpha h du/dn dv/dn over inactive points.  The system
        matrix is ``K + penalty - consistency - stabilisation``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if trace is None:
        trace = boundary_trace(m, d, m.edges_with_tag(BoundaryClass.CONTACT))
    act = np.asarray(activity, dtype=bool)
    if act.shape != trace.weights.shape:
        raise ValueError(f"activity shape {act.shape} != {trace.weights.shape}")
    w_on = trace.weights * act
    w_off = trace.weights * ~act
    phi, dn = trace.phi, trace.dphidn
    pen = np.einsum("eq,eqi,eqj->eij", w_on / (alpha * trace.h[:, None]), phi, phi)
    cons = np.einsum("eq,eqi,eqj->eij", w_on, dn, phi)
    cons = cons + cons.transpose(0, 2, 1)
    stab = np.einsum("eq,eqi,eqj->eij", w_off * alpha * trace.h[:, None], dn, dn)
    return tuple(scatter_matrix(trace.dofs, x, d.ndofs) for x in (pen, cons, stab))


def edge_normal_derivative(u, edge: int, points) -> np.ndarray:
    """Outward normal derivative of a discrete field on a boundary edge.

    ``u`` carries ``dofmap`` and ``coefficients``; ``points`` (np, 2) are
    physical points on the edge.  The gradient is taken from the single
    element owning the edge.
    """
    d = u.dofmap
    m = d.mesh
    if m.e2t[edge, 1] >= 0:
        raise ValueError("edge is not a boundary edge")
    K = m.e2t[edge, 0]
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    xi = to_reference(m, np.full(len(pts), K), pts)
    g = global_gradients(m, d.degree, [K], xi[None])[0]
    n = m.boundary_normals([edge])[0]
    return np.einsum("qia,i,a->q", g, u.coefficients[d.element_dofs[K]], n)


def apply_dirichlet(A, b, d: DofMap):
    """Eliminate constrained dofs (homogeneous data) symmetrically."""
    A = sp.csr_matrix(A)
    return A[d.free][:, d.free], np.asarray(b)[d.free]
