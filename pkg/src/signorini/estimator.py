"""Residual a posteriori error indicators for the Nitsche contact solution."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import (LoadFunction, boundary_trace, global_gradients,
                       quadrature_points, to_reference)
from .element import shape_hessians, shape_values
from .mesh import BoundaryClass, Mesh
from .quadrature import QuadratureRule, interval_rule, triangle_rule
from .solver import ContactState, DiscreteSolution


@dataclass
class IndicatorSet:
    """Local and global estimator values.

    Edge arrays are aligned with ``interior_edges``, ``contact_edges`` and
    ``neumann_edges`` (global edge indices).
    """
    elem: np.ndarray
    interior: np.ndarray
    contact: np.ndarray
    neumann: np.ndarray
    osc: np.ndarray
    adaptive: np.ndarray
    interior_edges: np.ndarray
    contact_edges: np.ndarray
    neumann_edges: np.ndarray
    eta: float
    S: float
    s_trace: float
    s_complementarity: float

    @property
    def eta_plus_S(self) -> float:
        return self.eta + self.S


def laplacian(u: DiscreteSolution) -> np.ndarray:
    """Elementwise constant Laplacian of a P1/P2 field (exact)."""
    m = u.mesh
    _, _, G = m.affine
    H = shape_hessians(u.degree)
    lap = np.einsum("kab,ibc,kac->ki", G, H, G)
    return (lap * u.coefficients[u.dofmap.element_dofs]).sum(axis=1)


def _select(values, all_ids, ids):
    if ids is None:
        return values
    pos = {int(e): i for i, e in enumerate(all_ids)}
    return values[[pos[int(e)] for e in np.atleast_1d(ids)]]


def element_residual(u: DiscreteSolution, f: LoadFunction, elements=None,
                     rule: QuadratureRule | None = None) -> np.ndarray:
    """``h_K ||Delta u_h + f||_{0,K}`` per element."""
    m = u.mesh
    rule = rule or triangle_rule(4)
    x = quadrature_points(m, rule)
    fx = np.broadcast_to(np.asarray(f(x[..., 0], x[..., 1]), dtype=float), x.shape[:2])
    r = laplacian(u)[:, None] + fx
    norm2 = np.abs(m.affine[1]) * (rule.weights * r ** 2).sum(axis=1)
    out = m.h * np.sqrt(norm2)
    return out if elements is None else out[np.asarray(elements)]


def _jump_squared(u: DiscreteSolution, edges, rule: QuadratureRule) -> np.ndarray:
    """``||[[grad u_h . n]]||_{0,E}^2`` for interior edges."""
    m = u.mesh
    d = u.dofmap
    edges = np.asarray(edges, dtype=np.int64)
    a, b = m.p[m.edges[edges, 0]], m.p[m.edges[edges, 1]]
    s = rule.points
    x = a[:, None, :] * (1 - s)[None, :, None] + b[:, None, :] * s[None, :, None]
    L = m.edge_length[edges]
    n = np.column_stack([(b - a)[:, 1], -(b - a)[:, 0]]) / L[:, None]
    K1, K2 = m.e2t[edges, 0], m.e2t[edges, 1]
    # orient n out of K1
    n *= np.sign((((a + b) / 2 - m.centroids[K1]) * n).sum(axis=1))[:, None]
    nq = len(s)
    jump = 0.0
    for K, sign in ((K1, 1.0), (K2, -1.0)):
        xi = to_reference(m, np.repeat(K[:, None], nq, axis=1), x)
        g = global_gradients(m, d.degree, K, xi)
        grad = np.einsum("eqia,ei->eqa", g, u.coefficients[d.element_dofs[K]])
        jump = jump + sign * np.einsum("eqa,ea->eq", grad, n)
    return (rule.weights[None, :] * L[:, None] * jump ** 2).sum(axis=1)


def interior_jump(u: DiscreteSolution, edges=None, rule: QuadratureRule | None = None) -> np.ndarray:
    """``sqrt(h_E) ||[[grad u_h . n]]||_{0,E}`` on interior edges."""
    m = u.mesh
    edges = m.interior_edges if edges is None else np.atleast_1d(edges)
    if np.any(m.e2t[edges, 1] < 0):
        raise ValueError("interior_jump needs interior edges")
    j2 = _jump_squared(u, edges, rule or interval_rule(5))
    return np.sqrt(m.edge_length[edges] * j2)


def _contact_squared(c: ContactState) -> np.ndarray:
    return (c.weights * (c.lam - c.dudn) ** 2).sum(axis=1)


def contact_residual(u: DiscreteSolution, c: ContactState, edges=None) -> np.ndarray:
    """``sqrt(h_E) ||lambda_h - du_h/dn||_{0,E}`` on contact edges."""
    out = np.sqrt(c.h * _contact_squared(c))
    return _select(out, c.edges, edges)


def _neumann_squared(u: DiscreteSolution, rule):
    m = u.mesh
    tr = boundary_trace(m, u.dofmap, m.edges_with_tag(BoundaryClass.NEUMANN), rule)
    dn = tr.normal_derivative(u.coefficients)
    return tr.edges, (tr.weights * dn ** 2).sum(axis=1)


def neumann_residual(u: DiscreteSolution, edges=None, rule: QuadratureRule | None = None) -> np.ndarray:
    """``sqrt(h_E) ||du_h/dn||_{0,E}`` on Neumann edges."""
    ids, n2 = _neumann_squared(u, rule or interval_rule(5))
    return _select(np.sqrt(u.mesh.edge_length[ids] * n2), ids, edges)


def oscillation(m: Mesh, f: LoadFunction, degree: int, elements=None,
                rule: QuadratureRule | None = None) -> np.ndarray:
    """``h_K ||f - f_h||_{0,K}`` with f_h the local L2 projection onto P_k(K)."""
    rule = rule or triangle_rule(2 * degree + 2)
    x = quadrature_points(m, rule)
    fx = np.broadcast_to(np.asarray(f(x[..., 0], x[..., 1]), dtype=float), x.shape[:2])
    phi = shape_values(degree, rule.points)
    M = np.einsum("q,qi,qj->ij", rule.weights, phi, phi)
    # the Jacobian cancels between the local mass matrix and right-hand side
    coef = np.linalg.solve(M, np.einsum("q,kq,qi->ik", rule.weights, fx, phi)).T
    r = fx - coef @ phi.T
    out = m.h * np.sqrt(np.abs(m.affine[1]) * (rule.weights * r ** 2).sum(axis=1))
    return out if elements is None else out[np.asarray(elements)]


def s_terms(c: ContactState):
    """W-norm surrogate of ``u_h^-`` and ``sqrt((lambda_h, u_h^+))``."""
    neg = np.minimum(c.trace, 0.0)
    s_tr = np.sqrt(((c.weights * neg ** 2).sum(axis=1) / c.h).sum())
    comp = (c.weights * c.lam * np.maximum(c.trace, 0.0)).sum()
    return float(s_tr), float(np.sqrt(max(comp, 0.0)))


def global_estimate(u: DiscreteSolution, c: ContactState, f: LoadFunction,
                    rule: QuadratureRule | None = None,
                    edge_rule: QuadratureRule | None = None) -> IndicatorSet:
    """Every local indicator, the adaptive indicator and the global (eta, S)."""
    m = u.mesh
    edge_rule = edge_rule or interval_rule(5)
    eta_K = element_residual(u, f, rule=rule)
    ie = m.interior_edges
    j2 = _jump_squared(u, ie, edge_rule)
    c2 = _contact_squared(c)
    ne, n2 = _neumann_squared(u, edge_rule)
    hE = m.edge_length
    eta_int = np.sqrt(hE[ie] * j2)
    eta_con = np.sqrt(hE[c.edges] * c2)
    eta_neu = np.sqrt(hE[ne] * n2)

    # adaptive indicator: edge terms weighted by h_K, interior jumps shared
    edge_sum = np.bincount(m.e2t[ie, 0], j2, minlength=m.nt)
    edge_sum += np.bincount(m.e2t[ie, 1], j2, minlength=m.nt)
    edge_sum += np.bincount(m.e2t[c.edges, 0], c2, minlength=m.nt)
    edge_sum += np.bincount(m.e2t[ne, 0], n2, minlength=m.nt)
    adaptive = np.sqrt(eta_K ** 2 + m.h * edge_sum)

    eta = float(np.sqrt((eta_K ** 2).sum() + (eta_int ** 2).sum()
                        + (eta_con ** 2).sum() + (eta_neu ** 2).sum()))
    s_tr, s_comp = s_terms(c)
    return IndicatorSet(
        elem=eta_K, interior=eta_int, contact=eta_con, neumann=eta_neu,
        osc=oscillation(m, f, u.degree), adaptive=adaptive,
        interior_edges=ie, contact_edges=c.edges, neumann_edges=ne,
        eta=eta, S=s_tr + s_comp, s_trace=s_tr, s_complementarity=s_comp,
    )


def adaptive_indicator(u: DiscreteSolution, c: ContactState, f: LoadFunction,
                       elements=None) -> np.ndarray:
    """Per-element indicator E_K combining all residual contributions."""
    E = global_estimate(u, c, f).adaptive
    return E if elements is None else E[np.asarray(elements)]


def h1_error(u: DiscreteSolution, exact_grad, rule: QuadratureRule | None = None) -> float:
    """``||grad(u - u_h)||_0`` against an exact gradient ``(ux, uy)``."""
    m = u.mesh
    rule = rule or triangle_rule(2 * u.degree + 4)
    x = quadrature_points(m, rule)
    g = global_gradients(m, u.degree, np.arange(m.nt), rule.points)
    gh = np.einsum("kqia,ki->kqa", g, u.coefficients[u.dofmap.element_dofs])
    ux, uy = exact_grad(x[..., 0], x[..., 1])
    e2 = (ux - gh[..., 0]) ** 2 + (uy - gh[..., 1]) ** 2
    return float(np.sqrt((np.abs(m.affine[1])[:, None] * rule.weights * e2).sum()))
