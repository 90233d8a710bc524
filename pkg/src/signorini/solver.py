"""Nitsche contact solver, multiplier recovery and supporting solvers.

The nonlinear discrete problem is solved by a primal active-set iteration
on the quadrature points of the contact boundary.  Each step assembles the
Nitsche system for a fixed contact region, solves it, and recomputes the
region from the positive part of ``du/dn - u / (alpha h)``.
"""
from __future__ import annotations

import hashlib
import logging
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (BoundaryTrace, LoadFunction, apply_dirichlet,
                       assemble_load, assemble_nitsche_blocks,
                       assemble_stiffness, boundary_trace)
from .element import DofMap
from .mesh import BoundaryClass, Mesh
from .quadrature import interval_rule, triangle_rule

log = logging.getLogger(__name__)

# below this many unknowns SuperLU's own minimum degree ordering is as fast
NESTED_MIN_SIZE = 4000


class SolverError(RuntimeError):
    """Linear or nonlinear solve failure."""


class ActiveSetError(SolverError):
    def __init__(self, msg, patterns=()):
        super().__init__(msg)
        self.patterns = patterns


@dataclass
class NitscheConfig:
    alpha: float = 0.1
    max_iter: int = 50
    tol: float = 1e-10
    activity_tol: float = 1e-10
    degree: int = 2
    quad_degree: int = 4
    edge_quad_degree: int = 5
    check_alpha: bool = True
    ordering: str = "auto"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.ordering not in ("auto", "mmd", "nested"):
            raise ValueError(f"unknown ordering {self.ordering!r}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class DiscreteSolution:
    dofmap: DofMap
    coefficients: np.ndarray
    alpha: float | None = None
    iterations: int = 0

    @property
    def mesh(self) -> Mesh:
        return self.dofmap.mesh

    @property
    def degree(self) -> int:
        return self.dofmap.degree

    def energy_norm(self, K=None) -> float:
        """Seminorm ``||grad u_h||_0``."""
        if K is None:
            K = assemble_stiffness(self.mesh, self.dofmap)
        u = self.coefficients
        return float(np.sqrt(max(u @ (K @ u), 0.0)))


@dataclass
class ContactState:
    """Multiplier data at the quadrature points of the contact edges.

    Arrays are indexed (contact edge, point).  ``raw`` is the unclipped
    value ``du/dn - u / (alpha h)``; ``lam`` its positive part.
    """
    edges: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    h: np.ndarray
    trace: np.ndarray
    dudn: np.ndarray
    raw: np.ndarray
    lam: np.ndarray
    active: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def n_active(self) -> int:
        return int(self.active.sum())


def contact_trace(m: Mesh, d: DofMap, edge_quad_degree=5) -> BoundaryTrace:
    return boundary_trace(m, d, m.edges_with_tag(BoundaryClass.CONTACT),
                          interval_rule(edge_quad_degree))


def compute_lambda(u: DiscreteSolution, m: Mesh | None = None, alpha: float | None = None,
                   activity_tol: float = 1e-10, trace: BoundaryTrace | None = None) -> ContactState:
    """Discrete multiplier ``(du_h/dn - u_h / (alpha h))_+`` on the contact edges."""
    m = m or u.mesh
    alpha = u.alpha if alpha is None else alpha
    if alpha is None or not alpha > 0:
        raise ValueError("alpha must be positive")
    if trace is None:
        trace = contact_trace(m, u.dofmap)
    c = u.coefficients
    tr = trace.trace(c)
    dn = trace.normal_derivative(c)
    raw = dn - tr / (alpha * trace.h[:, None])
    return ContactState(
        edges=trace.edges, points=trace.points, weights=trace.weights, h=trace.h,
        trace=tr, dudn=dn, raw=raw, lam=np.maximum(raw, 0.0),
        active=raw > activity_tol,
    )


def solve_linear(A, b, tol: float = 1e-10, check_definite: bool = True,
                 perm=None) -> np.ndarray:
    """Solve a symmetric sparse system by sparse LU.

    Raises :class:`SolverError` if the factorisation breaks down, the
    relative residual exceeds ``tol`` or, with ``check_definite``, a
    nonpositive pivot or ``b.x <= 0`` shows that ``A`` is not positive
    definite.
    """
    b = np.asarray(b, dtype=float)
    if b.size == 0:
        return np.zeros(0)
    A = sp.csc_matrix(A)
    solve = factorize(A, perm)
    x = solve(b)
    nb = np.linalg.norm(b)
    if not np.all(np.isfinite(x)):
        raise SolverError("linear solve produced non-finite values")
    r = np.linalg.norm(A @ x - b)
    if r > tol * max(nb, np.finfo(float).tiny):
        # one step of iterative refinement before giving up
        x = x + solve(b - A @ x)
        r = np.linalg.norm(A @ x - b)
        if r > tol * nb:
            raise SolverError(f"linear solve residual {r / nb:.2e} above tolerance {tol:.1e}")
    if check_definite and (solve.definite is False or (nb > 0 and b @ x <= 0)):
        raise SolverError("system matrix is not positive definite (alpha too large?)")
    return x


def factorize(A, perm=None):
    """Sparse LU of a symmetric matrix without pivoting.

    ``perm`` is a symmetric fill-reducing permutation; without one SuperLU
    computes a minimum degree ordering of ``A + A^T``.  Returns a callable
    solving with the original matrix.  Its ``definite`` attribute is True
    when all pivots are positive, which by Sylvester's law of inertia means
    ``A`` is positive definite, and None if SuperLU had to pivot.
    """
    A = sp.csc_matrix(A)
    opts = dict(diag_pivot_thresh=0.0, options=dict(SymmetricMode=True))
    try:
        if perm is None:
            lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", **opts)
        else:
            lu = spla.splu(sp.csc_matrix(A[perm][:, perm]), permc_spec="NATURAL", **opts)
    except RuntimeError as exc:
        raise SolverError(f"singular system: {exc}") from None

    if perm is None:
        solve = lu.solve
    else:
        def solve(b):
            x = np.empty_like(b, dtype=float)
            x[perm] = lu.solve(np.asarray(b, dtype=float)[perm])
            return x
    symmetric = np.array_equal(lu.perm_r, lu.perm_c)
    return _Factor(solve, bool(np.all(lu.U.diagonal() > 0)) if symmetric else None)


class _Factor:
    def __init__(self, solve, definite):
        self.solve = solve
        self.definite = definite

    def __call__(self, b):
        return self.solve(b)


def nested_dissection(coords, graph, leaf: int = 64) -> np.ndarray:
    """Geometric nested dissection ordering of a mesh graph.

    The unknowns are split at the median coordinate along the longer axis
    of their bounding box; the unknowns on one side that couple to the other
    form the separator, which is numbered last.  Blocks of at most ``leaf``
    unknowns keep their input order.

    Parameters
    ----------
    coords : (n, 2) array
        Position of every unknown.
    graph : sparse matrix
        Symmetric sparsity pattern of the system.
    """
    coords = np.asarray(coords, dtype=float)
    G = sp.csr_matrix(graph)
    n = G.shape[0]
    side = np.zeros(n, dtype=bool)
    out = []

    def split(idx):
        if len(idx) <= leaf:
            out.append(idx)
            return
        pts = coords[idx]
        axis = int(np.argmax(pts.max(axis=0) - pts.min(axis=0)))
        left = pts[:, axis] < np.median(pts[:, axis])
        if left.all() or not left.any():
            out.append(idx)
            return
        side[idx[left]] = True
        right = idx[~left]
        sub = G[right]
        rows = np.repeat(np.arange(len(right)), np.diff(sub.indptr))
        sep = np.zeros(len(right), dtype=bool)
        sep[rows[side[sub.indices]]] = True
        side[idx[left]] = False
        split(idx[left])
        split(right[~sep])
        out.append(right[sep])

    split(np.arange(n))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def _pattern_key(active):
    return hashlib.sha1(np.packbits(active.ravel()).tobytes()).hexdigest()


class NitscheProblem:
    """Pieces of the Nitsche system that do not depend on the contact region."""

    def __init__(self, m: Mesh, f: LoadFunction, cfg: NitscheConfig):
        self.mesh = m
        self.cfg = cfg
        self.dofmap = DofMap(m, cfg.degree)
        self.K = assemble_stiffness(m, self.dofmap)
        self.b = assemble_load(m, self.dofmap, f, triangle_rule(cfg.quad_degree))
        self.trace = contact_trace(m, self.dofmap, cfg.edge_quad_degree)
        self._perm = None

    def permutation(self, A):
        """Fill-reducing ordering, computed once since the pattern is fixed."""
        nested = self.cfg.ordering == "nested" or (
            self.cfg.ordering == "auto" and A.shape[0] > NESTED_MIN_SIZE)
        if nested and self._perm is None:
            X = self.dofmap.coordinates()[self.dofmap.free]
            self._perm = nested_dissection(X, A)
        return self._perm if nested else None

    def matrix(self, active) -> sp.csr_matrix:
        pen, cons, stab = assemble_nitsche_blocks(
            self.mesh, self.dofmap, self.cfg.alpha, active, self.trace)
        return (self.K + pen - cons - stab).tocsr()

    def solve(self, active) -> np.ndarray:
        A, b = apply_dirichlet(self.matrix(active), self.b, self.dofmap)
        return self.dofmap.expand(solve_linear(A, b, self.cfg.tol, perm=self.permutation(A)))

    def state(self, u) -> ContactState:
        sol = DiscreteSolution(self.dofmap, u, self.cfg.alpha)
        return compute_lambda(sol, self.mesh, self.cfg.alpha, self.cfg.activity_tol, self.trace)

    def residual(self, u, active) -> float:
        """Residual of the Nitsche equations with the region induced by ``u``."""
        A, b = apply_dirichlet(self.matrix(active), self.b, self.dofmap)
        return float(np.linalg.norm(A @ u[self.dofmap.free] - b))


def solve_nitsche(m: Mesh, f: LoadFunction, cfg: NitscheConfig | None = None,
                  initial_active=None):
    """Solve the Nitsche contact problem by active-set iteration.

    Returns
    -------
    DiscreteSolution, ContactState
    """
    cfg = cfg or NitscheConfig()
    prob = NitscheProblem(m, f, cfg)
    if cfg.check_alpha and len(prob.trace.edges):
        ci = estimate_inverse_constant(m, prob.dofmap, K=prob.K)
        if cfg.alpha >= ci:
            warnings.warn(f"alpha={cfg.alpha} is not below the estimated inverse "
                          f"constant {ci:.4g}; the system may be indefinite")

    active = np.ones(prob.trace.weights.shape, dtype=bool)
    if initial_active is not None:
        active = np.asarray(initial_active, dtype=bool).reshape(active.shape)
    history: OrderedDict = OrderedDict()
    prev = None
    for it in range(1, cfg.max_iter + 1):
        u = prob.solve(active)
        state = prob.state(u)
        key = _pattern_key(active)
        if np.array_equal(state.active, active):
            log.debug("active set converged after %d iterations", it)
            return DiscreteSolution(prob.dofmap, u, cfg.alpha, it), state
        history[key] = (u, state)
        while len(history) > 8:
            history.popitem(last=False)
        new_key = _pattern_key(state.active)
        if new_key in history:
            # cycle: keep the iterate whose own region gives the smallest residual
            best = min(history.values(), key=lambda us: prob.residual(us[0], us[1].active))
            warnings.warn(f"active set cycling detected after {it} iterations; "
                          "returning the iterate with the smallest residual")
            return DiscreteSolution(prob.dofmap, best[0], cfg.alpha, it), best[1]
        prev, active = active, state.active
    raise ActiveSetError(
        f"active set iteration did not converge in {cfg.max_iter} iterations",
        patterns=(prev, active))


def contact_boundary_form(m: Mesh, d: DofMap, edge_quad_degree=5) -> sp.csr_matrix:
    """Matrix of sum_E h_E (dv/dn, dw/dn)_E over contact edges."""
    tr = contact_trace(m, d, edge_quad_degree)
    local = np.einsum("eq,eqi,eqj->eij", tr.weights * tr.h[:, None], tr.dphidn, tr.dphidn)
    from .assembly import scatter_matrix
    return scatter_matrix(tr.dofs, local, d.ndofs)


def estimate_inverse_constant(m: Mesh, d: DofMap | int = 2, K=None, tol: float = 1e-10,
                              max_iter: int = 2000, seed: int = 0) -> float:
    """Largest ``c`` with ``c sum_E h_E ||dv/dn||_E^2 <= ||grad v||^2`` on V_h.

    Lanczos iteration for the largest generalised eigenvalue of the contact
    edge form against the stiffness form; the constant is its reciprocal.
    """
    if isinstance(d, int):
        d = DofMap(m, d)
    if K is None:
        K = assemble_stiffness(m, d)
    B = contact_boundary_form(m, d)
    Kf = sp.csc_matrix(K[d.free][:, d.free])
    Bf = sp.csr_matrix(B[d.free][:, d.free])
    coupled = np.flatnonzero(np.abs(Bf).sum(axis=1).A1 > 0)
    if len(coupled) == 0:
        raise ValueError("no contact edges")
    perm = None
    if Kf.shape[0] > NESTED_MIN_SIZE:
        perm = nested_dissection(d.coordinates()[d.free], Kf)
    solve = factorize(Kf, perm)
    n = Kf.shape[0]
    v0 = np.zeros(n)
    v0[coupled] = np.random.default_rng(seed).standard_normal(len(coupled))
    v0 = solve(Bf @ v0)
    if n <= 2:
        # too small for Lanczos; the dense problem is trivial
        mu = scipy.linalg.eigh(Bf.toarray(), Kf.toarray(), eigvals_only=True)[-1]
        return 1.0 / float(mu)
    Minv = spla.LinearOperator((n, n), matvec=solve, dtype=float)
    try:
        mu = spla.eigsh(Bf, k=1, M=Kf, Minv=Minv, which="LA", v0=v0, tol=tol,
                        maxiter=max_iter, return_eigenvectors=False)[0]
    except spla.ArpackNoConvergence:
        raise SolverError("eigenvalue iteration for the inverse constant did not converge") \
            from None
    return 1.0 / float(mu)


def dense_inverse_constant(m: Mesh, degree: int = 1) -> float:
    """Reference value of the inverse constant from a dense eigensolve."""
    d = DofMap(m, degree)
    K = assemble_stiffness(m, d)[d.free][:, d.free].toarray()
    B = contact_boundary_form(m, d)[d.free][:, d.free].toarray()
    return 1.0 / scipy.linalg.eigh(B, K, eigvals_only=True)[-1]


def solve_primal_oracle(m: Mesh, f: LoadFunction, tol: float = 1e-13,
                        max_sweeps: int = 200000) -> DiscreteSolution:
    """P1 projected Gauss-Seidel for the constrained energy minimisation.

    Minimises ``1/2 (grad v, grad v) - (f, v)`` over P1 functions vanishing
    on the Dirichlet boundary and nonnegative at contact-boundary nodes.
    Stops when the energy decrease of a sweep falls below
    ``tol * max(|energy|, tiny)``.
    """
    d = DofMap(m, 1)
    K = assemble_stiffness(m, d)
    b = assemble_load(m, d, f, triangle_rule(4))
    A, rhs = apply_dirichlet(K, b, d)
    A = sp.csr_matrix(A)
    n = A.shape[0]
    cnodes = np.unique(m.edges[m.edges_with_tag(BoundaryClass.CONTACT)])
    lower = np.full(d.ndofs, -np.inf)
    lower[cnodes] = 0.0
    lower = lower[d.free]

    indptr, indices, data = A.indptr, A.indices, A.data
    diag = A.diagonal()
    x = np.zeros(n)
    rows = [(indices[indptr[i]:indptr[i + 1]], data[indptr[i]:indptr[i + 1]]) for i in range(n)]
    energy = 0.0
    for sweep in range(1, max_sweeps + 1):
        for i in range(n):
            cols, vals = rows[i]
            r = rhs[i] - vals @ x[cols] + diag[i] * x[i]
            v = r / diag[i]
            x[i] = v if v > lower[i] else lower[i]
        new = 0.5 * x @ (A @ x) - rhs @ x
        if energy - new <= tol * max(abs(new), 1e-300) and sweep > 1:
            return DiscreteSolution(d, d.expand(x), None, sweep)
        energy = new
    raise SolverError("projected Gauss-Seidel did not reach the energy tolerance")
