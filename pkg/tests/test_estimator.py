import numpy as np
import pytest

from signorini.element import DofMap
from signorini.estimator import (contact_residual, element_residual,
                                 global_estimate, h1_error, interior_jump,
                                 laplacian, neumann_residual, oscillation, s_terms)
from signorini.mesh import BoundaryClass, Mesh, build_unit_square, refine_uniform
from signorini.problems import paper_load, smooth_exact, smooth_exact_grad, smooth_load
from signorini.solver import DiscreteSolution, NitscheConfig, compute_lambda, solve_nitsche


def field(m, k, fun, alpha=0.1):
    d = DofMap(m, k)
    return DiscreteSolution(d, d.interpolate(fun), alpha)


def test_laplacian_of_quadratic(square4):
    u = field(square4, 2, lambda x, y: x ** 2 + 3 * x * y - y ** 2 / 2)
    np.testing.assert_allclose(laplacian(u), 1.0, atol=1e-11)
    np.testing.assert_allclose(laplacian(field(square4, 1, lambda x, y: x * y)), 0.0)


def test_element_residual_examples(square4):
    zero = lambda x, y: 0 * x  # noqa: E731
    np.testing.assert_allclose(element_residual(field(square4, 1, lambda x, y: x * y), zero), 0)
    u = field(square4, 2, lambda x, y: x ** 2)
    np.testing.assert_allclose(element_residual(u, lambda x, y: -2 + 0 * x), 0, atol=1e-11)
    u0 = field(square4, 2, zero)
    np.testing.assert_allclose(element_residual(u0, lambda x, y: 1 + 0 * x),
                               square4.h * np.sqrt(square4.area), rtol=1e-13)


def test_interior_jump_linear_field_vanishes(square4):
    u = field(square4, 2, lambda x, y: 2 * x - y + 1)
    np.testing.assert_allclose(interior_jump(u), 0, atol=1e-12)


def two_elements(swap=False):
    # shared edge x = 0.5 of length L = 1
    p = np.array([[0.0, 0.0], [0.5, 0.0], [0.5, 1.0], [1.0, 1.0]])
    t = [[0, 1, 2], [1, 3, 2]]
    if swap:
        t = t[::-1]
    bnd = [[0, 1], [1, 3], [3, 2], [2, 0]]
    return Mesh(p, t, bnd, [BoundaryClass.NEUMANN] * 4)


@pytest.mark.parametrize("swap", [False, True])
def test_interior_jump_hand_value(swap):
    m = two_elements(swap)
    d = DofMap(m, 1)
    # gradient (1, 0) on the left triangle, (0, 0) on the right one
    u = DiscreteSolution(d, np.minimum(m.p[:, 0], 0.5))
    shared = m.interior_edges
    assert len(shared) == 1 and m.edge_length[shared[0]] == pytest.approx(1.0)
    np.testing.assert_allclose(interior_jump(u), [1.0], rtol=1e-13)


def test_neumann_residual_examples(square4):
    zero = field(square4, 2, lambda x, y: 0 * x)
    np.testing.assert_allclose(neumann_residual(zero), 0)
    ne = square4.edges_with_tag(BoundaryClass.NEUMANN)
    bottom = ne[np.abs(square4.p[square4.edges[ne]][..., 1]).max(axis=1) < 1e-14]
    np.testing.assert_allclose(neumann_residual(field(square4, 2, lambda x, y: x), bottom), 0,
                               atol=1e-13)
    L = square4.edge_length[bottom]
    np.testing.assert_allclose(neumann_residual(field(square4, 2, lambda x, y: y), bottom), L,
                               rtol=1e-13)


def test_contact_residual_fully_active_identity(square4):
    alpha = 0.1
    # u < 0 on the contact side: every point active and lambda - du/dn = -u/(alpha h)
    u = field(square4, 2, lambda x, y: -0.5 - y ** 2 + 0 * x, alpha)
    c = compute_lambda(u)
    assert c.active.all()
    hE = square4.edge_length[c.edges]
    expect = np.sqrt(hE) / (alpha * hE) * np.sqrt((c.weights * c.trace ** 2).sum(axis=1))
    np.testing.assert_allclose(contact_residual(u, c), expect, rtol=1e-12)


def test_contact_residual_separation(square4):
    u = field(square4, 2, lambda x, y: 3 + y ** 2)
    c = compute_lambda(u)
    np.testing.assert_allclose(contact_residual(u, c), 0, atol=1e-12)


@pytest.mark.parametrize("k", [1, 2])
def test_oscillation_polynomials_vanish(square4, k):
    np.testing.assert_allclose(oscillation(square4, lambda x, y: 0 * x, k), 0)
    poly = (lambda x, y: 1 + 2 * x - y) if k == 1 else (lambda x, y: x * y - x ** 2 + 3)
    assert oscillation(square4, poly, k).max() < 1e-12


def test_oscillation_rate():
    meshes = [build_unit_square(n) for n in (4, 8, 16)]
    for k in (1, 2):
        osc = [np.sqrt((oscillation(m, paper_load, k) ** 2).sum()) for m in meshes]
        rates = np.log2(np.array(osc[:-1]) / np.array(osc[1:]))
        # h_K ||f - f_h|| per element is O(h^{k+2}); the l2 sum loses one power
        assert np.all(rates > k + 1 - 0.2)


def test_zero_state_gives_zero_estimate(square4):
    u, c = solve_nitsche(square4, lambda x, y: 0 * x)
    ind = global_estimate(u, c, lambda x, y: 0 * x)
    assert ind.eta == 0 and ind.S == 0


def test_feasible_complementary_state_has_zero_S(square4):
    u = field(square4, 2, lambda x, y: 1 + x * y)
    c = compute_lambda(u)
    assert s_terms(c) == (0.0, 0.0)


def test_indicator_set_invariants(square8):
    u, c = solve_nitsche(square8, paper_load)
    ind = global_estimate(u, c, paper_load)
    for a in (ind.elem, ind.interior, ind.contact, ind.neumann, ind.osc, ind.adaptive):
        assert np.all(a >= 0)
    total = (ind.elem ** 2).sum() + (ind.interior ** 2).sum() + (ind.contact ** 2).sum() \
        + (ind.neumann ** 2).sum()
    assert ind.eta ** 2 == pytest.approx(total, rel=1e-14)
    assert ind.S == pytest.approx(ind.s_trace + ind.s_complementarity)
    # E_K^2 against the edge indicators scaled by h_K / h_E
    m = square8
    hE = m.edge_length
    bound = ind.elem ** 2
    for edges, vals in ((ind.interior_edges, ind.interior), (ind.contact_edges, ind.contact),
                        (ind.neumann_edges, ind.neumann)):
        for side in (0, 1):
            K = m.e2t[edges, side]
            ok = K >= 0
            np.add.at(bound, K[ok], (m.h[K[ok]] / hE[edges[ok]]) * vals[ok] ** 2)
    np.testing.assert_allclose(ind.adaptive ** 2, bound, rtol=1e-12)


def test_flat_interior_p1_has_zero_indicator(square4):
    u = field(square4, 1, lambda x, y: 0 * x + 2.0)
    c = compute_lambda(u)
    ind = global_estimate(u, c, lambda x, y: 0 * x)
    assert np.all(ind.adaptive == 0)


def test_eta_decreases_under_uniform_refinement():
    m = build_unit_square(4)
    etas, contact = [], []
    for _ in range(3):
        u, c = solve_nitsche(m, paper_load)
        ind = global_estimate(u, c, paper_load)
        etas.append(ind.eta)
        contact.append((ind.contact ** 2).sum())
        m = refine_uniform(m)
    assert etas[0] > etas[1] > etas[2]
    assert contact[0] > contact[1] > contact[2]


def test_h1_error_of_interpolant_rate():
    errs = []
    for n in (4, 8, 16):
        m = build_unit_square(n)
        errs.append(h1_error(field(m, 2, smooth_exact), smooth_exact_grad))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    np.testing.assert_allclose(rates, 2.0, atol=0.1)


def test_effectivity_band_smooth_problem():
    m = build_unit_square(4)
    eff = []
    for _ in range(4):
        u, c = solve_nitsche(m, smooth_load, NitscheConfig())
        ind = global_estimate(u, c, smooth_load)
        eff.append(ind.eta / h1_error(u, smooth_exact_grad))
        assert c.n_active == 0 and ind.S == 0
        m = refine_uniform(m)
    eff = np.array(eff)
    assert np.all((eff >= 0.5) & (eff <= 30))
    ratios = eff[1:] / eff[:-1]
    assert np.all((ratios >= 0.4) & (ratios <= 2.5))
