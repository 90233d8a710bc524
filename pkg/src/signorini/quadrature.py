"""Quadrature rules on the reference triangle and the unit interval."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class QuadratureRule:
    """Points in reference coordinates and weights.

    Triangle rules live on (0,0), (1,0), (0,1) with weights summing to 1/2;
    interval rules live on [0, 1] with weights summing to 1.
    """
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)


def _sym3(a, w):
    b = 1.0 - 2.0 * a
    return [(a, a), (b, a), (a, b)], [w, w, w]


def _collapsed_rule(degree):
    # Duffy-collapsed Gauss-Jacobi x Gauss-Legendre product rule
    n = degree // 2 + 1
    xa, wa = roots_jacobi(n, 1.0, 0.0)
    xb, wb = np.polynomial.legendre.leggauss(n)
    s = (xa + 1) / 2
    wa = wa / 4
    tt = (xb + 1) / 2
    wb = wb / 2
    S, T = np.meshgrid(s, tt, indexing="ij")
    pts = np.column_stack([((1 - S) * T).ravel(), S.ravel()])
    w = np.outer(wa, wb).ravel()
    return pts, w


def triangle_rule(degree: int = 4) -> QuadratureRule:
    """Rule exact for polynomials of total degree ``degree``.

    Degree 4 is the symmetric six-point rule; other degrees fall back to a
    collapsed Gauss product rule.
    """
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    if degree <= 1:
        pts, w = [(1 / 3, 1 / 3)], [0.5]
    elif degree == 2:
        pts, w = _sym3(1 / 6, 1 / 6)
    elif degree in (3, 4):
        p1, w1 = _sym3(0.445948490915965, 0.223381589678011 / 2)
        p2, w2 = _sym3(0.091576213509771, 0.109951743655322 / 2)
        pts, w = p1 + p2, w1 + w2
    else:
        pts, w = _collapsed_rule(degree)
    return QuadratureRule(np.asarray(pts, dtype=float), np.asarray(w, dtype=float), degree)


def interval_rule(degree: int = 5) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1] exact up to ``degree``."""
    n = max(1, (degree + 2) // 2)
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule((x + 1) / 2, w / 2, 2 * n - 1)
