"""Quadrature rules on the reference triangle and the unit interval.

The reference triangle is {(xi, eta) : xi >= 0, eta >= 0, xi + eta <= 1},
so weights of every triangle rule sum to 1/2.  Symmetric Gauss rules with
positive weights are tabulated for exactness degrees up to 6; higher
degrees fall back to a collapsed tensor-product Gauss rule, which is also
exposed separately because it makes a convenient independent cross-check
of the tabulated rules.  (The usual 16-point degree-8 table is published
to fewer digits than we need, so degree 7 and up go through the collapsed
construction, which is exact to rounding at any degree.)
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedDegree

MAX_DEGREE = 10


@dataclass(frozen=True)
class QuadratureRule:
    """Positive quadrature rule on the reference triangle.

    Attributes
    ----------
    degree : int
        Every bivariate polynomial up to this total degree is integrated
        exactly.
    points : ndarray, shape (nq, 2)
        Reference coordinates (xi, eta) of the nodes.
    weights : ndarray, shape (nq,)
        Weights, summing to the reference area 1/2.
    """

    degree: int
    points: np.ndarray
    weights: np.ndarray

    @property
    def bary(self):
        """Barycentric node coordinates, shape (nq, 3)."""
        lam0 = 1.0 - self.points[:, 0] - self.points[:, 1]
        return np.column_stack([lam0, self.points[:, 0], self.points[:, 1]])

    def __len__(self):
        return len(self.weights)


def _orbit3(a, b):
    # permutations of the barycentric triple (a, b, b)
    return [(a, b, b), (b, a, b), (b, b, a)]


def _orbit6(a, b, c):
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


# Symmetric rules, stored as (weight, barycentric point) lists with weights
# normalized to sum to 1.  All weights positive.
_TRIANGLE_TABLES = {
    1: [(1.0, (1 / 3, 1 / 3, 1 / 3))],
    2: [(1 / 3, p) for p in _orbit3(2 / 3, 1 / 6)],
    4: (
        [(0.223381589678011, p) for p in _orbit3(0.108103018168070, 0.445948490915965)]
        + [(0.109951743655322, p) for p in _orbit3(0.816847572980459, 0.091576213509771)]
    ),
    5: (
        [(0.225, (1 / 3, 1 / 3, 1 / 3))]
        + [(0.132394152788506, p) for p in _orbit3(0.059715871789770, 0.470142064105115)]
        + [(0.125939180544827, p) for p in _orbit3(0.797426985353087, 0.101286507323456)]
    ),
    6: (
        [(0.116786275726379, p) for p in _orbit3(0.501426509658179, 0.249286745170910)]
        + [(0.050844906370207, p) for p in _orbit3(0.873821971016996, 0.063089014491502)]
        + [
            (0.082851075618374, p)
            for p in _orbit6(0.053145049844817, 0.310352451033784, 0.636502499121399)
        ]
    ),
}


def _from_table(degree):
    entries = _TRIANGLE_TABLES[degree]
    pts = np.array([[b[1], b[2]] for _, b in entries])
    wts = 0.5 * np.array([w for w, _ in entries])
    return QuadratureRule(degree=degree, points=pts, weights=wts)


def gauss1d(n):
    """n-point Gauss-Legendre rule on [0, 1]; weights sum to 1."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def line_rule(degree):
    """1D rule on [0, 1] exact for polynomials up to `degree`."""
    if degree < 0:
        raise UnsupportedDegree(f"negative quadrature degree {degree}")
    n = max(1, math.ceil((degree + 1) / 2))
    return gauss1d(n)


def collapsed_rule(degree):
    """Tensor Gauss rule on the triangle via the square-to-triangle collapse.

    Exact to any requested total degree, at the price of more points than
    the symmetric tables.  (xi, eta) = (u, v (1 - u)) with Jacobian 1 - u.
    """
    if degree < 1:
        raise UnsupportedDegree(f"quadrature degree must be >= 1, got {degree}")
    n = math.ceil((degree + 2) / 2)
    xu, wu = gauss1d(n)
    xv, wv = gauss1d(n)
    U, V = np.meshgrid(xu, xv, indexing="ij")
    WU, WV = np.meshgrid(wu, wv, indexing="ij")
    xi = U.ravel()
    eta = (V * (1.0 - U)).ravel()
    w = (WU * WV * (1.0 - U)).ravel()
    pts = np.column_stack([xi, eta])
    return QuadratureRule(degree=degree, points=pts, weights=w)


def quadrature_for(degree):
    """Smallest stocked triangle rule with exactness >= degree.

    Degrees above MAX_DEGREE raise UnsupportedDegree; 7 through 10 are
    served by the collapsed rule since the symmetric tables stop at 6.
    """
    if degree < 1 or degree > MAX_DEGREE:
        raise UnsupportedDegree(
            f"quadrature degree {degree} outside supported range 1..{MAX_DEGREE}"
        )
    for d in sorted(_TRIANGLE_TABLES):
        if d >= degree:
            return _from_table(d)
    return collapsed_rule(degree)
