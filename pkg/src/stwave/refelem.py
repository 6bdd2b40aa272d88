"""Lagrange reference elements on the unit triangle.

Continuous P1, P2 and P3 elements with a fixed node layout: the three
vertices first, then degree-1 equispaced nodes per local edge (edges
(0,1), (1,2), (2,0), walked first-to-second), then the interior node for
P3.  Basis polynomials are represented by their monomial coefficients,
obtained from the inverted Vandermonde matrix, which keeps evaluation of
values, gradients and second derivatives uniform across degrees and
vectorized over arbitrary point arrays.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedDegree

LOCAL_EDGES = [(0, 1), (1, 2), (2, 0)]
_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def _monomial_exponents(degree):
    return [(a, b) for total in range(degree + 1) for a in range(total, -1, -1)
            for b in [total - a]]


def _lattice_nodes(degree):
    nodes = [_VERTS[i] for i in range(3)]
    for (i, j) in LOCAL_EDGES:
        for s in range(1, degree):
            nodes.append(_VERTS[i] + (s / degree) * (_VERTS[j] - _VERTS[i]))
    if degree >= 3:
        nodes.append(np.array([1 / 3, 1 / 3]))
    return np.array(nodes)


@dataclass(frozen=True)
class ReferenceElement:
    """Scalar Lagrange element of the given degree on the unit triangle."""

    degree: int
    nodes: np.ndarray = field(repr=False)
    exponents: tuple = field(repr=False)
    coeffs: np.ndarray = field(repr=False)

    @property
    def ndof(self):
        return self.nodes.shape[0]

    @property
    def nodes_bary(self):
        lam0 = 1.0 - self.nodes[:, 0] - self.nodes[:, 1]
        return np.column_stack([lam0, self.nodes])


def reference_element(degree):
    """Build the P1, P2 or P3 reference element."""
    if degree not in (1, 2, 3):
        raise UnsupportedDegree(f"element degree must be 1, 2 or 3, got {degree}")
    nodes = _lattice_nodes(degree)
    expo = _monomial_exponents(degree)
    if len(expo) != len(nodes):
        raise AssertionError("node lattice does not match monomial count")
    vand = np.empty((len(nodes), len(expo)))
    for m, (a, b) in enumerate(expo):
        vand[:, m] = nodes[:, 0] ** a * nodes[:, 1] ** b
    coeffs = np.linalg.inv(vand)  # coeffs[m, j]: monomial m of basis j
    return ReferenceElement(degree=degree, nodes=nodes, exponents=tuple(expo),
                            coeffs=coeffs)


def _mono_table(expo, pts, da, db):
    """d^da/dxi^da d^db/deta^db of each monomial at pts, shape (..., nmono)."""
    out = np.empty(pts.shape[:-1] + (len(expo),))
    xi, eta = pts[..., 0], pts[..., 1]
    for m, (a, b) in enumerate(expo):
        ca = np.prod(range(a, a - da, -1)) if a >= da else 0
        cb = np.prod(range(b, b - db, -1)) if b >= db else 0
        if ca == 0 or cb == 0:
            out[..., m] = 0.0
        else:
            out[..., m] = ca * cb * xi ** (a - da) * eta ** (b - db)
    return out


def eval_basis(elem, points):
    """Evaluate all basis functions of `elem` at reference points.

    Parameters
    ----------
    elem : ReferenceElement
    points : array_like, shape (..., 2)

    Returns
    -------
    values : ndarray, shape (..., ndof)
    grads : ndarray, shape (..., ndof, 2)
        Derivatives with respect to (xi, eta).
    hess : ndarray, shape (..., ndof, 2, 2)
        Second derivatives; symmetric in the last two axes.
    """
    pts = np.asarray(points, dtype=float)
    expo = elem.exponents
    values = _mono_table(expo, pts, 0, 0) @ elem.coeffs
    grads = np.stack(
        [_mono_table(expo, pts, 1, 0) @ elem.coeffs,
         _mono_table(expo, pts, 0, 1) @ elem.coeffs], axis=-1)
    dxx = _mono_table(expo, pts, 2, 0) @ elem.coeffs
    dxy = _mono_table(expo, pts, 1, 1) @ elem.coeffs
    dyy = _mono_table(expo, pts, 0, 2) @ elem.coeffs
    hess = np.stack(
        [np.stack([dxx, dxy], axis=-1), np.stack([dxy, dyy], axis=-1)], axis=-1)
    return values, grads, hess
