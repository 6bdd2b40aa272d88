"""Scalar Lagrange spaces on the slab: dof layout, interpolation, evaluation."""

import numpy as np
import pytest

from stwave.errors import MeshMismatch, OutOfDomain
from stwave.fespace import (DiscreteField, FESpace, dof_count, eval_field,
                            export_field_csv, inverse_inequality_constant,
                            interpolate_nodal, load_field_csv, locate_points,
                            trace_inequality_constant)
from stwave.mesh import SIGMA, build_structured


@pytest.fixture(scope="module")
def mesh():
    return build_structured(5, 7, 2.0, omega=(0.2, 0.4))


def n_edges(mesh):
    e = set()
    for a, b, c in mesh.triangles:
        e |= {tuple(sorted(p)) for p in ((a, b), (b, c), (c, a))}
    return len(e)


@pytest.mark.parametrize("degree", [1, 2, 3])
def test_dof_count(mesh, degree):
    V = FESpace(mesh, degree)
    ne = n_edges(mesh)
    expect = {1: mesh.nvert,
              2: mesh.nvert + ne,
              3: mesh.nvert + 2 * ne + mesh.ntri}[degree]
    assert V.ndof == expect == dof_count(mesh, degree)
    assert V.cell_dofs.shape == (mesh.ntri, V.ref.ndof)


@pytest.mark.parametrize("degree", [1, 2, 3])
def test_shared_dofs_are_consistent(mesh, degree):
    # interpolating a globally smooth function must give one value per dof,
    # regardless of which adjacent cell claims it
    V = FESpace(mesh, degree)
    f = lambda t, x: np.sin(t) * np.cos(2 * x) + x
    u = interpolate_nodal(V, f)
    pts = np.column_stack([np.full(40, 0.37), np.linspace(0.01, 0.99, 40)])
    vals, _ = eval_field(u, pts)
    assert np.allclose(vals, f(pts[:, 0], pts[:, 1]),
                       atol={1: 2e-2, 2: 1e-3, 3: 2e-5}[degree])


@pytest.mark.parametrize("degree", [1, 2, 3])
def test_polynomial_interpolation_exact(mesh, degree):
    V = FESpace(mesh, degree)
    f = lambda t, x: (1.0 + 2 * t - x) ** degree
    u = interpolate_nodal(V, f)
    rng = np.random.default_rng(1)
    pts = np.column_stack([rng.uniform(0.05, 1.95, 30),
                           rng.uniform(0.05, 0.95, 30)])
    vals, grads = eval_field(u, pts)
    assert np.allclose(vals, f(pts[:, 0], pts[:, 1]), atol=1e-11)
    # gradient of the linear case is exact too
    if degree == 1:
        assert np.allclose(grads[:, 0], 2.0, atol=1e-11)
        assert np.allclose(grads[:, 1], -1.0, atol=1e-11)


def test_locate_points_out_of_domain(mesh):
    with pytest.raises(OutOfDomain):
        locate_points(mesh, np.array([[0.5, 1.4]]))
    with pytest.raises(OutOfDomain):
        locate_points(mesh, np.array([[-0.1, 0.5]]))


def test_boundary_dofs_vanish(mesh):
    V = FESpace(mesh, 2)
    bd = V.boundary_dofs(SIGMA)
    u = interpolate_nodal(V, lambda t, x: x * (1.0 - x) * (1.0 + t))
    assert np.allclose(u.dofs[bd], 0.0, atol=1e-14)
    assert len(bd) > 0


def test_field_length_guard(mesh):
    V = FESpace(mesh, 1)
    with pytest.raises(MeshMismatch):
        DiscreteField(V, np.zeros(V.ndof + 1))
    u = DiscreteField(V, np.zeros(V.ndof))
    v = u.copy()
    v.dofs[0] = 1.0
    assert u.dofs[0] == 0.0


def test_export_load_roundtrip(mesh, tmp_path):
    V = FESpace(mesh, 2)
    u = interpolate_nodal(V, lambda t, x: t ** 2 - 0.3 * x)
    path = tmp_path / "field.csv"
    export_field_csv(u, path)
    v = load_field_csv(V, path)
    assert np.allclose(v.dofs, u.dofs, atol=1e-14)


def test_inequality_constants_scale(mesh):
    V = FESpace(mesh, 2)
    cinv = inverse_inequality_constant(V)
    ctr = trace_inequality_constant(V)
    assert cinv > 0 and ctr > 0
    # on the refined mesh the h-normalized constants stay bounded
    V2 = FESpace(build_structured(10, 14, 2.0), 2)
    assert inverse_inequality_constant(V2) < 4 * cinv
    assert trace_inequality_constant(V2) < 4 * ctr
