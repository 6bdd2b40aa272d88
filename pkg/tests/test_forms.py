"""Assembled bilinear forms: wave operator, observation mass, stabilizers."""

import numpy as np
import pytest
import scipy.io

from stwave.errors import OmegaNotAligned, VariantConstraint
from stwave.fespace import DiscreteField, FESpace, interpolate_nodal
from stwave.forms import (assemble_data_functional, assemble_dual_stabilizer,
                          assemble_observation_mass,
                          assemble_primal_stabilizer, assemble_wave_form,
                          check_variant, dual_stabilizer_cellwise,
                          export_matrix_market, facet_jump,
                          observation_cells, observation_mass_cross,
                          primal_stabilizer_cellwise, primal_stabilizer_cross)
from stwave.mesh import INITIAL, FINAL, SIGMA, build_structured
from stwave.problems import example1, make_observation, represent_observation
from stwave.quadrature import line_rule, quadrature_for


@pytest.fixture(scope="module")
def mesh():
    return build_structured(8, 10, 2.0, omega=(0.125, 0.375))


def test_wave_form_against_box_residual(mesh):
    # u = x*(1-x) is smooth with box u = 2 and vanishes on the lateral
    # boundary, so the Nitsche terms drop and a_h(u, w) = (2, w)_M.
    # With w = 1 + t/2 - x/4 the integral is 2*(2 + 1 - 1/4) = 11/2.
    Vp, Vq = FESpace(mesh, 2), FESpace(mesh, 1)
    B = assemble_wave_form(Vp, Vq)
    u = interpolate_nodal(Vp, lambda t, x: x * (1 - x))
    w = interpolate_nodal(Vq, lambda t, x: 1.0 + 0.5 * t - 0.25 * x)
    lhs = w.dofs @ (B @ u.dofs)
    assert lhs == pytest.approx(5.5, rel=1e-12)


def test_observation_mass_is_strip_l2(mesh):
    V = FESpace(mesh, 2)
    M = assemble_observation_mass(V, mesh.omega)
    u = interpolate_nodal(V, lambda t, x: 1.0 + t * x)
    v = interpolate_nodal(V, lambda t, x: x - t)
    # int over (0,2) x (1/8, 3/8) of (1 + t x)(x - t), worked by hand
    exact = -65.0 / 128.0
    assert u.dofs @ (M @ v.dofs) == pytest.approx(exact, rel=1e-12)


def test_observation_cells_alignment(mesh):
    cells = observation_cells(mesh, mesh.omega)
    assert np.array_equal(np.sort(cells), np.nonzero(mesh.tri_in_omega)[0])
    with pytest.raises(OmegaNotAligned):
        observation_cells(mesh, (0.13, 0.29))


def test_primal_stabilizer_oracle(mesh):
    # flux jumps vanish for a globally polynomial interpolant and u = 0 on
    # Sigma, so only the element residual h^2 ||box u||^2 remains
    V2 = FESpace(mesh, 2)
    S2 = assemble_primal_stabilizer(V2, "residual-jump")
    u2 = interpolate_nodal(V2, lambda t, x: x * (1 - x))  # box u = 2
    assert u2.dofs @ (S2 @ u2.dofs) == pytest.approx(
        mesh.h ** 2 * 8.0, rel=1e-9)
    V3 = FESpace(mesh, 3)
    S3 = assemble_primal_stabilizer(V3, "residual-jump")
    u3 = interpolate_nodal(V3, lambda t, x: t * x * (1 - x))  # box u = 2t
    assert u3.dofs @ (S3 @ u3.dofs) == pytest.approx(
        mesh.h ** 2 * 32.0 / 3.0, rel=1e-9)


def test_face_only_equals_residual_jump_for_p1(mesh):
    V = FESpace(mesh, 1)
    rng = np.random.default_rng(7)
    u = rng.standard_normal(V.ndof)
    a = u @ (assemble_primal_stabilizer(V, "residual-jump") @ u)
    b = u @ (assemble_primal_stabilizer(V, "face-only") @ u)
    assert a == pytest.approx(b, rel=1e-12)


def test_variant_gate():
    check_variant("face-only", 3, 1)
    with pytest.raises(VariantConstraint):
        check_variant("face-only", 3, 0)  # q below p - 2
    with pytest.raises(VariantConstraint):
        check_variant("smoothing", 2, 1)


def test_dual_stabilizer_identity(mesh):
    # the gradient variant is exactly grad-energy plus h^-1 boundary mass
    V = FESpace(mesh, 1)
    S = assemble_dual_stabilizer(V, "gradient")
    rng = np.random.default_rng(3)
    xq, wq = line_rule(4)
    rule = quadrature_for(4)
    from stwave.fespace import cell_gradients, cell_values, physical_points
    bnd = np.concatenate([mesh.facets_with_tag(tag)
                          for tag in (SIGMA, INITIAL, FINAL)])
    for _ in range(10):
        z = DiscreteField(V, rng.standard_normal(V.ndof))
        quad = z.dofs @ (S @ z.dofs)
        cells = np.arange(mesh.ntri)
        g = cell_gradients(z, cells, np.broadcast_to(
            rule.points, (mesh.ntri,) + rule.points.shape))
        vol = np.sum(mesh.areas[:, None] * 2 * rule.weights[None, :]
                     * np.sum(g ** 2, axis=-1))
        srf = 0.0
        for i in bnd:
            f = mesh.facet(i)
            a, b = mesh.vertices[list(f.vertex_ids)]
            pts = a[None] + xq[:, None] * (b - a)[None]
            from stwave.fespace import eval_field
            vals, _ = eval_field(z, pts)
            srf += f.length * np.sum(wq * vals ** 2)
        assert quad == pytest.approx(vol + srf / mesh.h, rel=1e-12)


def test_residual_dual_variant_positive(mesh):
    V = FESpace(mesh, 2)
    S = assemble_dual_stabilizer(V, "residual")
    rng = np.random.default_rng(11)
    z = rng.standard_normal(V.ndof)
    assert z @ (S @ z) > 0


@pytest.mark.parametrize("variant", ["residual-jump", "face-only"])
def test_primal_cellwise_split_matches_matrix(mesh, variant):
    V = FESpace(mesh, 2)
    S = assemble_primal_stabilizer(V, variant)
    rng = np.random.default_rng(5)
    u = DiscreteField(V, rng.standard_normal(V.ndof))
    per_cell = primal_stabilizer_cellwise(u, variant)
    assert per_cell.shape == (mesh.ntri,)
    assert np.all(per_cell >= -1e-14)
    total = u.dofs @ (S @ u.dofs)
    assert per_cell.sum() == pytest.approx(total, rel=1e-12)


@pytest.mark.parametrize("variant", ["gradient", "residual"])
def test_dual_cellwise_split_matches_matrix(mesh, variant):
    V = FESpace(mesh, 1)
    S = assemble_dual_stabilizer(V, variant)
    rng = np.random.default_rng(6)
    z = DiscreteField(V, rng.standard_normal(V.ndof))
    per_cell = dual_stabilizer_cellwise(z, variant)
    assert per_cell.sum() == pytest.approx(z.dofs @ (S @ z.dofs), rel=1e-12)


def test_cross_matrices_reduce_to_square(mesh):
    V = FESpace(mesh, 2)
    M = assemble_observation_mass(V, mesh.omega)
    Mx = observation_mass_cross(V, V, mesh.omega)
    assert abs(M - Mx).max() < 1e-13
    S = assemble_primal_stabilizer(V, "residual-jump")
    Sx = primal_stabilizer_cross(V, V, "residual-jump")
    assert abs(S - Sx).max() < 1e-12 * abs(S).max()


def test_data_functional_paths_agree(mesh):
    # field-backed data takes the exact-mass shortcut; sampling the same
    # piecewise field as a callable must integrate to the same functional
    V = FESpace(mesh, 2)
    sol = example1()
    data = make_observation(sol, mesh.omega, 2.0)
    rep = represent_observation(data, mesh, 1)
    fast = assemble_data_functional(V, rep)
    from stwave.problems import ObservationData
    slow_data = ObservationData(omega=rep.omega, T_final=rep.T_final,
                                source="callback", _value=rep._value)
    slow = assemble_data_functional(V, slow_data)
    assert np.allclose(fast, slow, atol=1e-10 * np.abs(fast).max())


def test_facet_jump_continuous_field(mesh):
    V = FESpace(mesh, 2)
    u = interpolate_nodal(V, lambda t, x: t ** 2 + x ** 2)
    interior = [i for i in range(mesh.nfacet) if mesh.facet(i).is_interior]
    f = mesh.facet(interior[3])
    a, b = mesh.vertices[list(f.vertex_ids)]
    pts = a[None] + np.linspace(0.2, 0.8, 5)[:, None] * (b - a)[None]
    jump = facet_jump(u, f, pts)
    assert np.allclose(jump, 0.0, atol=1e-11)


def test_export_matrix_market(mesh, tmp_path):
    V = FESpace(mesh, 1)
    M = assemble_observation_mass(V, mesh.omega)
    path = tmp_path / "mass.mtx"
    export_matrix_market(M, path)
    back = scipy.io.mmread(path).tocsr()
    assert abs(M - back).max() < 1e-15
