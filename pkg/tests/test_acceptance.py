"""Acceptance gate: reproduce the reference convergence studies.

One test per headline capability, each asserting its stated tolerance
band.  Expensive mesh ladders are solved once in module-scoped fixtures
and shared.  All runs are deterministic.

Known red: test_05 encodes the tabulated non-convergence band for the
initial velocity trace of the rough benchmark.  Our solver's velocity
errors converge at the rate the energy estimates predict, so the band
assertion fails.  The discrepancy is analyzed in the README; the test
is kept failing rather than loosened.
"""

import time

import numpy as np
import pytest

from stwave.analysis import (eta_indicators, fit_rate, hminus1_norm,
                             interpolation_gap_norms)
from stwave.fespace import (DiscreteField, FESpace, cell_gradients,
                            cell_values, geometry, interpolate_nodal,
                            ref_coords)
from stwave.forms import (assemble_dual_stabilizer, assemble_observation_mass,
                          assemble_primal_stabilizer, assemble_wave_form)
from stwave.mesh import FINAL, INITIAL, SIGMA, build_structured, load_mesh, validate_mesh
from stwave.problems import (ExperimentConfig, example1, make_observation,
                             represent_observation)
from stwave.quadrature import collapsed_rule, line_rule
from stwave.saddle import build_system, solve
from stwave.studies import level_mesh, run_adaptive, run_convergence_study

# verbatim reference data: mesh sizes and relative interior errors of the
# quadratic/linear pair on the smooth benchmark
REF_H = (1.57e-1, 8.22e-2, 4.03e-2, 2.29e-2, 1.25e-2)
REF_ERR = (9.18e-2, 1.48e-2, 2.80e-3, 8.01e-4, 2.42e-4)


def _study(tmp_path_factory, name, **kw):
    out = tmp_path_factory.mktemp(name)
    cfg = ExperimentConfig(out=out, deterministic=True, **kw)
    t0 = time.perf_counter()
    results = run_convergence_study(cfg)
    return results, time.perf_counter() - t0


@pytest.fixture(scope="module")
def ex1_first_order(tmp_path_factory):
    return _study(tmp_path_factory, "ex1_p1", example=1,
                  p=(1,), q=(1,), levels=(1, 2, 3, 4))


@pytest.fixture(scope="module")
def ex1_higher_order(tmp_path_factory):
    return _study(tmp_path_factory, "ex1_p23", example=1,
                  p=(2, 3), q=(1, 1), levels=(1, 2, 3, 4))


@pytest.fixture(scope="module")
def ex2_study(tmp_path_factory):
    return _study(tmp_path_factory, "ex2", example=2,
                  p=(2, 1), q=(1, 1), levels=(1, 2, 3, 4))


@pytest.fixture(scope="module")
def adaptive_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("adaptive")
    cfg = ExperimentConfig(example=2, p=(2,), q=(1,), adaptive=True,
                           cycles=6, theta=0.5, out=out, deterministic=True)
    t0 = time.perf_counter()
    cycles = run_adaptive(cfg)
    return out, cycles, time.perf_counter() - t0


def _pair(results, p, q):
    for r in results:
        if (r.p, r.q) == (p, q):
            return r
    raise AssertionError(f"pair ({p}, {q}) missing from study")


def test_01_smooth_benchmark_first_order_rate(ex1_first_order):
    results, elapsed = ex1_first_order
    pair = _pair(results, 1, 1)
    assert not pair.failures
    tau = pair.rates["rel_l2_M"].tau
    assert 1.7 <= tau <= 2.7
    assert elapsed <= 120


def test_02_smooth_benchmark_higher_order_rates(ex1_higher_order):
    results, elapsed = ex1_higher_order
    tau21 = _pair(results, 2, 1).rates["rel_l2_M"].tau
    assert 1.9 <= tau21 <= 2.8
    tau31 = _pair(results, 3, 1).rates["rel_l2_M"].tau
    assert 1.6 <= tau31 <= 2.5
    assert elapsed <= 600


def test_03_dual_multiplier_vanishes_under_refinement(ex1_higher_order):
    results, _ = ex1_higher_order
    duals = [r.dual_norm for r in _pair(results, 2, 1).reports]
    assert all(a > b for a, b in zip(duals, duals[1:]))
    # finest level sits at h ~ 2e-2
    assert 1e-5 <= duals[-1] <= 5e-4


def test_04_rough_benchmark_rates(ex2_study):
    results, _ = ex2_study
    tau21 = _pair(results, 2, 1).rates["rel_l2_M"].tau
    assert 0.9 <= tau21 <= 1.7
    tau11 = _pair(results, 1, 1).rates["rel_l2_M"].tau
    assert 0.7 <= tau11 <= 1.5


def test_05_velocity_trace_plateau(ex2_study):
    # reference data reports a stalled velocity-trace error around 0.43;
    # see the module docstring for why this fails
    results, _ = ex2_study
    errs = [r.hm1_dt_trace0 for r in _pair(results, 2, 1).reports]
    e3, e4 = errs[-2], errs[-1]
    assert abs(e4 - e3) / max(e3, e4) < 0.25
    assert 0.3 <= e3 <= 0.7 and 0.3 <= e4 <= 0.7


def test_06_rate_fit_reference_row():
    t0 = time.perf_counter()
    fit = fit_rate(REF_H, REF_ERR)
    assert abs(fit.tau - 2.33) <= 0.15
    assert time.perf_counter() - t0 < 1.0


def test_07_wave_form_consistency():
    # the coupling form applied to a cubic interpolant of the exact
    # smooth solution must be interpolation-error small against any
    # discrete test function, relative to its H1 norm
    mesh = build_structured(32, 64, 2.0)  # h = 1/32
    V3, V1 = FESpace(mesh, 3), FESpace(mesh, 1)
    residual = assemble_wave_form(V3, V1).tocsr() @ \
        interpolate_nodal(V3, example1().value).dofs
    rule = collapsed_rule(4)
    cells = np.arange(mesh.ntri)
    rp = np.broadcast_to(rule.points, (mesh.ntri,) + rule.points.shape)
    wq = rule.weights[None, :] * geometry(mesh)["detJ"][:, None]
    rng = np.random.default_rng(7)
    for _ in range(20):
        w = DiscreteField(V1, rng.standard_normal(V1.ndof))
        vals = cell_values(w, cells, rp)
        grads = cell_gradients(w, cells, rp)
        h1 = np.sqrt(np.sum(wq * (vals ** 2 + np.sum(grads ** 2, axis=-1))))
        assert abs(w.dofs @ residual) <= 1e-4 * h1


def test_08_symmetry_and_uniqueness():
    mesh = level_mesh(2)
    data = represent_observation(
        make_observation(example1(), mesh.omega, 2.0), mesh, 1)
    system = build_system(FESpace(mesh, 2), FESpace(mesh, 1), data)
    K = system.matrix
    assert np.abs(K - K.T).max() <= 1e-13 * np.abs(K).max()
    # zero observation forces the zero solution (uniqueness)
    zero = make_observation(example1(), mesh.omega, 2.0)
    object.__setattr__(zero, "_value", lambda t, x: np.zeros_like(t + x))
    system0 = build_system(FESpace(mesh, 2), FESpace(mesh, 1),
                           represent_observation(zero, mesh, 1))
    u, z, _ = solve(system0)
    assert np.linalg.norm(u.dofs) + np.linalg.norm(z.dofs) <= 1e-10


def test_09_dual_stabilizer_identity():
    # z' S* z == grad energy + h^-1 boundary trace energy, computed by
    # an independent quadrature route
    mesh = level_mesh(1)
    space = FESpace(mesh, 1)
    S = assemble_dual_stabilizer(space, "gradient").tocsr()
    rule = collapsed_rule(4)
    cells = np.arange(mesh.ntri)
    rp = np.broadcast_to(rule.points, (mesh.ntri,) + rule.points.shape)
    wq = rule.weights[None, :] * geometry(mesh)["detJ"][:, None]
    xq, lw = line_rule(6)
    # boundary facets, each evaluated through its owning cell
    facets = []
    for tag in (SIGMA, INITIAL, FINAL):
        for i in mesh.facets_with_tag(tag):
            f = mesh.facet(i)
            a, b = mesh.vertices[list(f.vertex_ids)]
            pts = a[None, :] + xq[:, None] * (b - a)[None, :]
            owner = np.array([f.tris[0]])
            facets.append((owner, ref_coords(mesh, owner, pts[None]),
                           f.length))
    rng = np.random.default_rng(11)
    for _ in range(10):
        z = DiscreteField(space, rng.standard_normal(space.ndof))
        grads = cell_gradients(z, cells, rp)
        expect = np.sum(wq * np.sum(grads ** 2, axis=-1))
        for owner, rc, length in facets:
            vals = cell_values(z, owner, rc)[0]
            expect += length / mesh.h * np.sum(lw * vals ** 2)
        got = z.dofs @ S @ z.dofs
        assert got == pytest.approx(expect, rel=1e-12)


def test_10_hminus1_oracle():
    for k in (1, 2, 4):
        got = hminus1_norm(lambda x: np.sin(k * np.pi * x), ncells=1000)
        assert abs(got - 1.0 / (np.sqrt(2) * k * np.pi)) <= 1e-4


def _primal_energy_quadrature(u):
    """Global h^2 ||Box u||^2 + h ||[flux]||^2 + h^-1 ||u||^2_Sigma by a
    direct quadrature route independent of the cellwise splitter."""
    from stwave import refelem
    space, mesh = u.space, u.space.mesh
    h = mesh.h
    rule = collapsed_rule(8)
    geo = geometry(mesh)
    _, _, hess = refelem.eval_basis(space.ref, rule.points)
    Hc = np.einsum("cma,qiab,cnb->cqimn", geo["invJT"], hess, geo["invJT"])
    box = np.einsum("cqi,ci->cq", Hc[..., 0, 0] - Hc[..., 1, 1],
                    u.dofs[space.cell_dofs])
    wv = rule.weights[None, :] * geo["detJ"][:, None]
    total = h * h * np.sum(wv * box ** 2)
    xq, lw = line_rule(9)
    va = mesh.vertices[mesh.facet_vertices[:, 0]]
    vb = mesh.vertices[mesh.facet_vertices[:, 1]]
    pts = va[:, None, :] + xq[None, :, None] * (vb - va)[:, None, :]
    an = mesh.facet_normal * np.array([-1.0, 1.0])  # Minkowski flux normal
    interior = np.flatnonzero(mesh.facet_tris[:, 1] >= 0)
    flux = []
    for side in (0, 1):
        cs = mesh.facet_tris[interior, side]
        g = cell_gradients(u, cs, ref_coords(mesh, cs, pts[interior]))
        flux.append(np.einsum("fqa,fa->fq", g, an[interior]))
    jump2 = np.sum(lw[None, :] * (flux[0] - flux[1]) ** 2, axis=1)
    total += h * np.sum(mesh.facet_length[interior] * jump2)
    lateral = np.flatnonzero(mesh.facet_tag == SIGMA)
    cs = mesh.facet_tris[lateral, 0]
    tv = cell_values(u, cs, ref_coords(mesh, cs, pts[lateral]))
    trace2 = np.sum(lw[None, :] * tv ** 2, axis=1)
    total += np.sum(mesh.facet_length[lateral] * trace2) / h
    return total


def test_11_indicator_sum_identity():
    # the cellwise indicators must reassemble the global quadratic form
    # exactly on every solved level
    for example, levels in ((1, (1, 2, 3)), (2, (1, 2))):
        sol = ExperimentConfig(example=example).solution()
        for lv in levels:
            mesh = level_mesh(lv)
            data = represent_observation(
                make_observation(sol, mesh.omega, 2.0), mesh, 1)
            system = build_system(FESpace(mesh, 2), FESpace(mesh, 1), data)
            u, z, _ = solve(system)
            eta2 = eta_indicators(u, z, data)
            misfit = (u.dofs @ system.M_O @ u.dofs
                      - 2 * (system.ell @ u.dofs)
                      + data.field.dofs
                      @ assemble_observation_mass(data.field.space,
                                                  mesh.omega)
                      @ data.field.dofs)
            total = (misfit + _primal_energy_quadrature(u)
                     + z.dofs @ system.S_star @ z.dofs)
            assert np.sum(eta2) == pytest.approx(total, rel=1e-12)


def test_12_adaptive_refinement_tracks_characteristics(adaptive_run):
    out, cycles, elapsed = adaptive_run
    assert len(cycles) == 6
    assert abs(cycles[0].ntri - 288) <= 30  # coarse diagonal start
    # conformity held at every cycle: each snapshot revalidates
    for cyc in range(6):
        m = load_mesh(out / f"adaptive_mesh_cycle{cyc}.txt")
        assert validate_mesh(m) == pytest.approx(2.0)
    final = cycles[-1]
    assert final.near_fraction >= 0.6
    assert elapsed <= 300


def test_13_interpolation_gap_decay():
    # both residual-type norms of u - Pi_h u decay near order p
    meshes = [level_mesh(lv) for lv in (1, 2, 3)]
    for p in (1, 2, 3):
        norms = [interpolation_gap_norms(FESpace(m, p), example1())
                 for m in meshes]
        h = [m.h for m in meshes]
        triple_slope = fit_rate(h, [n[0] for n in norms]).tau
        star_slope = fit_rate(h, [n[1] for n in norms]).tau
        assert triple_slope >= p - 0.3
        assert star_slope >= p - 0.3
