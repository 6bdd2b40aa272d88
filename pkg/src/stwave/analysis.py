"""Error metrics, residual norms, a posteriori indicators and rate fits.

Everything here consumes solved fields; nothing assembles saddle systems.
Volume integrals of exact-solution expressions use a degree-12 collapsed
rule so that quadrature error sits far below discretization error at
desk scales.
"""

import csv
from dataclasses import dataclass, asdict

import numpy as np
from scipy.linalg import solveh_banded

from . import mesh as meshmod
from . import refelem
from .errors import InvalidDims, NonPositive
from .fespace import (DiscreteField, cell_gradients, cell_values, geometry,
                      physical_points, ref_coords)
from .forms import dual_stabilizer_cellwise, primal_stabilizer_cellwise
from .quadrature import collapsed_rule, line_rule

EXACT_DEGREE = 12

REPORT_HEADER = ("level,h,ndof_p,ndof_q,rel_l2_M,rel_l2_trace0,"
                 "hm1_dt_trace0,dual_norm,triple_norm,eta_total,solve_seconds")


def _volume_rule(mesh, degree=EXACT_DEGREE):
    rule = collapsed_rule(degree)
    geo = geometry(mesh)
    cells = np.arange(mesh.ntri)
    pts = physical_points(mesh, cells, rule.points)
    w = rule.weights[None, :] * geo["detJ"][:, None]
    return cells, rule.points, pts, w


def l2_error(u, exact, relative=True):
    """L2(M) distance between a discrete field and an exact solution."""
    mesh = u.space.mesh
    cells, ref, pts, w = _volume_rule(mesh)
    rp = np.broadcast_to(ref, (mesh.ntri,) + ref.shape)
    uh = cell_values(u, cells, rp)
    ue = exact.value(pts[..., 0], pts[..., 1])
    num = np.sqrt(np.sum(w * (uh - ue) ** 2))
    if not relative:
        return float(num)
    den = np.sqrt(np.sum(w * ue ** 2))
    if den == 0:
        raise NonPositive("exact solution has zero L2 norm")
    return float(num / den)


def dual_norm(z):
    """L2(0,T; H1_0) norm of the multiplier: sqrt of int (dz/dx)^2."""
    mesh = z.space.mesh
    cells, ref, _, w = _volume_rule(mesh)
    rp = np.broadcast_to(ref, (mesh.ntri,) + ref.shape)
    g = cell_gradients(z, cells, rp)
    return float(np.sqrt(np.sum(w * g[..., 1] ** 2)))


def triple_norm(v, w=None, omega=None):
    """Residual norm sqrt(||v||_O^2 + s(v,v) + s*(w,w)).

    The stabilization weights gamma, gamma* do not enter; this is the
    norm in which the error analysis is phrased.  The observation term
    needs omega, which defaults to the one stored on the mesh.
    """
    from .forms import (assemble_dual_stabilizer, assemble_observation_mass,
                        assemble_primal_stabilizer)
    mesh = v.space.mesh
    if omega is None:
        omega = mesh.omega
    if omega is None:
        raise InvalidDims("triple_norm needs an observation interval")
    total = v.dofs @ (assemble_observation_mass(v.space, omega) @ v.dofs)
    total += v.dofs @ (assemble_primal_stabilizer(v.space) @ v.dofs)
    if w is not None:
        total += w.dofs @ (assemble_dual_stabilizer(w.space) @ w.dofs)
    return float(np.sqrt(total))


# initial-trace utilities

def _initial_facet_table(mesh):
    """Sorted x-intervals of the t=0 facets with their owner cells."""
    idx = mesh.facets_with_tag(meshmod.INITIAL)
    lo, hi, owner = [], [], []
    for i in idx:
        f = mesh.facet(i)
        xs = mesh.vertices[list(f.vertex_ids), 1]
        lo.append(xs.min())
        hi.append(xs.max())
        owner.append(f.tris[0])
    order = np.argsort(lo)
    return (np.asarray(lo)[order], np.asarray(hi)[order],
            np.asarray(owner, dtype=int)[order])


def trace0_values(u, x, derivative=None):
    """Evaluate u_h (or a first derivative) on the initial slice t=0.

    Points are located through the t=0 facet table, so this stays fast
    even on large meshes.  derivative is None, "t" or "x".
    """
    mesh = u.space.mesh
    lo, hi, owner = _initial_facet_table(mesh)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    k = np.clip(np.searchsorted(lo, x, side="right") - 1, 0, len(lo) - 1)
    cells = owner[k]
    pts = np.column_stack([np.zeros_like(x), x])
    rc = ref_coords(mesh, cells, pts[:, None, :])
    vals, grads, _ = refelem.eval_basis(u.space.ref, rc)
    coefs = u.dofs[u.space.cell_dofs[cells]]
    if derivative is None:
        out = np.einsum("cqi,ci->cq", vals, coefs)[:, 0]
    else:
        g = np.einsum("cqia,ci->cqa", grads, coefs)[:, 0, :]
        geo = geometry(mesh)
        gphys = np.einsum("cab,cb->ca", geo["invJT"][cells], g)
        out = gphys[:, 0] if derivative == "t" else gphys[:, 1]
    return out


def rel_l2_trace0(u, exact):
    """Relative L2(0,1) error of the reconstruction at t=0."""
    mesh = u.space.mesh
    lo, hi, _ = _initial_facet_table(mesh)
    xq, wq = line_rule(EXACT_DEGREE)
    x = lo[:, None] + (hi - lo)[:, None] * xq[None, :]
    w = (hi - lo)[:, None] * wq[None, :]
    uh = trace0_values(u, x.ravel()).reshape(x.shape)
    ue = exact.value(np.zeros_like(x), x)
    num = np.sqrt(np.sum(w * (uh - ue) ** 2))
    den = np.sqrt(np.sum(w * ue ** 2))
    return float(num / den)


def hminus1_norm(f, ncells=1000):
    """H^-1(0,1) norm of a callable via a P1 Riesz map.

    Solves -w'' = f with w(0) = w(1) = 0 on a uniform mesh and returns
    ||w'||_{L2}, which equals the dual norm of f against H1_0.  With
    1000 cells the oracle value 1/(sqrt(2) k pi) for f = sin(k pi x) is
    matched to a few parts in 1e7.
    """
    if ncells < 2:
        raise InvalidDims(f"need at least 2 cells, got {ncells}")
    dx = 1.0 / ncells
    nodes = np.linspace(0.0, 1.0, ncells + 1)
    xq, wq = line_rule(5)
    x = nodes[:-1, None] + dx * xq[None, :]
    fv = np.asarray(f(x), dtype=float)
    # hat-function loads: left cell contributes s, right cell 1 - s
    b = np.zeros(ncells + 1)
    np.add.at(b, np.arange(1, ncells + 1), dx * np.sum(wq * xq * fv, axis=1))
    np.add.at(b, np.arange(0, ncells),
              dx * np.sum(wq * (1.0 - xq) * fv, axis=1))
    n = ncells - 1
    ab = np.zeros((2, n))
    ab[0, 1:] = -1.0 / dx
    ab[1, :] = 2.0 / dx
    w = solveh_banded(ab, b[1:-1])
    w = np.concatenate([[0.0], w, [0.0]])
    return float(np.sqrt(np.sum(np.diff(w) ** 2) / dx))


def hm1_dt_trace0(u, exact, relative=True, ncells=1000):
    """H^-1(0,1) error of the time-derivative trace at t=0.

    Falls back to the absolute norm when the exact velocity trace
    vanishes, as for data built from a zero initial velocity.
    """
    def residual(x):
        return exact.dt(np.zeros_like(x), x) - trace0_values(
            u, x.ravel(), derivative="t").reshape(np.shape(x))
    num = hminus1_norm(residual, ncells)
    if not relative:
        return num
    den = hminus1_norm(lambda x: exact.dt(np.zeros_like(x), x), ncells)
    return num / den if den > 0 else num


# a posteriori indicators

def observation_misfit_cellwise(u, data):
    """Per-cell squared data misfit over the observation cylinder.

    Field-backed data is integrated with a rule exact for the product of
    the two polynomial spaces, which makes the sum over cells agree with
    the matrix-assembled global form to roundoff.
    """
    mesh = u.space.mesh
    out = np.zeros(mesh.ntri)
    cells = np.flatnonzero(mesh.tri_in_omega)
    if len(cells) == 0:
        return out
    dfield = getattr(data, "field", None)
    if dfield is not None and dfield.space.mesh is mesh:
        deg = 2 * max(u.space.degree, dfield.space.degree) + 2
        rule = collapsed_rule(deg)
        rp = np.broadcast_to(rule.points, (len(cells),) + rule.points.shape)
        diff = cell_values(u, cells, rp) - cell_values(dfield, cells, rp)
    else:
        deg = min(2 * u.space.degree + 4, 10)
        rule = collapsed_rule(deg)
        rp = np.broadcast_to(rule.points, (len(cells),) + rule.points.shape)
        pts = physical_points(mesh, cells, rule.points)
        diff = cell_values(u, cells, rp) - data.evaluate(pts[..., 0],
                                                         pts[..., 1])
    w = rule.weights[None, :] * geometry(mesh)["detJ"][cells, None]
    out[cells] = np.sum(w * diff ** 2, axis=1)
    return out


def eta_indicators(u, z, data, stab_primal="residual-jump",
                   stab_dual="gradient"):
    """Elementwise squared error indicators eta_K^2.

    Interior-facet stabilizer energies are split evenly between the two
    neighbours, so the sum over cells reproduces the global forms
    exactly.
    """
    eta2 = observation_misfit_cellwise(u, data)
    eta2 += primal_stabilizer_cellwise(u, stab_primal)
    eta2 += dual_stabilizer_cellwise(z, stab_dual)
    return eta2


def dorfler_mark(eta_sq, theta):
    """Smallest cell set carrying a fraction theta of the total eta^2."""
    if not 0 < theta <= 1:
        raise InvalidDims(f"theta must be in (0, 1], got {theta}")
    eta_sq = np.asarray(eta_sq, dtype=float)
    order = np.argsort(eta_sq)[::-1]
    csum = np.cumsum(eta_sq[order])
    nmark = int(np.searchsorted(csum, theta * csum[-1])) + 1
    return np.sort(order[:min(nmark, len(eta_sq))])


# interpolation gap norms (a priori lemmas)

def interpolation_gap_norms(space, exact):
    """Triple and star norms of u - Pi_h u for a wave-free exact field.

    Assumes Box u = 0, so the element residual of the gap reduces to
    -Box Pi_h u and the flux jumps of the gap to those of -Pi_h u.
    Uses the residual-jump primal stabilizer.  Returns (triple, star).
    """
    from .fespace import interpolate_nodal
    mesh = space.mesh
    h = mesh.h
    Pi = interpolate_nodal(space, exact.value)
    cells, ref, pts, w = _volume_rule(mesh)
    rp = np.broadcast_to(ref, (mesh.ntri,) + ref.shape)

    gap = cell_values(Pi, cells, rp) - exact.value(pts[..., 0], pts[..., 1])
    gap_sq = np.sum(w * gap ** 2, axis=1)
    obs_sq = float(np.sum(gap_sq[mesh.tri_in_omega])) \
        if mesh.omega is not None else float(np.sum(gap_sq))

    g = cell_gradients(Pi, cells, rp)
    gt = g[..., 0] - exact.dt(pts[..., 0], pts[..., 1])
    gx = g[..., 1] - exact.dx(pts[..., 0], pts[..., 1])
    grad_sq = float(np.sum(w * (gt ** 2 + gx ** 2)))

    # element residual of the interpolant (Box of the gap, negated)
    vals, grads, hess = refelem.eval_basis(space.ref, ref)
    geo = geometry(mesh)
    invJT = geo["invJT"]
    coefs = Pi.dofs[space.cell_dofs]
    Hc = np.einsum("cma,qiab,cnb->cqimn", invJT, hess, invJT)
    box = np.einsum("cqi,ci->cq", Hc[..., 0, 0] - Hc[..., 1, 1], coefs)
    box_sq = float(np.sum(w * box ** 2))

    sig_sq = 0.0
    sig_pi_sq = 0.0
    flux_sq = 0.0
    A = np.diag([-1.0, 1.0])
    xq, wq = line_rule(2 * space.degree + 2)
    for tag in (meshmod.SIGMA, meshmod.INITIAL, meshmod.FINAL):
        for i in mesh.facets_with_tag(tag):
            f = mesh.facet(i)
            a, b = mesh.vertices[list(f.vertex_ids)]
            fp = a[None, :] + xq[:, None] * (b - a)[None, :]
            c = f.tris[0]
            rc = ref_coords(mesh, np.array([c]), fp[None, :, :])
            v, gr, _ = refelem.eval_basis(space.ref, rc)
            cf = Pi.dofs[space.cell_dofs[c]]
            gphys = np.einsum("ab,qib,i->qa",
                              invJT[c], gr[0], cf)
            gt_e = exact.dt(fp[:, 0], fp[:, 1])
            gx_e = exact.dx(fp[:, 0], fp[:, 1])
            dflux = (np.column_stack([gphys[:, 0] - gt_e,
                                      gphys[:, 1] - gx_e]) @ A) @ f.normal
            flux_sq += h * f.length * np.sum(wq * dflux ** 2)
            if tag == meshmod.SIGMA:
                pv = np.einsum("qi,i->q", v[0], cf)
                tr = pv - exact.value(fp[:, 0], fp[:, 1])
                sig_sq += f.length / h * np.sum(wq * tr ** 2)
                sig_pi_sq += f.length / h * np.sum(wq * pv ** 2)

    # extract the interior jump energy from the assembled stabilizer
    # instead of looping facets: s(Pi,Pi) minus its other two pieces
    from .forms import assemble_primal_stabilizer
    s_pi = float(Pi.dofs @ (assemble_primal_stabilizer(space) @ Pi.dofs))
    jump_sq = max(s_pi - h ** 2 * box_sq - sig_pi_sq, 0.0)

    s_sq = h ** 2 * box_sq + jump_sq + sig_sq
    triple = float(np.sqrt(obs_sq + s_sq))
    star = float(np.sqrt(grad_sq + flux_sq + sig_sq))
    return triple, star


# rate fitting and reports

@dataclass(frozen=True)
class RateFit:
    """Least-squares power law err = beta * h^tau with fit quality r2."""

    beta: float
    tau: float
    r2: float


def fit_rate(h, err):
    """Fit err ~ beta * h^tau through log-log least squares."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    if len(h) != len(err) or len(h) < 2:
        raise InvalidDims("need at least two (h, err) pairs of equal length")
    if np.any(h <= 0) or np.any(err <= 0):
        raise NonPositive("rate fits need positive h and err values")
    lh, le = np.log(h), np.log(err)
    A = np.vstack([lh, np.ones_like(lh)]).T
    (tau, logbeta), res, _, _ = np.linalg.lstsq(A, le, rcond=None)
    ss_tot = float(np.sum((le - le.mean()) ** 2))
    if ss_tot == 0:
        r2 = 1.0
    else:
        ss_res = float(res[0]) if len(res) else float(
            np.sum((le - A @ [tau, logbeta]) ** 2))
        r2 = 1.0 - ss_res / ss_tot
    return RateFit(beta=float(np.exp(logbeta)), tau=float(tau), r2=r2)


@dataclass
class ErrorReport:
    """One solved level of a convergence study."""

    level: int
    h: float
    ndof_p: int
    ndof_q: int
    rel_l2_M: float
    rel_l2_trace0: float
    hm1_dt_trace0: float
    dual_norm: float
    triple_norm: float
    eta_total: float
    solve_seconds: float

    def row(self):
        d = asdict(self)
        return [d[k] for k in REPORT_HEADER.split(",")]


def write_error_report(path, reports):
    """CSV with the fixed study header; floats at full precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_HEADER.split(","))
        for r in reports:
            w.writerow([repr(v) if isinstance(v, float) else v
                        for v in r.row()])


def read_error_report(path):
    """Rows of a study CSV as ErrorReport objects."""
    out = []
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != REPORT_HEADER.split(","):
            raise InvalidDims(f"unexpected report header {header}")
        for row in rd:
            out.append(ErrorReport(
                int(row[0]), float(row[1]), int(row[2]), int(row[3]),
                *[float(v) for v in row[4:]]))
    return out
