"""Bilinear forms and functionals of the stabilized space-time method.

Everything is assembled over the (t, x) gradient with the indefinite
metric A = diag(-1, +1), so the volume wave form reads
(A grad u, grad w) and integrating by parts against the wave operator
costs a boundary flux A grad u . n.  The discrete form subtracts that
flux on the whole slab boundary and, to keep the pinned lateral trace
symmetric, also subtracts the adjoint flux of the test function on the
lateral boundary; on that boundary the time component of the normal
vanishes, so the Minkowski flux and the spatial conormal coincide and a
single code path covers both.

Assembly is vectorized: per-cell local matrices come from reference
tensors contracted with per-cell 2x2 geometry factors, facet terms from
batched evaluation of both neighbor traces at mapped line-rule points.
"""

import numpy as np
import scipy.sparse as sp

from . import refelem
from .errors import (BoundaryFacet, MeshMismatch, NonPositive, OmegaNotAligned,
                     VariantConstraint)
from .fespace import geometry, ref_coords
from .mesh import FINAL, INITIAL, SIGMA
from .quadrature import line_rule, quadrature_for

#: the space-time metric acting on (d/dt, d/dx)
MINKOWSKI = np.diag([-1.0, 1.0])

PRIMAL_VARIANTS = ("residual-jump", "face-only")
DUAL_VARIANTS = ("gradient", "residual")

_FACET_CHUNK = 16384


def check_variant(stab_primal, p, q):
    """Degree compatibility of the face-carried primal stabilizer."""
    if stab_primal not in PRIMAL_VARIANTS:
        raise VariantConstraint(f"unknown primal stabilizer {stab_primal!r}")
    if stab_primal == "face-only" and not (p - 2 <= q <= p):
        raise VariantConstraint(
            f"face-only stabilizer needs q in {{p-2, p-1, p}}, got p={p}, q={q}")


def _same_mesh(trial, test):
    if trial.mesh is not test.mesh:
        raise MeshMismatch("trial and test spaces live on different meshes")
    return trial.mesh


def _resolve_h(mesh, h_weight):
    h = mesh.h if h_weight is None else float(h_weight)
    if h <= 0:
        raise NonPositive(f"stabilizer weight h must be positive, got {h}")
    return h


def _scatter(nrows, ncols, rows, cols, blocks):
    r = np.broadcast_to(rows[:, :, None], blocks.shape).ravel()
    c = np.broadcast_to(cols[:, None, :], blocks.shape).ravel()
    return sp.coo_matrix((blocks.ravel(), (r, c)), shape=(nrows, ncols))


def _metric_factors(mesh, A):
    """G_c[m, n] = sum_ab invJT[c,a,m] A[a,b] invJT[c,b,n]."""
    g = geometry(mesh)
    return np.einsum("cam,ab,cbn->cmn", g["invJT"], A, g["invJT"])


def _wave_factor(mesh):
    """W_c[m, n] such that box phi = sum_mn W_c[m,n] Href[m,n]."""
    g = geometry(mesh)
    iT = g["invJT"]
    return (np.einsum("cm,cn->cmn", iT[:, 0], iT[:, 0])
            - np.einsum("cm,cn->cmn", iT[:, 1], iT[:, 1]))


def _facet_trace(space, facets, side, xq):
    """Trace tables of a space on given facets from one adjacent cell.

    Returns (cells, vals, grads, box) with shapes (nf, nq, nloc[, 2]);
    grads are physical (d/dt, d/dx), box is the wave operator of each
    basis function along the facet.
    """
    mesh = space.mesh
    cells = mesh.facet_tris[facets, side]
    pa = mesh.vertices[mesh.facet_vertices[facets, 0]]
    pb = mesh.vertices[mesh.facet_vertices[facets, 1]]
    phys = pa[:, None, :] + xq[None, :, None] * (pb - pa)[:, None, :]
    refc = ref_coords(mesh, cells, phys)
    vals, grads, hess = refelem.eval_basis(space.ref, refc)
    g = geometry(mesh)
    iT = g["invJT"][cells]
    gphys = np.einsum("fab,fqib->fqia", iT, grads)
    W = (np.einsum("fm,fn->fmn", iT[:, 0], iT[:, 0])
         - np.einsum("fm,fn->fmn", iT[:, 1], iT[:, 1]))
    box = np.einsum("fmn,fqimn->fqi", W, hess)
    return cells, vals, gphys, box


def _volume_matrix(trial, test, A, deg=None):
    """(A grad u, grad w)_M as a sparse matrix (test x trial)."""
    mesh = _same_mesh(trial, test)
    kmax = max(trial.degree, test.degree)
    rule = quadrature_for(deg or 2 * kmax + 2)
    _, gu, _ = refelem.eval_basis(trial.ref, rule.points)
    _, gw, _ = refelem.eval_basis(test.ref, rule.points)
    R = np.einsum("q,qim,qjn->imjn", rule.weights, gw, gu)
    G = _metric_factors(mesh, A)
    loc = np.einsum("c,cmn,imjn->cij", geometry(mesh)["detJ"], G, R)
    return _scatter(test.ndof, trial.ndof, test.cell_dofs, trial.cell_dofs, loc)


def _mass_matrix(trial, test, cells, deg):
    mesh = _same_mesh(trial, test)
    rule = quadrature_for(deg)
    vu, _, _ = refelem.eval_basis(trial.ref, rule.points)
    vw, _, _ = refelem.eval_basis(test.ref, rule.points)
    Mref = np.einsum("q,qi,qj->ij", rule.weights, vw, vu)
    detJ = geometry(mesh)["detJ"][cells]
    loc = detJ[:, None, None] * Mref[None, :, :]
    return _scatter(test.ndof, trial.ndof,
                    test.cell_dofs[cells], trial.cell_dofs[cells], loc)


def _box_matrix(trial, test, weight):
    """weight * (box u, box w)_K summed over cells (zero for P1 pairs)."""
    mesh = _same_mesh(trial, test)
    if max(trial.degree, test.degree) < 2:
        return sp.coo_matrix((test.ndof, trial.ndof))
    rule = quadrature_for(2 * max(trial.degree, test.degree))
    _, _, hu = refelem.eval_basis(trial.ref, rule.points)
    _, _, hw = refelem.eval_basis(test.ref, rule.points)
    W = _wave_factor(mesh)
    bu = np.einsum("cmn,qimn->cqi", W, hu)
    bw = np.einsum("cmn,qimn->cqi", W, hw)
    detJ = geometry(mesh)["detJ"]
    loc = weight * np.einsum("q,cqi,cqj,c->cij", rule.weights, bw, bu, detJ)
    return _scatter(test.ndof, trial.ndof, test.cell_dofs, trial.cell_dofs, loc)


def _facet_value_mass(trial, test, facets, weight, deg=None):
    """weight * sum_F (u, w)_F over single-sided (boundary) facets."""
    mesh = _same_mesh(trial, test)
    if len(facets) == 0:
        return sp.coo_matrix((test.ndof, trial.ndof))
    deg = deg or 2 * max(trial.degree, test.degree) + 2
    xq, wq = line_rule(deg)
    cells, vu, _, _ = _facet_trace(trial, facets, 0, xq)
    _, vw, _, _ = _facet_trace(test, facets, 0, xq)
    L = mesh.facet_length[facets]
    loc = weight * np.einsum("f,q,fqi,fqj->fij", L, wq, vw, vu)
    return _scatter(test.ndof, trial.ndof,
                    test.cell_dofs[cells], trial.cell_dofs[cells], loc)


def _facet_dt_mass(trial, test, facets, weight):
    """weight * sum_F (du/dt, dw/dt)_F over boundary facets."""
    mesh = _same_mesh(trial, test)
    if len(facets) == 0:
        return sp.coo_matrix((test.ndof, trial.ndof))
    xq, wq = line_rule(2 * max(trial.degree, test.degree) + 2)
    cells, _, gu, _ = _facet_trace(trial, facets, 0, xq)
    _, _, gw, _ = _facet_trace(test, facets, 0, xq)
    L = mesh.facet_length[facets]
    loc = weight * np.einsum("f,q,fqi,fqj->fij", L, wq, gw[..., 0], gu[..., 0])
    return _scatter(test.ndof, trial.ndof,
                    test.cell_dofs[cells], trial.cell_dofs[cells], loc)


def _interior_jump_blocks(space, facets, xq, kind):
    """Per-facet jump rows over the union dofs of both neighbors.

    kind "flux" gives [n . A grad phi]; kind "box" gives [box phi].  The
    sign convention follows the stored facet normal (outward from the
    first neighbor); products of two jumps do not depend on it.
    """
    mesh = space.mesh
    c1, v1, g1, b1 = _facet_trace(space, facets, 0, xq)
    c2, v2, g2, b2 = _facet_trace(space, facets, 1, xq)
    if kind == "flux":
        n = mesh.facet_normal[facets]
        an = n @ MINKOWSKI  # A n, so that (A grad phi) . n = an . grad phi
        j1 = np.einsum("fa,fqia->fqi", an, g1)
        j2 = np.einsum("fa,fqia->fqi", an, g2)
    elif kind == "box":
        j1, j2 = b1, b2
    else:
        raise AssertionError(kind)
    rows = np.concatenate([space.cell_dofs[c1], space.cell_dofs[c2]], axis=1)
    jump = np.concatenate([j1, -j2], axis=2)
    return rows, jump


def _interior_jump_matrix(space, weight, kind, deg=None):
    mesh = space.mesh
    facets = np.nonzero(mesh.facet_tris[:, 1] >= 0)[0]
    if len(facets) == 0:
        return sp.coo_matrix((space.ndof, space.ndof))
    deg = deg or 2 * space.degree + 2
    xq, wq = line_rule(deg)
    parts = []
    for lo in range(0, len(facets), _FACET_CHUNK):
        sel = facets[lo:lo + _FACET_CHUNK]
        rows, jump = _interior_jump_blocks(space, sel, xq, kind)
        L = mesh.facet_length[sel]
        loc = weight * np.einsum("f,q,fqd,fqe->fde", L, wq, jump, jump)
        parts.append(_scatter(space.ndof, space.ndof, rows, rows, loc))
    out = parts[0]
    for p in parts[1:]:
        out = out + p
    return out


# ---------------------------------------------------------------------------
# public assembly entry points

def assemble_wave_form(trial, test):
    """Wave bilinear form with weak boundary coupling, shape (Nq, Np).

    Row w, column u holds a_h(u, w): the Minkowski volume term, minus the
    flux (A grad u . n, w) on the whole slab boundary, minus the adjoint
    flux (A grad w . n, u) on the lateral boundary.
    """
    mesh = _same_mesh(trial, test)
    B = _volume_matrix(trial, test, MINKOWSKI).tocsr()

    deg = 2 * max(trial.degree, test.degree) + 2
    xq, wq = line_rule(deg)
    bnd = np.nonzero(mesh.facet_tris[:, 1] < 0)[0]
    cells, vu, gu, _ = _facet_trace(trial, bnd, 0, xq)
    _, vw, gw, _ = _facet_trace(test, bnd, 0, xq)
    an = mesh.facet_normal[bnd] @ MINKOWSKI
    L = mesh.facet_length[bnd]
    flux_u = np.einsum("fa,fqja->fqj", an, gu)
    loc = -np.einsum("f,q,fqi,fqj->fij", L, wq, vw, flux_u)
    B = B + _scatter(test.ndof, trial.ndof,
                     test.cell_dofs[cells], trial.cell_dofs[cells], loc).tocsr()

    sig = np.nonzero(mesh.facet_tag == SIGMA)[0]
    keep = np.isin(bnd, sig)
    flux_w = np.einsum("fa,fqia->fqi", an[keep], gw[keep])
    loc = -np.einsum("f,q,fqi,fqj->fij", L[keep], wq, flux_w, vu[keep])
    B = B + _scatter(test.ndof, trial.ndof,
                     test.cell_dofs[cells[keep]],
                     trial.cell_dofs[cells[keep]], loc).tocsr()
    return B


def observation_cells(mesh, omega):
    """Cells inside the observation strip; straddlers are an error."""
    w0, w1 = float(omega[0]), float(omega[1])
    tol = 1e-9
    x = mesh.vertices[mesh.triangles][:, :, 1]
    xmin, xmax = x.min(axis=1), x.max(axis=1)
    inside = (xmin >= w0 - tol) & (xmax <= w1 + tol)
    outside = (xmax <= w0 + tol) | (xmin >= w1 - tol)
    stray = ~(inside | outside)
    if stray.any():
        c = int(np.nonzero(stray)[0][0])
        raise OmegaNotAligned(
            f"triangle {c} straddles the observation strip ({w0}, {w1})")
    return np.nonzero(inside)[0]


def assemble_observation_mass(space, omega):
    """L2 mass restricted to the observation cylinder (0, T) x omega."""
    cells = observation_cells(space.mesh, omega)
    return _mass_matrix(space, space, cells, 2 * space.degree + 2).tocsr()


def assemble_primal_stabilizer(space, variant="residual-jump", h_weight=None):
    """Primal stabilizer matrix (symmetric positive semidefinite).

    residual-jump: h^2 (box u, box v)_K + h ([A grad u], [A grad v])_F
    over interior facets (each facet once) + 1/h (u, v) on the lateral
    boundary.  face-only drops the element residual and carries
    h^3 ([box u], [box v])_F on the faces instead; it is only stable for
    dual degree q in {p-2, p-1, p}, which is checked at system build.
    """
    if variant not in PRIMAL_VARIANTS:
        raise VariantConstraint(f"unknown primal stabilizer {variant!r}")
    mesh = space.mesh
    h = _resolve_h(mesh, h_weight)
    sig = np.nonzero(mesh.facet_tag == SIGMA)[0]
    S = _facet_value_mass(space, space, sig, 1.0 / h).tocsr()
    S = S + _interior_jump_matrix(space, h, "flux").tocsr()
    if variant == "residual-jump":
        S = S + _box_matrix(space, space, h ** 2).tocsr()
    else:
        if space.degree >= 2:
            S = S + _interior_jump_matrix(space, h ** 3, "box",
                                          deg=2 * space.degree).tocsr()
    return S


def assemble_dual_stabilizer(space, variant="gradient", h_weight=None):
    """Dual stabilizer matrix (symmetric positive definite).

    gradient: full space-time H1 seminorm plus 1/h boundary penalty on
    the whole slab boundary.  residual: the primal residual-jump
    stabilizer of the dual variable plus 1/h value and h time-derivative
    penalties on the initial and final slices.
    """
    if variant not in DUAL_VARIANTS:
        raise VariantConstraint(f"unknown dual stabilizer {variant!r}")
    mesh = space.mesh
    h = _resolve_h(mesh, h_weight)
    if variant == "gradient":
        S = _volume_matrix(space, space, np.eye(2)).tocsr()
        bnd = np.nonzero(mesh.facet_tris[:, 1] < 0)[0]
        return S + _facet_value_mass(space, space, bnd, 1.0 / h).tocsr()
    S = assemble_primal_stabilizer(space, "residual-jump", h_weight=h)
    caps = np.nonzero((mesh.facet_tag == INITIAL) | (mesh.facet_tag == FINAL))[0]
    S = S + _facet_value_mass(space, space, caps, 1.0 / h).tocsr()
    S = S + _facet_dt_mass(space, space, caps, h).tocsr()
    return S


def assemble_data_functional(space, data):
    """Load vector (u_O, v)_O with elevated quadrature for the data.

    Field-backed data living on the same mesh is integrated exactly
    through the cross mass matrix; anything else is sampled pointwise.
    """
    mesh = space.mesh
    dfield = getattr(data, "field", None)
    if dfield is not None and dfield.space.mesh is mesh:
        return observation_mass_cross(dfield.space, space,
                                      data.omega) @ dfield.dofs
    cells = observation_cells(mesh, data.omega)
    rule = quadrature_for(min(2 * space.degree + 4, 10))
    vals, _, _ = refelem.eval_basis(space.ref, rule.points)
    g = geometry(mesh)
    phys = g["v0"][cells, None, :] + np.einsum(
        "cab,qb->cqa", g["J"][cells], rule.points)
    fvals = data.evaluate(phys[..., 0], phys[..., 1])
    weights = rule.weights[None, :] * g["detJ"][cells, None]
    contrib = np.einsum("cq,qi->ci", weights * fvals, vals)
    ell = np.zeros(space.ndof)
    np.add.at(ell, space.cell_dofs[cells], contrib)
    return ell


def facet_jump(field, facet, points):
    """Jump of the Minkowski flux n . A grad u across an interior facet.

    The normal is the stored one (outward from the first neighbor); the
    jump is flux-from-first minus flux-from-second at each point.
    """
    space = field.space
    mesh = space.mesh
    idx = facet.index if hasattr(facet, "index") else int(facet)
    if mesh.facet_tris[idx, 1] < 0:
        raise BoundaryFacet(f"facet {idx} lies on the boundary")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = mesh.facet_normal[idx]
    an = MINKOWSKI @ n
    out = np.empty(len(pts))
    g = geometry(mesh)
    for side, sgn in ((0, 1.0), (1, -1.0)):
        c = mesh.facet_tris[idx, side]
        refc = np.einsum("ab,pb->pa", g["invJ"][c], pts - g["v0"][c])
        _, grads, _ = refelem.eval_basis(space.ref, refc)
        gref = np.einsum("pib,i->pb", grads, field.dofs[space.cell_dofs[c]])
        gphys = np.einsum("ab,pb->pa", g["invJT"][c], gref)
        flux = gphys @ an
        out = out + sgn * flux if side else flux.copy()
    return out if np.asarray(points).ndim > 1 else float(out[0])


def export_matrix_market(matrix, path):
    """Write a sparse matrix in MatrixMarket coordinate format."""
    from scipy.io import mmwrite
    with open(path, "wb") as fh:
        mmwrite(fh, sp.coo_matrix(matrix))


# ---------------------------------------------------------------------------
# cross-space variants (two different spaces on one mesh)

def _interior_jump_matrix_cross(trial, test, weight, kind, deg=None):
    mesh = _same_mesh(trial, test)
    facets = np.nonzero(mesh.facet_tris[:, 1] >= 0)[0]
    if len(facets) == 0:
        return sp.coo_matrix((test.ndof, trial.ndof))
    deg = deg or 2 * max(trial.degree, test.degree) + 2
    xq, wq = line_rule(deg)
    parts = []
    for lo in range(0, len(facets), _FACET_CHUNK):
        sel = facets[lo:lo + _FACET_CHUNK]
        rows, jw = _interior_jump_blocks(test, sel, xq, kind)
        cols, ju = _interior_jump_blocks(trial, sel, xq, kind)
        L = mesh.facet_length[sel]
        loc = weight * np.einsum("f,q,fqd,fqe->fde", L, wq, jw, ju)
        parts.append(_scatter(test.ndof, trial.ndof, rows, cols, loc))
    out = parts[0]
    for p in parts[1:]:
        out = out + p
    return out


def primal_stabilizer_cross(trial, test, variant="residual-jump", h_weight=None):
    """s(u, v) with u and v in different spaces; used by residual checks."""
    if variant not in PRIMAL_VARIANTS:
        raise VariantConstraint(f"unknown primal stabilizer {variant!r}")
    mesh = _same_mesh(trial, test)
    h = _resolve_h(mesh, h_weight)
    sig = np.nonzero(mesh.facet_tag == SIGMA)[0]
    S = _facet_value_mass(trial, test, sig, 1.0 / h).tocsr()
    S = S + _interior_jump_matrix_cross(trial, test, h, "flux").tocsr()
    if variant == "residual-jump":
        S = S + _box_matrix(trial, test, h ** 2).tocsr()
    elif max(trial.degree, test.degree) >= 2:
        S = S + _interior_jump_matrix_cross(trial, test, h ** 3, "box").tocsr()
    return S


def observation_mass_cross(trial, test, omega):
    cells = observation_cells(_same_mesh(trial, test), omega)
    deg = max(trial.degree, test.degree) * 2 + 2
    return _mass_matrix(trial, test, cells, deg).tocsr()


# ---------------------------------------------------------------------------
# cellwise stabilizer energies (for the error indicators)

def primal_stabilizer_cellwise(field, variant="residual-jump", h_weight=None):
    """Per-cell split of s(u, u); interior facet terms half to each side."""
    space = field.space
    mesh = space.mesh
    h = _resolve_h(mesh, h_weight)
    out = np.zeros(mesh.ntri)
    u = field.dofs

    if variant == "residual-jump" and space.degree >= 2:
        rule = quadrature_for(2 * space.degree)
        _, _, hess = refelem.eval_basis(space.ref, rule.points)
        W = _wave_factor(mesh)
        box = np.einsum("cmn,qimn->cqi", W, hess)
        ul = u[space.cell_dofs]
        bu = np.einsum("cqi,ci->cq", box, ul)
        out += h ** 2 * np.einsum("q,cq,c->c", rule.weights, bu ** 2,
                                  geometry(mesh)["detJ"])

    xq, wq = line_rule(2 * space.degree + 2)
    sig = np.nonzero(mesh.facet_tag == SIGMA)[0]
    if len(sig):
        cells, vals, _, _ = _facet_trace(space, sig, 0, xq)
        tr = np.einsum("fqi,fi->fq", vals, u[space.cell_dofs[cells]])
        vfac = (1.0 / h) * mesh.facet_length[sig] * np.einsum("q,fq->f", wq, tr ** 2)
        np.add.at(out, cells, vfac)

    interior = np.nonzero(mesh.facet_tris[:, 1] >= 0)[0]
    if len(interior):
        for lo in range(0, len(interior), _FACET_CHUNK):
            sel = interior[lo:lo + _FACET_CHUNK]
            rows, jump = _interior_jump_blocks(space, sel, xq, "flux")
            jv = np.einsum("fqd,fd->fq", jump, u[rows])
            vals = h * mesh.facet_length[sel] * np.einsum("q,fq->f", wq, jv ** 2)
            half = 0.5 * vals
            np.add.at(out, mesh.facet_tris[sel, 0], half)
            np.add.at(out, mesh.facet_tris[sel, 1], half)
            if variant == "face-only" and space.degree >= 2:
                rows2, jb = _interior_jump_blocks(space, sel, xq, "box")
                jbv = np.einsum("fqd,fd->fq", jb, u[rows2])
                vb = h ** 3 * mesh.facet_length[sel] * np.einsum("q,fq->f", wq, jbv ** 2)
                np.add.at(out, mesh.facet_tris[sel, 0], 0.5 * vb)
                np.add.at(out, mesh.facet_tris[sel, 1], 0.5 * vb)
    return out


def dual_stabilizer_cellwise(field, variant="gradient", h_weight=None):
    """Per-cell split of s*(z, z) matching the assembled matrix."""
    space = field.space
    mesh = space.mesh
    h = _resolve_h(mesh, h_weight)
    z = field.dofs
    if variant == "residual":
        out = primal_stabilizer_cellwise(field, "residual-jump", h_weight=h)
        xq, wq = line_rule(2 * space.degree + 2)
        caps = np.nonzero((mesh.facet_tag == INITIAL) | (mesh.facet_tag == FINAL))[0]
        if len(caps):
            cells, vals, grads, _ = _facet_trace(space, caps, 0, xq)
            zl = z[space.cell_dofs[cells]]
            tr = np.einsum("fqi,fi->fq", vals, zl)
            dtr = np.einsum("fqi,fi->fq", grads[..., 0], zl)
            L = mesh.facet_length[caps]
            np.add.at(out, cells,
                      (1.0 / h) * L * np.einsum("q,fq->f", wq, tr ** 2)
                      + h * L * np.einsum("q,fq->f", wq, dtr ** 2))
        return out

    rule = quadrature_for(2 * space.degree + 2)
    _, grads, _ = refelem.eval_basis(space.ref, rule.points)
    g = geometry(mesh)
    zl = z[space.cell_dofs]
    gref = np.einsum("qib,ci->cqb", grads, zl)
    gphys = np.einsum("cab,cqb->cqa", g["invJT"], gref)
    out = np.einsum("q,cqa,cqa,c->c", rule.weights, gphys, gphys, g["detJ"])
    xq, wq = line_rule(2 * space.degree + 2)
    bnd = np.nonzero(mesh.facet_tris[:, 1] < 0)[0]
    cells, vals, _, _ = _facet_trace(space, bnd, 0, xq)
    tr = np.einsum("fqi,fi->fq", vals, z[space.cell_dofs[cells]])
    np.add.at(out, cells, (1.0 / h) * mesh.facet_length[bnd]
              * np.einsum("q,fq->f", wq, tr ** 2))
    return out
