"""Continuous Lagrange spaces on a space-time mesh.

The global dof order is vertices, then edge dofs (degree - 1 per edge,
walked from the lower-numbered vertex), then one interior dof per
triangle for P3.  Cell dof maps therefore need an orientation fixup only
for P3 edges.  The module also carries the per-cell geometry tables
(Jacobians and friends) that the assembly routines share.
"""

import csv

import numpy as np

from . import refelem
from .errors import MeshMismatch, OutOfDomain
from .mesh import SIGMA, INITIAL, FINAL


class FESpace:
    """Scalar H1-conforming Lagrange space of degree 1, 2 or 3.

    Attributes
    ----------
    mesh : SpacetimeMesh
    degree : int
    ref : ReferenceElement
    cell_dofs : ndarray, shape (ntri, ndof_local)
    ndof : int
    dof_coords : ndarray, shape (ndof, 2)
    """

    def __init__(self, mesh, degree):
        self.mesh = mesh
        self.degree = int(degree)
        self.ref = refelem.reference_element(self.degree)
        self._build_dofs()

    def _build_dofs(self):
        mesh, k = self.mesh, self.degree
        tris = mesh.triangles
        nv, nt = mesh.nvert, mesh.ntri
        edges = np.vstack([tris[:, [a, b]] for a, b in refelem.LOCAL_EDGES])
        sedges = np.sort(edges, axis=1)
        uniq, inv = np.unique(sedges, axis=0, return_inverse=True)
        ne = len(uniq)
        self.edges = uniq
        per_edge = k - 1
        n_int = (k - 1) * (k - 2) // 2
        self.ndof = nv + per_edge * ne + n_int * nt

        nloc = self.ref.ndof
        cd = np.empty((nt, nloc), dtype=np.int64)
        cd[:, :3] = tris
        if per_edge:
            eid = inv.reshape(3, nt).T          # (nt, 3) local edge -> global edge
            fwd = edges[:, 0] < edges[:, 1]
            fwd = fwd.reshape(3, nt).T          # local edge walks low -> high vertex
            for le in range(3):
                base = nv + per_edge * eid[:, le]
                for s in range(per_edge):
                    # edge dof s sits at parameter (s+1)/k from the low vertex
                    loc = 3 + per_edge * le + s
                    cd[:, loc] = np.where(fwd[:, le], base + s,
                                          base + (per_edge - 1 - s))
        if n_int:
            cd[:, 3 + 3 * per_edge] = nv + per_edge * ne + np.arange(nt)
        self.cell_dofs = cd

        coords = np.empty((self.ndof, 2))
        coords[:nv] = mesh.vertices
        if per_edge:
            lo = mesh.vertices[uniq[:, 0]]
            hi = mesh.vertices[uniq[:, 1]]
            for s in range(per_edge):
                idx = nv + per_edge * np.arange(ne) + s
                coords[idx] = lo + ((s + 1) / k) * (hi - lo)
        if n_int:
            coords[nv + per_edge * ne:] = mesh.vertices[tris].mean(axis=1)
        self.dof_coords = coords

    def boundary_dofs(self, tag):
        """Global dofs sitting on facets with the given boundary tag."""
        mesh, k = self.mesh, self.degree
        fsel = mesh.facets_with_tag(tag)
        out = set(mesh.facet_vertices[fsel].ravel().tolist())
        if k > 1:
            lookup = {tuple(e): i for i, e in enumerate(self.edges)}
            for f in fsel:
                e = lookup[tuple(mesh.facet_vertices[f])]
                for s in range(k - 1):
                    out.add(mesh.nvert + (k - 1) * e + s)
        return np.array(sorted(out), dtype=np.int64)


def dof_count(mesh, degree):
    """Dof count formula: nvert + (k-1) ne + (k-1)(k-2)/2 nt."""
    tris = mesh.triangles
    sedges = np.sort(np.vstack([tris[:, [a, b]] for a, b in refelem.LOCAL_EDGES]), axis=1)
    ne = len(np.unique(sedges, axis=0))
    k = degree
    return mesh.nvert + (k - 1) * ne + ((k - 1) * (k - 2) // 2) * mesh.ntri


class DiscreteField:
    """Coefficient vector over an FESpace."""

    def __init__(self, space, dofs):
        dofs = np.asarray(dofs, dtype=float)
        if dofs.shape != (space.ndof,):
            raise MeshMismatch(
                f"coefficient vector of length {dofs.shape} does not match "
                f"space with {space.ndof} dofs")
        self.space = space
        self.dofs = dofs

    def copy(self):
        return DiscreteField(self.space, self.dofs.copy())


# ---------------------------------------------------------------------------
# per-cell geometry, cached on the mesh

def geometry(mesh):
    """Affine map tables: J, invJT, detJ per triangle (cached)."""
    cached = getattr(mesh, "_geom_cache", None)
    if cached is not None:
        return cached
    p = mesh.vertices[mesh.triangles]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)  # columns
    detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    inv = np.empty_like(J)
    inv[:, 0, 0] = J[:, 1, 1]
    inv[:, 0, 1] = -J[:, 0, 1]
    inv[:, 1, 0] = -J[:, 1, 0]
    inv[:, 1, 1] = J[:, 0, 0]
    inv /= detJ[:, None, None]
    invJT = np.swapaxes(inv, 1, 2)
    cached = {"J": J, "invJ": inv, "invJT": invJT, "detJ": detJ,
              "v0": p[:, 0].copy()}
    mesh._geom_cache = cached
    return cached


def physical_points(mesh, cells, ref_pts):
    """Map reference points into the given cells; (ncell, npts, 2)."""
    g = geometry(mesh)
    return g["v0"][cells, None, :] + np.einsum(
        "cab,qb->cqa", g["J"][cells], np.atleast_2d(ref_pts))

def ref_coords(mesh, cells, phys_pts):
    """Pull physical points (ncell, npts, 2) back to reference coords."""
    g = geometry(mesh)
    d = phys_pts - g["v0"][cells][:, None, :]
    return np.einsum("cab,cqb->cqa", g["invJ"][cells], d)


def tabulate(space, rule):
    """Reference basis tables at the points of a quadrature rule."""
    return refelem.eval_basis(space.ref, rule.points)


def cell_values(field, cells, ref_pts_per_cell):
    """Evaluate a field at per-cell reference points, shape (ncell, npts)."""
    vals, _, _ = refelem.eval_basis(field.space.ref, ref_pts_per_cell)
    coefs = field.dofs[field.space.cell_dofs[cells]]
    return np.einsum("cqi,ci->cq", vals, coefs)


def cell_gradients(field, cells, ref_pts_per_cell):
    """Physical (d/dt, d/dx) of a field at per-cell reference points."""
    _, grads, _ = refelem.eval_basis(field.space.ref, ref_pts_per_cell)
    g = geometry(field.space.mesh)
    coefs = field.dofs[field.space.cell_dofs[cells]]
    gref = np.einsum("cqib,ci->cqb", grads, coefs)
    return np.einsum("cab,cqb->cqa", g["invJT"][cells], gref)


# ---------------------------------------------------------------------------
# interpolation and point evaluation

def interpolate_nodal(space, f):
    """Nodal interpolant: evaluate f(t, x) at the dof coordinates.

    f may be vectorized over numpy arrays or plain scalar; both work.
    """
    t, x = space.dof_coords[:, 0], space.dof_coords[:, 1]
    try:
        vals = np.asarray(f(t, x), dtype=float)
        if vals.shape != t.shape:
            raise ValueError
    except Exception:
        vals = np.array([f(ti, xi) for ti, xi in zip(t, x)], dtype=float)
    return DiscreteField(space, vals)


def locate_points(mesh, points, tol=1e-10):
    """Containing triangle for each query point (brute force).

    Returns (cells, ref) where ref are the reference coordinates inside
    each containing cell.  Raises OutOfDomain for stray points.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    g = geometry(mesh)
    cells = np.empty(len(pts), dtype=np.int64)
    refc = np.empty((len(pts), 2))
    for i, p in enumerate(pts):
        d = p - g["v0"]
        xi = np.einsum("cab,cb->ca", g["invJ"], d)
        lam = np.column_stack([1 - xi[:, 0] - xi[:, 1], xi])
        best = int(np.argmax(lam.min(axis=1)))
        if lam[best].min() < -tol:
            raise OutOfDomain(f"point {tuple(p)} not in the mesh")
        cells[i] = best
        refc[i] = xi[best]
    return cells, refc


def eval_field(field, points):
    """Value and physical gradient at arbitrary points.

    Returns (values, gradients) with shapes (npts,), (npts, 2); scalar
    input gives scalar/1D output.
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    cells, refc = locate_points(field.space.mesh, pts)
    vals = cell_values(field, cells, refc[:, None, :])[:, 0]
    grads = cell_gradients(field, cells, refc[:, None, :])[:, 0]
    if single:
        return float(vals[0]), grads[0]
    return vals, grads


def export_field_csv(field, path):
    """Write `dof_id,t,x,value` rows for the whole coefficient vector."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dof_id", "t", "x", "value"])
        for i, ((t, x), v) in enumerate(zip(field.space.dof_coords, field.dofs)):
            w.writerow([i, f"{t:.17g}", f"{x:.17g}", f"{v:.17g}"])


def load_field_csv(space, path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["dof_id", "t", "x", "value"]:
        raise MeshMismatch(f"unexpected field CSV header {rows[0]}")
    if len(rows) - 1 != space.ndof:
        raise MeshMismatch(
            f"field CSV has {len(rows) - 1} dofs, space has {space.ndof}")
    dofs = np.empty(space.ndof)
    for row in rows[1:]:
        dofs[int(row[0])] = float(row[3])
    return DiscreteField(space, dofs)


# ---------------------------------------------------------------------------
# monitored inequality constants (diagnostics, not used by the solver)

def inverse_inequality_constant(space, nsamples=20, seed=0):
    """Largest observed h_K |u|_{H1(K)} / ||u||_K over random fields."""
    from .quadrature import quadrature_for
    rule = quadrature_for(2 * space.degree)
    vals, grads, _ = tabulate(space, rule)
    g = geometry(space.mesh)
    gp = np.einsum("cab,qib->cqia", g["invJT"], grads)
    mass = np.einsum("q,qi,qj->ij", rule.weights, vals, vals)
    stiff = np.einsum("q,cqia,cqja->cij", rule.weights, gp, gp)
    rng = np.random.default_rng(seed)
    worst = 0.0
    cd = space.cell_dofs
    for _ in range(nsamples):
        u = rng.standard_normal(space.ndof)
        ul = u[cd]
        num = np.einsum("ci,cij,cj->c", ul, stiff, ul) * g["detJ"]
        den = np.einsum("ci,ij,cj->c", ul, mass, ul) * g["detJ"]
        ratio = space.mesh.h_K * np.sqrt(np.maximum(num, 0) / np.maximum(den, 1e-300))
        worst = max(worst, float(ratio.max()))
    return worst


def trace_inequality_constant(space, nsamples=20, seed=0):
    """Largest observed h_F^{1/2} ||u||_F / ||u||_K over boundary facets."""
    from .quadrature import quadrature_for, line_rule
    mesh = space.mesh
    rule = quadrature_for(2 * space.degree)
    vals, _, _ = tabulate(space, rule)
    g = geometry(mesh)
    mass = np.einsum("q,qi,qj->ij", rule.weights, vals, vals)
    xq, wq = line_rule(2 * space.degree)
    bnd = np.nonzero(mesh.facet_tris[:, 1] < 0)[0]
    cells = mesh.facet_tris[bnd, 0]
    pa = mesh.vertices[mesh.facet_vertices[bnd, 0]]
    pb = mesh.vertices[mesh.facet_vertices[bnd, 1]]
    phys = pa[:, None, :] + xq[None, :, None] * (pb - pa)[:, None, :]
    refc = ref_coords(mesh, cells, phys)
    fvals, _, _ = refelem.eval_basis(space.ref, refc)
    rng = np.random.default_rng(seed)
    worst = 0.0
    cd = space.cell_dofs
    for _ in range(nsamples):
        u = rng.standard_normal(space.ndof)
        ul = u[cd[cells]]
        tr = np.einsum("fqi,fi->fq", fvals, ul)
        num = mesh.facet_length[bnd] * np.einsum("q,fq->f", wq, tr ** 2)
        ulc = u[cd[cells]]
        den = np.einsum("fi,ij,fj->f", ulc, mass, ulc) * g["detJ"][cells]
        ratio = np.sqrt(mesh.facet_length[bnd] * num / np.maximum(den, 1e-300))
        worst = max(worst, float(ratio.max()))
    return worst
