"""Triangulations of the space-time slab (0, T) x (0, 1).

Coordinates are ordered (t, x).  Triangles are stored counterclockwise
with their refinement edge in the last two slots ("peak first"), which is
what the bisection routine relies on; structured builds and uniform
refinement label the longest edge as refinement edge, bisection children
inherit labels the usual newest-vertex way.

Boundary facets are tagged by where they sit on the slab boundary: the
lateral sides x in {0, 1} (where the field is pinned), the initial slice
t = 0 and the final slice t = T.
"""

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .errors import InvalidDims, NonManifold, OmegaNotAligned

INTERIOR, SIGMA, INITIAL, FINAL = 0, 1, 2, 3
TAG_NAMES = {INTERIOR: "interior", SIGMA: "sigma", INITIAL: "initial", FINAL: "final"}

_GEOM_TOL = 1e-9


@dataclass(frozen=True)
class Facet:
    """Read-only view of one mesh facet."""

    index: int
    vertex_ids: tuple
    tris: tuple        # (t1, t2); t2 == -1 on the boundary
    tag: int
    normal: np.ndarray  # unit; outward from tris[0], or outward from the slab
    length: float

    @property
    def is_interior(self):
        return self.tris[1] >= 0


def _signed_areas(vertices, triangles):
    p0 = vertices[triangles[:, 0]]
    e1 = vertices[triangles[:, 1]] - p0
    e2 = vertices[triangles[:, 2]] - p0
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _peak_first(vertices, triangles):
    """Rotate each triangle so the longest edge sits in slots 1, 2.

    Ties are broken by the lexicographically smallest (min id, max id)
    vertex pair so reruns produce identical meshes.  Orientation is made
    counterclockwise by swapping the two refinement-edge vertices, which
    keeps the refinement edge itself unchanged.
    """
    tris = np.asarray(triangles, dtype=np.int64).copy()
    nt = len(tris)
    # edge i is the one opposite local vertex i
    a = tris[:, [1, 2, 0]]
    b = tris[:, [2, 0, 1]]
    L = np.linalg.norm(vertices[a] - vertices[b], axis=2)
    peak = np.argmax(L, axis=1)
    near = L >= (1 - 1e-9) * L[np.arange(nt), peak][:, None]
    for r in np.nonzero(near.sum(axis=1) > 1)[0]:
        cand = [(-L[r, i], min(a[r, i], b[r, i]), max(a[r, i], b[r, i]), i)
                for i in range(3) if near[r, i]]
        peak[r] = min(cand)[3]
    rolled = np.empty_like(tris)
    for i in range(3):
        sel = peak == i
        rolled[sel] = tris[sel][:, [i, (i + 1) % 3, (i + 2) % 3]]
    flip = _signed_areas(vertices, rolled) < 0
    rolled[flip] = rolled[flip][:, [0, 2, 1]]
    return rolled


def classify_facets(vertices, triangles, T_final):
    """Extract unique facets with adjacency, boundary tags and normals.

    Raises NonManifold if an edge has more than two incident triangles or
    if a single-incidence edge does not lie on the slab boundary (which is
    how hanging nodes show up).
    """
    nt = len(triangles)
    edges = np.vstack([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    owner = np.tile(np.arange(nt), 3)
    uniq, inv, counts = np.unique(edges, axis=0, return_inverse=True, return_counts=True)
    if counts.max() > 2:
        bad = uniq[np.argmax(counts)]
        raise NonManifold(f"edge {tuple(bad)} shared by {counts.max()} triangles")
    nf = len(uniq)
    ftris = np.full((nf, 2), -1, dtype=np.int64)
    order = np.argsort(inv, kind="stable")
    for k in order:
        f = inv[k]
        ftris[f, 0 if ftris[f, 0] < 0 else 1] = owner[k]

    va, vb = vertices[uniq[:, 0]], vertices[uniq[:, 1]]
    d = vb - va
    length = np.linalg.norm(d, axis=1)
    normal = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
    mid = 0.5 * (va + vb)
    cent = vertices[triangles[ftris[:, 0]]].mean(axis=1)
    flip = np.einsum("fi,fi->f", normal, mid - cent) < 0
    normal[flip] *= -1

    tol = _GEOM_TOL * max(1.0, T_final)
    tag = np.full(nf, INTERIOR, dtype=np.int8)
    bnd = ftris[:, 1] < 0
    on_x0 = (np.abs(va[:, 1]) < tol) & (np.abs(vb[:, 1]) < tol)
    on_x1 = (np.abs(va[:, 1] - 1) < tol) & (np.abs(vb[:, 1] - 1) < tol)
    on_t0 = (np.abs(va[:, 0]) < tol) & (np.abs(vb[:, 0]) < tol)
    on_tT = (np.abs(va[:, 0] - T_final) < tol) & (np.abs(vb[:, 0] - T_final) < tol)
    tag[bnd & (on_x0 | on_x1)] = SIGMA
    tag[bnd & on_t0] = INITIAL
    tag[bnd & on_tT] = FINAL
    stray = bnd & (tag == INTERIOR)
    if stray.any():
        f = np.nonzero(stray)[0][0]
        raise NonManifold(
            f"edge {tuple(uniq[f])} has one incident triangle but is not on "
            "the slab boundary (hanging node?)")
    return uniq, ftris, tag, normal, length


class SpacetimeMesh:
    """Conforming triangulation of (0, T) x (0, 1) with facet metadata."""

    def __init__(self, vertices, triangles, T_final, omega=None):
        self.vertices = np.asarray(vertices, dtype=float)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        self.T_final = float(T_final)
        self.omega = None if omega is None else (float(omega[0]), float(omega[1]))
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise InvalidDims("vertices must have shape (nvert, 2)")
        areas = _signed_areas(self.vertices, self.triangles)
        if (areas <= 0).any():
            raise InvalidDims("all triangles must be counterclockwise with positive area")
        self.areas = areas
        (self.facet_vertices, self.facet_tris, self.facet_tag,
         self.facet_normal, self.facet_length) = classify_facets(
            self.vertices, self.triangles, self.T_final)
        # triangle diameter equals its longest edge
        pts = self.vertices[self.triangles]
        self.h_K = np.max(
            [np.linalg.norm(pts[:, i] - pts[:, j], axis=1)
             for i, j in ((0, 1), (1, 2), (2, 0))], axis=0)
        self.h = float(self.h_K.max())
        self.quasi_uniformity = float(self.h / self.h_K.min())
        self._classify_omega()

    def _classify_omega(self):
        if self.omega is None:
            self.tri_in_omega = np.zeros(self.ntri, dtype=bool)
            self.omega_conforming = True
            return
        w0, w1 = self.omega
        tol = _GEOM_TOL
        x = self.vertices[self.triangles][:, :, 1]
        xmin, xmax = x.min(axis=1), x.max(axis=1)
        inside = (xmin >= w0 - tol) & (xmax <= w1 + tol)
        outside = (xmax <= w0 + tol) | (xmin >= w1 - tol)
        self.tri_in_omega = inside
        self.omega_conforming = bool(np.all(inside | outside))

    @property
    def ntri(self):
        return len(self.triangles)

    @property
    def nvert(self):
        return len(self.vertices)

    @property
    def nfacet(self):
        return len(self.facet_vertices)

    def facet(self, i):
        return Facet(index=i,
                     vertex_ids=tuple(self.facet_vertices[i]),
                     tris=tuple(self.facet_tris[i]),
                     tag=int(self.facet_tag[i]),
                     normal=self.facet_normal[i].copy(),
                     length=float(self.facet_length[i]))

    def facets_with_tag(self, tag):
        return np.nonzero(self.facet_tag == tag)[0]

    def __repr__(self):
        return (f"SpacetimeMesh(nvert={self.nvert}, ntri={self.ntri}, "
                f"h={self.h:.4g}, T={self.T_final})")


def build_structured(nx, nt, T_final, omega=None, pattern="crisscross"):
    """Structured triangulation of (0, T) x (0, 1).

    Each of the nx * nt grid cells is cut into four triangles through its
    centroid (default) or into two along the cell diagonal.  If an
    observation interval omega is given, its endpoints must sit on the
    spatial grid {j / nx} so that every triangle falls entirely inside or
    outside the observation cylinder.

    Parameters
    ----------
    nx, nt : int
        Cells across space and time; both at least 2.
    T_final : float
        Extent of the time axis.
    omega : pair of float, optional
        Observation interval in (0, 1).
    pattern : {"crisscross", "diagonal"}

    Returns
    -------
    SpacetimeMesh
    """
    if nx < 2 or nt < 2:
        raise InvalidDims(f"need nx >= 2 and nt >= 2, got nx={nx}, nt={nt}")
    if T_final <= 0:
        raise InvalidDims(f"T_final must be positive, got {T_final}")
    if pattern not in ("crisscross", "diagonal"):
        raise InvalidDims(f"unknown pattern {pattern!r}")
    if omega is not None:
        w0, w1 = omega
        if not (0 <= w0 < w1 <= 1):
            raise InvalidDims(f"omega must satisfy 0 <= w0 < w1 <= 1, got {omega}")
        for w in (w0, w1):
            if abs(w * nx - round(w * nx)) > _GEOM_TOL * nx:
                raise OmegaNotAligned(
                    f"omega endpoint {w} is not on the spatial grid with nx={nx}")

    tg = np.linspace(0.0, T_final, nt + 1)
    xg = np.linspace(0.0, 1.0, nx + 1)
    TT, XX = np.meshgrid(tg, xg, indexing="ij")
    grid = np.column_stack([TT.ravel(), XX.ravel()])

    def gid(i, j):
        return i * (nx + 1) + j

    I, J = np.meshgrid(np.arange(nt), np.arange(nx), indexing="ij")
    I, J = I.ravel(), J.ravel()
    A, B, C, D = gid(I, J), gid(I + 1, J), gid(I + 1, J + 1), gid(I, J + 1)
    if pattern == "crisscross":
        ncell = nt * nx
        centroids = 0.25 * (grid[A] + grid[B] + grid[C] + grid[D])
        Z = len(grid) + np.arange(ncell)
        verts = np.vstack([grid, centroids])
        tris = np.vstack([
            np.column_stack([A, B, Z]),
            np.column_stack([B, C, Z]),
            np.column_stack([C, D, Z]),
            np.column_stack([D, A, Z]),
        ])
    else:
        verts = grid
        tris = np.vstack([np.column_stack([A, B, C]), np.column_stack([A, C, D])])
    tris = _peak_first(verts, tris)
    return SpacetimeMesh(verts, tris, T_final, omega=omega)


def refine_uniform(mesh):
    """Red refinement: every triangle into four congruent children."""
    verts = mesh.vertices
    tris = mesh.triangles
    edges = np.vstack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    uniq, inv = np.unique(edges, axis=0, return_inverse=True)
    mids = 0.5 * (verts[uniq[:, 0]] + verts[uniq[:, 1]])
    mid_id = len(verts) + np.arange(len(uniq))
    m01, m12, m20 = np.split(mid_id[inv], 3)
    v0, v1, v2 = tris[:, 0], tris[:, 1], tris[:, 2]
    children = np.vstack([
        np.column_stack([v0, m01, m20]),
        np.column_stack([v1, m12, m01]),
        np.column_stack([v2, m20, m12]),
        np.column_stack([m01, m12, m20]),
    ])
    new_verts = np.vstack([verts, mids])
    children = _peak_first(new_verts, children)
    return SpacetimeMesh(new_verts, children, mesh.T_final, omega=mesh.omega)


def refine_adaptive(mesh, marked):
    """Newest-vertex bisection of the marked triangles with closure.

    A triangle is split along its refinement edge; if the neighbor across
    that edge carries a different refinement edge it is bisected first, so
    the result is always conforming.  Children put the new midpoint in the
    peak slot and inherit the two remaining parent edges as refinement
    edges.

    Parameters
    ----------
    mesh : SpacetimeMesh
    marked : iterable of int
        Triangle indices to bisect (each at least once).

    Returns
    -------
    SpacetimeMesh
    """
    marked = np.unique(np.asarray(list(marked), dtype=np.int64))
    if marked.size == 0:
        return SpacetimeMesh(mesh.vertices.copy(), mesh.triangles.copy(),
                             mesh.T_final, omega=mesh.omega)
    if marked.min() < 0 or marked.max() >= mesh.ntri:
        raise InvalidDims("marked triangle index out of range")

    verts = [tuple(v) for v in mesh.vertices]
    tris = [tuple(t) for t in mesh.triangles]
    alive = [True] * len(tris)
    edge_map = defaultdict(list)
    for i, (p, a, b) in enumerate(tris):
        for e in ((p, a), (a, b), (b, p)):
            edge_map[tuple(sorted(e))].append(i)
    midpoint = {}

    def ref_edge(i):
        _, a, b = tris[i]
        return (a, b) if a < b else (b, a)

    def neighbor_across(i, e):
        for j in edge_map[e]:
            if j != i and alive[j]:
                return j
        return None

    def split(i, e, m):
        p, a, b = tris[i]
        if (min(a, b), max(a, b)) != e:
            raise AssertionError("split along a non-refinement edge")
        alive[i] = False
        for ed in ((p, a), (a, b), (b, p)):
            edge_map[tuple(sorted(ed))].remove(i)
        for child in ((m, p, a), (m, b, p)):
            j = len(tris)
            tris.append(child)
            alive.append(True)
            cp, ca, cb = child
            for ed in ((cp, ca), (ca, cb), (cb, cp)):
                edge_map[tuple(sorted(ed))].append(j)

    guard = 0
    limit = 50 * (len(tris) + len(marked) + 1)
    for t0 in marked:
        if not alive[t0]:
            continue  # already bisected while closing up a neighbor
        stack = [t0]
        while stack:
            guard += 1
            if guard > limit:
                raise AssertionError("bisection closure did not terminate")
            t = stack[-1]
            if not alive[t]:
                stack.pop()
                continue
            e = ref_edge(t)
            nb = neighbor_across(t, e)
            if nb is not None and ref_edge(nb) != e:
                stack.append(nb)
                continue
            if e not in midpoint:
                midpoint[e] = len(verts)
                va, vb = verts[e[0]], verts[e[1]]
                verts.append(((va[0] + vb[0]) / 2, (va[1] + vb[1]) / 2))
            m = midpoint[e]
            split(t, e, m)
            if nb is not None:
                split(nb, e, m)
            stack.pop()

    new_tris = [t for t, ok in zip(tris, alive) if ok]
    return SpacetimeMesh(np.array(verts), np.array(new_tris, dtype=np.int64),
                         mesh.T_final, omega=mesh.omega)


def validate_mesh(mesh):
    """Cheap consistency checks; raises on defects, returns total area.

    Conformity is already enforced during facet classification (hanging
    nodes surface as stray boundary edges), so this mostly re-checks
    orientation and that the triangles tile the slab.
    """
    areas = _signed_areas(mesh.vertices, mesh.triangles)
    if (areas <= 0).any():
        raise InvalidDims("negatively oriented or degenerate triangle")
    classify_facets(mesh.vertices, mesh.triangles, mesh.T_final)
    total = float(areas.sum())
    if abs(total - mesh.T_final) > 1e-8 * max(1.0, mesh.T_final):
        raise InvalidDims(
            f"triangles cover area {total}, expected {mesh.T_final}")
    return total


def save_mesh(mesh, path):
    """Write the plain-text mesh format (header, vertices, triangles)."""
    with open(path, "w") as f:
        f.write(f"spacetime-mesh v1 {mesh.nvert} {mesh.ntri}\n")
        for t, x in mesh.vertices:
            f.write(f"{t:.17g} {x:.17g}\n")
        for a, b, c in mesh.triangles:
            f.write(f"{a} {b} {c}\n")


def load_mesh(path, omega=None):
    """Read a mesh written by save_mesh; facets are recomputed, T is the
    largest time coordinate found."""
    with open(path) as f:
        header = f.readline().split()
        if len(header) != 4 or header[0] != "spacetime-mesh" or header[1] != "v1":
            raise InvalidDims(f"unrecognized mesh header {' '.join(header)!r}")
        nv, nt = int(header[2]), int(header[3])
        verts = np.array([[float(tok) for tok in f.readline().split()]
                          for _ in range(nv)])
        tris = np.array([[int(tok) for tok in f.readline().split()]
                         for _ in range(nt)], dtype=np.int64)
    if verts.shape != (nv, 2) or tris.shape != (nt, 3):
        raise InvalidDims("mesh file body does not match its header")
    # accept clockwise input by swapping the refinement-edge slots, which
    # flips orientation without touching the refinement edge itself
    flip = _signed_areas(verts, tris) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    T_final = float(verts[:, 0].max())
    return SpacetimeMesh(verts, tris, T_final, omega=omega)
