"""Assembly and direct solution of the primal-dual saddle system.

The optimality conditions of the regularized data-misfit Lagrangian
couple the primal reconstruction u (degree p) with the dual multiplier z
(degree q <= p):

    (u, v)_O + gamma s(u, v) + a_h(v, z) = (u_O, v)_O    for all v,
    a_h(u, w) - gamma* s*(z, w)          = 0             for all w,

which in matrix form is the symmetric indefinite block system

    [ M_O + gamma S    B^T           ] [u]   [ell]
    [ B               -gamma* S*     ] [z] = [0  ].

The system is factorized once with a sparse LU; there is no iterative
fallback since desk-scale problems factor in seconds.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DegreeOrder, MeshMismatch, NonPositive, Singular
from .fespace import DiscreteField
from .forms import (assemble_data_functional, assemble_observation_mass,
                    assemble_dual_stabilizer, assemble_primal_stabilizer,
                    assemble_wave_form, check_variant)

RESIDUAL_GATE = 1e-8


@dataclass
class SolveReport:
    """Outcome of one factorization + solve."""

    status: str
    relative_residual: float
    ndof_p: int
    ndof_q: int
    nnz: int
    factor_seconds: float
    solve_seconds: float

    def to_dict(self):
        return {"status": self.status,
                "relative_residual": self.relative_residual,
                "ndof_p": self.ndof_p, "ndof_q": self.ndof_q,
                "nnz": self.nnz,
                "factor_seconds": self.factor_seconds,
                "solve_seconds": self.solve_seconds}


@dataclass
class SaddleSystem:
    """Assembled blocks plus the coupled sparse matrix."""

    primal_space: object
    dual_space: object
    data: object
    gamma: float
    gamma_star: float
    stab_primal: str
    stab_dual: str
    matrix: sp.csc_matrix
    rhs: np.ndarray
    M_O: sp.csr_matrix
    S: sp.csr_matrix
    S_star: sp.csr_matrix
    B: sp.csr_matrix
    ell: np.ndarray

    @property
    def ndof_p(self):
        return self.primal_space.ndof

    @property
    def ndof_q(self):
        return self.dual_space.ndof


def build_system(primal_space, dual_space, data, gamma=1e-3, gamma_star=1.0,
                 stab_primal="residual-jump", stab_dual="gradient",
                 h_weight=None, allow_locking=False, allow_unstable=False):
    """Assemble the coupled system for given spaces and observation data.

    Degrees must satisfy p >= q >= 1 (the locking regime q > p is refused
    unless explicitly allowed) and gamma must be positive unless the
    caller opts into the unstabilized system.
    """
    if primal_space.mesh is not dual_space.mesh:
        raise MeshMismatch("primal and dual spaces on different meshes")
    p, q = primal_space.degree, dual_space.degree
    if q > p and not allow_locking:
        raise DegreeOrder(
            f"dual degree q={q} exceeds primal degree p={p}; this locks "
            "(pass allow_locking to study it anyway)")
    if gamma < 0 or gamma_star < 0:
        raise NonPositive(f"stabilization weights must be >= 0, got "
                          f"gamma={gamma}, gamma_star={gamma_star}")
    if not allow_unstable:
        if gamma == 0 and not (p == q and gamma_star > 0):
            raise NonPositive(
                "gamma = 0 is only safe with p = q and gamma* > 0 "
                "(pass allow_unstable to try regardless)")
        if gamma_star == 0:
            raise NonPositive(
                "gamma* = 0 leaves the dual block empty "
                "(pass allow_unstable to try regardless)")
    check_variant(stab_primal, p, q)

    M_O = assemble_observation_mass(primal_space, data.omega)
    S = assemble_primal_stabilizer(primal_space, stab_primal, h_weight)
    S_star = assemble_dual_stabilizer(dual_space, stab_dual, h_weight)
    B = assemble_wave_form(primal_space, dual_space).tocsr()
    ell = assemble_data_functional(primal_space, data)

    K = sp.bmat([[(M_O + gamma * S).tocsr(), B.T],
                 [B, (-gamma_star * S_star).tocsr()]], format="csc")
    rhs = np.concatenate([ell, np.zeros(dual_space.ndof)])
    return SaddleSystem(primal_space, dual_space, data, gamma, gamma_star,
                        stab_primal, stab_dual, K, rhs, M_O.tocsr(), S.tocsr(),
                        S_star.tocsr(), B, ell)


def solve(system):
    """Factor and solve; returns (u, z, report).

    A relative residual above 1e-8 downgrades the status to
    "ill-conditioned" without raising, since the saddle matrix is known
    to be badly conditioned on fine meshes.
    """
    K, rhs = system.matrix, system.rhs
    t0 = time.perf_counter()
    try:
        lu = spla.splu(K)
    except RuntimeError as exc:
        raise Singular(f"sparse LU factorization failed: {exc}") from exc
    t1 = time.perf_counter()
    x = lu.solve(rhs)
    t2 = time.perf_counter()
    if not np.all(np.isfinite(x)):
        raise Singular("solution contains non-finite entries")
    denom = float(np.abs(K).max() * np.linalg.norm(x) + np.linalg.norm(rhs))
    rel = float(np.linalg.norm(K @ x - rhs) / denom) if denom > 0 else 0.0
    status = "ok" if rel <= RESIDUAL_GATE else "ill-conditioned"
    np_, nq = system.ndof_p, system.ndof_q
    u = DiscreteField(system.primal_space, x[:np_])
    z = DiscreteField(system.dual_space, x[np_:])
    report = SolveReport(status=status, relative_residual=rel,
                         ndof_p=np_, ndof_q=nq, nnz=K.nnz,
                         factor_seconds=t1 - t0, solve_seconds=t2 - t1)
    return u, z, report


def energy_identity_gap(system, u, z):
    """Relative gap in ||u||_O^2 + gamma s(u,u) + gamma* s*(z,z) = ell(u).

    Testing the optimality system against (u, -z) kills the coupling
    terms, so the gap vanishes for the exact discrete solution up to
    solver accuracy.
    """
    lhs = (u.dofs @ system.M_O @ u.dofs
           + system.gamma * (u.dofs @ system.S @ u.dofs)
           + system.gamma_star * (z.dofs @ system.S_star @ z.dofs))
    rhs = system.ell @ u.dofs
    scale = abs(lhs) + abs(rhs)
    return abs(lhs - rhs) / scale if scale > 0 else 0.0


def check_galerkin_orthogonality(system, u, z, exact, nsamples=20, seed=0):
    """Max residual of the discrete optimality identity on random tests.

    Substitutes a high-order interpolant of the exact solution for u and
    evaluates the full first variation at (v, w) pairs drawn at random,
    scaled by their L2 norms.  For consistent data this is an
    interpolation-error-sized quantity.
    """
    from .fespace import FESpace, interpolate_nodal
    from .forms import (_mass_matrix, observation_mass_cross,
                        primal_stabilizer_cross)
    Vp, Vq = system.primal_space, system.dual_space
    mesh = Vp.mesh
    V3 = FESpace(mesh, 3)
    Pu = interpolate_nodal(V3, exact.value)
    MO3 = observation_mass_cross(V3, Vp, system.data.omega)
    S3 = primal_stabilizer_cross(V3, Vp, system.stab_primal)
    B3 = assemble_wave_form(V3, Vq).tocsr()
    r_v = (MO3 @ Pu.dofs + system.gamma * (S3 @ Pu.dofs)
           - system.M_O @ u.dofs - system.gamma * (system.S @ u.dofs)
           + system.B.T @ z.dofs)
    r_w = B3 @ Pu.dofs - system.B @ u.dofs \
        - system.gamma_star * (system.S_star @ z.dofs)
    cells = np.arange(mesh.ntri)
    Mp = _mass_matrix(Vp, Vp, cells, 2 * Vp.degree + 2).tocsr()
    Mq = _mass_matrix(Vq, Vq, cells, 2 * Vq.degree + 2).tocsr()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(nsamples):
        v = rng.standard_normal(Vp.ndof)
        w = rng.standard_normal(Vq.ndof)
        val = abs(v @ r_v + w @ r_w)
        scale = np.sqrt(v @ Mp @ v) + np.sqrt(w @ Mq @ w)
        worst = max(worst, val / scale)
    return worst
