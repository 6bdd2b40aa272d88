"""Benchmark solutions, observation data and experiment configuration.

Both benchmarks solve the homogeneous wave equation on (0, 2) x (0, 1)
with homogeneous Dirichlet conditions at x = 0, 1, and are observed on a
cylinder (0, T) x omega.  The first is a single smooth mode; the second
is a truncated eigenfunction series whose initial velocity is the
indicator of (1/3, 2/3), so its derivatives carry jumps that propagate
along characteristics.
"""

from dataclasses import dataclass, field, fields

import numpy as np

from .errors import InvalidDims, NonPositive, OutsideObservationDomain

_SQ2 = np.sqrt(2.0)


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form reference solution with first derivatives."""

    name: str
    value: callable
    dt: callable
    dx: callable
    smooth: bool


def example1():
    """Smooth single mode u = sin(3 pi x) cos(3 pi t)."""
    w = 3 * np.pi

    def value(t, x):
        return np.sin(w * np.asarray(x)) * np.cos(w * np.asarray(t))

    def dt(t, x):
        return -w * np.sin(w * np.asarray(x)) * np.sin(w * np.asarray(t))

    def dx(t, x):
        return w * np.cos(w * np.asarray(x)) * np.cos(w * np.asarray(t))

    return ExactSolution("smooth-mode", value, dt, dx, smooth=True)


def example2_coefficients(kmax=50):
    """Eigenfunction coefficients (a_k, b_k) for the rough benchmark.

    a_k expands the initial hat displacement 1 - |2x - 1| and b_k the
    initial velocity 1_(1/3,2/3), both against the orthonormal modes
    sqrt(2) sin(k pi x).
    """
    k = np.arange(1, kmax + 1, dtype=float)
    a = (4 * _SQ2 / (np.pi ** 2 * k ** 2)) * np.sin(np.pi * k / 2)
    b = (_SQ2 / (np.pi * k)) * (np.cos(np.pi * k / 3) - np.cos(2 * np.pi * k / 3))
    return k, a, b


def example2(kmax=50):
    """Series solution with hat initial displacement and indicator velocity.

    u(t, x) = sum_k (a_k cos(k pi t) + b_k sin(k pi t) / (k pi))
              * sqrt(2) sin(k pi x)

    Each mode solves the wave equation exactly, so the truncation solves
    it too; truncation only perturbs how well the initial velocity matches
    the indicator.
    """
    if kmax < 1:
        raise InvalidDims(f"kmax must be >= 1, got {kmax}")
    k, a, b = example2_coefficients(kmax)
    kp = k * np.pi
    bs = b / kp

    def _parts(t, x):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        kt = np.multiply.outer(t, kp)
        kx = np.multiply.outer(x, kp)
        return kt, kx

    def value(t, x):
        kt, kx = _parts(t, x)
        return np.einsum("...k,...k->...", np.cos(kt) * a + np.sin(kt) * bs,
                         _SQ2 * np.sin(kx))

    def dt(t, x):
        kt, kx = _parts(t, x)
        return np.einsum("...k,...k->...",
                         -np.sin(kt) * (a * kp) + np.cos(kt) * b,
                         _SQ2 * np.sin(kx))

    def dx(t, x):
        kt, kx = _parts(t, x)
        return np.einsum("...k,...k->...", np.cos(kt) * a + np.sin(kt) * bs,
                         _SQ2 * kp * np.cos(kx))

    return ExactSolution(f"rough-series-k{kmax}", value, dt, dx, smooth=False)


def hat_displacement(x):
    """Initial displacement of the rough benchmark, 1 - |2x - 1|."""
    return 1.0 - np.abs(2.0 * np.asarray(x) - 1.0)


def indicator_velocity(x):
    """Initial velocity of the rough benchmark, 1 on (1/3, 2/3)."""
    x = np.asarray(x)
    return ((x > 1 / 3) & (x < 2 / 3)).astype(float)


# ---------------------------------------------------------------------------
# observation data

@dataclass(frozen=True)
class ObservationData:
    """Field samples available on the observation cylinder only."""

    omega: tuple
    T_final: float
    source: str
    _value: callable
    field: object = None

    def evaluate(self, t, x):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        tol = 1e-12 * max(1.0, self.T_final)
        if (np.any(x < self.omega[0] - tol) or np.any(x > self.omega[1] + tol)
                or np.any(t < -tol) or np.any(t > self.T_final + tol)):
            raise OutsideObservationDomain(
                f"query outside [0, {self.T_final}] x [{self.omega[0]}, "
                f"{self.omega[1]}]")
        return self._value(t, x)


def make_observation(sol, omega, T_final=2.0):
    """Restrict an exact solution to the observation cylinder."""
    w0, w1 = float(omega[0]), float(omega[1])
    if not 0 <= w0 < w1 <= 1:
        raise InvalidDims(f"omega must satisfy 0 <= w0 < w1 <= 1, got {omega}")
    if T_final <= 0:
        raise NonPositive(f"T_final must be positive, got {T_final}")
    return ObservationData(omega=(w0, w1), T_final=float(T_final),
                           source=sol.name, _value=sol.value)


def represent_observation(data, mesh, degree=1):
    """Replace point samples by their interpolant on a mesh.

    Mirrors how measured data reaches a solver in practice: as a finite
    element field of modest order rather than a closed-form expression.
    The benchmark studies use degree 1 by default; the field is attached
    so that assembly can integrate it exactly instead of resampling.
    """
    from .fespace import FESpace, eval_field, interpolate_nodal
    if degree < 1:
        raise InvalidDims(f"representation degree must be >= 1, got {degree}")
    space = FESpace(mesh, degree)
    field = interpolate_nodal(space, data._value)

    def value(t, x):
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        pts = np.stack([t, x], axis=-1).reshape(-1, 2)
        vals, _ = eval_field(field, pts)
        return np.asarray(vals).reshape(t.shape)
    return ObservationData(omega=data.omega, T_final=data.T_final,
                           source=f"{data.source}|P{degree}", _value=value,
                           field=field)


# ---------------------------------------------------------------------------
# characteristics of the rough benchmark (for adaptive diagnostics)

def characteristic_segments(sources=(1 / 3, 1 / 2, 2 / 3), T_final=2.0):
    """Polyline segments of the reflected characteristics x0 +- t.

    Returns an array (nseg, 2, 2) of ((t0, x0), (t1, x1)) pairs tracing
    each characteristic from t = 0 to t = T with reflections at x = 0, 1.
    """
    segs = []
    for x0 in sources:
        for sgn in (+1.0, -1.0):
            # breakpoints where x0 + sgn*t crosses an integer
            ts = {0.0, float(T_final)}
            for m in range(-int(T_final) - 2, int(T_final) + 3):
                t_hit = sgn * (m - x0)
                if 0.0 < t_hit < T_final:
                    ts.add(float(t_hit))
            ts = sorted(ts)
            for t0, t1 in zip(ts[:-1], ts[1:]):
                xm0 = _fold(x0 + sgn * t0)
                xm1 = _fold(x0 + sgn * t1)
                segs.append(((t0, xm0), (t1, xm1)))
    return np.array(segs)


def _fold(y):
    z = np.mod(y, 2.0)
    return z if z <= 1.0 else 2.0 - z


def characteristic_distance(points, sources=(1 / 3, 1 / 2, 2 / 3), T_final=2.0):
    """Euclidean distance of (t, x) points to the characteristic fan."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    segs = characteristic_segments(sources, T_final)
    a, b = segs[:, 0], segs[:, 1]
    ab = b - a
    denom = np.einsum("si,si->s", ab, ab)
    ap = pts[:, None, :] - a[None, :, :]
    s = np.clip(np.einsum("psi,si->ps", ap, ab) / denom, 0.0, 1.0)
    closest = a[None, :, :] + s[..., None] * ab[None, :, :]
    d = np.linalg.norm(pts[:, None, :] - closest, axis=2)
    return d.min(axis=1)


# ---------------------------------------------------------------------------
# experiment configuration

DEFAULT_LEVELS = (1, 2, 3, 4)


@dataclass
class ExperimentConfig:
    """Knobs for a convergence or adaptive study.

    Mirrors the command line: every field can appear as `key = value` in a
    config file, with flags taking precedence.
    """

    example: int = 1
    p: tuple = (2,)
    q: tuple = (1,)
    gamma: float = 1e-3
    gamma_star: float = 1.0
    T_final: float = 2.0
    omega: tuple = (0.1, 0.3)
    levels: tuple = DEFAULT_LEVELS
    stab_primal: str = "residual-jump"
    stab_dual: str = "gradient"
    adaptive: bool = False
    cycles: int = 6
    theta: float = 0.5
    out: str = "out"
    kmax: int = 50
    data_degree: int = 1
    deep: bool = False
    allow_locking: bool = False
    allow_unstable: bool = False
    deterministic: bool = False

    def pairs(self):
        """Zip the degree lists into (p, q) pairs, broadcasting singletons."""
        p, q = tuple(self.p), tuple(self.q)
        if len(p) == 1 and len(q) > 1:
            p = p * len(q)
        if len(q) == 1 and len(p) > 1:
            q = q * len(p)
        if len(p) != len(q):
            raise InvalidDims(f"cannot pair p={p} with q={q}")
        return list(zip(p, q))

    def solution(self):
        return example1() if self.example == 1 else example2(self.kmax)


def _parse_value(name, raw):
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if ".." in raw:
        a, b = raw.split("..")
        return tuple(range(int(a), int(b) + 1))
    if "," in raw:
        return tuple(_parse_value(name, tok) for tok in raw.split(","))
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw.strip("\"'")


def load_config(path):
    """Read `key = value` lines (hash comments allowed) into a config."""
    known = {f.name for f in fields(ExperimentConfig)}
    cfg = ExperimentConfig()
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidDims(f"{path}:{lineno}: expected key = value")
            key, raw = line.split("=", 1)
            key = key.strip().replace("-", "_")
            if key not in known:
                raise InvalidDims(f"{path}:{lineno}: unknown key {key!r}")
            val = _parse_value(key, raw)
            if key in ("p", "q", "levels", "omega") and not isinstance(val, tuple):
                val = (val,)
            setattr(cfg, key, val)
    return cfg
