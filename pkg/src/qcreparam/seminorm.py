"""Calculus of semi-norms on the plane.

A semi-norm is carried in one of two representations:

* ``quadratic``: s(v)^2 = v . Q v for a symmetric positive semi-definite
  2x2 matrix Q.  Exact closed forms exist for everything below.
* ``sampled``: gauge values s(theta_j) at m directions evenly spaced on the
  half-circle.  The unit ball is the centrally symmetric polygon through the
  sampled boundary points, so all quantities reduce to polygon geometry.

The operations: the squared-maximal-stretch energy, the inscribed ellipse of
maximal area, the two jacobians (inscribed-ellipse normalization and
unit-ball-area normalization), the isotropy defect, quadratic regularization,
and the Beltrami coefficient of a linear map rounding the inscribed ellipse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSemiNorm, InputFormatError

DEGEN_TOL = 1e-10          # relative floor under which a direction counts as collapsed
FEAS_TOL = 1e-6            # certified-containment allowance for inscribed ellipses
DEFAULT_SAMPLES = 64       # default m for sampled semi-norms
_CERT_POINTS = 512         # boundary points swept in the containment certificate


def half_circle_directions(m):
    """Unit vectors at angles j*pi/m, j = 0..m-1."""
    ang = np.arange(m) * (np.pi / m)
    return np.column_stack([np.cos(ang), np.sin(ang)])


@dataclass(frozen=True)
class Ellipse2:
    """Centered ellipse with semi-axes a >= b > 0 and major-axis angle theta."""

    a: float
    b: float
    theta: float

    def __post_init__(self):
        if not (self.a >= self.b > 0):
            raise ValueError(f"need a >= b > 0, got a={self.a}, b={self.b}")
        object.__setattr__(self, "theta", float(self.theta) % math.pi)

    @property
    def area(self):
        return math.pi * self.a * self.b

    @property
    def eccentricity_ratio(self):
        return self.a / self.b

    @property
    def matrix(self):
        """M with ellipse = {v : v.Mv <= 1}; area = pi / sqrt(det M)."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        r = np.array([[c, -s], [s, c]])
        d = np.diag([1.0 / self.a**2, 1.0 / self.b**2])
        return r @ d @ r.T

    def boundary(self, num=_CERT_POINTS):
        """Points on the ellipse boundary (counterclockwise)."""
        t = np.linspace(0.0, 2.0 * np.pi, num, endpoint=False)
        c, s = math.cos(self.theta), math.sin(self.theta)
        x = self.a * np.cos(t)
        y = self.b * np.sin(t)
        return np.column_stack([c * x - s * y, s * x + c * y])

    def radial(self, dirs):
        """Boundary radius of the ellipse along each unit direction."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        u = dirs @ np.array([c, s])
        w = dirs @ np.array([-s, c])
        return 1.0 / np.sqrt((u / self.a) ** 2 + (w / self.b) ** 2)


@dataclass(frozen=True)
class SemiNorm2:
    """A semi-norm on R^2 in quadratic or sampled representation."""

    kind: str
    matrix: np.ndarray | None = None
    values: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # -- constructors -------------------------------------------------------

    @staticmethod
    def quadratic(q):
        q = np.asarray(q, dtype=float)
        if q.shape != (2, 2):
            raise ValueError("quadratic form must be 2x2")
        if abs(q[0, 1] - q[1, 0]) > 1e-12 * (1.0 + np.abs(q).max()):
            raise ValueError("quadratic form must be symmetric")
        q = 0.5 * (q + q.T)
        lmin = _eig2_min(q)
        if lmin < -1e-9 * max(1.0, abs(_eig2_max(q))):
            raise ValueError("quadratic form must be positive semi-definite")
        q.setflags(write=False)
        return SemiNorm2(kind="quadratic", matrix=q)

    @staticmethod
    def sampled(values):
        values = np.asarray(values, dtype=float).copy()
        if values.ndim != 1 or values.size < 8:
            raise ValueError("sampled semi-norm needs m >= 8 gauge values")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("gauge values must be finite and nonnegative")
        values.setflags(write=False)
        return SemiNorm2(kind="sampled", values=values)

    @staticmethod
    def zero():
        return SemiNorm2.quadratic(np.zeros((2, 2)))

    @staticmethod
    def euclidean(scale=1.0):
        return SemiNorm2.quadratic(scale**2 * np.eye(2))

    @staticmethod
    def from_gauge(fn, m=DEFAULT_SAMPLES):
        """Sample a gauge function fn(unit direction) -> value at m directions."""
        dirs = half_circle_directions(m)
        vals = np.array([float(fn(d)) for d in dirs])
        return SemiNorm2.sampled(vals)

    # -- basic structure ----------------------------------------------------

    @property
    def m(self):
        return 0 if self.values is None else int(self.values.size)

    @property
    def degenerate(self):
        if self.kind == "quadratic":
            lmax = _eig2_max(self.matrix)
            if lmax <= 0:
                return True
            return _eig2_min(self.matrix) < DEGEN_TOL * lmax
        vmax = float(self.values.max(initial=0.0))
        if vmax <= 0:
            return True
        return float(self.values.min()) < DEGEN_TOL * vmax

    def __call__(self, v):
        """Evaluate the semi-norm at a vector (or an array of row vectors)."""
        v = np.asarray(v, dtype=float)
        single = v.ndim == 1
        pts = v.reshape(-1, 2)
        if self.kind == "quadratic":
            out = np.sqrt(np.maximum(np.einsum("ki,ij,kj->k", pts, self.matrix, pts), 0.0))
        else:
            out = _sampled_gauge(self, pts)
        return float(out[0]) if single else out

    def scaled(self, c):
        """The semi-norm c*s for c > 0."""
        if c <= 0:
            raise ValueError("scale must be positive")
        if self.kind == "quadratic":
            return SemiNorm2.quadratic(c**2 * self.matrix)
        return SemiNorm2.sampled(c * self.values)

    def rotated(self, alpha):
        """The semi-norm v -> s(R_alpha v)."""
        c, s = math.cos(alpha), math.sin(alpha)
        r = np.array([[c, -s], [s, c]])
        if self.kind == "quadratic":
            return SemiNorm2.quadratic(r.T @ self.matrix @ r)
        dirs = half_circle_directions(self.m) @ r.T
        return SemiNorm2.sampled(self.__call__(dirs))

    # -- unit-ball polygon (sampled representation) --------------------------

    def _polygon(self):
        """Vertices (2m, 2) and edge half-planes (normals, offsets) of the ball."""
        if "polygon" in self._cache:
            return self._cache["polygon"]
        if self.kind != "sampled":
            raise ValueError("polygon only defined for sampled semi-norms")
        if self.degenerate:
            raise DegenerateSemiNorm("unit ball of a degenerate semi-norm is unbounded")
        dirs = half_circle_directions(self.m)
        radii = 1.0 / self.values
        verts = np.vstack([dirs * radii[:, None], -dirs * radii[:, None]])
        edges = verts[np.r_[1 : len(verts), 0]] - verts
        normals = np.column_stack([edges[:, 1], -edges[:, 0]])
        norm = np.linalg.norm(normals, axis=1)
        if np.any(norm <= 0):
            raise DegenerateSemiNorm("repeated vertices in sampled unit ball")
        normals /= norm[:, None]
        offsets = np.einsum("ij,ij->i", normals, verts)
        if np.any(offsets <= 0):
            raise ValueError("sampled gauge is not convex (non-star polygon)")
        out = (verts, normals, offsets, normals / offsets[:, None])
        self._cache["polygon"] = out
        return out

    def ball_area(self):
        """Lebesgue area of the unit ball {s <= 1}."""
        if self.kind == "quadratic":
            if self.degenerate:
                return math.inf
            return math.pi / math.sqrt(_det2(self.matrix))
        if self.degenerate:
            return math.inf
        verts = self._polygon()[0]
        x, y = verts[:, 0], verts[:, 1]
        return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    def is_convex(self, tol=1e-9):
        """True if the sampled ball polygon is convex (quadratic: always)."""
        if self.kind == "quadratic":
            return True
        if self.degenerate:
            return False
        verts = self._polygon()[0]
        a = verts[np.r_[1 : len(verts), 0]] - verts
        b = np.roll(a, -1, axis=0)
        cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        scale = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
        return bool(np.all(cross >= -tol * np.maximum(scale, 1e-300)))

    # -- serialization -------------------------------------------------------

    def record(self):
        """Plain-text record: 'Q a11 a12 a22' or 'S m v1 ... vm'."""
        if self.kind == "quadratic":
            q = self.matrix
            return "Q " + " ".join(format(x, ".17g") for x in (q[0, 0], q[0, 1], q[1, 1]))
        vals = " ".join(format(x, ".17g") for x in self.values)
        return f"S {self.m} {vals}"

    @staticmethod
    def from_record(text):
        parts = text.split()
        if not parts:
            raise InputFormatError("empty semi-norm record")
        if parts[0] == "Q":
            if len(parts) != 4:
                raise InputFormatError("quadratic record needs 3 entries")
            a, b, c = (float(x) for x in parts[1:])
            return SemiNorm2.quadratic(np.array([[a, b], [b, c]]))
        if parts[0] == "S":
            m = int(parts[1])
            vals = [float(x) for x in parts[2:]]
            if len(vals) != m:
                raise InputFormatError(f"sampled record announced {m} values, got {len(vals)}")
            return SemiNorm2.sampled(vals)
        raise InputFormatError(f"unknown semi-norm record tag {parts[0]!r}")


def _sampled_gauge(s, pts):
    """Gauge of the polygonal unit ball at each row of pts."""
    if s.degenerate:
        # Fall back to angular interpolation of the samples; only used for
        # degenerate semi-norms, where the polygon is unbounded.
        ang = np.arctan2(pts[:, 1], pts[:, 0]) % np.pi
        idx = ang / (np.pi / s.m)
        i0 = np.floor(idx).astype(int) % s.m
        i1 = (i0 + 1) % s.m
        t = idx - np.floor(idx)
        ray = (1 - t) * s.values[i0] + t * s.values[i1]
        return ray * np.linalg.norm(pts, axis=1)
    scaled = s._polygon()[3]
    # edges come in antipodal pairs; fold the second half into an abs and
    # chunk the matmul so large point sets stay memory-bounded
    half = scaled[: scaled.shape[0] // 2]
    out = np.empty(pts.shape[0])
    step = 1 << 17
    for k in range(0, pts.shape[0], step):
        blk = pts[k : k + step]
        np.max(np.abs(blk @ half.T), axis=1, out=out[k : k + step])
    return out


# -- 2x2 symmetric eigen helpers ---------------------------------------------

def _det2(q):
    return q[0, 0] * q[1, 1] - q[0, 1] * q[1, 0]


def _eig2(q):
    tr = q[0, 0] + q[1, 1]
    gap = math.hypot(q[0, 0] - q[1, 1], 2.0 * q[0, 1])
    return 0.5 * (tr - gap), 0.5 * (tr + gap)


def _eig2_min(q):
    return _eig2(q)[0]


def _eig2_max(q):
    return _eig2(q)[1]


def _principal_angle(q):
    """Angle of the eigenvector for the largest eigenvalue of symmetric q."""
    return 0.5 * math.atan2(2.0 * q[0, 1], q[0, 0] - q[1, 1])


# -- operations ---------------------------------------------------------------

def energy_plus(s):
    """max of s(v)^2 over Euclidean unit vectors."""
    if s.kind == "quadratic":
        return max(_eig2_max(s.matrix), 0.0)
    return float(np.max(s.values) ** 2)


def john_ellipse(s, feas_tol=FEAS_TOL):
    """Maximal-area centered ellipse inscribed in the unit ball of s.

    Quadratic: the unit ball is itself an ellipse, returned exactly.
    Sampled: 3-parameter maximization of the axis product over a coarse
    angle grid with golden-section refinement; for a fixed angle the
    problem is linear in the squared axes and is solved exactly by
    enumerating constraint vertices and tangency points.  The result is
    certified by sweeping boundary points against the gauge.
    """
    if s.degenerate:
        raise DegenerateSemiNorm("no inscribed ellipse: semi-norm is degenerate")
    if "john" in s._cache:
        return s._cache["john"]
    if s.kind == "quadratic":
        lmin, lmax = _eig2(s.matrix)
        a = 1.0 / math.sqrt(lmin)
        b = 1.0 / math.sqrt(lmax)
        theta = _principal_angle(s.matrix) + 0.5 * math.pi
        ell = Ellipse2(a=a, b=b, theta=theta % math.pi)
    else:
        ell = _john_sampled(s)
        worst = float(np.max(s(ell.boundary())))
        if worst > 1.0 + feas_tol:
            raise RuntimeError(f"inscribed-ellipse certificate failed: gauge {worst}")
    s._cache["john"] = ell
    return ell


def _john_inner(normals, offsets, theta):
    """Exact max of A*B s.t. the axis-aligned-in-theta ellipse fits the polygon.

    Constraint per edge (n, c): A*(n.e)^2 + B*(n.e_perp)^2 <= c^2 where
    e = (cos theta, sin theta), i.e. A p_i + B q_i <= 1 after normalizing.
    The optimum is a tangency point on one constraint or a vertex of two;
    only constraints on the convex hull of the dual points (p_i, q_i) can
    be active (the rest are convex combinations), which keeps the candidate
    set linear in the edge count.  Returns (A, B, value).
    """
    c, sn = math.cos(theta), math.sin(theta)
    half = normals.shape[0] // 2       # antipodal edges repeat the constraint
    nh = normals[:half]
    al = nh[:, 0] * c + nh[:, 1] * sn
    be = -nh[:, 0] * sn + nh[:, 1] * c
    g2 = offsets[:half] ** 2
    p = al**2 / g2
    q = be**2 / g2

    from scipy.spatial import ConvexHull

    duals = np.column_stack([p, q])
    try:
        hull = ConvexHull(np.vstack([[0.0, 0.0], duals]))
        on_hull = hull.vertices[hull.vertices != 0] - 1
    except Exception:
        on_hull = np.arange(len(p))
    # order along the chain so consecutive entries share a facet
    on_hull = on_hull[np.argsort(np.arctan2(q[on_hull], p[on_hull]))]

    cand_a = []
    cand_b = []
    good = (p[on_hull] > 1e-14) & (q[on_hull] > 1e-14)
    cand_a.append(1.0 / (2 * p[on_hull][good]))
    cand_b.append(1.0 / (2 * q[on_hull][good]))
    i, j = on_hull[:-1], on_hull[1:]
    det = p[i] * q[j] - p[j] * q[i]
    ok = np.abs(det) > 1e-14
    i, j, det = i[ok], j[ok], det[ok]
    av = (q[j] - q[i]) / det
    bv = (p[i] - p[j]) / det
    pos = (av > 0) & (bv > 0)
    cand_a.append(av[pos])
    cand_b.append(bv[pos])

    A = np.concatenate(cand_a)
    B = np.concatenate(cand_b)
    if A.size == 0:
        return 0.0, 0.0, 0.0
    # project each candidate onto the feasible boundary: dividing (A, B) by
    # the worst constraint load keeps exact candidates exact and makes
    # near-miss candidates feasible instead of discarding them
    load = np.max(A[:, None] * p[None, :] + B[:, None] * q[None, :], axis=1)
    ok = load > 0
    if not np.any(ok):
        return 0.0, 0.0, 0.0
    val = np.where(ok, A * B / np.where(ok, load, 1.0) ** 2, -np.inf)
    kbest = int(np.argmax(val))
    return (float(A[kbest] / load[kbest]), float(B[kbest] / load[kbest]),
            float(val[kbest]))


def _golden_max(fn, lo, hi, iters=48):
    phi = (math.sqrt(5) - 1) / 2
    x1 = hi - phi * (hi - lo)
    x2 = lo + phi * (hi - lo)
    f1, f2 = fn(x1), fn(x2)
    for _ in range(iters):
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + phi * (hi - lo)
            f2 = fn(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - phi * (hi - lo)
            f1 = fn(x1)
    mid = 0.5 * (lo + hi)
    return mid, fn(mid)


def _john_sampled(s):
    _, normals, offsets, _ = s._polygon()
    objective = lambda t: _john_inner(normals, offsets, t)[2]
    # the parametrization is pi/2-periodic in theta once (A, B) may swap
    step = math.pi / 24
    grid = list(np.arange(0.0, math.pi / 2 + 1e-12, step))
    # warm start: the principal angle of a least-squares quadratic surrogate
    # (exact when the polygon samples an ellipse, where the basin is narrow)
    dirs = half_circle_directions(s.m)
    design = np.column_stack([dirs[:, 0] ** 2, 2 * dirs[:, 0] * dirs[:, 1],
                              dirs[:, 1] ** 2])
    coef, *_ = np.linalg.lstsq(design, s.values**2, rcond=None)
    qfit = np.array([[coef[0], coef[1]], [coef[1], coef[2]]])
    grid.append((_principal_angle(qfit) + 0.5 * math.pi) % (0.5 * math.pi))
    vals = [objective(t) for t in grid]
    kbest = int(np.argmax(vals))
    # refine the best bracket, plus the warm-start one when it is distinct
    # (narrow basins near a sampled ellipse live at the fitted angle)
    brackets = {kbest}
    if abs(grid[-1] - grid[kbest]) > step:
        brackets.add(len(grid) - 1)
    best = (-1.0, 0.0)
    for k in sorted(brackets):
        t_star, v_star = _golden_max(objective, grid[k] - step, grid[k] + step,
                                     iters=30)
        if v_star > best[0]:
            best = (v_star, t_star)
    theta = best[1]
    aa, bb, _ = _john_inner(normals, offsets, theta)
    a, b = math.sqrt(aa), math.sqrt(bb)
    if a < b:
        a, b = b, a
        theta += 0.5 * math.pi
    return Ellipse2(a=a, b=b, theta=theta % math.pi)


def jacobian_intrinsic(s):
    """pi / (area of the inscribed ellipse); 0 for degenerate semi-norms."""
    if s.degenerate:
        return 0.0
    if s.kind == "quadratic":
        return math.sqrt(max(_det2(s.matrix), 0.0))
    e = john_ellipse(s)
    return math.pi / e.area


def jacobian_hausdorff(s):
    """pi / (area of the unit ball); 0 for degenerate semi-norms."""
    if s.degenerate:
        return 0.0
    return math.pi / s.ball_area()


def isotropy_defect(s):
    """energy_plus(s) - jacobian_intrinsic(s); ~0 exactly for isotropic s."""
    return energy_plus(s) - jacobian_intrinsic(s)


def regularize(s, delta):
    """The semi-norm h -> sqrt(s(h)^2 + delta^2 |h|^2); never degenerate."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    if s.kind == "quadratic":
        return SemiNorm2.quadratic(s.matrix + delta**2 * np.eye(2))
    return SemiNorm2.sampled(np.sqrt(s.values**2 + delta**2))


def beltrami_of(s):
    """Beltrami coefficient of an orientation-preserving linear map sending
    the inscribed ellipse of s to a round ball.

    The coefficient does not depend on which such map is chosen.  The phase
    convention locked here comes from T = diag(1/a, 1/b) . R_{-theta}, which
    gives mu = -(a - b)/(a + b) * exp(2 i theta).
    """
    if s.degenerate:
        raise DegenerateSemiNorm("Beltrami coefficient needs a non-degenerate norm")
    e = john_ellipse(s)
    k = (e.a - e.b) / (e.a + e.b)
    return -k * complex(math.cos(2 * e.theta), math.sin(2 * e.theta))
