"""Sampled maps on the unit disc and their derivative semi-norm fields.

The disc is discretized by an n x n cell grid on [-1, 1]^2 (spacing h = 2/n,
midpoint quadrature with weight h^2 per cell).  Map values live on every cell
whose center lies in the open disc; derivative semi-norms are estimated on
the interior cells (margin 2h from the boundary) so that all finite
difference stencils stay inside the sampled region.  Integrals extend the
interior integrand to the remaining boundary cells by nearest interior cell,
which keeps constant integrands exact and the domain area at its lattice
value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import seminorm as sn
from .errors import ImageOutsideDomain, InputFormatError, StencilOutOfDomain
from .seminorm import SemiNorm2, half_circle_directions

QUADRATIC_STENCIL_DIRECTIONS = 8
POLYGONAL_STENCIL_DIRECTIONS = 2 * sn.DEFAULT_SAMPLES


@dataclass(frozen=True)
class DiscGrid:
    """Cell grid on [-1,1]^2 masked to the unit disc."""

    n: int
    margin: float | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 16:
            raise ValueError("need at least 16 cells per axis")
        if self.margin is None:
            # unit stencil radius h plus sqrt(2) h for the bilinear support
            object.__setattr__(self, "margin", 2.5 * self.h)

    @property
    def h(self):
        return 2.0 / self.n

    @property
    def centers(self):
        return (np.arange(self.n) + 0.5) * self.h - 1.0

    def _grids(self):
        if "xy" not in self._cache:
            x, y = np.meshgrid(self.centers, self.centers, indexing="ij")
            self._cache["xy"] = (x, y, np.hypot(x, y))
        return self._cache["xy"]

    @property
    def x(self):
        return self._grids()[0]

    @property
    def y(self):
        return self._grids()[1]

    @property
    def radius(self):
        return self._grids()[2]

    @property
    def disc_mask(self):
        """Cells whose center lies in the open unit disc (map values live here)."""
        return self.radius < 1.0

    @property
    def interior_mask(self):
        """Cells with |z| < 1 - margin (derivative stencils stay in the disc)."""
        return self.radius < 1.0 - self.margin

    @property
    def weight(self):
        return self.h * self.h

    def extension_indices(self):
        """For every cell, the (i, j) index of the nearest interior cell."""
        if "ext" not in self._cache:
            _, idx = ndimage.distance_transform_edt(
                ~self.interior_mask, return_indices=True
            )
            self._cache["ext"] = (idx[0], idx[1])
        return self._cache["ext"]

    def extend(self, arr):
        """Nearest-interior extension of a per-cell array onto all cells."""
        ei, ej = self.extension_indices()
        return arr[ei, ej]

    def integrate(self, density):
        """Midpoint quadrature of a per-cell density over the disc."""
        return float(np.sum(density[self.disc_mask]) * self.weight)


@dataclass(frozen=True)
class TargetSpace:
    """Normed target R^d: Euclidean, quadratic-form, or polygonal gauge on R^2."""

    kind: str
    d: int
    gram: np.ndarray | None = None       # quadratic kind
    gauge: np.ndarray | None = None      # polygonal kind, sampled values
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @staticmethod
    def euclidean(d=2):
        return TargetSpace(kind="euclidean", d=int(d))

    @staticmethod
    def quadratic(gram):
        gram = np.asarray(gram, dtype=float)
        if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
            raise ValueError("Gram matrix must be square")
        if not np.allclose(gram, gram.T, atol=1e-12):
            raise ValueError("Gram matrix must be symmetric")
        if np.linalg.eigvalsh(gram).min() < -1e-12:
            raise ValueError("Gram matrix must be positive semi-definite")
        gram.setflags(write=False)
        return TargetSpace(kind="quadratic", d=gram.shape[0], gram=gram)

    @staticmethod
    def polygonal(gauge_values):
        s = SemiNorm2.sampled(gauge_values)
        if s.degenerate:
            raise ValueError("polygonal gauge must be a norm")
        return TargetSpace(kind="polygonal", d=2, gauge=s.values)

    @staticmethod
    def linf(m=sn.DEFAULT_SAMPLES):
        dirs = half_circle_directions(m)
        return TargetSpace.polygonal(np.abs(dirs).max(axis=1))

    @staticmethod
    def l1(m=sn.DEFAULT_SAMPLES):
        dirs = half_circle_directions(m)
        return TargetSpace.polygonal(np.abs(dirs).sum(axis=1))

    def _gauge_norm(self):
        if "norm" not in self._cache:
            self._cache["norm"] = SemiNorm2.sampled(self.gauge)
        return self._cache["norm"]

    def distance(self, xs, ys):
        """Metric distance between row-stacked points (vectorized)."""
        diff = np.atleast_2d(np.asarray(xs, dtype=float) - np.asarray(ys, dtype=float))
        if self.kind == "euclidean":
            return np.linalg.norm(diff, axis=-1)
        if self.kind == "quadratic":
            return np.sqrt(np.maximum(
                np.einsum("...i,ij,...j->...", diff, self.gram, diff), 0.0))
        return self._gauge_norm()(diff)

    def descriptor(self):
        if self.kind == "euclidean":
            return f"euclidean {self.d}"
        if self.kind == "quadratic":
            entries = " ".join(format(v, ".17g") for v in self.gram.ravel())
            return f"quadratic {self.d} {entries}"
        entries = " ".join(format(v, ".17g") for v in self.gauge)
        return f"polygonal {self.gauge.size} {entries}"

    @staticmethod
    def from_descriptor(tokens):
        if isinstance(tokens, str):
            tokens = tokens.split()
        if not tokens:
            raise InputFormatError("empty target descriptor")
        tag = tokens[0]
        if tag == "euclidean":
            return TargetSpace.euclidean(int(tokens[1]))
        if tag == "quadratic":
            d = int(tokens[1])
            vals = [float(t) for t in tokens[2:]]
            if len(vals) != d * d:
                raise InputFormatError("quadratic descriptor needs d*d entries")
            return TargetSpace.quadratic(np.array(vals).reshape(d, d))
        if tag == "polygonal":
            m = int(tokens[1])
            vals = [float(t) for t in tokens[2:]]
            if len(vals) != m:
                raise InputFormatError("polygonal descriptor needs m entries")
            return TargetSpace.polygonal(vals)
        raise InputFormatError(f"unknown target kind {tag!r}")


@dataclass(frozen=True)
class SampledMap:
    """Map values on the disc cells of a grid, into a normed target."""

    grid: DiscGrid
    target: TargetSpace
    values: np.ndarray          # (n, n, d), finite on grid.disc_mask

    def __post_init__(self):
        v = self.values
        if v.shape != (self.grid.n, self.grid.n, self.target.d):
            raise ValueError("value array shape does not match grid/target")
        if not np.all(np.isfinite(v[self.grid.disc_mask])):
            raise ValueError("map values must be finite on all disc cells")

    @staticmethod
    def from_function(grid, target, fn):
        """Evaluate fn(x, y) -> R^d on all cell centers (vectorized)."""
        out = np.asarray(fn(grid.x, grid.y), dtype=float)
        if out.shape[0] == target.d:
            out = np.moveaxis(out, 0, -1)
        return SampledMap(grid=grid, target=target, values=out)

    def sample(self, pts):
        """Bilinear interpolation of the map at points inside the disc."""
        pts = np.atleast_2d(pts)
        ix = (pts[:, 0] + 1.0) / self.grid.h - 0.5
        iy = (pts[:, 1] + 1.0) / self.grid.h - 0.5
        i0 = np.clip(np.floor(ix).astype(int), 0, self.grid.n - 2)
        j0 = np.clip(np.floor(iy).astype(int), 0, self.grid.n - 2)
        tx = (ix - i0)[:, None]
        ty = (iy - j0)[:, None]
        v = self.values
        return ((1 - tx) * (1 - ty) * v[i0, j0]
                + tx * (1 - ty) * v[i0 + 1, j0]
                + (1 - tx) * ty * v[i0, j0 + 1]
                + tx * ty * v[i0 + 1, j0 + 1])

    # -- text format: header "n d target...", then "i j x1 ... xd" -----------

    def save(self, path):
        lines = [f"{self.grid.n} {self.target.d} {self.target.descriptor()}"]
        mask = self.grid.disc_mask
        for i, j in zip(*np.nonzero(mask)):
            coords = " ".join(format(v, ".17g") for v in self.values[i, j])
            lines.append(f"{i} {j} {coords}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @staticmethod
    def load(path):
        with open(path) as fh:
            header = fh.readline().split()
            if len(header) < 3:
                raise InputFormatError("map file header needs n, d, target descriptor")
            n, d = int(header[0]), int(header[1])
            target = TargetSpace.from_descriptor(header[2:])
            if target.d != d:
                raise InputFormatError("target dimension disagrees with header")
            grid = DiscGrid(n)
            values = np.full((n, n, d), np.nan)
            seen = np.zeros((n, n), dtype=bool)
            for line in fh:
                parts = line.split()
                if not parts:
                    continue
                if len(parts) != 2 + d:
                    raise InputFormatError(f"bad cell record: {line!r}")
                i, j = int(parts[0]), int(parts[1])
                values[i, j] = [float(t) for t in parts[2:]]
                seen[i, j] = True
        missing = grid.disc_mask & ~seen
        if np.any(missing):
            raise InputFormatError(f"{int(missing.sum())} disc cells missing from file")
        return SampledMap(grid=grid, target=target, values=values)


@dataclass(frozen=True)
class DerivativeField:
    """Estimated derivative semi-norms of a map, one per interior cell.

    Stored packed: quadratic fields keep (q11, q12, q22) per cell, sampled
    fields keep the m gauge values per cell.  Densities are evaluated on all
    disc cells through the nearest-interior extension of the grid.
    """

    grid: DiscGrid
    kind: str                       # "quadratic" | "sampled"
    quad: np.ndarray | None = None  # (n, n, 3)
    samp: np.ndarray | None = None  # (n, n, m)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def interior_mask(self):
        return self.grid.interior_mask

    def seminorm_at(self, i, j):
        """SemiNorm2 of the cell (nearest-interior extension applied)."""
        ei, ej = self.grid.extension_indices()
        i, j = int(ei[i, j]), int(ej[i, j])
        if self.kind == "quadratic":
            a, b, c = self.quad[i, j]
            return SemiNorm2.quadratic(np.array([[a, b], [b, c]]))
        return SemiNorm2.sampled(self.samp[i, j])

    # -- packed per-cell data on all disc cells ------------------------------

    def packed_extended(self):
        if "packed" not in self._cache:
            data = self.quad if self.kind == "quadratic" else self.samp
            self._cache["packed"] = self.grid.extend(data)
        return self._cache["packed"]

    # -- densities ------------------------------------------------------------

    def energy_density(self):
        """I_+^2 of the cell semi-norm, per cell (extended)."""
        p = self.packed_extended()
        if self.kind == "quadratic":
            return _quad_lmax(p[..., 0], p[..., 1], p[..., 2])
        return np.max(p, axis=-1) ** 2

    def jacobian_intrinsic_density(self, delta=0.0):
        """Inscribed-ellipse jacobian of the (optionally regularized) semi-norm."""
        p = self.packed_extended()
        if self.kind == "quadratic":
            q11 = p[..., 0] + delta**2
            q22 = p[..., 2] + delta**2
            q12 = p[..., 1]
            det = np.maximum(q11 * q22 - q12**2, 0.0)
            out = np.sqrt(det)
            if delta == 0.0:
                out[~_quad_nondegenerate(q11, q12, q22)] = 0.0
            return out
        return self._sampled_cellwise(
            lambda s: sn.jacobian_intrinsic(s if delta == 0.0 else sn.regularize(s, delta)),
            key=("jint", delta))

    def jacobian_hausdorff_density(self):
        """Unit-ball-area jacobian per cell (extended)."""
        p = self.packed_extended()
        if self.kind == "quadratic":
            det = np.maximum(p[..., 0] * p[..., 2] - p[..., 1] ** 2, 0.0)
            out = np.sqrt(det)
            out[~_quad_nondegenerate(p[..., 0], p[..., 1], p[..., 2])] = 0.0
            return out
        return self._sampled_cellwise(
            lambda s: 0.0 if s.degenerate else math.pi / s.ball_area(),
            key=("jh",))

    def isotropy_defect_density(self):
        return self.energy_density() - self.jacobian_intrinsic_density()

    def beltrami_density(self, delta):
        """Beltrami coefficient of the delta-regularized cell semi-norm."""
        p = self.packed_extended()
        if self.kind == "quadratic":
            q11 = p[..., 0] + delta**2
            q22 = p[..., 2] + delta**2
            q12 = p[..., 1]
            tr = q11 + q22
            gap = np.hypot(q11 - q22, 2.0 * q12)
            lmin = np.maximum(0.5 * (tr - gap), 0.0)
            lmax = 0.5 * (tr + gap)
            rs = np.sqrt(lmax) + np.sqrt(lmin)
            k = np.where(rs > 0, (np.sqrt(lmax) - np.sqrt(lmin)) / np.where(rs > 0, rs, 1.0), 0.0)
            phi = 0.5 * np.arctan2(2.0 * q12, q11 - q22)
            return k * np.exp(2j * phi)
        return self._sampled_cellwise(
            lambda s: sn.beltrami_of(sn.regularize(s, delta)),
            key=("mu", delta), dtype=complex)

    def unique_rows(self):
        """Deduplicated packed rows and the per-cell inverse index (cached)."""
        if "unique" not in self._cache:
            p = self.packed_extended()
            flat = np.round(p.reshape(-1, p.shape[-1]), 12)
            uniq, inv = np.unique(flat, axis=0, return_inverse=True)
            self._cache["unique"] = (uniq, inv.reshape(p.shape[:2]))
        return self._cache["unique"]

    def _sampled_cellwise(self, fn, key, dtype=float):
        """Apply fn per unique sampled semi-norm (cells are heavily repeated)."""
        if key in self._cache:
            return self._cache[key]
        uniq, inv = self.unique_rows()
        vals = np.empty(len(uniq), dtype=dtype)
        for r, row in enumerate(uniq):
            vals[r] = fn(SemiNorm2.sampled(np.maximum(row, 0.0)))
        out = vals[inv]
        self._cache[key] = out
        return out

    # -- serialization --------------------------------------------------------

    def save(self, path):
        lines = [f"{self.grid.n} {self.kind}"]
        for i, j in zip(*np.nonzero(self.interior_mask)):
            lines.append(f"{i} {j} {self.seminorm_at(i, j).record()}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @staticmethod
    def load(path):
        with open(path) as fh:
            header = fh.readline().split()
            if len(header) != 2 or header[1] not in ("quadratic", "sampled"):
                raise InputFormatError("bad derivative-field header")
            n, kind = int(header[0]), header[1]
            grid = DiscGrid(n)
            quad = np.zeros((n, n, 3)) if kind == "quadratic" else None
            samp = None
            for line in fh:
                parts = line.split(maxsplit=2)
                if not parts:
                    continue
                i, j = int(parts[0]), int(parts[1])
                s = SemiNorm2.from_record(parts[2])
                if kind == "quadratic":
                    if s.kind != "quadratic":
                        raise InputFormatError("mixed representations in field file")
                    quad[i, j] = (s.matrix[0, 0], s.matrix[0, 1], s.matrix[1, 1])
                else:
                    if s.kind != "sampled":
                        raise InputFormatError("mixed representations in field file")
                    if samp is None:
                        samp = np.zeros((n, n, s.m))
                    samp[i, j] = s.values
        return DerivativeField(grid=grid, kind=kind, quad=quad, samp=samp)


def _quad_lmax(q11, q12, q22):
    tr = q11 + q22
    gap = np.hypot(q11 - q22, 2.0 * q12)
    return np.maximum(0.5 * (tr + gap), 0.0)


def _quad_nondegenerate(q11, q12, q22):
    tr = q11 + q22
    gap = np.hypot(q11 - q22, 2.0 * q12)
    lmax = 0.5 * (tr + gap)
    lmin = 0.5 * (tr - gap)
    return (lmax > 0) & (lmin >= sn.DEGEN_TOL * lmax)


# -- derivative estimation -----------------------------------------------------

def _stencil_directions(target):
    if target.kind == "polygonal":
        mdir = 2 * target.gauge.size
    else:
        mdir = QUADRATIC_STENCIL_DIRECTIONS
    ang = np.arange(mdir) * (2.0 * np.pi / mdir)
    return np.column_stack([np.cos(ang), np.sin(ang)])


def estimate_derivative(u, i, j):
    """Derivative semi-norm of u at one cell via radius-h gauge sampling.

    For each unit direction v, g(v) = d(u(z + h v), u(z)) / h with the
    off-center value interpolated bilinearly.  Euclidean and quadratic
    targets get a least-squares positive semi-definite quadratic fit of
    g^2; polygonal targets get a sampled semi-norm (symmetrized over
    antipodes and convexified).
    """
    grid = u.grid
    z = np.array([grid.x[i, j], grid.y[i, j]])
    dirs = _stencil_directions(u.target)
    pts = z[None, :] + grid.h * dirs
    if np.any(np.hypot(pts[:, 0], pts[:, 1]) >= 1.0 - 1.5 * grid.h):
        raise StencilOutOfDomain(f"stencil at cell ({i}, {j}) leaves the disc")
    g = u.target.distance(u.sample(pts), u.values[i, j][None, :]) / grid.h
    if u.target.kind == "polygonal":
        m = dirs.shape[0] // 2
        sym = 0.5 * (g[:m] + g[m:])
        return SemiNorm2.sampled(_convexify_gauge(sym))
    q = _fit_quadratic(dirs, g)
    return SemiNorm2.quadratic(q)


def estimate_field(u):
    """Derivative semi-norms on all interior cells (vectorized)."""
    grid = u.grid
    mask = grid.interior_mask
    ii, jj = np.nonzero(mask)
    z = np.column_stack([grid.x[mask], grid.y[mask]])
    dirs = _stencil_directions(u.target)
    base = u.values[ii, jj]
    g = np.empty((len(ii), len(dirs)))
    for kdir, v in enumerate(dirs):
        pts = z + grid.h * v[None, :]
        g[:, kdir] = u.target.distance(u.sample(pts), base) / grid.h

    if u.target.kind == "polygonal":
        m = len(dirs) // 2
        sym = 0.5 * (g[:, :m] + g[:, m:])
        samp = np.zeros((grid.n, grid.n, m))
        flat = np.round(sym, 12)
        uniq, inv = np.unique(flat, axis=0, return_inverse=True)
        fixed = np.stack([_convexify_gauge(row) for row in uniq])
        samp[ii, jj] = fixed[inv]
        return DerivativeField(grid=grid, kind="sampled", samp=samp)

    design = np.column_stack([dirs[:, 0] ** 2, 2 * dirs[:, 0] * dirs[:, 1], dirs[:, 1] ** 2])
    pinv = np.linalg.pinv(design)
    coef = g**2 @ pinv.T                     # (cells, 3) = q11, q12, q22
    coef = _project_psd(coef)
    quad = np.zeros((grid.n, grid.n, 3))
    quad[ii, jj] = coef
    return DerivativeField(grid=grid, kind="quadratic", quad=quad)


def _fit_quadratic(dirs, g):
    design = np.column_stack([dirs[:, 0] ** 2, 2 * dirs[:, 0] * dirs[:, 1], dirs[:, 1] ** 2])
    coef, *_ = np.linalg.lstsq(design, g**2, rcond=None)
    coef = _project_psd(coef[None, :])[0]
    return np.array([[coef[0], coef[1]], [coef[1], coef[2]]])


def _project_psd(coef):
    """Clamp negative eigenvalues of packed (q11, q12, q22) rows to zero."""
    q11, q12, q22 = coef[:, 0], coef[:, 1], coef[:, 2]
    tr = q11 + q22
    gap = np.hypot(q11 - q22, 2.0 * q12)
    lmin = 0.5 * (tr - gap)
    lmax = 0.5 * (tr + gap)
    need = lmin < 0
    if not np.any(need):
        return coef
    out = coef.copy()
    lmaxc = np.maximum(lmax[need], 0.0)
    phi = 0.5 * np.arctan2(2.0 * q12[need], (q11 - q22)[need])
    c, s = np.cos(phi), np.sin(phi)
    out[need, 0] = lmaxc * c * c
    out[need, 1] = lmaxc * c * s
    out[need, 2] = lmaxc * s * s
    return out


def _convexify_gauge(values):
    """Convex-hull correction of sampled gauge values (noise can dent the ball)."""
    values = np.asarray(values, dtype=float)
    vmax = values.max(initial=0.0)
    if vmax <= 0 or values.min() < sn.DEGEN_TOL * vmax:
        return values                      # degenerate; leave as measured
    s = SemiNorm2.sampled(values)
    if s.is_convex():
        return values
    from scipy.spatial import ConvexHull

    m = values.size
    dirs = half_circle_directions(m)
    verts = np.vstack([dirs / values[:, None], -dirs / values[:, None]])
    hull = ConvexHull(verts)
    normals = -hull.equations[:, :2]
    offsets = hull.equations[:, 2]
    return np.max((dirs @ normals.T) / offsets[None, :], axis=1)


# -- integrated quantities ------------------------------------------------------

def energy(field_):
    """Quadrature of the max-stretch-squared density over the disc."""
    return field_.grid.integrate(field_.energy_density())


def area_intrinsic(field_):
    """Quadrature of the inscribed-ellipse jacobian over the disc."""
    return field_.grid.integrate(field_.jacobian_intrinsic_density())


def area_hausdorff(field_):
    """Quadrature of the unit-ball-area jacobian over the disc."""
    return field_.grid.integrate(field_.jacobian_hausdorff_density())


def composed_energy(field_, phi):
    """Energy of the composition u . phi over phi's domain grid.

    phi is a sampled diffeomorphism (a QCMap) with values in the disc; per
    masked cell w the integrand is I_+^2(s_{phi(w)} . Dphi(w)), with the
    semi-norm looked up at the nearest disc cell of phi(w).  The map u is
    never resampled.
    """
    pts, df, cell_area = phi.domain_samples()
    z = np.column_stack([pts.real, pts.imag])
    if np.any(np.hypot(z[:, 0], z[:, 1]) >= 1.0):
        raise ImageOutsideDomain("phi maps a cell outside the closed disc")
    grid = field_.grid
    idx_i = np.clip(np.round((z[:, 0] + 1.0) / grid.h - 0.5).astype(int), 0, grid.n - 1)
    idx_j = np.clip(np.round((z[:, 1] + 1.0) / grid.h - 0.5).astype(int), 0, grid.n - 1)
    if field_.kind == "quadratic":
        p = field_.packed_extended()[idx_i, idx_j]
        q11, q12, q22 = p[:, 0], p[:, 1], p[:, 2]
        a, b = df[:, 0, 0], df[:, 0, 1]
        c, d = df[:, 1, 0], df[:, 1, 1]
        # M^T Q M for M = Dphi
        r11 = a * (q11 * a + q12 * c) + c * (q12 * a + q22 * c)
        r12 = a * (q11 * b + q12 * d) + c * (q12 * b + q22 * d)
        r22 = b * (q11 * b + q12 * d) + d * (q12 * b + q22 * d)
        dens = _quad_lmax(r11, r12, r22)
        return float(np.sum(dens) * cell_area)
    uniq, inv = field_.unique_rows()
    ids = inv[idx_i, idx_j]
    m = uniq.shape[-1]
    dirs = half_circle_directions(m)
    dens = np.empty(len(ids))
    for r in np.unique(ids):
        s = SemiNorm2.sampled(np.maximum(uniq[r], 0.0))
        sel = ids == r
        mapped = np.einsum("kab,mb->kma", df[sel], dirs)
        vals = s(mapped.reshape(-1, 2)).reshape(-1, m)
        dens[sel] = np.max(vals, axis=1) ** 2
    return float(np.sum(dens) * cell_area)
