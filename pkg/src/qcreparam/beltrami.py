"""Complex-analytic grid calculus and a Beltrami-equation solver.

Derivatives follow the complex conventions f_z = (f_x - i f_y)/2 and
f_zbar = (f_x + i f_y)/2, so a real differential [[a, b], [c, d]] carries
the pair (f_z, f_zbar) = (((a+d) + i(c-b))/2, ((a-d) + i(c+b))/2) and the
operator norm, minimal stretch and determinant are |f_z| + |f_zbar|,
| |f_z| - |f_zbar| | and |f_z|^2 - |f_zbar|^2.

The solver produces an orientation-preserving map f with f_zbar = mu f_z
for a compactly supported coefficient with sup |mu| = k < 1.  It iterates
h <- mu (1 + S h) with the two-dimensional singular integral S applied
spectrally on a periodic box (S has operator norm 1, so the iteration
contracts at rate k), then integrates h through the spectral antiderivative.
The mean of h cannot live in a periodic antiderivative, so it is carried by
an affine term:  f(z) = z + mean(h) zbar + (periodic part).  Certificates
(equation residual, orientation, dilatation) are measured from independent
central finite differences, not from the spectral construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import (
    CoefficientTooLarge,
    DegenerateDerivative,
    GridTooSmall,
    InputFormatError,
    NewtonDiverged,
    NoConvergence,
    OrientationViolation,
    PointOutsideImage,
    SupportTooClose,
)

SOLVER_BOX = 2.0
MAX_ITER = 200
ITER_TOL = 1e-12
RES_TOL = 1e-3
K_MARGIN = 0.02
DET_FLOOR = 1e-12
INV_TOL = 1e-8
NEWTON_MAX = 50
CERT_TOL = 0.01


# -- pointwise complex calculus -------------------------------------------------

def mat_to_wirtinger(df):
    """(f_z, f_zbar) of real 2x2 differentials (stacked in the last two axes)."""
    df = np.asarray(df, dtype=float)
    a, b = df[..., 0, 0], df[..., 0, 1]
    c, d = df[..., 1, 0], df[..., 1, 1]
    return 0.5 * ((a + d) + 1j * (c - b)), 0.5 * ((a - d) + 1j * (c + b))


def wirtinger_to_mat(fz, fzb):
    """Real 2x2 differentials from the complex derivative pair."""
    fz = np.asarray(fz)
    out = np.empty(fz.shape + (2, 2))
    out[..., 0, 0] = (fz + fzb).real
    out[..., 0, 1] = -(fz - fzb).imag
    out[..., 1, 0] = (fz + fzb).imag
    out[..., 1, 1] = (fz - fzb).real
    return out


def wirtinger(values, spacing):
    """Central-difference (f_z, f_zbar) of a complex map sampled on a uniform
    grid, one-sided at the boundary layer.  Axis 0 is x, axis 1 is y."""
    values = np.asarray(values, dtype=complex)
    if values.ndim != 2 or min(values.shape) < 3:
        raise GridTooSmall("need at least 3 nodes per axis")
    fx = np.gradient(values, spacing, axis=0, edge_order=2)
    fy = np.gradient(values, spacing, axis=1, edge_order=2)
    return 0.5 * (fx - 1j * fy), 0.5 * (fx + 1j * fy)


def beltrami_coefficient(values, spacing):
    """mu_f = f_zbar / f_z of a sampled orientation-preserving map."""
    fz, fzb = wirtinger(values, spacing)
    if np.any(np.abs(fz) <= np.abs(fzb)):
        raise OrientationViolation("|f_z| <= |f_zbar| at a node")
    return fzb / fz


def distortion(df):
    """Operator-norm-squared over determinant of 2x2 differentials."""
    fz, fzb = mat_to_wirtinger(df)
    det = np.abs(fz) ** 2 - np.abs(fzb) ** 2
    if np.any(det <= 0):
        raise OrientationViolation("det Df <= 0")
    return (np.abs(fz) + np.abs(fzb)) ** 2 / det


def distortion_from_mu(mu):
    return (1.0 + np.abs(mu)) / (1.0 - np.abs(mu))


def compose_coefficient(mu_f, mu_g, f_z):
    """Beltrami coefficient of g . f^{-1} at w = f(z), from the coefficients
    of f and g and from f_z, all evaluated at z."""
    mu_f = np.asarray(mu_f, dtype=complex)
    mu_g = np.asarray(mu_g, dtype=complex)
    f_z = np.asarray(f_z, dtype=complex)
    if np.any(f_z == 0):
        raise DegenerateDerivative("f_z = 0 in composition formula")
    phase = (f_z / np.abs(f_z)) ** 2
    out = (mu_g - mu_f) / (1.0 - mu_g * np.conj(mu_f)) * phase
    return complex(out) if out.ndim == 0 else out


# -- fields on the solver box ----------------------------------------------------

@dataclass(frozen=True)
class ComplexField:
    """Complex values on the cell-centered periodic box [-S, S]^2."""

    S: float
    values: np.ndarray

    def __post_init__(self):
        if self.S <= 1.0:
            raise ValueError("box half-width must exceed 1")
        v = np.asarray(self.values, dtype=complex)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("field must be a square grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def spacing(self):
        return 2.0 * self.S / self.n

    @property
    def coords(self):
        return -self.S + (np.arange(self.n) + 0.5) * self.spacing

    def meshes(self):
        return np.meshgrid(self.coords, self.coords, indexing="ij")

    def support_radius(self):
        """max |z| over nodes where the field is nonzero (0 if empty)."""
        x, y = self.meshes()
        hot = self.values != 0
        if not np.any(hot):
            return 0.0
        return float(np.hypot(x[hot], y[hot]).max())

    def sup_norm(self):
        return float(np.abs(self.values).max(initial=0.0))

    def sample_at(self, pts):
        """Nearest-node values at points (K, 2) inside the box."""
        pts = np.atleast_2d(pts)
        i = np.clip(np.round((pts[:, 0] + self.S) / self.spacing - 0.5).astype(int), 0, self.n - 1)
        j = np.clip(np.round((pts[:, 1] + self.S) / self.spacing - 0.5).astype(int), 0, self.n - 1)
        return self.values[i, j]

    def save(self, path):
        """Binary layout: float64 S, int64 n, row-major complex128 values."""
        import struct

        with open(path, "wb") as fh:
            fh.write(struct.pack("<dq", self.S, self.n))
            fh.write(np.ascontiguousarray(self.values, dtype=complex).tobytes())

    @staticmethod
    def load(path):
        import struct

        with open(path, "rb") as fh:
            head = fh.read(16)
            if len(head) != 16:
                raise InputFormatError("truncated field header")
            S, n = struct.unpack("<dq", head)
            data = np.frombuffer(fh.read(), dtype=complex)
        if data.size != n * n:
            raise InputFormatError("field payload size mismatch")
        return ComplexField(S=S, values=data.reshape(n, n).copy())


def mollify(mu, eta):
    """Convolution with the unit-mass radial bump of radius eta.

    Requires eta < distance(support, unit circle) so the smoothed support
    stays compactly inside the disc.  A radius below the grid spacing reduces
    to the identity (single-node kernel); the sup norm never increases.
    """
    if eta <= 0:
        raise ValueError("mollification radius must be positive")
    rad = mu.support_radius()
    if rad >= 1.0:
        raise SupportTooClose("coefficient support reaches the unit circle")
    if eta >= 1.0 - rad:
        raise SupportTooClose(
            f"radius {eta} exceeds distance {1.0 - rad:.3g} from support to the circle")
    d = mu.spacing
    r_cells = int(math.floor(eta / d))
    if r_cells < 1:
        return ComplexField(S=mu.S, values=mu.values.copy())
    offs = np.arange(-r_cells, r_cells + 1) * d
    ox, oy = np.meshgrid(offs, offs, indexing="ij")
    rr = np.hypot(ox, oy) / eta
    kernel = np.where(rr < 1.0, np.exp(-1.0 / np.maximum(1.0 - rr**2, 1e-300)), 0.0)
    kernel /= kernel.sum()
    from scipy.signal import fftconvolve

    out = fftconvolve(mu.values, kernel, mode="same")
    # confine to the eta-neighborhood of the input support (kills fft dust)
    footprint = rr < 1.0
    region = ndimage.binary_dilation(mu.values != 0, structure=footprint)
    out = np.where(region, out, 0.0)
    return ComplexField(S=mu.S, values=out)


# -- sampled quasiconformal maps ---------------------------------------------------

@dataclass(frozen=True)
class QCMap:
    """Sampled orientation-preserving map with differentials and certificates.

    Values and 2x2 differentials live on a cell-centered grid (origin is the
    coordinate of node (0, 0)); `mask` restricts partial domains such as an
    inverted image region.  Certificates are measured, not assumed.
    """

    x0: float
    y0: float
    spacing: float
    values: np.ndarray              # complex (N, M)
    df: np.ndarray                  # (N, M, 2, 2)
    mask: np.ndarray | None = None
    K_certified: float = math.nan
    det_min: float = math.nan
    residual_l2: float = math.nan
    k_coeff: float = math.nan
    iterations: int = 0
    contraction_rate: float = math.nan
    inv_residual_max: float = math.nan
    meta: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def shape(self):
        return self.values.shape

    def node_coords(self):
        xs = self.x0 + np.arange(self.shape[0]) * self.spacing
        ys = self.y0 + np.arange(self.shape[1]) * self.spacing
        return np.meshgrid(xs, ys, indexing="ij")

    def domain_samples(self):
        """(values, differentials, cell area) over masked nodes."""
        if self.mask is None:
            return self.values.ravel(), self.df.reshape(-1, 2, 2), self.spacing**2
        return self.values[self.mask], self.df[self.mask], self.spacing**2

    def _frac_index(self, pts):
        ix = (pts[:, 0] - self.x0) / self.spacing
        iy = (pts[:, 1] - self.y0) / self.spacing
        i0 = np.clip(np.floor(ix).astype(int), 0, self.shape[0] - 2)
        j0 = np.clip(np.floor(iy).astype(int), 0, self.shape[1] - 2)
        return i0, j0, ix - i0, iy - j0

    def value_at(self, pts):
        """Bilinear interpolation of the map at points (K, 2) -> complex."""
        pts = np.atleast_2d(pts)
        i0, j0, tx, ty = self._frac_index(pts)
        v = self.values
        return ((1 - tx) * (1 - ty) * v[i0, j0] + tx * (1 - ty) * v[i0 + 1, j0]
                + (1 - tx) * ty * v[i0, j0 + 1] + tx * ty * v[i0 + 1, j0 + 1])

    def df_at(self, pts):
        """Bilinear interpolation of the differential at points (K, 2)."""
        pts = np.atleast_2d(pts)
        i0, j0, tx, ty = self._frac_index(pts)
        tx = tx[:, None, None]
        ty = ty[:, None, None]
        d = self.df
        return ((1 - tx) * (1 - ty) * d[i0, j0] + tx * (1 - ty) * d[i0 + 1, j0]
                + (1 - tx) * ty * d[i0, j0 + 1] + tx * ty * d[i0 + 1, j0 + 1])

    def image_of_circle(self, radius=1.0, num=4096):
        t = np.linspace(0.0, 2.0 * np.pi, num, endpoint=False)
        pts = radius * np.column_stack([np.cos(t), np.sin(t)])
        return self.value_at(pts)

    def rotated(self, alpha):
        """Post-composition with the rotation by alpha (same domain grid)."""
        rot = np.array([[math.cos(alpha), -math.sin(alpha)],
                        [math.sin(alpha), math.cos(alpha)]])
        return replace(self, values=np.exp(1j * alpha) * self.values,
                       df=np.einsum("ab,ijbc->ijac", rot, self.df))

    def save(self, path):
        """Binary layout: header doubles (x0, y0, spacing, K, det_min, res, k),
        int64 shape, mask bytes, complex values, differentials."""
        import struct

        with open(path, "wb") as fh:
            fh.write(struct.pack(
                "<7d2q", self.x0, self.y0, self.spacing,
                self.K_certified, self.det_min, self.residual_l2,
                self.k_coeff, *self.shape))
            mask = (np.ones(self.shape, dtype=bool) if self.mask is None else self.mask)
            fh.write(mask.astype(np.uint8).tobytes())
            fh.write(np.ascontiguousarray(self.values, dtype=complex).tobytes())
            fh.write(np.ascontiguousarray(self.df, dtype=float).tobytes())

    @staticmethod
    def load(path):
        import struct

        with open(path, "rb") as fh:
            head = fh.read(7 * 8 + 2 * 8)
            x0, y0, sp, kc, dm, rl, kk, n, m = struct.unpack("<7d2q", head)
            mask = np.frombuffer(fh.read(n * m), dtype=np.uint8).reshape(n, m).astype(bool)
            values = np.frombuffer(fh.read(n * m * 16), dtype=complex).reshape(n, m).copy()
            df = np.frombuffer(fh.read(n * m * 32), dtype=float).reshape(n, m, 2, 2).copy()
        return QCMap(x0=x0, y0=y0, spacing=sp, values=values, df=df,
                     mask=None if mask.all() else mask,
                     K_certified=kc, det_min=dm, residual_l2=rl, k_coeff=kk)


def _spectral_multipliers(n, spacing):
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=spacing)
    kx, ky = np.meshgrid(k, k, indexing="ij")
    zeta = kx + 1j * ky
    safe = np.where(zeta == 0, 1.0, zeta)
    beurling = np.where(zeta == 0, 0.0, np.conj(zeta) / safe)
    cauchy = np.where(zeta == 0, 0.0, -2j / safe)
    return beurling, cauchy


def _periodic_wirtinger(values, spacing):
    """2nd-order central differences with periodic wrap (for periodic fields)."""
    fx = (np.roll(values, -1, axis=0) - np.roll(values, 1, axis=0)) / (2 * spacing)
    fy = (np.roll(values, -1, axis=1) - np.roll(values, 1, axis=1)) / (2 * spacing)
    return 0.5 * (fx - 1j * fy), 0.5 * (fx + 1j * fy)


def solve_beltrami(mu, *, max_iter=MAX_ITER, iter_tol=ITER_TOL, k_margin=K_MARGIN,
                   det_floor=DET_FLOOR):
    """Solve f_zbar = mu f_z for a compactly supported coefficient.

    Returns a QCMap on the solver box normalized to f(z) ~ z + mean(h) zbar
    far from the support.  The residual certificate ||f_zbar - mu f_z||
    (root mean square over nodes, derivatives by central differences) and
    the dilatation bound are stored on the result; they are meaningful
    whenever mu is resolved by the grid, and they are measured rather than
    trusted either way.
    """
    k = mu.sup_norm()
    if k >= 1.0 - k_margin:
        raise CoefficientTooLarge(f"sup |mu| = {k} >= {1.0 - k_margin}")
    if mu.support_radius() >= 1.0:
        raise SupportTooClose("coefficient must be supported inside the unit disc")

    n, d = mu.n, mu.spacing
    beurling, cauchy = _spectral_multipliers(n, d)
    m = mu.values
    h = np.zeros_like(m)
    inc = 0.0
    rate = math.nan
    prev = None
    it = 0
    for it in range(1, max_iter + 1):
        sh = np.fft.ifft2(beurling * np.fft.fft2(h))
        h_new = m * (1.0 + sh)
        inc = float(np.sqrt(np.mean(np.abs(h_new - h) ** 2)))
        if prev is not None and prev > 0:
            rate = inc / prev
        prev = inc
        h = h_new
        if inc <= iter_tol:
            break
    if inc > iter_tol:
        raise NoConvergence(
            f"iteration increment {inc:.3e} above {iter_tol} after {max_iter} steps")

    a = complex(np.mean(h))
    part = np.fft.ifft2(cauchy * np.fft.fft2(h))
    x, y = mu.meshes()
    z = x + 1j * y
    f = z + a * np.conj(z) + part

    # independent certificate: central differences of the periodic part plus
    # the exact derivatives of the affine part
    px, pzb = _periodic_wirtinger(part, d)
    fz_fd = 1.0 + px
    fzb_fd = a + pzb
    residual = fzb_fd - m * fz_fd
    residual_l2 = float(np.sqrt(np.mean(np.abs(residual) ** 2)))
    det = np.abs(fz_fd) ** 2 - np.abs(fzb_fd) ** 2
    det_min = float(det.min())
    if det_min <= det_floor:
        raise OrientationViolation(f"det Df = {det_min:.3e} at a node")
    dil = (np.abs(fz_fd) + np.abs(fzb_fd)) ** 2 / det
    df = wirtinger_to_mat(fz_fd, fzb_fd)

    return QCMap(
        x0=float(mu.coords[0]), y0=float(mu.coords[0]), spacing=d,
        values=f, df=df,
        K_certified=float(dil.max()), det_min=det_min,
        residual_l2=residual_l2, k_coeff=k, iterations=it,
        contraction_rate=float(rate),
        meta={"mu_f": np.abs(fzb_fd / fz_fd), "dilatation": dil,
              "residual": np.abs(residual), "affine": a},
    )


def invert(rho, region=None, *, n=256, inv_tol=INV_TOL, newton_max=NEWTON_MAX,
           pad=2.0):
    """Newton inversion of rho restricted to the image of the unit disc.

    Returns phi sampled on a cell grid over `region` (default: the padded
    bounding box of rho(unit circle)); cells whose preimage falls outside
    the disc are unmasked.  Per masked node, |rho(phi(w)) - w| <= inv_tol
    and Dphi(w) = Drho(phi(w))^{-1}.
    """
    if region is None:
        img = rho.image_of_circle()
        lo_x, hi_x = img.real.min(), img.real.max()
        lo_y, hi_y = img.imag.min(), img.imag.max()
        lo_x -= pad * rho.spacing
        lo_y -= pad * rho.spacing
        hi_x += pad * rho.spacing
        hi_y += pad * rho.spacing
        spacing = max(hi_x - lo_x, hi_y - lo_y) / n
        shape = (n, n)
        x0, y0 = lo_x + 0.5 * spacing, lo_y + 0.5 * spacing
    else:
        x0, y0, spacing, shape = region

    xs = x0 + np.arange(shape[0]) * spacing
    ys = y0 + np.arange(shape[1]) * spacing
    wx, wy = np.meshgrid(xs, ys, indexing="ij")
    w = (wx + 1j * wy).ravel()

    from scipy.spatial import cKDTree

    gx, gy = rho.node_coords()
    tree = cKDTree(np.column_stack([rho.values.real.ravel(), rho.values.imag.ravel()]))
    _, nearest = tree.query(np.column_stack([w.real, w.imag]), k=1)
    z = (gx.ravel()[nearest] + 1j * gy.ravel()[nearest]).astype(complex)

    resid = np.full(w.shape, np.inf)
    active = np.ones(w.shape, dtype=bool)
    for _ in range(newton_max):
        pts = np.column_stack([z[active].real, z[active].imag])
        fval = rho.value_at(pts)
        r = fval - w[active]
        resid[active] = np.abs(r)
        still = np.abs(r) > inv_tol
        idx = np.nonzero(active)[0]
        active[idx[~still]] = False
        if not np.any(still):
            break
        sub = idx[still]
        d = rho.df_at(np.column_stack([z[sub].real, z[sub].imag]))
        det = d[:, 0, 0] * d[:, 1, 1] - d[:, 0, 1] * d[:, 1, 0]
        rr = r[still]
        dx = (d[:, 1, 1] * rr.real - d[:, 0, 1] * rr.imag) / det
        dy = (-d[:, 1, 0] * rr.real + d[:, 0, 0] * rr.imag) / det
        # step limiter keeps Newton stable across interpolation kinks
        step = dx + 1j * dy
        big = np.abs(step) > 10 * rho.spacing
        step[big] *= (10 * rho.spacing) / np.abs(step[big])
        z[sub] = z[sub] - step

    converged = resid <= inv_tol
    inside = np.abs(z) < 1.0
    failed_interior = ~converged & (np.abs(z) <= 0.95)
    if np.any(failed_interior):
        raise NewtonDiverged(
            f"{int(failed_interior.sum())} interior nodes failed to invert")
    if region is not None:
        # an explicitly requested region must stay within the sampled box
        box_lo_x, box_hi_x = gx[0, 0], gx[-1, 0]
        box_lo_y, box_hi_y = gy[0, 0], gy[0, -1]
        off = ((z.real < box_lo_x) | (z.real > box_hi_x)
               | (z.imag < box_lo_y) | (z.imag > box_hi_y)) & ~converged
        if np.any(off):
            raise PointOutsideImage(
                f"{int(off.sum())} requested nodes fall outside the sampled image")
    mask = (converged & inside).reshape(shape)

    drho = rho.df_at(np.column_stack([z.real, z.imag]))
    det = drho[:, 0, 0] * drho[:, 1, 1] - drho[:, 0, 1] * drho[:, 1, 0]
    det = np.where(det == 0, 1.0, det)
    dphi = np.empty_like(drho)
    dphi[:, 0, 0] = drho[:, 1, 1] / det
    dphi[:, 0, 1] = -drho[:, 0, 1] / det
    dphi[:, 1, 0] = -drho[:, 1, 0] / det
    dphi[:, 1, 1] = drho[:, 0, 0] / det

    values = z.reshape(shape)
    df = dphi.reshape(shape + (2, 2))
    fz, fzb = mat_to_wirtinger(df[mask])
    det_phi = np.abs(fz) ** 2 - np.abs(fzb) ** 2
    if det_phi.size and det_phi.min() <= 0:
        raise OrientationViolation("inverse lost orientation at a node")
    dil = (np.abs(fz) + np.abs(fzb)) ** 2 / det_phi if det_phi.size else np.array([1.0])
    return QCMap(
        x0=x0, y0=y0, spacing=spacing, values=values, df=df, mask=mask,
        K_certified=float(dil.max()), det_min=float(det_phi.min()) if det_phi.size else 1.0,
        residual_l2=rho.residual_l2, k_coeff=rho.k_coeff,
        inv_residual_max=float(resid[mask.ravel()].max()) if mask.any() else 0.0,
        meta={"rho_K_certified": rho.K_certified},
    )
