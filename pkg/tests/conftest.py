import numpy as np
import pytest

import qcreparam as qc
from qcreparam.seminorm import half_circle_directions


def rand_spd(rng, lam_lo=0.3, lam_hi=4.0):
    """Random symmetric positive definite 2x2 with eigenvalues in range."""
    th = rng.uniform(0, np.pi)
    lams = rng.uniform(lam_lo, lam_hi, size=2)
    c, s = np.cos(th), np.sin(th)
    r = np.array([[c, -s], [s, c]])
    return r @ np.diag(lams) @ r.T


def rand_orientation_matrix(rng, scale=1.0):
    """Random 2x2 with positive determinant bounded away from zero."""
    while True:
        m = rng.normal(scale=scale, size=(2, 2))
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if det > 0.05:
            return m


def linear_wirtinger_oracle(m):
    """(t_z, t_zbar) of a linear map via its action on 1 and i.

    T(h) = t_z h + t_zbar conj(h) gives T(1) = t_z + t_zbar and
    T(i) = i (t_z - t_zbar), so t_z = (T(1) - i T(i)) / 2.
    """
    t1 = complex(m[0, 0], m[1, 0])
    ti = complex(m[0, 1], m[1, 1])
    return 0.5 * (t1 - 1j * ti), 0.5 * (t1 + 1j * ti)


def sweep_energy_oracle(s, num=20001):
    """Dense direction sweep of s(v)^2 over the half circle."""
    ang = np.linspace(0.0, np.pi, num)
    vals = s(np.column_stack([np.cos(ang), np.sin(ang)]))
    return float(np.max(vals) ** 2)


def rand_sampled_norm(rng, m=64, bump=0.3):
    """Random convex sampled norm: perturbed gauge of a random ellipse."""
    from qcreparam.field import _convexify_gauge

    base = qc.SemiNorm2.quadratic(rand_spd(rng, 0.5, 3.0))(half_circle_directions(m))
    return qc.SemiNorm2.sampled(_convexify_gauge(base * (1.0 + rng.uniform(0, bump, m))))


def linear_qcmap(m, box=2.0, n=192):
    """Synthetic QCMap sampling the linear map with matrix m on a box grid."""
    d = 2.0 * box / n
    coords = -box + (np.arange(n) + 0.5) * d
    x, y = np.meshgrid(coords, coords, indexing="ij")
    values = (m[0, 0] * x + m[0, 1] * y) + 1j * (m[1, 0] * x + m[1, 1] * y)
    df = np.broadcast_to(m, (n, n, 2, 2)).copy()
    fz, fzb = qc.mat_to_wirtinger(m)
    dil = (abs(fz) + abs(fzb)) ** 2 / (abs(fz) ** 2 - abs(fzb) ** 2)
    return qc.QCMap(x0=float(coords[0]), y0=float(coords[0]), spacing=d,
                    values=values, df=df, K_certified=float(dil),
                    det_min=float(np.linalg.det(m)), residual_l2=0.0,
                    k_coeff=float(abs(fzb / fz)))


def bump_coefficient(n=256, k=0.2, radius=0.7, box=2.0):
    """Smooth compactly supported coefficient with sup exactly k."""
    f = qc.ComplexField(S=box, values=np.zeros((n, n), dtype=complex))
    x, y = f.meshes()
    r = np.hypot(x, y)
    with np.errstate(over="ignore"):
        vals = k * np.where(r < radius,
                            np.exp(1.0 - 1.0 / np.maximum(1.0 - (r / radius) ** 2, 1e-300)),
                            0.0)
    return qc.ComplexField(S=box, values=vals.astype(complex))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
