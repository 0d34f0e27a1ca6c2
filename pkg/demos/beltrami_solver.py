"""Solving the Beltrami equation f_zbar = mu f_z spectrally.

The coefficient mu (|mu| <= k < 1, compactly supported in the disc) is fed
to a Neumann iteration whose fixed point solves the equation exactly in the
discrete Fourier sense; independent finite differences then certify the
residual, orientation, and dilatation of the returned map.
"""

import numpy as np

import qcreparam as qc

# A smooth radial bump coefficient with sup |mu| = 0.3.
n = 512
field = qc.ComplexField(S=2.0, values=np.zeros((n, n), dtype=complex))
x, y = field.meshes()
r = np.hypot(x, y)
with np.errstate(over="ignore"):
    bump = np.where(r < 0.7, np.exp(1 - 1 / np.maximum(1 - (r / 0.7) ** 2, 1e-300)), 0.0)
mu = qc.ComplexField(S=2.0, values=(0.3 * bump).astype(complex))

rho = qc.solve_beltrami(mu)
print("solve at %dx%d, sup|mu| = %.2f" % (n, n, mu.sup_norm()))
print("  iterations        :", rho.iterations)
print("  contraction rate  : %.3f (theory: <= sup|mu|)" % rho.contraction_rate)
print("  residual (RMS)    : %.2e" % rho.residual_l2)
print("  det Df min        : %.4f  (orientation preserved everywhere)" % rho.det_min)
print("  dilatation max    : %.4f  (theory: (1+k)/(1-k) = %.4f)"
      % (rho.K_certified, 1.3 / 0.7))

# Outside the coefficient's support the map is conformal: the measured
# coefficient of rho collapses to the noise floor.
far = r > 0.85
print("  |mu_f| beyond r=0.85: %.1e" % rho.meta["mu_f"][far].max())

# Newton inversion of the image of the disc, with its own certificates.
phi = qc.invert(rho, n=256)
print("inverse on Omega = rho(disc):")
print("  round-trip error  : %.1e" % phi.inv_residual_max)
print("  dilatation max    : %.4f (matches rho)" % phi.K_certified)

# The image region is a genuinely warped disc; its area is close to pi
# because this mu has small mean distortion.
boundary = rho.image_of_circle(1.0, 1024)
area = 0.5 * abs(np.dot(boundary.real, np.roll(boundary.imag, -1))
                 - np.dot(boundary.imag, np.roll(boundary.real, -1)))
print("  Omega area        : %.4f (pi = %.4f)" % (area, np.pi))
