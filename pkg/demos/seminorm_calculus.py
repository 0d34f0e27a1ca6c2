"""Tour of the planar semi-norm calculus.

A semi-norm s measures infinitesimal stretch.  Two numbers summarize it:
the energy I2(s) = max |stretch|^2 over unit directions, and the jacobian
J(s) = pi / area(inscribed ellipse of the unit ball).  J never exceeds I2,
with equality exactly when the inscribed ellipse is round ("isotropic").
"""

import numpy as np

import qcreparam as qc
from qcreparam.seminorm import half_circle_directions

# A diagonal quadratic norm: s(v)^2 = 4 vx^2 + vy^2.
s = qc.SemiNorm2.quadratic(np.diag([4.0, 1.0]))
print("quadratic diag(4,1)")
print("  energy I2      :", qc.energy_plus(s))
print("  jacobian J     :", qc.jacobian_intrinsic(s))
print("  isotropy defect:", qc.isotropy_defect(s))

e = qc.john_ellipse(s)
print("  inscribed ellipse: a=%.3f b=%.3f theta=%.3f (the unit ball itself)"
      % (e.a, e.b, e.theta))

# The Beltrami coefficient of the linear map that rounds the inscribed
# ellipse.  Its modulus (a-b)/(a+b) measures how far s is from isotropic.
mu = qc.beltrami_of(s)
print("  rounding coefficient mu = %.4f%+.4fj, |mu| = %.4f"
      % (mu.real, mu.imag, abs(mu)))

# Sampled representation: the sup norm.  Its unit ball is the square, whose
# largest inscribed ellipse is the unit disc, so the norm is isotropic even
# though it comes from no inner product.
dirs = half_circle_directions(64)
linf = qc.SemiNorm2.sampled(np.abs(dirs).max(axis=1))
print("\nsampled sup norm (unit ball = square)")
print("  energy I2      :", qc.energy_plus(linf))
print("  jacobian J     :", qc.jacobian_intrinsic(linf))
print("  isotropy defect:", qc.isotropy_defect(linf))

# The second jacobian normalizes by the unit ball area instead; the two
# jacobians frame each other within a factor 4/pi, with the square extremal.
jh = qc.jacobian_hausdorff(linf)
print("  ball-area jacobian:", jh, " ratio to J:", jh / qc.jacobian_intrinsic(linf),
      " (pi/4 =", np.pi / 4, ")")

# Regularization rounds every semi-norm: s_delta = sqrt(s^2 + delta^2 |.|^2).
# Energy shifts by exactly delta^2; the coefficient shrinks.
for delta in (0.125, 0.5, 2.0):
    sd = qc.regularize(s, delta)
    print("delta=%5.3f: energy %.4f (shift %.4f), |mu| %.4f"
          % (delta, qc.energy_plus(sd),
             qc.energy_plus(sd) - qc.energy_plus(s), abs(qc.beltrami_of(sd))))
