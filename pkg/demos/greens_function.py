"""Evaluate the quasi-periodic Green's function and watch its symmetries.

Run with ``python3 demos/greens_function.py``.  The script evaluates the Ewald
representation at a Dirac point and checks that the value does not depend on
the Ewald splitting parameter.  The lattice symmetries of the function then
hold to machine precision.
"""

import numpy as np

from diracbands import qpgreens
from diracbands.lattice import build_lattice, rotate

spec = build_lattice(a=1.0, epsilon=0.05)
K = spec.points.K
omega = 0.55 * spec.unit
x = np.array([0.21, -0.08])

g = qpgreens.ewald_green(spec, K, omega, x)
print(f"G(K, omega; x)       = {g.value:.12f}")
print(f"grad G               = {g.grad_x[0]:.6f}, {g.grad_x[1]:.6f}")
print(f"estimated error      = {g.est_error:.1e}")

eta0 = qpgreens.EwaldParams().resolve_eta(spec, omega)
for factor in (1.0, 1.5, 2.0):
    v = qpgreens.ewald_green(spec, K, omega, x, qpgreens.EwaldParams(eta=factor * eta0)).value
    print(f"eta = {factor * eta0:7.4f}  ->  |difference| = {abs(v - g.value):.1e}")

shifted = qpgreens.ewald_green(spec, K, omega, x + spec.e1).value
print(f"Bloch phase residual = {abs(shifted - np.exp(1j * K @ spec.e1) * g.value):.1e}")
print(f"conjugate residual   = {abs(g.value - np.conj(qpgreens.ewald_green(spec, K, omega, -x).value)):.1e}")
print(f"rotation residual    = {abs(g.value - qpgreens.ewald_green(spec, K, omega, rotate(x)).value):.1e}")

# Near the vertex frequency |K| a single resonant shell of three plane waves dominates.
wbar = np.linalg.norm(K)
for d in (1e-2, 1e-3, 1e-4):
    v = qpgreens.ewald_green(spec, K, wbar + d * spec.unit, x).value
    print(f"omega - |K| = {d:.0e} (normalized): |G| = {abs(v):10.3f}")
