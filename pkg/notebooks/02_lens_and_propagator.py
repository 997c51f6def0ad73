# The harmonic-oscillator flow and the lens transform.

# %%
import math

import numpy as np

from lenscat.hermite import GridField, analyze, build_basis, SpectralField, synthesize, linear_propagate, mehler_reference
from lenscat.lens import coherent_state, conjugation_check, lens_forward, lens_inverse, grid_l2, t_of_tau

b = build_basis(2, 32)
phi = SpectralField.unit(b)

# %%
# spectral flow against the Mehler kernel at tau = 0.3
spec = synthesize(linear_propagate(phi, 0.3)).values
kern = mehler_reference(synthesize(phi), 0.3).values
print("Mehler gap:", np.max(np.abs(spec - kern)))

# %%
# phases are taken in turns, so a half period is the identity exactly
print("pi-period defect:", np.max(np.abs(linear_propagate(phi, math.pi).coeffs - phi.coeffs)))

# %%
# t = tan(2 tau) / 2 maps [-pi/4, pi/4] onto the whole line
for tau in (0.1, 0.5, 0.7, 0.78):
    print(f"tau={tau:.2f}  t={t_of_tau(tau):9.3f}")

# %%
u = synthesize(phi)
w = lens_forward(u, 0.4)
print("isometry:", grid_l2(w) / grid_l2(u))
print("round trip:", np.max(np.abs(lens_inverse(w, 0.4).values - u.values)))

# %%
# a moving Gaussian: the lensed free flow matches the oscillator flow
b48 = build_basis(2, 48)
initial, free = coherent_state([1.0, -0.5], [0.5, 0.3])
u0 = analyze(GridField(b48, initial(b48.grid_points())))
rep = conjugation_check(u0, [0.0, 0.2, -0.2], free_flow=free)
print("conjugation defect:", rep.oracle_defect)
