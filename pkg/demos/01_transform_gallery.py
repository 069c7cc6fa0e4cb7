"""Tour of the coupling transforms behind the torus discretization.

Samples of a function on the uniform angle grid phi_j = 2(j-1)pi/(2N+1)
map to real Fourier coefficients through F; shifting the angle by
2*pi*varrho acts on coefficients through the block rotation R(varrho).
Together they express the all-to-all boundary condition that ties the
segment endpoints of the torus problem to a rotated combination of all
segment start points.
"""

import numpy as np

from torcont import fourier

N = 4
cm = fourier.dft_matrix(N)
print(f"N = {N}: {cm.n_seg} segments at angles phi_j = 2(j-1)pi/{cm.n_seg}")
print(f"round trip |F Finv - I|_max = {np.abs(cm.F @ cm.Finv - np.eye(cm.n_seg)).max():.2e}")

# coefficients of a test signal: 0.5 + cos(phi) - 2 sin(3 phi)
signal = 0.5 + np.cos(cm.angles) - 2.0 * np.sin(3 * cm.angles)
coef = cm.F @ signal
print("\ncoefficients (a0, a1, b1, a2, b2, ...):")
print(np.round(coef, 12))

# the rotation matrix realizes the shift phi -> phi + 2 pi varrho
varrho = 0.1237
R = fourier.rotation_matrix(N, varrho)
shifted = cm.Finv @ R @ cm.F @ signal
direct = 0.5 + np.cos(cm.angles + 2 * np.pi * varrho) - 2.0 * np.sin(
    3 * (cm.angles + 2 * np.pi * varrho))
print(f"\nshift conjugation error: {np.abs(shifted - direct).max():.2e}")
print(f"R orthogonality:         {np.abs(R.T @ R - np.eye(cm.n_seg)).max():.2e}")
R2 = fourier.rotation_matrix(N, 0.4 - varrho)
print(f"group law R(a)R(b)=R(a+b): "
      f"{np.abs(R @ R2 - fourier.rotation_matrix(N, 0.4)).max():.2e}")

# phase weights: w @ samples = d/dphi at 0, the ingredient of the
# phi-direction Poincare phase condition
print(f"\nphase weights on sin(phi):          {cm.phase_weights @ np.sin(cm.angles):+.12f}")
print(f"phase weights on cos(2 phi):        {cm.phase_weights @ np.cos(2 * cm.angles):+.2e}")
print(f"phase weights on sin(phi)+3sin(2p): "
      f"{cm.phase_weights @ (np.sin(cm.angles) + 3 * np.sin(2 * cm.angles)):+.12f}")

# all-to-all residual on an exactly rotated circle
v0 = np.column_stack([np.cos(cm.angles), np.sin(cm.angles)]).ravel()
rot = cm.angles + 2 * np.pi * varrho
vT = np.column_stack([np.cos(rot), np.sin(rot)]).ravel()
res = fourier.coupling_residual(v0, vT, R, cm.F, 2)
print(f"\nall-to-all residual of a rotated circle: {np.abs(res).max():.2e}")
