"""Fourier features of algebra coefficients and their Gaussian-kernel limit.

The embedding's dot products approximate exp(-2 pi^2 ||omega * delta||^2),
with error shrinking like 1/sqrt(D).  A zero frequency on an axis makes the
features exactly constant along it; integer frequencies on the rotation
axis make them exactly periodic.  Those two facts are what let frequency
vectors switch symmetry constraints on and off.
"""

import math

import numpy as np

from softequiv import GroupKind, embed, init_basis, rbf_kernel

rng = np.random.default_rng(0)
omega = np.array([0.4, 0.9])
a1 = rng.normal(size=(200, 2))
a2 = rng.normal(size=(200, 2))
target = rbf_kernel(a1 - a2, omega)

print("width D | mean abs error | max abs error")
for D in (64, 256, 1024, 4096, 16384):
    basis = init_basis(GroupKind.T2, D, seed=1)
    dots = np.sum(embed(a1, omega, basis) * embed(a2, omega, basis), axis=-1)
    err = np.abs(dots - target)
    print(f"{D:7d} | {err.mean():14.5f} | {err.max():13.5f}")

print("\nzero frequency = exact constancy along that axis:")
basis = init_basis(GroupKind.T2, 64, seed=2)
omega_x_off = np.array([0.0, 0.9])
z1 = embed(np.array([5.0, 0.3]), omega_x_off, basis)
z2 = embed(np.array([-99.0, 0.3]), omega_x_off, basis)
print(f"  features differ by {np.max(np.abs(z1 - z2)):.1e} despite wildly different x")

print("\ninteger rotation frequencies = exact 2 pi periodicity:")
so2 = init_basis(GroupKind.SO2, 64, seed=3)
for w in (1, 2, 3):
    a = embed(np.array([0.4]), np.array([float(w)]), so2)
    b = embed(np.array([0.4 + 2 * math.pi]), np.array([float(w)]), so2)
    print(f"  omega_r={w}: |gamma(a) - gamma(a + 2pi)| = {np.max(np.abs(a - b)):.1e}")
