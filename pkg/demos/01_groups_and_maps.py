"""Tour of the group layer: composition, exp/log, actions, rotation sampling.

Everything downstream is built on three planar groups: translations T(2),
rotations SO(2), and roto-translations SE(2).  This script walks through
their arithmetic and the round-trip guarantees the rest of the library
leans on.
"""

import math

import numpy as np

from softequiv import (
    GroupKind,
    act_on_point,
    compose,
    exp_map,
    inverse,
    log_map,
    relative,
    rotation2,
    sample_rotations,
    se2_element,
)
from softequiv.groups import random_element

print("== composition and inverses ==")
g = se2_element(1.0, 0.0, math.pi / 2)
h = se2_element(1.0, 0.0, 0.0)
print(f"g = {g}")
print(f"g * h = {compose(g, h)}  (h's x-step is rotated into y)")
print(f"g * g^-1 = {compose(g, inverse(g))}")

print("\n== the stationary component v^-1 u ==")
u = se2_element(3.0, 2.0, 0.8)
v = se2_element(1.0, -1.0, 0.3)
print(f"relative(u, v) = {relative(u, v)}")

print("\n== exp/log round trips on the principal branch ==")
rng = np.random.default_rng(0)
worst = 0.0
for _ in range(2000):
    x = random_element(GroupKind.SE2, rng)
    back = exp_map(log_map(x), GroupKind.SE2)
    worst = max(worst, abs(back.tx - x.tx), abs(back.ty - x.ty), abs(back.theta - x.theta))
print(f"worst deviation over 2000 elements: {worst:.2e}")

print("\n== group actions on the plane ==")
p = (1.0, 0.0)
for theta in (0, math.pi / 2, math.pi):
    q = act_on_point(rotation2(theta), p)
    print(f"rotate {p} by {theta:+.2f} -> ({q[0]:+.2f}, {q[1]:+.2f})")

print("\n== rotation sampling ==")
cyc = sample_rotations(4, "cyclic-deterministic")
print("cyclic C4 angles:", [round(r.theta, 4) for r in cyc])
uni = sample_rotations(8, "uniform-random", seed=42)
print("uniform seed=42: ", [round(r.theta, 3) for r in uni])
print("same seed again: ", [round(r.theta, 3) for r in sample_rotations(8, 'uniform-random', seed=42)])
