"""Lie group primitives for the planar translation, rotation and roto-translation groups.

Elements of T(2), SO(2) and SE(2) are stored in product coordinates
(tx, ty, theta) with angles normalized to the principal branch (-pi, pi].
The algebra coordinates used by ``log_map``/``exp_map`` are the plain
product coordinates: the rotation coefficient is the angle in radians,
translation coefficients are pixels.  This keeps the per-axis frequency
semantics of the Fourier embedding independent across subgroups.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

_UNIFORM = "uniform-random"
_CYCLIC = "cyclic-deterministic"


class GroupKind(Enum):
    T2 = "T2"
    SO2 = "SO2"
    SE2 = "SE2"

    @property
    def dim(self) -> int:
        return {GroupKind.T2: 2, GroupKind.SO2: 1, GroupKind.SE2: 3}[self]

    @property
    def has_translation(self) -> bool:
        return self is not GroupKind.SO2

    @property
    def has_rotation(self) -> bool:
        return self is not GroupKind.T2

    @property
    def rotation_axis(self) -> int | None:
        """Index of the rotation coefficient in the algebra basis, if any."""
        return {GroupKind.T2: None, GroupKind.SO2: 0, GroupKind.SE2: 2}[self]


def wrap_angle(theta: float) -> float:
    """Normalize an angle to (-pi, pi]; the branch boundary maps to +pi."""
    r = theta % TWO_PI
    if r > math.pi:
        r -= TWO_PI
    return r


def wrap_angles(theta: np.ndarray) -> np.ndarray:
    """Vectorized :func:`wrap_angle`."""
    r = np.mod(np.asarray(theta, dtype=float), TWO_PI)
    return np.where(r > math.pi, r - TWO_PI, r)


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class GroupElement:
    """One element of T(2), SO(2) or SE(2).

    Unused coordinates are pinned to zero (SO(2) carries no translation,
    T(2) no angle), so a single storage layout covers all three kinds.
    """

    kind: GroupKind
    tx: float = 0.0
    ty: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if self.kind is GroupKind.T2 and self.theta != 0.0:
            raise ValueError("T(2) elements carry no angle")
        if self.kind is GroupKind.SO2 and (self.tx != 0.0 or self.ty != 0.0):
            raise ValueError("SO(2) elements carry no translation")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def translation(self) -> tuple[float, float]:
        return (self.tx, self.ty)


def translation2(tx: float, ty: float) -> GroupElement:
    return GroupElement(GroupKind.T2, tx, ty)


def rotation2(theta: float) -> GroupElement:
    return GroupElement(GroupKind.SO2, theta=theta)


def se2_element(tx: float, ty: float, theta: float) -> GroupElement:
    return GroupElement(GroupKind.SE2, tx, ty, theta)


def identity(kind: GroupKind) -> GroupElement:
    return GroupElement(kind)


def _check_same_kind(a: GroupElement, b: GroupElement) -> None:
    if a.kind is not b.kind:
        raise ValueError(f"group kind mismatch: {a.kind.value} vs {b.kind.value}")


def compose(a: GroupElement, b: GroupElement) -> GroupElement:
    """Group product a*b."""
    _check_same_kind(a, b)
    kind = a.kind
    if kind is GroupKind.T2:
        return GroupElement(kind, a.tx + b.tx, a.ty + b.ty)
    if kind is GroupKind.SO2:
        return GroupElement(kind, theta=a.theta + b.theta)
    c, s = math.cos(a.theta), math.sin(a.theta)
    return GroupElement(
        kind,
        a.tx + c * b.tx - s * b.ty,
        a.ty + s * b.tx + c * b.ty,
        a.theta + b.theta,
    )


def inverse(g: GroupElement) -> GroupElement:
    if g.kind is GroupKind.T2:
        return GroupElement(g.kind, -g.tx, -g.ty)
    if g.kind is GroupKind.SO2:
        return GroupElement(g.kind, theta=-g.theta)
    c, s = math.cos(g.theta), math.sin(g.theta)
    # inverse translation is -R(-theta) t
    return GroupElement(g.kind, -(c * g.tx + s * g.ty), -(-s * g.tx + c * g.ty), -g.theta)


def relative(u: GroupElement, v: GroupElement) -> GroupElement:
    """The stationary component v^-1 u of a pair of group elements."""
    _check_same_kind(u, v)
    return compose(inverse(v), u)


def log_map(g: GroupElement) -> np.ndarray:
    """Principal-branch algebra coefficients of ``g`` (product coordinates)."""
    if g.kind is GroupKind.T2:
        return np.array([g.tx, g.ty])
    if g.kind is GroupKind.SO2:
        return np.array([g.theta])
    return np.array([g.tx, g.ty, g.theta])


def exp_map(alpha: Sequence[float] | np.ndarray, kind: GroupKind) -> GroupElement:
    """Right inverse of :func:`log_map`; angles outside the branch wrap."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (kind.dim,):
        raise ValueError(f"expected {kind.dim} coefficients for {kind.value}, got shape {alpha.shape}")
    if kind is GroupKind.T2:
        return GroupElement(kind, alpha[0], alpha[1])
    if kind is GroupKind.SO2:
        return GroupElement(kind, theta=alpha[0])
    return GroupElement(kind, alpha[0], alpha[1], alpha[2])


def act_on_point(g: GroupElement, p: Sequence[float] | np.ndarray) -> np.ndarray:
    """Apply g to plane points: rotate then translate.

    ``p`` may be a single (x, y) pair or an array of shape (..., 2).
    """
    p = np.asarray(p, dtype=float)
    if g.kind is GroupKind.T2:
        return p + np.array([g.tx, g.ty])
    c, s = math.cos(g.theta), math.sin(g.theta)
    x, y = p[..., 0], p[..., 1]
    out = np.stack([c * x - s * y, s * x + c * y], axis=-1)
    if g.kind is GroupKind.SE2:
        out = out + np.array([g.tx, g.ty])
    return out


def sample_rotations(
    n: int,
    mode: str = _UNIFORM,
    seed: int = 0,
    kind: GroupKind = GroupKind.SO2,
) -> list[GroupElement]:
    """Sample n rotations, either uniformly at random or on the cyclic grid.

    Cyclic mode returns exactly {2*pi*k/n}; uniform mode draws from the
    seeded generator, so the same seed always yields the same sample.
    """
    if n < 1:
        raise ValueError("need at least one rotation sample")
    if not kind.has_rotation:
        raise ValueError(f"{kind.value} has no rotation axis")
    if mode == _CYCLIC:
        angles = [TWO_PI * k / n for k in range(n)]
    elif mode == _UNIFORM:
        rng = np.random.default_rng(seed)
        angles = rng.uniform(0.0, TWO_PI, size=n).tolist()
    else:
        raise ValueError(f"unknown rotation sampling mode {mode!r}")
    return [GroupElement(kind, theta=a) for a in angles]


def random_element(kind: GroupKind, rng: np.random.Generator, t_scale: float = 5.0) -> GroupElement:
    """Random element with N(0, t_scale^2) translations and uniform angle."""
    theta = float(rng.uniform(-math.pi, math.pi))
    tx, ty = (float(v) for v in rng.normal(0.0, t_scale, size=2))
    if kind is GroupKind.T2:
        return GroupElement(kind, tx, ty)
    if kind is GroupKind.SO2:
        return GroupElement(kind, theta=theta)
    return GroupElement(kind, tx, ty, theta)


Pair = tuple[GroupElement, GroupElement]

_PHI_NAMES = ("phi1", "phi2", "phi3")


def phi(which: str, pair: Pair) -> Pair:
    """Change of variables between the (u, v), (v^-1 u, v) and (v^-1 u, u) charts.

    phi1(u, v) = (v^-1 u, v)
    phi2(u, v) = (v^-1 u, u)
    phi3(a, b) = (a, b a), carrying (v^-1 u, v) to (v^-1 u, u)
    """
    u, v = pair
    _check_same_kind(u, v)
    if which == "phi1":
        return (relative(u, v), v)
    if which == "phi2":
        return (relative(u, v), u)
    if which == "phi3":
        return (u, compose(v, u))
    raise ValueError(f"unknown map {which!r}, expected one of {_PHI_NAMES}")


def phi_inverse(which: str, pair: Pair) -> Pair:
    a, b = pair
    _check_same_kind(a, b)
    if which == "phi1":
        return (compose(b, a), b)
    if which == "phi2":
        return (b, compose(b, inverse(a)))
    if which == "phi3":
        return (a, compose(b, inverse(a)))
    raise ValueError(f"unknown map {which!r}, expected one of {_PHI_NAMES}")


def element_distance(a: GroupElement, b: GroupElement) -> float:
    """Max-norm distance in product coordinates, angles compared on the circle."""
    _check_same_kind(a, b)
    dt = abs(wrap_angle(a.theta - b.theta))
    return max(abs(a.tx - b.tx), abs(a.ty - b.ty), dt)
