"""Random Fourier feature embeddings of Lie algebra coefficients.

The embedding of a coefficient vector alpha under a frequency vector omega is

    gamma_omega(alpha) = sqrt(1/D) * [cos(P (alpha * omega)); sin(P (alpha * omega))]

with a fixed random projection P built from W.  Translation axes use
P = 2*pi*W with Gaussian W, the standard construction whose feature dot
products converge to an RBF kernel.  Rotation axes use P = W with small
nonzero integer W entries so that, together with integer rotation
frequencies, every feature is an exact circular harmonic in the angle:
the embedding is 2*pi-periodic and continuous across the principal-branch
cut.  An axis with omega = 0 contributes nothing to the projection, which
makes the embedding exactly constant along that axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .groups import GroupKind

TWO_PI = 2.0 * math.pi

_INTEGER_W_CHOICES = np.array([-3, -2, -1, 1, 2, 3])


@dataclass(frozen=True, eq=False)
class RffBasis:
    """Fixed random projection for one embedding; never trained."""

    kind: GroupKind
    W: np.ndarray  # (D, dim)
    integer_axes: tuple[int, ...]

    @property
    def n_features(self) -> int:
        return self.W.shape[0]

    def axis_scale(self) -> np.ndarray:
        """Per-axis projection prefactor: 2*pi on Gaussian axes, 1 on integer axes."""
        scale = np.full(self.W.shape[1], TWO_PI)
        for ax in self.integer_axes:
            scale[ax] = 1.0
        return scale


def init_basis(kind: GroupKind, D: int, seed: int) -> RffBasis:
    """Draw the projection matrix: N(0,1) translation columns, integer rotation column."""
    if D < 1:
        raise ValueError("need at least one feature pair")
    rng = np.random.default_rng(seed)
    W = np.zeros((D, kind.dim))
    integer_axes = []
    for ax in range(kind.dim):
        if ax == kind.rotation_axis:
            W[:, ax] = rng.choice(_INTEGER_W_CHOICES, size=D)
            integer_axes.append(ax)
        else:
            W[:, ax] = rng.standard_normal(D)
    return RffBasis(kind=kind, W=W, integer_axes=tuple(integer_axes))


def validate_frequencies(omega: np.ndarray, basis: RffBasis) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (basis.kind.dim,):
        raise ValueError(f"expected {basis.kind.dim} frequencies, got shape {omega.shape}")
    if np.any(omega < 0):
        raise ValueError("frequencies must be non-negative")
    for ax in basis.integer_axes:
        if omega[ax] != round(omega[ax]):
            raise ValueError(f"rotation-axis frequency must be an integer, got {omega[ax]}")
    return omega


def embed(alpha: np.ndarray, omega: np.ndarray, basis: RffBasis) -> np.ndarray:
    """Embed algebra coefficients; accepts (..., dim) batches, returns (..., 2D)."""
    omega = validate_frequencies(omega, basis)
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape[-1] != basis.kind.dim:
        raise ValueError(f"expected {basis.kind.dim} coefficients, got shape {alpha.shape}")
    arg = (alpha * omega * basis.axis_scale()) @ basis.W.T
    scale = math.sqrt(1.0 / basis.n_features)
    return scale * np.concatenate([np.cos(arg), np.sin(arg)], axis=-1)


def rbf_kernel(delta: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Infinite-width limit of embedding dot products on Gaussian axes.

    dot(gamma(a1), gamma(a2)) -> exp(-2 pi^2 ||omega * (a1 - a2)||^2)
    """
    delta = np.asarray(delta, dtype=float)
    z = delta * np.asarray(omega, dtype=float)
    return np.exp(-2.0 * math.pi**2 * np.sum(z * z, axis=-1))


@dataclass(frozen=True, eq=False)
class FrequencySpec:
    """Filter-space and domain-space frequency vectors for one group kind.

    omega controls the spectrum of the stationary (filter-space) kernel
    argument, omega_prime the non-stationary (domain-space) argument.
    Rotation-axis entries must be non-negative integers.
    """

    kind: GroupKind
    omega: np.ndarray
    omega_prime: np.ndarray

    def __post_init__(self):
        for name in ("omega", "omega_prime"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (self.kind.dim,):
                raise ValueError(f"{name} must have {self.kind.dim} entries for {self.kind.value}")
            if np.any(v < 0):
                raise ValueError(f"{name} entries must be non-negative")
            ax = self.kind.rotation_axis
            if ax is not None and v[ax] != round(v[ax]):
                raise ValueError(f"{name} rotation entry must be an integer, got {v[ax]}")
            object.__setattr__(self, name, v)

    @classmethod
    def for_kind(
        cls,
        kind: GroupKind,
        omega_translation: float = 0.0,
        omega_rotation: float = 0.0,
        omega_prime_translation: float = 0.0,
        omega_prime_rotation: float = 0.0,
    ) -> "FrequencySpec":
        """Build per-kind vectors from per-subgroup scalars (x and y tied)."""

        def vec(t: float, r: float) -> np.ndarray:
            if kind is GroupKind.T2:
                return np.array([t, t])
            if kind is GroupKind.SO2:
                return np.array([float(r)])
            return np.array([t, t, float(r)])

        return cls(kind, vec(omega_translation, omega_rotation), vec(omega_prime_translation, omega_prime_rotation))

    @property
    def is_stationary(self) -> bool:
        return bool(np.all(self.omega_prime == 0))

    @property
    def nonstationary_translation(self) -> bool:
        """True when the domain-space embedding can vary with absolute position."""
        if self.kind is GroupKind.SO2:
            return False
        return bool(np.any(self.omega_prime[:2] != 0))
