"""Continuous non-stationary kernels over group pairs.

A kernel value k(v^-1 u, v) is produced by a small tanh network applied to
the concatenated Fourier embeddings of the stationary argument (filter
space, frequencies omega) and the non-stationary argument (domain space,
frequencies omega_prime).  The network outputs c_out * c_in values that are
reshaped to a channel-mixing matrix; a spatial support mask multiplies the
result based on the translation part of the stationary argument only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import Tensor, matmul, parameter, tanh
from .fourier import FrequencySpec, RffBasis, embed, init_basis
from .groups import GroupElement, GroupKind, log_map

HARD_DISK = "hard-disk"
SOFT_GAUSSIAN = "soft-gaussian"
NO_MASK = "none"

# soft masks are sampled out to this many standard deviations
SOFT_MASK_CUTOFF_SIGMAS = 3.0


@dataclass(frozen=True)
class SupportMask:
    """Spatial support in filter space: a hard disk, a Gaussian bump, or nothing."""

    kind: str = NO_MASK
    radius: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        if self.kind not in (HARD_DISK, SOFT_GAUSSIAN, NO_MASK):
            raise ValueError(f"unknown mask kind {self.kind!r}")
        if self.kind == HARD_DISK and (self.radius is None or self.radius < 0):
            raise ValueError("hard-disk mask needs a non-negative radius")
        if self.kind == SOFT_GAUSSIAN and (self.sigma is None or self.sigma <= 0):
            raise ValueError("soft-gaussian mask needs a positive sigma")

    def weights(self, offsets) -> np.ndarray:
        """Mask weight for translation offsets of shape (..., 2)."""
        offsets = np.asarray(offsets, dtype=float)
        d2 = np.sum(offsets * offsets, axis=-1)
        if self.kind == HARD_DISK:
            return (d2 <= self.radius * self.radius).astype(float)
        if self.kind == SOFT_GAUSSIAN:
            return np.exp(-d2 / (2.0 * self.sigma * self.sigma))
        return np.ones_like(d2)

    def sampling_radius(self) -> float | None:
        """Largest offset worth sampling; None means unbounded."""
        if self.kind == HARD_DISK:
            return float(self.radius)
        if self.kind == SOFT_GAUSSIAN:
            return float(SOFT_MASK_CUTOFF_SIGMAS * self.sigma)
        return None


def hard_disk(radius: float) -> SupportMask:
    return SupportMask(HARD_DISK, radius=radius)


def soft_gaussian(sigma: float) -> SupportMask:
    return SupportMask(SOFT_GAUSSIAN, sigma=sigma)


def no_mask() -> SupportMask:
    return SupportMask(NO_MASK)


class KernelNet:
    """Fully-connected tanh network mapping 4D Fourier features to kernel entries."""

    def __init__(self, widths: Sequence[int], weights, biases):
        self.widths = tuple(widths)
        self.weights = list(weights)
        self.biases = list(biases)

    def apply(self, z: Tensor) -> Tensor:
        h = z
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = matmul(h, w) + b
            if i < last:
                h = tanh(h)
        return h

    def eval_numpy(self, z: np.ndarray) -> np.ndarray:
        h = np.asarray(z)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.data + b.data
            if i < last:
                h = np.tanh(h)
        return h

    def named_parameters(self, prefix: str = "net") -> dict[str, Tensor]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}.w{i}"] = w
            out[f"{prefix}.b{i}"] = b
        return out

    def astype(self, dtype) -> "KernelNet":
        return KernelNet(
            self.widths,
            [parameter(w.data.astype(dtype)) for w in self.weights],
            [parameter(b.data.astype(dtype)) for b in self.biases],
        )


def init_kernel_net(widths: Sequence[int], seed: int, scale: float = 1.0, dtype=np.float64) -> KernelNet:
    """Fan-in-scaled uniform init, gained so unit-norm feature pairs give O(1) outputs.

    The input layer sees two concatenated unit-norm embeddings (squared norm
    exactly 2), so its weights use a fixed variance of 1/2 instead of 1/fan_in.
    Hidden layers use the tanh gain 5/3; ``scale`` multiplies the output layer.
    """
    if len(widths) < 2:
        raise ValueError("need at least an input and an output width")
    if any(w < 1 for w in widths):
        raise ValueError(f"invalid layer widths {widths}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    last = len(widths) - 2
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        if i == 0:
            a = math.sqrt(3.0 / 2.0)
        elif i == last:
            a = scale * math.sqrt(3.0 / fan_in)
        else:
            a = (5.0 / 3.0) * math.sqrt(3.0 / fan_in)
        weights.append(parameter(rng.uniform(-a, a, size=(fan_in, fan_out)).astype(dtype)))
        biases.append(parameter(np.zeros(fan_out, dtype=dtype)))
    return KernelNet(widths, weights, biases)


@dataclass
class KernelField:
    """Everything needed to evaluate one kernel: frequencies, bases, net, mask."""

    kind: GroupKind
    c_in: int
    c_out: int
    freq: FrequencySpec
    basis_stationary: RffBasis
    basis_nonstationary: RffBasis
    net: KernelNet
    mask: SupportMask

    def __post_init__(self):
        if self.freq.kind is not self.kind:
            raise ValueError("frequency spec kind does not match kernel kind")
        four_d = 2 * self.basis_stationary.n_features + 2 * self.basis_nonstationary.n_features
        if self.net.widths[0] != four_d:
            raise ValueError(f"net input width {self.net.widths[0]} != concatenated feature width {four_d}")
        if self.net.widths[-1] != self.c_out * self.c_in:
            raise ValueError("net output width must be c_out * c_in")

    @property
    def n_feature_pairs(self) -> int:
        return self.basis_stationary.n_features


def make_kernel_field(
    kind: GroupKind,
    c_in: int,
    c_out: int,
    freq: FrequencySpec,
    mask: SupportMask,
    n_feature_pairs: int = 64,
    hidden: Sequence[int] = (32, 32),
    seed: int = 0,
    scale: float = 1.0,
    dtype=np.float64,
) -> KernelField:
    basis_s = init_basis(kind, n_feature_pairs, seed=seed)
    basis_n = init_basis(kind, n_feature_pairs, seed=seed + 1)
    widths = [4 * n_feature_pairs, *hidden, c_out * c_in]
    net = init_kernel_net(widths, seed=seed + 2, scale=scale, dtype=dtype)
    return KernelField(kind, c_in, c_out, freq, basis_s, basis_n, net, mask)


def embed_pair(field: KernelField, stat_alphas: np.ndarray, nonstat_alphas: np.ndarray) -> np.ndarray:
    """Row-aligned concatenated embeddings, the network's input features."""
    zs = embed(stat_alphas, field.freq.omega, field.basis_stationary)
    zn = embed(nonstat_alphas, field.freq.omega_prime, field.basis_nonstationary)
    return np.concatenate([zs, zn], axis=-1)


def _translation_part(alpha: np.ndarray, kind: GroupKind) -> np.ndarray:
    if kind is GroupKind.SO2:
        return np.zeros(alpha.shape[:-1] + (2,))
    return alpha[..., :2]


def eval_kernel(stationary: GroupElement, nonstationary: GroupElement, field: KernelField) -> np.ndarray:
    """Pointwise kernel value as a (c_out, c_in) matrix.

    This is the scalar reference path; the operator uses a vectorized table
    over the same network.
    """
    if stationary.kind is not field.kind or nonstationary.kind is not field.kind:
        raise ValueError("group kind mismatch with kernel field")
    a_s = log_map(stationary)
    a_n = log_map(nonstationary)
    z = embed_pair(field, a_s[None, :], a_n[None, :])
    k = field.net.eval_numpy(z)[0].reshape(field.c_out, field.c_in)
    w = field.mask.weights(_translation_part(a_s, field.kind))
    return k * w


def render_filter_bank(
    field: KernelField,
    coords: np.ndarray,
    rotations: Sequence[GroupElement],
    nonstationary_probes: Sequence[GroupElement],
    channel: tuple[int, int] = (0, 0),
) -> np.ndarray:
    """Rasterize one channel of the kernel on a square lattice of offsets.

    Returns an array of shape (n_rotations, n_probes, H, W): element [i, j]
    shows the filter at stationary rotation i as seen from non-stationary
    probe j.  With omega_prime = 0 all probe slices are identical.
    """
    coords = np.asarray(coords, dtype=float)
    if coords.size == 0:
        raise ValueError("empty render grid")
    H = W = coords.size
    xs, ys = np.meshgrid(coords, coords)
    dim = field.kind.dim
    n_pix = H * W

    stacks = []
    for rot in rotations:
        stat = np.zeros((n_pix, dim))
        if field.kind is GroupKind.SO2:
            stat[:, 0] = rot.theta
        else:
            stat[:, 0] = xs.ravel()
            stat[:, 1] = ys.ravel()
            if field.kind is GroupKind.SE2:
                stat[:, 2] = rot.theta
        row = []
        for probe in nonstationary_probes:
            nonstat = np.tile(log_map(probe), (n_pix, 1))
            z = embed_pair(field, stat, nonstat)
            co, ci = channel
            vals = field.net.eval_numpy(z)[:, co * field.c_in + ci]
            vals = vals * field.mask.weights(_translation_part(stat, field.kind))
            row.append(vals.reshape(H, W))
        stacks.append(row)
    return np.asarray(stacks)


def write_pgm(path, image: np.ndarray) -> tuple[float, float]:
    """Write one grayscale image, min-max normalized; returns (lo, hi)."""
    image = np.asarray(image, dtype=float)
    lo, hi = float(image.min()), float(image.max())
    span = hi - lo if hi > lo else 1.0
    scaled = np.round((image - lo) / span * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (image.shape[1], image.shape[0]))
        f.write(scaled.tobytes())
    return lo, hi


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"P5":
            raise ValueError(f"{path} is not a P5 pgm file")
        dims = f.readline().split()
        w, h = int(dims[0]), int(dims[1])
        f.readline()  # maxval
        return np.frombuffer(f.read(), dtype=np.uint8, count=h * w).reshape(h, w)


def save_filter_bank(outdir, stack: np.ndarray, prefix: str = "filter") -> list[str]:
    """One pgm per (rotation, probe) slice plus a sidecar of normalization constants."""
    import os

    os.makedirs(outdir, exist_ok=True)
    names = []
    lines = []
    for i in range(stack.shape[0]):
        for j in range(stack.shape[1]):
            name = f"{prefix}_rot{i}_probe{j}.pgm"
            lo, hi = write_pgm(os.path.join(outdir, name), stack[i, j])
            names.append(name)
            lines.append(f"{name} min={lo:.9g} max={hi:.9g}")
    with open(os.path.join(outdir, f"{prefix}_normalization.txt"), "w") as f:
        f.write("\n".join(lines) + "\n")
    return names
