"""Sample-based non-stationary integral operator over group signals.

An output value at sample u accumulates kernel-weighted input values over a
neighborhood: h(u) = norm * sum_v k(v^-1 u, v) f(v), where v runs over the
input samples whose translation offset from u lies inside the support mask.
T(2) signals live on the pixel lattice; SE(2) signals on pixels x rotations
with sample index j * H * W + row * W + col; SO(2) signals on rotations only.

Coordinate convention, shared with lifting and the equivariance probes:
pixel (row, col) sits at the plane point (col - (W-1)/2, row - (H-1)/2),
and an offset (dx, dy) means (column difference, row difference).

Two execution plans cover all frequency settings.  When the domain-space
embedding cannot depend on absolute position (translation entries of
omega_prime are zero), kernel values form a small table indexed by
(output rotation, input rotation, offset) and the sum is one im2col matrix
product.  Otherwise kernel values vary per input pixel, and the sum is
accumulated per (rotation, offset) slice; this general plan is meant for
probe-scale grids rather than large training runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import (
    Tensor,
    build_inverse_table,
    concat,
    matmul,
    narrow,
    reshape,
    take_cols,
    transpose,
    tsum,
)
from .fourier import FrequencySpec
from .groups import GroupElement, GroupKind, wrap_angles
from .kernels import KernelField, SupportMask, embed_pair

CIRCULAR = "circular"
ZERO = "zero"


@dataclass(frozen=True)
class OperatorConfig:
    """Integration settings for one operator application."""

    freq: FrequencySpec | None = None
    mask: SupportMask | None = None
    n_rotation_samples: int = 4
    rotation_mode: str = "cyclic-deterministic"
    padding: str = CIRCULAR
    normalization: float | None = None

    def __post_init__(self):
        if self.padding not in (CIRCULAR, ZERO):
            raise ValueError(f"unknown padding {self.padding!r}")
        if self.n_rotation_samples < 1:
            raise ValueError("need at least one rotation sample")
        if self.rotation_mode not in ("uniform-random", "cyclic-deterministic"):
            raise ValueError(f"unknown rotation mode {self.rotation_mode!r}")


@dataclass(eq=False)
class GroupSignal:
    """A sampled function on a group: sample set plus a value row per sample."""

    kind: GroupKind
    values: np.ndarray  # (n_samples, channels)
    grid: tuple[int, int] | None = None  # (H, W), pixel-sampled kinds
    thetas: np.ndarray | None = None  # rotation angles, rotation-sampled kinds

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ValueError("values must be (n_samples, channels)")
        if self.kind is GroupKind.SO2:
            if self.thetas is None or self.grid is not None:
                raise ValueError("SO(2) signals are sampled on rotations only")
        elif self.kind is GroupKind.T2:
            if self.grid is None or self.thetas is not None:
                raise ValueError("T(2) signals are sampled on the pixel grid only")
        else:
            if self.grid is None or self.thetas is None:
                raise ValueError("SE(2) signals need both a grid and a rotation list")
        if self.thetas is not None:
            self.thetas = wrap_angles(np.asarray(self.thetas, dtype=float))
        if self.values.shape[0] != self.n_rotations * self.n_pixels:
            raise ValueError(
                f"expected {self.n_rotations * self.n_pixels} sample rows, got {self.values.shape[0]}"
            )

    @property
    def n_rotations(self) -> int:
        return 1 if self.thetas is None else len(self.thetas)

    @property
    def n_pixels(self) -> int:
        return 1 if self.grid is None else self.grid[0] * self.grid[1]

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray) -> "GroupSignal":
        return GroupSignal(self.kind, values, self.grid, self.thetas)

    def as_stack(self) -> np.ndarray:
        """Values as (n_rotations, H, W, C); requires a pixel grid."""
        if self.grid is None:
            raise ValueError("signal has no pixel grid")
        H, W = self.grid
        return self.values.reshape(self.n_rotations, H, W, self.channels)


def pixel_coords(H: int, W: int) -> np.ndarray:
    """Centered (x, y) coordinates of the row-major pixel lattice, shape (H*W, 2)."""
    rows, cols = np.divmod(np.arange(H * W), W)
    return np.stack([cols - (W - 1) / 2.0, rows - (H - 1) / 2.0], axis=1)


def enumerate_offsets(mask: SupportMask, spacing: float = 1.0) -> np.ndarray:
    """Integer lattice offsets inside the mask support, in deterministic row-major order."""
    radius = mask.sampling_radius()
    if radius is None:
        raise ValueError("unbounded mask; the offset set is the whole grid")
    r = int(math.floor(radius / spacing))
    out = [
        (dx, dy)
        for dy in range(-r, r + 1)
        for dx in range(-r, r + 1)
        if (dx * dx + dy * dy) * spacing * spacing <= radius * radius
    ]
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def _full_coverage_offsets(H: int, W: int, padding: str) -> np.ndarray:
    """Offsets that pair every output pixel with every input pixel exactly once."""
    if padding == CIRCULAR:
        dxs = range(-(W // 2), W - W // 2)
        dys = range(-(H // 2), H - H // 2)
    else:
        dxs = range(-(W - 1), W)
        dys = range(-(H - 1), H)
    return np.array([(dx, dy) for dy in dys for dx in dxs], dtype=np.int64)


def _patch_pixels(H: int, W: int, offsets: np.ndarray, padding: str) -> np.ndarray:
    """Source pixel of each (output pixel, offset); H*W marks out-of-range."""
    HW = H * W
    rows, cols = np.divmod(np.arange(HW), W)
    src_r = rows[:, None] - offsets[None, :, 1]
    src_c = cols[:, None] - offsets[None, :, 0]
    if padding == CIRCULAR:
        return np.mod(src_r, H) * W + np.mod(src_c, W)
    valid = (src_r >= 0) & (src_r < H) & (src_c >= 0) & (src_c < W)
    return np.where(valid, src_r * W + src_c, HW)


def _rotated_offsets(offsets: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """R(-theta_j) applied to each offset: shape (R, n_off, 2)."""
    c = np.cos(thetas)[:, None]
    s = np.sin(thetas)[:, None]
    dx, dy = offsets[None, :, 0], offsets[None, :, 1]
    return np.stack([c * dx + s * dy, -s * dx + c * dy], axis=-1)


class SoftConvLayer:
    """One operator application with all index tables and embeddings precomputed.

    The layer is bound to a fixed sample geometry (grid, rotation list,
    padding); ``forward`` maps a (B, n_samples, c_in) tensor to
    (B, n_samples, c_out) and is differentiable with respect to the kernel
    network parameters and the input.
    """

    def __init__(
        self,
        field: KernelField,
        cfg: OperatorConfig,
        grid: tuple[int, int] | None,
        thetas: np.ndarray | None,
        dtype=np.float64,
    ):
        if cfg.freq is not None and not (
            cfg.freq.kind is field.freq.kind
            and np.array_equal(cfg.freq.omega, field.freq.omega)
            and np.array_equal(cfg.freq.omega_prime, field.freq.omega_prime)
        ):
            raise ValueError("config frequencies disagree with the kernel field")
        if cfg.mask is not None and cfg.mask != field.mask:
            raise ValueError("config mask disagrees with the kernel field")
        kind = field.kind
        if kind is GroupKind.SO2:
            grid = (1, 1)
            if thetas is None:
                raise ValueError("SO(2) layers need a rotation list")
        if kind is GroupKind.T2:
            thetas = np.zeros(1)
        if grid is None or thetas is None:
            raise ValueError("layer needs a grid and a rotation list")

        self.field = field
        self.cfg = cfg
        self.kind = kind
        self.grid = (int(grid[0]), int(grid[1]))
        self.thetas = wrap_angles(np.asarray(thetas, dtype=float))
        self.dtype = np.dtype(dtype)
        # keep the whole graph in one dtype; training models are built to match
        self.net = field.net if field.net.weights[0].data.dtype == self.dtype else field.net.astype(self.dtype)

        H, W = self.grid
        HW = H * W
        R = len(self.thetas)
        mask = field.mask
        if mask.sampling_radius() is None:
            offsets = _full_coverage_offsets(H, W, cfg.padding)
        else:
            offsets = enumerate_offsets(mask)
        if len(offsets) == 0:
            raise ValueError("empty neighborhood: the mask admits no offsets")
        self.offsets = offsets
        n_off = len(offsets)
        self.n_in = R * HW
        self.c_in, self.c_out = field.c_in, field.c_out

        n_nbhd = R * n_off
        self.normalization = (
            cfg.normalization if cfg.normalization is not None else 1.0 / (n_nbhd * math.sqrt(self.c_in))
        )

        patch_pix = _patch_pixels(H, W, offsets, cfg.padding)  # (HW, n_off)
        mask_w = mask.weights(offsets.astype(float))  # (n_off,)

        rel = wrap_angles(self.thetas[:, None] - self.thetas[None, :])  # rel[i, j]
        rot_off = _rotated_offsets(offsets, self.thetas)  # (R, n_off, 2)

        self.general = field.freq.nonstationary_translation
        C = self.c_in
        CoCi = self.c_out * self.c_in

        if not self.general:
            # kernel rows ordered (i, j, d)
            stat = np.zeros((R, R, n_off, kind.dim))
            nonstat = np.zeros((R, R, n_off, kind.dim))
            if kind is GroupKind.SO2:
                stat[..., 0] = rel[:, :, None]
                nonstat[..., 0] = self.thetas[None, :, None]
            else:
                stat[..., 0] = rot_off[None, :, :, 0]
                stat[..., 1] = rot_off[None, :, :, 1]
                if kind is GroupKind.SE2:
                    stat[..., 2] = rel[:, :, None]
                    nonstat[..., 2] = self.thetas[None, :, None]
            self.z_table = embed_pair(field, stat.reshape(-1, kind.dim), nonstat.reshape(-1, kind.dim)).astype(
                self.dtype
            )
            self.mask_col = np.tile(mask_w, R * R)[:, None].astype(self.dtype)

            # patch columns ordered (j, d, c); sentinel points at the zero row
            sample_idx = np.where(
                patch_pix[:, None, :] < HW,
                np.arange(R)[None, :, None] * HW + patch_pix[:, None, :],
                R * HW,
            )  # (HW, R, n_off)
            elem_idx = (sample_idx[..., None] * C + np.arange(C)).reshape(HW, R * n_off * C)
            self.patch_idx = elem_idx.reshape(-1)
            self.patch_inv = build_inverse_table(self.patch_idx, (R * HW + 1) * C, drop_from=R * HW * C)

            # table permutation (i, j, d, co, ci) -> rows (j, d, ci), cols (i, co)
            i_ix, j_ix, d_ix, co_ix, ci_ix = np.meshgrid(
                np.arange(R), np.arange(R), np.arange(n_off), np.arange(self.c_out), np.arange(C), indexing="ij"
            )
            flat_src = ((i_ix * R + j_ix) * n_off + d_ix) * CoCi + co_ix * C + ci_ix
            order = np.transpose(flat_src, (1, 2, 4, 0, 3)).reshape(-1)  # (j, d, ci, i, co)
            self.perm_idx = order
            self.perm_inv = build_inverse_table(order, R * R * n_off * CoCi)
        else:
            # kernel rows ordered (j, d, p_v, i)
            coords = pixel_coords(H, W)
            stat = np.zeros((R, n_off, HW, R, kind.dim))  # (j, d, p_v, i, dim)
            nonstat = np.zeros((R, n_off, HW, R, kind.dim))
            stat[..., 0] = rot_off[:, :, None, None, 0]
            stat[..., 1] = rot_off[:, :, None, None, 1]
            nonstat[..., 0] = coords[None, None, :, None, 0]
            nonstat[..., 1] = coords[None, None, :, None, 1]
            if kind is GroupKind.SE2:
                stat[..., 2] = rel.T[:, None, None, :]  # rel[i, j] = rel.T[j, i]
                nonstat[..., 2] = self.thetas[:, None, None, None]
            self.z_table = embed_pair(field, stat.reshape(-1, kind.dim), nonstat.reshape(-1, kind.dim)).astype(
                self.dtype
            )
            mask_rows = np.broadcast_to(mask_w[None, :, None, None], (R, n_off, HW, R)).reshape(-1)
            self.mask_col = mask_rows[:, None].astype(self.dtype)

            # shift tables: out[(p, i, co)] <- value[(patch_pix[p, d], i, co)]
            ICo = R * self.c_out
            piece = np.arange(ICo)
            self.shift_idx = []
            self.shift_inv = []
            for d in range(n_off):
                src = patch_pix[:, d]
                idx = np.where(src[:, None] < HW, src[:, None] * ICo + piece[None, :], HW * ICo)
                idx = idx.reshape(-1)
                self.shift_idx.append(idx)
                self.shift_inv.append(build_inverse_table(idx, HW * ICo + 1, drop_from=HW * ICo))

        self.HW, self.R, self.n_off = HW, R, n_off

    def kernel_table(self) -> Tensor:
        """Masked kernel values for every distinct kernel input, (rows, c_out*c_in)."""
        table = self.net.apply(Tensor(self.z_table))
        return table * Tensor(self.mask_col)

    def forward(self, x: Tensor) -> Tensor:
        B, N, C = x.shape
        if N != self.n_in or C != self.c_in:
            raise ValueError(f"expected input of shape (B, {self.n_in}, {self.c_in}), got {x.shape}")
        HW, R, n_off = self.HW, self.R, self.n_off
        Co = self.c_out
        table = self.kernel_table()

        zero_row = Tensor(np.zeros((B, 1, C), dtype=self.dtype))
        x2 = reshape(concat([x, zero_row], axis=1), (B, (self.n_in + 1) * C))

        if not self.general:
            patches = reshape(take_cols(x2, self.patch_idx, self.patch_inv), (B, HW, R * n_off * C))
            ktab = reshape(take_cols(reshape(table, (1, -1)), self.perm_idx, self.perm_inv), (R * n_off * C, R * Co))
            out = matmul(patches, ktab)  # (B, HW, R*Co)
        else:
            ICo = R * Co
            kflat = reshape(table, (1, -1))
            block = HW * R * Co * C  # rows per (j, d) slice, flattened with channels
            zero_col = Tensor(np.zeros((B, 1), dtype=self.dtype))  # shift target for padding misses
            total = None
            for j in range(R):
                f_j = reshape(narrow(reshape(x, (B, self.n_in * C)), j * HW * C, HW * C), (B, HW, 1, 1, C))
                for d in range(n_off):
                    k_jd = reshape(narrow(kflat, (j * n_off + d) * block, block), (1, HW, R, Co, C))
                    prod = tsum(f_j * k_jd, axis=4)  # (B, HW, R, Co)
                    flat = concat([reshape(prod, (B, HW * ICo)), zero_col], axis=1)
                    shifted = take_cols(flat, self.shift_idx[d], self.shift_inv[d])
                    total = shifted if total is None else total + shifted
            out = reshape(total, (B, HW, R * Co))

        out = reshape(transpose(reshape(out, (B, HW, R, Co)), (0, 2, 1, 3)), (B, R * HW, Co))
        return out * float(self.normalization)

    def __call__(self, f: GroupSignal) -> GroupSignal:
        if f.kind is not self.kind:
            raise ValueError(f"layer is for {self.kind.value}, got a {f.kind.value} signal")
        if f.grid is not None and tuple(f.grid) != self.grid:
            raise ValueError("signal grid does not match the layer geometry")
        if f.thetas is not None and not np.array_equal(wrap_angles(f.thetas), self.thetas):
            raise ValueError("signal rotation samples do not match the layer geometry")
        x = Tensor(f.values.astype(self.dtype)[None])
        y = self.forward(x)
        return f.with_values(y.data[0])


def apply_operator(f: GroupSignal, cfg: OperatorConfig, field: KernelField) -> GroupSignal:
    """Apply the integral operator once; output samples equal input samples."""
    if f.kind is not field.kind:
        raise ValueError(f"kernel field is for {field.kind.value}, got a {f.kind.value} signal")
    layer = SoftConvLayer(field, cfg, f.grid, f.thetas, dtype=f.values.dtype)
    return layer(f)


def lift_image(image: np.ndarray, rotations: Sequence[GroupElement]) -> GroupSignal:
    """Lift an image to an SE(2) signal by replicating it over rotation samples.

    This is the pullback along (t, theta) -> t, so acting on the image with a
    rotation matches acting on the lifted signal with the same group element;
    downstream layers read orientation through their relative-angle input.
    """
    image = np.asarray(image)
    if image.size == 0:
        raise ValueError("empty image")
    if len(rotations) == 0:
        raise ValueError("empty rotation list")
    if image.ndim == 2:
        image = image[..., None]
    H, W, C = image.shape
    thetas = np.array([r.theta for r in rotations])
    values = np.tile(image.reshape(H * W, C), (len(rotations), 1))
    return GroupSignal(GroupKind.SE2, values, grid=(H, W), thetas=thetas)


def image_signal(image: np.ndarray) -> GroupSignal:
    """The identity embedding of an image as a T(2) signal."""
    image = np.asarray(image)
    if image.ndim == 2:
        image = image[..., None]
    H, W, C = image.shape
    return GroupSignal(GroupKind.T2, image.reshape(H * W, C), grid=(H, W))


def project_signal(f: GroupSignal, mode: str = "mean-over-rotations") -> np.ndarray:
    """Reduce an SE(2) signal over its rotation axis, returning (H, W, C)."""
    if f.kind is not GroupKind.SE2 or f.grid is None or f.thetas is None:
        raise ValueError("projection needs an SE(2) signal with factored samples")
    stack = f.as_stack()
    if mode == "mean-over-rotations":
        return stack.mean(axis=0)
    if mode == "max-over-rotations":
        return stack.max(axis=0)
    raise ValueError(f"unknown projection mode {mode!r}")


def rotate_image(image: np.ndarray, theta: float, fill: float = 0.0) -> np.ndarray:
    """Rotate image content by theta about the grid center, bilinear, zero fill.

    Exact (no interpolation residue) when theta is a multiple of pi/2 on a
    square grid: source coordinates then land on lattice points.
    """
    image = np.asarray(image, dtype=float)
    squeeze = image.ndim == 2
    if squeeze:
        image = image[..., None]
    H, W, C = image.shape
    coords = pixel_coords(H, W)
    c, s = math.cos(theta), math.sin(theta)
    # out(p) = in(R(-theta) p)
    sx = c * coords[:, 0] + s * coords[:, 1] + (W - 1) / 2.0
    sy = -s * coords[:, 0] + c * coords[:, 1] + (H - 1) / 2.0
    x0 = np.floor(sx).astype(int)
    y0 = np.floor(sy).astype(int)
    fx = sx - x0
    fy = sy - y0
    out = np.zeros((H * W, C))
    for dy in (0, 1):
        for dx in (0, 1):
            wgt = (fx if dx else 1 - fx) * (fy if dy else 1 - fy)
            xi, yi = x0 + dx, y0 + dy
            inside = (xi >= 0) & (xi < W) & (yi >= 0) & (yi < H)
            vals = np.full((H * W, C), float(fill))
            vals[inside] = image[yi[inside], xi[inside], :]
            out += wgt[:, None] * vals
    out = out.reshape(H, W, C)
    return out[..., 0] if squeeze else out
