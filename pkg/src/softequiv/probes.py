"""Quantitative symmetry instrumentation.

Each probe applies a group action to the input of a layer, the same action
to its output, and reports the relative L2 mismatch.  Probes only accept
configurations where exactness is mathematically available, so any reported
error is method error rather than discretization error: translation probes
require circular padding, rotation probes require a cyclic rotation set and
act at quarter-turn multiples where grid rotation is interpolation-free.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .groups import TWO_PI, wrap_angles
from .kernels import NO_MASK
from .operator import CIRCULAR, GroupSignal, SoftConvLayer, rotate_image

ERROR_FLOOR = 1e-12


def relative_l2(got: np.ndarray, want: np.ndarray) -> float:
    return float(np.linalg.norm(got - want) / (np.linalg.norm(want) + ERROR_FLOOR))


@dataclass
class EquivarianceReport:
    """Per-action equivariance errors plus the configuration they were measured under."""

    probe: str
    actions: list[str]
    errors: list[float]
    config: dict = field(default_factory=dict)
    mode: str = "global"

    @property
    def max_error(self) -> float:
        return max(self.errors)

    @property
    def mean_error(self) -> float:
        return float(np.mean(self.errors))

    def rows(self) -> list[tuple[str, float]]:
        return list(zip(self.actions, self.errors))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["action", "error"])
            w.writerows(self.rows())

    def to_json_dict(self) -> dict:
        return {
            "probe": self.probe,
            "mode": self.mode,
            "config": self.config,
            "max_error": self.max_error,
            "mean_error": self.mean_error,
            "rows": [{"action": a, "error": e} for a, e in self.rows()],
        }

    def write_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, indent=2)


def layer_config_snapshot(layer: SoftConvLayer) -> dict:
    freq = layer.field.freq
    return {
        "kind": layer.kind.value,
        "omega": freq.omega.tolist(),
        "omega_prime": freq.omega_prime.tolist(),
        "mask": layer.field.mask.kind,
        "padding": layer.cfg.padding,
        "grid": list(layer.grid),
        "n_rotations": int(layer.R),
    }


def shift_signal(f: GroupSignal, delta: tuple[int, int]) -> GroupSignal:
    """Translate a pixel-sampled signal by integer (dx, dy) on the torus."""
    if f.grid is None:
        raise ValueError("signal has no pixel grid to shift")
    dx, dy = int(delta[0]), int(delta[1])
    stack = f.as_stack()
    rolled = np.roll(stack, shift=(dy, dx), axis=(1, 2))
    return f.with_values(rolled.reshape(f.values.shape))


def cyclic_order(thetas: np.ndarray) -> int | None:
    """The n for which thetas is exactly {2 pi k / n} in order, else None."""
    n = len(thetas)
    want = wrap_angles(np.arange(n) * TWO_PI / n)
    return n if np.allclose(wrap_angles(thetas), want, atol=1e-12) else None


def exact_quarter_turns(n: int) -> list[int]:
    """Cyclic steps k whose angle 2 pi k / n is a multiple of pi/2."""
    return [k for k in range(n) if (4 * k) % n == 0]


def rotate_signal(f: GroupSignal, k: int) -> GroupSignal:
    """Act with the rotation 2 pi k / n on a cyclically sampled SE(2) signal.

    The action rotates the pixel grid and cyclically relabels rotation
    slices: (g f)(x, theta_j) = f(R(-beta) x, theta_{j-k}).  Restricted to
    quarter-turn multiples so the grid rotation is exact.
    """
    if f.thetas is None or f.grid is None:
        raise ValueError("rotation action needs an SE(2) signal")
    n = cyclic_order(f.thetas)
    if n is None:
        raise ValueError("rotation action needs cyclic-deterministic rotation samples")
    k = int(k) % n
    if k not in exact_quarter_turns(n):
        raise ValueError(f"rotation step {k} of C_{n} is not a quarter-turn multiple")
    beta = TWO_PI * k / n
    stack = f.as_stack()
    out = np.empty_like(stack)
    for j in range(n):
        out[j] = rotate_image(stack[(j - k) % n], beta)
    return f.with_values(out.reshape(f.values.shape))


def translation_equivariance_error(
    layer: SoftConvLayer, f: GroupSignal, shifts: Sequence[tuple[int, int]]
) -> EquivarianceReport:
    """Compare shift-then-apply against apply-then-shift for integer shifts."""
    if layer.cfg.padding != CIRCULAR:
        raise ValueError("translation probe needs circular padding; zero padding breaks it at borders")
    if len(shifts) == 0:
        raise ValueError("no shifts given")
    h = layer(f)
    actions, errors = [], []
    for delta in shifts:
        got = layer(shift_signal(f, delta)).values
        want = shift_signal(h, delta).values
        actions.append(f"shift({int(delta[0])},{int(delta[1])})")
        errors.append(relative_l2(got, want))
    return EquivarianceReport("translation", actions, errors, layer_config_snapshot(layer))


def rotation_equivariance_error(
    layer: SoftConvLayer, f: GroupSignal, steps: Sequence[int] | None = None
) -> EquivarianceReport:
    """Compare rotate-then-apply against apply-then-(rotate grid + permute slices)."""
    if f.thetas is None or cyclic_order(f.thetas) is None:
        raise ValueError("rotation probe needs cyclic-deterministic rotation samples")
    n = cyclic_order(f.thetas)
    if steps is None:
        steps = exact_quarter_turns(n)
    h = layer(f)
    actions, errors = [], []
    for k in steps:
        got = layer(rotate_signal(f, k)).values
        want = rotate_signal(h, k).values
        actions.append(f"rot({k}/{n})")
        errors.append(relative_l2(got, want))
    return EquivarianceReport("rotation", actions, errors, layer_config_snapshot(layer))


def invariance_error(
    layer: SoftConvLayer, f: GroupSignal, actions: Sequence[tuple[str, object]]
) -> EquivarianceReport:
    """Error of output changes under input actions; zero means invariance.

    Actions are ("translation", (dx, dy)) or ("rotation", k).  When the
    kernel is constant but only on a bounded support, the layer is a local
    pool rather than a global one and the report is flagged accordingly.
    """
    h = layer(f).values
    labels, errors = [], []
    for name, arg in actions:
        if name == "translation":
            g = shift_signal(f, arg)
            labels.append(f"shift{tuple(int(a) for a in arg)}")
        elif name == "rotation":
            g = rotate_signal(f, int(arg))
            labels.append(f"rot({int(arg)})")
        else:
            raise ValueError(f"unknown action {name!r}")
        errors.append(relative_l2(layer(g).values, h))
    freq = layer.field.freq
    flat = bool(np.all(freq.omega == 0) and np.all(freq.omega_prime == 0))
    mode = "local-pooling" if flat and layer.field.mask.kind != NO_MASK else "global"
    return EquivarianceReport("invariance", labels, errors, layer_config_snapshot(layer), mode=mode)


def interpolation_curve(
    layer_factory: Callable[[float], SoftConvLayer],
    f: GroupSignal,
    omega_prime_grid: Sequence[float],
    probe: str = "auto",
) -> list[tuple[float, float]]:
    """Equivariance error as a function of the domain-space frequency.

    The grid must be sorted ascending and start at 0, where the layer is an
    exact convolution and the error vanishes; rising entries quantify how
    softly the symmetry constraint is enforced.
    """
    grid = list(omega_prime_grid)
    if len(grid) == 0:
        raise ValueError("empty frequency grid")
    if grid[0] != 0 or sorted(grid) != grid:
        raise ValueError("frequency grid must be ascending and start at 0")
    rows = []
    for w in grid:
        layer = layer_factory(float(w))
        if probe == "auto":
            use = "rotation" if f.thetas is not None else "translation"
        else:
            use = probe
        if use == "rotation":
            report = rotation_equivariance_error(layer, f)
        else:
            H, W = f.grid
            shifts = [(1, 0), (0, 1), (W // 2, H // 2)]
            report = translation_equivariance_error(layer, f, shifts)
        rows.append((float(w), report.max_error))
    return rows
