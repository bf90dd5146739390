"""Classifier assembly: the model matrix of strict and soft symmetry variants.

Each named row fixes which domain-space frequency entries may be non-zero;
all other entries are structurally pinned to zero, so a "strict" model
cannot drift into softness through configuration.  A model is a lifting
stage (SE(2) rows), a stack of softconv blocks (operator, per-channel
normalization over the sample axis, tanh), a rotation projection, a spatial
mean pool, and a linear head.  Normalization uses per-signal statistics so
the symmetry properties of single inputs survive batching.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import (
    Adam,
    Tensor,
    backward,
    matmul,
    parameter,
    pow_const,
    reshape,
    softmax_cross_entropy,
    tanh,
    tmax,
    tmean,
)
from .fourier import FrequencySpec
from .groups import GroupKind, sample_rotations
from .kernels import hard_disk, make_kernel_field, no_mask, soft_gaussian
from .operator import OperatorConfig, SoftConvLayer

# row name -> (group kind, axes of omega_prime allowed to be non-zero)
TABLE1_ROWS: dict[str, tuple[GroupKind, frozenset[str]]] = {
    "t2-strict": (GroupKind.T2, frozenset()),
    "t2-soft": (GroupKind.T2, frozenset({"t"})),
    "se2-strict": (GroupKind.SE2, frozenset()),
    "se2-soft-so2": (GroupKind.SE2, frozenset({"r"})),
    "se2-soft-t2": (GroupKind.SE2, frozenset({"t"})),
    "se2-soft-both": (GroupKind.SE2, frozenset({"t", "r"})),
}


class NumericError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class ModelSpec:
    """Serializable description of one classifier.

    Frequencies are shared across layers; ``per_layer_omega_prime`` opts into
    distinct domain-space values per block.  Filter-space x and y entries are
    tied, as are the domain-space translation entries.
    """

    row: str = "se2-soft-so2"
    image_size: int = 14
    in_channels: int = 1
    widths: tuple[int, ...] = (8, 16)
    n_classes: int = 2
    n_rotations: int = 4
    rotation_mode: str = "cyclic-deterministic"
    radius: float = 2.5
    mask_kind: str = "hard-disk"
    mask_sigma: float = 2.0
    padding: str = "zero"
    omega_translation: float = 0.5
    omega_rotation: int = 1
    omega_prime_translation: float = 0.0
    omega_prime_rotation: int = 0
    per_layer_omega_prime: tuple[tuple[float, int], ...] | None = None
    n_feature_pairs: int = 64
    kernel_hidden: tuple[int, ...] = (32, 32)
    projection: str = "mean"  # or "max"
    norm_eps: float = 1e-5

    def __post_init__(self):
        if self.row not in TABLE1_ROWS:
            raise ValueError(f"unknown model row {self.row!r}; expected one of {sorted(TABLE1_ROWS)}")
        kind, soft_axes = TABLE1_ROWS[self.row]
        if "t" not in soft_axes and self.omega_prime_translation != 0:
            raise ValueError(f"{self.row} pins the translation domain-space frequency to 0")
        if "r" not in soft_axes and self.omega_prime_rotation != 0:
            raise ValueError(f"{self.row} pins the rotation domain-space frequency to 0")
        if kind is GroupKind.T2 and self.omega_prime_rotation != 0:
            raise ValueError("T(2) rows have no rotation axis")
        if self.per_layer_omega_prime is not None:
            if len(self.per_layer_omega_prime) != len(self.widths):
                raise ValueError("per-layer frequency list must match the number of blocks")
            for t, r in self.per_layer_omega_prime:
                if "t" not in soft_axes and t != 0:
                    raise ValueError(f"{self.row} pins the translation domain-space frequency to 0")
                if "r" not in soft_axes and r != 0:
                    raise ValueError(f"{self.row} pins the rotation domain-space frequency to 0")
        if self.projection not in ("mean", "max"):
            raise ValueError(f"unknown projection {self.projection!r}")
        self.widths = tuple(self.widths)
        if not self.widths or any(w < 1 for w in self.widths):
            raise ValueError(f"invalid block widths {self.widths}")
        if self.per_layer_omega_prime is not None:
            self.per_layer_omega_prime = tuple((float(t), int(r)) for t, r in self.per_layer_omega_prime)

    @property
    def kind(self) -> GroupKind:
        return TABLE1_ROWS[self.row][0]

    @property
    def soft_axes(self) -> frozenset[str]:
        return TABLE1_ROWS[self.row][1]

    def frequency_spec(self, layer: int = 0) -> FrequencySpec:
        if self.per_layer_omega_prime is not None:
            omp_t, omp_r = self.per_layer_omega_prime[layer]
        else:
            omp_t, omp_r = self.omega_prime_translation, self.omega_prime_rotation
        return FrequencySpec.for_kind(
            self.kind,
            omega_translation=self.omega_translation,
            omega_rotation=self.omega_rotation if self.kind is not GroupKind.T2 else 0,
            omega_prime_translation=omp_t,
            omega_prime_rotation=omp_r if self.kind is not GroupKind.T2 else 0,
        )

    def mask(self):
        if self.mask_kind == "hard-disk":
            return hard_disk(self.radius)
        if self.mask_kind == "soft-gaussian":
            return soft_gaussian(self.mask_sigma)
        if self.mask_kind == "none":
            return no_mask()
        raise ValueError(f"unknown mask kind {self.mask_kind!r}")

    def to_json(self) -> str:
        d = asdict(self)
        if d["per_layer_omega_prime"] is not None:
            d["per_layer_omega_prime"] = [list(p) for p in d["per_layer_omega_prime"]]
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        d = json.loads(text)
        d["widths"] = tuple(d["widths"])
        d["kernel_hidden"] = tuple(d["kernel_hidden"])
        if d.get("per_layer_omega_prime") is not None:
            d["per_layer_omega_prime"] = tuple(tuple(p) for p in d["per_layer_omega_prime"])
        return cls(**d)


class Model:
    """A built classifier: softconv blocks plus a linear head."""

    def __init__(self, spec: ModelSpec, layers: list[SoftConvLayer], head_w: Tensor, head_b: Tensor, dtype):
        self.spec = spec
        self.layers = layers
        self.head_w = head_w
        self.head_b = head_b
        self.dtype = np.dtype(dtype)
        self.thetas = layers[0].thetas if spec.kind is GroupKind.SE2 else None

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for i, layer in enumerate(self.layers):
            out.update(layer.net.named_parameters(prefix=f"block{i}"))
        out["head.w"] = self.head_w
        out["head.b"] = self.head_b
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def _signal_values(self, images: np.ndarray) -> np.ndarray:
        images = np.asarray(images, dtype=self.dtype)
        if images.ndim == 3:
            images = images[..., None]
        B, H, W, C = images.shape
        S = self.spec.image_size
        if (H, W) != (S, S) or C != self.spec.in_channels:
            raise ValueError(f"expected images of shape (B, {S}, {S}, {self.spec.in_channels})")
        flat = images.reshape(B, H * W, C)
        if self.spec.kind is GroupKind.SE2:
            flat = np.tile(flat, (1, len(self.thetas), 1))  # lift: replicate over rotations
        return flat

    def forward_tensor(self, images: np.ndarray) -> Tensor:
        # block order is operator -> normalize -> tanh: normalizing after the
        # nonlinearity would hand the mean pool an exactly zero-mean signal
        # and collapse the logits to the head bias
        x = Tensor(self._signal_values(images))
        B = x.shape[0]
        eps = float(self.spec.norm_eps)
        for layer in self.layers:
            x = layer.forward(x)
            mu = tmean(x, axis=1, keepdims=True)
            centered = x - mu
            var = tmean(centered * centered, axis=1, keepdims=True)
            x = tanh(centered * pow_const(var + eps, -0.5))
        if self.spec.kind is GroupKind.SE2:
            R = len(self.thetas)
            HW = self.spec.image_size**2
            stacked = reshape(x, (B, R, HW, self.spec.widths[-1]))
            x = tmean(stacked, axis=1) if self.spec.projection == "mean" else tmax(stacked, axis=1)
        x = tmean(x, axis=1)  # spatial mean pool
        return matmul(x, self.head_w) + self.head_b

    def logits(self, images: np.ndarray) -> np.ndarray:
        return self.forward_tensor(images).data

    def predict(self, images: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(images), axis=1)


def build_model(spec: ModelSpec, seed: int = 0, dtype=np.float32) -> Model:
    """Deterministically initialize a model from its spec and a seed."""
    seeds = np.random.SeedSequence(seed).generate_state(len(spec.widths) + 2)
    thetas = None
    if spec.kind is GroupKind.SE2:
        rotations = sample_rotations(spec.n_rotations, spec.rotation_mode, seed=int(seeds[-2]))
        thetas = np.array([r.theta for r in rotations])
    mask = spec.mask()
    grid = (spec.image_size, spec.image_size)
    layers = []
    c_in = spec.in_channels
    for i, c_out in enumerate(spec.widths):
        field = make_kernel_field(
            spec.kind,
            c_in,
            c_out,
            spec.frequency_spec(i),
            mask,
            n_feature_pairs=spec.n_feature_pairs,
            hidden=spec.kernel_hidden,
            seed=int(seeds[i]),
            dtype=dtype,
        )
        cfg = OperatorConfig(
            n_rotation_samples=spec.n_rotations,
            rotation_mode=spec.rotation_mode,
            padding=spec.padding,
        )
        layers.append(SoftConvLayer(field, cfg, grid, thetas, dtype=dtype))
        c_in = c_out
    rng = np.random.default_rng(int(seeds[-1]))
    a = math.sqrt(3.0 / spec.widths[-1])
    head_w = parameter(rng.uniform(-a, a, size=(spec.widths[-1], spec.n_classes)).astype(dtype))
    head_b = parameter(np.zeros(spec.n_classes, dtype=dtype))
    return Model(spec, layers, head_w, head_b, dtype)


def save_model(path, model: Model) -> None:
    """Write trainable parameters plus the fixed feature bases and rotation samples."""
    from .autodiff import save_checkpoint

    tensors = {k: v.data for k, v in model.named_parameters().items()}
    for i, layer in enumerate(model.layers):
        tensors[f"block{i}.basis_stationary.W"] = layer.field.basis_stationary.W
        tensors[f"block{i}.basis_nonstationary.W"] = layer.field.basis_nonstationary.W
    if model.thetas is not None:
        tensors["rotations.thetas"] = model.thetas
    save_checkpoint(path, tensors)


def load_model_weights(path, model: Model) -> None:
    """Restore a checkpoint into a model built from the same spec.

    The stored feature bases and rotation samples override the model's own
    (layers are rebuilt when they differ, e.g. a different build seed), so a
    restored model reproduces the saved one exactly.
    """
    import dataclasses

    from .autodiff import load_checkpoint
    from .fourier import RffBasis

    tensors = load_checkpoint(path)
    fixed = {k for k in tensors if ".basis_" in k or k == "rotations.thetas"}
    params = model.named_parameters()
    missing = set(params) - set(tensors)
    extra = set(tensors) - set(params) - fixed
    if missing or extra:
        raise ValueError(f"checkpoint does not match the model: missing {sorted(missing)}, extra {sorted(extra)}")

    thetas = tensors.get("rotations.thetas")
    if (thetas is None) != (model.thetas is None):
        raise ValueError("checkpoint and model disagree about rotation sampling")
    for i, layer in enumerate(model.layers):
        new_bases = {}
        for slot in ("basis_stationary", "basis_nonstationary"):
            stored = tensors.get(f"block{i}.{slot}.W")
            current = getattr(layer.field, slot)
            if stored is not None and not np.array_equal(stored, current.W):
                if stored.shape != current.W.shape:
                    raise ValueError(f"checkpoint basis block{i}.{slot} has shape {stored.shape}")
                new_bases[slot] = RffBasis(current.kind, stored, current.integer_axes)
        thetas_changed = thetas is not None and not np.array_equal(thetas, layer.thetas)
        if new_bases or thetas_changed:
            field = dataclasses.replace(layer.field, **new_bases)
            model.layers[i] = SoftConvLayer(
                field, layer.cfg, layer.grid, thetas if thetas is not None else None, dtype=model.dtype
            )
    if thetas is not None:
        model.thetas = np.asarray(thetas)

    params = model.named_parameters()
    for name, p in params.items():
        if tuple(tensors[name].shape) != p.data.shape:
            raise ValueError(f"checkpoint tensor {name} has shape {tensors[name].shape}, expected {p.data.shape}")
        p.data = tensors[name].astype(p.data.dtype)


def evaluate_accuracy(model: Model, images: np.ndarray, labels: np.ndarray, batch_size: int = 256) -> float:
    hits = 0
    for start in range(0, len(images), batch_size):
        stop = start + batch_size
        hits += int(np.sum(model.predict(images[start:stop]) == labels[start:stop]))
    return hits / len(images)


def train_classifier(
    model: Model,
    train: tuple[np.ndarray, np.ndarray],
    val: tuple[np.ndarray, np.ndarray],
    epochs: int = 10,
    batch_size: int = 64,
    lr: float = 2e-3,
    seed: int = 0,
    early_stop_val_acc: float | None = None,
    patience: int | None = None,
    log=None,
) -> list[tuple[int, float, float]]:
    """Adam training loop; returns (epoch, train_loss, val_acc) rows.

    Stops early when validation accuracy reaches ``early_stop_val_acc`` or
    has not improved for ``patience`` consecutive epochs.  Raises
    :class:`NumericError` as soon as a batch loss is non-finite.
    """
    images, labels = train
    opt = Adam(model.parameters(), lr=lr)
    rng = np.random.default_rng(seed)
    history = []
    best = -1.0
    stale = 0
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(images))
        losses = []
        for start in range(0, len(order), batch_size):
            batch = order[start : start + batch_size]
            opt.zero_grad()
            loss = softmax_cross_entropy(model.forward_tensor(images[batch]), labels[batch])
            value = float(loss.data)
            if not math.isfinite(value):
                raise NumericError(f"non-finite loss at epoch {epoch}")
            backward(loss)
            opt.step()
            losses.append(value)
        val_acc = evaluate_accuracy(model, val[0], val[1])
        history.append((epoch, float(np.mean(losses)), val_acc))
        if log is not None:
            log(f"epoch {epoch}: train_loss={np.mean(losses):.4f} val_acc={val_acc:.4f}")
        if early_stop_val_acc is not None and val_acc >= early_stop_val_acc:
            break
        if val_acc > best + 1e-3:
            best = val_acc
            stale = 0
        else:
            stale += 1
            if patience is not None and stale >= patience:
                break
    return history
