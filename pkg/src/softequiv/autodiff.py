"""Minimal reverse-mode gradient engine over dense numpy arrays.

The recorded graph is the tape: every operation stores its parents and a
backward closure, and ``backward`` releases them after one reverse pass in
reverse insertion order, so a graph can be differentiated exactly once.
Only the primitives needed by the kernel networks and classifier heads are
implemented.  A graph is single-threaded; independent graphs may run on
different threads.
"""

from __future__ import annotations

import itertools
import json
import struct

import numpy as np

_COUNTER = itertools.count()


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn", "_order", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None
        self._order = next(_COUNTER)
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return self._backward_fn is None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    # operator sugar; python scalars adopt this tensor's dtype
    def __add__(self, other):
        return add(self, _as_tensor(other, self.data.dtype))

    def __radd__(self, other):
        return add(_as_tensor(other, self.data.dtype), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.data.dtype))

    def __rmul__(self, other):
        return mul(_as_tensor(other, self.data.dtype), self)

    def __neg__(self):
        return mul(self, Tensor(np.asarray(-1.0, dtype=self.data.dtype)))

    def __sub__(self, other):
        return add(self, -_as_tensor(other, self.data.dtype))

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def backward(self):
        backward(self)


def _as_tensor(x, scalar_dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if scalar_dtype is not None and np.isscalar(x):
        return Tensor(np.asarray(x, dtype=scalar_dtype))
    return Tensor(np.asarray(x))


def parameter(data) -> Tensor:
    return Tensor(np.asarray(data), requires_grad=True)


def _record(out: Tensor, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward_fn = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] > 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)

    def bw(g):
        return (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape))

    return _record(out, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)

    def bw(g):
        return (_unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape))

    return _record(out, (a, b), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """a @ b for 2-d weights and optionally batched left operands.

    A batched left operand against a 2-d weight runs as one flattened GEMM,
    which is much faster than numpy's per-item broadcast loop.
    """
    if b.data.ndim == 2 and a.data.ndim > 2:
        lead = a.data.shape[:-1]
        a2 = a.data.reshape(-1, a.data.shape[-1])
        out = Tensor((a2 @ b.data).reshape(*lead, b.data.shape[-1]))

        def bw(g):
            g2 = g.reshape(-1, g.shape[-1])
            return ((g2 @ b.data.T).reshape(a.data.shape), a2.T @ g2)

        return _record(out, (a, b), bw)

    out = Tensor(np.matmul(a.data, b.data))

    def bw(g):
        ga = np.matmul(g, b.data.swapaxes(-1, -2))
        gb = np.matmul(a.data.swapaxes(-1, -2), g)
        return (_unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape))

    return _record(out, (a, b), bw)


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims))

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, x.data.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.data.shape).copy(),)

    return _record(out, (x,), bw)


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.data.shape[a] for a in np.atleast_1d(axis)])
    return tsum(x, axis=axis, keepdims=keepdims) * float(1.0 / n)


def tmax(x: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    """Max over one axis; gradient flows to the first maximal entry."""
    out = Tensor(x.data.max(axis=axis, keepdims=keepdims))

    def bw(g):
        expanded = out.data if keepdims else np.expand_dims(out.data, axis)
        gexp = g if keepdims else np.expand_dims(g, axis)
        hit = x.data == expanded
        first = np.cumsum(hit, axis=axis) == 1
        return (np.where(hit & first, gexp, 0.0),)

    return _record(out, (x,), bw)


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape))

    def bw(g):
        return (g.reshape(x.data.shape),)

    return _record(out, (x,), bw)


def transpose(x: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    out = Tensor(np.transpose(x.data, axes))

    def bw(g):
        return (np.transpose(g, inv),)

    return _record(out, (x,), bw)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(out, tensors, bw)


def cos(x: Tensor) -> Tensor:
    out = Tensor(np.cos(x.data))

    def bw(g):
        return (-np.sin(x.data) * g,)

    return _record(out, (x,), bw)


def sin(x: Tensor) -> Tensor:
    out = Tensor(np.sin(x.data))

    def bw(g):
        return (np.cos(x.data) * g,)

    return _record(out, (x,), bw)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out = Tensor(y)

    def bw(g):
        return ((1.0 - y * y) * g,)

    return _record(out, (x,), bw)


def pow_const(x: Tensor, p: float) -> Tensor:
    out = Tensor(x.data**p)

    def bw(g):
        return (p * x.data ** (p - 1.0) * g,)

    return _record(out, (x,), bw)


def build_inverse_table(idx: np.ndarray, n_src: int, drop_from: int | None = None) -> np.ndarray:
    """Occurrence table for :func:`take_cols` backward.

    Row e lists the flat positions of ``idx`` equal to e, padded with the
    sentinel ``len(idx)``.  Columns >= ``drop_from`` (e.g. zero-padding rows)
    get no entries; their gradient is discarded.
    """
    idx = np.asarray(idx).ravel()
    keep = np.ones(len(idx), dtype=bool) if drop_from is None else idx < drop_from
    positions = np.nonzero(keep)[0]
    cols = idx[positions]
    counts = np.bincount(cols, minlength=n_src)
    width = int(counts.max()) if len(cols) else 0
    table = np.full((n_src, max(width, 1)), len(idx), dtype=np.int64)
    order = np.argsort(cols, kind="stable")
    starts = np.zeros(n_src + 1, dtype=np.int64)
    starts[1:] = np.cumsum(counts)
    slot = np.arange(len(cols)) - starts[cols[order]]
    table[cols[order], slot] = positions[order]
    return table


def narrow(x: Tensor, start: int, length: int) -> Tensor:
    """Contiguous column slice of a (B, E) tensor; forward is a view."""
    out = Tensor(x.data[:, start : start + length])

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[:, start : start + length] = g
        return (gx,)

    return _record(out, (x,), bw)


def take_cols(x: Tensor, idx: np.ndarray, inverse: np.ndarray | None = None) -> Tensor:
    """Gather columns of a (B, E) tensor: out[:, f] = x[:, idx[f]].

    ``inverse`` is the precomputed occurrence table from
    :func:`build_inverse_table`; without it the backward pass falls back to
    ``np.add.at`` (correct but slow).
    """
    out = Tensor(x.data[:, idx])

    def bw(g):
        gx = np.zeros_like(x.data)
        if inverse is not None:
            gpad = np.concatenate([g, np.zeros((g.shape[0], 1), dtype=g.dtype)], axis=1)
            for o in range(inverse.shape[1]):
                gx += gpad[:, inverse[:, o]]
        else:
            np.add.at(gx, (slice(None), idx), g)
        return (gx,)

    return _record(out, (x,), bw)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of integer labels under softmax logits (B, n_classes)."""
    labels = np.asarray(labels)
    if logits.data.ndim != 2 or labels.shape != (logits.data.shape[0],):
        raise ValueError("expected (B, n_classes) logits and (B,) integer labels")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    ez = np.exp(z)
    probs = ez / ez.sum(axis=1, keepdims=True)
    batch = np.arange(len(labels))
    losses = np.log(ez.sum(axis=1)) - z[batch, labels]
    out = Tensor(np.asarray(losses.mean()))

    def bw(g):
        gl = probs.copy()
        gl[batch, labels] -= 1.0
        return (gl * (g / len(labels)),)

    return _record(out, (logits,), bw)


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every requires-grad leaf reachable from ``loss``."""
    if loss.data.size != 1:
        raise ValueError("backward requires a scalar loss")
    if loss._consumed:
        raise RuntimeError("backward was already called on this graph; rebuild the forward pass")

    topo: list[Tensor] = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    # children must run before parents; sort by creation order for determinism
    topo.sort(key=lambda t: t._order, reverse=True)

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in topo:
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward_fn is None:
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            continue
        parent_grads = node._backward_fn(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            if id(p) in grads:
                grads[id(p)] += pg
            else:
                grads[id(p)] = pg
        node._parents = ()
        node._backward_fn = None
        node._consumed = True
    loss._consumed = True


class Adam:
    """Standard Adam; a missing gradient is treated as exactly zero."""

    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1**self.t)
            vhat = v / (1 - b2**self.t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


_MAGIC = b"SEQV"


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    """Flat little-endian blob with a JSON header of names, shapes, dtypes, offsets."""
    entries = {}
    payload = bytearray()
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"))  # tobytes() emits C order
        entries[name] = {
            "shape": list(arr.shape),
            "dtype": arr.dtype.name,
            "offset": len(payload),
            "nbytes": le.nbytes,
        }
        payload.extend(le.tobytes())
    header = json.dumps({"format": "softequiv-checkpoint", "version": 1, "tensors": entries}).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(bytes(payload))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise ValueError(f"{path} is not a checkpoint file")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode())
        payload = f.read()
    out = {}
    for name, meta in header["tensors"].items():
        dtype = np.dtype(meta["dtype"]).newbyteorder("<")
        count = int(np.prod(meta["shape"], dtype=np.int64)) if meta["shape"] else 1
        arr = np.frombuffer(payload, dtype=dtype, count=count, offset=meta["offset"])
        out[name] = arr.reshape(meta["shape"]).astype(np.dtype(meta["dtype"]))
    return out
