"""Shared numerical oracles for the test suite."""

import numpy as np

from softequiv.autodiff import Tensor, backward


def finite_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of one array."""
    g = np.zeros_like(x, dtype=float)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


def check_gradient(build, x: np.ndarray, rel_tol: float = 1e-6, h: float = 1e-5):
    """Compare analytic gradients of ``build`` (Tensor -> scalar Tensor) to FD.

    Returns the max relative error over entries, using an absolute floor so
    near-zero gradients compare on an absolute scale.
    """
    t = Tensor(x.copy(), requires_grad=True)
    loss = build(t)
    backward(loss)
    analytic = t.grad

    def scalar(arr):
        return float(build(Tensor(arr)).data)

    numeric = finite_difference(scalar, x.copy(), h=h)
    denom = np.maximum(np.abs(numeric), 1e-8)
    rel = np.max(np.abs(analytic - numeric) / denom)
    assert rel < rel_tol, f"gradient mismatch: max rel err {rel:.3e}"
    return rel
