"""Central finite-difference gradient checking.

The checker perturbs every input coordinate by +/-h, evaluates a scalar
function twice per coordinate, and compares (f(x+h) - f(x-h)) / 2h
against the reverse-mode gradient. The error is reported relative to the
larger of the two gradients' infinity norms, so tensors whose gradients
are uniformly tiny do not produce inflated ratios.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, backward, default_dtype


def numeric_gradient(f, arrays, index, h=None):
    """Central-difference gradient of scalar f(*arrays) wrt arrays[index].

    ``f`` takes plain ndarrays and returns a python float. The input is
    copied, so ``f`` may be a closure over live tensors.
    """
    x = np.array(arrays[index], dtype=np.float64)
    if h is None:
        h = 1e-3 if default_dtype() == np.float32 else 1e-6
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    work = [np.array(a, dtype=np.float64) for a in arrays]
    for i in range(flat.size):
        orig = flat[i]
        work[index].reshape(-1)[i] = orig + h
        fp = float(f(*work))
        work[index].reshape(-1)[i] = orig - h
        fm = float(f(*work))
        work[index].reshape(-1)[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(a, b, tiny=1e-8):
    """max|a-b| scaled by the larger infinity norm of the two."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    num = float(np.max(np.abs(a - b))) if a.size else 0.0
    den = max(float(np.max(np.abs(a))) if a.size else 0.0, float(np.max(np.abs(b))) if b.size else 0.0, tiny)
    return num / den


def check_gradients(build, inputs, h=None, tiny=1e-8):
    """Compare reverse-mode gradients of a scalar graph against the oracle.

    ``build`` maps a tuple of Tensors to a scalar Tensor. ``inputs`` is a
    list of ndarrays; every one is treated as differentiable. Returns the
    max relative error across all inputs.
    """
    tensors = [Tensor(np.array(a), requires_grad=True) for a in inputs]
    loss = build(*tensors)
    backward(loss)

    def f(*arrays):
        ts = [Tensor(np.array(a)) for a in arrays]
        return float(build(*ts).item())

    worst = 0.0
    for i, t in enumerate(tensors):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numeric_gradient(f, [t.data for t in tensors], i, h=h)
        worst = max(worst, relative_error(analytic, numeric, tiny=tiny))
    return worst
