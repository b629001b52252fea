"""Reverse-mode autodiff over dense float tensors.

A Tensor wraps a NumPy array plus the bookkeeping needed to run backward:
each operation attaches its parents and a closure computing parent
gradients from the output gradient. ``backward`` on a scalar walks the
recorded graph once in reverse topological order and accumulates exact
gradients into every ``requires_grad`` leaf; fan-out adds.

Compute dtype is float32. A float64 mode exists for gradient-check tests
only (see :func:`precision`); it changes the dtype of newly created
tensors, and operations follow their inputs' dtype.

Non-finite values are an error, never silently propagated: every op
output and every leaf gradient is checked and raises NonFiniteError.
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np

from gradsynth.errors import GraphError, NonFiniteError, ShapeError

_state = threading.local()


def _tl():
    if not hasattr(_state, "grad_enabled"):
        _state.grad_enabled = True
        _state.dtype = np.float32
    return _state


def default_dtype():
    return _tl().dtype


def is_grad_enabled():
    return _tl().grad_enabled


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (inference / projection arithmetic)."""
    st = _tl()
    prev = st.grad_enabled
    st.grad_enabled = False
    try:
        yield
    finally:
        st.grad_enabled = prev


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the creation dtype ('float32' or 'float64')."""
    dt = np.dtype(dtype)
    if dt not in (np.float32, np.float64):
        raise ShapeError(f"unsupported compute dtype {dtype}")
    st = _tl()
    prev = st.dtype
    st.dtype = dt.type
    try:
        yield
    finally:
        st.dtype = prev


def ensure_finite(arr, what, step=None):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {what}", step=step)


class Tensor:
    """Dense float array participating in the differentiation graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_bwd", "_released")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(default_dtype())
        self.data = arr
        ensure_finite(arr, "tensor data")
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._bwd = None
        self._released = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def backward(self):
        backward(self)


def record(out, parents, bwd):
    """Attach graph edges to an op output if recording is active.

    ``bwd(gout) -> tuple`` must return one gradient (or None) per parent.
    """
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._bwd = bwd
    return out


def backward(loss):
    """Run reverse-mode differentiation from a finite scalar.

    Every ``requires_grad`` leaf reachable from ``loss`` accumulates its
    gradient into ``.grad``. The traversal visits each node exactly once;
    the graph is released afterwards, so a second backward through the
    same nodes raises GraphError.
    """
    if loss.size != 1:
        raise GraphError(f"backward requires a scalar loss, got shape {loss.shape}")
    ensure_finite(loss.data, "loss")
    if loss._released:
        raise GraphError("backward called twice on the same graph; re-run the forward pass")

    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited and p._bwd is not None:
                stack.append((p, False))
            elif id(p) not in visited and p.requires_grad:
                # leaf: include so its grad slot gets filled
                visited.add(id(p))
                topo.append(p)

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._bwd is not None:
            if node._released:
                raise GraphError("graph node already consumed; re-run the forward pass")
            parent_grads = node._bwd(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                prev = grads.get(id(p))
                grads[id(p)] = pg if prev is None else prev + pg
            node._released = True
            node._bwd = None
        else:
            # requires_grad leaf
            node.grad = g if node.grad is None else node.grad + g
            ensure_finite(node.grad, "gradient")
    loss._released = True
