"""Kernel backend selection.

Two interchangeable implementations: the GEMM path (``numpy_backend``,
im2col + BLAS matmul) and the compiled direct-convolution extension
(``_fastkern``). ``auto`` (the default) selects the GEMM path: BLAS's
vectorized microkernels win at every shape in benchmarks/kernel_bench.py,
typically by an order of magnitude. The compiled path remains selectable
(``GRADSYNTH_KERNELS=fast`` or ``set_backend``) as an independent
cross-check and for environments without a tuned BLAS.

The two backends agree to float rounding but not bit-for-bit (different
accumulation order), so run manifests record which backend produced an
output and replays pin it via `set_backend`.
"""

import os

from gradsynth.errors import GradsynthError

from . import numpy_backend

try:
    from . import _fastkern
except ImportError:
    _fastkern = None

_active = None


def available_backends():
    names = ["numpy"]
    if _fastkern is not None:
        names.insert(0, "fast")
    return names


def set_backend(name):
    """Select the kernel backend by name ('fast', 'numpy' or 'auto')."""
    global _active, conv2d_forward, conv2d_backward_input, conv2d_backward_weight
    global maxpool2d_forward, maxpool2d_backward
    if name == "auto":
        name = "numpy"
    if name == "fast":
        if _fastkern is None:
            raise GradsynthError("compiled kernel backend requested but not built")
        impl = _fastkern
    elif name == "numpy":
        impl = numpy_backend
    else:
        raise GradsynthError(f"unknown kernel backend {name!r}")
    _active = name
    conv2d_forward = impl.conv2d_forward
    conv2d_backward_input = impl.conv2d_backward_input
    conv2d_backward_weight = impl.conv2d_backward_weight
    maxpool2d_forward = impl.maxpool2d_forward
    maxpool2d_backward = impl.maxpool2d_backward


def backend_name():
    return _active


set_backend(os.environ.get("GRADSYNTH_KERNELS", "auto"))
