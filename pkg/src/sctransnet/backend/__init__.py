"""Kernel backend selection.

Two interchangeable implementations of the hot kernels exist:

* ``_kernels`` - Cython extension, compiled at install time;
* ``numpy_impl`` - vectorized numpy fallback.

The compiled backend is preferred when importable.  Set the environment
variable ``SCTRANSNET_BACKEND`` to ``python`` or ``compiled`` to force a
choice (forcing ``compiled`` fails loudly if the extension is missing).
``use_backend`` switches at runtime, which the benchmark and the backend
equivalence tests rely on.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import numpy_impl

_FUNCTIONS = (
    "depthwise_conv2d",
    "depthwise_conv2d_grad_input",
    "depthwise_conv2d_grad_weight",
    "maxpool2x2",
    "maxpool2x2_backward",
    "conv1d_channel",
    "conv1d_channel_grad",
)

try:
    from . import _kernels  # type: ignore[attr-defined]
except ImportError:
    _kernels = None

kernels: ModuleType = numpy_impl


def available_backends() -> list[str]:
    names = ["python"]
    if _kernels is not None:
        names.append("compiled")
    return names


def use_backend(name: str) -> None:
    global kernels
    if name == "python":
        kernels = numpy_impl
    elif name == "compiled":
        if _kernels is None:
            raise RuntimeError(
                "compiled backend requested but the _kernels extension is not "
                "built; install the package (pip install -e . --no-build-isolation) "
                "or use SCTRANSNET_BACKEND=python")
        kernels = _kernels
    else:
        raise ValueError(f"unknown backend {name!r}; expected 'python' or 'compiled'")


def active_backend() -> str:
    return kernels.NAME


def get_impl(name: str) -> ModuleType:
    """Return a backend module without switching the active one."""
    if name == "python":
        return numpy_impl
    if name == "compiled":
        if _kernels is None:
            raise RuntimeError("compiled backend is not built")
        return _kernels
    raise ValueError(f"unknown backend {name!r}")


_requested = os.environ.get("SCTRANSNET_BACKEND")
if _requested:
    use_backend(_requested)
elif _kernels is not None:
    use_backend("compiled")
