"""Kernel backend selection: compiled extension when built, pure Python otherwise.

Override with MONOSEQ_BACKEND=python or MONOSEQ_BACKEND=compiled.
"""

from __future__ import annotations

import os

from . import pykernels

try:
    from . import _kernels  # type: ignore[attr-defined]
except ImportError:
    _kernels = None

_BACKENDS = {"python": pykernels}
if _kernels is not None:
    _BACKENDS["compiled"] = _kernels


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def get_backend(name: str | None = None):
    """Resolve a kernel backend module by name (None = env var or best)."""
    if name is None:
        name = os.environ.get("MONOSEQ_BACKEND")
    if name is None:
        name = "compiled" if "compiled" in _BACKENDS else "python"
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"unknown kernel backend {name!r}; available: {available_backends()}"
        ) from None


def backend_name(module) -> str:
    for k, v in _BACKENDS.items():
        if v is module:
            return k
    return module.__name__
