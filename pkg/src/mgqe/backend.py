"""Kernel backend selection: compiled extension if present, NumPy otherwise.

Set ``MGQE_FORCE_PYTHON=1`` to force the NumPy fallback even when the
extension is built (used by the parity tests and the benchmark).
"""

import os

from . import _core_py

try:
    from . import _core as _native
except ImportError:  # extension not built
    _native = None

_FORCED = os.environ.get("MGQE_FORCE_PYTHON", "") not in ("", "0")
_impl = _core_py if (_native is None or _FORCED) else _native


def backend_name() -> str:
    return "python" if _impl is _core_py else "native"


def native_available() -> bool:
    return _native is not None


def get_impl(name: str):
    """Return a specific backend module by name ('native' or 'python')."""
    if name == "python":
        return _core_py
    if name == "native":
        if _native is None:
            raise RuntimeError("native backend requested but mgqe._core is not built")
        return _native
    raise ValueError(f"unknown backend {name!r}")


def nearest_centroids(vecs, centroids, kmax, out):
    _impl.nearest_centroids(vecs, centroids, kmax, out)


def scatter_codebook_grads(codes, grads, out):
    _impl.scatter_codebook_grads(codes, grads, out)
