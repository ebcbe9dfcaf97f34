"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise, or when
``EPDP_PURE_PYTHON=1`` is set, the numpy fallback is. :func:`use_backend`
switches at runtime (benchmarks and equivalence tests use it).
"""

import contextlib
import os

from epdp import _pykernels

try:
    from epdp import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels

_impl = _pykernels if os.environ.get("EPDP_PURE_PYTHON") == "1" or _ckernels is None else _ckernels


def backend() -> str:
    return "cython" if _impl is _ckernels and _ckernels is not None else "python"


def set_backend(name: str) -> None:
    global _impl
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}")
    _impl = BACKENDS[name]


@contextlib.contextmanager
def use_backend(name: str):
    previous = backend()
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def obs_scan(values, counts, sensitivity):
    return _impl.obs_scan(values, counts, sensitivity)


def sample_keep(values, budgets, threshold, uniforms):
    return _impl.sample_keep(values, budgets, threshold, uniforms)


def sampled_histogram(values, budgets, threshold, uniforms, d):
    return _impl.sampled_histogram(values, budgets, threshold, uniforms, d)


def window_sums(dense, windows):
    return _impl.window_sums(dense, windows)


def rr_estimate(values, budgets, u_keep, u_other, d):
    return _impl.rr_estimate(values, budgets, u_keep, u_other, d)
