"""Backend selection for the hot solver kernel.

The Cython extension is optional: if it is missing (or the environment sets
PHASETRACK_FORCE_PYTHON=1) the numpy fallback is used.  Both implement the
same contract; benchmarks/bench_kernels.py compares them.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("PHASETRACK_FORCE_PYTHON") != "1":
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]

        _impl = _compiled
        BACKEND = "compiled"
    except ImportError:
        pass

cg_kernel = _impl.cg_kernel


def solver_backend() -> str:
    """Name of the kernel backend selected at import ('compiled' or 'python')."""
    return BACKEND


def available_backends() -> dict:
    """All kernel implementations importable right now, keyed by name."""
    backends = {"python": _kernels_py.cg_kernel}
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]

        backends["compiled"] = _compiled.cg_kernel
    except ImportError:
        pass
    return backends
