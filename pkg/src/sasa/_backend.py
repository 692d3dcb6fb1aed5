"""Kernel backend selection.

The compiled Cython kernel is preferred; the pure-NumPy twin is the
fallback.  Set SASA_BACKEND=python (or =compiled) to force a choice;
forcing 'compiled' raises if the extension is missing.
"""

from __future__ import annotations

import os

_forced = os.environ.get("SASA_BACKEND", "").strip().lower()

if _forced in ("python", "py"):
    from . import _kernels_py as _impl
    BACKEND = "python"
elif _forced in ("", "compiled", "c"):
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        if _forced:
            raise
        from . import _kernels_py as _impl
        BACKEND = "python"
else:
    raise RuntimeError(f"SASA_BACKEND={_forced!r} not recognised "
                       "(use 'compiled' or 'python')")

run_admm = _impl.run_admm
STATUS_CONVERGED = _impl.STATUS_CONVERGED
STATUS_MAXITER = _impl.STATUS_MAXITER
STATUS_DIVERGED = _impl.STATUS_DIVERGED


def backend_name() -> str:
    """Name of the kernel implementation in use."""
    return BACKEND
