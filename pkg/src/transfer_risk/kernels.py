"""Backend selection for the hot kernels.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy fallback in ``_kernels_py`` is used.  Setting the environment variable
``TRANSFER_RISK_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("TRANSFER_RISK_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

jacobi_eigh = _impl.jacobi_eigh
chen_product = _impl.chen_product
signature_from_increments = _impl.signature_from_increments
project_simplex = _impl.project_simplex
penalized_sharpe = _impl.penalized_sharpe
pga_maximize = _impl.pga_maximize

__all__ = [
    "BACKEND",
    "jacobi_eigh",
    "chen_product",
    "signature_from_increments",
    "project_simplex",
    "penalized_sharpe",
    "pga_maximize",
]
