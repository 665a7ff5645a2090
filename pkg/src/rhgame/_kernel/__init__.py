"""Backend selection for the better-response sweep.

The compiled extension is used when it was built; otherwise the numpy
implementation. Set ``RHGAME_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _sweep_py

try:
    from . import _sweep as _sweep_c
except ImportError:  # extension not built
    _sweep_c = None

BACKENDS = {"python": _sweep_py.sweep}
if _sweep_c is not None:
    BACKENDS["cython"] = _sweep_c.sweep

if _sweep_c is not None and os.environ.get("RHGAME_PURE_PYTHON", "") in ("", "0"):
    BACKEND = "cython"
else:
    BACKEND = "python"


def get_sweep(name: str | None = None):
    """Return the sweep function for ``name`` (default: the import-time choice)."""
    name = name or BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"sweep backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
