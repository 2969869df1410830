"""Hot kernels with a compiled implementation and a pure-Python fallback.

The compiled module ``ranmaze._ckernels`` is used when it imports; set
``RANMAZE_PURE_PYTHON=1`` to force the fallback. Both paths return identical
results; ``BACKEND`` names the one in use.
"""
from __future__ import annotations

import os

from . import _pykernels

_c = None
if not os.environ.get("RANMAZE_PURE_PYTHON"):
    try:
        from . import _ckernels as _c  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _c = None

BACKEND = "cython" if _c is not None else "python"

aggregate = _pykernels.aggregate
joint_search = _c.joint_search if _c is not None else _pykernels.joint_search
enumerate_walks = _c.enumerate_walks if _c is not None else _pykernels.enumerate_walks
