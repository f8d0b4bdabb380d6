"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the pure-Python
twins are imported.  Set ``GDGR_PURE_PYTHON=1`` to force the fallback.
"""

import os

from gdgr import _kernels_py

if os.environ.get("GDGR_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from gdgr import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"

qlearn_grid = _impl.qlearn_grid
grid_value_iteration = _impl.grid_value_iteration
maze_step = _impl.maze_step

__all__ = ["BACKEND", "qlearn_grid", "grid_value_iteration", "maze_step"]
