"""Kernel selection.

The compiled extension is used when importable; set ``FDTDSENS_PURE=1`` to
force the numpy implementation. ``BACKEND`` names the active one.
"""

import os

from . import _kernels_py

if os.environ.get("FDTDSENS_PURE", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "numpy"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "numpy"

update_h_3d = _impl.update_h_3d
update_e_3d = _impl.update_e_3d
update_h_1d = _impl.update_h_1d
update_e_1d = _impl.update_e_1d
