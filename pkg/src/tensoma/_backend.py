"""Select the kernel implementation at import time.

The compiled extension (``tensoma._kernels``) is preferred when it built;
otherwise, or when ``TENSOMA_PURE_PYTHON=1`` is set, the NumPy fallback is
used. ``BACKEND`` names the active choice ("compiled" or "numpy").
"""

import os

from . import _kernels_np

if os.environ.get("TENSOMA_PURE_PYTHON", "0") not in ("", "0"):
    _impl = _kernels_np
    BACKEND = "numpy"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_np
        BACKEND = "numpy"

khatri_rao = _impl.khatri_rao
cp_reconstruct = _impl.cp_reconstruct
sumsq = _impl.sumsq
had3_sum = _impl.had3_sum
