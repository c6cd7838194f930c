"""Backend selection for the conv/pool kernels.

The compiled extension is preferred when importable; otherwise the numpy
fallback is used. DPAN_BACKEND=cython|numpy forces the choice (forcing
cython without the built extension raises ImportError).
"""

import os

_forced = os.environ.get("DPAN_BACKEND", "").lower() or None
if _forced not in (None, "cython", "numpy"):
    raise ImportError(f"DPAN_BACKEND must be 'cython' or 'numpy', not {_forced!r}")

if _forced == "numpy":
    from ._kernels_numpy import conv3x3_relu, maxpool2x2

    BACKEND = "numpy"
elif _forced == "cython":
    from ._convkernels import conv3x3_relu, maxpool2x2

    BACKEND = "cython"
else:
    try:
        from ._convkernels import conv3x3_relu, maxpool2x2

        BACKEND = "cython"
    except ImportError:
        from ._kernels_numpy import conv3x3_relu, maxpool2x2

        BACKEND = "numpy"

__all__ = ["conv3x3_relu", "maxpool2x2", "BACKEND"]
