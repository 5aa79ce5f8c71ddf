"""Kernel backend selection.

The compiled extension is used when built; otherwise the pure-Python
fallback takes over transparently. Set MAB_PURE_KERNELS=1 to force the pure
backend. Both backends produce bit-identical results for the same inputs.
"""

import os

from metabench import _kernels_py

if os.environ.get("MAB_PURE_KERNELS"):
    _impl = _kernels_py
else:
    try:
        from metabench import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

BACKEND: str = _impl.BACKEND
fnv1a64 = _impl.fnv1a64
lda_gibbs = _impl.lda_gibbs
