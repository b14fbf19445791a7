"""Kernel backend selection.

Imports the compiled Cython kernels when available, otherwise the numpy
fallback. Set ``MIXCAST_PURE_PYTHON=1`` to force the fallback (used by the
parity tests and the benchmark).
"""

import os

if os.environ.get("MIXCAST_PURE_PYTHON"):
    from . import fallback as kernels

    HAVE_COMPILED = False
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]

        HAVE_COMPILED = True
    except ImportError:
        from . import fallback as kernels

        HAVE_COMPILED = False

gelu_fwd = kernels.gelu_fwd
gelu_bwd = kernels.gelu_bwd
softmax_rows = kernels.softmax_rows
layernorm_rows = kernels.layernorm_rows
