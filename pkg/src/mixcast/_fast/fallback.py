"""Pure-numpy reference kernels.

Same contracts as the compiled extension in ``_kernels.pyx``: all inputs are
C-contiguous float64 arrays, all functions allocate and return new arrays.
"""

import numpy as np
from scipy.special import erf

INV_SQRT2 = 0.7071067811865476
INV_SQRT_2PI = 0.3989422804014327


def gelu_fwd(x):
    return 0.5 * x * (1.0 + erf(x * INV_SQRT2))


def gelu_bwd(x, dy):
    cdf = 0.5 * (1.0 + erf(x * INV_SQRT2))
    pdf = INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return dy * (cdf + x * pdf)


def softmax_rows(x):
    """Row-wise softmax of a 2-D array."""
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def layernorm_rows(x, eps):
    """Row-wise normalization of a 2-D array.

    Returns (y, mean, rstd) where y = (x - mean) * rstd and
    rstd = 1/sqrt(popvar + eps); mean/rstd are kept for the backward pass.
    """
    mean = x.mean(axis=1)
    var = x.var(axis=1)
    rstd = 1.0 / np.sqrt(var + eps)
    y = (x - mean[:, None]) * rstd[:, None]
    return y, mean, rstd
