"""Pure NumPy twins of the compiled reduction kernels.

np.cumsum accumulates strictly left to right in C, so taking its last
element reproduces the compiled loops bit for bit (np.sum would not:
it reduces pairwise). Slower than the compiled path because of the
temporaries, but always available.
"""

import numpy as np


def strict_dot(a, b):
    """Left-to-right dot product of two equal-length vectors."""
    return float(np.cumsum(a * b)[-1])


def strict_sqdist(a, b):
    """Left-to-right sum of squared differences."""
    d = a - b
    return float(np.cumsum(d * d)[-1])


def strict_accumulate(out, coeff, vec):
    """out += coeff * vec, elementwise, in place."""
    out += coeff * vec
