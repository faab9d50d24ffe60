"""Central finite differences, used both as the Jacobian oracle in tests
and as the production Jacobian for the camera measurement models."""

from __future__ import annotations

import numpy as np

DEFAULT_STEP = 1e-6


def central_difference_jacobian(f, x, step: float = DEFAULT_STEP) -> np.ndarray:
    """Jacobian of ``f`` at ``x`` by symmetric differences, one column per input.

    ``f`` maps an (n,) vector to an (m,) vector; the result is (m, n).
    """
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(f(x), dtype=float))
    J = np.empty((f0.size, x.size))
    for j in range(x.size):
        dx = np.zeros_like(x)
        dx[j] = step
        hi = np.atleast_1d(np.asarray(f(x + dx), dtype=float))
        lo = np.atleast_1d(np.asarray(f(x - dx), dtype=float))
        J[:, j] = (hi - lo) / (2.0 * step)
    return J
