"""Small quadrature helpers used by several modules.

Fibonacci sphere points for sensor layouts and surface integrals, composite
Simpson weights for time integrals, Chebyshev nodes for fit grids.
"""

import numpy as np


def fibonacci_sphere(n: int) -> np.ndarray:
    """Return n quasi-uniform unit vectors, shape (n, 3).

    Equal-weight quadrature: integral over the unit sphere of g is
    approximately (4*pi/n) * sum g(d_i).
    """
    if n < 1:
        raise ValueError("need at least one point")
    i = np.arange(n, dtype=float) + 0.5
    polar = np.arccos(1.0 - 2.0 * i / n)
    azim = 2.0 * np.pi * i / ((1.0 + np.sqrt(5.0)) / 2.0)
    return np.column_stack(
        [
            np.cos(azim) * np.sin(polar),
            np.sin(azim) * np.sin(polar),
            np.cos(polar),
        ]
    )


def simpson_weights(nsamples: int, dt: float) -> np.ndarray:
    """Composite Simpson weights for nsamples equispaced values.

    For an even sample count (odd interval count) the last interval is closed
    with a trapezoid; callers that need pure Simpson should pass an odd count.
    """
    if nsamples < 2:
        raise ValueError("need at least two samples")
    w = np.zeros(nsamples)
    # largest odd sample count covered by Simpson panels
    ns = nsamples if nsamples % 2 == 1 else nsamples - 1
    if ns >= 3:
        w[0:ns:2] += 2.0 / 3.0
        w[1:ns:2] += 4.0 / 3.0
        w[0] = 1.0 / 3.0
        w[ns - 1] = 1.0 / 3.0
    else:
        ns = 1
    if ns < nsamples:  # trailing trapezoid panel
        w[ns - 1] += 0.5
        w[ns] += 0.5
    return w * dt


def chebyshev_nodes(a: float, b: float, n: int) -> np.ndarray:
    """n Chebyshev points mapped to (a, b), ascending."""
    k = np.arange(n)
    x = np.cos((2 * k + 1) * np.pi / (2 * n))
    return np.sort(0.5 * (a + b) + 0.5 * (b - a) * x)


def pairwise_sum(values: np.ndarray) -> float:
    """Deterministic pairwise reduction (numpy's sum is pairwise already)."""
    return float(np.sum(values))
