"""Private multiprecision context shared by the exact (segment-wise) code paths.

The package never touches mpmath's global ``mp`` object; all arbitrary
exponent arithmetic goes through :data:`MP`.
"""
from functools import lru_cache

import mpmath
import numpy as np

MP = mpmath.MPContext()
MP.dps = 40

mpf = MP.mpf
ZERO = MP.mpf(0)
ONE = MP.mpf(1)


@lru_cache(maxsize=None)
def gl_rule(n):
    """Gauss-Legendre nodes/weights on [0, 1] as mpf tuples."""
    x, w = np.polynomial.legendre.leggauss(n)
    # refine the float nodes with a few Newton steps at working precision
    nodes, weights = [], []
    for xi in x:
        t = MP.mpf(xi)
        for _ in range(4):
            p, dp = MP.legendre(n, t), _dlegendre(n, t)
            t -= p / dp
        dp = _dlegendre(n, t)
        wi = 2 / ((1 - t * t) * dp * dp)
        nodes.append((t + 1) / 2)
        weights.append(wi / 2)
    return tuple(nodes), tuple(weights)


def _dlegendre(n, t):
    return n * (t * MP.legendre(n, t) - MP.legendre(n - 1, t)) / (t * t - 1)


def gl_integrate(f, a, b, n):
    """Integrate ``f`` over [a, b] with an n-point Gauss-Legendre rule."""
    if b <= a:
        return ZERO
    nodes, weights = gl_rule(n)
    h = b - a
    return h * MP.fsum(w * f(a + h * t) for t, w in zip(nodes, weights))


def dps_for(*xs, extra=30):
    """Working precision that resolves unit-scale windows at the given abscissae."""
    top = ONE
    for x in xs:
        x = abs(MP.mpf(x))
        if MP.isfinite(x) and x > top:
            top = x
    digits = int(MP.log10(top)) if top > 1 else 0
    return max(MP.dps, digits + extra)


def to_float(v):
    """mpf -> float, flushing values below the double range to 0.0."""
    return float(v)
