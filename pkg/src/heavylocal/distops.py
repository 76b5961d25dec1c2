"""Transforms of tail functions: powers, shifts, integrated tails, Esscher
tilts and the ``V1`` construction, plus a light exponential family used as a
closed-form reference.

All objects share the duck-typed interface consumed by
:mod:`heavylocal.convolve`: ``tail_mp``, ``density_mp``, ``local_prob_mp``,
``breaks``, ``tail_array``, ``mean_mp`` and a few capability flags.
"""
from __future__ import annotations

import json
import math

import numpy as np

from ._mp import MP, ONE, ZERO, dps_for, mpf
from .tailfn import Form, PiecewiseTail


class DivergenceError(ArithmeticError):
    """A normalising integral (mean or moment generating function) diverges."""


class Dist:
    """Default implementations shared by every distribution object."""

    poly_degree = None  # degree of the tail as a polynomial on each cell, None if not polynomial
    has_sqrt = False
    support_lo = 0.0
    defective = False

    def tail(self, x):
        return float(self.tail_mp(x))

    def log_tail(self, x):
        return float(MP.log(self.tail_mp(x)))

    def density(self, x):
        return float(self.density_mp(x))

    def local_prob_mp(self, x, T):
        if not T > 0:
            raise ValueError("window length T must be positive")
        with MP.workdps(dps_for(x, T)):
            v = self.tail_mp(x) - self.tail_mp(mpf(x) + T)
        return +v

    def local_prob(self, x, T):
        return float(self.local_prob_mp(x, T))

    def tail_array(self, xs):
        return np.array([self.tail(float(x)) for x in np.ravel(xs)]).reshape(np.shape(xs))

    def mean(self):
        return float(self.mean_mp())

    def mean_pos(self):
        return float(self.mean_pos_mp())

    def mean_pos_mp(self):
        return self.mean_mp()

    def breaks(self, lo, hi):
        return []

    def is_sqrt_at(self, x):
        return False

    def transform_stack(self):
        return []

    def to_dict(self):
        base = getattr(self, "base", None)
        d = dict(base.to_dict()) if base is not None else {}
        d["transforms"] = list(d.get("transforms", [])) + self.transform_stack()
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def __reduce__(self):
        # mp numbers belong to a private context and do not pickle; rebuild from the document
        return (from_dict, (self.to_dict(),))


class Exponential(Dist):
    """Exponential law with the given rate: the closed-form reference family."""

    poly_degree = None

    def __init__(self, rate=1.0):
        if not rate > 0:
            raise ValueError("rate must be positive")
        self.rate = float(rate)
        self._r = mpf(rate)

    def tail_mp(self, x):
        x = mpf(x)
        return ONE if x < 0 else MP.exp(-self._r * x)

    def density_mp(self, x):
        x = mpf(x)
        return ZERO if x < 0 else self._r * MP.exp(-self._r * x)

    def local_prob_mp(self, x, T):
        if not T > 0:
            raise ValueError("window length T must be positive")
        with MP.workdps(dps_for(x, T)):
            x = mpf(x)
            lo, hi = max(x, ZERO), x + T
            if hi <= 0:
                return ZERO
            return -MP.exp(-self._r * lo) * MP.expm1(-self._r * (hi - lo))

    def tail_array(self, xs):
        xs = np.asarray(xs, dtype=float)
        return np.where(xs < 0, 1.0, np.exp(-self.rate * np.maximum(xs, 0.0)))

    def upper_integral_mp(self, x):
        x = mpf(x)
        if x < 0:
            return -x + 1 / self._r
        return MP.exp(-self._r * x) / self._r

    def mean_mp(self):
        return 1 / self._r

    def sample(self, rng, size):
        return rng.exponential(1.0 / self.rate, size)

    def to_dict(self):
        return {"kind": "exp", "rate": self.rate, "transforms": []}

    def __repr__(self):
        return f"Exponential(rate={self.rate})"


class Power(Dist):
    """Tail ``Fbar ** m`` of a generic base."""

    def __init__(self, base, m):
        if not (int(m) == m and m >= 1):
            raise ValueError("m must be an integer >= 1")
        self.base, self.m = base, int(m)
        self.has_sqrt = base.has_sqrt
        self.poly_degree = None if base.poly_degree is None else base.poly_degree * self.m

    def tail_mp(self, x):
        return self.base.tail_mp(x) ** self.m

    def density_mp(self, x):
        return self.m * self.base.tail_mp(x) ** (self.m - 1) * self.base.density_mp(x)

    def local_prob_mp(self, x, T):
        A, B = self.base.tail_mp(x), self.base.tail_mp(mpf(x) + T)
        return self.base.local_prob_mp(x, T) * MP.fsum(A ** k * B ** (self.m - 1 - k) for k in range(self.m))

    def tail_array(self, xs):
        return self.base.tail_array(xs) ** self.m

    def breaks(self, lo, hi):
        return self.base.breaks(lo, hi)

    def mean_mp(self):
        return MP.quad(self.tail_mp, [0, MP.inf])

    def sample(self, rng, size):
        draws = np.stack([self.base.sample(rng, size) for _ in range(self.m)], axis=1)
        return draws.min(axis=1)

    def transform_stack(self):
        return [{"op": "power", "m": self.m}]


def power_tail(F, m):
    """Distribution with tail ``Fbar ** m``."""
    if m == 1:
        return F
    if isinstance(F, PiecewiseTail):
        return F.with_power(F.power * int(m))
    return Power(F, m)


class Shift(Dist):
    """Law of ``X - a``: tail evaluated at ``x + a``."""

    def __init__(self, base, a):
        self.base, self.a = base, float(a)
        self._a = mpf(a)
        self.has_sqrt = base.has_sqrt
        self.poly_degree = base.poly_degree
        self.support_lo = base.support_lo - self.a

    def tail_mp(self, x):
        return self.base.tail_mp(mpf(x) + self._a)

    def density_mp(self, x):
        return self.base.density_mp(mpf(x) + self._a)

    def local_prob_mp(self, x, T):
        return self.base.local_prob_mp(mpf(x) + self._a, T)

    def tail_array(self, xs):
        return self.base.tail_array(np.asarray(xs, dtype=float) + self.a)

    def breaks(self, lo, hi):
        return [b - self._a for b in self.base.breaks(lo + self._a, hi + self._a)]

    def mean_mp(self):
        return self.base.mean_mp() - self._a

    def sample(self, rng, size):
        return self.base.sample(rng, size) - self.a

    def transform_stack(self):
        return [{"op": "shift", "a": self.a}]


def shift(F, a):
    """Translate ``F`` to the law of ``X - a``."""
    if a == 0:
        return F
    if isinstance(F, PiecewiseTail):
        return F.with_shift(F.shift + a)
    return Shift(F, a)


def shift_to_satisfy_34(G, mean_target=None, margin=0.05, probes=None):
    """Shift ``G`` left until ``C_otimes(F) - 2 E X^+ < mu`` holds with a safety margin.

    ``F`` is the law of ``Y - a`` for ``Y ~ G`` and ``mu = -EX = a - EY``.  The
    gap ``D = C_otimes - 2 E X^+`` does not change under shifts of a
    long-tailed law, so it is estimated once on ``G`` (running sup of the
    star-integral ratio at the probe horizon, minus ``2 E G^+``).  The shift
    is the smallest ``a >= 0`` with ``D < (1 - margin) * mu``; a positive
    ``mean_target`` asks for ``mu >= mean_target`` as well.

    Returns
    -------
    F : distribution of ``Y - a``
    a : float
    info : dict
        ``D``, ``mu``, ``C_otimes`` and whether ``G`` already satisfied the
        condition.
    """
    from .classify import estimate_Cotimes, diverging

    if not 0 <= margin < 1:
        raise ValueError("margin must lie in [0, 1)")
    if G.support_lo < 0:
        raise ValueError("the base law must live on [0, inf); pass the unshifted law")
    lo, hi, s, _ = estimate_Cotimes(G, probes)
    lo, hi = float(lo), float(hi)
    if not np.isfinite(hi) or diverging(s):
        raise DivergenceError("C_otimes estimate diverges; condition cannot be met by shifting")
    ey = float(G.mean_mp())
    ey_pos = float(G.mean_pos_mp())
    D = hi - 2 * ey_pos
    mu0 = -ey
    need = max(D, 0.0) / (1 - margin)
    a = 0.0 if mu0 > need else need - mu0
    if mean_target is not None:
        if not mean_target > 0:
            raise ValueError("mean_target is the drift mu = -EX and must be positive")
        a = max(a, mean_target - mu0)
    mu = mu0 + a
    info = {"D": D, "C_otimes": hi, "C_otimes_lo": lo, "EY": ey, "mu": mu, "a": a,
            "already_satisfied": a == 0.0, "margin": margin, "condition": D < mu}
    return shift(G, a), a, info


class IntegratedTail(Dist):
    """Equilibrium law with density ``Fbar / EX`` on [0, inf)."""

    def __init__(self, base):
        if base.support_lo < 0:
            raise ValueError("integrated tail needs a base supported on [0, inf)")
        mu = base.mean_mp()
        if not (mu > 0 and MP.isfinite(mu)):
            raise DivergenceError("integrated tail needs 0 < EX < inf")
        self.base = base
        self._mu = mu
        self.mu = float(mu)
        self.has_sqrt = base.has_sqrt
        self.poly_degree = None if base.poly_degree is None else base.poly_degree + 1
        self._float_tables()

    def _float_tables(self):
        b = self.base
        if not isinstance(b, PiecewiseTail):
            return
        segs = [s for s in b.segments[1:] if s.a < 1e300 and s.b != MP.inf]
        full = [float(b._seg_power_integral(s, s.a, s.b, b.power)) for s in segs]
        suffix = np.concatenate([np.cumsum(full[::-1])[::-1], [0.0]])
        self._suffix = suffix
        self._segs = segs
        self._sa = np.array([float(s.a) for s in segs])

    def tail_mp(self, x):
        x = mpf(x)
        if x <= 0:
            return ONE
        return self.base.upper_integral_mp(x) / self._mu

    def density_mp(self, x):
        x = mpf(x)
        return ZERO if x < 0 else self.base.tail_mp(x) / self._mu

    def local_prob_mp(self, x, T):
        if not T > 0:
            raise ValueError("window length T must be positive")
        with MP.workdps(dps_for(x, T)):
            x = mpf(x)
            lo, hi = max(x, ZERO), x + T
            if hi <= 0:
                return ZERO
            return self.base.tail_integral_mp(lo, hi) / self._mu if isinstance(self.base, PiecewiseTail) \
                else MP.quad(self.base.tail_mp, [lo, hi]) / self._mu

    def breaks(self, lo, hi):
        return self.base.breaks(lo, hi)

    def is_sqrt_at(self, x):
        return self.base.is_sqrt_at(x)

    def tail_array(self, xs):
        xs = np.asarray(xs, dtype=float)
        if not isinstance(self.base, PiecewiseTail):
            return super().tail_array(xs)
        b = self.base
        out = np.ones_like(xs)
        pos = xs > 0
        x = xs[pos]
        j = np.clip(np.searchsorted(self._sa, x, side="right") - 1, 0, len(self._segs) - 1)
        ends = np.array([float(s.b) for s in self._segs])[j]
        # integral over [x, end of segment] by a Gauss rule exact for the polynomial pieces
        t, w = np.polynomial.legendre.leggauss(b.power // 2 + 4)
        t, w = (t + 1) / 2, w / 2
        h = np.maximum(ends - x, 0.0)
        pts = x[:, None] + h[:, None] * t[None, :]
        vals = b.tail_array(pts.ravel()).reshape(pts.shape)
        part = h * (vals @ w)
        out[pos] = (part + self._suffix[j + 1]) / self.mu
        return out

    def upper_integral_mp(self, x):
        """``int_x^inf Fbar^I = (1/mu) int_x^inf (y - x) Fbar(y) dy``; raises if it diverges."""
        x = max(mpf(x), ZERO)
        b = self.base
        if not isinstance(b, PiecewiseTail):
            return MP.quad(lambda y: (y - x) * b.tail_mp(y), [x, MP.inf]) / self._mu
        total, parts = b.moment_excess_mp(x)
        if parts and parts[-1] > 1e-6 * total:
            raise DivergenceError("the integrated tail has an infinite mean (base second moment diverges)")
        return total / self._mu

    def mean_mp(self):
        return self.upper_integral_mp(0)

    def sample(self, rng, size):
        return _invert_numerically(self, rng.random(size))

    def transform_stack(self):
        return [{"op": "integrated_tail"}]


def integrated_tail(F):
    """Integrated tail (equilibrium) distribution of ``F``."""
    return IntegratedTail(F)


def _cells(F, lo, hi):
    return [mpf(lo)] + list(F.breaks(lo, hi)) + [mpf(hi)]


def mgf(F, gamma, horizon=None):
    """``M_gamma(F) = int_0^inf e^{gamma y} dF(y)`` with a quadrature error estimate.

    Returns ``(value, error)``.  Raises :class:`DivergenceError` when the
    partial integrals over successive breakpoints keep growing.
    """
    if isinstance(F, Exponential):
        if gamma >= F.rate:
            raise DivergenceError(f"M_gamma diverges for gamma={gamma} >= rate {F.rate}")
        return F.rate / (F.rate - gamma), 0.0
    g = mpf(gamma)
    if g == 0:
        return 1.0, 0.0
    if horizon is None:
        horizon = _mgf_horizon(F, g)
    pts = _cells(F, 0, horizon)
    atom = ONE - F.tail_mp(0)  # mass at zero
    total, err = atom, ZERO
    partial = []
    for a, b in zip(pts[:-1], pts[1:]):
        v, e = MP.quad(lambda y: MP.exp(g * y) * F.density_mp(y), [a, b], error=True)
        total += v
        err += e
        partial.append(total)
    if g > 0:
        grow = [partial[i + 1] / partial[i] for i in range(len(partial) - 1) if partial[i] > 0]
        if len(grow) >= 3 and all(r > 1 + 1e-9 for r in grow[-3:]) and partial[-1] > 1e6:
            raise DivergenceError(f"M_gamma diverges for gamma={gamma}")
    if not (MP.isfinite(total) and math.isfinite(float(total))):
        raise DivergenceError(f"M_gamma diverges for gamma={gamma}")
    return float(total), float(err)


def _mgf_horizon(F, g):
    if g < 0:
        return mpf(120) / (-g)
    # breakpoints are where divergence shows; take the generated range
    if isinstance(F, PiecewiseTail):
        pts = F.cycle_points()
        return pts[-1][1] if pts else mpf(1e4)
    return mpf(1e4)


class Esscher(Dist):
    """gamma-transform: mass ``e^{gamma y} dF(y) / M_gamma(F)`` on [0, inf)."""

    def __init__(self, base, gamma):
        if base.support_lo < 0:
            raise ValueError("Esscher transform needs a base on [0, inf)")
        self.base, self.gamma = base, float(gamma)
        self._g = mpf(gamma)
        M, err = mgf(base, gamma)
        self._M, self.M, self.M_err = mpf(M), M, err
        self.has_sqrt = base.has_sqrt
        self._cut = mpf(130) / (-self._g) if self._g < 0 else None

    def density_mp(self, x):
        x = mpf(x)
        if x < 0:
            return ZERO
        return MP.exp(self._g * x) * self.base.density_mp(x) / self._M

    def tail_mp(self, x):
        x = mpf(x)
        if x < 0:
            return ONE
        hi = x + (self._cut if self._cut is not None else mpf(1e4))
        pts = _cells(self.base, x, hi)
        tot = MP.fsum(MP.quad(lambda y: MP.exp(self._g * y) * self.base.density_mp(y), [a, b])
                      for a, b in zip(pts[:-1], pts[1:]))
        return tot / self._M

    def local_prob_mp(self, x, T):
        with MP.workdps(dps_for(x, T)):
            x = mpf(x)
            lo, hi = max(x, ZERO), x + T
            if hi <= 0:
                return ZERO
            pts = _cells(self.base, lo, hi)
            return MP.fsum(MP.quad(self.density_mp, [a, b]) for a, b in zip(pts[:-1], pts[1:]))

    def breaks(self, lo, hi):
        return self.base.breaks(lo, hi)

    def mean_mp(self):
        hi = self._cut if self._cut is not None else mpf(1e4)
        pts = _cells(self.base, 0, hi)
        return MP.fsum(MP.quad(lambda y: y * self.density_mp(y), [a, b]) for a, b in zip(pts[:-1], pts[1:]))

    def transform_stack(self):
        return [{"op": "esscher", "gamma": self.gamma}]


def esscher(F, gamma):
    """Esscher (exponential tilting) transform; composes additively in ``gamma``."""
    if gamma == 0:
        return F
    if isinstance(F, Exponential):
        if gamma >= F.rate:
            raise DivergenceError(f"M_gamma diverges for gamma={gamma} >= rate {F.rate}")
        return Exponential(F.rate - gamma)
    if isinstance(F, Esscher):
        return esscher(F.base, F.gamma + gamma)
    return Esscher(F, gamma)


class V1(Dist):
    """Possibly defective law with tail ``min(1, E xi * Vbar^I(x))`` on [0, inf).

    Its window masses are differences of that tail, which equal
    ``int_x^{x+T} Vbar`` beyond the saturation point.
    """

    def __init__(self, base):
        self.base = base
        self.I = IntegratedTail(base)
        self._mu = self.I._mu
        self.total_mass = float(min(ONE, self._mu))
        self.defective = self._mu < 1
        self.has_sqrt = base.has_sqrt
        self.crossing = self._crossing()

    def _crossing(self):
        if self._mu <= 1:
            return 0.0
        return float(MP.findroot(lambda x: self.base.upper_integral_mp(x) - 1, (0, self._mu + 10), solver="anderson"))

    def tail_mp(self, x):
        x = mpf(x)
        if x < 0:
            return min(ONE, self._mu)
        return min(ONE, self.base.upper_integral_mp(x))

    def cdf(self, x):
        """Accumulated mass ``total - tail``; nondecreasing in [0, 1]."""
        return float(min(ONE, self._mu) - self.tail_mp(x))

    def density_mp(self, x):
        x = mpf(x)
        return self.base.tail_mp(x) if x >= self.crossing else ZERO

    def local_prob_mp(self, x, T):
        if not T > 0:
            raise ValueError("window length T must be positive")
        with MP.workdps(dps_for(x, T)):
            x = mpf(x)
            c = mpf(self.crossing)
            lo = max(x, c)
            hi = x + T
            if hi <= lo:
                return ZERO
            return self.base.tail_integral_mp(lo, hi) if isinstance(self.base, PiecewiseTail) \
                else self.tail_mp(lo) - self.tail_mp(hi)

    def breaks(self, lo, hi):
        return self.base.breaks(lo, hi)

    def transform_stack(self):
        return [{"op": "v1"}]


def v1_min(F):
    """``V1`` construction of the local-class lemmas."""
    return V1(F)


def _invert_numerically(F, u, lo=0.0):
    """Inverse transform by vectorised bisection on ``F.tail_array``."""
    u = np.asarray(u, dtype=float)
    a = np.full_like(u, lo)
    b = np.full_like(u, 1.0)
    while np.any(F.tail_array(b) > u):
        grow = F.tail_array(b) > u
        b[grow] *= 2.0
    for _ in range(80):
        mid = 0.5 * (a + b)
        big = F.tail_array(mid) > u
        a = np.where(big, mid, a)
        b = np.where(big, b, mid)
    return 0.5 * (a + b)


def from_dict(d):
    """Rebuild a distribution from its JSON document (base plus transform stack)."""
    if d.get("kind") == "exp":
        F = Exponential(d["rate"])
    else:
        F = PiecewiseTail.from_dict(d)
    for t in d.get("transforms", []):
        op = t["op"]
        if op == "power":
            F = power_tail(F, t["m"])
        elif op == "shift":
            F = shift(F, t["a"])
        elif op == "integrated_tail":
            F = integrated_tail(F)
        elif op == "esscher":
            F = esscher(F, t["gamma"])
        elif op == "v1":
            F = v1_min(F)
        else:
            raise ValueError(f"unknown transform {op!r}")
    return F
