"""Piecewise tail functions of the three breakpoint families.

Every concrete heavy-tailed law in the package is a :class:`PiecewiseTail`:
an ordered list of segments on which the tail is 1, constant, affine in x,
or affine in sqrt(x), raised to an integer power ``m`` and optionally
shifted.  Segment values are stored anchored at the right end of each
segment (``value = vb + slope * g``, ``g >= 0``) so that no evaluation ever
subtracts two nearly equal numbers, however far out the breakpoints are.
"""
from __future__ import annotations

import bisect
import enum
import json
import math
from dataclasses import dataclass

import numpy as np

from ._mp import MP, ONE, ZERO, dps_for, gl_integrate, mpf

#: breakpoints are generated while log10(x_n) stays below this cap
LOG10_CAP = 4000.0
#: largest x treated by float (vectorised) code paths
FLOAT_XMAX = 1e300


class ParameterError(ValueError):
    """A distribution parameter violates one of the family constraints."""


class Kind(str, enum.Enum):
    EX21 = "ex21"
    EX22 = "ex22"
    EX25 = "ex25"


class Form(enum.IntEnum):
    UNIT = 0
    PLATEAU = 1
    AFFINE_X = 2
    AFFINE_SQRT = 3


@dataclass(frozen=True)
class Segment:
    """Base tail on ``[a, b)``: ``vb + slope * g(x)`` with ``g = b - x`` or ``sqrt(b) - sqrt(x)``."""

    a: object
    b: object
    form: Form
    vb: object
    slope: object = ZERO

    def value(self, x):
        if self.form == Form.UNIT:
            return ONE
        if self.form == Form.PLATEAU:
            return self.vb
        if self.form == Form.AFFINE_X:
            return self.vb + self.slope * (self.b - x)
        return self.vb + self.slope * (self.b - x) / (MP.sqrt(self.b) + MP.sqrt(x))

    def drop(self, x, y):
        """value(x) - value(y) for a <= x <= y <= b, without cancellation."""
        if self.form == Form.AFFINE_X:
            return self.slope * (y - x)
        if self.form == Form.AFFINE_SQRT:
            return self.slope * (y - x) / (MP.sqrt(x) + MP.sqrt(y))
        return ZERO

    def deriv(self, x):
        """-d/dx of the base tail inside the segment."""
        if self.form == Form.AFFINE_X:
            return self.slope
        if self.form == Form.AFFINE_SQRT:
            return self.slope / (2 * MP.sqrt(x))
        return ZERO


@dataclass(frozen=True)
class BreakpointSeq:
    kind: Kind
    m: int
    alpha: float
    x1: float
    points: tuple  # mpf x_n, n = 1, 2, ...

    @property
    def log_points(self):
        return tuple(float(MP.log(p)) for p in self.points)

    @property
    def n_max(self):
        return len(self.points)


def validate_params(kind, m, alpha, x1):
    try:
        kind = Kind(kind)
    except ValueError:
        raise ParameterError(f"unknown family {kind!r}; expected one of {[k.value for k in Kind]}") from None
    if not (isinstance(m, (int, np.integer)) and m >= 1):
        raise ParameterError(f"m must be an integer >= 1 (got {m!r})")
    if kind == Kind.EX21:
        if not (1.0 / m < alpha < 1.0 + 1.0 / m):
            raise ParameterError(f"ex21 requires 1/m < alpha < 1 + 1/m (got alpha={alpha}, m={m})")
        bound = 4.0 ** (m * alpha / (m * alpha - 1.0))
        if not x1 > bound:
            raise ParameterError(f"ex21 requires x1 > 4^(m*alpha/(m*alpha-1)) = {bound:.6g} (got {x1})")
    elif kind == Kind.EX22:
        if not alpha > 2.0 + 2.0 / m:
            raise ParameterError(f"ex22 requires alpha > 2 + 2/m (got alpha={alpha}, m={m})")
        if not x1 > 4.0 ** alpha:
            raise ParameterError(f"ex22 requires x1 > 4^alpha = {4.0 ** alpha:.6g} (got {x1})")
    else:
        if not x1 > 1.0:
            raise ParameterError(f"ex25 requires x1 > 1 (got {x1})")
        if not 0.0 < alpha < 1.0:
            raise ParameterError(f"ex25 requires 0 < alpha < 1 (got {alpha})")
        if not (1.0 / alpha < m < 2.0 / alpha):
            raise ParameterError(f"ex25 requires 1/alpha < m < 2/alpha (got m={m}, alpha={alpha})")
    return kind


def make_breakpoints(kind, m, alpha, x1, log10_cap=LOG10_CAP):
    kind = validate_params(kind, m, alpha, x1)
    a = mpf(alpha)
    if kind == Kind.EX21:
        r = 2 - 1 / (m * a)
        step = lambda x: x ** r
    elif kind == Kind.EX22:
        r = 1 + 1 / a
        step = lambda x: x ** r
    else:
        step = lambda x: (2 * x) ** 2
    pts = [mpf(x1)]
    while True:
        nxt = step(pts[-1])
        if MP.log10(nxt) > log10_cap:
            break
        pts.append(nxt)
    return BreakpointSeq(kind, int(m), float(alpha), float(x1), tuple(pts))


def _segments_for(seq):
    kind, a = seq.kind, mpf(seq.alpha)
    m = seq.m
    x = seq.points
    segs = [Segment(-MP.inf, ZERO, Form.UNIT, ONE)]
    x1 = x[0]
    if kind == Kind.EX22:
        segs.append(Segment(ZERO, x1 ** 2, Form.AFFINE_SQRT, x1 ** -a, (1 - x1 ** -a) / x1))
    else:
        segs.append(Segment(ZERO, x1, Form.AFFINE_X, x1 ** -a, (1 - x1 ** -a) / x1))
    for i, xn in enumerate(x):
        nxt = x[i + 1] if i + 1 < len(x) else None
        if kind == Kind.EX21:
            plateau = xn ** (-2 * a + ONE / m)
            slope = xn ** (-a - 1) - xn ** (-2 * a - 1 + ONE / m)
            lo, mid, hi = xn, 2 * xn, nxt
            form = Form.AFFINE_X
        elif kind == Kind.EX22:
            plateau = xn ** (-a - 1)
            slope = xn ** (-a - 1) - xn ** (-a - 2)
            lo, mid, hi = xn ** 2, 4 * xn ** 2, (nxt ** 2 if nxt is not None else None)
            form = Form.AFFINE_SQRT
        else:
            plateau = (2 * xn) ** (-2 * a)
            slope = xn ** (-a - 1) - 2 ** (-2 * a) * xn ** (-2 * a - 1)
            lo, mid, hi = xn, 2 * xn, nxt
            form = Form.AFFINE_X
        segs.append(Segment(lo, mid, form, plateau, slope))
        segs.append(Segment(mid, hi if hi is not None else MP.inf, Form.PLATEAU, plateau))
    return segs


class PiecewiseTail:
    """Tail ``x -> Fbar(x + shift) ** m`` of one of the breakpoint families.

    Parameters
    ----------
    kind : {"ex21", "ex22", "ex25"}
    m : int
        Family parameter: it enters the breakpoint recurrence and the
        plateau levels, and is also the default power ``Gbar_m = Fbar ** m``.
    alpha, x1 : float
        Family parameters (validated strictly; boundary values are rejected).
    n_max : int
        Diagnostic horizon: number of breakpoints exposed to probe
        construction.  If it exceeds what fits below the exponent cap the
        feasible prefix is kept and ``truncated`` is set.
    shift : float
        Translation ``a``: the tail is evaluated at ``x + a``.
    power : int, optional
        Exponent applied to the base tail; defaults to ``m``.  ``power=1``
        gives the base law ``F`` whose ``m``-fold minimum has tail ``Gbar_m``.
    """

    kind_name = "piecewise"

    def __init__(self, kind, m=1, alpha=1.5, x1=100.0, n_max=12, shift=0.0, power=None):
        if n_max < 1:
            raise ParameterError("n_max must be >= 1")
        self.seq = make_breakpoints(kind, m, alpha, x1)
        self.kind = self.seq.kind
        self.m = int(m)
        self.power = self.m if power is None else int(power)
        if self.power < 1:
            raise ParameterError("power must be an integer >= 1")
        self.alpha = float(alpha)
        self.x1 = float(x1)
        self.shift = float(shift)
        self._shift = mpf(shift)
        self.truncated = n_max > self.seq.n_max
        self.n_max = min(int(n_max), self.seq.n_max)
        self.segments = _segments_for(self.seq)
        self._starts = [s.a for s in self.segments]
        self._build_float_tables()
        self._mean = None

    # -- construction helpers -------------------------------------------
    def _build_float_tables(self):
        segs = [s for s in self.segments[1:] if s.a < FLOAT_XMAX]
        self._fa = np.array([float(s.a) for s in segs])
        self._fb = np.array([float(s.b) for s in segs])
        self._fvb = np.array([float(s.vb) for s in segs])
        self._fslope = np.array([float(s.slope) for s in segs])
        self._fform = np.array([int(s.form) for s in segs])
        self._fva = np.array([float(s.value(s.a)) for s in segs])

    def with_shift(self, shift):
        return PiecewiseTail(self.kind, self.m, self.alpha, self.x1, self.n_max, shift, self.power)

    def with_power(self, power):
        """Same segments, tail raised to ``power`` instead of ``m``."""
        return PiecewiseTail(self.kind, self.m, self.alpha, self.x1, self.n_max, self.shift, power)

    # -- breakpoints ------------------------------------------------------
    @property
    def support_lo(self):
        return -self.shift

    def cycle_points(self):
        """(start, ramp end) of every generated cycle in x coordinates, as mpf."""
        out = []
        for s in self.segments[2::2][: self.n_max]:
            out.append((s.a - self._shift, s.b - self._shift))
        return out

    def breaks(self, lo, hi):
        """Segment boundaries (x coordinates, mpf) strictly inside (lo, hi)."""
        s = self._shift
        out = []
        for seg in self.segments[1:]:
            b = seg.a - s
            if b >= hi:
                break
            if b > lo:
                out.append(b)
        return out

    def is_sqrt_at(self, x):
        return self._seg(x + self._shift).form == Form.AFFINE_SQRT

    @property
    def has_sqrt(self):
        return self.kind == Kind.EX22

    @property
    def poly_degree(self):
        """Degree of the tail as a polynomial in x on each segment (None for the sqrt family)."""
        return None if self.has_sqrt else self.power

    # -- exact scalar evaluation (mpf) -------------------------------------
    def _seg(self, u):
        i = bisect.bisect_right(self._starts, u) - 1
        return self.segments[max(i, 0)]

    def _seg_left(self, u):
        i = bisect.bisect_left(self._starts, u) - 1
        return self.segments[max(i, 0)]

    def tail_mp(self, x):
        u = mpf(x) + self._shift
        v = self._seg(u).value(u)
        return v ** self.power if self.power > 1 else v

    def tail(self, x):
        return float(self.tail_mp(x))

    def log_tail(self, x):
        return float(MP.log(self.tail_mp(x)))

    def density_mp(self, x):
        """-d/dx of the tail; left derivative at breakpoints."""
        u = mpf(x) + self._shift
        seg = self._seg_left(u)
        d = seg.deriv(u)
        if self.power > 1 and d != 0:
            d = self.power * seg.value(u) ** (self.power - 1) * d
        return d

    def density(self, x):
        return float(self.density_mp(x))

    def drop_mp(self, x, y):
        """tail(x) - tail(y) for x <= y, summed segment by segment."""
        u, w = mpf(x) + self._shift, mpf(y) + self._shift
        if w <= u:
            return ZERO
        i = max(bisect.bisect_right(self._starts, u) - 1, 0)
        total = ZERO
        m = self.power
        while i < len(self.segments):
            seg = self.segments[i]
            lo, hi = max(u, seg.a), min(w, seg.b)
            if hi > lo:
                d = seg.drop(lo, hi)
                if m > 1 and d != 0:
                    A, B = seg.value(lo), seg.value(hi)
                    d = d * MP.fsum(A ** k * B ** (m - 1 - k) for k in range(m))
                total += d
            if seg.b >= w:
                break
            i += 1
        return total

    def local_prob_mp(self, x, T):
        if not T > 0:
            raise ValueError("window length T must be positive")
        with MP.workdps(dps_for(x, self._shift)):
            v = self.drop_mp(x, mpf(x) + T)
        return +v

    def local_prob(self, x, T):
        return float(self.local_prob_mp(x, T))

    # -- integrals ----------------------------------------------------------
    def _seg_power_integral(self, seg, lo, hi, k):
        """Integral of base_value^k over [lo, hi] inside ``seg`` (base coordinates)."""
        if hi <= lo:
            return ZERO
        if seg.form in (Form.UNIT, Form.PLATEAU):
            return (ONE if seg.form == Form.UNIT else seg.vb ** k) * (hi - lo)
        n = k // 2 + 2
        if seg.form == Form.AFFINE_X:
            return gl_integrate(lambda t: seg.value(t) ** k, lo, hi, n)
        # sqrt form: substitute x = t^2, polynomial of degree k+1 in t
        return gl_integrate(lambda t: 2 * t * seg.value(t * t) ** k, MP.sqrt(lo), MP.sqrt(hi), n + 1)

    def tail_integral_mp(self, p, q, power=1):
        """Integral of tail(x)**power over [p, q] (x coordinates)."""
        with MP.workdps(dps_for(p, q, self._shift)):
            v = self._tail_integral(p, q, power)
        return +v

    def _tail_integral(self, p, q, power):
        u, w = mpf(p) + self._shift, mpf(q) + self._shift
        if w <= u:
            return ZERO
        k = self.power * power
        total = ZERO
        i = max(bisect.bisect_right(self._starts, u) - 1, 0)
        while i < len(self.segments):
            seg = self.segments[i]
            lo, hi = max(u, seg.a), min(w, seg.b)
            if hi > lo:
                if seg.b == MP.inf and hi == MP.inf:
                    raise ValueError("integral over the truncated final plateau")
                total += self._seg_power_integral(seg, lo, hi, k)
            if seg.b >= w:
                break
            i += 1
        return total

    def far_tail_bound(self):
        """Envelope bound on the integral of the tail beyond the last generated breakpoint."""
        xs = self.segments[-1].a
        a, m = mpf(self.alpha), self.power
        if self.kind == Kind.EX22:
            # Fbar(x) <= 2^a x^{-a/2}
            e = m * a / 2
        else:
            e = m * a
        c = (2 ** a) ** m if self.kind != Kind.EX25 else ONE
        return c * xs ** (1 - e) / (e - 1)

    def _suffix(self):
        """Cached integrals of tail**m over each full segment and their suffix sums."""
        if getattr(self, "_suffix_cache", None) is None:
            segs = self.segments[1:-1]
            full = [self._seg_power_integral(sg, sg.a, sg.b, self.power) for sg in segs]
            suffix = [ZERO] * (len(full) + 1)
            for i in range(len(full) - 1, -1, -1):
                suffix[i] = suffix[i + 1] + full[i]
            self._suffix_cache = (full, suffix)
        return self._suffix_cache

    def upper_integral_mp(self, x):
        """Integral of the tail over [x, infinity) up to the generated range."""
        last = self.segments[-1].a - self._shift
        x = mpf(x)
        if x >= last:
            return ZERO
        u = x + self._shift
        if u <= 0:
            return -u + self._suffix()[1][0]
        i = bisect.bisect_right(self._starts, u) - 1  # index into segments, >= 1
        seg = self.segments[i]
        return self._seg_power_integral(seg, u, seg.b, self.power) + self._suffix()[1][i]

    def moment_excess_mp(self, x):
        """Integral of (y - x) * tail(y) over [x, infinity), with per-segment contributions.

        Returns ``(total, parts)``; ``parts`` lets callers judge convergence.
        """
        x = mpf(x)
        u0 = x + self._shift
        parts = []
        k = self.power
        for seg in self.segments[1:-1]:
            lo, hi = max(seg.a, u0), seg.b
            if hi <= lo:
                continue
            if seg.form == Form.PLATEAU:
                v = seg.vb ** k * ((hi - u0) ** 2 - (lo - u0) ** 2) / 2
            elif seg.form == Form.AFFINE_X:
                v = gl_integrate(lambda t: (t - u0) * seg.value(t) ** k, lo, hi, k // 2 + 2)
            else:
                v = gl_integrate(lambda t: 2 * t * (t * t - u0) * seg.value(t * t) ** k,
                                 MP.sqrt(lo), MP.sqrt(hi), k // 2 + 3)
            parts.append(v)
        if u0 < 0:
            parts.insert(0, u0 * u0 / 2)
        return MP.fsum(parts), parts

    def mean_pos_mp(self):
        """E X^+ = integral of the tail over [0, inf)."""
        return self.upper_integral_mp(0)

    def mean_mp(self):
        """E X = integral of tail over [0, inf) minus integral of (1 - tail) over (-inf, 0)."""
        pos = self.upper_integral_mp(0)
        lo = -self._shift
        if lo < 0:
            # mass below zero: int_{lo}^{0} (1 - tail)
            neg = -lo - self.tail_integral_mp(lo, 0)
            return pos - neg
        # support starts at lo >= 0: tail = 1 on [0, lo)
        return pos

    def mean(self):
        return float(self.mean_mp())

    def mean_pos(self):
        return float(self.upper_integral_mp(0))

    def mean_error_bound(self):
        return float(self.far_tail_bound())

    # -- float vectorised paths --------------------------------------------
    def tail_array(self, xs):
        """Vectorised float tail; values below the double range flush to 0."""
        u = np.asarray(xs, dtype=float) + self.shift
        out = np.ones_like(u)
        idx = np.searchsorted(self._fa, u, side="right") - 1
        ok = idx >= 0
        j = idx[ok]
        uu = u[ok]
        b, vb, sl, fm = self._fb[j], self._fvb[j], self._fslope[j], self._fform[j]
        val = vb.copy()
        aff = fm == Form.AFFINE_X
        val[aff] += sl[aff] * (b[aff] - uu[aff])
        sq = fm == Form.AFFINE_SQRT
        val[sq] += sl[sq] * (np.sqrt(b[sq]) - np.sqrt(uu[sq]))
        out[ok] = val ** self.power if self.power > 1 else val
        return out

    def quantile_tail(self, u):
        """Inverse of the tail: x with tail(x) = u, for u in (0, 1)."""
        u = np.asarray(u, dtype=float)
        base = u ** (1.0 / self.power) if self.power > 1 else u
        decr = self._fform >= Form.AFFINE_X
        va, vb = self._fva[decr], self._fvb[decr]
        a, b, sl, fm = self._fa[decr], self._fb[decr], self._fslope[decr], self._fform[decr]
        # segments are ordered with decreasing values; search on ascending vb
        order = np.arange(len(vb))[::-1]
        k = np.searchsorted(vb[order], base, side="right") - 1
        k = order[np.clip(k, 0, len(order) - 1)]
        g = (base - vb[k]) / sl[k]
        x = np.where(fm[k] == Form.AFFINE_X, b[k] - g, (np.sqrt(b[k]) - g) ** 2)
        x = np.clip(x, a[k], b[k])
        return x - self.shift

    def sample(self, rng, size, method="min"):
        """Draw samples; ``method='min'`` takes the min of m base draws."""
        if method == "min" and self.power > 1:
            base = self.with_power(1)
            draws = base.quantile_tail(rng.random((size, self.power)))
            return draws.min(axis=1)
        return self.quantile_tail(rng.random(size))

    # -- serialisation -------------------------------------------------------
    def to_dict(self):
        return {
            "kind": self.kind.value,
            "m": self.m,
            "alpha": self.alpha,
            "x1": self.x1,
            "n_max": self.n_max,
            "shift": self.shift,
            "truncated": self.truncated,
            **({"power": self.power} if self.power != self.m else {}),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], int(d["m"]), float(d["alpha"]), float(d["x1"]),
                   int(d.get("n_max", 12)), float(d.get("shift", 0.0)), d.get("power"))

    def __reduce__(self):
        return (PiecewiseTail.from_dict, (self.to_dict(),))

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))

    def __repr__(self):
        return (f"PiecewiseTail({self.kind.value}, m={self.m}, power={self.power}, alpha={self.alpha}, "
                f"x1={self.x1}, n_max={self.n_max}, shift={self.shift})")


def build_example(kind, m=1, alpha=1.5, x1=100.0, n_max=12):
    """Construct one of the three breakpoint-family distributions."""
    return PiecewiseTail(kind, m, alpha, x1, n_max)
