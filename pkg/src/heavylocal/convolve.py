"""Convolution and tail-integral engine.

Scalar quantities (two-fold tails, local convolution masses, the star
integral and middle-window integrals) are computed by Gauss-Legendre
quadrature on the cells cut out by the breakpoints of both factors, in the
private multiprecision context.  Each integral over ``[0, x]`` is split at
``x/2`` and the half next to ``x`` is integrated in the reflected variable,
so that the factor evaluated near its own origin always receives an exactly
represented argument.

n-fold quantities go through :class:`LatticeDist`, a discretisation carried
twice (mass pushed to the left and to the right cell edge) to give
guaranteed brackets.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._mp import MP, ONE, ZERO, dps_for, gl_rule, mpf
from .kernels import backend


@dataclass(frozen=True)
class QuadSpec:
    """Quadrature controls.

    ``rule='auto'`` uses a Gauss rule that is exact on cells where both
    factors are polynomial and a fixed order-8 rule (checked against order
    16, with bisection on failure) elsewhere.
    """

    rel_tol: float = 1e-9
    abs_floor: float = 1e-300
    rule: str = "auto"
    gauss_order: int = 8
    max_subdivisions: int = 60

    def __post_init__(self):
        if not (0 < self.rel_tol <= 1e-2):
            raise ValueError("rel_tol must lie in (0, 1e-2]")
        if self.rule not in ("auto", "exact-polynomial", "gauss"):
            raise ValueError(f"unknown rule {self.rule!r}")


DEFAULT_QUAD = QuadSpec()


@dataclass(frozen=True)
class QuadResult:
    value_mp: object
    error_mp: object
    degraded: bool = False
    n_cells: int = 0

    @property
    def value(self):
        return float(self.value_mp)

    @property
    def error(self):
        return float(self.error_mp)

    def __iter__(self):
        yield self.value
        yield self.error


def _kinks(F, lo, hi):
    """Points in (lo, hi) where F's tail or density is not smooth."""
    pts = list(F.breaks(lo, hi))
    s = mpf(F.support_lo)
    if lo < s < hi:
        pts.append(s)
    c = getattr(F, "crossing", None)
    if c is not None and lo < c < hi:
        pts.append(mpf(c))
    return pts


def _cell_orders(degree, spec):
    if degree is not None and spec.rule != "gauss":
        n1 = max(2, degree // 2 + 1)
        return n1, n1 + 2
    if spec.rule == "exact-polynomial":
        raise ValueError("exact-polynomial rule requested for a non-polynomial integrand")
    return spec.gauss_order, 2 * spec.gauss_order


def _gl(f, a, b, n, sqrt_left):
    nodes, weights = gl_rule(n)
    h = b - a
    if sqrt_left:
        # y = a + h s^2 removes a sqrt singularity at the left end
        return MP.fsum(w * f(a + h * t * t) * 2 * h * t for t, w in zip(nodes, weights))
    return h * MP.fsum(w * f(a + h * t) for t, w in zip(nodes, weights))


def integrate_cells(f, pts, spec=DEFAULT_QUAD, degree=None, sqrt_at=()):
    """Integrate ``f`` over consecutive cells ``pts[i], pts[i+1]``.

    ``sqrt_at`` lists cell left ends at which the integrand behaves like
    ``sqrt(y - a)``; those cells are integrated after the substitution
    ``y = a + h s^2``.  Returns a :class:`QuadResult`.
    """
    n1, n2 = _cell_orders(degree, spec)
    sqrt_at = set(sqrt_at)
    total, err = ZERO, ZERO
    budget = [spec.max_subdivisions]
    degraded = False
    cells = 0

    def cell(a, b, sl, depth):
        nonlocal degraded, cells
        cells += 1
        I1 = _gl(f, a, b, n1, sl)
        I2 = _gl(f, a, b, n2, sl)
        e = abs(I2 - I1)
        if e <= spec.rel_tol * abs(I2) * 1e-3 or e == 0:
            return I2, e
        if budget[0] <= 0 or depth > 30:
            if e > spec.rel_tol * abs(I2):
                degraded = True
            return I2, e
        budget[0] -= 1
        m = (a + b) / 2
        va, ea = cell(a, m, sl, depth + 1)
        vb, eb = cell(m, b, False, depth + 1)
        return va + vb, ea + eb

    pts = sorted(set(pts))
    for a, b in zip(pts[:-1], pts[1:]):
        if b <= a:
            continue
        v, e = cell(a, b, a in sqrt_at, 0)
        total += v
        err += e
    if err > spec.rel_tol * abs(total) + spec.abs_floor:
        degraded = True
    return QuadResult(total, err, degraded, cells)


def _degree(*dists, extra=0):
    d = 0
    for D in dists:
        if D.poly_degree is None:
            return None
        d += D.poly_degree
    return d + extra


def _split_product(A, A_dist, A_kinks, B, B_dist, x, lo, hi, spec, degree):
    """``int_lo^hi A(x - y) B(y) dy``, split at x/2 with the upper half reflected.

    ``A_kinks(lo, hi)`` lists points in (lo, hi) where ``A`` is not smooth.
    """
    x = mpf(x)
    lo, hi = mpf(lo), mpf(hi)
    half = x / 2
    parts = []
    # lower half: y in [lo, min(hi, x/2)], y exact
    a1, b1 = lo, min(hi, half)
    if b1 > a1:
        pts = [a1, b1] + _kinks(B_dist, a1, b1)
        for b in A_kinks(x - b1, x - a1):
            pts.append(x - b)
        sq = [ZERO] if (a1 == 0 and B_dist.has_sqrt) else []
        parts.append(integrate_cells(lambda y: A(x - y) * B(y), [p for p in pts if a1 <= p <= b1],
                                     spec, degree, sq))
    # upper half: z = x - y in [x - hi, x - max(lo, x/2)], z exact
    a2, b2 = x - hi, x - max(lo, half)
    if b2 > a2:
        pts = [a2, b2] + A_kinks(a2, b2)
        for b in _kinks(B_dist, x - b2, x - a2):
            pts.append(x - b)
        sq = [ZERO] if (a2 == 0 and A_dist.has_sqrt) else []
        parts.append(integrate_cells(lambda z: A(z) * B(x - z), [p for p in pts if a2 <= p <= b2],
                                     spec, degree, sq))
    val = MP.fsum(p.value_mp for p in parts)
    err = MP.fsum(p.error_mp for p in parts)
    return QuadResult(val, err, any(p.degraded for p in parts), sum(p.n_cells for p in parts))


def _require_halfline(*dists):
    for D in dists:
        if D.support_lo < 0:
            raise ValueError("two-fold convolution needs factors supported on [0, inf)")


def conv2_tail(F, G, x, spec=DEFAULT_QUAD):
    """``P(X + Y > x) = Gbar(x) + int_0^x Fbar(x - y) dG(y)`` for independent X ~ F, Y ~ G."""
    _require_halfline(F, G)
    x = mpf(x)
    if x <= 0:
        return QuadResult(ONE, ZERO)
    with MP.workdps(dps_for(x)):
        body = _split_product(F.tail_mp, F, lambda a, b: _kinks(F, a, b), G.density_mp, G, x, 0, x,
                              spec, _degree(F, G))
        v = G.tail_mp(x) + body.value_mp
        return QuadResult(+v, body.error_mp, body.degraded, body.n_cells)


def conv_local(F, G, x, T, spec=DEFAULT_QUAD):
    """``(F * G)(x + Delta_T) = int_0^{x+T} F(x - y + Delta_T) dG(y)`` for factors on [0, inf)."""
    if not T > 0:
        raise ValueError("window length T must be positive")
    _require_halfline(F, G)
    x, T = mpf(x), mpf(T)
    if x + T <= 0:
        return QuadResult(ZERO, ZERO)
    with MP.workdps(dps_for(x, x + T)):
        A = lambda z: F.local_prob_mp(z, T)

        def A_kinks(a, b):
            ks = _kinks(F, a, b + T)
            return [k for k in ks if a < k < b] + [k - T for k in ks if a < k - T < b]

        if x <= 0:
            # the whole range y in [0, x+T] is "near x"; integrate directly in y
            pts = [ZERO, x + T] + _kinks(G, ZERO, x + T) + [x - k for k in A_kinks(-T, x)]
            pts = [p for p in pts if 0 <= p <= x + T]
            sq = [ZERO] if G.has_sqrt else []
            r = integrate_cells(lambda y: A(x - y) * G.density_mp(y), pts, spec, _degree(F, G), sq)
            return QuadResult(+r.value_mp, r.error_mp, r.degraded, r.n_cells)
        lower = _split_product(A, F, A_kinks, G.density_mp, G, x, 0, x, spec, _degree(F, G))
        # y in (x, x+T]: here A's argument z = x - y lies in [-T, 0)
        pts = [-T, ZERO] + A_kinks(-T, ZERO) + [x - k for k in _kinks(G, x, x + T)]
        pts = [p for p in pts if -T <= p <= 0]
        tail_part = integrate_cells(lambda z: A(z) * G.density_mp(x - z), pts, spec, _degree(F, G))
        v = lower.value_mp + tail_part.value_mp
        return QuadResult(+v, lower.error_mp + tail_part.error_mp,
                          lower.degraded or tail_part.degraded, lower.n_cells + tail_part.n_cells)


def star_integral(F, x, spec=DEFAULT_QUAD, halves=True):
    """``int_0^x Fbar(x - y) Fbar(y) dy``.

    ``halves=True`` integrates ``[0, x/2]`` and doubles (symmetry of the
    integrand); ``halves=False`` integrates both halves separately.
    """
    x = mpf(x)
    if x < 0:
        raise ValueError("star integral needs x >= 0")
    if x == 0:
        return QuadResult(ZERO, ZERO)
    with MP.workdps(dps_for(x)):
        kinks = lambda a, b: _kinks(F, a, b)
        deg = _degree(F, F)
        if halves:
            r = _split_product(F.tail_mp, F, kinks, F.tail_mp, F, x, 0, x / 2, spec, deg)
            return QuadResult(2 * r.value_mp, 2 * r.error_mp, r.degraded, r.n_cells)
        r = _split_product(F.tail_mp, F, kinks, F.tail_mp, F, x, 0, x, spec, deg)
        return QuadResult(+r.value_mp, r.error_mp, r.degraded, r.n_cells)


def window_integral(F, x, h, mode="tail-vs-tail", T=None, spec=DEFAULT_QUAD):
    """Middle-window integral over ``[h, x - h]``.

    ``mode='tail-vs-tail'``: ``int Fbar(x - y) Fbar(y) dy``;
    ``mode='local-vs-mass'``: ``int F(x - y + Delta_T) dF(y)``.
    """
    x, h = mpf(x), mpf(h)
    if not (0 < h < x / 2):
        raise ValueError("window requires 0 < h(x) < x/2")
    with MP.workdps(dps_for(x, x + (T or 0))):
        if mode == "tail-vs-tail":
            return _split_product(F.tail_mp, F, lambda a, b: _kinks(F, a, b), F.tail_mp, F, x, h, x - h,
                                  spec, _degree(F, F))
        if mode == "local-vs-mass":
            if T is None or not T > 0:
                raise ValueError("local-vs-mass mode needs T > 0")
            T = mpf(T)

            def A_kinks(a, b):
                ks = _kinks(F, a, b + T)
                return [k for k in ks if a < k < b] + [k - T for k in ks if a < k - T < b]

            return _split_product(lambda z: F.local_prob_mp(z, T), F, A_kinks, F.density_mp, F, x, h, x - h,
                                  spec, _degree(F, F))
        raise ValueError(f"unknown mode {mode!r}")


# -- lattices ---------------------------------------------------------------


# per-entry FFT convolution error: c * u * log2(n) * |a|_2 * |b|_2 with a generous c
_FFT_ERR_C = 8.0
_DIRECT_MAX = 4_000_000


def _conv_trunc(a, b, n):
    """Linear convolution of ``a`` and ``b`` truncated to length ``n`` and its per-entry error bound."""
    if len(a) * len(b) <= _DIRECT_MAX:
        return np.convolve(a, b)[:n], 0.0
    la, lb = min(len(a), n), min(len(b), n)
    a, b = a[:la], b[:lb]
    size = la + lb - 1
    nfft = 1 << (size - 1).bit_length()
    c = np.fft.irfft(np.fft.rfft(a, nfft) * np.fft.rfft(b, nfft), nfft)[:min(n, size)]
    bound = _FFT_ERR_C * np.finfo(float).eps * np.log2(nfft) * np.linalg.norm(a) * np.linalg.norm(b)
    return np.maximum(c, 0.0), float(bound)


@dataclass
class LatticeDist:
    """Masses ``masses[k]`` at ``origin + k * step`` plus mass ``residual`` beyond the grid.

    ``err`` bounds the absolute floating-point error of every entry (nonzero
    after FFT convolution).
    """

    origin: float
    step: float
    masses: np.ndarray
    residual: float = 0.0
    err: float = 0.0

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("lattice step must be positive")
        self.masses = np.asarray(self.masses, dtype=float)
        if np.any(self.masses < 0):
            raise ValueError("lattice masses must be nonnegative")

    @property
    def total(self):
        return float(self.masses.sum() + self.residual)

    def points(self):
        return self.origin + self.step * np.arange(len(self.masses))

    def _index_above(self, x):
        return max(int(np.floor((x - self.origin) / self.step + 1e-9)) + 1, 0)

    def tail_at(self, x):
        """Mass strictly above x (including the residual beyond the grid)."""
        return float(self.masses[self._index_above(x):].sum() + self.residual)

    def mass_at(self, x):
        """Mass sitting exactly on the lattice point x (0 off the lattice)."""
        r = (x - self.origin) / self.step
        k = int(round(r))
        if abs(r - k) > 1e-9 or not 0 <= k < len(self.masses):
            return 0.0
        return float(self.masses[k])

    def tail_mid(self, x):
        """Tail above x counting half of any mass sitting on x (centred estimate)."""
        return self.tail_at(x) + 0.5 * self.mass_at(x)

    def tail_interp(self, x):
        """:meth:`tail_mid` interpolated linearly between neighbouring lattice points."""
        r = (x - self.origin) / self.step
        k = int(np.floor(r + 1e-9))
        f = r - k
        if f < 1e-9:
            return self.tail_mid(x)
        a = self.tail_mid(self.origin + k * self.step)
        b = self.tail_mid(self.origin + (k + 1) * self.step)
        return (1 - f) * a + f * b

    def tail_err(self, x):
        """Error bound for :meth:`tail_at` (entries above x plus the residual bookkeeping)."""
        return self.err * (2 * len(self.masses) - min(self._index_above(x), len(self.masses)))

    def window(self, x, T):
        """Mass on lattice points in (x, x + T]."""
        lo = self._index_above(x)
        hi = int(np.floor((x + T - self.origin) / self.step + 1e-9))
        hi = min(hi, len(self.masses) - 1)
        return float(self.masses[lo:hi + 1].sum()) if hi >= lo else 0.0

    def convolve(self, other, n_cells=None):
        """Lattice convolution truncated to ``n_cells``; the cut mass goes to ``residual``."""
        if abs(self.step - other.step) > 1e-12 * self.step:
            raise ValueError("lattice steps differ")
        n = n_cells or max(len(self.masses), len(other.masses))
        c, e = _conv_trunc(self.masses, other.masses, n)
        if len(c) < n:
            c = np.concatenate([c, np.zeros(n - len(c))])
        total = self.total * other.total
        err = e + self.err * other.total + other.err * self.total
        return LatticeDist(self.origin + other.origin, self.step, c, max(total - c.sum(), 0.0), err)


def default_step(G, T, x_hi=None):
    """``min(T/64, narrowest ramp / 16)`` over the ramps below ``x_hi``."""
    step = T / 64.0
    cp = getattr(G, "cycle_points", None) or getattr(getattr(G, "base", None), "cycle_points", None)
    if cp is not None:
        widths = [float(b - a) for a, b in cp() if x_hi is None or a < x_hi]
        if widths:
            step = min(step, min(widths) / 16.0)
    return step


def discretize(G, step, n_cells, mode="lower"):
    """Lattice image of ``G`` on ``[0, n_cells*step)``: cell masses at left (lower) or right (upper) edges."""
    if G.support_lo < 0:
        raise ValueError("lattice discretisation needs support on [0, inf)")
    edges = step * np.arange(n_cells + 1)
    tails = np.asarray(G.tail_array(edges), dtype=float)
    total = float(getattr(G, "total_mass", 1.0))
    masses = np.empty(n_cells)
    masses[0] = total - tails[1]
    masses[1:] = tails[1:-1] - tails[2:]
    masses = np.maximum(masses, 0.0)
    origin = 0.0 if mode == "lower" else step
    if mode not in ("lower", "upper"):
        raise ValueError("mode must be 'lower' or 'upper'")
    return LatticeDist(origin, step, masses, float(tails[-1]))


def lattice_power(L, n, n_cells):
    out = L
    for _ in range(n - 1):
        out = out.convolve(L, n_cells)
    return out


@dataclass(frozen=True)
class Bracket:
    estimate: float
    lo: float
    hi: float
    step: float = 0.0
    extra: dict = field(default_factory=dict)

    def __iter__(self):
        yield self.estimate
        yield self.lo
        yield self.hi


def _bracket_from(Ln, Un, x, T):
    tl_x, tu_x = Ln.tail_at(x), Un.tail_at(x)
    tl_y, tu_y = Ln.tail_at(x + T), Un.tail_at(x + T)
    slack = Ln.tail_err(x) + Un.tail_err(x + T) + Un.tail_err(x) + Ln.tail_err(x + T)
    lo = max(tl_x - tu_y - slack, 0.0)
    hi = tu_x - tl_y + slack
    # half weight on endpoint atoms, interpolated between lattice points, keeps the estimate second order
    est = 0.5 * (Ln.tail_interp(x) + Un.tail_interp(x)) - 0.5 * (Ln.tail_interp(x + T) + Un.tail_interp(x + T))
    return est, lo, hi


def nfold_local(G, n, x, T, step=None, spec=DEFAULT_QUAD):
    """``G^{*n}(x + Delta_T)`` with a certified discretisation bracket.

    ``estimate`` is the window of the averaged left/right lattice tails.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not T > 0:
        raise ValueError("window length T must be positive")
    if n == 1:
        v = float(G.local_prob_mp(x, T))
        return Bracket(v, v, v, 0.0)
    step = step or default_step(G, T, x + T)
    n_cells = int(np.ceil((x + T) / step)) + 2
    if n_cells > 4_000_000:
        raise MemoryError(f"lattice of {n_cells} cells exceeds the budget")
    L = discretize(G, step, n_cells, "lower")
    U = discretize(G, step, n_cells, "upper")
    Ln, Un = lattice_power(L, n, n_cells), lattice_power(U, n, n_cells)
    est, lo, hi = _bracket_from(Ln, Un, x, T)
    return Bracket(est, lo, hi, step)


def nfold_series(G, n_max, x_grid, T, step=None):
    """Brackets of ``G^{*n}`` windows for n = 1..n_max at every x in ``x_grid`` (one lattice pass)."""
    x_grid = np.asarray(x_grid, dtype=float)
    top = float(x_grid.max()) + T
    step = step or default_step(G, T, top)
    n_cells = int(np.ceil(top / step)) + 2
    L = discretize(G, step, n_cells, "lower")
    U = discretize(G, step, n_cells, "upper")
    out = np.zeros((n_max, len(x_grid), 3))
    Ln, Un = L, U
    for n in range(1, n_max + 1):
        if n > 1:
            Ln, Un = Ln.convolve(L, n_cells), Un.convolve(U, n_cells)
        for i, x in enumerate(x_grid):
            out[n - 1, i] = _bracket_from(Ln, Un, x, T)
    return out, step


def panjer_geometric(L, p):
    """Lattice compound geometric ``(1 - p) sum_{n>=0} p^n L^{*n}`` (origin-0 lattice)."""
    if L.origin not in (0.0,) and abs(L.origin - L.step) > 1e-15:
        raise ValueError("Panjer recursion needs an origin-0 or origin-step lattice")
    g = L.masses
    if L.origin != 0.0:
        g = np.concatenate([[0.0], g[:-1]])
    w = backend().panjer_geometric(np.ascontiguousarray(g, dtype=float), float(p))
    return LatticeDist(0.0, L.step, w, max(1.0 - w.sum(), 0.0))
