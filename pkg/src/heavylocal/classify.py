"""Finite-horizon estimates of the class constants and membership verdicts.

Every estimator evaluates a ratio along probe points tied to the breakpoint
cycles of the distribution and summarises it by per-cycle extremes.  Limits
at infinity are not decidable from finite data, so verdicts read
"consistent", "inconsistent" or "inconclusive" at the probed horizon.

Verdict rules (``tol`` is relative, default 5%):

* convergence to a target: the per-cycle worst deviation over the last three
  cycles must fall within ``tol`` and either be negligible (< 1e-6) or shrink
  by at least half across those cycles.  A deviation inside ``tol`` that has
  stalled at a nonzero level means the limit differs from the target, and is
  reported inconsistent; a shrinking deviation still outside ``tol`` is
  inconclusive.
* finiteness of a limsup: per-cycle maxima growing by a factor >= 2 across
  each of the last three cycles is reported as diverging (a heuristic that
  matches linear-in-x_n growth).
"""
from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass, field

from ._mp import MP, ONE, ZERO, mpf
from .distops import DivergenceError
from .convolve import DEFAULT_QUAD, conv2_tail, conv_local, star_integral, window_integral

SCHEMA = "heavylocal.classreport/1"
FLOAT_CAP = mpf(10) ** 300
STALL_FLOOR = 1e-6


class Quantity(str, enum.Enum):
    CONV2_RATIO = "conv2_ratio"
    STAR_RATIO = "star_ratio"
    WINDOW_RATIO = "window_ratio"
    LOCAL_CONV_RATIO = "local_conv_ratio"
    LONGTAIL_RATIO = "longtail_ratio"
    LOCAL_LONGTAIL_RATIO = "local_longtail_ratio"


class Verdict(str, enum.Enum):
    CONSISTENT = "consistent"
    INCONSISTENT = "inconsistent"
    INCONCLUSIVE = "inconclusive"


def _cycles_of(F):
    for obj in (F, getattr(F, "base", None), getattr(getattr(F, "base", None), "base", None)):
        cp = getattr(obj, "cycle_points", None)
        if cp is not None:
            shift = ZERO
            if obj is not F and hasattr(F, "a"):
                shift = mpf(F.a)
            out = cp()
            all_starts = [s.a - obj._shift for s in obj.segments[2::2]]
            return [(a - shift, b - shift, (all_starts[i + 1] - shift) if i + 1 < len(all_starts) else None)
                    for i, (a, b) in enumerate(out)]
    raise ValueError("probe construction needs a distribution built from a breakpoint family")


def probe_points(F, strategy="breakpoints", cap="float", n_geo=4):
    """Probes per cycle: start ``x_n``, ramp midpoint, ramp end, plateau midpoint.

    Returns a list of ``(cycle_index, x)`` with x strictly increasing.
    ``strategy='geometric'`` adds ``n_geo`` log-uniform points between
    consecutive probes.  ``cap='float'`` keeps x below 1e300 (integral
    quantities); ``cap='exponent'`` keeps every generated cycle.
    """
    if strategy not in ("breakpoints", "geometric"):
        raise ValueError(f"unknown probe strategy {strategy!r}")
    limit = FLOAT_CAP if cap == "float" else MP.inf
    pts = []
    for i, (a, b, c) in enumerate(_cycles_of(F)):
        cyc = [a, (a + b) / 2, b]
        if c is not None:
            cyc.append((b + c) / 2)
        for x in cyc:
            if 0 < x < limit:
                pts.append((i, x))
    if strategy == "geometric":
        dense = []
        for (i, x), (_, y) in zip(pts[:-1], pts[1:]):
            dense.append((i, x))
            lx, ly = MP.log(x), MP.log(y)
            for k in range(1, n_geo + 1):
                dense.append((i, MP.exp(lx + (ly - lx) * k / (n_geo + 1))))
        dense.append(pts[-1])
        pts = dense
    return pts


@dataclass
class RatioSeries:
    """Ratios along increasing probes, with per-cycle summaries."""

    quantity: Quantity
    probes: list
    values: list
    cycles: list
    errors: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    def __post_init__(self):
        for a, b in zip(self.probes[:-1], self.probes[1:]):
            if not b > a:
                raise ValueError("probes must be strictly increasing")

    @property
    def log_probes(self):
        return [float(MP.log(x)) for x in self.probes]

    @property
    def running_inf(self):
        out, cur = [], MP.inf
        for v in self.values:
            cur = min(cur, v)
            out.append(cur)
        return out

    @property
    def running_sup(self):
        out, cur = [], -MP.inf
        for v in self.values:
            cur = max(cur, v)
            out.append(cur)
        return out

    def cycle_extremes(self):
        """{cycle: (min, max)} over that cycle's probes."""
        ext = {}
        for c, v in zip(self.cycles, self.values):
            lo, hi = ext.get(c, (v, v))
            ext[c] = (min(lo, v), max(hi, v))
        return [ext[c] for c in sorted(ext)]

    def horizon(self, last=3):
        """(inf, sup) over the probes of the last ``last`` cycles."""
        if not self.values:
            return (MP.nan, MP.nan)
        keep = sorted(set(self.cycles))[-last:]
        vals = [v for c, v in zip(self.cycles, self.values) if c in keep]
        return (min(vals), max(vals))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["log_x", "ratio", "running_inf", "running_sup", "error"])
        errs = self.errors or [ZERO] * len(self.values)
        for lx, v, lo, hi, e in zip(self.log_probes, self.values, self.running_inf, self.running_sup, errs):
            w.writerow([repr(lx), _fmt(v), _fmt(lo), _fmt(hi), _fmt(e)])
        return buf.getvalue()


def _fmt(v):
    return MP.nstr(mpf(v), 17)


def _series(quantity, F, probes, fn):
    xs, vals, cyc, errs, skipped = [], [], [], [], []
    for c, x in probes:
        r = fn(x)
        if r is None:
            skipped.append(x)
            continue
        v, e = r
        xs.append(x)
        vals.append(v)
        cyc.append(c)
        errs.append(e)
    return RatioSeries(quantity, xs, vals, cyc, errs, skipped)


def estimate_Cstar(F, probes=None, spec=DEFAULT_QUAD):
    """Two-fold tail ratio ``Fbar^{*2}(x) / Fbar(x)``: returns ``(lo, hi, series)``."""
    probes = probes if probes is not None else probe_points(F)

    def fn(x):
        r = conv2_tail(F, F, x, spec)
        t = F.tail_mp(x)
        return r.value_mp / t, r.error_mp / t

    s = _series(Quantity.CONV2_RATIO, F, probes, fn)
    lo, hi = s.horizon()
    return lo, hi, s


def estimate_Cotimes(F, probes=None, h=None, spec=DEFAULT_QUAD):
    """Star-integral ratio and its middle-window part.

    Returns ``(lo, hi, series, window_series)``: ``lo``/``hi`` summarise
    ``int_0^x Fbar(x-y)Fbar(y)dy / Fbar(x)``; the window series holds
    ``int_{h(x)}^{x-h(x)} ... / Fbar(x)``, the estimate of ``C_otimes - 2EX``.
    """
    probes = probes if probes is not None else probe_points(F)
    h = h or HFunction()

    def star(x):
        r = star_integral(F, x, spec)
        t = F.tail_mp(x)
        return r.value_mp / t, r.error_mp / t

    def win(x):
        hx = h(x)
        if not hx < x / 2:
            return None
        r = window_integral(F, x, hx, "tail-vs-tail", spec=spec)
        t = F.tail_mp(x)
        return r.value_mp / t, r.error_mp / t

    s = _series(Quantity.STAR_RATIO, F, probes, star)
    w = _series(Quantity.WINDOW_RATIO, F, probes, win)
    lo, hi = s.horizon()
    return lo, hi, s, w


def estimate_CT(F, T=1.0, probes=None, spec=DEFAULT_QUAD):
    """Local ratio ``F^{*2}(x+Delta_T) / F(x+Delta_T)``; probes with zero local mass are skipped."""
    probes = probes if probes is not None else probe_points(F)

    def fn(x):
        den = F.local_prob_mp(x, T)
        if den <= 0:
            return None
        r = conv_local(F, F, x, T, spec)
        return r.value_mp / den, r.error_mp / den

    s = _series(Quantity.LOCAL_CONV_RATIO, F, probes, fn)
    lo, hi = s.horizon()
    return lo, hi, s


def t_quantity(F, x, spec=DEFAULT_QUAD):
    """``2 / Fbar(x) * int_{x/2}^{x} Fbar(x - y) dF(y)``, the part of the two-fold ratio beyond 2."""
    from .convolve import _kinks, integrate_cells

    x = mpf(x)
    with MP.workdps(max(MP.dps, 40)):
        pts = [ZERO, x / 2] + [k for k in (x - b for b in _kinks(F, x / 2, x)) if 0 < k < x / 2] \
            + list(F.breaks(0, x / 2))
        sq = [ZERO] if F.has_sqrt else []
        r = integrate_cells(lambda z: F.tail_mp(z) * F.density_mp(x - z), pts, spec, None, sq)
        return 2 * r.value_mp / F.tail_mp(x)


# -- insensitivity function ----------------------------------------------------


@dataclass(frozen=True)
class HFunction:
    """``h(x) = x ** beta`` for ``beta`` in (0, 1); monotone increasing and o(x)."""

    beta: float = 0.5

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValueError("h(x) = x^beta needs 0 < beta < 1")

    def __call__(self, x):
        return mpf(x) ** mpf(self.beta)

    def describe(self):
        return f"x^{self.beta}"


def _uniform_ratio_dev(F, x, h, T=None):
    """max over y in {+-1, +-h(x)/2} of |ratio - 1| for tails (T None) or windows."""
    x = mpf(x)
    hx = h(x)
    worst = ZERO
    with MP.workdps(max(MP.dps, int(MP.log10(x)) + 30 if x > 1 else 40)):
        base = F.tail_mp(x) if T is None else F.local_prob_mp(x, T)
        if base <= 0:
            return None
        for y in (ONE, -ONE, hx / 2, -hx / 2):
            if x + y < 0:
                continue
            v = F.tail_mp(x + y) if T is None else F.local_prob_mp(x + y, T)
            worst = max(worst, abs(v / base - 1))
    return worst


BETA_GRID = (0.5, 0.45, 0.4, 1 / 3, 0.25, 0.2)


def choose_h(F, T=None, beta=None, tol=0.01, probes=None):
    """Insensitivity function ``h(x) = x^beta`` validated at the horizon probes.

    With ``beta=None`` the grid 1/2, 0.45, 0.4, 1/3, 1/4, 1/5 is tried in
    order and the first exponent whose uniform-ratio deviation stays below
    ``tol`` on the last three cycles is returned.
    """
    if beta is not None and beta >= 1:
        raise ValueError("h(x) must be o(x); beta >= 1 rejected")
    probes = probes if probes is not None else probe_points(F, cap="exponent")
    keep = sorted({c for c, _ in probes})[-3:]
    failure = None
    for b in ([beta] if beta is not None else BETA_GRID):
        h = HFunction(b)
        failure = None
        for c, x in probes:
            if c not in keep:
                continue
            if not h(x) < x / 2:
                raise ValueError(f"h(x) >= x/2 at probe x={MP.nstr(x, 8)}")
            d = _uniform_ratio_dev(F, x, h, T)
            if d is not None and d > tol:
                failure = f"uniform-ratio check failed for h=x^{b:.4g} at x={MP.nstr(x, 8)}: deviation {MP.nstr(d, 4)}"
                break
        if failure is None:
            return h
    raise ValueError(failure)


def is_long_tailed(F, tol=0.05, h=None, probes=None):
    """Verdict and worst deviation of ``Fbar(x+y)/Fbar(x)`` from 1 on the last three cycles."""
    return _longtail(F, None, tol, h, probes)


def is_locally_long_tailed(F, T=1.0, tol=0.05, h=None, probes=None):
    """Same check for window masses ``F(x+y+Delta_T)/F(x+Delta_T)``."""
    return _longtail(F, T, tol, h, probes)


def _longtail(F, T, tol, h, probes):
    h = h or HFunction()
    probes = probes if probes is not None else probe_points(F, cap="exponent")
    keep = sorted({c for c, _ in probes})[-3:]
    devs = [d for c, x in probes if c in keep for d in [_uniform_ratio_dev(F, x, h, T)] if d is not None]
    if not devs:
        return Verdict.INCONCLUSIVE, None
    worst = max(devs)
    return (Verdict.CONSISTENT if worst < tol else Verdict.INCONSISTENT), float(worst)


# -- verdict logic ------------------------------------------------------------------


def converges_to(series, target, tol=0.05, last=3):
    """Verdict for ``lim ratio = target`` from the per-cycle worst deviations."""
    ext = series.cycle_extremes()
    if len(ext) < last:
        return Verdict.INCONCLUSIVE
    target = mpf(target)
    devs = [max(abs(lo - target), abs(hi - target)) / abs(target) for lo, hi in ext[-last:]]
    d = devs[-1]
    shrinking = all(b < a for a, b in zip(devs[:-1], devs[1:])) and devs[-1] <= devs[0] / 2
    if d < STALL_FLOOR or (d <= tol and shrinking):
        return Verdict.CONSISTENT
    if shrinking:
        return Verdict.INCONCLUSIVE
    return Verdict.INCONSISTENT


def diverging(series, factor=2.0, last=3):
    """True when per-cycle maxima grow by ``factor`` across each of the last ``last`` cycles."""
    ext = series.cycle_extremes()
    if len(ext) < last + 1:
        return False
    mx = [hi for _, hi in ext[-(last + 1):]]
    return all(b >= factor * a for a, b in zip(mx[:-1], mx[1:]))


def bounded(series, last=3):
    if len(series.cycle_extremes()) < last + 1:
        return Verdict.INCONCLUSIVE
    if diverging(series):
        return Verdict.INCONSISTENT
    mx = [hi for _, hi in series.cycle_extremes()[-(last + 1):]]
    if all(b > a for a, b in zip(mx[:-1], mx[1:])) and mx[-1] > 1.25 * mx[0]:
        # still climbing noticeably, but slower than the divergence rule
        return Verdict.INCONCLUSIVE
    return Verdict.CONSISTENT


def _and(*vs):
    if Verdict.INCONSISTENT in vs:
        return Verdict.INCONSISTENT
    if Verdict.INCONCLUSIVE in vs:
        return Verdict.INCONCLUSIVE
    return Verdict.CONSISTENT


@dataclass
class ClassReport:
    distribution: dict
    T: float
    h: str
    constants: dict
    verdicts: dict
    horizon: dict
    caveats: list
    series: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        return {
            "schema": SCHEMA,
            "distribution": self.distribution,
            "T": self.T,
            "h": self.h,
            "constants": self.constants,
            "verdicts": {k: v.value for k, v in self.verdicts.items()},
            "horizon": self.horizon,
            "caveats": self.caveats,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _pair(lo, hi):
    return [float(lo), float(hi)]


def classify_report(F, T=1.0, tol=0.05, h=None, local=True, spec=DEFAULT_QUAD):
    """Run every estimator on ``F`` and derive the class verdicts."""
    caveats = []
    if h is None:
        try:
            h = choose_h(F, tol=tol)
        except ValueError as exc:
            h = HFunction(BETA_GRID[-1])
            caveats.append(f"no exponent on the h grid passed validation ({exc})")
    probes = probe_points(F)
    try:
        mu = F.mean_mp()
    except DivergenceError:
        mu = None
    c_lo, c_hi, s_conv = estimate_Cstar(F, probes, spec)
    L, L_dev = is_long_tailed(F, tol, h)
    S = _and(L, converges_to(s_conv, 2, tol))
    OS = bounded(s_conv)
    constants = {"C_star": _pair(c_lo, c_hi), "EX": None if mu is None else float(mu)}
    series = {"conv2": s_conv}
    if mu is None:
        # int_0^x Fbar(x-y)Fbar(y)dy >= Fbar(x) int_0^x Fbar, so the star ratio is unbounded
        Sstar = OSstar = Verdict.INCONSISTENT
        constants["C_otimes"] = None
        caveats.append("infinite mean: star-integral ratio unbounded, S* and OS* excluded")
    else:
        o_lo, o_hi, s_star, s_win = estimate_Cotimes(F, probes, h, spec)
        Sstar = _and(L, converges_to(s_star, 2 * mu, tol))
        OSstar = bounded(s_star)
        constants["C_otimes"] = _pair(o_lo, o_hi)
        constants["C_otimes_minus_2EX"] = _pair(*s_win.horizon()) if s_win.values else None
        series.update({"star": s_star, "window": s_win})
    verdicts = {"L": L, "S": S, "OS": OS, "Sstar": Sstar, "OSstar": OSstar}
    caveats += [
        "verdicts describe the probed horizon, not limits at infinity",
        "divergence uses the factor-2-per-cycle heuristic",
        "O(.) claims are read as ratio-limsup <= 1",
    ]
    if getattr(F, "truncated", False):
        caveats.append("breakpoint sequence truncated at the exponent cap")
    if local:
        try:
            h_loc = choose_h(F, T=T, tol=tol)
        except ValueError as exc:
            h_loc = HFunction(BETA_GRID[-1])
            caveats.append(f"local h validation failed ({exc})")
        t_lo, t_hi, s_loc = estimate_CT(F, T, probes, spec)
        LT, LT_dev = is_locally_long_tailed(F, T, tol, h_loc)
        constants["C_T"] = _pair(t_lo, t_hi) if s_loc.values else None
        if s_loc.skipped:
            caveats.append(f"{len(s_loc.skipped)} probes with zero window mass skipped for C_T")
        verdicts.update({"L_T": LT, "S_T": _and(LT, converges_to(s_loc, 2, tol)), "OS_T": bounded(s_loc)})
        series["local"] = s_loc
    top = probes[-1][1]
    return ClassReport(
        distribution=F.to_dict(),
        T=float(T),
        h=h.describe(),
        constants=constants,
        verdicts=verdicts,
        horizon={"cycles": len({c for c, _ in probes}), "log_x_max": float(MP.log(top)), "tol": tol},
        caveats=caveats,
        series=series,
    )
