"""Supremum of a random walk with negative drift.

``M = sup_{n>=0} S_n`` has the compound geometric law
``W = (1 - p) sum_n p^n G^{*n}`` where ``p`` is the probability of a strict
ascent and ``G`` the law of the first ascending ladder height.  This module
builds ``(p, G)`` three ways (closed form for exponential inter-arrival
times, a lattice Wiener-Hopf solve for constant down-steps, Monte Carlo),
evaluates windows ``W((x, x + T])`` with certified brackets, and checks the
local bounds that relate ``W`` to the increment tail.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._mp import mpf
from .classify import (HFunction, _uniform_ratio_dev, estimate_Cotimes, estimate_CT, probe_points)
from .convolve import (LatticeDist, _bracket_from, default_step, discretize, nfold_series,
                       panjer_geometric, window_integral)
from .distops import Dist, Exponential, integrated_tail, shift
from .kernels import backend
from .tailfn import ParameterError

SCHEMA = "heavylocal.supremum/1"


# -- walk model ----------------------------------------------------------------


@dataclass(frozen=True)
class WalkModel:
    """Increments ``X = Y - c Z`` with ``Y`` on ``[0, inf)``.

    ``down=None`` means ``Z = 1`` (a constant down-step ``c``).  An
    exponential ``Z`` is the compound Poisson case with closed-form ladder
    data; any other law on ``[0, inf)`` with ``sample`` and ``mean`` is
    accepted for simulation.
    """

    up: object
    c: float = 1.0
    down: Optional[object] = None

    def __post_init__(self):
        if not self.c > 0:
            raise ParameterError("the down-step scale c must be positive")
        if self.up.support_lo < 0:
            raise ParameterError("the up-step law must live on [0, inf)")
        if self.down is not None and self.down.support_lo < 0:
            raise ParameterError("the down-step law must live on [0, inf)")
        if not self.mu > 0:
            raise ParameterError(f"drift must be negative: -EX = {self.mu:.6g} <= 0")

    @classmethod
    def exponential_family(cls, c=2.0):
        """``Y, Z ~ Exp(1)``: ``p = 1/c`` and exponential ladder heights with mean 1."""
        return cls(Exponential(1.0), c, Exponential(1.0))

    @property
    def deterministic_down(self):
        return self.down is None

    @property
    def mean_down(self):
        return self.c * (1.0 if self.down is None else self.down.mean())

    @property
    def mu(self):
        return self.mean_down - self.up.mean()

    @property
    def ex_plus(self):
        """``E X^+``."""
        if self.down is None:
            return float(self.up.upper_integral_mp(self.c))
        if not isinstance(self.down, Exponential):
            raise NotImplementedError("E X^+ is tabulated for constant or exponential down-steps only")
        # E(Y - cZ)^+ with Z ~ Exp(r): EY - (c/r)(1 - E exp(-r Y / c))
        from .distops import mgf
        r = self.down.rate
        lap, _ = mgf(self.up, -r / self.c)
        return self.up.mean() - self.c / r * (1.0 - float(lap))

    def increment_dist(self):
        """Law of ``X`` as a distribution object (constant down-steps only)."""
        if self.down is not None:
            raise NotImplementedError("the increment law is only tabulated for constant down-steps")
        return shift(self.up, self.c)

    def sample_increments(self, rng, size):
        y = np.asarray(self.up.sample(rng, size), dtype=float)
        z = 1.0 if self.down is None else np.asarray(self.down.sample(rng, size), dtype=float)
        return y - self.c * z

    def to_dict(self):
        return {"up": self.up.to_dict(), "c": self.c,
                "down": None if self.down is None else self.down.to_dict(), "mu": self.mu}


# -- ladder data ---------------------------------------------------------------


@dataclass
class LatticeLadder:
    """Ladder data from the lattice Wiener-Hopf solve on rounded-down, nearest and rounded-up increments.

    ``lower`` / ``upper`` are ``(p, g)`` pairs with ``g[k]`` the ladder-height
    mass at ``k * step`` (``g[0] = 0``).  The supremum of the rounded-down
    walk is stochastically below the true one and the rounded-up walk above,
    which gives certified brackets.
    """

    step: float
    lower: tuple
    upper: tuple
    diagnostics: dict = field(default_factory=dict)
    mid: Optional[tuple] = None  # round-to-nearest increments: the point estimate

    @property
    def n_cells(self):
        return len(self.lower[1])

    @property
    def x_max(self):
        """Largest x at which the lattice ladder law is trusted."""
        return self.diagnostics.get("x_trusted", (self.n_cells - 1) * self.step)

    def lattices(self):
        return [(self.lower[0], LatticeDist(0.0, self.step, self.lower[1])),
                (self.upper[0], LatticeDist(0.0, self.step, self.upper[1]))]


@dataclass
class EmpiricalLadder:
    """Ascending ladder heights observed in simulation."""

    heights: np.ndarray
    step: float

    def lattices(self, p):
        h = np.asarray(self.heights, dtype=float)
        lo_idx = np.floor(h / self.step).astype(np.int64)
        hi_idx = np.ceil(h / self.step).astype(np.int64)
        hi_idx = np.maximum(hi_idx, 1)  # strict ascents are positive
        n = int(hi_idx.max()) + 1 if len(h) else 1
        out = []
        for idx in (lo_idx, hi_idx):
            g = np.bincount(idx, minlength=n).astype(float) / max(len(h), 1)
            out.append((p, LatticeDist(0.0, self.step, g)))
        return out


@dataclass
class LadderData:
    """Ascent probability ``p`` and ladder-height law ``G``.

    ``G`` is a distribution object (analytic), a :class:`LatticeLadder`, or an
    :class:`EmpiricalLadder`.
    """

    p: float
    G: object
    source: str
    n_paths: int = 0
    barrier: float = 0.0
    p_stderr: float = 0.0
    bias: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ParameterError(f"ascent probability must lie in (0, 1), got {self.p}")

    def to_dict(self):
        d = {"p": self.p, "source": self.source, "n_paths": self.n_paths, "barrier": self.barrier,
             "p_stderr": self.p_stderr, "bias": self.bias}
        if isinstance(self.G, Dist) or hasattr(self.G, "to_dict"):
            d["G"] = self.G.to_dict()
        d.update(self.extra)
        return d


def ladder_analytic(model):
    """Closed-form ladder data for exponential down-steps: ``p = EY/(c EZ)``, ``G = integrated tail of Y``."""
    if not isinstance(model.down, Exponential):
        raise ParameterError("closed-form ladder data needs exponential down-steps")
    p = model.up.mean() / model.mean_down
    G = integrated_tail(model.up)
    if isinstance(model.up, Exponential):
        G = Exponential(model.up.rate)
    return LadderData(p, G, "analytic")


SIDES = (("lower", 0.0), ("mid", 0.5), ("upper", 1.0))


def _renewal(hm, J):
    """Renewal measure ``nu(j)``, j = 0..J, of weak descending ladder heights (``hm[i]`` = mass at -i)."""
    A = len(hm) - 1
    c = 1.0 / (1.0 - hm[0])
    nu = np.zeros(J + 1)
    nu[0] = c
    w = hm[1:]
    for j in range(1, J + 1):
        m = min(j, A)
        nu[j] = c * float(np.dot(w[:m], nu[j - 1::-1][:m]))
    return nu


def _wiener_hopf(f_neg, f_pos, tail_from, step, mean_x, tol=1e-14, max_iter=500):
    """Lattice ladder factorisation ``delta - f = (delta - h+) * (delta - h-)``.

    ``f_neg[t]`` is the increment mass at ``(t - A) * step`` for t = 0..A,
    ``f_pos[k - 1]`` the mass at ``k * step``; ``tail_from(k)`` returns the
    increment mass at indices ``>= k`` for arrays of k beyond ``f_pos``.
    The strict ascending part is solved backwards, the weak descending
    part forwards, and the two are iterated to a fixed point.
    """
    be = backend()
    A = len(f_neg) - 1
    J = 4 * A
    K = len(f_pos) - A - J
    hmF = f_neg.copy()  # indexed by t = k + A
    prev = None
    it = 0
    for it in range(1, max_iter + 1):
        hm = hmF[::-1].copy()  # hm[i] = mass at -i
        nu = _renewal(hm, J)
        nu_inf = 1.0 / float(np.dot(np.arange(A + 1), hm)) if A else 0.0
        ks = np.arange(K + 1, K + A + 1)  # boundary indices (1-based)
        bnd = np.array([float(np.dot(nu, f_pos[k - 1:k + J])) for k in ks]) if A else np.zeros(0)
        if A:
            bnd += nu_inf * tail_from(ks + J + 1)
        hp = np.concatenate([np.zeros(K), bnd])
        hp = be.ladder_backward(f_pos[:K], hm, hp)
        new = np.empty(A + 1)
        for t in range(A + 1):
            new[t] = f_neg[t] + (float(np.dot(hp[:t], new[t - 1::-1][:t])) if t else 0.0)
        hmF = new
        if prev is not None and np.max(np.abs(hmF - prev)) < tol:
            break
        prev = hmF
    hm = hmF[::-1]
    e_desc = step * float(np.dot(np.arange(A + 1), hm))
    p = 1.0 - (-mean_x) / e_desc
    return {"p": p, "h_plus": hp[:K], "h_minus": hm, "iterations": it, "sum_h_minus": float(hm.sum()),
            "p_direct": float(hp[:K].sum()), "e_desc": e_desc}


def ladder_lattice(model, step, x_max, tol=1e-14):
    """Ladder data for constant down-steps from the lattice Wiener-Hopf factorisation.

    The down-step ``c`` is required to be a multiple of ``step`` (the step is
    adjusted down to the nearest divisor).  ``p`` is taken from the exact
    lattice identity ``mu = (1 - p) E|H_-|`` rather than by summing ``h+``,
    which would need the ladder law beyond the grid.
    """
    if model.down is not None:
        raise ParameterError("the lattice solve needs constant down-steps")
    A = max(int(math.ceil(model.c / step - 1e-9)), 1)
    step = model.c / A
    Y = model.up
    K = int(math.ceil(x_max / step)) + A + 2
    J = 4 * A
    n_y = K + 2 * A + J + 2
    out = {}
    for side, off in SIDES:
        # Y is sent to index m when Y lies in ((m - off) step, (m + 1 - off) step]
        edges = step * (np.arange(n_y + 2) - off)
        ty = np.where(edges < 0, 1.0, np.asarray(Y.tail_array(np.maximum(edges, 0.0)), dtype=float))
        g = np.empty(n_y + 1)
        g[0] = 1.0 - ty[1]
        g[1:] = ty[1:-1] - ty[2:]
        g = np.maximum(g, 0.0)
        f_neg = g[:A + 1].copy()
        f_pos = g[A + 1:A + 1 + K + A + J].copy()

        def tail_from(ks, off=off):
            return np.asarray(Y.tail_array((ks + A - off) * step), dtype=float)

        # E[rounded Y] = step * sum_{m>=1} Ybar((m - off) step); far tail by the midpoint integral
        ey = step * float(ty[1:].sum()) + float(Y.upper_integral_mp((n_y + 1.5 - off) * step))
        out[side] = _wiener_hopf(f_neg, f_pos, tail_from, step, ey - model.c, tol)
    sides = {k: (d["p"], np.concatenate([[0.0], d["h_plus"] / d["p"]])) for k, d in out.items()}
    diag = {side: {k: v for k, v in d.items() if k not in ("h_plus", "h_minus")} for side, d in out.items()}
    diag["x_trusted"] = float(x_max)
    diag["step"] = step
    lad = LatticeLadder(step, sides["lower"], sides["upper"], diag, mid=sides["mid"])
    return LadderData(sides["mid"][0], lad, "lattice",
                      extra={"p_lower": sides["lower"][0], "p_upper": sides["upper"][0], "step": step})


# -- compound geometric windows ------------------------------------------------


@dataclass
class CompoundGeometric:
    """``W = (1 - p) sum_{n>=0} p^n G^{*n}`` with a truncation policy and Kesten parameters.

    ``refined`` optionally holds ladder data of the same walk on a half-size
    lattice; lattice routes then extrapolate over the two steps.
    """

    ladder: LadderData
    tol: float = 1e-8
    n_max: int = 2000
    eps: float = 0.5
    C_T: Optional[float] = None
    x1: float = math.inf
    refined: Optional[LadderData] = None

    @property
    def p(self):
        return self.ladder.p

    @property
    def G(self):
        return self.ladder.G

    @property
    def K(self):
        return 8.0 / (3.0 * self.eps)

    @property
    def kesten_rate(self):
        """``p (C_T - 1 + eps)``; the Kesten residual needs it below 1."""
        if self.C_T is None:
            return math.inf
        return self.p * (self.C_T - 1.0 + self.eps)


@dataclass
class CGResult:
    """One window ``W((x, x + T])``.

    ``residual`` bounds the series truncation, ``disc_error`` estimates the
    lattice error of ``value`` and ``[lo, hi]`` is the certified bracket
    (truncation included).
    """

    x: float
    T: float
    value: float
    residual: float
    disc_error: float
    lo: float
    hi: float
    n_terms: int
    route: str
    step: float
    flagged: bool = False
    note: str = ""

    @property
    def error(self):
        return self.residual + self.disc_error

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("x", "T", "value", "residual", "disc_error", "lo", "hi", "n_terms", "route", "step",
                 "flagged", "note")}


def _check_windows(xs, T):
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if not T > 0:
        raise ValueError("window length T must be positive")
    if np.any(xs < 0):
        raise ValueError("compound geometric windows need x >= 0 (the n = 0 atom sits at 0)")
    return xs


def cg_local(cg, x, T, tol=None, route="auto", step=None):
    """``W((x, x + T])`` for a single window; see :func:`cg_windows`."""
    return cg_windows(cg, [x], T, tol, route, step)[0]


def cg_windows(cg, xs, T, tol=None, route="auto", step=None):
    """Windows of the compound geometric law at every x in ``xs``.

    Routes: ``series`` (analytic G, explicit truncation with the smaller of
    the trivial ``p^{N+1}`` and Kesten residual bounds), ``panjer`` (analytic
    G, whole sum by recursion) and ``lattice`` (ladder data that already lives
    on a lattice: Wiener-Hopf or simulated heights).
    """
    xs = _check_windows(xs, T)
    tol = cg.tol if tol is None else tol
    G = cg.G
    if isinstance(G, (LatticeLadder, EmpiricalLadder)):
        if route not in ("auto", "lattice"):
            raise ValueError(f"route {route!r} needs analytic ladder heights")
        return _windows_lattice(cg, xs, T)
    if route == "auto":
        route = "series"
    if route == "series":
        return _windows_series(cg, xs, T, tol, step)
    if route == "panjer":
        return _windows_panjer(cg, xs, T, step)
    raise ValueError(f"unknown route {route!r}")


def _kesten_residual(cg, N, local1):
    q = cg.kesten_rate
    if not q < 1:
        return math.inf
    return (1 - cg.p) * cg.K * local1 * q ** (N + 1) / (1 - q)


def _windows_series(cg, xs, T, tol, step):
    G, p = cg.G, cg.p
    top = float(xs.max()) + T
    step = step or default_step(G, T, top)
    local1 = np.array([float(G.local_prob_mp(x, T)) for x in xs])
    levels = []
    for s in (step, step / 2):
        n_cells = int(math.ceil(top / s)) + 2
        levels.append((discretize(G, s, n_cells, "lower"), discretize(G, s, n_cells, "upper"), n_cells))
    est = np.zeros((2, len(xs)))
    lo = np.zeros(len(xs))
    hi = np.zeros(len(xs))
    w1 = (1 - p) * p
    est += w1 * local1
    lo += w1 * local1
    hi += w1 * local1
    powers = [(L, U) for L, U, _ in levels]
    N, flagged = 1, False
    resid = np.full(len(xs), p ** 2)
    while True:
        kest = np.array([_kesten_residual(cg, N, l) if x >= cg.x1 else math.inf for x, l in zip(xs, local1)])
        resid = np.minimum(p ** (N + 1), kest)
        if np.all(resid <= tol * np.abs(est[1])) or np.all(resid < 1e-300):
            break
        if N >= cg.n_max:
            flagged = True
            break
        N += 1
        wn = (1 - p) * p ** N
        for li, (L, U, n_cells) in enumerate(levels):
            Ln, Un = powers[li]
            Ln, Un = Ln.convolve(L, n_cells), Un.convolve(U, n_cells)
            powers[li] = (Ln, Un)
            for i, x in enumerate(xs):
                e, a, b = _bracket_from(Ln, Un, x, T)
                est[li, i] += wn * e
                if li == 1:
                    lo[i] += wn * a
                    hi[i] += wn * b
    value = (4 * est[1] - est[0]) / 3
    out = []
    for i, x in enumerate(xs):
        out.append(CGResult(float(x), T, float(value[i]), float(resid[i]), float(abs(value[i] - est[1, i])),
                            float(lo[i]), float(hi[i] + resid[i]), N, "series", step / 2, flagged,
                            "tol not reached within n_max" if flagged else ""))
    return out


def _w_lattice(p, g_lat):
    """Compound geometric lattice without the n = 0 atom."""
    W = panjer_geometric(g_lat, p)
    m = W.masses.copy()
    m[0] = max(m[0] - (1 - p), 0.0)
    return LatticeDist(0.0, W.step, m, W.residual)


def _windows_panjer(cg, xs, T, step):
    G, p = cg.G, cg.p
    top = float(xs.max()) + T
    step = step or default_step(G, T, top)
    ests = []
    for s in (step, step / 2):
        n_cells = int(math.ceil(top / s)) + 2
        L, U = discretize(G, s, n_cells, "lower"), discretize(G, s, n_cells, "upper")
        WL, WU = _w_lattice(p, L), _w_lattice(p, U)
        row = []
        for x in xs:
            e, a, b = _bracket_from(WL, WU, x, T)
            # the one-fold term is known exactly; the lattice misses the jump of G at 0
            e += (1 - p) * p * (float(G.local_prob_mp(x, T)) - _bracket_from(L, U, x, T)[0])
            row.append((e, a, b))
        ests.append(row)
    out = []
    for i, x in enumerate(xs):
        e0, e1 = ests[0][i][0], ests[1][i][0]
        v = (4 * e1 - e0) / 3
        out.append(CGResult(float(x), T, v, 0.0, abs(v - e1), ests[1][i][1], ests[1][i][2], 0, "panjer", step / 2))
    return out


def _lattice_side(p, g, step):
    return _w_lattice(p, LatticeDist(0.0, step, g))


def _ladder_windows(lad, xs, T):
    """(estimate, lo, hi) per window from a Wiener-Hopf lattice ladder."""
    WL = _lattice_side(*lad.lower, lad.step)
    WU = _lattice_side(*lad.upper, lad.step)
    WM = _lattice_side(*lad.mid, lad.step)
    res = []
    for x in xs:
        lo = max(WL.tail_at(x) - WU.tail_at(x + T), 0.0)
        hi = WU.tail_at(x) - WL.tail_at(x + T)
        res.append((WM.tail_interp(x) - WM.tail_interp(x + T), lo, hi))
    return res


def _windows_lattice(cg, xs, T):
    G = cg.G
    if isinstance(G, EmpiricalLadder):
        (pL, L), (pU, U) = G.lattices(cg.p)
        n_cells = int(math.ceil((float(xs.max()) + T) / G.step)) + 2
        L = LatticeDist(0.0, G.step, np.pad(L.masses, (0, max(0, n_cells - len(L.masses))))[:n_cells])
        U = LatticeDist(0.0, G.step, np.pad(U.masses, (0, max(0, n_cells - len(U.masses))))[:n_cells])
        WL, WU = _w_lattice(pL, L), _w_lattice(pU, U)
        out = []
        for x in xs:
            e, a, b = _bracket_from(WL, WU, x, T)
            out.append(CGResult(float(x), T, e, 0.0, 0.5 * (b - a), a, b, 0, "lattice-empirical", G.step))
        return out
    if float(xs.max()) + T > G.x_max + 1e-9:
        raise ValueError(f"window beyond the trusted lattice range {G.x_max}")
    coarse = _ladder_windows(G, xs, T)
    fine = _ladder_windows(cg.refined.G, xs, T) if cg.refined is not None else None
    out = []
    for i, x in enumerate(xs):
        e0, a, b = coarse[i]
        if fine is not None:
            e1, a, b = fine[i]
            # strict-ascent lattice bias is first order in the step
            v, d, st = 2 * e1 - e0, abs(e1 - e0), cg.refined.G.step
        else:
            v, d, st = e0, 0.5 * (b - a), G.step
        out.append(CGResult(float(x), T, v, 0.0, d, a, b, 0, "lattice-wiener-hopf", st))
    return out


# -- Monte Carlo -----------------------------------------------------------------

BLOCK = 16384  # paths per RNG stream; fixed so results never depend on the worker count
CHUNK = 64  # steps drawn per pass
WORKERS_ENV = "HEAVYLOCAL_WORKERS"


def block_rng(seed, block):
    """Independent generator for block ``block`` of a run with master ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.PCG64(ss))


def default_workers():
    try:
        return max(int(os.environ.get(WORKERS_ENV, "1")), 1)
    except ValueError:
        return 1


def default_barrier(model, seed=0, n_pilot=20000):
    """``40 mu (1 + cv)`` with the mean-absolute-deviation proxy for the coefficient of variation.

    The pilot sample uses its own stream so it never overlaps the run.
    """
    x = model.sample_increments(block_rng(seed, 2 ** 31), n_pilot)
    cv = float(np.mean(np.abs(x - x.mean()))) / model.mu
    return 40.0 * model.mu * (1.0 + cv)


def _blocks(n_paths):
    n_blocks = -(-n_paths // BLOCK)
    return [(b, min(BLOCK, n_paths - b * BLOCK)) for b in range(n_blocks)]


def _run_blocks(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks))


def _sup_block(task):
    model, seed, block, n, barrier, max_steps = task
    rng = block_rng(seed, block)
    be = backend()
    S = np.zeros(n)
    M = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    steps = 0
    while steps < max_steps:
        rows = np.flatnonzero(alive)
        if len(rows) == 0:
            break
        inc = model.sample_increments(rng, len(rows) * CHUNK).reshape(len(rows), CHUNK)
        s, m, a = S[rows].copy(), M[rows].copy(), np.ones(len(rows), dtype=bool)
        be.walk_sup_chunk(inc, s, m, a, barrier)
        S[rows], M[rows], alive[rows] = s, m, a
        steps += CHUNK
    return M, int(alive.sum())


@dataclass
class MCResult:
    """Simulated windows of the supremum law.

    ``censored`` counts paths still above the barrier when the step budget
    ran out; ``escape_bound`` is a rule-of-three style bound on the chance
    that a path's supremum would still change after crossing the barrier.
    """

    windows: list
    n_paths: int
    seed: int
    barrier: float
    censored: int
    escape_bound: float
    max_sup: float

    def to_dict(self):
        return {"n_paths": self.n_paths, "seed": self.seed, "barrier": self.barrier, "censored": self.censored,
                "escape_bound": self.escape_bound, "max_sup": self.max_sup, "estimates": self.windows}


def simulate_suprema(model, n_paths, barrier=None, seed=0, workers=None, max_steps=None):
    """Running maxima of ``n_paths`` walks stopped below ``-barrier``; returns ``(M, censored, barrier)``."""
    if n_paths < 1:
        raise ValueError("need at least one path")
    barrier = barrier if barrier is not None else default_barrier(model, seed)
    if not barrier > 0:
        raise ValueError("barrier must be positive")
    max_steps = max_steps or int(max(100_000, 50 * barrier / model.mu))
    workers = workers or default_workers()
    tasks = [(model, seed, b, n, barrier, max_steps) for b, n in _blocks(n_paths)]
    res = _run_blocks(_sup_block, tasks, workers)
    M = np.concatenate([r[0] for r in res])
    return M, sum(r[1] for r in res), barrier


def mc_supremum(model, windows, n_paths=100_000, barrier=None, seed=0, workers=None, max_steps=None):
    """Fraction of simulated suprema in each window ``(x, x + T]``.

    ``windows`` is a list of ``(x, T)`` pairs.  Each estimate carries the
    binomial standard error; windows beyond every simulated supremum report
    0 with stderr 0 and an out-of-range flag.
    """
    M, censored, barrier = simulate_suprema(model, n_paths, barrier, seed, workers, max_steps)
    n = len(M)
    top = float(M.max())
    over = int(np.count_nonzero(M > barrier))
    escape = max(over, 3) / n
    out = []
    for x, T in windows:
        if not T > 0:
            raise ValueError("window length T must be positive")
        k = int(np.count_nonzero((M > x) & (M <= x + T)))
        est = k / n
        se = math.sqrt(est * (1 - est) / n)
        out.append({"x": float(x), "T": float(T), "estimate": est, "stderr": se, "count": k,
                    "out_of_range": bool(x >= top)})
    return MCResult(out, n, int(seed), float(barrier), censored, escape, top)


def _ladder_block(task):
    model, seed, block, n, barrier, max_steps = task
    rng = block_rng(seed, block)
    be = backend()
    S = np.zeros(n)
    state = np.zeros(n, dtype=np.uint8)
    steps = 0
    while steps < max_steps:
        rows = np.flatnonzero(state == 0)
        if len(rows) == 0:
            break
        inc = model.sample_increments(rng, len(rows) * CHUNK).reshape(len(rows), CHUNK)
        s, st = S[rows].copy(), np.zeros(len(rows), dtype=np.uint8)
        be.first_exit_chunk(inc, s, st, -barrier, 0.0)
        S[rows], state[rows] = s, st
        steps += CHUNK
    return S[state == 1], int(np.count_nonzero(state == 0))


def ladder_mc(model, n_paths=100_000, barrier=None, seed=0, workers=None, step=None, max_steps=None):
    """Ascent probability and ladder heights by simulation.

    A path counts as ascending when it goes strictly above 0 before falling
    below ``-barrier``.  Paths stopped at the barrier (or the step budget)
    are counted as non-ascending, so ``p`` can only be underestimated.
    """
    if n_paths < 1000:
        raise ValueError("ladder_mc needs at least 1000 paths")
    barrier = barrier if barrier is not None else default_barrier(model, seed)
    if not barrier > 0:
        raise ValueError("barrier must be positive")
    max_steps = max_steps or int(max(100_000, 50 * barrier / model.mu))
    workers = workers or default_workers()
    tasks = [(model, seed, b, n, barrier, max_steps) for b, n in _blocks(n_paths)]
    res = _run_blocks(_ladder_block, tasks, workers)
    heights = np.concatenate([r[0] for r in res])
    k = len(heights)
    if k == 0:
        raise ParameterError("no path ascended: degenerate walk (no positive increments)")
    if k == n_paths:
        raise ParameterError("every path ascended: the drift check failed")
    p = k / n_paths
    se = math.sqrt(p * (1 - p) / n_paths)
    step = step or max(float(np.median(heights)) / 256.0, 1e-6)
    return LadderData(p, EmpiricalLadder(np.sort(heights), step), "mc", n_paths, float(barrier), se,
                      "censoring at the barrier can only lower p",
                      extra={"stuck": sum(r[1] for r in res), "seed": int(seed)})


# -- bound verification ------------------------------------------------------------


def _probe_list(G, probes, x_max):
    """Normalise probes to ``[(cycle, x)]`` with ``0 < x <= x_max``."""
    if probes is None:
        probes = probe_points(G)
    out = []
    for i, pr in enumerate(probes):
        c, x = pr if isinstance(pr, tuple) else (i, pr)
        x = float(x)
        if 0 < x and (x_max is None or x <= x_max):
            out.append((c, x))
    if not out:
        raise ValueError("no probes inside the lattice range")
    return out


def kesten_threshold(G, T, eps, probes, h=None, C_T=None):
    """Smallest probe past which the two local conditions of the Kesten argument hold.

    At every later probe x: ``h(x) > 2T``, ``|G(x-y+Delta)/G(x+Delta) - 1| < eps/8``
    uniformly for ``|y| <= h(x)`` (tested at ``y = +-1, +-h/2``), and the
    middle integral over ``[h - T, x - h + T]`` stays below
    ``(C_T - 2 + eps/8) G(x + Delta)``.  Returns ``None`` when no such probe
    exists (the hypotheses fail on the probe range).
    """
    h = h or HFunction()
    ok = []
    for _, x in probes:
        hx = float(h(x))
        good = hx > 2 * T
        if good:
            dev = _uniform_ratio_dev(G, x, h, T)
            good = dev is not None and float(dev) < eps / 8
        if good and C_T is not None and hx - T < x / 2:
            den = float(G.local_prob_mp(x, T))
            mid = float(window_integral(G, x, hx - T, "local-vs-mass", T).value_mp) / den
            good = mid < C_T - 2 + eps / 8
        ok.append(good)
    for i in range(len(ok)):
        if all(ok[i:]):
            return probes[i][1]
    return None


def _local_ratio_sup(G, T, xs):
    """``max G^{*2}(x+Delta)/G(x+Delta)`` over the given x (quadrature route)."""
    from .convolve import conv_local
    vals = []
    for x in xs:
        den = G.local_prob_mp(x, T)
        if den > 0:
            vals.append(float(conv_local(G, G, x, T).value_mp / den))
    return max(vals)


def _limsup_CT(G, T, probes):
    """Horizon sup of the local two-fold ratio: breakpoint probes when ``G`` has them, else ``probes``."""
    try:
        pr = probe_points(G)
    except ValueError:
        pr = probes
    return float(estimate_CT(G, T, pr)[1])


def kesten_verify(G, T=1.0, eps=0.5, n_max=8, probes=None, x_max=None, x1=None, C_T=None, step=None):
    """Check ``G^{*n}(x+Delta) <= K (C_T - 1 + eps)^n G(x+Delta)`` with ``K = 8/(3 eps)``.

    The numerator uses the upper lattice bracket and the denominator the
    exact one-fold window.  ``C_T`` defaults to the horizon sup of the local
    two-fold ratio (over breakpoint probes when ``G`` has them, otherwise
    over ``probes``).

    With ``x1=None`` the threshold is taken from the two local conditions of
    the Kesten argument (:func:`kesten_threshold`).  When no checked probe
    satisfies them the report falls back to the smallest probe from which
    the inequality holds at every later checked probe (``x1_source =
    'search'``) and lists the violations below it; it is the caller's job to
    judge whether the remaining range is long enough to mean anything
    (``cycles_checked``).
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    pr = _probe_list(G, probes, x_max)
    if C_T is None:
        C_T = _limsup_CT(G, T, pr)
    K = 8.0 / (3.0 * eps)
    xs = np.array([x for _, x in pr])
    br, st = nfold_series(G, n_max, xs, T, step)
    den = np.array([float(G.local_prob_mp(x, T)) for x in xs])
    rows = []
    for n in range(1, n_max + 1):
        bound = K * (C_T - 1 + eps) ** n
        for i, x in enumerate(xs):
            hi = den[i] if n == 1 else br[n - 1, i, 2]
            ratio = hi / den[i]
            rows.append({"n": n, "x": float(x), "cycle": pr[i][0], "ratio_upper": float(ratio), "bound": bound,
                         "holds": bool(ratio <= bound)})
    hyp = False
    source = "given"
    if x1 is None:
        x1 = kesten_threshold(G, T, eps, pr, C_T=C_T)
        hyp, source = x1 is not None, "lemma-conditions"
        if x1 is None:
            source = "search"
            bad = [r["x"] for r in rows if not r["holds"]]
            later = [x for x in xs if not bad or x > max(bad)]
            x1 = float(later[0]) if later else math.inf
    checked = [r for r in rows if r["x"] >= x1]
    below = [r for r in rows if r["x"] < x1 and not r["holds"]]
    slack = min((r["bound"] / r["ratio_upper"] for r in checked if r["ratio_upper"] > 0), default=math.inf)
    return {"schema": SCHEMA, "check": "kesten", "T": T, "eps": eps, "K": K, "C_T": C_T, "x1": float(x1),
            "x1_source": source, "hypotheses_confirmed": hyp, "step": st, "n_max": n_max,
            "holds": bool(checked) and all(r["holds"] for r in checked), "min_slack": slack,
            "n_checked": len(checked), "cycles_checked": len({r["cycle"] for r in checked}),
            "violations_below_x1": below, "rows": rows}


def nfold_bound_check(G, T=1.0, n=4, probes=None, x_max=None, C_T=None, step=None, last=1):
    """Measured ``G^{*n}(x+Delta)/G(x+Delta)`` at the probe horizon against ``sum_k (C_T - 1)^k``.

    The horizon is the last ``last`` cycles of the probe range; ``C_T``
    defaults to the largest measured two-fold ratio there.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    pr = _probe_list(G, probes, x_max)
    keep = sorted({c for c, _ in pr})[-last:]
    pr = [(c, x) for c, x in pr if c in keep]
    xs = np.array([x for _, x in pr])
    if C_T is None:
        C_T = _local_ratio_sup(G, T, xs) if n > 1 else 2.0
    bound = sum((C_T - 1) ** k for k in range(n))
    den = np.array([float(G.local_prob_mp(x, T)) for x in xs])
    if n == 1:
        ratios, his = np.ones(len(xs)), np.ones(len(xs))
        st = 0.0
    else:
        br, st = nfold_series(G, n, xs, T, step)
        ratios, his = br[n - 1, :, 0] / den, br[n - 1, :, 2] / den
    measured = float(ratios.max())
    return {"schema": SCHEMA, "check": "nfold", "n": n, "T": T, "C_T": C_T, "bound": bound,
            "measured": measured, "measured_upper": float(his.max()), "slack": bound / measured,
            "step": st, "probes": [float(x) for x in xs], "ratios": [float(r) for r in ratios]}


def _ladder_pair(model, step, top):
    coarse = ladder_lattice(model, step, top)
    fine = ladder_lattice(model, coarse.G.step / 2, top)
    return coarse, fine


def _ladder_height_windows(coarse, fine, xs, T):
    """Extrapolated ``G((x, x+T])`` of the ascending ladder height from the mid lattices."""
    vals = []
    for x in xs:
        e = []
        for lad in (coarse.G, fine.G):
            L = LatticeDist(0.0, lad.step, lad.mid[1])
            e.append(L.tail_interp(x) - L.tail_interp(x + T))
        vals.append(2 * e[1] - e[0])
    return vals


def theorem31_bounds(model, T=1.0, x_max=8000.0, step=None, probes=None, horizon_cycles=1,
                     mc_paths=0, mc_windows=None, seed=0, workers=None):
    """Local bounds for the supremum against the increment tail.

    Evaluates ``W((x, x+T]) / Fbar(x)`` at breakpoint probes of the increment
    law (constant down-steps, lattice Wiener-Hopf ladder on two steps)
    and compares the running inf with ``T/mu`` and the running sup with
    ``T/mu / (1 - (C_otimes - 2 E X^+)/mu)``.  ``C_otimes(F) - 2 E X^+`` is
    estimated on the up-step law, where it takes the same value.  When the
    condition ``C_otimes < mu + 2 E X^+`` fails only the lower target is
    reported.
    """
    if not T > 0:
        raise ValueError("window length T must be positive")
    F = model.increment_dist()
    mu, exp_ = model.mu, model.ex_plus
    lo, hi, _, _ = estimate_Cotimes(model.up)
    ey = model.up.mean()
    D_lo, D_hi = float(lo) - 2 * ey, float(hi) - 2 * ey
    c_ot = [D_lo + 2 * exp_, D_hi + 2 * exp_]
    cond = D_hi < mu
    lower = T / mu
    upper = T / mu / (1 - D_hi / mu) if cond else None
    pr = _probe_list(F, probes, x_max)
    xs = np.array([x for _, x in pr])
    step = step or T / 4
    coarse, fine = _ladder_pair(model, step, x_max + T)
    cg = CompoundGeometric(coarse, refined=fine)
    wins = cg_windows(cg, xs, T)
    gwin = _ladder_height_windows(coarse, fine, xs, T)
    p = fine.p
    keep = set(sorted({c for c, _ in pr})[-horizon_cycles:])
    rows = []
    for (c, x), w, g in zip(pr, wins, gwin):
        fb = float(F.tail_mp(x))
        rows.append({"x": x, "cycle": c, "W_local": w.value, "W_error": w.error, "W_lo": w.lo, "W_hi": w.hi,
                     "Fbar": fb, "ratio": w.value / fb, "ratio_lo": w.lo / fb, "ratio_hi": w.hi / fb,
                     "lower_target": lower, "upper_bound": upper, "horizon": c in keep,
                     "ladder_ratio": g / fb, "ladder_target": (1 - p) / p * T / mu})
    ratios = [r["ratio"] for r in rows]
    hz = [r for r in rows if r["horizon"]]
    report = {
        "schema": SCHEMA, "check": "theorem31", "model": model.to_dict(), "T": T, "mu": mu, "EX_plus": exp_,
        "C_otimes": c_ot, "D": [D_lo, D_hi], "cond_34": bool(cond), "lower_target": lower, "upper_bound": upper,
        "pinch": bool(cond and abs(D_hi) < 0.05 * mu),
        "ladder": {"p": p, "p_coarse": coarse.p, "step": fine.G.step, "p_lower": fine.extra["p_lower"],
                   "p_upper": fine.extra["p_upper"], "diagnostics": fine.G.diagnostics},
        "probes": rows,
        "running_inf": float(np.minimum.accumulate(ratios)[-1]),
        "running_sup": float(np.maximum.accumulate(ratios)[-1]),
        "horizon_inf": min(r["ratio"] for r in hz), "horizon_sup": max(r["ratio"] for r in hz),
        "residuals": {"max_W_error": max(r["W_error"] for r in rows)},
    }
    if mc_paths:
        mw = mc_windows or [(float(x), T) for x in xs[:3]]
        mc = mc_supremum(model, mw, mc_paths, seed=seed, workers=workers)
        report["mc"] = mc.to_dict()
    return report


def report_json(report):
    """Serialise a report deterministically (sorted keys, repr floats)."""
    return json.dumps(report, sort_keys=True, default=_json_default, indent=1)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    try:
        return float(o)
    except (TypeError, ValueError):
        return str(o)
