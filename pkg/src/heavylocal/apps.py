"""Local ruin probabilities and M/G/1 waiting times as compound geometric laws.

Both applications reduce to windows of ``W = (1 - p) sum p^n G^{*n}``:

* renewal risk model with Poisson claim arrivals: ``p = EY / (c EZ)`` and
  ``G`` the integrated tail of the claim law;
* M/G/1 queue: ``p = eta mu(F1)`` and ``G`` the integrated tail of the
  service law.

The ``n = 0`` term is an atom at 0, so it never contributes to a window
``(x, x + T]`` with ``x >= 0``; writing the sum from ``n = 0`` or ``n = 1``
gives the same windows.
"""
import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .classify import estimate_Cotimes
from .distops import Dist, Exponential, from_dict, integrated_tail
from .supremum import (CompoundGeometric, LadderData, WalkModel, cg_windows, ladder_analytic,
                       ladder_mc)
from .tailfn import ParameterError

SCHEMA = "heavylocal.apps/1"
SANDWICH_TOL = 0.10


@dataclass(frozen=True)
class RiskModel:
    """Renewal risk model: claims ``F1``, inter-arrival times ``F2``, premium rate ``c``."""

    claims: object
    interarrival: object
    c: float
    capital: tuple = ()

    def __post_init__(self):
        if not self.c > 0:
            raise ParameterError("premium rate c must be positive")
        if self.claims.support_lo < 0 or self.interarrival.support_lo < 0:
            raise ParameterError("claims and inter-arrival times must be non-negative")
        ey, ez = self.claims.mean(), self.interarrival.mean()
        if not self.c * ez > ey:
            raise ParameterError(f"net profit condition c*EZ > EY fails: {self.c * ez} <= {ey}")

    @property
    def poisson(self):
        return isinstance(self.interarrival, Exponential)

    @property
    def p(self):
        """Ascent probability of the claim-surplus walk in the Poisson case."""
        return self.claims.mean() / (self.c * self.interarrival.mean())

    def walk(self):
        return WalkModel(self.claims, self.c, self.interarrival)

    def queue(self):
        """The M/G/1 queue that shares this model's compound geometric law (Poisson case)."""
        if not self.poisson:
            raise ParameterError("only Poisson arrivals map onto an M/G/1 queue")
        return QueueModel(1.0 / (self.c * self.interarrival.mean()), self.claims)

    def to_dict(self):
        return {"model": "risk", "claims": self.claims.to_dict(),
                "interarrival": self.interarrival.to_dict(), "c": self.c, "capital": list(self.capital)}


@dataclass(frozen=True)
class QueueModel:
    """M/G/1 queue with arrival rate ``eta`` and service law ``service``."""

    eta: float
    service: object

    def __post_init__(self):
        if not self.eta > 0:
            raise ParameterError("arrival rate eta must be positive")
        if self.service.support_lo < 0:
            raise ParameterError("service times must be non-negative")
        if not self.p < 1:
            raise ParameterError(f"load p = eta*mu must be below 1, got {self.p}")

    @property
    def mu(self):
        return self.service.mean()

    @property
    def p(self):
        return self.eta * self.mu

    def ladder(self):
        G = integrated_tail(self.service)
        if isinstance(self.service, Exponential):
            G = Exponential(self.service.rate)
        return LadderData(self.p, G, "analytic")

    def to_dict(self):
        return {"model": "mg1", "eta": self.eta, "service": self.service.to_dict(), "p": self.p}


def _as_windows(x, T):
    return np.atleast_1d(np.asarray(x, dtype=float)), float(T)


def ruin_windows(model, xs, T, tol=1e-8, step=None, mc_paths=None, seed=0, workers=None):
    """Local ruin probabilities ``psi(x) - psi(x + T)`` at each initial capital in ``xs``.

    Poisson arrivals use the closed-form ladder data; any other inter-arrival
    law needs a simulation budget ``mc_paths`` for the ladder heights.
    """
    xs, T = _as_windows(xs, T)
    if model.poisson:
        cg = CompoundGeometric(ladder_analytic(model.walk()), tol=tol)
        return cg_windows(cg, xs, T, step=step)
    if not mc_paths:
        raise ParameterError("non-exponential inter-arrival times need an MC budget (mc_paths)")
    lad = ladder_mc(model.walk(), n_paths=int(mc_paths), seed=seed, workers=workers, step=step)
    return cg_windows(CompoundGeometric(lad, tol=tol), xs, T)


def ruin_local(model, x, T, **kw):
    """``psi(x) - psi(x + T)`` for one capital level; returns a :class:`CGResult`."""
    return ruin_windows(model, [x], T, **kw)[0]


def mg1_windows(model, xs, T, tol=1e-8, step=None, route="auto"):
    """Windows ``W((x, x + T])`` of the stationary virtual waiting time."""
    xs, T = _as_windows(xs, T)
    return cg_windows(CompoundGeometric(model.ladder(), tol=tol), xs, T, route=route, step=step)


def mg1_local(model, x, T, **kw):
    return mg1_windows(model, [x], T, **kw)[0]


@dataclass
class Sandwich:
    """Liminf and limsup constants for ``W(x + Delta) / Fbar1(x)``.

    ``upper`` is None when ``C_otimes >= (1 + 1/p) mu`` (or is unknown);
    unpacking yields ``(lower, upper)``.
    """

    lower: float
    upper: Optional[float]
    p: float
    mu: float
    T: float
    C_otimes: Optional[float]
    condition: bool
    note: str = ""

    def __iter__(self):
        return iter((self.lower, self.upper))

    def verdict(self, ratio, tol=SANDWICH_TOL):
        if not np.isfinite(ratio) or self.C_otimes is None:
            return "n/a"
        if ratio < self.lower * (1 - tol):
            return "below"
        if self.upper is not None and ratio > self.upper * (1 + tol):
            return "above"
        return "inside" if self.upper is not None else "above-lower"

    def to_dict(self):
        return {k: getattr(self, k) for k in ("lower", "upper", "p", "mu", "T", "C_otimes", "condition", "note")}


def mg1_bounds(model, T, C_otimes=None, probes=None):
    """Sandwich constants from ``(p, mu(F1), C_otimes(F1))``.

    ``lower = T p / ((1 - p) mu)`` and, when ``C_otimes < (1 + 1/p) mu``,
    ``upper = T p / ((1 - p (C_otimes - mu) / mu) mu)``.  ``C_otimes`` is
    estimated as the running supremum over the service law's breakpoints
    unless given.
    """
    p, mu = model.p, model.mu
    lower = T * p / ((1 - p) * mu)
    note = ""
    if C_otimes is None:
        try:
            C_otimes = float(estimate_Cotimes(model.service, probes)[1])
        except ValueError:
            C_otimes, note = None, "service law has no breakpoint probes; C_otimes not estimated"
    cond = C_otimes is not None and math.isfinite(C_otimes) and C_otimes < (1 + 1 / p) * mu
    upper = T * p / ((1 - p * (C_otimes - mu) / mu) * mu) if cond else None
    if C_otimes is not None and not cond:
        note = "C_otimes >= (1 + 1/p) mu: lower constant only"
    return Sandwich(lower, upper, p, mu, T, C_otimes, cond, note)


def ruin_bounds(model, T, **kw):
    """The same constants for the Poisson risk model through its matched queue."""
    return mg1_bounds(model.queue(), T, **kw)


# ---------------------------------------------------------------- scenarios

CSV_COLUMNS = ("model", "x", "T", "value", "residual", "disc_error", "lo", "hi", "Fbar1",
               "ratio", "ratio_error", "lower", "upper", "verdict", "route", "n_terms")


def _dist(d):
    if isinstance(d, Dist):
        return d
    return from_dict(d)


def model_from_dict(doc):
    kind = doc.get("model")
    if kind == "mg1":
        return QueueModel(float(doc["eta"]), _dist(doc["service"]))
    if kind == "risk":
        return RiskModel(_dist(doc["claims"]), _dist(doc.get("interarrival", {"kind": "exp", "rate": 1.0})),
                         float(doc["c"]), tuple(doc.get("capital", ())))
    raise ParameterError(f"scenario model must be 'risk' or 'mg1', got {kind!r}")


def _window_groups(doc):
    ws = doc.get("windows")
    if not ws:
        raise ParameterError("scenario needs a non-empty 'windows' list")
    groups = {}
    for w in ws:
        groups.setdefault(float(w["T"]), []).append(float(w["x"]))
    return groups


def run_scenario(doc, workers=None):
    """Evaluate every window of a scenario document; returns a list of row dicts.

    ``doc`` keys: ``model`` (``risk`` or ``mg1``), the model parameters,
    ``windows`` (list of ``{x, T}``), and optionally ``tol``, ``step``,
    ``seed`` and ``budgets`` (``{"mc_paths": n}``).
    """
    model = model_from_dict(doc)
    tol = float(doc.get("tol", 1e-8))
    step = doc.get("step")
    seed = int(doc.get("seed", 0))
    mc_paths = doc.get("budgets", {}).get("mc_paths")
    service = model.service if isinstance(model, QueueModel) else model.claims
    rows = []
    for T, xs in _window_groups(doc).items():
        if isinstance(model, QueueModel):
            res = mg1_windows(model, xs, T, tol=tol, step=step)
            sw = mg1_bounds(model, T)
        else:
            res = ruin_windows(model, xs, T, tol=tol, step=step, mc_paths=mc_paths, seed=seed, workers=workers)
            sw = ruin_bounds(model, T) if model.poisson else None
        for r in res:
            fb = service.tail(r.x)
            ratio = r.value / fb if fb > 0 else math.nan
            rows.append({
                "model": doc["model"], "x": r.x, "T": r.T, "value": r.value,
                "residual": r.residual, "disc_error": r.disc_error, "lo": r.lo, "hi": r.hi, "Fbar1": fb,
                "ratio": ratio, "ratio_error": r.error / fb if fb > 0 else math.nan,
                "lower": sw.lower if sw else math.nan,
                "upper": sw.upper if sw and sw.upper is not None else math.nan,
                "verdict": sw.verdict(ratio) if sw else "n/a", "route": r.route, "n_terms": r.n_terms,
            })
    return rows


def rows_to_csv(rows, fh=None):
    """Write scenario rows as CSV (floats in ``repr`` form); returns the text if ``fh`` is None.

    The first line is a ``# schema: ...`` comment.
    """
    out = fh if fh is not None else io.StringIO()
    out.write(f"# schema: {SCHEMA}\n")
    w = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return out.getvalue() if fh is None else None
