"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line."""
import io
import math
import time
from contextlib import redirect_stdout

import numpy as np
import pytest

from heavylocal import (CompoundGeometric, Exponential, QueueModel, WalkModel, build_example, cg_local,
                        estimate_Cotimes, estimate_Cstar, integrated_tail, kesten_verify, ladder_analytic,
                        mc_supremum, mg1_bounds, probe_points, shift_to_satisfy_34, theorem31_bounds, v1_min)
from heavylocal.apps import mg1_windows
from heavylocal.cli import main as cli_main
from heavylocal.classify import diverging
from heavylocal.convolve import star_integral
from heavylocal.supremum import LadderData

from conftest import quad_mean, report


def _ex21():
    return build_example("ex21", m=1, alpha=1.5, x1=100.0)


def test_ac1_ex21_limit_constant():
    t0 = time.time()
    F = _ex21()
    mu = quad_mean(F)
    target = 2 * mu + 1  # 2 mu + 2/(m + 1) with m = 1
    H = []
    for a, b in F.cycle_points():  # b = 2 x_n
        H.append(float(star_integral(F, b).value_mp / F.tail_mp(b)))
    devs = [abs(h - target) for h in H]
    decreasing = sum(d2 < d1 for d1, d2 in zip(devs[:-1], devs[1:]))
    rel = devs[-1] / target
    ok = rel < 0.05 and decreasing >= 0.8 * (len(devs) - 1) and devs[-1] < devs[0] and time.time() - t0 < 60
    report("AC1", ok, f"H(2x_n) final={H[-1]:.10g} target={target:.10g} rel={rel:.2e} "
           f"decreasing steps {decreasing}/{len(devs) - 1} ({time.time() - t0:.1f}s)")
    assert ok


def test_ac2_heavy_tail_floors():
    t0 = time.time()
    F = _ex21()
    mu = quad_mean(F)
    cs_lo, _, _ = estimate_Cstar(F)
    co_lo, _, _, _ = estimate_Cotimes(F)
    e1 = abs(float(cs_lo) - 2) / 2
    e2 = abs(float(co_lo) - 2 * mu) / (2 * mu)
    ok = e1 < 0.10 and e2 < 0.10 and time.time() - t0 < 120
    report("AC2", ok, f"C_* inf={float(cs_lo):.8g} (rel {e1:.1e}), C_otimes inf={float(co_lo):.8g} vs 2mu="
           f"{2 * mu:.8g} (rel {e2:.1e}) ({time.time() - t0:.1f}s)")
    assert ok


def test_ac3_ex25_divergence():
    t0 = time.time()
    F = build_example("ex25", m=2, alpha=0.75, x1=2.0)
    _, _, s, _ = estimate_Cotimes(F)
    mx = [hi for _, hi in s.cycle_extremes()][-4:]
    factors = [float(b / a) for a, b in zip(mx[:-1], mx[1:])]
    ok = len(factors) == 3 and all(f >= 2 for f in factors) and diverging(s) and time.time() - t0 < 60
    report("AC3", ok, "growth factors over the last 3 breakpoints: "
           + ", ".join(f"{f:.3g}" for f in factors) + f" ({time.time() - t0:.1f}s)")
    assert ok


def test_ac4_compound_geometric_oracle():
    t0 = time.time()
    cg = CompoundGeometric(LadderData(0.5, Exponential(1.0), "analytic"))
    worst = 0.0
    for x in (0, 1, 2, 5, 10, 20):
        exact = 0.5 * (math.exp(-0.5 * x) - math.exp(-0.5 * (x + 1)))
        worst = max(worst, abs(cg_local(cg, x, 1.0).value / exact - 1))
    ok = worst < 1e-6 and time.time() - t0 < 30
    report("AC4", ok, f"max relative error {worst:.2e} ({time.time() - t0:.1f}s)")
    assert ok


def test_ac5_two_route_consistency():
    t0 = time.time()
    model = WalkModel.exponential_family(2.0)
    cg = CompoundGeometric(ladder_analytic(model))
    windows = [(0.0, 1.0), (1.0, 1.0), (2.0, 1.0), (5.0, 1.0), (8.0, 1.0), (12.0, 1.0)]
    mc = mc_supremum(model, windows, n_paths=1_000_000, seed=7)
    z = []
    for w in mc.windows:
        r = cg_local(cg, w["x"], w["T"])
        z.append(abs(w["estimate"] - r.value) / (w["stderr"] + r.residual + r.disc_error))
    ok = max(z) <= 3 and time.time() - t0 < 300
    report("AC5", ok, f"max |MC - CG| / (stderr + residual) = {max(z):.3f} over 6 windows ({time.time() - t0:.1f}s)")
    assert ok


def test_ac6_kesten_bound():
    t0 = time.time()
    G = integrated_tail(_ex21())
    r1 = kesten_verify(G, T=1.0, eps=0.5, n_max=8, x_max=8000.0)
    r2 = kesten_verify(Exponential(1.0), T=1.0, eps=0.5, n_max=20, probes=[1, 2, 5, 10, 20, 30])
    ok = (r1["holds"] and r2["holds"] and r1["cycles_checked"] >= 2 and r2["n_checked"] > 0
          and time.time() - t0 < 300)
    report("AC6", ok, f"F^I(EX21): holds={r1['holds']} x1={r1['x1']:.4g} ({r1['x1_source']}) cycles={r1['cycles_checked']} "
           f"slack={r1['min_slack']:.3g}; Exp(1): holds={r2['holds']} slack={r2['min_slack']:.3g} "
           f"({time.time() - t0:.1f}s)")
    assert ok


def test_ac7_supremum_sandwich():
    t0 = time.time()
    Y = _ex21()
    _, a, info = shift_to_satisfy_34(Y, mean_target=Y.mean())
    rep = theorem31_bounds(WalkModel(Y, a), T=1.0)
    lo, up = rep["lower_target"], rep["upper_bound"]
    hz = [r["ratio"] for r in rep["probes"] if r["horizon"]]
    ok = (rep["cond_34"] and up is not None and all(lo * 0.9 <= v <= up * 1.1 for v in hz)
          and time.time() - t0 < 600)
    report("AC7", ok, f"shift a={a:.6g}; horizon ratios [{min(hz):.6g}, {max(hz):.6g}] within "
           f"[{0.9 * lo:.6g}, {1.1 * up:.6g}] ({time.time() - t0:.1f}s)")
    assert ok


def test_ac8_v1_window():
    t0 = time.time()
    F = _ex21()
    V = v1_min(F)
    _, x = probe_points(F)[-1]
    devs = {T: abs(float(V.local_prob_mp(x, T) / (T * F.tail_mp(x))) - 1) for T in (0.5, 1.0, 2.0)}
    ok = all(d < 0.02 for d in devs.values()) and time.time() - t0 < 60
    report("AC8", ok, f"x={float(x):.4g}: " + ", ".join(f"T={T}: {d:.1e}" for T, d in devs.items())
           + f" ({time.time() - t0:.1f}s)")
    assert ok


def test_ac9_mg1_sandwich():
    t0 = time.time()
    F = _ex21()
    mu = F.mean()
    q = QueueModel(0.5 / mu, F)
    T, top, step = 100.0, 4.3e6, 6.25
    pr = [(c, float(x)) for c, x in probe_points(F) if x + T <= top]
    last = pr[-1][0]
    xs = [x for c, x in pr if c == last]
    sw = mg1_bounds(q, T)
    res = mg1_windows(q, xs, T, tol=1e-6, step=step)
    ratios = [r.value / F.tail(r.x) for r in res]
    inside = sw.upper is not None and all(sw.lower * 0.9 <= v <= sw.upper * 1.1 for v in ratios)
    mm1 = QueueModel(1.0, Exponential(2.0))
    worst = 0.0
    for x, r in zip([0.0, 1.0, 5.0, 10.0], mg1_windows(mm1, [0.0, 1.0, 5.0, 10.0], 1.0)):
        exact = 0.5 * (math.exp(-x) - math.exp(-(x + 1)))
        worst = max(worst, abs(r.value / exact - 1))
    ok = inside and worst < 1e-6 and time.time() - t0 < 300
    report("AC9", ok, f"T={T:g} ratios/lower " + ", ".join(f"{v / sw.lower:.5g}" for v in ratios)
           + f" in [0.9, {1.1 * sw.upper / sw.lower:.5g}]; M/M/1 rel err {worst:.1e} ({time.time() - t0:.1f}s)")
    assert ok


def _cli(argv):
    buf = io.StringIO()
    with redirect_stdout(buf):
        rc = cli_main(argv)
    assert rc in (0, None)
    return buf.getvalue()


def test_ac10_determinism():
    t0 = time.time()
    cmds = [
        ["walk", "supremum", "--dist", "exp:rate=1", "--c", "2", "--down", "exp:rate=1", "--at", "0", "2", "5",
         "--paths", "60000", "--no-cg", "--seed", "42"],
        ["walk", "ladder", "--dist", "ex21:m=1,alpha=1.5,x1=100", "--c", "120", "--method", "mc", "--paths", "40000",
         "--seed", "42"],
        ["dist", "sample", "--dist", "ex21:m=1,alpha=1.5,x1=100|integrated_tail", "--n", "50000", "--seed", "42"],
        ["risk", "--claims", "exp:rate=1", "--interarrival", "exp:rate=0.5|shift:a=-1", "--c", "1", "--at", "0", "3",
         "--paths", "40000", "--seed", "42"],
    ]
    same = []
    for argv in cmds:
        outs = {w: _cli(argv + ["--workers", str(w)]) for w in (1, 2, 3)}
        same.append(outs[1] == outs[2] == outs[3] == _cli(argv + ["--workers", "1"]))
    ok = all(same)
    report("AC10", ok, f"byte-identical across workers 1/2/3 for {sum(same)}/{len(same)} MC commands "
           f"({time.time() - t0:.1f}s)")
    assert ok
