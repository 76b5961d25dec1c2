import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from heavylocal import (CompoundGeometric, Exponential, ParameterError, WalkModel, cg_local, cg_windows,
                        kesten_verify, ladder_analytic, ladder_lattice, ladder_mc, mc_supremum)
from heavylocal.supremum import LadderData, block_rng, report_json


def cramer_lundberg_window(p, x, T):
    """Window of a compound geometric law with Exp(1) summands: tail p exp(-(1-p) x)."""
    return p * (math.exp(-(1 - p) * x) - math.exp(-(1 - p) * (x + T)))


def exp_up_constant_down_p(c):
    """Ascent probability for X = Exp(1) - c: the ladder height is Exp(1) and p = exp(-c (1 - p))."""
    return brentq(lambda p: p - math.exp(-c * (1 - p)), 1e-12, 1 - 1e-12)


def test_walk_model_validation():
    with pytest.raises(ParameterError):
        WalkModel(Exponential(1.0), 0.5)  # E Y > c: no negative drift
    with pytest.raises(ParameterError):
        WalkModel(Exponential(1.0), -1.0)
    m = WalkModel.exponential_family(3.0)
    assert m.mu == pytest.approx(2.0)
    # E(Y - 3Z)^+ for Y, Z ~ Exp(1): P(Y > 3Z) * 1 = 1/4
    assert m.ex_plus == pytest.approx(0.25, rel=1e-9)


def test_ex_plus_constant_down():
    m = WalkModel(Exponential(1.0), 2.0)
    assert m.ex_plus == pytest.approx(math.exp(-2.0), rel=1e-12)


def test_ladder_analytic_exponential_family():
    lad = ladder_analytic(WalkModel.exponential_family(4.0))
    assert lad.p == pytest.approx(0.25)
    assert lad.G.tail(1.3) == pytest.approx(math.exp(-1.3))


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=0.05, max_value=0.95), st.floats(min_value=0.0, max_value=30.0),
       st.floats(min_value=0.1, max_value=3.0))
def test_cg_series_matches_closed_form(p, x, T):
    cg = CompoundGeometric(LadderData(p, Exponential(1.0), "analytic"), tol=1e-10)
    r = cg_local(cg, x, T, route="series")
    exact = cramer_lundberg_window(p, x, T)
    assert abs(r.value - exact) <= max(r.error, 1e-12) + 1e-9 * exact
    assert r.residual >= 0


@pytest.mark.parametrize("route", ["series", "panjer", "auto"])
def test_cg_routes_agree(route):
    cg = CompoundGeometric(LadderData(0.6, Exponential(1.0), "analytic"), tol=1e-9)
    xs = [0.0, 1.0, 4.0, 10.0]
    for r, x in zip(cg_windows(cg, xs, 1.0, route=route), xs):
        assert r.value == pytest.approx(cramer_lundberg_window(0.6, x, 1.0), rel=1e-5)
        assert r.lo <= cramer_lundberg_window(0.6, x, 1.0) * (1 + 1e-9) and r.hi >= r.lo


def test_cg_rejects_bad_windows():
    cg = CompoundGeometric(LadderData(0.5, Exponential(1.0), "analytic"))
    with pytest.raises(ValueError):
        cg_windows(cg, [1.0], 0.0)


def test_lattice_ladder_brackets_fixed_point():
    c = 2.0
    p0 = exp_up_constant_down_p(c)
    m = WalkModel(Exponential(1.0), c)
    coarse, fine = ladder_lattice(m, 1 / 32, 30.0), ladder_lattice(m, 1 / 64, 30.0)
    for lad in (coarse, fine):
        assert lad.extra["p_lower"] <= p0 <= lad.extra["p_upper"]
    assert abs(fine.p - p0) < abs(coarse.p - p0)
    assert 2 * fine.p - coarse.p == pytest.approx(p0, abs=5e-5)


def test_lattice_supremum_windows():
    c = 2.0
    p0 = exp_up_constant_down_p(c)
    cg = CompoundGeometric(ladder_lattice(WalkModel(Exponential(1.0), c), 1 / 64, 30.0))
    for x in (0.5, 2.0, 5.0):
        r = cg_local(cg, x, 1.0)
        assert r.value == pytest.approx(cramer_lundberg_window(p0, x, 1.0), rel=1e-3)


def test_ladder_mc_against_fixed_point():
    c = 2.0
    p0 = exp_up_constant_down_p(c)
    lad = ladder_mc(WalkModel(Exponential(1.0), c), n_paths=50_000, seed=11)
    se = math.sqrt(p0 * (1 - p0) / 50_000)
    assert abs(lad.p - p0) < 4 * se


def test_mc_supremum_matches_compound_poisson():
    m = WalkModel.exponential_family(2.0)
    ws = [(0.0, 1.0), (2.0, 1.0), (6.0, 2.0)]
    mc = mc_supremum(m, ws, n_paths=100_000, seed=5)
    for w in mc.windows:
        exact = cramer_lundberg_window(0.5, w["x"], w["T"])
        assert abs(w["estimate"] - exact) < 4 * w["stderr"] + 1e-12
    assert mc.censored == 0


def test_mc_determinism_across_workers():
    m = WalkModel.exponential_family(2.0)
    ws = [(1.0, 1.0), (3.0, 0.5)]
    a = mc_supremum(m, ws, n_paths=40_000, seed=9, workers=1)
    b = mc_supremum(m, ws, n_paths=40_000, seed=9, workers=2)
    assert report_json(a.to_dict()) == report_json(b.to_dict())
    c = mc_supremum(m, ws, n_paths=40_000, seed=10, workers=1)
    assert report_json(a.to_dict()) != report_json(c.to_dict())


def test_block_rng_streams_independent():
    a = block_rng(1, 0).random(1000)
    b = block_rng(1, 1).random(1000)
    assert not np.array_equal(a, b)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.15
    np.testing.assert_array_equal(a, block_rng(1, 0).random(1000))


def test_kesten_bound_exponential():
    r = kesten_verify(Exponential(1.0), 1.0, 0.5, 6, probes=[1, 2, 5, 10])
    assert r["holds"]
    assert r["K"] == pytest.approx(8 / 1.5)
    assert r["n_checked"] > 0
