import math
import pickle

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from heavylocal import DivergenceError, Exponential, from_dict, integrated_tail, power_tail, shift, v1_min
from heavylocal.distops import esscher, mgf, shift_to_satisfy_34

from conftest import MU_EX21


def test_exponential_closed_forms():
    E = Exponential(2.0)
    assert E.tail(1.5) == pytest.approx(math.exp(-3.0), rel=1e-15)
    assert E.tail(-1.0) == 1.0
    assert E.mean() == pytest.approx(0.5, rel=1e-15)
    assert E.local_prob(1.0, 0.5) == pytest.approx(math.exp(-2) - math.exp(-3), rel=1e-14)
    # the window straddling 0 only counts (0, x + T]
    assert E.local_prob(-1.0, 1.5) == pytest.approx(1 - math.exp(-1.0), rel=1e-14)


def test_integrated_tail_of_exponential_is_itself():
    E = Exponential(1.5)
    I = integrated_tail(E)
    for x in (0.0, 0.3, 2.0, 7.0):
        assert I.tail(x) == pytest.approx(E.tail(x), rel=1e-10)


def test_integrated_tail_against_quadrature(ex21_I, ex21):
    for x in (10.0, 100.0, 150.0, 464.0, 5000.0):
        pts = [x] + [float(b) for b in ex21.breaks(x, 1e9)] + [1e9]
        ref = sum(integrate.quad(ex21.tail, a, b, epsrel=1e-12, limit=200)[0] for a, b in zip(pts[:-1], pts[1:]))
        ref += float(ex21.upper_integral_mp(1e9))
        assert ex21_I.tail(x) == pytest.approx(ref / MU_EX21, rel=1e-8)
    assert ex21_I.density(150.0) == pytest.approx(ex21.tail(150.0) / MU_EX21, rel=1e-12)


def test_integrated_tail_window(ex21_I, ex21):
    ref = integrate.quad(ex21.tail, 150.0, 151.0)[0] / MU_EX21
    assert ex21_I.local_prob(150.0, 1.0) == pytest.approx(ref, rel=1e-10)


def test_integrated_tail_of_trivial_power():
    F = power_tail(Exponential(1.0), 1)
    assert integrated_tail(F).tail(1.0) == pytest.approx(math.exp(-1.0), rel=1e-8)


@settings(max_examples=50, deadline=None)
@given(st.floats(min_value=0.1, max_value=50.0), st.floats(min_value=-20.0, max_value=500.0))
def test_shift_translates(a, x):
    E = Exponential(1.0)
    S = shift(E, a)
    assert S.tail(x) == pytest.approx(E.tail(x + a), rel=1e-12)
    assert S.mean() == pytest.approx(1.0 - a, rel=1e-10, abs=1e-12)
    assert S.support_lo == pytest.approx(-a)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=1, max_value=4), st.floats(min_value=0.0, max_value=5e3))
def test_power_tail_is_power(m, x):
    base = Exponential(0.7)
    P = power_tail(base, m)
    assert P.tail(x) == pytest.approx(base.tail(x) ** m, rel=1e-12, abs=1e-300)


def test_power_tail_window_identity(ex21):
    P = power_tail(ex21, 3)
    x, T = 150.0, 2.0
    assert P.local_prob(x, T) == pytest.approx(ex21.tail(x) ** 3 - ex21.tail(x + T) ** 3, rel=1e-10)


def test_mgf_and_esscher_exponential():
    E = Exponential(2.0)
    assert mgf(E, 0.5)[0] == pytest.approx(2.0 / 1.5)
    T = esscher(E, 0.5)
    assert isinstance(T, Exponential) and T.rate == pytest.approx(1.5)
    with pytest.raises(DivergenceError):
        esscher(E, 2.0)


def test_esscher_negative_gamma_against_quadrature(ex21):
    g = -0.01
    M, err = mgf(ex21, g)
    pts = [0.0] + [float(b) for b in ex21.breaks(0, 1e4)] + [1e4]
    ref = sum(integrate.quad(lambda y: math.exp(g * y) * ex21.density(y), a, b, epsrel=1e-12)[0]
              for a, b in zip(pts[:-1], pts[1:]))
    assert M == pytest.approx(ref, rel=1e-7)
    T = esscher(ex21, g)
    assert T.tail(0.0) == pytest.approx(1.0, rel=1e-8)
    assert T.local_prob(50.0, 1.0) == pytest.approx(
        integrate.quad(lambda y: math.exp(g * y) * ex21.density(y), 50, 51)[0] / M, rel=1e-8)


def test_mgf_positive_gamma_diverges(ex21):
    with pytest.raises(DivergenceError):
        mgf(ex21, 0.05)


def test_v1_windows(ex21):
    V = v1_min(ex21)
    assert not V.defective
    assert V.total_mass == 1.0
    # saturation point: int_c^inf Fbar = 1
    assert float(ex21.upper_integral_mp(V.crossing)) == pytest.approx(1.0, rel=1e-12)
    assert V.local_prob(1000.0, 1.0) == pytest.approx(integrate.quad(ex21.tail, 1000, 1001)[0], rel=1e-10)
    c = V.crossing
    assert V.cdf(c / 2) == 0.0


def test_v1_defective_for_small_mean():
    V = v1_min(Exponential(4.0))
    assert V.defective
    assert V.total_mass == pytest.approx(0.25)
    assert V.tail(1.0) == pytest.approx(0.25 * math.exp(-4.0), rel=1e-10)


def test_shift_to_satisfy_condition(ex21):
    F, a, info = shift_to_satisfy_34(ex21)
    assert info["condition"]
    assert info["D"] < (1 - info["margin"]) * info["mu"] + 1e-9
    assert F.tail(10.0) == pytest.approx(ex21.tail(10.0 + a), rel=1e-12)
    F2, a2, info2 = shift_to_satisfy_34(ex21, mean_target=2 * MU_EX21)
    assert a2 >= a and info2["mu"] == pytest.approx(max(info2["mu"], 2 * MU_EX21))


def test_shift_to_satisfy_rejects_divergent(ex25):
    with pytest.raises(DivergenceError):
        shift_to_satisfy_34(ex25)


def test_sampling_transforms(rng):
    S = shift(Exponential(1.0), 0.5)
    xs = S.sample(rng, 10_000)
    assert stats.kstest(xs, lambda x: 1 - S.tail_array(x)).pvalue > 1e-3


@pytest.mark.parametrize("make", [
    lambda F: F,
    lambda F: integrated_tail(F),
    lambda F: shift(F, 3.0),
    lambda F: power_tail(F, 2),
    lambda F: v1_min(F),
    lambda F: esscher(F, -0.02),
])
def test_dict_and_pickle_round_trip(ex21, make):
    G = make(ex21)
    for H in (from_dict(G.to_dict()), pickle.loads(pickle.dumps(G))):
        assert H.to_dict() == G.to_dict()
        assert H.tail(150.5) == pytest.approx(G.tail(150.5), rel=1e-12)


def test_unknown_transform():
    with pytest.raises(ValueError):
        from_dict({"kind": "exp", "rate": 1.0, "transforms": [{"op": "bogus"}]})
