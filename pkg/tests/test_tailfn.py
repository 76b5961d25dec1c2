import math
import pickle

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from heavylocal import ParameterError, PiecewiseTail, build_example, make_breakpoints, validate_params
from heavylocal._mp import MP, mpf

from conftest import MU_EX21, MU_EX22, MU_EX25, quad_mean


def test_ex21_values_by_hand(ex21):
    # F(x) = 1 - (1 - x1^-a) x / x1 on [0, x1); ramp and plateau after x1
    assert ex21.tail(0.0) == 1.0
    assert ex21.tail(-3.0) == 1.0
    assert ex21.tail(50.0) == pytest.approx(1 - (1 - 1e-3) * 0.5, rel=1e-14)
    assert ex21.tail(100.0) == pytest.approx(1e-3, rel=1e-14)
    # 1e-3 - 50 * (100^-2.5 - 100^-3)
    assert ex21.tail(150.0) == pytest.approx(5.5e-4, rel=1e-13)
    assert ex21.tail(200.0) == pytest.approx(1e-4, rel=1e-13)
    assert ex21.tail(300.0) == pytest.approx(1e-4, rel=1e-13)


def test_ex21_breakpoints():
    seq = make_breakpoints("ex21", 1, 1.5, 100.0)
    x2 = 100.0 ** (4.0 / 3.0)
    assert float(seq.points[1]) == pytest.approx(x2, rel=1e-14)
    assert float(seq.points[2]) == pytest.approx(x2 ** (4.0 / 3.0), rel=1e-13)
    logs = seq.log_points
    assert all(b > a for a, b in zip(logs[:-1], logs[1:]))


def test_ex22_first_segment(ex22):
    assert ex22.tail(0.0) == 1.0
    assert ex22.tail(1100.0 ** 2) == pytest.approx(1100.0 ** -5, rel=1e-12)
    x = 4.0e5
    expect = 1100.0 ** -5 + (1 - 1100.0 ** -5) / 1100.0 * (1100.0 - math.sqrt(x))
    assert ex22.tail(x) == pytest.approx(expect, rel=1e-13)


def test_ex25_plateau(ex25):
    x1 = 2.0
    # tail^m with plateau (2 x1)^(-2 alpha) of the base
    assert ex25.tail(2 * x1 + 1) == pytest.approx(((2 * x1) ** -1.5) ** 2, rel=1e-13)


@pytest.mark.parametrize("fixture,mu", [("ex21", MU_EX21), ("ex22", MU_EX22), ("ex25", MU_EX25)])
def test_mean_against_quadrature(request, fixture, mu):
    F = request.getfixturevalue(fixture)
    assert F.mean() == pytest.approx(mu, rel=1e-10)
    assert quad_mean(F) == pytest.approx(mu, rel=1e-10)


@pytest.mark.parametrize("kind,m,alpha,x1", [
    ("ex21", 1, 1.0, 100.0),      # alpha = 1/m
    ("ex21", 1, 2.0, 100.0),      # alpha = 1 + 1/m
    ("ex21", 1, 1.5, 64.0),       # x1 = 4^(m alpha/(m alpha - 1))
    ("ex22", 1, 4.0, 1e4),        # alpha = 2 + 2/m
    ("ex22", 1, 5.0, 1024.0),     # x1 = 4^alpha
    ("ex25", 2, 0.5, 2.0),        # m = 1/alpha
    ("ex25", 2, 0.75, 1.0),       # x1 = 1
    ("ex21", 0, 1.5, 100.0),
    ("nope", 1, 1.5, 100.0),
])
def test_invalid_parameters(kind, m, alpha, x1):
    with pytest.raises(ParameterError):
        validate_params(kind, m, alpha, x1)


def test_truncated_flag():
    F = build_example("ex21", 1, 1.5, 100.0, n_max=10_000)
    assert F.truncated
    assert F.n_max == F.seq.n_max
    assert not build_example("ex21", 1, 1.5, 100.0, n_max=3).truncated


def test_continuity_at_breakpoints(ex21, ex22, ex25):
    # adjacent segment formulas agree at their shared boundary
    for F in (ex21, ex22, ex25):
        segs = F.segments[1:]
        for s, t in zip(segs[:-1], segs[1:]):
            assert s.b == t.a
            u, v = s.value(s.b), t.value(t.a)
            assert float(abs(u - v) / v) < 1e-30


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=-10, max_value=1e7), st.floats(min_value=0, max_value=1e5))
def test_tail_monotone_and_bounded(x, d):
    F = build_example("ex21", 1, 1.5, 100.0)
    a, b = F.tail(x), F.tail(x + d)
    assert 0.0 <= b <= a <= 1.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(min_value=-5, max_value=1e12), min_size=1, max_size=20))
def test_tail_array_matches_scalar(xs):
    for F in (build_example("ex21", 1, 1.5, 100.0), build_example("ex22", 1, 5.0, 1100.0)):
        arr = F.tail_array(np.array(xs))
        ref = np.array([F.tail(x) for x in xs])
        np.testing.assert_allclose(arr, ref, rtol=1e-12, atol=0)


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=1e-12, max_value=1 - 1e-9))
def test_quantile_inverts_tail(u):
    F = build_example("ex21", 1, 1.5, 100.0)
    x = float(F.quantile_tail(np.array([u]))[0])
    assert F.tail(x) == pytest.approx(u, rel=1e-9, abs=1e-15)


def test_density_matches_finite_difference(ex21, ex22):
    for F, xs in ((ex21, [50.0, 150.0, 300.0, 1000.0]), (ex22, [4e5, 2e6, 3e6])):
        for x in xs:
            h = x * 1e-7
            fd = (F.tail(x - h) - F.tail(x + h)) / (2 * h)
            assert F.density(x) == pytest.approx(fd, rel=1e-5, abs=1e-300)


def test_local_prob_is_tail_difference(ex21):
    assert ex21.local_prob(100.0, 50.0) == pytest.approx(1e-3 - 5.5e-4, rel=1e-12)
    with pytest.raises(ValueError):
        ex21.local_prob(100.0, 0.0)


def test_log_tail_beyond_double_range(ex21):
    x = float(ex21.cycle_points()[-1][1])
    lt = ex21.log_tail(x)
    assert math.isfinite(lt)
    assert lt == pytest.approx(float(MP.log(ex21.tail_mp(x))), rel=1e-12)


def test_power_is_min_of_base(ex25):
    base = ex25.with_power(1)
    for x in (0.5, 3.0, 5.0, 40.0, 1e3):
        assert ex25.tail(x) == pytest.approx(base.tail(x) ** 2, rel=1e-13)


def test_sampling_matches_tail(ex21, rng):
    xs = ex21.sample(rng, 20_000)
    res = stats.kstest(xs, lambda x: 1 - ex21.tail_array(x))
    assert res.pvalue > 1e-3
    # upper tail frequency at the first breakpoint: binomial check
    k = int(np.count_nonzero(xs > 100.0))
    n, p = len(xs), ex21.tail(100.0)
    assert abs(k - n * p) < 5 * math.sqrt(n * p * (1 - p))


def test_sampling_min_method(ex25, rng):
    xs = ex25.sample(rng, 20_000, method="min")
    ys = ex25.sample(rng, 20_000, method="inverse")
    for z in (xs, ys):
        assert stats.kstest(z, lambda x: 1 - ex25.tail_array(x)).pvalue > 1e-3


def test_serialisation_round_trip(ex21):
    G = ex21.with_shift(3.5).with_power(2)
    for H in (PiecewiseTail.from_json(G.to_json()), pickle.loads(pickle.dumps(G))):
        assert H.to_dict() == G.to_dict()
        assert H.tail(456.7) == G.tail(456.7)
