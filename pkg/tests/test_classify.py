import json

import pytest
from hypothesis import given, settings, strategies as st

from heavylocal import Exponential, classify_report, estimate_Cotimes, estimate_CT, estimate_Cstar, probe_points
from heavylocal.classify import (HFunction, Quantity, RatioSeries, Verdict, bounded, choose_h, converges_to,
                                 diverging, is_long_tailed, t_quantity)
from heavylocal._mp import mpf

from conftest import MU_EX21


def _series(maxima, per_cycle=2):
    vals, cyc, xs = [], [], []
    for c, m in enumerate(maxima):
        for k in range(per_cycle):
            vals.append(mpf(m) * (1 - 0.01 * k))
            cyc.append(c)
            xs.append(mpf(10) ** (len(xs) + 1))
    return RatioSeries(Quantity.CONV2_RATIO, xs, vals, cyc)


def test_probe_layout(ex21):
    pts = probe_points(ex21)
    xs = [x for _, x in pts]
    assert all(b > a for a, b in zip(xs[:-1], xs[1:]))
    assert [float(x) for _, x in pts[:3]] == pytest.approx([100.0, 150.0, 200.0])
    dense = probe_points(ex21, strategy="geometric", n_geo=3)
    assert len(dense) == 4 * (len(pts) - 1) + 1
    with pytest.raises(ValueError):
        probe_points(Exponential(1.0))


def test_series_rejects_unsorted():
    with pytest.raises(ValueError):
        RatioSeries(Quantity.CONV2_RATIO, [mpf(2), mpf(1)], [1, 1], [0, 0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(min_value=0.1, max_value=1e6), min_size=2, max_size=30))
def test_running_extremes(values):
    s = RatioSeries(Quantity.CONV2_RATIO, [mpf(i + 1) for i in range(len(values))], values, list(range(len(values))))
    inf, sup = s.running_inf, s.running_sup
    assert all(b <= a for a, b in zip(inf[:-1], inf[1:]))
    assert all(b >= a for a, b in zip(sup[:-1], sup[1:]))
    assert inf[-1] == min(values) and sup[-1] == max(values)


def test_verdict_rules():
    assert diverging(_series([1, 2, 4, 8, 16]))
    assert not diverging(_series([1, 2, 3, 4, 5]))
    assert bounded(_series([5, 6, 5, 6])) == Verdict.CONSISTENT
    assert bounded(_series([1, 2, 4, 8])) == Verdict.INCONSISTENT
    assert converges_to(_series([2.4, 2.1, 2.01]), 2) == Verdict.CONSISTENT
    assert converges_to(_series([5, 5, 5]), 2) == Verdict.INCONSISTENT
    assert converges_to(_series([2.0]), 2) == Verdict.INCONCLUSIVE


def test_h_function():
    h = HFunction(0.25)
    assert float(h(16)) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        HFunction(1.0)
    with pytest.raises(ValueError):
        choose_h(Exponential(1.0), beta=1.5, probes=[(0, 10.0)])


def test_exponential_is_not_long_tailed():
    probes = [(i, mpf(x)) for i, x in enumerate([10, 20, 40, 80])]
    v, dev = is_long_tailed(Exponential(1.0), probes=probes)
    assert v == Verdict.INCONSISTENT and dev > 1


def test_two_fold_ratio_of_exponential_grows():
    # Fbar^{*2}(x) / Fbar(x) = 1 + x for Exp(1)
    probes = [(i, mpf(x)) for i, x in enumerate([1, 5, 10, 30])]
    lo, hi, s = estimate_Cstar(Exponential(1.0), probes)
    assert [float(v) for v in s.values] == pytest.approx([2, 6, 11, 31], rel=1e-9)


def test_ex21_floors(ex21):
    lo, hi, _ = estimate_Cstar(ex21)
    assert 2 - 1e-9 <= float(lo) <= float(hi)
    olo, ohi, s, w = estimate_Cotimes(ex21)
    assert float(olo) >= 2 * MU_EX21 * 0.999
    # the excess over 2 EX sits in the ramp ends
    assert float(ohi) > 2 * MU_EX21 + 0.5


def test_ex21_report(ex21):
    r = classify_report(ex21, T=1.0)
    v = {k: x.value for k, x in r.verdicts.items()}
    assert v["L"] == "consistent" and v["S"] == "consistent" and v["OSstar"] == "consistent"
    assert v["Sstar"] == "inconsistent"
    assert r.constants["EX"] == pytest.approx(MU_EX21, rel=1e-12)
    lo, hi = r.constants["C_otimes"]
    assert 2 * MU_EX21 * (1 - 1e-12) <= lo <= hi < 2 * MU_EX21 + 2
    doc = json.loads(r.to_json())
    assert doc["verdicts"] == v
    assert any("horizon" in c for c in doc["caveats"])


def test_ex25_star_ratio_diverges(ex25):
    r = classify_report(ex25, T=1.0, local=False)
    assert r.verdicts["OSstar"] == Verdict.INCONSISTENT
    assert r.verdicts["S"] == Verdict.INCONSISTENT


def test_integrated_tail_local_constant(ex21_I):
    lo, hi, s = estimate_CT(ex21_I, 1.0)
    assert 2 - 1e-6 <= float(lo) <= float(hi) < 2.1


def test_ex22_two_fold_excess_decays_at_ramp_ends(ex22):
    # 2/Fbar(x) int_{x/2}^x Fbar(x-y) dF(y) at x = 4 x_n^2, cycles 1..6
    ends = [x for c, x in probe_points(ex22) if 1 <= c <= 6][2::4]
    vals = [float(t_quantity(ex22, x)) for x in ends]
    assert all(b < a / 3 for a, b in zip(vals[:-1], vals[1:]))
    assert vals[-1] < 1e-3
