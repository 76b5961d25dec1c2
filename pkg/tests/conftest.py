import numpy as np
import pytest
from scipy.integrate import quad

from heavylocal import build_example, integrated_tail

# Means from scipy quadrature of the tail over its segments (see quad_mean);
# frozen so the package's segment-wise integrals are checked against them.
MU_EX21 = 50.18349344003504
MU_EX22 = 403333.3333333349
MU_EX25 = 1.9104809155889315


def quad_mean(F, rel=1e-13):
    """Independent mean: scipy quad of the float tail between consecutive breakpoints."""
    pts = [0.0] + [float(s.b) for s in F.segments[1:-1] if float(s.b) < 1e300]
    return sum(quad(F.tail, a, b, epsabs=0, epsrel=rel, limit=200)[0] for a, b in zip(pts[:-1], pts[1:]))


def report(name, ok, detail):
    print(f"{name}: {'PASS' if ok else 'FAIL'} {detail}")


@pytest.fixture(scope="session")
def ex21():
    return build_example("ex21", m=1, alpha=1.5, x1=100.0)


@pytest.fixture(scope="session")
def ex22():
    return build_example("ex22", m=1, alpha=5.0, x1=1100.0)


@pytest.fixture(scope="session")
def ex25():
    return build_example("ex25", m=2, alpha=0.75, x1=2.0)


@pytest.fixture(scope="session")
def ex21_I(ex21):
    return integrated_tail(ex21)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
