import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize

from dbarkit.errors import ArgumentError, TruncationError
from dbarkit.geometry import Domain, MetricRect
from dbarkit.measure import DoublingMeasure, LineMeasure, mass, rho
from dbarkit.partition import (bisect, build_partition, build_strips, final_split,
                               partition_from_json, realline_partition)

SMALL = Domain("plane", (-3, 3, -3, 3), n=32)
DISK = Domain("disk", r_max=0.95, n=32)


def measure(domain, kind, **p):
    return DoublingMeasure.from_spec(domain, {"kind": kind, "parameters": p})


def test_strips_uniform_unit_squares():
    rects, coverage, R = build_strips(measure(SMALL, "uniform"), 1, 1.0)
    assert len(rects) == 36
    for r in rects:
        assert r.sides() == pytest.approx((1.0, 1.0))


def test_strips_width_one_and_a_half():
    # pieces need length L with 1.5 L integral and L in [1.5, 3]; the first fit is L = 2
    mu = measure(SMALL, "uniform")
    rects, _, _ = build_strips(mu, 1, 1.5)
    for r in rects:
        assert r.sides()[0] == pytest.approx(2.0)
        assert mass(mu, r) == pytest.approx(3.0, rel=1e-9)


def test_disk_annuli_have_integer_mass():
    mu = measure(DISK, "hyperbolic", c=4.0)
    _, coverage, R = build_strips(mu, 1)
    assert len(coverage) >= 2
    for ann in coverage:
        # independent polar quadrature of 4 / (1 - r^2)^2 over the annulus
        m = integrate.quad(lambda r: 2 * math.pi * r * 4 / (1 - r * r) ** 2, ann.r0, ann.r1,
                           epsabs=1e-12, epsrel=1e-12)[0]
        assert abs(m - round(m)) < 1e-6 and round(m) >= 1
        assert R * (1 - 1e-9) <= ann.a1 - ann.a0 <= 2 * R * (1 + 1e-9)


def test_strips_reject_tiny_truncation():
    mu = measure(Domain("plane", (0, 0.5, 0, 0.5), n=16), "uniform")
    with pytest.raises(TruncationError):
        build_strips(mu, 1, 1.0)
    with pytest.raises(ArgumentError):
        build_strips(mu, 0, 1.0)


def test_bisect_symmetric_mass_six():
    mu = measure(Domain("plane", (0, 6, 0, 1), n=16), "uniform")
    a, b = bisect(MetricRect("plane", 0, 6, 0, 1), mu, 1)
    assert (mass(mu, a), mass(mu, b)) == pytest.approx((3.0, 3.0), rel=1e-9)
    assert a.a1 == pytest.approx(3.0)


def test_bisect_mass_five():
    mu = measure(Domain("plane", (0, 5, 0, 1), n=16), "uniform")
    a, b = bisect(MetricRect("plane", 0, 5, 0, 1), mu, 1)
    ms = sorted([round(mass(mu, a), 9), round(mass(mu, b), 9)])
    assert ms == [2.0, 3.0]
    # the cut lies inside the central unit-mass band [2, 3]
    assert 2.0 - 1e-9 <= a.a1 <= 3.0 + 1e-9


def test_bisect_linear_density_cut():
    # 0.5 + 5x/9 on [0,3]x[0,1] has mass 4
    dom = Domain("plane", (0, 3, 0, 1), n=16)
    mu = measure(dom, "linear_x", a=0.5, b=5 / 9)
    r = MetricRect("plane", 0, 3, 0, 1)
    assert mass(mu, r) == pytest.approx(4.0, rel=1e-12)
    a, b = bisect(r, mu, 1)
    F = lambda x: 0.5 * x + 5 * x * x / 18
    left = round(F(a.a1))
    assert left in (1, 2, 3)
    want = optimize.brentq(lambda x: F(x) - left, 0, 3, xtol=1e-14)
    assert a.a1 == pytest.approx(want, abs=1e-9)


def test_final_split_pieces_have_mass_n():
    mu = measure(SMALL, "exp_x", a=0.5)
    r = MetricRect("plane", -1, 1, -0.5, 0.5)
    total = mass(mu, r)
    N = total / 4
    pieces = final_split(r, mu, N)
    assert len(pieces) == 4
    assert [mass(mu, p) for p in pieces] == pytest.approx([N] * 4, rel=1e-9)


def test_partition_uniform_unit_squares():
    p = build_partition(measure(SMALL, "uniform"), 1)
    assert len(p) == 36
    assert p.E_max == pytest.approx(1.0)


def test_partition_density_two():
    p = build_partition(measure(SMALL, "uniform", c=2.0), 1)
    for mr in p.rectangles:
        assert mr.rect.area == pytest.approx(0.5, rel=1e-6)
        assert mr.eccentricity <= 2 + 1e-9
        assert mass(p.measure, mr.rect) == pytest.approx(1.0, rel=1e-6)


def test_partition_exponential_diameters_track_rho():
    dom = Domain("plane", (-4, 4, -4, 4), n=32)
    p = build_partition(measure(dom, "exp_x"), 1)
    stats = p.claim2_stats()
    assert 0 < stats["diam_over_rho_min"] <= stats["diam_over_rho_max"] < 10
    assert stats["C_2"] < math.inf and stats["C_3"] < math.inf
    assert p.E_bisect <= 3 + 1e-9
    # rectangles shrink to the right where the density grows
    cx = np.array([mr.rect.center.real for mr in p.rectangles])
    d = np.array([mr.rect.diameter for mr in p.rectangles])
    assert d[np.argmax(cx)] < d[np.argmin(cx)]


def test_partition_tiles_coverage():
    p = build_partition(measure(SMALL, "sinprod"), 2)
    area = sum(mr.rect.area for mr in p.rectangles)
    assert area == pytest.approx(sum(c.area for c in p.coverage), rel=1e-9)
    Z = SMALL.grid()
    inside = p.coverage_mask()
    assert np.all(p.locate(Z)[inside] >= 0)


def test_partition_json_round_trip():
    p = build_partition(measure(SMALL, "uniform"), 1)
    q = partition_from_json(p.to_json(), p.measure)
    assert q.to_json() == p.to_json()


def test_partition_disk():
    mu = measure(DISK, "hyperbolic")
    p = build_partition(mu, 1)
    for mr in p.rectangles:
        assert mass(mu, mr.rect) == pytest.approx(1.0, rel=1e-6)
    assert p.E_bisect <= 3 + 1e-9


def test_realline_partition_uniform():
    lm = LineMeasure(lambda x: np.ones_like(x), (-5.0, 5.0))
    lp = realline_partition(lm, 2)
    assert len(lp.intervals) == 5
    for a, b in lp.intervals:
        assert b - a == pytest.approx(2.0, abs=1e-12)
    assert lp.remainder is None


def test_realline_partition_remainder():
    lm = LineMeasure(lambda x: 2 * np.abs(x), (0.0, 3.0))
    lp = realline_partition(lm, 2)
    # cumulative mass x^2 hits 2k at sqrt(2k)
    ends = [b for _, b in lp.intervals]
    assert ends == pytest.approx([math.sqrt(2), 2.0, math.sqrt(6), math.sqrt(8)], abs=1e-10)
    assert lp.remainder[0] == pytest.approx(math.sqrt(8))


def test_realline_partition_too_short():
    lm = LineMeasure(lambda x: np.ones_like(x), (0.0, 1.0))
    with pytest.raises(TruncationError):
        realline_partition(lm, 2)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.2, 0.8), st.floats(1.0, 3.0), st.sampled_from([1, 2]))
def test_partition_invariants(a, c, N):
    mu = measure(SMALL, "exp_x", a=a, c=c)
    p = build_partition(mu, N)
    masses = np.array([mass(mu, mr.rect) for mr in p.rectangles])
    assert np.allclose(masses, N, rtol=1e-6)
    assert p.E_bisect <= 3 + 1e-9
    assert math.isfinite(p.E_max)
    assert sum(masses) == pytest.approx(sum(mass(mu, cv) for cv in p.coverage), rel=1e-9)
    z = np.array([mr.rect.center for mr in p.rectangles])
    assert np.all(rho(mu, z) > 0)
