import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize

from dbarkit.errors import ArgumentError, DomainError, TruncationError
from dbarkit.geometry import Domain, MetricRect, metric_ball, rect_split
from dbarkit.measure import (DoublingMeasure, LineMeasure, ball_mass, doubling_diagnostic, mass,
                             metric_ball_mass, rho, tail_integral_diagnostic, weight_from_spec)

PLANE = Domain("plane", (-5, 5, -5, 5), n=64)
DISK = Domain("disk", r_max=0.95, n=64)


def plane(kind, **p):
    return DoublingMeasure.from_spec(PLANE, {"kind": kind, "parameters": p})


def test_mass_uniform_square():
    assert mass(plane("uniform", c=4.0), MetricRect("plane", 0, 1, 0, 1)) == pytest.approx(4.0, rel=1e-12)


def test_mass_uniform_ball():
    b = metric_ball(PLANE, 0, 2.0)
    assert mass(plane("uniform"), b) == pytest.approx(4 * math.pi, rel=1e-10)


def test_mass_exponential_square():
    assert mass(plane("exp_x"), MetricRect("plane", 0, 1, 0, 1)) == pytest.approx(math.e - 1, rel=1e-12)


def test_mass_outside_truncation():
    mu = DoublingMeasure.from_grid(PLANE, np.ones((64, 64)))
    with pytest.raises(DomainError):
        mass(mu, MetricRect("plane", 4, 6, 0, 1))
    with pytest.raises(DomainError):
        ball_mass(plane("uniform").restricted(DISK), 0.9, 0.2)


def test_grid_measure_mass_is_exact_for_bilinear_data():
    # a bilinear density is reproduced exactly by its interpolant
    Z = PLANE.grid()
    vals = 10.0 + 0.5 * Z.real + 0.25 * Z.real * Z.imag + 0.1 * Z.imag
    mu = DoublingMeasure.from_grid(PLANE, vals)
    r = MetricRect("plane", -1.3, 2.1, 0.4, 3.7)
    want = integrate.dblquad(lambda y, x: 10.0 + 0.5 * x + 0.25 * x * y + 0.1 * y,
                             r.a0, r.a1, r.b0, r.b1)[0]
    assert mass(mu, r) == pytest.approx(want, rel=1e-12)


def test_atoms_rejected():
    with pytest.raises(ArgumentError):
        plane("atom")


def test_negative_density_rejected():
    with pytest.raises(ArgumentError):
        plane("linear_x", a=0.0, b=1.0)


def test_rho_uniform():
    assert rho(plane("uniform"), 0.3)[0] == pytest.approx(1 / math.sqrt(math.pi), rel=1e-6)
    assert rho(plane("uniform", c=2.0), -1 + 1j)[0] == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-6)


def test_rho_exponential_against_direct_quadrature():
    def disk_mass(r, cx=2.0):
        return integrate.dblquad(lambda y, x: math.exp(x), cx - r, cx + r,
                                 lambda x: -math.sqrt(max(r * r - (x - cx) ** 2, 0.0)),
                                 lambda x: math.sqrt(max(r * r - (x - cx) ** 2, 0.0)),
                                 epsabs=1e-12, epsrel=1e-12)[0]

    want = optimize.brentq(lambda r: disk_mass(r) - 1.0, 0.01, 1.0, xtol=1e-12)
    assert rho(plane("exp_x"), 2.0)[0] == pytest.approx(want, rel=1e-6)


def test_rho_truncation_error():
    mu = DoublingMeasure.from_spec(Domain("plane", (-0.5, 0.5, -0.5, 0.5), n=16),
                                   {"kind": "uniform", "parameters": {"c": 1e-4}})
    with pytest.raises(TruncationError):
        rho(mu, 0.0)


def test_rho_consistency_random_points():
    rng = np.random.default_rng(1)
    for mu, dom in ((plane("exp_x", a=0.5), PLANE),
                    (DoublingMeasure.from_spec(DISK, {"kind": "hyperbolic"}), DISK)):
        if dom.kind == "plane":
            z = rng.uniform(-3, 3, 200) + 1j * rng.uniform(-3, 3, 200)
        else:
            z = 0.6 * np.sqrt(rng.random(200)) * np.exp(2j * np.pi * rng.random(200))
        r = rho(mu, z)
        assert np.max(np.abs(metric_ball_mass(mu, z, r) - 1.0)) <= 1e-6


def test_doubling_uniform_is_four():
    d = doubling_diagnostic(plane("uniform"), [0, 1 + 1j, -2], [0.1, 0.3, 0.6])
    assert d["C_est"] == pytest.approx(4.0, abs=1e-6)
    assert d["gamma_est"] == pytest.approx(2.0, abs=1e-6)


def test_doubling_abs_x_is_eight():
    # integral of |x| over a disk of radius r about the origin is 4 r^3 / 3
    d = doubling_diagnostic(plane("abs_x"), [0.0, 0.5, -1.0], [0.1, 0.2, 0.4])
    assert d["C_est"] == pytest.approx(8.0, rel=1e-3)


def test_doubling_rejects_bad_input():
    with pytest.raises(ArgumentError):
        doubling_diagnostic(plane("uniform"), [], [0.1])
    with pytest.raises(ArgumentError):
        doubling_diagnostic(plane("uniform"), [0], [1.5])


def test_tail_integral_translation_invariant():
    mu = plane("uniform")
    a = tail_integral_diagnostic(mu, 0.0, 1.0, 3)
    b = tail_integral_diagnostic(mu, 1.5 - 0.7j, 1.0, 3)
    assert math.isfinite(a)
    assert abs(a - b) <= 1e-3 * abs(a)


def test_tail_integral_monotone_in_delta():
    mu = plane("uniform")
    assert tail_integral_diagnostic(mu, 0.0, 0.5, 3) >= tail_integral_diagnostic(mu, 0.0, 1.0, 3)


def test_tail_integral_polar_closed_form():
    r0 = 1 / math.sqrt(math.pi)
    want = 2 * math.pi * (r0 ** 2 - r0 ** 3)
    assert tail_integral_diagnostic(plane("uniform"), 0.0, 1.0, 3) == pytest.approx(want, rel=1e-6)


def test_thin_rectangles_carry_vanishing_mass():
    mu = plane("sinprod")
    widths = [1e-2, 1e-4, 1e-6]
    ms = [mass(mu, MetricRect("plane", 0.3, 0.3 + w, -1, 2)) for w in widths]
    assert ms[-1] < 1e-5
    assert ms[0] > ms[1] > ms[2]


def test_slow_variation_of_rho():
    mu = plane("exp_x", a=0.5)
    rng = np.random.default_rng(2)
    z = rng.uniform(-3, 3, 100) + 1j * rng.uniform(-3, 3, 100)
    rz = rho(mu, z)
    bounds = {}
    for K in (1, 2, 4):
        u = rng.random(100) * 2 * np.pi
        w = z + K * rz * rng.random(100) * np.exp(1j * u)
        rw = rho(mu, w)
        ratio = rz / rw
        bounds[K] = float(max(ratio.max(), 1 / ratio.min()))
    assert all(math.isfinite(c) and c < 10 for c in bounds.values())


def test_csv_and_json_round_trip(tmp_path):
    mu = plane("exp_x", a=0.5)
    back = DoublingMeasure.from_json(mu.to_json())
    r = MetricRect("plane", 0, 1, 0, 1)
    assert mass(back, r) == mass(mu, r)
    path = tmp_path / "density.csv"
    mu.write_csv(path)
    g = DoublingMeasure.read_csv(path)
    assert np.array_equal(g.grid_values, mu.grid_density())


def test_line_measure_rho():
    lm = LineMeasure(lambda x: np.full(np.shape(x), 2.0), (-10, 10))
    assert lm.rho(0.0)[0] == pytest.approx(0.25, rel=1e-10)


def test_weight_laplacian_matches_density():
    w = weight_from_spec(PLANE, {"kind": "gaussian", "parameters": {"alpha": 1.0}})
    lap = w.laplacian_on()
    Z = PLANE.grid()
    h = PLANE.h
    phi = w.phi_on()
    fd = (phi[2:, 1:-1] + phi[:-2, 1:-1] + phi[1:-1, 2:] + phi[1:-1, :-2] - 4 * phi[1:-1, 1:-1]) / h ** 2
    assert np.allclose(fd, lap[1:-1, 1:-1], rtol=1e-8, atol=1e-8)
    assert Z.shape == lap.shape


@settings(max_examples=60, deadline=None)
@given(st.floats(-3, 2), st.floats(0.2, 2), st.floats(-3, 2), st.floats(0.2, 2),
       st.sampled_from([0, 1]), st.floats(0.05, 0.95))
def test_mass_additive_under_split(x0, w, y0, hgt, axis, frac):
    mu = plane("sinprod")
    r = MetricRect("plane", x0, x0 + w, y0, y0 + hgt)
    lo, hi = r.interval(axis)
    a, b = rect_split(r, axis, lo + frac * (hi - lo))
    total = mass(mu, r)
    assert mass(mu, a) + mass(mu, b) == pytest.approx(total, rel=1e-9)
    assert total >= 0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.8), st.floats(0.0, 2 * math.pi), st.floats(0.05, 0.5))
def test_disk_ball_mass_is_invariant_area(r, t, s):
    # hyperbolic density c/(1-|z|^2)^2 gives pi s^2/(1-s^2) for every ball of radius s
    mu = DoublingMeasure.from_spec(DISK, {"kind": "hyperbolic"})
    z = r * np.exp(1j * t)
    b = metric_ball(DISK, z, s)
    if abs(b.euclid_center) + b.euclid_radius >= 0.999:
        return
    assert mass(mu, b) == pytest.approx(math.pi * s * s / (1 - s * s), rel=1e-6)
