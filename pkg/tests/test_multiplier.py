import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dbarkit.errors import ArgumentError, ConstructionError
from dbarkit.geometry import Domain, MetricRect, trim_mask
from dbarkit.measure import DoublingMeasure, LineMeasure, WeightField, weight_from_spec
from dbarkit.multiplier import (Multiplier, build_multiplier, color_rectangles, lattice_sigma_log,
                                realline_multiplier, realline_sandwich, sandwich_ratio)
from dbarkit.quadrature import alternate_nodes, chebyshev_nodes

BOX = (-4, 4, -4, 4)


def gaussian(n, alpha=1.0):
    D = Domain("plane", BOX, n=n)
    return weight_from_spec(D, {"kind": "gaussian", "parameters": {"alpha": alpha}})


def five_point(L, h):
    return (L[2:, 1:-1] + L[:-2, 1:-1] + L[1:-1, 2:] + L[1:-1, :-2] - 4 * L[1:-1, 1:-1]) / h ** 2


def test_single_zero_plane_is_z():
    psi = weight_from_spec(Domain("plane", BOX, n=32), {"kind": "zero"})
    h = Multiplier.from_zeros(psi, [0.0])
    val = h.continuous_points(2.0) + h.point_sum(np.array([2.0]))
    assert val[0] == pytest.approx(math.log(2), abs=1e-12)


def test_single_zero_disk_is_blaschke_factor():
    psi = weight_from_spec(Domain("disk", r_max=0.95, n=32), {"kind": "zero"})
    h = Multiplier.from_zeros(psi, [0.0])
    val = h.continuous_points(0.5) + h.point_sum(np.array([0.5]))
    assert val[0] == pytest.approx(math.log(0.5), abs=1e-12)


def test_eps_exc_range():
    psi = weight_from_spec(Domain("plane", BOX, n=32), {"kind": "zero"})
    with pytest.raises(ArgumentError):
        Multiplier.from_zeros(psi, [0.0], eps_exc=1.5)


def test_node_count_is_mk_per_rectangle():
    m = build_multiplier(gaussian(64), 2, 3)
    assert len(m.nodes) == len(m.partition)
    assert len(m.zeros) == 3 * len(m.partition)
    assert set(m.mult) == {2}
    assert m.to_json()["max_residual"] <= 1e-9


def test_disk_node_count():
    D = Domain("disk", r_max=0.95, n=64)
    psi = weight_from_spec(D, {"kind": "disk_log", "parameters": {"alpha": 2.0}})
    m = build_multiplier(psi, 1, 1)
    assert len(m.partition) >= 1
    assert int(m.mult.sum()) == len(m.partition)


def test_m_equals_one_puts_nodes_at_centroids():
    psi = gaussian(64, 0.5)
    m = build_multiplier(psi, 1, 1)
    mu = m.measure()
    for ns in m.nodes[:5]:
        r = ns.rect
        # uniform density: centroid is the rectangle centre
        assert ns.lam[0] == pytest.approx(r.center, abs=1e-9)
    assert mu.domain == psi.domain


def test_harmonic_off_zeros():
    # the 5-point Laplacian of log|h| decays like grid^2 away from the zeros
    worst = []
    for n in (64, 128):
        psi = gaussian(n)
        m = build_multiplier(psi, 2, 1)
        D = psi.domain
        lap = five_point(m.log_abs_h_grid(D), D.h)
        Z = D.grid()[1:-1, 1:-1]
        inner = trim_mask(D, m._coverage_fn()(D.grid()), 0.5)[1:-1, 1:-1]
        sel = inner & (m.distance_to_zeros(Z) > 0.3)
        worst.append(np.abs(lap[sel]).max())
    assert worst[1] < 1.0
    assert worst[0] / worst[1] > 3.0


def test_sandwich_spread_shrinks_with_larger_exclusion():
    m = build_multiplier(gaussian(128), 2, 1)
    s1 = sandwich_ratio(m)
    s2 = sandwich_ratio(dataclasses.replace(m, eps_exc=0.5), M=s1["M_fit"])
    assert math.isfinite(s1["spread"])
    assert s2["spread"] < s1["spread"]
    assert s1["M_fit"] >= 1


def test_sandwich_empty_grid():
    m = build_multiplier(gaussian(64), 2, 1)
    with pytest.raises(ArgumentError):
        sandwich_ratio(m, collar=100.0)


def test_kappa_swap_changes_far_field_like_power_m():
    D = Domain("plane", BOX, n=32)
    mu = DoublingMeasure.from_spec(D, {"kind": "uniform"})
    r = MetricRect("plane", -0.5, 0.5, -1, 1)
    ns = chebyshev_nodes(mu, r, 2, 1)
    kap = alternate_nodes(ns.lam, 2, 2 * r.euclid_diameter)
    diam = r.euclid_diameter
    th = np.linspace(0, 2 * np.pi, 64, endpoint=False)

    def worst(d):
        z = d * np.exp(1j * th)
        a = 2 * np.log(np.abs(z[:, None] - ns.lam[None, :])).sum(axis=1)
        b = np.log(np.abs(z[:, None] - kap[None, :])).sum(axis=1)
        return np.abs(a - b).max()

    d1, d2 = worst(5 * diam), worst(10 * diam)
    assert d1 < 0.3  # tau / d = 0.4 here
    assert d2 / d1 == pytest.approx(0.25, rel=0.3)


def test_coloring_of_unit_squares():
    rects = [MetricRect("plane", i, i + 1, j, j + 1) for j in range(10) for i in range(10)]
    colors = color_rectangles(rects, 5.0, 25)
    assert max(colors) + 1 == 25
    key = {}
    for (i, j), c in zip(((i, j) for j in range(10) for i in range(10)), colors):
        key.setdefault((i % 5, j % 5), set()).add(c)
    assert all(len(v) == 1 for v in key.values())
    assert len({next(iter(v)) for v in key.values()}) == 25
    for a in range(len(rects)):
        for b in range(a + 1, len(rects)):
            if colors[a] == colors[b]:
                assert rects[a].distance_to(rects[b].center) >= 4 - 1e-9


def test_coloring_pigeonhole():
    rects = [MetricRect("plane", 0, 1, 0, 1), MetricRect("plane", 1, 2, 0, 1)]
    with pytest.raises(ConstructionError):
        color_rectangles(rects, 50.0, 1)


def test_realline_matches_sine_product():
    D = Domain("plane", (-10, 10, -4, 4), n=128)
    psi = WeightField(D, lambda Z: math.pi * np.abs(Z.imag), lambda Z: np.zeros(np.shape(Z)))
    line = LineMeasure(lambda x: np.ones_like(x), (-10.0, 10.0))
    m = realline_multiplier(line, psi, 1, 1)
    # unit intervals: zeros at the half integers, the zeros of cos(pi z)
    assert np.allclose(np.sort(m.zeros.real), np.arange(-9.5, 10, 1.0), atol=1e-9)
    Z = D.grid()
    sel = (np.abs(Z.real) < 5) & (np.abs(Z.imag) > 0.5)
    diff = (m.log_abs_h_grid(D) - np.log(np.abs(np.cos(np.pi * Z))))[sel]
    assert diff.max() - diff.min() < 0.02
    stats = realline_sandwich(m)
    assert stats["spread"] < 0.1


def test_lattice_sigma_symmetry():
    z = np.array([0.3 + 0.2j, 1.7 - 0.4j])
    a = lattice_sigma_log(z, 20)
    b = lattice_sigma_log(1j * z, 20)
    assert np.allclose(a, b, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=0.8, allow_nan=False, allow_infinity=False),
                min_size=1, max_size=4),
       st.complex_numbers(max_magnitude=0.9, allow_nan=False, allow_infinity=False))
def test_disk_zero_weight_is_blaschke_product(zeros, z):
    psi = weight_from_spec(Domain("disk", r_max=0.95, n=16), {"kind": "zero"})
    h = Multiplier.from_zeros(psi, zeros)
    zs = np.array(zeros)
    if np.min(np.abs(z - zs)) < 1e-6:
        return
    want = np.log(np.abs((z - zs) / (1 - np.conj(zs) * z))).sum()
    got = (h.continuous_points(z) + h.point_sum(np.array([z])))[0]
    assert got == pytest.approx(want, abs=1e-10)
