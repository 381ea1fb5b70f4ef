import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from dbarkit.errors import ArgumentError, HypothesisError
from dbarkit.geometry import Domain
from dbarkit.measure import DoublingMeasure, WeightField, mass, weight_from_spec
from dbarkit.regularize import (discrete_laplacian, disk_kernel, disk_kernel_bound_ratio, make_tiles,
                                plane_kernel, poisson_potential, regularize_weight, smooth_mu1,
                                split_measure)

PLANE = Domain("plane", (-4, 4, -4, 4), n=128)


def weight_with_density(D, density):
    """Weight whose counting measure Delta phi / 2 pi is ``density``."""
    c = 2 * math.pi
    return WeightField(D, lambda Z: 0.25 * c * density(Z) * np.abs(Z) ** 2,
                       lambda Z: c * density(Z) * np.ones(np.shape(Z)))


def test_split_uniform_four():
    phi = weight_with_density(PLANE, lambda Z: 4.0)
    sp = split_measure(phi, 1.0)
    assert np.allclose(sp.tile_mass, 4.0, rtol=1e-12)
    Z = PLANE.grid()[10:-10, 10:-10]
    assert np.allclose(sp.mu1.density(Z), 1.0)
    assert np.allclose(sp.mu2.density(Z), 3.0)


def test_split_tiles_carry_unit_mu1_mass():
    phi = weight_with_density(PLANE, lambda Z: 3 + np.sin(np.real(Z)))
    sp = split_measure(phi, 1.0)
    m1 = np.array([mass(sp.mu1, t) for t in sp.tiling.tiles])
    assert np.allclose(m1, 1.0, atol=1e-9)


def test_mu2_sandwich():
    dens = lambda Z: 3 + np.sin(np.real(Z))
    phi = weight_with_density(PLANE, dens)
    sp = split_measure(phi, 1.0)
    Z = PLANE.grid()
    # keep off tile edges where the tile lookup is ambiguous
    Z = Z[PLANE.mask()] + 1e-7
    Z = Z[(np.abs(Z.real) < 3.99) & (np.abs(Z.imag) < 3.99)]
    ratio = sp.mu2.density(Z) / dens(Z)
    assert ratio.min() >= 0.5 - 1e-12 and ratio.max() <= 1.0


def test_split_rejects_light_tiles():
    phi = weight_with_density(PLANE, lambda Z: 1.0)
    with pytest.raises(HypothesisError, match="tile 0"):
        split_measure(phi, 1.0)


def test_make_tiles_rejects_nonpositive_side():
    with pytest.raises(ArgumentError):
        make_tiles(PLANE, 0.0)


def test_smoothing_fixes_constants():
    mu1 = DoublingMeasure(PLANE, lambda Z: np.full(np.shape(Z), 0.7))
    s = smooth_mu1(mu1, 0.5, PLANE)
    Z = PLANE.grid()
    inner = (np.abs(Z.real) < 2.9) & (np.abs(Z.imag) < 2.9)
    # exact cell weights of the disk kernel sum to its area up to ~1e-4
    assert np.allclose(s[inner], 0.7, rtol=1e-4)


def test_smoothing_single_tile_overlap():
    # unit-mass square [0,1]^2: the average over D(z, 2) is the overlap area over 4 pi
    tile = DoublingMeasure(PLANE, lambda Z: ((Z.real > 0) & (Z.real < 1)
                                             & (Z.imag > 0) & (Z.imag < 1)).astype(float))
    s = smooth_mu1(tile, 1.0, PLANE)
    Z = PLANE.grid()

    def overlap(z):
        def seg(x):
            dy2 = 4.0 - (x - z.real) ** 2
            if dy2 <= 0:
                return 0.0
            dy = math.sqrt(dy2)
            return max(0.0, min(1.0, z.imag + dy) - max(0.0, z.imag - dy))
        return integrate.quad(seg, 0, 1, limit=200, epsabs=1e-12)[0]

    for target in (0.5 + 0.5j, 2.5 + 0.5j, 1.5 + 1.9j):
        i = np.unravel_index(np.argmin(np.abs(Z - target)), Z.shape)
        assert s[i] * 4 * math.pi == pytest.approx(overlap(Z[i]), abs=2e-3)


def test_potential_of_unit_disk_at_origin():
    D = Domain("plane", (-3, 3, -3, 3), n=128)
    mu = DoublingMeasure(D, lambda Z: (np.abs(Z) < 1).astype(float))
    # integral of r log r over [0, 1] is -1/4
    assert poisson_potential(mu, D, points=[0])[0] == pytest.approx(-0.25, abs=1e-3)


def test_potential_of_zero_measure():
    D = Domain("plane", (-2, 2, -2, 2), n=32)
    mu = DoublingMeasure(D, lambda Z: np.zeros(np.shape(Z)))
    assert np.all(poisson_potential(mu, D) == 0)
    Dd = Domain("disk", r_max=0.9, n=32)
    mud = DoublingMeasure(Dd, lambda Z: np.zeros(np.shape(Z)))
    assert np.allclose(poisson_potential(mud, Dd), 0)


def test_potential_laplacian_reproduces_density():
    errs = []
    for n in (64, 128):
        D = Domain("plane", (-3, 3, -3, 3), n=n)
        dens = lambda Z: 1 + 0.5 * np.cos(np.real(Z)) * np.cos(np.imag(Z))
        mu = DoublingMeasure(D, dens)
        lap = discrete_laplacian(D, poisson_potential(mu, D))
        Z = D.grid()
        inner = (np.abs(Z.real) < 2) & (np.abs(Z.imag) < 2)
        errs.append(np.abs(lap - dens(Z))[inner].max())
    assert errs[1] < 0.01
    assert math.log2(errs[0] / errs[1]) >= 1.5


def test_plane_counterterm_inactive_inside_unit_disk():
    z = np.array([0.3, 1 + 1j])
    zeta = 0.5j
    assert np.allclose(plane_kernel(z, zeta), np.log(np.abs(z - zeta)) / (2 * math.pi))


def test_plane_counterterm_cancels_growth():
    # for |zeta| large the kernel stays small at fixed z
    z = 0.5 + 0.2j
    far = np.array([50.0, 200j, -1000 + 1000j])
    assert np.all(np.abs(plane_kernel(z, far)) < 1e-3)


def test_disk_kernel_bound():
    rng = np.random.default_rng(0)
    z = 0.9 * np.sqrt(rng.random(2000)) * np.exp(2j * np.pi * rng.random(2000))
    w = 0.9 * np.sqrt(rng.random(2000)) * np.exp(2j * np.pi * rng.random(2000))
    C = disk_kernel_bound_ratio(z, w).max()
    assert math.isfinite(C) and C < 1.0


def test_disk_kernel_harmonic_off_pole():
    w = -0.2 + 0.4j
    e = 1e-3
    for z in (0.3 + 0.1j, -0.6 - 0.2j, 0.1 + 0.8j):
        lap = (disk_kernel(z + e, w) + disk_kernel(z - e, w) + disk_kernel(z + 1j * e, w)
               + disk_kernel(z - 1j * e, w) - 4 * disk_kernel(z, w)) / e ** 2
        assert abs(lap) < 1e-4


def test_regularize_gaussian():
    phi = weight_from_spec(PLANE, {"kind": "gaussian", "parameters": {"alpha": 1.0}})
    rw = regularize_weight(phi, diagnose=False)
    assert rw.eps_floor > 0
    assert math.isfinite(rw.sup_diff)
    assert rw.sup_diff_trimmed < 1.0
    lo, hi = rw.mu1_smooth_range
    assert 0 < lo <= hi


def test_regularize_bumps_gets_floor():
    D = Domain("plane", (-4, 4, -4, 4), n=128)
    bumps = {"kind": "bumps", "parameters": {"mass": 2 * math.pi, "radius": 0.3, "spacing": 1.0}}
    phi = weight_from_spec(D, bumps)
    assert phi.laplacian_on().min() == 0.0
    rw = regularize_weight(phi, R=2.0, diagnose=False)
    assert rw.eps_floor > 0
    # the difference is controlled by the mu_1 mass near each point
    assert rw.sup_diff < 2 * math.pi * rw.tile_mass.max()


@settings(max_examples=10, deadline=None)
@given(st.floats(5.0, 8.0), st.floats(0.0, 0.5))
def test_mu2_sandwich_property(c, b):
    dens = lambda Z: c * (1 + b * np.sin(np.real(Z)) * np.cos(np.imag(Z)))
    phi = weight_with_density(PLANE, dens)
    sp = split_measure(phi, 1.0)
    Z = PLANE.grid()[2:-2, 2:-2] + 1e-7
    ratio = sp.mu2.density(Z) / dens(Z)
    assert ratio.min() >= 0.5 - 1e-12 and ratio.max() <= 1.0
