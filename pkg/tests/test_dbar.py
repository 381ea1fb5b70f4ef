import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dbarkit.dbar import (GridField, _dbar, dbar_residual, kernel_decay_profile, model_disk_at,
                          prepare_weighted, random_data, residual_region, solve_model_disk,
                          solve_model_plane, solve_weighted, weighted_norm)
from dbarkit.errors import ArgumentError
from dbarkit.geometry import Domain
from dbarkit.measure import weight_from_spec

PLANE = Domain("plane", (-4, 4, -4, 4), n=128)
UNIT = Domain("plane", (0, 1, 0, 1), n=64)
DISK = Domain("disk", r_max=0.95, n=128)


def field(D, values, kind="data"):
    return GridField(D, np.asarray(values, dtype=complex), kind)


def interior(D):
    m = np.zeros((D.n, D.n), bool)
    m[2:-2, 2:-2] = True
    return m


# ------------------------------------------------------------ residuals

def test_residual_exact_for_conj_z():
    Z = PLANE.grid()
    r = dbar_residual(field(PLANE, np.conj(Z), "solution"), field(PLANE, np.ones(Z.shape)),
                      region=interior(PLANE))
    assert r <= 1e-10


def test_residual_zero_for_holomorphic_quadratic():
    Z = PLANE.grid()
    res = _dbar(PLANE, Z ** 2)[1:-1, 1:-1]
    assert np.abs(res).max() <= 1e-12


def test_residual_of_cubic_is_stencil_error():
    # central differences leave dbar(z^3) = h^2 exactly
    Z = PLANE.grid()
    res = _dbar(PLANE, Z ** 3)[1:-1, 1:-1]
    assert np.allclose(res, PLANE.h ** 2, atol=1e-10)


def test_residual_second_order_for_mixed_cubic():
    errs = []
    for n in (64, 128):
        D = Domain("plane", (-1, 1, -1, 1), n=n)
        Z = D.grid()
        # dbar(z conj(z)^2) = 2 |z|^2
        u = Z * np.conj(Z) ** 2
        errs.append(dbar_residual(field(D, u, "solution"), field(D, 2 * np.abs(Z) ** 2),
                                  region=interior(D)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)


def test_residual_rejects_mismatched_grids():
    a = field(PLANE, np.zeros((128, 128)))
    b = field(UNIT, np.zeros((64, 64)))
    with pytest.raises(ArgumentError):
        dbar_residual(a, b)


# ------------------------------------------------------------ norms

def test_weighted_norm_trivial_cases():
    one = field(UNIT, np.ones((64, 64)))
    zero = np.zeros((64, 64))
    assert weighted_norm(one, zero, math.inf) == 1.0
    # cell-centred grid of [0, 1]^2 carries unit area
    assert weighted_norm(one, zero, 2) == pytest.approx(1.0, rel=1e-12)


def test_weighted_norm_cancels_weight():
    phi = weight_from_spec(UNIT, {"kind": "gaussian", "parameters": {"alpha": 1.0}})
    Z = UNIT.grid()
    ind = (Z.real < 0.5)
    f = field(UNIT, np.exp(phi.phi_on()) * ind)
    assert weighted_norm(f, phi, 1) == pytest.approx(0.5, rel=1e-12)


def test_weighted_norm_rejects_small_p():
    with pytest.raises(ArgumentError):
        weighted_norm(field(UNIT, np.ones((64, 64))), np.zeros((64, 64)), 0.5)
    with pytest.raises(ArgumentError):
        weighted_norm(field(UNIT, np.ones((64, 64))), np.zeros((64, 64)), 2, variant="other")


def test_disk_boundary_weighted_variant():
    D = Domain("disk", r_max=0.5, n=64)
    f = field(D, np.where(D.mask(), 1.0, 0.0))
    plain = weighted_norm(f, np.zeros((64, 64)), math.inf)
    bw = weighted_norm(f, np.zeros((64, 64)), math.inf, "disk_boundary_weighted")
    r = np.abs(D.grid()[D.mask()])
    assert bw == pytest.approx((1 - r).max())
    assert plain == 1.0


# ------------------------------------------------------------ model solvers

def test_plane_model_zero_data():
    u = solve_model_plane(field(PLANE, np.zeros((128, 128))), 0.5)
    assert np.all(u.values == 0)


def test_model_alpha_checks():
    f = field(PLANE, np.zeros((128, 128)))
    with pytest.raises(ArgumentError):
        solve_model_plane(f, 0.0)
    g = field(DISK, np.zeros((128, 128)))
    for a in (0.0, 1.0):
        with pytest.raises(ArgumentError):
            solve_model_disk(g, a)
    with pytest.raises(ArgumentError):
        solve_model_disk(f, 0.5)


def test_plane_model_residual_and_decay():
    Z = PLANE.grid()
    f = field(PLANE, (np.abs(Z) < 1).astype(float))
    u = solve_model_plane(f, 0.5)
    region = residual_region(f)
    assert dbar_residual(u, f, region) < 0.05
    w = np.abs(u.values) * np.exp(-0.5 * np.abs(Z) ** 2)
    edge = np.zeros(w.shape, bool)
    edge[[0, -1], :] = True
    edge[:, [0, -1]] = True
    assert w[edge].max() < 1e-3 * w.max()


def test_disk_model_constant_data_vanishes_at_origin():
    f = field(DISK, np.where(DISK.mask(), 1.0, 0.0))
    assert abs(model_disk_at(f, [0.0])[0]) <= 1e-3


def test_disk_model_differs_from_particular_solution_by_holomorphic():
    Z = DISK.grid()
    t = np.abs(Z) / 0.5
    bump = np.where(t < 1, (1 - t * t) ** 4, 0.0)
    v = np.conj(Z) * bump
    # dbar of conj(z) * bump, in closed form
    db = bump + np.conj(Z) * np.where(t < 1, -8 * (1 - t * t) ** 3 * Z / 0.25 / 2, 0.0)
    f = field(DISK, db)
    u = solve_model_disk(f, 0.5)
    diff = _dbar(DISK, u.values - v)
    inner = np.abs(Z) < 0.8
    inner[[0, -1], :] = False
    inner[:, [0, -1]] = False
    assert np.abs(diff[inner]).max() < 0.02 * np.abs(db).max()


# ------------------------------------------------------------ weighted pipeline

def test_exact_model_reduces_to_model_solver():
    phi = weight_from_spec(PLANE, {"kind": "gaussian", "parameters": {"alpha": 1.0}})
    f = random_data(PLANE, np.random.default_rng(1), phi)
    setup = prepare_weighted(phi)
    assert setup.trivial and setup.model == ("plane", 1.0)
    u, rep = solve_weighted(f, setup=setup)
    ref = solve_model_plane(f, 1.0)
    assert np.max(np.abs(u.values - ref.values)) <= 1e-3 * np.max(np.abs(ref.values))
    assert rep.members_used == 1


def test_full_family_on_model_weight_solves_dbar():
    phi = weight_from_spec(PLANE, {"kind": "gaussian", "parameters": {"alpha": 1.0}})
    f = random_data(PLANE, np.random.default_rng(2), phi)
    setup = prepare_weighted(phi, reduce_model=False)
    assert not setup.trivial
    assert setup.model[1] == pytest.approx(0.5)
    u, rep = solve_weighted(f, setup=setup)
    assert rep.residual_rel < 0.05
    assert 0 < rep.ratio < math.inf


def test_weighted_solve_is_deterministic():
    phi = weight_from_spec(PLANE, {"kind": "gaussian_sin", "parameters": {"alpha": 1.0, "beta": 0.3}})
    f = random_data(PLANE, np.random.default_rng(5), phi)
    u1, r1 = solve_weighted(f, phi)
    u2, r2 = solve_weighted(f, phi)
    assert np.array_equal(u1.values, u2.values)
    assert r1.to_json() == r2.to_json()


def test_weight_without_floor_is_rejected():
    phi = weight_from_spec(PLANE, {"kind": "zero"})
    with pytest.raises(ArgumentError):
        prepare_weighted(phi)


def test_exact_model_kernel_decay():
    phi = weight_from_spec(PLANE, {"kind": "gaussian", "parameters": {"alpha": 0.5}})
    prof = kernel_decay_profile(prepare_weighted(phi), count=200)
    assert prof["epsilon_fit"] == pytest.approx(0.5, rel=0.1)
    assert prof["r2"] >= 0.95


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.3, 2.0))
def test_model_solution_residual_property(seed, alpha):
    D = Domain("plane", (-3, 3, -3, 3), n=128)
    f = random_data(D, np.random.default_rng(seed))
    u = solve_model_plane(f, alpha)
    assert dbar_residual(u, f) < 0.05
