"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest -s tests/test_acceptance.py`` to see the verdict lines.
The thresholds are restated here against the raw metrics rather than trusting
the verdict flag alone.
"""
import math

import pytest

from dbarkit import criteria


def _report(v):
    print()
    print(v.line(), f"({v.seconds:.1f} s)")
    return v.metrics


def test_criterion_01_moment_matching():
    v = criteria.run(1)
    m = _report(v)
    assert len(m["per_case"]) == 6  # three densities times two (m, k) pairs
    assert m["max_relative_residual"] <= 1e-9
    assert v.seconds <= 60
    assert v.passed


def test_criterion_02_alternate_power_sums():
    v = criteria.run(2)
    m = _report(v)
    assert m["max_relative_error"] <= 1e-12
    assert v.passed


def test_criterion_03_partition():
    v = criteria.run(3)
    m = _report(v)
    for name in ("exp_x", "sinprod"):
        case = m[name]
        for run in case["runs"]:
            assert run["mass_error"] <= 1e-6
            assert run["E_bisect"] <= 3.0
        assert math.isfinite(case["runs"][-1]["E_max"])
        assert case["E_max_change"] <= 0.10
        lo, hi = case["ratio_interval"]
        assert 0 < lo <= hi < math.inf
    assert m["disk_hyperbolic"]["mass_error"] <= 1e-6
    assert v.passed


def test_criterion_04_sandwich():
    v = criteria.run(4)
    m = _report(v)
    for name in ("plane", "disk"):
        assert math.isfinite(m[name]["spread"])
        assert m[name]["change"] <= 0.20
        assert m[name]["M_fit"] <= 4
    assert v.seconds <= 300
    assert v.passed


def test_criterion_05_lattice_oracle():
    v = criteria.run(5)
    m = _report(v)
    assert max(m["spread"].values()) <= 0.2
    assert v.passed


def test_criterion_06_family_disjointness():
    v = criteria.run(6)
    m = _report(v)
    assert m["empty"] and m["count"] == 0
    assert m["colors"] <= 25
    assert v.passed


def test_criterion_07_regularization():
    v = criteria.run(7)
    m = _report(v)
    assert min(m["eps_floor"]) > 0
    assert m["sup_change"] <= 0.10
    assert len(m["laplacian"]) == 3
    for case in m["laplacian"].values():
        assert case["order"] >= 1.5
    assert m["K0"] == pytest.approx(-0.25, abs=1e-3)
    assert v.passed


def test_criterion_08_model_solvers():
    v = criteria.run(8)
    m = _report(v)
    assert m["plane"]["residual"][256] <= 0.02
    assert m["plane"]["order"] >= 1.0
    assert m["disk"]["u0"] <= 1e-3
    assert v.passed


def test_criterion_09_weighted_estimates():
    v = criteria.run(9)
    m = _report(v)
    for name in ("plane", "disk"):
        assert set(m[name]["p"]) == {"1", "2", "inf"}
        for stats in m[name]["p"].values():
            assert stats["max_over_min"] <= 4.0
            assert stats["grid_change"] <= 0.5
    assert v.passed


def test_criterion_10_kernel_decay():
    v = criteria.run(10)
    m = _report(v)
    assert m["preset"]["epsilon_fit"] > 0
    assert m["preset"]["r2"] >= 0.9
    assert m["model_relative_error"] <= 0.10
    assert v.passed
