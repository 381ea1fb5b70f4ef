"""Grid potentials with exact per-cell kernel integrals.

Densities are represented by cell averages on the domain grid.  The
logarithmic and Cauchy kernels are integrated exactly over each cell and the
resulting discrete convolutions are evaluated with FFTs, so the singular cell
needs no special casing.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.signal import fftconvolve

from .geometry import Domain


def _atan_ratio(a, b):
    """a**2 * atan(b / a) with the a -> 0 limit 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a * a * np.arctan(b / a)
    return np.where(a == 0, 0.0, out)


def _log_prim(x, y):
    """Antiderivative F with d2F/dxdy = log sqrt(x^2 + y^2)."""
    r2 = x * x + y * y
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(r2 > 0, x * y * (np.log(np.where(r2 > 0, r2, 1.0)) - 3.0), 0.0)
    return 0.5 * (t + _atan_ratio(x, y) + _atan_ratio(y, x))


def _cauchy_prim(x, y):
    """Antiderivative G with d2G/dxdy = x / (x^2 + y^2)."""
    r2 = x * x + y * y
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = np.where(r2 > 0, 0.5 * y * np.log(np.where(r2 > 0, r2, 1.0)), 0.0)
        at = np.where(x == 0, 0.0, x * np.arctan(y / x))
    return lg + at


def _rect_diff(F, x0, x1, y0, y1):
    x0, x1, y0, y1 = (np.asarray(v, dtype=float) for v in (x0, x1, y0, y1))
    return F(x1, y1) - F(x0, y1) - F(x1, y0) + F(x0, y0)


def log_cell_integral(x0, x1, y0, y1):
    """Integral of log|w| over [x0, x1] x [y0, y1] (vectorised)."""
    return _rect_diff(_log_prim, x0, x1, y0, y1)


def cauchy_cell_integral(x0, x1, y0, y1):
    """Integral of 1/w over [x0, x1] x [y0, y1] (vectorised)."""
    re = _rect_diff(_cauchy_prim, x0, x1, y0, y1)
    im = _rect_diff(lambda a, b: _cauchy_prim(b, a), x0, x1, y0, y1)
    return re - 1j * im


def _offset_cells(n: int, h: float, hy: float):
    k = np.arange(-(n - 1), n)
    cx = k * h
    cy = k * hy
    X, Y = np.meshgrid(cx, cy, indexing="ij")
    return X, Y


def log_kernel(n: int, h: float, hy: float | None = None) -> np.ndarray:
    """Cell integrals of log|w| for all grid offsets, shape (2n-1, 2n-1)."""
    hy = h if hy is None else hy
    X, Y = _offset_cells(n, 1.0, hy / h)
    a = hy / h
    vals = log_cell_integral(X - 0.5, X + 0.5, Y - a / 2, Y + a / 2)
    return h * h * (vals + a * math.log(h))


def cauchy_kernel(n: int, h: float, hy: float | None = None) -> np.ndarray:
    """Cell integrals of 1/w for all grid offsets."""
    hy = h if hy is None else hy
    X, Y = _offset_cells(n, 1.0, hy / h)
    a = hy / h
    return h * cauchy_cell_integral(X - 0.5, X + 0.5, Y - a / 2, Y + a / 2)


_KCACHE: dict = {}


def _cached(kind, n, h, hy):
    key = (kind, n, round(h, 15), round(hy, 15))
    if key not in _KCACHE:
        if len(_KCACHE) > 6:
            _KCACHE.clear()
        _KCACHE[key] = log_kernel(n, h, hy) if kind == "log" else cauchy_kernel(n, h, hy)
    return _KCACHE[key]


def _convolve(avg: np.ndarray, ker: np.ndarray) -> np.ndarray:
    n = avg.shape[0]
    out = fftconvolve(avg, ker, mode="full")
    return out[n - 1:2 * n - 1, n - 1:2 * n - 1]


def log_potential_grid(domain: Domain, avg: np.ndarray) -> np.ndarray:
    """int log|z - zeta| avg(zeta) dm(zeta) at the grid points."""
    ker = _cached("log", domain.n, domain.h, domain.hy)
    return _convolve(np.asarray(avg, dtype=float), ker)


def cauchy_grid(domain: Domain, avg: np.ndarray) -> np.ndarray:
    """int avg(zeta) / (z - zeta) dm(zeta) at the grid points (no 1/pi)."""
    ker = _cached("cauchy", domain.n, domain.h, domain.hy)
    return _convolve(np.asarray(avg, dtype=complex), ker)


def _cell_boxes(domain: Domain, z: complex, idx):
    xs, ys = domain.xs, domain.ys
    dx = z.real - xs[idx[0]]
    dy = z.imag - ys[idx[1]]
    h, hy = domain.h, domain.hy
    return dx - h / 2, dx + h / 2, dy - hy / 2, dy + hy / 2


def log_potential_points(domain: Domain, avg: np.ndarray, z) -> np.ndarray:
    """Same integral as log_potential_grid at arbitrary points (O(cells) each)."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    idx = np.nonzero(avg)
    w = avg[idx]
    out = np.empty(z.shape)
    for i, zi in np.ndenumerate(z):
        x0, x1, y0, y1 = _cell_boxes(domain, zi, idx)
        out[i] = np.sum(w * log_cell_integral(x0, x1, y0, y1))
    return out


def cauchy_points(domain: Domain, avg: np.ndarray, z) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    idx = np.nonzero(avg)
    w = avg[idx]
    out = np.empty(z.shape, dtype=complex)
    for i, zi in np.ndenumerate(z):
        x0, x1, y0, y1 = _cell_boxes(domain, zi, idx)
        out[i] = np.sum(w * cauchy_cell_integral(x0, x1, y0, y1))
    return out


def cell_averages(domain: Domain, fn, coverage=None, ss: int = 4, rows: int = 32) -> np.ndarray:
    """Cell averages of fn (times the coverage indicator) by ss x ss supersampling."""
    n, h, hy = domain.n, domain.h, domain.hy
    off_x = ((np.arange(ss) + 0.5) / ss - 0.5) * h
    off_y = ((np.arange(ss) + 0.5) / ss - 0.5) * hy
    sub = (off_x[:, None] + 1j * off_y[None, :]).ravel()
    xs, ys = domain.xs, domain.ys
    out = None
    for i0 in range(0, n, rows):
        i1 = min(n, i0 + rows)
        C = xs[i0:i1, None] + 1j * ys[None, :]
        Z = C[..., None] + sub
        v = fn(Z)
        if coverage is not None:
            v = v * coverage(Z)
        v = v.mean(axis=-1)
        if out is None:
            out = np.empty((n, n), dtype=v.dtype)
        out[i0:i1] = v
    return out


def rect_fraction(domain: Domain, rects) -> np.ndarray:
    """Exact area fraction of each grid cell covered by disjoint axis-aligned boxes."""
    n, h, hy = domain.n, domain.h, domain.hy
    xs, ys = domain.xs, domain.ys
    out = np.zeros((n, n))
    for x0, x1, y0, y1 in rects:
        fx = np.clip(np.minimum(xs + h / 2, x1) - np.maximum(xs - h / 2, x0), 0, None) / h
        fy = np.clip(np.minimum(ys + hy / 2, y1) - np.maximum(ys - hy / 2, y0), 0, None) / hy
        out += fx[:, None] * fy[None, :]
    return np.minimum(out, 1.0)


def indicator_fraction(domain: Domain, indicator, ss: int = 4, fine: int = 32) -> np.ndarray:
    """Area fraction of each cell inside a region; cells near the boundary are refined."""
    coarse = cell_averages(domain, lambda Z: indicator(Z).astype(float), None, ss)
    mixed = (coarse > 0) & (coarse < 1)
    grow = mixed.copy()
    grow[1:] |= mixed[:-1]
    grow[:-1] |= mixed[1:]
    grow[:, 1:] |= grow[:, :-1].copy()
    grow[:, :-1] |= grow[:, 1:].copy()
    idx = np.nonzero(grow)
    if idx[0].size:
        h, hy = domain.h, domain.hy
        off = (np.arange(fine) + 0.5) / fine - 0.5
        sub = (off[:, None] * h + 1j * off[None, :] * hy).ravel()
        C = domain.xs[idx[0]] + 1j * domain.ys[idx[1]]
        for s0 in range(0, C.size, 2048):
            c = C[s0:s0 + 2048]
            coarse[idx[0][s0:s0 + 2048], idx[1][s0:s0 + 2048]] = indicator(c[:, None] + sub).mean(axis=1)
    return coarse


def conj_moments(points, weights, nterms: int) -> np.ndarray:
    """sum weights * conj(points)**p for p = 0..nterms."""
    q = np.conj(np.asarray(points, dtype=complex)).ravel()
    w = np.asarray(weights).ravel().astype(complex)
    keep = w != 0
    q, w = q[keep], w[keep]
    out = np.empty(nterms + 1, dtype=complex)
    for p in range(nterms + 1):
        out[p] = w.sum()
        w = w * q
    return out


def polar_conj_moments(density, r_cov: float, nterms: int, nr: int = 96, nth: int = 1024):
    """Conjugate moments of a density over the disk |zeta| < r_cov."""
    x, wr = leggauss(nr)
    r = 0.5 * r_cov * (x + 1)
    wr = 0.5 * r_cov * wr * r
    th = np.arange(nth) * (2 * math.pi / nth)
    Z = r[:, None] * np.exp(1j * th)[None, :]
    W = wr[:, None] * (2 * math.pi / nth) * density(Z)
    return conj_moments(Z, W, nterms)


def disk_log_correction(Z, moments: np.ndarray) -> np.ndarray:
    """int log|1 - conj(zeta) z| dmu(zeta) = -Re sum_{p>=1} z^p/p * mom_p."""
    Z = np.asarray(Z, dtype=complex)
    acc = np.zeros(Z.shape, dtype=complex)
    for p in range(len(moments) - 1, 0, -1):
        acc = (acc + moments[p] / p) * Z
    return -acc.real


def power_series(Z, coeffs: np.ndarray) -> np.ndarray:
    """sum_p coeffs[p] z^p by Horner's rule."""
    Z = np.asarray(Z, dtype=complex)
    acc = np.zeros(Z.shape, dtype=complex)
    for c in coeffs[::-1]:
        acc = acc * Z + c
    return acc


def series_terms(r_z: float, r_zeta: float, tol: float = 1e-14) -> int:
    """Number of terms so that (r_z r_zeta)^p / p < tol."""
    q = r_z * r_zeta
    if q <= 0:
        return 1
    return int(min(4000, max(8, math.ceil(math.log(tol) / math.log(q)))))
