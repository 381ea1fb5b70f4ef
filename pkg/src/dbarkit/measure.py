"""Locally doubling measures, their unit-mass radius and diagnostics.

Densities are callables of a complex array.  Rectangle integrals use
composite Gauss-Legendre panels in rectangle coordinates, ball integrals use a
polar Gauss-Legendre x trapezoid rule about the Euclidean centre of the ball.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import RegularGridInterpolator

from .errors import ArgumentError, DomainError, TruncationError
from .geometry import Ball, Domain, MetricRect, disk_ball_euclid, metric_ball

Density = Callable[[np.ndarray], np.ndarray]

TOL_RHO = 1e-6
_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _leggauss(order: int):
    if order not in _GL_CACHE:
        _GL_CACHE[order] = leggauss(order)
    return _GL_CACHE[order]


def gl_panels(lo: float, hi: float, max_panel: float, order: int = 8):
    """Composite Gauss-Legendre nodes and weights on [lo, hi]."""
    npan = max(1, int(math.ceil((hi - lo) / max_panel - 1e-9)))
    x, w = _leggauss(order)
    edges = np.linspace(lo, hi, npan + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


def rect_nodes(rect: MetricRect, panel: float = 0.5, order: int = 8):
    """Quadrature nodes (complex) and area weights for a rectangle."""
    if rect.kind == "plane":
        a, wa = gl_panels(rect.a0, rect.a1, panel, order)
        b, wb = gl_panels(rect.b0, rect.b1, panel, order)
        Z = a[:, None] + 1j * b[None, :]
        return Z.ravel(), (wa[:, None] * wb[None, :]).ravel()
    a, wa = gl_panels(rect.a0, rect.a1, panel / 2, order)
    b, wb = gl_panels(rect.b0, rect.b1, math.pi / 16, order)
    r = np.tanh(a)
    jac = r * (1.0 - r * r)  # r dr/dt
    Z = r[:, None] * np.exp(1j * b[None, :])
    return Z.ravel(), ((wa * jac)[:, None] * wb[None, :]).ravel()


_BALL_R, _BALL_WR = leggauss(24)
_BALL_R = 0.5 * (_BALL_R + 1.0)
_BALL_WR = 0.5 * _BALL_WR
_BALL_NTH = 48


def ball_nodes(center, radius, nth: int = _BALL_NTH):
    """Polar nodes for Euclidean disks; vectorised over centres/radii.

    Returns arrays of shape (..., 24 * nth).
    """
    center = np.asarray(center, dtype=complex)[..., None, None]
    radius = np.asarray(radius, dtype=float)[..., None, None]
    th = (np.arange(nth) + 0.5) * (2 * math.pi / nth)
    t = radius * _BALL_R[:, None]
    Z = center + t * np.exp(1j * th)[None, :]
    W = (radius * _BALL_WR[:, None]) * t * (2 * math.pi / nth)
    W = np.broadcast_to(W, Z.shape)
    shape = Z.shape[:-2] + (-1,)
    return Z.reshape(shape), W.reshape(shape)


# ---------------------------------------------------------------- densities

def _density_family(kind: str, p: dict) -> Density:
    if kind in ("atom", "point", "dirac"):
        raise ArgumentError("point masses are not locally doubling; atoms are rejected")
    if kind == "uniform":
        c = float(p.get("c", 1.0))
        return lambda Z: np.full(np.shape(Z), c)
    if kind == "exp_x":
        c, a = float(p.get("c", 1.0)), float(p.get("a", 1.0))
        return lambda Z: c * np.exp(a * np.real(Z))
    if kind == "abs_x":
        c = float(p.get("c", 1.0))
        return lambda Z: c * np.abs(np.real(Z))
    if kind == "linear_x":
        a, b = float(p.get("a", 0.0)), float(p.get("b", 1.0))
        return lambda Z: a + b * np.real(Z)
    if kind == "sinprod":
        a, b = float(p.get("a", 2.0)), float(p.get("b", 1.0))
        return lambda Z: a + b * np.sin(np.real(Z)) * np.sin(np.imag(Z))
    if kind == "hyperbolic":
        c = float(p.get("c", 1.0))
        return lambda Z: c / (1.0 - np.abs(Z) ** 2) ** 2
    if kind == "gaussian_bump":
        c, s = float(p.get("c", 1.0)), float(p.get("s", 1.0))
        return lambda Z: c * np.exp(-np.abs(Z) ** 2 / s ** 2)
    raise ArgumentError(f"unknown density family {kind!r}")


@dataclass(frozen=True, eq=False)
class DoublingMeasure:
    """Absolutely continuous measure on a truncated domain (mass per area)."""

    domain: Domain
    density: Density
    spec: dict | None = None
    grid_values: np.ndarray | None = None
    panel: float = 0.5
    cutoff: float = 1.0

    @classmethod
    def from_spec(cls, domain: Domain, spec: dict, **kw) -> "DoublingMeasure":
        kind = spec["kind"]
        dens = _density_family(kind, spec.get("parameters", {}))
        mu = cls(domain, dens, spec=dict(spec), **kw)
        sample = dens(domain.grid()[domain.mask()])
        if np.any(sample < 0):
            raise ArgumentError("density must be nonnegative")
        return mu

    @classmethod
    def from_grid(cls, domain: Domain, values: np.ndarray, **kw) -> "DoublingMeasure":
        values = np.asarray(values, dtype=float)
        if values.shape != (domain.n, domain.n):
            raise ArgumentError("grid values must match the domain resolution")
        if np.any(values < 0):
            raise ArgumentError("density must be nonnegative")
        interp = RegularGridInterpolator((domain.xs, domain.ys), values,
                                         bounds_error=False, fill_value=None)

        def dens(Z):
            Z = np.asarray(Z, dtype=complex)
            pts = np.stack([Z.real.ravel(), Z.imag.ravel()], axis=-1)
            return interp(pts).reshape(Z.shape)

        return cls(domain, dens, spec={"kind": "grid"}, grid_values=values, **kw)

    def scaled(self, factor: float) -> "DoublingMeasure":
        d = self.density
        return DoublingMeasure(self.domain, lambda Z: factor * d(Z), spec=None,
                               panel=self.panel, cutoff=self.cutoff)

    def restricted(self, domain: Domain) -> "DoublingMeasure":
        return DoublingMeasure(domain, self.density, self.spec, None, self.panel, self.cutoff)

    @property
    def is_grid(self) -> bool:
        return self.grid_values is not None

    def grid_density(self, domain: Domain | None = None) -> np.ndarray:
        domain = domain or self.domain
        if self.grid_values is not None and domain == self.domain:
            return self.grid_values
        return self.density(domain.grid())

    @cached_property
    def unit_radius(self) -> float:
        """A radius R with mass(ball(z, R)) > 1 at sampled z (recorded once)."""
        rng = np.random.default_rng(0)
        z = sample_points(self.domain, 32, rng, margin=0.1)
        return float(1.000001 * rho(self, z).max())

    # ------------------------------------------------------------ io
    def to_json(self) -> dict:
        if self.spec is None or self.spec.get("kind") == "grid":
            raise ArgumentError("only closed-form measures have a JSON descriptor")
        return {"domain": self.domain.to_json(), **self.spec}

    @classmethod
    def from_json(cls, d: dict) -> "DoublingMeasure":
        dom = Domain.from_json(d["domain"])
        return cls.from_spec(dom, {"kind": d["kind"], "parameters": d.get("parameters", {})})

    def write_csv(self, path) -> None:
        vals = self.grid_density()
        x0, x1, y0, y1 = self.domain.box
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([self.domain.n, self.domain.n, x0, x1, y0, y1])
            for iy in range(self.domain.n):
                w.writerow([repr(float(v)) for v in vals[:, iy]])

    @classmethod
    def read_csv(cls, path, kind: str = "plane") -> "DoublingMeasure":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        nx, ny = int(rows[0][0]), int(rows[0][1])
        x0, x1, y0, y1 = (float(v) for v in rows[0][2:6])
        if nx != ny:
            raise ArgumentError("only square grids are supported")
        vals = np.array([[float(v) for v in r] for r in rows[1:1 + ny]]).T
        if kind == "plane":
            dom = Domain("plane", (x0, x1, y0, y1), n=nx)
        else:
            dom = Domain("disk", r_max=x1, n=nx)
        return cls.from_grid(dom, vals)


def sample_points(domain: Domain, count: int, rng, margin: float = 0.0) -> np.ndarray:
    """Uniform random points in the truncation, shrunk by a relative margin."""
    out = []
    while sum(len(o) for o in out) < count:
        if domain.kind == "plane":
            x0, x1, y0, y1 = domain.box
            cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
            s = 1.0 - margin
            z = (cx + s * (x1 - x0) * (rng.random(count) - 0.5)
                 + 1j * (cy + s * (y1 - y0) * (rng.random(count) - 0.5)))
        else:
            r = domain.r_max * (1 - margin) * np.sqrt(rng.random(count))
            z = r * np.exp(2j * math.pi * rng.random(count))
        out.append(z)
    return np.concatenate(out)[:count]


# ---------------------------------------------------------------- masses

def _check_region(mu: DoublingMeasure, pts: np.ndarray) -> None:
    if mu.domain.kind == "disk":
        if np.any(np.abs(pts) >= 1.0):
            raise DomainError("region leaves the unit disk")
        if mu.is_grid and np.any(np.abs(pts) > mu.domain.r_max + 1e-12):
            raise DomainError("region escapes the sampled truncation")
    elif mu.is_grid and not np.all(mu.domain.inside(pts)):
        raise DomainError("region escapes the sampled truncation")


def _linear_weights(nodes: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """w_i = integral over [lo, hi] of the i-th piecewise-linear basis function.

    The basis matches linear interpolation on ``nodes`` with linear
    extrapolation past the end nodes, so the sum is exact for that interpolant.
    """
    n = len(nodes)
    inner = nodes[(nodes > lo) & (nodes < hi)]
    br = np.concatenate([[lo], inner, [hi]])
    mid = 0.5 * (br[1:] + br[:-1])
    length = br[1:] - br[:-1]
    i = np.clip(np.searchsorted(nodes, mid) - 1, 0, n - 2)
    t = (mid - nodes[i]) / (nodes[i + 1] - nodes[i])
    w = np.zeros(n)
    np.add.at(w, i, length * (1 - t))
    np.add.at(w, i + 1, length * t)
    return w


def mass(mu: DoublingMeasure, region) -> float:
    """mu(region) for a MetricRect or Ball."""
    if isinstance(region, MetricRect):
        if region.kind != mu.domain.kind:
            raise ArgumentError("rectangle kind does not match the domain")
        _check_region(mu, region.outline())
        if mu.is_grid and region.kind == "plane":
            # exact for the bilinear interpolant of the grid samples
            D = mu.domain
            wx = _linear_weights(D.xs, region.a0, region.a1)
            wy = _linear_weights(D.ys, region.b0, region.b1)
            return float(wx @ mu.grid_values @ wy)
        Z, W = rect_nodes(region, mu.panel)
        return float(np.sum(W * mu.density(Z)))
    if isinstance(region, Ball):
        return float(ball_mass(mu, region.euclid_center, region.euclid_radius))
    raise ArgumentError("region must be a MetricRect or Ball")


def sub_mass(mu: DoublingMeasure, rect: MetricRect, axis: int, lo: float, hi: float) -> float:
    """Mass of rect restricted to [lo, hi] along axis (0 for an empty interval)."""
    return mass(mu, rect.with_interval(axis, lo, hi)) if hi > lo else 0.0


def ball_mass(mu: DoublingMeasure, euclid_center, euclid_radius, check: bool = True):
    """Mass of Euclidean disks, vectorised."""
    c = np.asarray(euclid_center, dtype=complex)
    r = np.asarray(euclid_radius, dtype=float)
    if check:
        edge = np.abs(c) + r
        if mu.domain.kind == "disk" and np.any(edge >= 1.0):
            raise DomainError("ball leaves the unit disk")
        if mu.is_grid:
            if mu.domain.kind == "disk":
                if np.any(edge > mu.domain.r_max + 1e-12):
                    raise DomainError("ball escapes the sampled truncation")
            else:
                x0, x1, y0, y1 = mu.domain.box
                bad = ((c.real - r < x0 - 1e-12) | (c.real + r > x1 + 1e-12)
                       | (c.imag - r < y0 - 1e-12) | (c.imag + r > y1 + 1e-12))
                if np.any(bad):
                    raise DomainError("ball escapes the sampled truncation")
    Z, W = ball_nodes(c, r)
    return np.sum(W * mu.density(Z), axis=-1)


def metric_ball_mass(mu: DoublingMeasure, z, r, check: bool = True):
    """Mass of metric balls B(z, r), vectorised over z and r."""
    z = np.asarray(z, dtype=complex)
    r = np.asarray(r, dtype=float)
    if mu.domain.kind == "plane":
        return ball_mass(mu, z, r, check)
    c, er = disk_ball_euclid(z, r)
    return ball_mass(mu, c, er, check)


def rho(mu: DoublingMeasure, z, tol: float = TOL_RHO) -> np.ndarray:
    """Radius of the metric ball about z of unit mass (vectorised bisection)."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    shape = z.shape
    z = z.ravel()
    disk = mu.domain.kind == "disk"
    # work in s = log r (plane) or s = artanh r (disk)
    to_r = np.tanh if disk else np.exp
    x0, x1, y0, y1 = mu.domain.box
    s_cap = math.atanh(1 - 1e-12) if disk else math.log(8 * math.hypot(x1 - x0, y1 - y0))
    h0 = mu.domain.h
    lo = np.full(z.shape, -np.inf)
    hi = np.full(z.shape, math.atanh(min(h0, 0.5)) if disk else math.log(h0))

    def m_of(s, idx):
        return metric_ball_mass(mu, z[idx], to_r(s))

    todo = np.arange(z.size)
    for _ in range(200):
        if todo.size == 0:
            break
        m = m_of(hi[todo], todo)
        low = m < 1.0
        lo[todo[low]] = hi[todo[low]]
        hi[todo[low]] += math.log(2.0) if not disk else 0.5
        todo = todo[low]
        if np.any(hi[todo] > s_cap):
            raise TruncationError("unit mass not reached inside the truncation")
    lo = np.where(np.isinf(lo), hi - 40.0, lo)
    result = hi.copy()
    active = np.arange(z.size)
    for _ in range(200):
        mid = 0.5 * (lo[active] + hi[active])
        m = m_of(mid, active)
        done = np.abs(m - 1.0) <= 0.5 * tol
        result[active[done]] = mid[done]
        big = m > 1.0
        hi[active[big]] = mid[big]
        lo[active[~big]] = mid[~big]
        tiny = (hi[active] - lo[active]) < 1e-15
        result[active[tiny & ~done]] = 0.5 * (lo[active] + hi[active])[tiny & ~done]
        active = active[~done & ~tiny]
        if active.size == 0:
            break
    return to_r(result).reshape(shape)


def rho_field(mu: DoublingMeasure, domain: Domain | None = None, coarse: int = 48):
    """rho on the grid of ``domain`` via a coarse tensor grid and interpolation."""
    domain = domain or mu.domain
    x0, x1, y0, y1 = domain.box
    xs = np.linspace(x0, x1, coarse)
    ys = np.linspace(y0, y1, coarse)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    Zc = X + 1j * Y
    if domain.kind == "disk":
        # stay inside the sampled disk
        lim = domain.r_max
        a = np.abs(Zc)
        Zc = np.where(a > lim, Zc / np.maximum(a, 1e-300) * lim, Zc)
    vals = rho(mu, Zc)
    interp = RegularGridInterpolator((xs, ys), np.log(vals), method="cubic")
    Z = domain.grid()
    pts = np.stack([Z.real.ravel(), Z.imag.ravel()], axis=-1)
    return np.exp(interp(pts)).reshape(Z.shape)


def doubling_diagnostic(mu: DoublingMeasure, samples, radii) -> dict:
    """Empirical doubling constant and mass-growth exponent.

    ``C_est`` is the largest mass(2B)/mass(B) seen; ``gamma_est`` is the mean
    exponent log2(mass(2B)/mass(B)), i.e. mass grows like r**gamma_est.
    """
    samples = np.atleast_1d(np.asarray(samples, dtype=complex)).ravel()
    radii = np.atleast_1d(np.asarray(radii, dtype=float)).ravel()
    if samples.size == 0:
        raise ArgumentError("no sample points")
    if radii.size == 0 or np.any(radii <= 0):
        raise ArgumentError("radii must be positive")
    if np.any(radii >= mu.cutoff):
        raise ArgumentError("radii must be below the locally doubling cutoff")
    Zs, Rs = np.meshgrid(samples, radii, indexing="ij")
    small = metric_ball_mass(mu, Zs, Rs, check=False)
    big_r = 2 * Rs if mu.domain.kind == "plane" else 2 * Rs / (1 + Rs * Rs)
    # in the disk, doubling the pseudo-hyperbolic radius means doubling the
    # hyperbolic radius: tanh(2 artanh r)
    big = metric_ball_mass(mu, Zs, big_r, check=False)
    ratio = big / small
    return {
        "C_est": float(ratio.max()),
        "gamma_est": float(np.mean(np.log2(ratio))),
        "ratio_min": float(ratio.min()),
    }


def tail_integral_diagnostic(mu: DoublingMeasure, w: complex, delta: float, m: int,
                             outer: float | None = None, nr: int = 64, nth: int = 96) -> float:
    """Integral of (rho(z)/d(z, w))**m over delta*rho(w) <= d(z, w) < outer."""
    if delta <= 0 or m < 1:
        raise ArgumentError("need delta > 0 and m >= 1")
    if outer is None:
        outer = 1.0 if mu.domain.kind == "plane" else 0.5
    rho_w = float(rho(mu, w)[0])
    inner = delta * rho_w
    if inner >= outer:
        return 0.0
    t, wt = gl_panels(inner, outer, (outer - inner) / 4, nr // 4)
    th = (np.arange(nth) + 0.5) * (2 * math.pi / nth)
    U = t[:, None] * np.exp(1j * th)[None, :]
    W = (wt * t)[:, None] * np.full(nth, 2 * math.pi / nth)[None, :]
    if mu.domain.kind == "plane":
        Z = w + U
        jac = 1.0
    else:
        Z = (U + w) / (1 + np.conj(w) * U)
        jac = ((1 - abs(w) ** 2) / np.abs(1 + np.conj(w) * U) ** 2) ** 2
    rz = rho(mu, Z)
    d = np.abs(U)
    return float(np.sum(W * jac * mu.density(Z) * (rz / d) ** m))


# ---------------------------------------------------------------- line measures

@dataclass(frozen=True, eq=False)
class LineMeasure:
    """Measure supported on the real axis, density per unit length."""

    density: Callable[[np.ndarray], np.ndarray]
    window: tuple[float, float]
    spec: dict | None = None

    def mass(self, a: float, b: float) -> float:
        x, w = gl_panels(a, b, 0.25, 10)
        return float(np.sum(w * self.density(x)))

    def cumulative(self, a: float, x) -> np.ndarray:
        return np.array([self.mass(a, xi) if xi > a else 0.0 for xi in np.atleast_1d(x)])

    def rho(self, x) -> np.ndarray:
        """Half-length r with mass(I(x, r)) = 1."""
        from scipy.optimize import brentq
        out = []
        for xi in np.atleast_1d(x):
            r_hi = 1.0
            while self.mass(xi - r_hi, xi + r_hi) < 1.0:
                r_hi *= 2.0
                if r_hi > 1e6:
                    raise TruncationError("unit mass not reached")
            out.append(brentq(lambda r: self.mass(xi - r, xi + r) - 1.0, 0.0, r_hi, xtol=1e-13))
        return np.array(out)


def line_density_family(kind: str, p: dict):
    if kind == "uniform":
        c = float(p.get("c", 1.0))
        return lambda x: np.full(np.shape(x), c)
    if kind == "abs":
        c = float(p.get("c", 1.0))
        return lambda x: c * np.abs(x)
    raise ArgumentError(f"unknown line density {kind!r}")


# ---------------------------------------------------------------- weights

@dataclass(frozen=True, eq=False)
class WeightField:
    """Weight phi with its Laplacian density (Delta phi per unit area).

    ``model`` records exact model weights: ("plane", a) for a|z|^2 and
    ("disk", a) for a log 1/(1-|z|^2).
    """

    domain: Domain
    phi: Callable[[np.ndarray], np.ndarray]
    laplacian: Callable[[np.ndarray], np.ndarray]
    epsilon_floor: float = 0.0
    spec: dict | None = None
    model: tuple[str, float] | None = None
    dphi: Callable[[np.ndarray], np.ndarray] | None = None
    grid_phi: np.ndarray | None = None
    grid_lap: np.ndarray | None = None

    def phi_on(self, domain: Domain | None = None) -> np.ndarray:
        domain = domain or self.domain
        if self.grid_phi is not None and domain == self.domain:
            return self.grid_phi
        return self.phi(domain.grid())

    def laplacian_on(self, domain: Domain | None = None) -> np.ndarray:
        domain = domain or self.domain
        if self.grid_lap is not None and domain == self.domain:
            return self.grid_lap
        return self.laplacian(domain.grid())

    def d_phi(self, Z) -> np.ndarray:
        """Complex derivative d/dz of phi (half the conjugate gradient)."""
        Z = np.asarray(Z, dtype=complex)
        if self.dphi is not None:
            return self.dphi(Z)
        e = 1e-5
        fx = (self.phi(Z + e) - self.phi(Z - e)) / (2 * e)
        fy = (self.phi(Z + 1j * e) - self.phi(Z - 1j * e)) / (2 * e)
        return 0.5 * (fx - 1j * fy)

    def measure(self) -> DoublingMeasure:
        """The counting-normalised measure Delta phi / (2 pi)."""
        lap = self.laplacian
        if self.grid_lap is not None:
            return DoublingMeasure.from_grid(self.domain, self.grid_lap / (2 * math.pi))
        return DoublingMeasure(self.domain, lambda Z: lap(Z) / (2 * math.pi),
                               spec={"kind": "weight_laplacian", "weight": self.spec})

    def minus_model(self, alpha: float) -> "WeightField":
        """phi - alpha * (model term): |z|^2 in the plane, log 1/(1-|z|^2) in the disk."""
        phi, lap, dphi = self.phi, self.laplacian, self.d_phi
        if self.domain.kind == "plane":
            term = lambda Z: np.abs(Z) ** 2
            lterm = lambda Z: np.full(np.shape(Z), 4.0)
            dterm = lambda Z: np.conj(Z)
        else:
            term, lterm, dterm = _disk_log_term, _disk_log_lap, _disk_log_d
        model = None
        if self.model is not None and self.model[0] == self.domain.kind:
            model = (self.model[0], self.model[1] - alpha)
        gp = None if self.grid_phi is None else self.grid_phi - alpha * term(self.domain.grid())
        gl = None if self.grid_lap is None else self.grid_lap - alpha * lterm(self.domain.grid())
        return WeightField(
            self.domain,
            lambda Z: phi(Z) - alpha * term(Z),
            lambda Z: lap(Z) - alpha * lterm(Z),
            epsilon_floor=0.0,
            spec={"kind": "minus_model", "alpha": alpha, "base": self.spec},
            model=model,
            dphi=lambda Z: dphi(Z) - alpha * dterm(Z),
            grid_phi=gp, grid_lap=gl,
        )

    def density_floor(self, mask: np.ndarray | None = None) -> float:
        """min of Delta phi (plane) or (1-|z|^2)^2 Delta phi (disk) on the grid."""
        lap = self.laplacian_on()
        if self.domain.kind == "disk":
            lap = lap * (1 - np.abs(self.domain.grid()) ** 2) ** 2
        m = self.domain.mask() if mask is None else mask
        return float(lap[m].min())


def _one_minus_r2(Z):
    """1 - |z|^2, nan outside the open unit disk."""
    w = 1.0 - np.abs(np.asarray(Z)) ** 2
    return np.where(w > 0, w, np.nan)


def _disk_log_term(Z):
    return -np.log(_one_minus_r2(Z))


def _disk_log_lap(Z):
    return 4.0 / _one_minus_r2(Z) ** 2


def _disk_log_d(Z):
    with np.errstate(invalid="ignore"):
        return np.conj(Z) / _one_minus_r2(Z)


def _bump_potential(r, a, amp):
    """Radial potential of the bump amp*(1-r^2/a^2)^2 on r<a (closed form)."""
    inner = amp * (r ** 2 / 4 - r ** 4 / (8 * a ** 2) + r ** 6 / (36 * a ** 4))
    total = math.pi * amp * a ** 2 / 3
    outer = total / (2 * math.pi) * np.log(np.maximum(r, 1e-300) / a) + 11 * amp * a ** 2 / 72
    return np.where(r < a, inner, outer)


def weight_from_spec(domain: Domain, spec: dict) -> WeightField:
    kind = spec["kind"]
    p = spec.get("parameters", {})
    if kind == "gaussian":
        a = float(p.get("alpha", 1.0))
        return WeightField(domain, lambda Z: a * np.abs(Z) ** 2,
                           lambda Z: np.full(np.shape(Z), 4 * a), 4 * a, dict(spec),
                           model=("plane", a), dphi=lambda Z: a * np.conj(Z))
    if kind == "gaussian_sin":
        a, b = float(p.get("alpha", 1.0)), float(p.get("beta", 0.3))

        def dphi(Z):
            x, y = Z.real, Z.imag
            return a * np.conj(Z) + 0.5 * b * (np.cos(x) * np.sin(y) - 1j * np.sin(x) * np.cos(y))

        return WeightField(
            domain,
            lambda Z: a * np.abs(Z) ** 2 + b * np.sin(Z.real) * np.sin(Z.imag),
            lambda Z: 4 * a - 2 * b * np.sin(Z.real) * np.sin(Z.imag),
            4 * a - 2 * abs(b), dict(spec), dphi=dphi)
    if kind == "exp":
        c, s = float(p.get("c", 1.0)), float(p.get("a", 1.0))
        return WeightField(domain, lambda Z: c * np.exp(s * Z.real),
                           lambda Z: c * s * s * np.exp(s * Z.real), 0.0, dict(spec),
                           dphi=lambda Z: 0.5 * c * s * np.exp(s * Z.real))
    if kind == "disk_log":
        if domain.kind != "disk":
            raise ArgumentError("disk_log weight needs a disk domain")
        a = float(p.get("alpha", 0.5))
        return WeightField(domain, lambda Z: a * _disk_log_term(Z),
                           lambda Z: a * _disk_log_lap(Z), 4 * a, dict(spec),
                           model=("disk", a), dphi=lambda Z: a * _disk_log_d(Z))
    if kind == "zero":
        z0 = lambda Z: np.zeros(np.shape(Z))
        return WeightField(domain, z0, z0, 0.0, dict(spec), dphi=lambda Z: np.zeros(np.shape(Z), complex))
    if kind == "bumps":
        bm = float(p.get("mass", 1.0))
        a = float(p.get("radius", 0.3))
        sp = float(p.get("spacing", 1.0))
        off = float(p.get("offset", 0.5))
        amp = 3 * bm / (math.pi * a * a)
        x0, x1, y0, y1 = domain.box
        pad = 2 * sp
        cx = np.arange(math.floor((x0 - pad) / sp), math.ceil((x1 + pad) / sp) + 1) * sp + off
        cy = np.arange(math.floor((y0 - pad) / sp), math.ceil((y1 + pad) / sp) + 1) * sp + off
        C = (cx[:, None] + 1j * cy[None, :]).ravel()

        def phi(Z):
            Z = np.asarray(Z, dtype=complex)
            out = np.zeros(Z.shape)
            for c in C:
                out += _bump_potential(np.abs(Z - c), a, amp)
            return out

        if not a < sp / 2:
            raise ArgumentError("bump radius must be below half the spacing")

        def lap(Z):
            # bumps are disjoint: only the nearest centre contributes
            Z = np.asarray(Z, dtype=complex)
            c = off + sp * np.round((Z.real - off) / sp) + 1j * (off + sp * np.round((Z.imag - off) / sp))
            r2 = np.abs(Z - c) ** 2
            return np.where(r2 < a * a, amp * (1 - r2 / (a * a)) ** 2, 0.0)

        return WeightField(domain, phi, lap, 0.0, dict(spec))
    raise ArgumentError(f"unknown weight family {kind!r}")


def weight_to_json(w: WeightField) -> dict:
    return {"domain": w.domain.to_json(), **(w.spec or {})}


def load_measure_json(path) -> DoublingMeasure:
    with open(path) as fh:
        return DoublingMeasure.from_json(json.load(fh))
