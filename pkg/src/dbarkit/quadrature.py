"""Equal-weight nodes matching the holomorphic moments of a measure on a cell.

Each rectangle of mass N = m k gets k nodes of weight mass/k whose power sums
reproduce the integrals of z^p for p < m.  The rotated set
kappa_{j,l} = lambda_j + tau e^{2 pi i l / m} has the same power sums for p < m.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import ArgumentError, ConstructionError
from .geometry import MetricRect
from .measure import DoublingMeasure, mass, rect_nodes, rho, sub_mass

TOL_MOM = 1e-9


@dataclass(frozen=True, eq=False)
class NodeSet:
    lam: np.ndarray             # k distinct nodes
    m: int
    k: int
    rect: MetricRect
    mass: float
    kappa: np.ndarray | None = None   # k*m alternate nodes, multiplicity 1
    tau: complex | None = None
    residual: float = 0.0             # max scaled moment residual

    @property
    def weight(self) -> float:
        return self.mass / self.k

    def with_kappa(self, tau: complex) -> "NodeSet":
        kap = alternate_nodes(self.lam, self.m, tau)
        return NodeSet(self.lam, self.m, self.k, self.rect, self.mass, kap, tau, self.residual)

    def to_json(self, rect_id: int | None = None) -> dict:
        d = {
            "rect": self.rect.to_json(), "m": self.m, "k": self.k, "mass": self.mass,
            "lambda": [[float(z.real), float(z.imag)] for z in self.lam],
            "residual": self.residual,
        }
        if rect_id is not None:
            d["rect_id"] = rect_id
        if self.kappa is not None:
            d["kappa"] = [[float(z.real), float(z.imag)] for z in self.kappa]
            d["tau"] = [float(np.real(self.tau)), float(np.imag(self.tau))]
        return d

    @classmethod
    def from_json(cls, d: dict) -> "NodeSet":
        lam = np.array([complex(*p) for p in d["lambda"]])
        kap = np.array([complex(*p) for p in d["kappa"]]) if "kappa" in d else None
        tau = complex(*d["tau"]) if "tau" in d else None
        return cls(lam, d["m"], d["k"], MetricRect.from_json(d["rect"]), d["mass"], kap, tau,
                   d.get("residual", 0.0))


def rect_moments(mu: DoublingMeasure, rect: MetricRect, m: int, center=0.0, scale=1.0):
    """Integrals of ((z - center)/scale)^p dmu over rect, p = 0..m-1."""
    Z, W = rect_nodes(rect, mu.panel)
    U = (Z - center) / scale
    wd = W * mu.density(Z)
    out = np.empty(m, dtype=complex)
    acc = wd.astype(complex)
    for p in range(m):
        out[p] = acc.sum()
        acc = acc * U
    return out


def moment_residual(nodes: NodeSet, mu: DoublingMeasure, rect: MetricRect | None = None):
    """Component p: weight * sum_j lambda_j^p - int_R z^p dmu."""
    rect = nodes.rect if rect is None else rect
    target = rect_moments(mu, rect, nodes.m)
    p = np.arange(nodes.m)
    sums = (nodes.lam[:, None] ** p[None, :]).sum(axis=0)
    return nodes.weight * sums - target


def scaled_residual(nodes: NodeSet, mu: DoublingMeasure) -> float:
    """max_p |residual_p| / (mass * diam^p)."""
    res = moment_residual(nodes, mu)
    d = nodes.rect.euclid_diameter
    scale = nodes.mass * d ** np.arange(nodes.m)
    return float(np.max(np.abs(res) / scale))


def alternate_nodes(lam, m: int, tau) -> np.ndarray:
    """kappa_{j,l} = lambda_j + tau e^{2 pi i l/m}, flattened j-major."""
    if m < 1:
        raise ArgumentError("m must be at least 1")
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    roots = np.exp(2j * math.pi * np.arange(m) / m)
    return (lam[:, None] + tau * roots[None, :]).ravel()


def _equal_mass_cuts(mu, rect: MetricRect, axis: int, fractions) -> list[float]:
    lo, hi = rect.interval(axis)
    total = mass(mu, rect)
    cuts = [lo]
    for q in np.cumsum(fractions)[:-1]:
        f = lambda x: sub_mass(mu, rect, axis, lo, x) - total * q
        cuts.append(brentq(f, cuts[-1], hi, xtol=1e-14))
    cuts.append(hi)
    return cuts


def _slice_centroids(mu, rect: MetricRect, k: int, axis: int) -> np.ndarray:
    """Centroids (rect coordinates) of k equal-mass cells.

    The rectangle is cut along ``axis`` into columns, and each column across
    into cells, so that the cells are roughly square.
    """
    s = rect.sides()
    aspect = s[axis] / s[1 - axis]
    ncol = int(min(k, max(1, round(math.sqrt(k * aspect)))))
    counts = [k // ncol + (1 if i < k % ncol else 0) for i in range(ncol)]
    cuts = _equal_mass_cuts(mu, rect, axis, np.array(counts) / k)
    out = []
    for i, cnt in enumerate(counts):
        col = rect.with_interval(axis, cuts[i], cuts[i + 1])
        inner = _equal_mass_cuts(mu, col, 1 - axis, np.full(cnt, 1.0 / cnt))
        for j in range(cnt):
            cell = col.with_interval(1 - axis, inner[j], inner[j + 1])
            mom = rect_moments(mu, cell, 2)
            out.append(_to_coords(rect, mom[1] / mom[0]))
    return np.array(out)


def _to_coords(rect: MetricRect, z: complex):
    if rect.kind == "plane":
        a, b = z.real, z.imag
    else:
        a = math.atanh(min(abs(z), 1 - 1e-15))
        b = math.atan2(z.imag, z.real)
        b = (b - rect.b0) % (2 * math.pi) + rect.b0
        if b > rect.b1:  # closer end of the angular interval
            b = rect.b1 if (b - rect.b1) < (rect.b0 + 2 * math.pi - b) else rect.b0
    return a, b


def _points_and_jac(rect: MetricRect, A, B):
    if rect.kind == "plane":
        Z = A + 1j * B
        return Z, np.ones_like(Z), 1j * np.ones_like(Z)
    e = np.exp(1j * B)
    r = np.tanh(A)
    return r * e, (1 - r * r) * e, 1j * r * e


class _Problem:
    def __init__(self, mu, rect, m, k):
        self.rect, self.m, self.k = rect, m, k
        self.mass = mass(mu, rect)
        self.w = self.mass / k
        self.c = rect.center
        self.s = max(rect.euclid_diameter / 2, 1e-300)
        self.target = rect_moments(mu, rect, m, self.c, self.s)
        self.lo = np.array([rect.a0, rect.b0])
        self.hi = np.array([rect.a1, rect.b1])
        self.margin = 1e-9 * (self.hi - self.lo)
        self.pscale = self.mass * 2.0 ** np.arange(m)

    def residual(self, x):
        A, B = x[:self.k], x[self.k:]
        Z, _, _ = _points_and_jac(self.rect, A, B)
        U = (Z - self.c) / self.s
        p = np.arange(1, self.m)
        r = self.w * (U[:, None] ** p[None, :]).sum(axis=0) - self.target[1:]
        r = r / self.pscale[1:]
        return np.concatenate([r.real, r.imag])

    def jacobian(self, x):
        A, B = x[:self.k], x[self.k:]
        Z, dA, dB = _points_and_jac(self.rect, A, B)
        U = (Z - self.c) / self.s
        p = np.arange(1, self.m)
        base = self.w * p[:, None] * U[None, :] ** (p[:, None] - 1) / self.s
        base = base / self.pscale[1:, None]
        JA = base * dA[None, :]
        JB = base * dB[None, :]
        J = np.hstack([JA, JB])
        return np.vstack([J.real, J.imag])

    def inside(self, x):
        a, b = x[:self.k], x[self.k:]
        return (np.all(a > self.lo[0] + self.margin[0]) and np.all(a < self.hi[0] - self.margin[0])
                and np.all(b > self.lo[1] + self.margin[1]) and np.all(b < self.hi[1] - self.margin[1]))

    def clip(self, x):
        a = np.clip(x[:self.k], self.lo[0] + self.margin[0] * 2, self.hi[0] - self.margin[0] * 2)
        b = np.clip(x[self.k:], self.lo[1] + self.margin[1] * 2, self.hi[1] - self.margin[1] * 2)
        return np.concatenate([a, b])


def _gauss_newton(prob: _Problem, x, tol, iters=200):
    r = prob.residual(x)
    nr = np.max(np.abs(r)) if r.size else 0.0
    for _ in range(iters):
        if nr <= tol:
            break
        J = prob.jacobian(x)
        dx = np.linalg.lstsq(J, -r, rcond=None)[0]
        t = 1.0
        while t > 1e-10:
            xn = x + t * dx
            if prob.inside(xn):
                rn = prob.residual(xn)
                nrn = np.max(np.abs(rn))
                if nrn < nr:
                    x, r, nr = xn, rn, nrn
                    break
            t *= 0.5
        else:
            break
    return x, nr


def chebyshev_nodes(mu: DoublingMeasure, rect: MetricRect, m: int, k: int,
                    tol: float = TOL_MOM, seed: int = 0, retries: int = 8) -> NodeSet:
    """k equal-weight nodes in rect matching int_R z^p dmu for p < m."""
    if m < 1 or k < 1:
        raise ArgumentError("m and k must be positive")
    prob = _Problem(mu, rect, m, k)
    rng = np.random.default_rng(seed)
    axes = [rect.longest_axis(), 1 - rect.longest_axis()]
    best = (None, np.inf)
    for attempt in range(retries):
        axis = axes[attempt % 2]
        pts = _slice_centroids(mu, rect, k, axis)
        x = np.concatenate([pts[:, 0], pts[:, 1]])
        if attempt >= 2:
            span = np.concatenate([np.full(k, prob.hi[0] - prob.lo[0]), np.full(k, prob.hi[1] - prob.lo[1])])
            x = x + 0.15 * span * rng.standard_normal(2 * k)
        x = prob.clip(x)
        if m == 1:
            nr = 0.0
        else:
            x, nr = _gauss_newton(prob, x, 1e-3 * tol)
        lam, _, _ = _points_and_jac(rect, x[:k], x[k:])
        distinct = k == 1 or np.min(np.abs(lam[:, None] - lam[None, :]) + np.eye(k) * 1e300) > 1e-8 * prob.s
        if nr < best[1] and distinct:
            best = (lam, nr)
        if nr <= tol and distinct:
            break
    lam, nr = best
    if lam is None or nr > tol:
        raise ConstructionError(f"moment matching failed, scaled residual {nr:.3e}")
    ns = NodeSet(np.asarray(lam), m, k, rect, prob.mass)
    return NodeSet(ns.lam, m, k, rect, prob.mass, residual=scaled_residual(ns, mu))


def select_tau(mu: DoublingMeasure, nodes: NodeSet, K: float, protected=(), eps_exc: float = 0.25,
               C: float = 2.0, n_angles: int = 16) -> complex:
    """Smallest admissible tau = j diam e^{i theta} for the alternate set.

    kappa must avoid the C-dilate of the rectangle, stay inside its 4CK-dilate
    and keep a distance eps_exc * rho(kappa) from every protected rectangle.
    """
    rect = nodes.rect
    diam = rect.euclid_diameter
    inner = rect.dilate(C)
    outer = rect.dilate(4 * C * K)
    dom = mu.domain
    jmax = max(3, int(math.ceil(4 * C * K)) + 1)
    for j in np.arange(2, 4 * jmax + 1) / 2.0:
        for q in range(n_angles):
            tau = j * diam * np.exp(2j * math.pi * (q + 0.5) / n_angles)
            kap = alternate_nodes(nodes.lam, nodes.m, tau)
            if dom.kind == "disk" and np.any(np.abs(kap) >= dom.r_max):
                continue
            if np.any(inner.contains(kap, closed=True)) or not np.all(outer.contains(kap)):
                continue
            if protected:
                rk = rho(mu, kap)
                ok = all(np.all(p.distance_to(kap) >= eps_exc * rk) for p in protected)
                if not ok:
                    continue
            return complex(tau)
    raise ConstructionError("no admissible rotation radius for the alternate nodes")
