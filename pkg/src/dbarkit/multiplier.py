"""Multipliers: zero sets built from equal-mass partitions and |h| via potentials.

For a weight psi with mu = Delta psi / (2 pi) and a zero multiset Lambda,

    log|h(z)| = psi(z) - int_cov log K(z, zeta) dmu(zeta) + sum_l m_l log K(z, l)

with K(z, w) = |z - w| in the plane and |z - w| / |1 - conj(w) z| in the disk.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree
from scipy.signal import fftconvolve

from .errors import ArgumentError, ConstructionError
from .geometry import Domain, MetricRect, pseudo_hyperbolic, trim_mask
from .kernels import (cauchy_grid, cell_averages, disk_log_correction, indicator_fraction,
                      log_potential_grid, rect_fraction, log_potential_points, polar_conj_moments,
                      power_series, series_terms)
from .measure import DoublingMeasure, LineMeasure, WeightField, rho, rho_field
from .partition import Partition, build_partition, realline_partition
from .quadrature import NodeSet, chebyshev_nodes, select_tau

EPS_EXC = 0.25
M_SEP = 5.0
DISK_COLLAR = 0.5


@dataclass(eq=False)
class Multiplier:
    """Zero multiset plus the reference weight; |h| is evaluated, not stored."""

    psi: WeightField
    zeros: np.ndarray
    mult: np.ndarray
    eps_exc: float = EPS_EXC
    partition: Partition | None = None
    nodes: list = field(default_factory=list)
    m: int = 1
    k: int = 1
    coverage: Callable | None = None
    cov_radius: float | None = None
    line: LineMeasure | None = None
    line_cover: tuple[float, float] | None = None
    kappa_rects: frozenset = frozenset()
    M: int | None = None
    _shared: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not 0.0 < self.eps_exc < 1.0:
            raise ArgumentError("eps_exc must lie in (0, 1)")
        self.zeros = np.atleast_1d(np.asarray(self.zeros, dtype=complex))
        self.mult = np.broadcast_to(np.asarray(self.mult, dtype=int), self.zeros.shape).copy()

    @classmethod
    def from_zeros(cls, psi: WeightField, zeros, mult=1, eps_exc: float = EPS_EXC,
                   coverage: Callable | None = None, cov_radius: float | None = None):
        return cls(psi, zeros, mult, eps_exc, coverage=coverage, cov_radius=cov_radius)

    @property
    def domain(self) -> Domain:
        return self.psi.domain

    @property
    def kind(self) -> str:
        return self.domain.kind

    def measure(self) -> DoublingMeasure:
        if "measure" not in self._shared:
            self._shared["measure"] = self.psi.measure()
        return self._shared["measure"]

    # ------------------------------------------------------------ potentials
    def _coverage_fn(self):
        if self.coverage is not None:
            return self.coverage
        if self.cov_radius is not None:
            r = self.cov_radius
            return lambda Z: np.abs(Z) < r
        if self.kind == "disk":
            r = self.domain.r_max
            return lambda Z: np.abs(Z) < r
        return None

    def _avg(self, D: Domain) -> np.ndarray:
        key = ("avg", D)
        if key not in self._shared:
            mu = self.measure()
            with np.errstate(invalid="ignore"):
                avg = cell_averages(D, mu.density)
            frac = None
            if self.partition is not None and self.kind == "plane" and self.coverage is not None:
                boxes = [(r.a0, r.a1, r.b0, r.b1) for r in self.partition.coverage]
                frac = rect_fraction(D, boxes)
            elif self._coverage_fn() is not None:
                frac = indicator_fraction(D, self._coverage_fn())
            if frac is not None:
                # density may be undefined on uncovered cells (outside the disk)
                avg = np.where(frac > 0, avg * frac, 0.0)
            self._shared[key] = avg
        return self._shared[key]

    def _disk_moments(self, D: Domain, nterms: int) -> np.ndarray:
        key = ("mom", D, nterms)
        if key not in self._shared:
            r_cov = self.cov_radius if self.cov_radius is not None else D.r_max
            self._shared[key] = polar_conj_moments(self.measure().density, r_cov, nterms)
        return self._shared[key]

    def _nterms(self, D: Domain) -> int:
        r_cov = self.cov_radius if self.cov_radius is not None else D.r_max
        return series_terms(D.r_max, r_cov)

    def continuous_part(self, D: Domain | None = None) -> np.ndarray:
        """psi minus the potential of the covered measure, on the grid of D."""
        D = D or self.domain
        key = ("U", D)
        if key in self._shared:
            return self._shared[key]
        Z = D.grid()
        if self.line is not None:
            P = _line_potential_grid(D, self.line, self.line_cover)
        else:
            P = log_potential_grid(D, self._avg(D))
            if self.kind == "disk":
                Zc = np.where(np.abs(Z) <= D.r_max, Z, 0)
                P = P - disk_log_correction(Zc, self._disk_moments(D, self._nterms(D)))
        U = self.psi.phi_on(D) - P
        self._shared[key] = U
        return U

    def continuous_points(self, z, D: Domain | None = None) -> np.ndarray:
        D = D or self.domain
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if self.line is not None:
            P = _line_potential_points(z, D, self.line, self.line_cover)
        else:
            P = log_potential_points(D, self._avg(D), z)
            if self.kind == "disk":
                P = P - disk_log_correction(z, self._disk_moments(D, self._nterms(D)))
        return self.psi.phi(z) - P

    def point_sum(self, Z, zeros=None, mult=None) -> np.ndarray:
        zeros = self.zeros if zeros is None else zeros
        mult = self.mult if mult is None else mult
        Z = np.asarray(Z, dtype=complex)
        out = np.zeros(Z.shape)
        with np.errstate(divide="ignore"):
            for lam, mm in zip(zeros, mult):
                if self.kind == "plane":
                    out += mm * np.log(np.abs(Z - lam))
                else:
                    out += mm * np.log(pseudo_hyperbolic(Z, lam))
        return out

    def log_abs_h_grid(self, D: Domain | None = None) -> np.ndarray:
        D = D or self.domain
        return self.continuous_part(D) + self.point_sum(D.grid())

    def rho_zeros(self) -> np.ndarray:
        key = ("rho_zeros", self.zeros.tobytes())
        if key not in self._shared:
            if self.line is not None:
                r = self.line.rho(self.zeros.real)
            else:
                r = rho(self.measure(), self.zeros)
            self._shared[key] = np.atleast_1d(r)
        return self._shared[key]

    def rho_grid(self, D: Domain) -> np.ndarray:
        key = ("rho", D)
        if key not in self._shared:
            self._shared[key] = rho_field(self.measure(), D)
        return self._shared[key]

    def exceptional_mask(self, D: Domain) -> np.ndarray:
        """Grid points in the union of balls B(lambda, eps_exc rho(lambda))."""
        Z = D.grid()
        rz = self.rho_zeros()
        out = np.zeros(Z.shape, dtype=bool)
        for lam, r in zip(self.zeros, rz):
            out |= _metric(self.kind, Z, lam) < self.eps_exc * r
        return out

    def distance_to_zeros(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=complex)
        if self.kind == "plane":
            tree = cKDTree(np.c_[self.zeros.real, self.zeros.imag])
            d, _ = tree.query(np.c_[Z.real.ravel(), Z.imag.ravel()])
            return d.reshape(Z.shape)
        out = np.full(Z.shape, np.inf)
        for lam in self.zeros:
            out = np.minimum(out, pseudo_hyperbolic(Z, lam))
        return out

    def holomorphic_grid(self, D: Domain | None = None) -> np.ndarray:
        """h on the grid: exact modulus, phase by integrating the conjugate differential."""
        D = D or self.domain
        key = ("h", D)
        if key in self._shared:
            return self._shared[key]
        Z = D.grid()
        U = self.continuous_part(D)
        dF = 2.0 * self.psi.d_phi(Z) - cauchy_grid(D, self._avg(D))
        if self.kind == "disk":
            mom = self._disk_moments(D, self._nterms(D) + 1)
            # int conj(zeta) / (1 - conj(zeta) z) dmu = sum_n z^n mom_{n+1}
            dF = dF - power_series(np.where(np.abs(Z) <= D.r_max, Z, 0), mom[1:])
        V = _integrate_imag(D, dF, Z)
        logs = np.zeros(Z.shape, dtype=complex)
        for lam, mm in zip(self.zeros, self.mult):
            if self.kind == "plane":
                logs += mm * np.log(Z - lam)
            else:
                logs += mm * np.log((Z - lam) / (1 - np.conj(lam) * Z))
        with np.errstate(invalid="ignore", over="ignore"):
            h = np.exp(U + 1j * V + logs)
        self._shared[key] = h
        return h

    # ------------------------------------------------------------ io
    def to_json(self) -> dict:
        d = {
            "kind": self.kind, "eps_exc": self.eps_exc, "m": self.m, "k": self.k, "M": self.M,
            "zeros": [[float(z.real), float(z.imag), int(mm)] for z, mm in zip(self.zeros, self.mult)],
            "weight": self.psi.spec,
        }
        if self.nodes:
            d["nodes"] = [ns.to_json(i) for i, ns in enumerate(self.nodes)]
            d["max_residual"] = max(ns.residual for ns in self.nodes)
        return d

    def grid_csv(self, D: Domain, header: str = "") -> str:
        """CSV rows x, y, log|h| - psi, d/rho."""
        L = self.log_abs_h_grid(D) - self.psi.phi_on(D)
        Z = D.grid()
        dr = self.distance_to_zeros(Z) / self.rho_grid(D)
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "value", "d_over_rho"])
        for z, v, q in zip(Z.ravel(), L.ravel(), dr.ravel()):
            w.writerow([f"{z.real:.10g}", f"{z.imag:.10g}", f"{v:.10g}", f"{q:.10g}"])
        return buf.getvalue()


def _metric(kind, Z, w):
    return np.abs(Z - w) if kind == "plane" else pseudo_hyperbolic(Z, w)


def _integrate_imag(D: Domain, dF: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Imaginary part of a primitive of dF, path: centre column, then rows."""
    n = D.n
    c = n // 2
    h, hy = D.h, D.hy
    # along the centre column: dF dz with dz = i hy
    col = dF[c, :] * (1j * hy)
    Fcol = np.zeros(n, dtype=complex)
    Fcol[c + 1:] = np.cumsum(0.5 * (col[c:-1] + col[c + 1:]))
    Fcol[:c] = -np.cumsum(0.5 * (col[1:c + 1] + col[:c])[::-1])[::-1]
    F = np.zeros((n, n), dtype=complex)
    step = 0.5 * (dF[1:, :] + dF[:-1, :]) * h
    F[c, :] = Fcol
    F[c + 1:, :] = Fcol[None, :] + np.cumsum(step[c:, :], axis=0)
    F[:c, :] = Fcol[None, :] - np.cumsum(step[:c, :][::-1], axis=0)[::-1]
    return F.imag


# ------------------------------------------------------------ line potentials

def _line_cells(D: Domain, cover):
    """Cells of width h on the lattice of grid abscissae, clipped to the cover."""
    a, b = cover
    h = D.h
    x_first = D.xs[0]
    j0 = math.floor((a - x_first) / h + 0.5)
    j1 = math.ceil((b - x_first) / h - 0.5)
    j = np.arange(j0, j1 + 1)
    c = x_first + j * h
    lo = np.maximum(c - h / 2, a)
    hi = np.minimum(c + h / 2, b)
    ok = hi > lo
    return j[ok], lo[ok], hi[ok]


def _line_prim(w):
    """-Re(w log w), continuous at w = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(w == 0, 0.0, (w * np.log(np.where(w == 0, 1, w))).real)
    return -t


def _line_cell_integrals(z, lo, hi):
    """int_lo^hi log|z - x| dx, vectorised; F(x) = -Re[(z-x) log(z-x)] - x."""
    return (_line_prim(z - hi) - hi) - (_line_prim(z - lo) - lo)


def _line_masses(line: LineMeasure, lo, hi):
    x, wgl = np.polynomial.legendre.leggauss(6)
    t = 0.5 * (lo + hi)[:, None] + 0.5 * (hi - lo)[:, None] * x[None, :]
    return 0.5 * (hi - lo) * (line.density(t) * wgl).sum(axis=1)


def _line_potential_grid(D: Domain, line: LineMeasure, cover) -> np.ndarray:
    j, lo, hi = _line_cells(D, cover)
    dens = _line_masses(line, lo, hi) / (hi - lo)
    n, h = D.n, D.h
    interior = (hi - lo) > h * (1 - 1e-12)
    # interior cells form a Toeplitz sum over offsets i - j
    ji, di = j[interior], dens[interior]
    off = np.arange(-ji.max(), n - ji.min())
    full = np.zeros(ji.max() - ji.min() + 1)
    full[ji - ji.min()] = di
    out = np.empty((n, n))
    edge = ~interior
    xs = D.xs
    for col, y in enumerate(D.ys):
        ker = _line_cell_integrals(off * h + 1j * y, -h / 2, h / 2)
        conv = fftconvolve(full, ker, mode="full")
        # grid index i pairs with offset i - j; conv[p] = sum full[q] ker[p - q]
        row = conv[np.arange(n) + (-off[0]) - ji.min()]
        if edge.any():
            Zr = xs + 1j * y
            row = row + (_line_cell_integrals(Zr[:, None], lo[None, edge], hi[None, edge])
                         * dens[None, edge]).sum(axis=1)
        out[:, col] = row
    return out


def _line_potential_points(z, D, line: LineMeasure, cover) -> np.ndarray:
    j, lo, hi = _line_cells(D, cover)
    dens = _line_masses(line, lo, hi) / (hi - lo)
    z = np.atleast_1d(z)
    return np.array([np.sum(_line_cell_integrals(zi, lo, hi) * dens) for zi in z])


# ------------------------------------------------------------ construction

def _coverage_from_partition(P: Partition):
    if P.domain.kind == "disk":
        r_cov = math.tanh(max(c.a1 for c in P.coverage))
        return None, r_cov
    return P.coverage_fn, None


def _zeros_from_nodes(nodes, kappa_rects=frozenset(), kappa_nodes=None):
    pts, mult = [], []
    for i, ns in enumerate(nodes):
        if i in kappa_rects:
            kap = kappa_nodes[i] if kappa_nodes is not None else ns.kappa
            pts.extend(kap)
            mult.extend([1] * len(kap))
        else:
            pts.extend(ns.lam)
            mult.extend([ns.m] * len(ns.lam))
    return np.array(pts, dtype=complex), np.array(mult, dtype=int)


def build_multiplier(psi: WeightField, m: int, k: int, eps_exc: float = EPS_EXC,
                     R: float | None = None, partition: Partition | None = None) -> Multiplier:
    """Partition with N = m k, match moments per rectangle, store the zeros."""
    if m < 1 or k < 1:
        raise ArgumentError("m and k must be positive")
    mu = psi.measure()
    P = partition if partition is not None else build_partition(mu, m * k, R)
    nodes = [chebyshev_nodes(mu, mr.rect, m, k) for mr in P.rectangles]
    zeros, mult = _zeros_from_nodes(nodes)
    cov, r_cov = _coverage_from_partition(P)
    mult_obj = Multiplier(psi, zeros, mult, eps_exc, P, nodes, m, k, cov, r_cov)
    mult_obj._shared["measure"] = mu
    return mult_obj


def _admissible(mult: Multiplier, D: Domain, collar: float | None) -> np.ndarray:
    Z = D.grid()
    if mult.kind == "plane":
        cov_fn = mult._coverage_fn()
        cov = np.ones(Z.shape, bool) if cov_fn is None else cov_fn(Z)
        if collar is None:
            collar = 2.0 * float(mult.rho_grid(D)[cov].max()) if cov.any() else 0.0
        return trim_mask(D, cov, collar)
    r_cov = mult.cov_radius if mult.cov_radius is not None else D.r_max
    c = DISK_COLLAR if collar is None else collar
    r_in = (r_cov - c) / (1 - c * r_cov)
    return np.abs(Z) <= r_in


def sandwich_ratio(mult: Multiplier, D: Domain | None = None, collar: float | None = None,
                   M: int | None = None) -> dict:
    """Two-sided comparison of |h| e^{-psi} with d(z, Lambda)/rho(z).

    s = log|h| - psi - log(d/rho) is bounded above and
    S_M = log|h| - psi - M log(d/rho) is bounded below on the admissible grid.
    """
    D = D or mult.domain
    Z = D.grid()
    adm = _admissible(mult, D, collar) & ~mult.exceptional_mask(D)
    if not adm.any():
        raise ArgumentError("empty admissible grid")
    L = mult.log_abs_h_grid(D) - mult.psi.phi_on(D)
    rg = mult.rho_grid(D)
    d = mult.distance_to_zeros(Z)
    q = np.log(d / rg)
    slopes = zero_slopes(mult, D, L, q)
    if M is None:
        M = int(max(1, math.ceil(max(slopes.max() if slopes.size else 1.0, 1.0) - 0.1)))
    s = (L - q)[adm]
    S = (L - M * q)[adm]
    return {
        "n_points": int(adm.sum()),
        "grid": D.n,
        "s_min": float(s.min()), "s_max": float(s.max()), "spread": float(s.max() - s.min()),
        "S_min": float(S.min()), "S_max": float(S.max()),
        "lower_stats": {"min": float(S.min()), "mean": float(S.mean())},
        "upper_stats": {"max": float(s.max()), "mean": float(s.mean())},
        "M_fit": int(M),
        "max_slope": float(slopes.max()) if slopes.size else float("nan"),
    }


def zero_slopes(mult: Multiplier, D: Domain, L=None, q=None) -> np.ndarray:
    """Local exponent of |h| e^{-psi} against d/rho near each zero."""
    Z = D.grid()
    if L is None:
        L = mult.log_abs_h_grid(D) - mult.psi.phi_on(D)
    if q is None:
        q = np.log(mult.distance_to_zeros(Z) / mult.rho_grid(D))
    rz = mult.rho_zeros()
    adm = _admissible(mult, D, None)
    out = []
    xs, ys = D.xs, D.ys
    for lam, r in zip(mult.zeros, rz):
        if mult.kind == "disk" and abs(lam) >= D.r_max:
            continue
        # small window around the zero
        span = 1.2 * r if mult.kind == "plane" else 1.2 * r * (1 - abs(lam) ** 2)
        ix = np.nonzero(np.abs(xs - lam.real) < span)[0]
        iy = np.nonzero(np.abs(ys - lam.imag) < span)[0]
        if ix.size == 0 or iy.size == 0:
            continue
        sl = (slice(ix[0], ix[-1] + 1), slice(iy[0], iy[-1] + 1))
        dz = _metric(mult.kind, Z[sl], lam)
        sel = (dz > 3 * D.h / (1 - abs(lam) ** 2 if mult.kind == "disk" else 1.0)) & (dz < 0.5 * r) & adm[sl]
        # only points whose nearest zero is lam
        sel &= np.isclose(dz, mult.distance_to_zeros(Z[sl]))
        if sel.sum() < 8:
            continue
        x = q[sl][sel]
        y = L[sl][sel]
        A = np.c_[x, np.ones_like(x)]
        out.append(np.linalg.lstsq(A, y, rcond=None)[0][0])
    return np.array(out)


# ------------------------------------------------------------ families

@dataclass(eq=False)
class MultiplierFamily:
    members: list[Multiplier]
    coloring: list[int]
    M_sep: float
    neighbors: list[list[int]]
    base: Multiplier

    def exceptional_masks(self, D: Domain) -> list[np.ndarray]:
        return [mb.exceptional_mask(D) for mb in self.members]

    def region(self, D: Domain) -> np.ndarray:
        cov = self.base._coverage_fn()
        Z = D.grid()
        return np.ones(Z.shape, bool) if cov is None else cov(Z)

    def disjointness(self, D: Domain | None = None) -> dict:
        D = D or self.base.domain
        inter = self.region(D).copy()
        for E in self.exceptional_masks(D):
            inter &= E
        return {"empty": bool(not inter.any()), "count": int(inter.sum()), "grid": D.n}

    def to_json(self) -> dict:
        return {
            "M_sep": self.M_sep, "n_colors": max(self.coloring) + 1, "coloring": self.coloring,
            "members": [{"kappa_rects": sorted(mb.kappa_rects),
                         "zeros": [[float(z.real), float(z.imag), int(mm)]
                                   for z, mm in zip(mb.zeros, mb.mult)]} for mb in self.members],
        }


def color_rectangles(rects: list[MetricRect], M_sep: float, n_colors: int) -> list[int]:
    """Greedy colouring so that same-colour M_sep-dilates are interior-disjoint."""
    order = sorted(range(len(rects)), key=lambda i: (round(rects[i].b0, 9), round(rects[i].a0, 9))
                   if rects[i].kind == "plane" else (round(rects[i].a0, 9), round(rects[i].b0, 9)))
    dil = [r.dilate(M_sep) for r in rects]
    colors = [-1] * len(rects)
    for i in order:
        used = {colors[j] for j in range(len(rects)) if colors[j] >= 0 and dil[i].overlaps(dil[j])}
        c = next((c for c in range(n_colors) if c not in used), None)
        if c is None:
            raise ConstructionError(
                f"colouring needs more than {n_colors} colours; increase n_colors")
        colors[i] = c
    return colors


def neighbor_lists(rects: list[MetricRect], factor: float = 1.5) -> list[list[int]]:
    dil = [r.dilate(factor) for r in rects]
    return [[j for j in range(len(rects)) if j != i and dil[i].overlaps(dil[j])]
            for i in range(len(rects))]


def _protected_set(col, colors, nbrs, rects, base: Multiplier, protect: str) -> set:
    prot = {i for i, c in enumerate(colors) if c == col}
    family = sorted(prot)
    if protect == "neighbors":
        for i in family:
            prot.update(nbrs[i])
        return prot
    # only neighbours whose exceptional balls reach a family rectangle
    mu_rho = {}
    for i in family:
        for j in nbrs[i]:
            ns = base.nodes[j]
            if j not in mu_rho:
                mu_rho[j] = rho(base.measure(), np.asarray(ns.lam))
            d = np.atleast_1d(rects[i].distance_to(np.asarray(ns.lam)))
            if np.any(d <= 1.5 * base.eps_exc * mu_rho[j]):
                prot.add(j)
    return prot


def build_family(psi: WeightField, n_colors: int = 25, M_sep: float = M_SEP, m: int = 1, k: int = 1,
                 eps_exc: float = EPS_EXC, base: Multiplier | None = None,
                 R: float | None = None, protect: str = "minimal",
                 include_base: bool = True) -> MultiplierFamily:
    """One multiplier per colour; protected rectangles carry the alternate nodes.

    ``protect="neighbors"`` moves the zeros of every rectangle adjacent to a
    family rectangle; ``"minimal"`` only those whose exceptional balls reach
    it.  With ``include_base`` the unmodified multiplier is member 0.
    """
    if protect not in ("minimal", "neighbors"):
        raise ArgumentError("protect must be 'minimal' or 'neighbors'")
    base = base if base is not None else build_multiplier(psi, m, k, eps_exc, R)
    P = base.partition
    rects = [mr.rect for mr in P.rectangles]
    colors = color_rectangles(rects, M_sep, n_colors)
    nbrs = neighbor_lists(rects)
    mu = base.measure()
    K = max(1.0, P.E_max)
    members = [base] if include_base else []
    for col in range(max(colors) + 1):
        prot = _protected_set(col, colors, nbrs, rects, base, protect)
        prot_rects = [rects[i] for i in sorted(prot)]
        kap = {}
        for i in sorted(prot):
            tau = select_tau(mu, base.nodes[i], K, prot_rects, eps_exc)
            kap[i] = base.nodes[i].with_kappa(tau).kappa
        zeros, mult = _zeros_from_nodes(base.nodes, frozenset(prot), kap)
        mb = Multiplier(psi, zeros, mult, eps_exc, P, base.nodes, base.m, base.k,
                        base.coverage, base.cov_radius, kappa_rects=frozenset(prot),
                        _shared=_SharedView(base._shared))
        members.append(mb)
    return MultiplierFamily(members, colors, M_sep, nbrs, base)


class _SharedView(dict):
    """Cache that reads shared grid data from the base multiplier.

    Only zero-independent entries (cell averages, moments, the continuous part,
    rho) are shared; zero-dependent entries stay local.
    """

    _SHARED = ("avg", "mom", "U", "rho", "measure")

    def __init__(self, base: dict):
        super().__init__()
        self._base = base

    def _is_shared(self, key):
        tag = key if isinstance(key, str) else key[0]
        return tag in self._SHARED

    def __contains__(self, key):
        if self._is_shared(key):
            return key in self._base
        return super().__contains__(key)

    def __getitem__(self, key):
        if self._is_shared(key):
            return self._base[key]
        return super().__getitem__(key)

    def __setitem__(self, key, value):
        if self._is_shared(key):
            self._base[key] = value
        else:
            super().__setitem__(key, value)


# ------------------------------------------------------------ real line

def _line_nodes(line: LineMeasure, a: float, b: float, m: int, k: int) -> np.ndarray:
    """k equal-weight real nodes in [a, b] matching int x^p dmu for p < m."""
    from scipy.optimize import brentq, least_squares

    total = line.mass(a, b)
    w = total / k
    cuts = [a]
    for i in range(1, k):
        cuts.append(brentq(lambda x: line.mass(a, x) - total * i / k, cuts[-1], b, xtol=1e-14))
    cuts.append(b)
    x, wg = np.polynomial.legendre.leggauss(16)

    def centroid(lo, hi):
        t = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x
        d = line.density(t) * wg
        return float(np.sum(d * t) / np.sum(d))

    init = np.array([centroid(cuts[i], cuts[i + 1]) for i in range(k)])
    if m <= 1:
        return init
    c, s = 0.5 * (a + b), 0.5 * (b - a)
    t = c + s * x
    d = line.density(t) * wg * s
    target = np.array([np.sum(d * ((t - c) / s) ** p) for p in range(1, m)])

    def res(u):
        return np.array([w * np.sum(u ** p) for p in range(1, m)]) - target

    sol = least_squares(res, (init - c) / s, bounds=(-1 + 1e-9, 1 - 1e-9), xtol=1e-15, ftol=1e-15,
                        gtol=1e-15)
    if np.max(np.abs(sol.fun)) > 1e-9 * total:
        raise ConstructionError("real-line moment matching failed")
    return c + s * sol.x


def realline_multiplier(line: LineMeasure, psi: WeightField, m: int = 1, k: int = 1,
                        eps_exc: float = EPS_EXC) -> Multiplier:
    """Zeros on the real axis from an equal-mass interval partition."""
    lp = realline_partition(line, m * k)
    zeros = []
    for a, b in lp.intervals:
        zeros.extend(_line_nodes(line, a, b, m, k))
    cover = (lp.intervals[0][0], lp.intervals[-1][1])
    mult = Multiplier(psi, np.array(zeros, dtype=complex), m, eps_exc, m=m, k=k,
                      line=line, line_cover=cover)
    return mult


def realline_sandwich(mult: Multiplier, D: Domain | None = None, y_min: float = 1.0,
                      margin: float = 2.0) -> dict:
    """Statistics of log|h| - psi for |Im z| >= y_min, away from the window ends."""
    D = D or mult.domain
    Z = D.grid()
    L = mult.log_abs_h_grid(D) - mult.psi.phi_on(D)
    a, b = mult.line_cover
    sel = (np.abs(Z.imag) >= y_min) & (Z.real > a + margin) & (Z.real < b - margin)
    v = L[sel]
    return {"min": float(v.min()), "max": float(v.max()), "spread": float(v.max() - v.min()),
            "n_points": int(sel.sum())}


def lattice_sigma_log(Z, R_big: float) -> np.ndarray:
    """log|z prod_{0<|w|<R_big} (1 - z/w)| over the Gaussian integers w."""
    Z = np.asarray(Z, dtype=complex)
    n = int(math.ceil(R_big))
    g = np.arange(-n, n + 1)
    W = (g[:, None] + 1j * g[None, :]).ravel()
    W = W[(np.abs(W) > 0) & (np.abs(W) < R_big)]
    out = np.log(np.abs(Z))
    flat = Z.ravel()
    acc = np.zeros(flat.shape)
    for chunk in np.array_split(W, max(1, W.size // 2000)):
        acc += np.log(np.abs(1 - flat[:, None] / chunk[None, :])).sum(axis=1)
    return out + acc.reshape(Z.shape)
