"""Replace a weight by an equivalent one whose Laplacian has a positive floor.

The Laplacian (as a counting measure mu = Delta phi / 2 pi) is split on tiles
Q_j into mu_1 = mu / mu(Q_j) and mu_2 = mu - mu_1.  Averaging mu_1 over disks
of radius 2R spreads its mass everywhere, and

    psi = phi + 2 pi (K[mu_1~] - K[mu_1]),   Delta K[nu] = nu,

has Laplacian 2 pi (mu_1~ + mu_2), bounded below by a positive density.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline, RegularGridInterpolator

from .errors import ArgumentError, HypothesisError
from .geometry import Domain, MetricRect, trim_mask
from .kernels import (cell_averages, conj_moments, disk_log_correction, indicator_fraction,
                      log_potential_grid, log_potential_points, power_series, series_terms)
from .measure import DoublingMeasure, WeightField, ball_mass, doubling_diagnostic, mass, sample_points
from .partition import construction_radius

TWO_PI = 2 * math.pi


# ------------------------------------------------------------ tiles

@dataclass(frozen=True)
class Tiling:
    """Grid-aligned squares (plane) or polar tiles of metric side about R (disk)."""

    domain: Domain
    R: float
    tiles: tuple[MetricRect, ...]
    na: int
    widths: tuple[float, float]
    slices: tuple[int, ...] = ()

    def index(self, Z) -> np.ndarray:
        """Tile index of each point, -1 outside the truncation."""
        Z = np.asarray(Z, dtype=complex)
        if self.domain.kind == "plane":
            x0, x1, y0, y1 = self.domain.box
            wa, wb = self.widths
            nb = len(self.tiles) // self.na
            ia = np.floor((Z.real - x0) / wa).astype(int)
            ib = np.floor((Z.imag - y0) / wb).astype(int)
            ok = (ia >= 0) & (ia < self.na) & (ib >= 0) & (ib < nb)
            return np.where(ok, np.clip(ia, 0, self.na - 1) * nb + np.clip(ib, 0, nb - 1), -1)
        r = np.abs(Z)
        ok = r < self.domain.r_max
        t = np.arctanh(np.minimum(r, self.domain.r_max))
        ia = np.clip(np.floor(t / self.widths[0]).astype(int), 0, self.na - 1)
        ns = np.asarray(self.slices)[ia]
        offs = np.concatenate([[0], np.cumsum(self.slices)])[ia]
        th = np.mod(np.angle(Z), TWO_PI)
        ib = np.minimum(np.floor(th / (TWO_PI / ns)).astype(int), ns - 1)
        return np.where(ok, offs + ib, -1)


def make_tiles(domain: Domain, R: float) -> Tiling:
    if R <= 0:
        raise ArgumentError("tile side must be positive")
    if domain.kind == "plane":
        x0, x1, y0, y1 = domain.box
        na = max(1, int((x1 - x0) // R))
        nb = max(1, int((y1 - y0) // R))
        wa, wb = (x1 - x0) / na, (y1 - y0) / nb
        tiles = tuple(MetricRect("plane", x0 + i * wa, x0 + (i + 1) * wa, y0 + j * wb, y0 + (j + 1) * wb)
                      for i in range(na) for j in range(nb))
        return Tiling(domain, R, tiles, na, (wa, wb))
    t_max = math.atanh(domain.r_max)
    na = max(1, int(t_max // R))
    w = t_max / na
    tiles, slices = [], []
    for i in range(na):
        a0, a1 = i * w, (i + 1) * w
        ns = max(1, int(TWO_PI * 0.5 * math.sinh(a0 + a1) // R))
        slices.append(ns)
        for j in range(ns):
            tiles.append(MetricRect("disk", a0, a1, j * TWO_PI / ns, (j + 1) * TWO_PI / ns))
    return Tiling(domain, R, tuple(tiles), na, (w, TWO_PI), tuple(slices))


# ------------------------------------------------------------ split and smoothing

@dataclass(eq=False)
class Split:
    tiling: Tiling
    tile_mass: np.ndarray
    mu: DoublingMeasure
    mu1: DoublingMeasure
    mu2: DoublingMeasure


def split_measure(phi: WeightField, R: float, min_mass: float = 2.0) -> Split:
    """mu_1 has unit mass on each tile, mu_2 = mu - mu_1 keeps at least half of mu."""
    mu = phi.measure()
    tiling = make_tiles(phi.domain, R)
    masses = np.array([mass(mu, t) for t in tiling.tiles])
    bad = np.nonzero(masses <= min_mass)[0]
    if bad.size:
        i = int(bad[0])
        raise HypothesisError(
            f"tile {i} {tiling.tiles[i].to_json()} has mass {masses[i]:.4g} <= {min_mass}; "
            "use a larger tile side")
    dens = mu.density
    inv = 1.0 / masses

    def d1(Z):
        idx = tiling.index(Z)
        return np.where(idx >= 0, dens(Z) * inv[np.maximum(idx, 0)], 0.0)

    def d2(Z):
        idx = tiling.index(Z)
        return np.where(idx >= 0, dens(Z) * (1 - inv[np.maximum(idx, 0)]), 0.0)

    mu1 = DoublingMeasure(phi.domain, d1, spec={"kind": "tile_normalized"})
    mu2 = DoublingMeasure(phi.domain, d2, spec={"kind": "tile_remainder"})
    return Split(tiling, masses, mu, mu1, mu2)


def default_tile_side(phi: WeightField, min_mass: float = 2.0) -> float:
    """Smallest side from a geometric ladder with every tile mass above min_mass."""
    mu = phi.measure()
    R = construction_radius(mu, min_mass)
    for _ in range(40):
        tiling = make_tiles(phi.domain, R)
        if all(mass(mu, t) > min_mass for t in tiling.tiles):
            return R
        R *= 1.1
    raise HypothesisError("no tile side gives mass above the threshold")


def _disk_kernel_grid(domain: Domain, radius: float) -> np.ndarray:
    """Cell areas of the disk D(0, radius) at all grid offsets."""
    n, h, hy = domain.n, domain.h, domain.hy
    off = Domain("plane", (-(n - 0.5) * h, (n - 0.5) * h, -(n - 0.5) * hy, (n - 0.5) * hy), n=2 * n - 1)
    frac = indicator_fraction(off, lambda Z: np.abs(Z) < radius)
    return frac * h * hy


def smooth_mu1(mu1: DoublingMeasure, R: float, domain: Domain | None = None) -> np.ndarray:
    """Grid density of mu_1 averaged over the ball of radius 2R about each point.

    Plane: the Euclidean disk average, by FFT convolution with exact cell
    weights.  Disk: the pseudo-hyperbolic ball of radius tanh(2R), normalised by
    its invariant area, so constant invariant densities are preserved.
    """
    from scipy.signal import fftconvolve

    D = domain or mu1.domain
    if D.kind == "plane":
        avg = cell_averages(D, mu1.density, ss=8)
        ker = _disk_kernel_grid(D, 2 * R)
        n = D.n
        out = fftconvolve(avg, ker, mode="full")[n - 1:2 * n - 1, n - 1:2 * n - 1]
        return np.maximum(out, 0.0) / (math.pi * (2 * R) ** 2)
    r = math.tanh(2 * R)
    Z = D.grid()
    inside = np.abs(Z) < D.r_max
    out = np.zeros(Z.shape)
    zi = Z[inside]
    c = zi * (1 - r * r) / (1 - r * r * np.abs(zi) ** 2)
    s = r * (1 - np.abs(zi) ** 2) / (1 - r * r * np.abs(zi) ** 2)
    vals = np.empty(zi.shape)
    for k in range(0, zi.size, 256):
        vals[k:k + 256] = ball_mass(mu1, c[k:k + 256], s[k:k + 256], check=False)
    inv_area = math.pi * r * r / (1 - r * r)
    out[inside] = vals / inv_area / (1 - np.abs(zi) ** 2) ** 2
    return out


# ------------------------------------------------------------ Poisson potentials

def plane_kernel(z, zeta):
    """k(z, zeta) with the Taylor counterterm for |zeta| >= 1."""
    z = np.asarray(z, dtype=complex)
    zeta = np.asarray(zeta, dtype=complex)
    base = np.log(np.abs(z - zeta)) / TWO_PI
    w = z / zeta
    ct = np.log(np.abs(zeta)) - (w + 0.5 * w * w).real
    return base - np.where(np.abs(zeta) >= 1, ct, 0.0) / TWO_PI


def disk_kernel(z, zeta):
    z = np.asarray(z, dtype=complex)
    zeta = np.asarray(zeta, dtype=complex)
    lg = np.log(np.abs((z - zeta) / (1 - np.conj(zeta) * z)) ** 2)
    q = 1.0 / (1 - np.conj(z) * zeta)
    return (lg + (1 - np.abs(zeta) ** 2) * (2 * q.real - 1)) / (4 * math.pi)


def disk_kernel_bound_ratio(z, zeta) -> np.ndarray:
    """|k| divided by ((1-|zeta|^2)/|1-conj(zeta) z|)^2 (1 + log|(1-conj(zeta) z)/(z-zeta)|)."""
    z = np.asarray(z, dtype=complex)
    zeta = np.asarray(zeta, dtype=complex)
    a = np.abs(1 - np.conj(zeta) * z)
    b = ((1 - np.abs(zeta) ** 2) / a) ** 2 * (1 + np.log(a / np.abs(z - zeta)))
    return np.abs(disk_kernel(z, zeta)) / b


def _cell_avg(D: Domain, nu) -> np.ndarray:
    if isinstance(nu, np.ndarray):
        return nu
    avg = cell_averages(D, nu.density, ss=8)
    if D.kind == "disk":
        avg = np.nan_to_num(avg) * indicator_fraction(D, lambda Z: np.abs(Z) < D.r_max)
    return avg


def poisson_potential(nu, domain: Domain | None = None, points=None) -> np.ndarray:
    """K[nu] with Delta K[nu] = nu, on the grid or at given points.

    ``nu`` is a DoublingMeasure or an array of cell averages on ``domain``.
    """
    D = domain or nu.domain
    avg = _cell_avg(D, nu)
    Z = D.grid()
    cell = D.h * D.hy
    if points is None:
        P = log_potential_grid(D, avg)
        zs = Z
    else:
        zs = np.atleast_1d(np.asarray(points, dtype=complex))
        P = log_potential_points(D, avg, zs)
    if D.kind == "plane":
        outside = 1.0 - indicator_fraction(D, lambda W: np.abs(W) < 1.0)
        w = avg * outside * cell
        zeta = np.where(w != 0, Z, 1.0)
        A0 = np.sum(w * np.log(np.abs(zeta)))
        A1 = np.sum(w / zeta)
        A2 = np.sum(w / zeta ** 2)
        ct = A0 - (zs * A1).real - 0.5 * (zs * zs * A2).real
        return (P - ct) / TWO_PI
    w = avg * cell
    nterms = series_terms(D.r_max, D.r_max)
    mom = conj_moments(Z, w, nterms)
    zc = np.where(np.abs(zs) <= D.r_max, zs, 0)
    P = P - disk_log_correction(zc, mom)
    c = conj_moments(Z, w * (1 - np.abs(Z) ** 2), nterms)
    corr = c[0].real + 2 * (power_series(zc, c) - c[0]).real
    return P / TWO_PI + corr / (4 * math.pi)


def discrete_laplacian(D: Domain, U: np.ndarray) -> np.ndarray:
    """Five-point Laplacian on interior grid points (edges set to nan)."""
    L = np.full(U.shape, np.nan)
    L[1:-1, 1:-1] = ((U[2:, 1:-1] - 2 * U[1:-1, 1:-1] + U[:-2, 1:-1]) / D.h ** 2
                     + (U[1:-1, 2:] - 2 * U[1:-1, 1:-1] + U[1:-1, :-2]) / D.hy ** 2)
    return L


# ------------------------------------------------------------ regularized weight

@dataclass(eq=False)
class RegularizedWeight:
    psi: WeightField
    phi: WeightField
    sup_diff: float
    eps_floor: float
    tiling: Tiling
    tile_mass: np.ndarray
    sup_diff_trimmed: float = float("nan")
    mu1_smooth_range: tuple[float, float] = (0.0, 0.0)
    doubling: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "sup_diff": self.sup_diff, "sup_diff_trimmed": self.sup_diff_trimmed,
            "eps_floor": self.eps_floor, "tiles": len(self.tiling.tiles), "R": self.tiling.R,
            "tile_mass_min": float(self.tile_mass.min()), "tile_mass_max": float(self.tile_mass.max()),
            "mu1_smooth_min": self.mu1_smooth_range[0], "mu1_smooth_max": self.mu1_smooth_range[1],
            "doubling": self.doubling,
        }

    def report_csv(self, header: str = "") -> str:
        D = self.psi.domain
        Z = D.grid()
        ph = self.phi.phi_on(D)
        ps = self.psi.phi_on(D)
        lap = self.psi.laplacian_on(D)
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "phi", "psi", "lap_psi", "abs_diff"])
        m = D.mask()
        for z, a, b, c, ok in zip(Z.ravel(), ph.ravel(), ps.ravel(), lap.ravel(), m.ravel()):
            if ok:
                w.writerow([f"{z.real:.10g}", f"{z.imag:.10g}", f"{a:.10g}", f"{b:.10g}",
                            f"{c:.10g}", f"{abs(a - b):.10g}"])
        return buf.getvalue()


def regularize_weight(phi: WeightField, R: float | None = None, diagnose: bool = True) -> RegularizedWeight:
    """psi = phi + 2 pi (K[mu_1~] - K[mu_1]) on the grid of phi's domain."""
    D = phi.domain
    R = default_tile_side(phi) if R is None else R
    sp = split_measure(phi, R)
    mask = D.mask()
    mu_avg = cell_averages(D, sp.mu.density, ss=8)
    mu1_avg = cell_averages(D, sp.mu1.density, ss=8)
    if D.kind == "disk":
        frac = indicator_fraction(D, lambda Z: np.abs(Z) < D.r_max)
        mu_avg = np.nan_to_num(mu_avg) * frac
        mu1_avg = np.nan_to_num(mu1_avg) * frac
    mu1s = smooth_mu1(sp.mu1, R, D)
    diff = TWO_PI * (poisson_potential(mu1s, D) - poisson_potential(mu1_avg, D))
    diff = np.where(mask, diff, 0.0)
    lap = TWO_PI * np.where(mask, mu_avg - mu1_avg + mu1s, 0.0)
    phi_grid = np.where(mask, phi.phi_on(D), 0.0)
    psi_grid = phi_grid + diff

    spline = RectBivariateSpline(D.xs, D.ys, diff, kx=3, ky=3)
    lap_interp = RegularGridInterpolator((D.xs, D.ys), lap, bounds_error=False, fill_value=None)
    base_phi, base_dphi = phi.phi, phi.d_phi

    def psi_fn(Z):
        Z = np.asarray(Z, dtype=complex)
        return base_phi(Z) + spline.ev(Z.real, Z.imag)

    def lap_fn(Z):
        Z = np.asarray(Z, dtype=complex)
        pts = np.stack([Z.real.ravel(), Z.imag.ravel()], axis=-1)
        return lap_interp(pts).reshape(Z.shape)

    def dpsi(Z):
        Z = np.asarray(Z, dtype=complex)
        gx = spline.ev(Z.real, Z.imag, dx=1)
        gy = spline.ev(Z.real, Z.imag, dy=1)
        return base_dphi(Z) + 0.5 * (gx - 1j * gy)

    floor = float(lap[mask].min()) if D.kind == "plane" else float(
        (lap * (1 - np.abs(D.grid()) ** 2) ** 2)[mask].min())
    psi = WeightField(D, psi_fn, lap_fn, floor, {"kind": "regularized", "R": R, "base": phi.spec},
                      dphi=dpsi, grid_phi=psi_grid, grid_lap=lap)
    ad = np.abs(diff)[mask]
    trimmed = trim_mask(D, mask, R)
    rw = RegularizedWeight(psi, phi, float(ad.max()), floor, sp.tiling, sp.tile_mass,
                           float(np.abs(diff)[trimmed].max()) if trimmed.any() else float("nan"),
                           (float(mu1s[mask].min()), float(mu1s[mask].max())))
    if diagnose:
        mu = psi.measure()
        z = sample_points(D, 16, np.random.default_rng(0), margin=0.3)
        radii = (0.25, 0.5) if D.kind == "plane" else (0.1, 0.2)
        rw.doubling = doubling_diagnostic(mu, z, radii)
    return rw
