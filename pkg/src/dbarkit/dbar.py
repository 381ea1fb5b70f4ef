"""Model and weighted solutions of du/dzbar = f on a grid, and their checks.

Model kernels (alpha > 0):

    plane:  u(z) = (1/pi) int exp(2 alpha conj(zeta) (z - zeta)) / (z - zeta) f dm
    disk:   u(z) = (1/pi) int (1 - |zeta|^2) / ((1 - conj(zeta) z)(z - zeta)) f dm

Both split into the Cauchy transform (FFT with exact cell integrals) plus an
entire remainder.  The weighted solver glues model solutions with a family of
multipliers h_i: u = sum_i h_i * model[f chi_i / h_i].
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ArgumentError, ConstructionError, TruncationError
from .geometry import Domain, trim_mask
from .kernels import cauchy_grid, cauchy_points, conj_moments, power_series, series_terms
from .measure import WeightField
from .multiplier import (EPS_EXC, M_SEP, MultiplierFamily, _admissible, build_family,
                         build_multiplier)

BLOCK_SIDE = 1.25
TAYLOR_SAMPLES = 64


@dataclass(eq=False)
class GridField:
    domain: Domain
    values: np.ndarray
    kind: str = "data"

    def __post_init__(self):
        if self.values.shape != (self.domain.n, self.domain.n):
            raise ArgumentError("field shape does not match the grid")

    @property
    def support(self) -> np.ndarray:
        return self.values != 0


@dataclass
class SolveReport:
    p: float
    lhs_norm: float
    rhs_norm: float
    ratio: float
    residual_rel: float
    h: float
    variant: str = "plain"
    flagged_cells: int = 0
    members_used: int = 1

    def to_json(self) -> dict:
        d = asdict(self)
        d["p"] = "inf" if math.isinf(self.p) else self.p
        return d


# ------------------------------------------------------------ model solvers

def _phi1(x):
    """(exp(x) - 1) / x for complex x, stable near 0."""
    small = np.abs(x) < 1e-3
    xs = np.where(small, 0, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        big = (np.exp(xs) - 1) / np.where(small, 1, xs)
    ser = 1 + x / 2 + x * x / 6 + x ** 3 / 24
    return np.where(small, ser, big)


def _plane_entire_sum(z, zeta, w, alpha):
    """sum_c w_c (exp(beta_c (z - zeta_c)) - 1) / (z - zeta_c), beta = 2 alpha conj(zeta)."""
    beta = 2 * alpha * np.conj(zeta)
    out = np.zeros(z.shape, dtype=complex)
    for s in range(0, zeta.size, 4096):
        b = beta[s:s + 4096]
        x = b[None, :] * (z[:, None] - zeta[None, s:s + 4096])
        out += (_phi1(x) * b[None, :]) @ w[s:s + 4096]
    return out


def _source_cells(domain: Domain, g: np.ndarray):
    idx = np.nonzero(g)
    Z = domain.grid()
    return Z[idx], g[idx] * domain.h * domain.hy


def plane_entire_part(domain: Domain, g: np.ndarray, alpha: float,
                      samples: int = TAYLOR_SAMPLES) -> np.ndarray:
    """Entire remainder of the plane model kernel applied to cell data g, on the grid.

    The remainder is entire in z, so on each block of grid points it is
    recovered from samples on an enclosing circle through its Taylor series.
    """
    zeta, w = _source_cells(domain, g)
    n = domain.n
    out = np.zeros((n, n), dtype=complex)
    if zeta.size == 0:
        return out
    x0, x1, y0, y1 = domain.box
    nbx = max(1, int(math.ceil((x1 - x0) / BLOCK_SIDE)))
    nby = max(1, int(math.ceil((y1 - y0) / BLOCK_SIDE)))
    ex = np.linspace(0, n, nbx + 1).astype(int)
    ey = np.linspace(0, n, nby + 1).astype(int)
    xs, ys = domain.xs, domain.ys
    ang = np.exp(2j * math.pi * np.arange(samples) / samples)
    for i in range(nbx):
        for j in range(nby):
            sx, sy = slice(ex[i], ex[i + 1]), slice(ey[j], ey[j + 1])
            bx, by = xs[sx], ys[sy]
            if bx.size == 0 or by.size == 0:
                continue
            c = 0.5 * (bx[0] + bx[-1]) + 0.5j * (by[0] + by[-1])
            rb = 0.5 * math.hypot(bx[-1] - bx[0], by[-1] - by[0]) + 1e-12
            rs = 1.3 * rb + 1e-9
            vals = _plane_entire_sum(c + rs * ang, zeta, w, alpha)
            coef = np.fft.fft(vals) / samples
            tail = np.abs(coef[samples // 2 - 4:samples // 2 + 4]).max()
            if tail > 1e-11 * max(np.abs(coef).max(), 1e-300):
                # too few samples for this block: fall back to direct summation
                Zb = (bx[:, None] + 1j * by[None, :]).ravel()
                out[sx, sy] = _plane_entire_sum(Zb, zeta, w, alpha).reshape(bx.size, by.size)
                continue
            t = ((bx[:, None] + 1j * by[None, :]) - c) / rs
            out[sx, sy] = power_series(t, coef[:samples // 2])
    return out


def _cell_data(f: GridField) -> np.ndarray:
    return np.asarray(f.values, dtype=complex)


def solve_model_plane(f: GridField, alpha: float) -> GridField:
    if alpha <= 0:
        raise ArgumentError("alpha must be positive")
    D = f.domain
    if D.kind != "plane":
        raise ArgumentError("plane model needs a plane domain")
    g = _cell_data(f)
    u = (cauchy_grid(D, g) + plane_entire_part(D, g, alpha)) / math.pi
    return GridField(D, u, "solution")


def _disk_moments(D: Domain, g: np.ndarray):
    zeta, w = _source_cells(D, g)
    r_src = float(np.abs(zeta).max()) if zeta.size else 0.0
    nterms = series_terms(D.r_max, max(r_src, 1e-3))
    return conj_moments(zeta, w, nterms + 1)


def solve_model_disk(f: GridField, alpha: float = 0.5) -> GridField:
    """Disk model solution; alpha only enters the accompanying norm estimate."""
    if not 0 < alpha < 1:
        raise ArgumentError("disk model needs 0 < alpha < 1")
    D = f.domain
    if D.kind != "disk":
        raise ArgumentError("disk model needs a disk domain")
    g = _cell_data(f)
    Z = D.grid()
    mom = _disk_moments(D, g)
    zc = np.where(np.abs(Z) <= D.r_max, Z, 0)
    u = (cauchy_grid(D, g) + power_series(zc, mom[1:])) / math.pi
    return GridField(D, np.where(D.mask(), u, 0), "solution")


def model_disk_at(f: GridField, points) -> np.ndarray:
    """Disk model solution at arbitrary points."""
    D = f.domain
    g = _cell_data(f)
    z = np.atleast_1d(np.asarray(points, dtype=complex))
    mom = _disk_moments(D, g)
    return (cauchy_points(D, g, z) + power_series(z, mom[1:])) / math.pi


def model_kernel(z, zeta, model: tuple[str, float]):
    kind, alpha = model
    z = np.asarray(z, dtype=complex)
    zeta = np.asarray(zeta, dtype=complex)
    if kind == "plane":
        return np.exp(2 * alpha * np.conj(zeta) * (z - zeta)) / (math.pi * (z - zeta))
    return (1 - np.abs(zeta) ** 2) / (math.pi * (1 - np.conj(zeta) * z) * (z - zeta))


def solve_model(f: GridField, model: tuple[str, float]) -> GridField:
    kind, alpha = model
    return solve_model_plane(f, alpha) if kind == "plane" else solve_model_disk(f, alpha)


# ------------------------------------------------------------ residuals and norms

def _dbar(D: Domain, u: np.ndarray) -> np.ndarray:
    out = np.full(u.shape, np.nan, dtype=complex)
    dx = (u[2:, 1:-1] - u[:-2, 1:-1]) / (2 * D.h)
    dy = (u[1:-1, 2:] - u[1:-1, :-2]) / (2 * D.hy)
    out[1:-1, 1:-1] = 0.5 * (dx + 1j * dy)
    return out


def residual_region(f: GridField, collar: float | None = None, pad: int = 4) -> np.ndarray:
    """Support neighbourhood of f inside the trimmed truncation, minus jump bands."""
    D = f.domain
    supp = f.support
    near = ndimage.binary_dilation(supp, iterations=pad)
    collar = 3 * D.h if collar is None else collar
    region = near & trim_mask(D, D.mask(), collar)
    # exclude a band where f jumps at the edge of its support
    a = np.abs(f.values)
    edge = supp & ~ndimage.binary_erosion(supp, iterations=1)
    if edge.any() and a[edge].max() > 1e-3 * max(a.max(), 1e-300):
        band = ndimage.binary_dilation(edge, iterations=2)
        region &= ~band
    inner = np.zeros_like(region)
    inner[1:-1, 1:-1] = True
    return region & inner


def dbar_residual(u: GridField, f: GridField, region: np.ndarray | None = None,
                  phi=None) -> float:
    """Relative L2 norm of (central-difference dbar u) - f over the region.

    With ``phi`` (WeightField or grid array) both terms carry the factor e^{-phi}.
    """
    if u.domain != f.domain:
        raise ArgumentError("u and f live on different grids")
    D = u.domain
    region = residual_region(f) if region is None else region
    interior = np.zeros_like(region)
    interior[1:-1, 1:-1] = True
    region = region & interior
    r = _dbar(D, u.values) - f.values
    fv = f.values
    if phi is not None:
        w = np.exp(-(phi.phi_on(D) if hasattr(phi, "phi_on") else np.asarray(phi)))
        r, fv = r * w, fv * w
    num = np.sqrt(np.sum(np.abs(r[region]) ** 2))
    den = np.sqrt(np.sum(np.abs(fv[region]) ** 2))
    if den == 0:
        return float(num)
    return float(num / den)


def weighted_norm(fld: GridField, phi, p: float, variant: str = "plain",
                  region: np.ndarray | None = None) -> float:
    """||v e^{-phi}||_p over the region (whole truncation by default).

    ``phi`` is a WeightField or an array of weight values on the grid.  The
    disk_boundary_weighted variant divides the area element by 1 - |z|^2 and,
    for data fields, multiplies the field by 1 - |z|^2 (1 - |z| for p = inf).
    """
    if p < 1:
        raise ArgumentError("p must be at least 1")
    D = fld.domain
    ph = phi.phi_on(D) if isinstance(phi, WeightField) else np.asarray(phi)
    region = D.mask() if region is None else region
    v = np.abs(fld.values[region]) * np.exp(-ph[region])
    dA = np.full(v.shape, D.h * D.hy)
    if variant == "disk_boundary_weighted":
        r = np.abs(D.grid()[region])
        if fld.kind == "data":
            v = v * ((1 - r) if math.isinf(p) else (1 - r * r))
        dA = dA / (1 - r * r)
    elif variant != "plain":
        raise ArgumentError(f"unknown norm variant {variant!r}")
    if math.isinf(p):
        return float(v.max())
    return float(np.sum(v ** p * dA) ** (1 / p))


# ------------------------------------------------------------ weighted solver

@dataclass(eq=False)
class WeightedSetup:
    """Everything needed to apply the combined kernel for a weight."""

    phi: WeightField
    psi: WeightField
    model: tuple[str, float]
    family: MultiplierFamily | None
    logh: list = field(default_factory=list)
    h: list = field(default_factory=list)
    exc: list = field(default_factory=list)
    region: np.ndarray | None = None

    @property
    def trivial(self) -> bool:
        return self.family is None

    def member_index(self) -> tuple[np.ndarray, int]:
        """i(zeta) = first member whose exceptional set avoids zeta, and flag count."""
        D = self.phi.domain
        if self.trivial:
            return np.zeros((D.n, D.n), dtype=int), 0
        idx = np.full((D.n, D.n), -1, dtype=int)
        for i, E in enumerate(self.exc):
            idx[(idx < 0) & ~E] = i
        flagged = int((idx < 0).sum())
        idx[idx < 0] = len(self.exc) - 1
        return idx, flagged


def _model_alpha(phi: WeightField) -> float:
    floor = phi.epsilon_floor if phi.epsilon_floor > 0 else phi.density_floor()
    if floor <= 0:
        raise ArgumentError("weight has no positive Laplacian floor; regularize it first")
    return floor / 8.0


def prepare_weighted(phi: WeightField, m: int | None = None, k: int = 1, eps_exc: float = EPS_EXC,
                     n_colors: int = 25, M_sep: float = M_SEP, reduce_model: bool = True,
                     alpha_model: float | None = None) -> WeightedSetup:
    """psi = phi - alpha (model term), its multiplier family and the h_i on the grid.

    m defaults to 2 in the plane and 1 in the disk.  In the disk, when the
    default alpha leaves too little mass for one annulus inside the truncation,
    alpha is halved (at most four times) before giving up.
    """
    D = phi.domain
    kind = D.kind
    if reduce_model and phi.model is not None and phi.model[0] == kind and (
            kind == "plane" or 0 < phi.model[1] < 1):
        a = phi.model[1]
        psi = phi.minus_model(a)
        return WeightedSetup(phi, psi, (kind, a), None, region=D.mask())
    if m is None:
        m = 2 if kind == "plane" else 1
    a = _model_alpha(phi) if alpha_model is None else alpha_model
    tries = 5 if (kind == "disk" and alpha_model is None) else 1
    for attempt in range(tries):
        psi = phi.minus_model(a)
        try:
            base = build_multiplier(psi, m, k, eps_exc)
            break
        except TruncationError:
            if attempt == tries - 1:
                raise
            a *= 0.5
    fam = build_family(psi, n_colors, M_sep, m, k, eps_exc, base=base)
    setup = WeightedSetup(phi, psi, (kind, a), fam)
    for mb in fam.members:
        setup.h.append(mb.holomorphic_grid(D))
        setup.exc.append(mb.exceptional_mask(D))
    setup.region = _admissible(base, D, None)
    return setup


def solve_weighted(f: GridField, phi: WeightField | None = None, p: float = 2.0,
                   setup: WeightedSetup | None = None, variant: str | None = None,
                   **kw) -> tuple[GridField, SolveReport]:
    """u = sum_i h_i model[f chi_i / h_i] with the weighted norm ratio for p."""
    if setup is None:
        if phi is None:
            raise ArgumentError("need a weight or a prepared setup")
        setup = prepare_weighted(phi, **kw)
    D = f.domain
    if D != setup.phi.domain:
        raise ArgumentError("data grid differs from the weight grid")
    if setup.trivial:
        u = solve_model(f, setup.model)
        flagged, used = 0, 1
    else:
        idx, flagged = setup.member_index()
        vals = np.zeros((D.n, D.n), dtype=complex)
        used = 0
        for i, h in enumerate(setup.h):
            sel = (idx == i) & f.support
            if not sel.any():
                continue
            used += 1
            with np.errstate(invalid="ignore", divide="ignore"):
                g = np.where(sel, f.values / np.where(sel, h, 1), 0)
            ui = solve_model(GridField(D, g, "data"), setup.model)
            vals += h * ui.values
        u = GridField(D, np.where(D.mask(), vals, 0), "solution")
    if variant is None:
        variant = "disk_boundary_weighted" if D.kind == "disk" else "plain"
    rep = norm_report(u, f, setup, p, variant)
    rep.flagged_cells = flagged
    rep.members_used = used
    return u, rep


def norm_report(u: GridField, f: GridField, setup: WeightedSetup, p: float, variant: str) -> SolveReport:
    region = setup.region if setup.region is not None else u.domain.mask()
    lhs = weighted_norm(u, setup.phi, p, variant, region)
    rhs = weighted_norm(f, setup.phi, p, variant, region)
    res = dbar_residual(u, f, phi=setup.phi)
    return SolveReport(p, lhs, rhs, lhs / rhs if rhs > 0 else float("inf"), res, u.domain.h, variant)


def combined_kernel(setup: WeightedSetup, z, zeta, phase_free: bool = True):
    """kappa(z, zeta): |h_i(z)/h_i(zeta)| times the model kernel, i from zeta's region.

    Returns (values, flags) where flags marks zeta lying in every exceptional set.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    zeta = np.atleast_1d(np.asarray(zeta, dtype=complex))
    mk = model_kernel(z, zeta, setup.model)
    if setup.trivial:
        return mk, np.zeros(zeta.shape, dtype=bool)
    fam = setup.family
    chosen = np.full(zeta.shape, -1)
    for i, mb in enumerate(fam.members):
        rz = mb.rho_zeros()
        inside = np.zeros(zeta.shape, dtype=bool)
        for lam, r in zip(mb.zeros, rz):
            d = np.abs(zeta - lam) if mb.kind == "plane" else np.abs(zeta - lam) / np.abs(1 - np.conj(lam) * zeta)
            inside |= d < mb.eps_exc * r
        chosen[(chosen < 0) & ~inside] = i
    flags = chosen < 0
    chosen[flags] = len(fam.members) - 1
    out = np.empty(z.shape, dtype=complex)
    for i in np.unique(chosen):
        sel = chosen == i
        mb = fam.members[i]
        la = mb.continuous_points(z[sel]) + mb.point_sum(z[sel])
        lb = mb.continuous_points(zeta[sel]) + mb.point_sum(zeta[sel])
        out[sel] = np.exp(la - lb) * mk[sel]
    return out, flags


# ------------------------------------------------------------ kernel decay

def decay_samples(setup: WeightedSetup, count: int = 200, rng=None, dmin: float = 1.0,
                  dmax: float = 4.0, clearance: float = 0.5):
    """Sample pairs (z, zeta) with |z - zeta| in [dmin, dmax] inside the admissible region,
    both points at distance >= clearance * rho from the zeros."""
    rng = np.random.default_rng(0) if rng is None else rng
    D = setup.phi.domain
    Z = D.grid()
    region = setup.region if setup.region is not None else D.mask()
    if not setup.trivial:
        # pairs are served by the first member, so clear its zeros only
        mb = setup.family.members[0]
        region = region & (mb.distance_to_zeros(Z) >= clearance * mb.rho_grid(D))
    pts = Z[region]
    if pts.size < 2:
        raise ArgumentError("no admissible sample points")
    zs, zts = [], []
    tries = 0
    while len(zs) < count and tries < 200 * count:
        tries += 1
        a, b = pts[rng.integers(pts.size, size=2)]
        if dmin <= abs(a - b) <= dmax:
            zs.append(a)
            zts.append(b)
    if len(zs) < 10:
        raise ArgumentError("too few sample pairs")
    return np.array(zs), np.array(zts)


def kernel_decay_profile(setup: WeightedSetup, samples=None, count: int = 200, rng=None) -> dict:
    """Fit log(|kappa| |z - zeta|) + phi(zeta) - phi(z) against |z - zeta|^2."""
    if setup.model[0] != "plane":
        raise ArgumentError("kernel decay is a plane statement")
    z, zeta = decay_samples(setup, count, rng) if samples is None else samples
    if len(z) < 10:
        raise ArgumentError("too few samples")
    kap, _ = combined_kernel(setup, z, zeta)
    d = np.abs(z - zeta)
    y = np.log(np.abs(kap) * d) + setup.phi.phi(zeta) - setup.phi.phi(z)
    x = d ** 2
    A = np.c_[x, np.ones_like(x)]
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ np.array([slope, icpt])
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return {
        "epsilon_fit": float(-slope), "r2": 1 - ss_res / ss_tot if ss_tot > 0 else 1.0,
        "intercept": float(icpt), "alpha_model": setup.model[1], "n": int(len(z)),
        "envelope_ratio": float(np.exp((y - pred).max() - (y - pred).min())),
    }


# ------------------------------------------------------------ random data

def random_data(D: Domain, rng, phi: WeightField | None = None, n_bumps: int = 3,
                centre_radius: float | None = None, bump_radius: float | None = None) -> GridField:
    """Smooth compactly supported data: e^{phi} times a sum of C^2 bumps."""
    Z = D.grid()
    if D.kind == "plane":
        x0, x1, y0, y1 = D.box
        scale = min(x1 - x0, y1 - y0)
        cr = 0.2 * scale if centre_radius is None else centre_radius
        br = 0.1 * scale if bump_radius is None else bump_radius
        cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
        centres = cx + 1j * cy + cr * np.sqrt(rng.random(n_bumps)) * np.exp(2j * math.pi * rng.random(n_bumps))
        dist = lambda c: np.abs(Z - c)
    else:
        cr = 0.45 if centre_radius is None else centre_radius
        br = 0.25 if bump_radius is None else bump_radius
        centres = cr * np.sqrt(rng.random(n_bumps)) * np.exp(2j * math.pi * rng.random(n_bumps))
        dist = lambda c: np.abs(Z - c) / np.abs(1 - np.conj(c) * Z)
    coef = rng.normal(size=n_bumps) + 1j * rng.normal(size=n_bumps)
    radii = br * (0.6 + 0.4 * rng.random(n_bumps))
    b = np.zeros(Z.shape, dtype=complex)
    for c, a, r in zip(coef, centres, radii):
        t = dist(a) / r
        b += c * np.where(t < 1, (1 - t * t) ** 3, 0.0)
    if phi is not None:
        ph = phi.phi_on(D)
        b = np.where(b != 0, b * np.exp(np.where(b != 0, ph, 0)), 0)
    return GridField(D, np.where(D.mask(), b, 0), "data")
