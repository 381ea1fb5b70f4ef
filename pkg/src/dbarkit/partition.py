"""Equal-mass rectangle partitions.

Strips (plane) or annuli (disk) of width comparable to the construction
radius are sliced into pieces of integer multiples of N, oversized pieces are
bisected through a central band of mass N, and the survivors are cut into
mass-N slices along their longest side.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import ArgumentError, ConstructionError, DomainError, TruncationError
from .geometry import TWO_PI, Domain, MetricRect, square_at
from .measure import DoublingMeasure, LineMeasure, doubling_diagnostic, mass, rho, sub_mass

MASS_TOL = 1e-9  # slack before rounding a mass up to the next multiple of N
XTOL = 1e-13
MAX_DEPTH = 64


@dataclass(frozen=True)
class MassRectangle:
    rect: MetricRect
    mass: float
    eccentricity: float
    generation: int = 0

    def to_json(self) -> dict:
        return {**self.rect.to_json(), "mass": self.mass,
                "eccentricity": self.eccentricity, "generation": self.generation}


@dataclass
class Partition:
    rectangles: list[MassRectangle]
    N: float
    measure: DoublingMeasure
    R: float
    coverage: list[MetricRect]
    C_doubling: int = 0
    E_bisect: float = 0.0
    E_max: float = 0.0

    @property
    def domain(self) -> Domain:
        return self.measure.domain

    def __len__(self):
        return len(self.rectangles)

    def coverage_fn(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=complex)
        out = np.zeros(Z.shape, dtype=bool)
        for r in self.coverage:
            out |= r.contains(Z)
        return out

    def coverage_mask(self, domain: Domain | None = None) -> np.ndarray:
        return self.coverage_fn((domain or self.domain).grid())

    def locate(self, Z) -> np.ndarray:
        """Index of the rectangle containing each point, -1 outside coverage."""
        Z = np.asarray(Z, dtype=complex)
        out = np.full(Z.shape, -1, dtype=int)
        for i, mr in enumerate(self.rectangles):
            out[(out < 0) & mr.rect.contains(Z)] = i
        return out

    def claim2_stats(self, K_values=(2, 3)) -> dict:
        centers = np.array([mr.rect.center for mr in self.rectangles])
        diam = np.array([mr.rect.diameter for mr in self.rectangles])
        rc = rho(self.measure, centers)
        if self.domain.kind == "disk":
            rc = np.arctanh(rc)  # compare with the artanh-scale diameters
        ratio = diam / rc
        out = {"diam_over_rho_min": float(ratio.min()), "diam_over_rho_max": float(ratio.max())}
        for K in K_values:
            dil = [mr.rect.dilate(K) for mr in self.rectangles]
            worst = 1.0
            for i in range(len(dil)):
                for j in range(i + 1, len(dil)):
                    if dil[i].overlaps(dil[j]):
                        worst = max(worst, diam[i] / diam[j], diam[j] / diam[i])
            out[f"C_{K}"] = float(worst)
        return out

    def to_json(self) -> dict:
        return {
            "N": self.N, "R": self.R, "C_doubling": self.C_doubling,
            "E_bisect": self.E_bisect, "E_max": self.E_max,
            "domain": self.domain.to_json(),
            "coverage": [r.to_json() for r in self.coverage],
            "rectangles": [mr.to_json() for mr in self.rectangles],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True)


def _mr(rect, mu, gen=0) -> MassRectangle:
    return MassRectangle(rect, mass(mu, rect), rect.eccentricity, gen)


def _round_up(m: float, N: float) -> float:
    return max(1, math.ceil(m / N - MASS_TOL)) * N


def _sample_grid(domain: Domain, count: int = 10) -> np.ndarray:
    if domain.kind == "plane":
        x0, x1, y0, y1 = domain.box
        s = (np.arange(count) + 0.5) / count
        return ((x0 + (x1 - x0) * s)[:, None] + 1j * (y0 + (y1 - y0) * s)[None, :]).ravel()
    # squares near the origin get clipped at t = 0, so sample an outer annulus
    r = domain.r_max * (0.5 + 0.45 * (np.arange(count) + 0.5) / count)
    th = np.arange(count) * TWO_PI / count
    return (r[:, None] * np.exp(1j * th)[None, :]).ravel()


def construction_radius(mu: DoublingMeasure, N: float, samples=None) -> float:
    """Largest side of a metric square of mass N centred at sampled points.

    Sample points whose square leaves a grid-sampled measure's truncation
    before reaching mass N are skipped.
    """
    pts = _sample_grid(mu.domain) if samples is None else np.atleast_1d(samples)
    best = 0.0
    for z in pts:
        z = complex(z)

        def f(s):
            return mass(mu, square_at(mu.domain, z, s)) - N

        hi = mu.domain.h
        try:
            while f(hi) < 0:
                hi *= 2
                if hi > 1e4:
                    raise TruncationError("mass N not reached by any square")
            best = max(best, brentq(f, 1e-9 * hi, hi, xtol=1e-12))
        except DomainError:
            if not mu.is_grid:
                raise
    if best == 0.0:
        raise TruncationError("no sampled square of mass N fits the truncation")
    return float(best)


def _cut(mu, rect, axis, lo, target, hi_limit):
    """Position x in (lo, hi_limit] with mass(rect restricted to [lo, x]) = target."""
    def f(x):
        return sub_mass(mu, rect, axis, lo, x) - target
    if f(hi_limit) <= 0:
        return hi_limit
    return brentq(f, lo, hi_limit, xtol=XTOL, rtol=1e-15)


def _axis_length_fn(rect: MetricRect, axis: int):
    """Metric length along axis of a sub-interval of given coordinate extent."""
    if axis == 0 or rect.kind == "plane":
        return lambda lo, hi: hi - lo
    scale = rect.angular_scale()
    return lambda lo, hi: (hi - lo) * scale


def _slice_band(mu, rect: MetricRect, axis: int, N: float, R: float, closing_merge: bool):
    """Slice rect along axis into integer-multiple-of-N pieces of metric length >= R."""
    lo, hi = rect.interval(axis)
    length = _axis_length_fn(rect, axis)
    per_unit = length(0.0, 1.0)
    step = R / per_unit
    pieces = []
    cur = lo
    while True:
        if length(cur, hi) < R * (1 - 1e-12):
            break
        m_R = mass(mu, rect.with_interval(axis, cur, cur + step))
        target = _round_up(m_R, N)
        rest = mass(mu, rect.with_interval(axis, cur, hi))
        if rest < target - MASS_TOL * N:
            break
        x = hi if abs(rest - target) <= 1e-12 * N else _cut(mu, rect, axis, cur, target, hi)
        if closing_merge and length(x, hi) < R and x < hi:
            pieces.append(rect.with_interval(axis, cur, hi))
            cur = hi
            break
        pieces.append(rect.with_interval(axis, cur, x))
        cur = x
        if cur >= hi:
            break
    return pieces, cur


def build_strips(mu: DoublingMeasure, N: float, R: float | None = None):
    """Initial rectangles of integer-multiple-of-N mass, plus the covered region."""
    if N <= 0:
        raise ArgumentError("N must be positive")
    R = construction_radius(mu, N) if R is None else float(R)
    dom = mu.domain
    rects: list[MetricRect] = []
    coverage: list[MetricRect] = []
    if dom.kind == "plane":
        x0, x1, y0, y1 = dom.box
        ns = int(math.floor((y1 - y0) / R + 1e-12))
        if ns < 1 or (x1 - x0) < R:
            raise TruncationError("truncation too small to host one strip")
        ys = y0 + 0.5 * ((y1 - y0) - ns * R) + R * np.arange(ns + 1)
        nx = int(math.floor((x1 - x0) / R + 1e-12))
        xs0 = x0 + 0.5 * ((x1 - x0) - nx * R)
        for j in range(ns):
            strip = MetricRect("plane", xs0, x1, float(ys[j]), float(ys[j + 1]))
            pieces, end = _slice_band(mu, strip, 0, N, R, closing_merge=False)
            rects.extend(pieces)
            if pieces:
                coverage.append(MetricRect("plane", xs0, end, strip.b0, strip.b1))
        if not rects:
            raise TruncationError("no strip piece reached mass N")
        return rects, coverage, R
    t_max = math.atanh(dom.r_max)
    t = 0.0
    while True:
        if t + R > t_max:
            break
        full = MetricRect("disk", t, t_max, 0.0, TWO_PI)
        m_R = mass(mu, full.with_interval(0, t, t + R))
        target = _round_up(m_R, N)
        if mass(mu, full) < target:
            break
        t1 = _cut(mu, full, 0, t, target, t_max)
        ann = MetricRect("disk", t, t1, 0.0, TWO_PI)
        if ann.sides()[1] < 2 * R:
            rects.append(ann)
        else:
            pieces, _ = _slice_band(mu, ann, 1, N, R, closing_merge=True)
            rects.extend(pieces)
        coverage.append(ann)
        t = t1
    if not rects:
        raise TruncationError("truncation too small to host one annulus")
    return rects, coverage, R


def bisect(rect: MetricRect, mu: DoublingMeasure, N: float):
    """Cut rect inside a centred band of mass N into two integer-multiple pieces."""
    total = mass(mu, rect)
    if total < 2 * N * (1 - 1e-9):
        raise ArgumentError("bisection needs mass at least 2N")
    axis = rect.longest_axis()
    lo, hi = rect.interval(axis)
    c = 0.5 * (lo + hi)

    def band(w):
        return sub_mass(mu, rect, axis, c - w, c + w) - N

    try:
        w = brentq(band, 0.0, 0.5 * (hi - lo), xtol=XTOL)
    except ValueError as exc:
        raise ConstructionError("no centred band of mass N") from exc
    a = sub_mass(mu, rect, axis, lo, c - w)
    left = _round_up(a, N)
    left = min(max(left, N), total - N)
    if abs(left - a) <= 1e-12 * N and c - w > lo:
        x = c - w
    else:
        x = _cut(mu, rect, axis, lo, left, hi)
    if not (c - w - 1e-9 * (hi - lo) <= x <= c + w + 1e-9 * (hi - lo)):
        raise ConstructionError("integer-mass cut falls outside the central band")
    return rect.with_interval(axis, lo, x), rect.with_interval(axis, x, hi)


def final_split(rect: MetricRect, mu: DoublingMeasure, N: float) -> list[MetricRect]:
    """Cut rect into mass-N slices along its longest side."""
    total = mass(mu, rect)
    n = int(round(total / N))
    if n <= 1:
        return [rect]
    axis = rect.longest_axis()
    lo, hi = rect.interval(axis)
    cuts = [lo]
    for i in range(1, n):
        cuts.append(_cut(mu, rect, axis, lo, i * N, hi))
    cuts.append(hi)
    return [rect.with_interval(axis, cuts[i], cuts[i + 1]) for i in range(n)]


def doubling_constant(mu: DoublingMeasure, radii=(0.1, 0.2, 0.4)) -> int:
    pts = _sample_grid(mu.domain, 6)
    if mu.domain.kind == "plane":
        x0, x1, y0, y1 = mu.domain.box
        cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
        pts = cx + 1j * cy + 0.8 * (pts - cx - 1j * cy)
    else:
        pts = pts * 0.9
    return int(math.ceil(doubling_diagnostic(mu, pts, radii)["C_est"] - 1e-9))


def build_partition(mu: DoublingMeasure, N: float, R: float | None = None,
                    C_doubling: int | None = None) -> Partition:
    rects, coverage, R = build_strips(mu, N, R)
    C = doubling_constant(mu) if C_doubling is None else int(C_doubling)
    stage: list[tuple[MetricRect, int]] = []
    todo = [(r, 0) for r in rects]
    while todo:
        r, g = todo.pop()
        if g > MAX_DEPTH:
            raise ConstructionError("bisection depth guard exceeded")
        m = mass(mu, r)
        if m > C * N * (1 + 1e-9) and m >= 2 * N:
            a, b = bisect(r, mu, N)
            todo.append((b, g + 1))
            todo.append((a, g + 1))
        else:
            stage.append((r, g))
    stage.sort(key=lambda rg: (rg[0].b0, rg[0].a0) if mu.domain.kind == "plane" else (rg[0].a0, rg[0].b0))
    E_bisect = max(r.eccentricity for r, _ in stage)
    out = []
    for r, g in stage:
        for piece in final_split(r, mu, N):
            out.append(_mr(piece, mu, g))
    E_max = max(mr.eccentricity for mr in out)
    return Partition(out, float(N), mu, float(R), coverage, C, float(E_bisect), float(E_max))


def partition_from_json(d: dict, mu: DoublingMeasure) -> Partition:
    rects = [MassRectangle(MetricRect.from_json(r), r["mass"], r["eccentricity"], r["generation"])
             for r in d["rectangles"]]
    cov = [MetricRect.from_json(r) for r in d["coverage"]]
    return Partition(rects, d["N"], mu, d["R"], cov, d["C_doubling"], d["E_bisect"], d["E_max"])


@dataclass
class LinePartition:
    intervals: list[tuple[float, float]]
    remainder: tuple[float, float] | None
    N: float


def realline_partition(mu: LineMeasure, N: float, window=None) -> LinePartition:
    """Consecutive intervals of mass N from the left end of the window."""
    if N <= 0:
        raise ArgumentError("N must be positive")
    a, b = mu.window if window is None else window
    out = []
    cur = a
    while True:
        rest = mu.mass(cur, b)
        if rest < N * (1 - 1e-12):
            break
        x = b if abs(rest - N) <= 1e-12 * N else brentq(
            lambda x: mu.mass(cur, x) - N, cur, b, xtol=XTOL, rtol=1e-15)
        out.append((cur, x))
        cur = x
    if not out:
        raise TruncationError("window holds less than mass N")
    rem = (cur, b) if cur < b else None
    return LinePartition(out, rem, float(N))
