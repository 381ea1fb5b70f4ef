"""Plane / disk metric abstraction.

Points are complex numbers.  The plane carries the Euclidean distance, the
disk the pseudo-hyperbolic distance |z - w| / |1 - conj(w) z|.  Rectangles are
axis-aligned in the plane and polar in the disk; a polar rectangle is stored in
the coordinates (t, theta) with t = artanh(r), so that rectangles close to the
unit circle stay well conditioned and radial cuts are linear in metric length.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .errors import ArgumentError, DomainError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Domain:
    """Truncated plane box or truncated disk together with its sampling grid.

    The grid is cell centred: ``n`` cells per axis over ``bounds`` (plane) or
    over ``[-r_max, r_max]^2`` (disk).  Arrays on the grid are indexed
    ``[ix, iy]``.
    """

    kind: str = "plane"
    bounds: tuple[float, float, float, float] = (-5.0, 5.0, -5.0, 5.0)
    r_max: float = 0.95
    n: int = 256

    def __post_init__(self):
        if self.kind not in ("plane", "disk"):
            raise ArgumentError(f"unknown domain kind {self.kind!r}")
        if self.n < 16:
            raise ArgumentError("grid resolution must be at least 16 per axis")
        if self.kind == "plane":
            x0, x1, y0, y1 = self.bounds
            if not (x1 > x0 and y1 > y0):
                raise ArgumentError("plane bounding box must have positive area")
        elif not 0.0 < self.r_max < 1.0:
            raise ArgumentError("disk truncation needs 0 < r_max < 1")

    @property
    def box(self) -> tuple[float, float, float, float]:
        if self.kind == "plane":
            return tuple(float(b) for b in self.bounds)
        r = self.r_max
        return (-r, r, -r, r)

    @property
    def h(self) -> float:
        x0, x1, _, _ = self.box
        return (x1 - x0) / self.n

    @property
    def hy(self) -> float:
        _, _, y0, y1 = self.box
        return (y1 - y0) / self.n

    @property
    def xs(self) -> np.ndarray:
        x0, _, _, _ = self.box
        return x0 + self.h * (np.arange(self.n) + 0.5)

    @property
    def ys(self) -> np.ndarray:
        _, _, y0, _ = self.box
        return y0 + self.hy * (np.arange(self.n) + 0.5)

    def grid(self) -> np.ndarray:
        X, Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        return X + 1j * Y

    def with_n(self, n: int) -> "Domain":
        return replace(self, n=n)

    def inside(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if self.kind == "plane":
            x0, x1, y0, y1 = self.box
            return (z.real >= x0) & (z.real <= x1) & (z.imag >= y0) & (z.imag <= y1)
        return np.abs(z) <= self.r_max

    def mask(self) -> np.ndarray:
        """Grid points that belong to the truncation."""
        if self.kind == "plane":
            return np.ones((self.n, self.n), dtype=bool)
        return np.abs(self.grid()) < self.r_max

    def to_json(self) -> dict:
        if self.kind == "plane":
            return {"kind": "plane", "bounds": list(self.box), "n": self.n}
        return {"kind": "disk", "r_max": self.r_max, "n": self.n}

    @classmethod
    def from_json(cls, d: dict) -> "Domain":
        if d.get("kind", "plane") == "plane":
            return cls("plane", tuple(d.get("bounds", (-5, 5, -5, 5))), n=int(d.get("n", 256)))
        return cls("disk", r_max=float(d.get("r_max", 0.95)), n=int(d.get("n", 256)))


def pseudo_hyperbolic(z, w):
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    return np.abs(z - w) / np.abs(1.0 - np.conj(w) * z)


def metric_distance(domain: Domain, z, w, check: bool = True):
    """Euclidean distance in the plane, pseudo-hyperbolic distance in the disk."""
    if check and not (np.all(domain.inside(z)) and np.all(domain.inside(w))):
        raise DomainError("point outside the domain truncation")
    if domain.kind == "plane":
        return np.abs(np.asarray(z, dtype=complex) - np.asarray(w, dtype=complex))
    return pseudo_hyperbolic(z, w)


@dataclass(frozen=True)
class Ball:
    """Metric ball; in both geometries it is a Euclidean disk."""

    center: complex
    radius: float
    euclid_center: complex
    euclid_radius: float
    kind: str = "plane"

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return np.abs(z - self.euclid_center) < self.euclid_radius


def disk_ball_euclid(c, r):
    """Euclidean centre and radius of the pseudo-hyperbolic ball D(c, r).

    Vectorised in ``c`` and ``r``.
    """
    c = np.asarray(c, dtype=complex)
    r = np.asarray(r, dtype=float)
    a = np.abs(c) ** 2
    den = 1.0 - r * r * a
    return c * (1.0 - r * r) / den, r * (1.0 - a) / den


def metric_ball(domain: Domain, center, r) -> Ball:
    if r <= 0:
        raise ArgumentError("ball radius must be positive")
    center = complex(center)
    if domain.kind == "plane":
        return Ball(center, float(r), center, float(r), "plane")
    if r >= 1.0 or abs(center) >= 1.0:
        raise DomainError("pseudo-hyperbolic balls need |center| < 1 and r < 1")
    ec, er = disk_ball_euclid(center, r)
    return Ball(center, float(r), complex(ec), float(er), "disk")


@dataclass(frozen=True)
class MetricRect:
    """Axis-aligned (plane) or polar (disk) rectangle.

    ``a0, a1`` is the first coordinate interval (x, or t = artanh r) and
    ``b0, b1`` the second (y, or theta).
    """

    kind: str
    a0: float
    a1: float
    b0: float
    b1: float

    def __post_init__(self):
        if not (self.a1 > self.a0 and self.b1 > self.b0):
            raise ArgumentError("rectangle must have nonempty interior")
        if self.kind == "disk" and (self.a0 < 0 or self.b1 - self.b0 > TWO_PI + 1e-12):
            raise ArgumentError("invalid polar rectangle")

    @classmethod
    def polar(cls, r0: float, r1: float, th0: float, th1: float) -> "MetricRect":
        return cls("disk", math.atanh(r0), math.atanh(r1), th0, th1)

    @property
    def r0(self) -> float:
        return math.tanh(self.a0)

    @property
    def r1(self) -> float:
        return math.tanh(self.a1)

    def interval(self, axis: int) -> tuple[float, float]:
        return (self.a0, self.a1) if axis == 0 else (self.b0, self.b1)

    def with_interval(self, axis: int, lo: float, hi: float) -> "MetricRect":
        if axis == 0:
            return replace(self, a0=lo, a1=hi)
        return replace(self, b0=lo, b1=hi)

    def angular_scale(self) -> float:
        """Metric length per unit of the second coordinate."""
        if self.kind == "plane":
            return 1.0
        return 0.5 * math.sinh(self.a0 + self.a1)

    def sides(self) -> tuple[float, float]:
        """Metric side lengths (radial/x, angular/y)."""
        return (self.a1 - self.a0, (self.b1 - self.b0) * self.angular_scale())

    def longest_axis(self) -> int:
        s0, s1 = self.sides()
        return 0 if s0 >= s1 else 1

    @property
    def eccentricity(self) -> float:
        s0, s1 = self.sides()
        return max(s0, s1) / min(s0, s1)

    @property
    def area(self) -> float:
        """Euclidean area."""
        if self.kind == "plane":
            return (self.a1 - self.a0) * (self.b1 - self.b0)
        return 0.5 * (self.r1 ** 2 - self.r0 ** 2) * (self.b1 - self.b0)

    def point(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if self.kind == "plane":
            return a + 1j * b
        return np.tanh(a) * np.exp(1j * b)

    @property
    def center(self) -> complex:
        return complex(self.point(0.5 * (self.a0 + self.a1), 0.5 * (self.b0 + self.b1)))

    def outline(self) -> np.ndarray:
        """Corners and edge midpoints."""
        aa = np.array([self.a0, 0.5 * (self.a0 + self.a1), self.a1])
        bb = np.array([self.b0, 0.5 * (self.b0 + self.b1), self.b1])
        A, B = np.meshgrid(aa, bb, indexing="ij")
        keep = np.ones((3, 3), dtype=bool)
        keep[1, 1] = False
        return self.point(A[keep], B[keep])

    @property
    def diameter(self) -> float:
        """Metric diameter (Poincare length scale in the disk)."""
        if self.kind == "plane":
            return math.hypot(self.a1 - self.a0, self.b1 - self.b0)
        pts = self.outline()
        d = pseudo_hyperbolic(pts[:, None], pts[None, :]).max()
        return float(np.arctanh(min(d, 1 - 1e-16)))

    @property
    def euclid_diameter(self) -> float:
        pts = self.outline()
        return float(np.abs(pts[:, None] - pts[None, :]).max())

    def contains(self, z, closed: bool = False) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if self.kind == "plane":
            a, b = z.real, z.imag
            ok_b = (b >= self.b0) & (b <= self.b1) if closed else (b >= self.b0) & (b < self.b1)
        else:
            r = np.minimum(np.abs(z), 1 - 1e-16)
            a = np.arctanh(r)
            b = np.mod(np.angle(z) - self.b0, TWO_PI) + self.b0
            ok_b = (b >= self.b0) & (b <= self.b1) if closed else (b >= self.b0) & (b < self.b1)
            if self.b1 - self.b0 >= TWO_PI - 1e-12:
                ok_b = np.ones_like(ok_b)
        ok_a = (a >= self.a0) & (a <= self.a1) if closed else (a >= self.a0) & (a < self.a1)
        return ok_a & ok_b

    def dilate(self, factor: float) -> "MetricRect":
        """Scale about the centre in rectangle coordinates."""
        ca, cb = 0.5 * (self.a0 + self.a1), 0.5 * (self.b0 + self.b1)
        ha, hb = 0.5 * factor * (self.a1 - self.a0), 0.5 * factor * (self.b1 - self.b0)
        if self.kind == "plane":
            return MetricRect("plane", ca - ha, ca + ha, cb - hb, cb + hb)
        hb = min(hb, math.pi)
        return MetricRect("disk", max(0.0, ca - ha), ca + ha, cb - hb, cb + hb)

    def overlaps(self, other: "MetricRect", tol: float = 1e-12) -> bool:
        """Interior intersection test."""
        if self.a1 <= other.a0 + tol or other.a1 <= self.a0 + tol:
            return False
        if self.kind == "plane":
            return not (self.b1 <= other.b0 + tol or other.b1 <= self.b0 + tol)
        if self.b1 - self.b0 >= TWO_PI - tol or other.b1 - other.b0 >= TWO_PI - tol:
            return True
        if self.a0 == 0.0 or other.a0 == 0.0:
            # both contain a neighbourhood of the origin
            if self.a0 == 0.0 and other.a0 == 0.0:
                return True
        shift = (other.b0 - self.b0) % TWO_PI
        w_self, w_other = self.b1 - self.b0, other.b1 - other.b0
        return shift < w_self - tol or shift > TWO_PI - w_other + tol

    def distance_to(self, z) -> np.ndarray:
        """Metric distance from points to the closed rectangle (0 inside)."""
        z = np.asarray(z, dtype=complex)
        if self.kind == "plane":
            dx = np.maximum(np.maximum(self.a0 - z.real, z.real - self.a1), 0.0)
            dy = np.maximum(np.maximum(self.b0 - z.imag, z.imag - self.b1), 0.0)
            return np.hypot(dx, dy)
        # nearest point on a fine boundary sampling
        inside = self.contains(z, closed=True)
        s = np.linspace(0.0, 1.0, 65)
        a = self.a0 + (self.a1 - self.a0) * s
        b = self.b0 + (self.b1 - self.b0) * s
        edge = np.concatenate([
            self.point(a, self.b0), self.point(a, self.b1),
            self.point(self.a0, b), self.point(self.a1, b),
        ])
        d = pseudo_hyperbolic(z[..., None], edge).min(axis=-1)
        return np.where(inside, 0.0, d)

    def to_json(self) -> dict:
        if self.kind == "plane":
            return {"kind": "plane", "x": [self.a0, self.a1], "y": [self.b0, self.b1]}
        return {"kind": "disk", "t": [self.a0, self.a1], "r": [self.r0, self.r1],
                "theta": [self.b0, self.b1]}

    @classmethod
    def from_json(cls, d: dict) -> "MetricRect":
        if d["kind"] == "plane":
            return cls("plane", *d["x"], *d["y"])
        return cls("disk", *d["t"], *d["theta"])


def rect_split(rect: MetricRect, axis, position: float) -> tuple[MetricRect, MetricRect]:
    """Cut ``rect`` by the coordinate line ``axis = position``.

    ``axis`` is 0, 1 or ``"longest"``.
    """
    if axis == "longest":
        axis = rect.longest_axis()
    lo, hi = rect.interval(axis)
    if not lo < position < hi:
        raise ArgumentError(f"split position {position} not interior to [{lo}, {hi}]")
    return rect.with_interval(axis, lo, position), rect.with_interval(axis, position, hi)


def square_at(domain: Domain, z: complex, side: float) -> MetricRect:
    """Metric square of the given side centred (in rectangle coordinates) at z."""
    if domain.kind == "plane":
        return MetricRect("plane", z.real - side / 2, z.real + side / 2,
                          z.imag - side / 2, z.imag + side / 2)
    t = math.atanh(min(abs(z), 1 - 1e-15))
    t0, t1 = max(0.0, t - side / 2), t + side / 2
    scale = 0.5 * math.sinh(t0 + t1)
    half = min(math.pi, side / (2 * scale)) if scale > 0 else math.pi
    th = math.atan2(z.imag, z.real)
    return MetricRect("disk", t0, t1, th - half, th + half)


def trim_mask(domain: Domain, region: np.ndarray, width: float) -> np.ndarray:
    """Grid points of ``region`` at metric distance >= width from its complement.

    Outside-of-grid counts as complement.  In the disk the Euclidean distance
    is converted with the local factor 1/(1 - |z|^2), which is accurate for the
    small widths this is used with.
    """
    padded = np.pad(region, 1, constant_values=False)
    dist = ndimage.distance_transform_edt(padded)[1:-1, 1:-1] * domain.h
    if domain.kind == "disk":
        Z = domain.grid()
        dist = dist / np.maximum(1.0 - np.abs(Z) ** 2, 1e-12)
        outside = np.abs(Z) >= domain.r_max
        dist = np.where(outside, 0.0, dist)
    return region & (dist >= width)
