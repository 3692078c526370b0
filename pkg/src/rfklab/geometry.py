"""Doubly connected planar domains bounded by two star-shaped Fourier curves.

A boundary curve is rho(theta) = a0 + sum_k (a_k cos k theta + b_k sin k theta)
about an interior center; the domain is the region between an inner and an
outer curve.  All quantities (area, perimeter, distances, membership) are
computed from cached polylines of ``n_samples`` vertices, so they converge at
O(n_samples^-2) to the smooth-curve values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    IncompatibleDomainError,
    InfeasibleMatchError,
    InvalidDomainError,
    UnsupportedRegimeError,
)

TWO_PI = 2.0 * math.pi


def robin_sign(h: float) -> int:
    """Sign of a Robin parameter with +inf (Dirichlet) counting as positive."""
    if math.isinf(h):
        return 1
    return (h > 0) - (h < 0)


@dataclass(frozen=True)
class RobinPair:
    """Boundary parameters (h_in, h_out); math.inf encodes Dirichlet."""

    h_in: float
    h_out: float

    def __post_init__(self):
        for h in (self.h_in, self.h_out):
            if math.isnan(h) or h == -math.inf:
                raise ValueError(f"robin parameter must be finite or +inf, got {h}")

    @property
    def product_sign(self) -> int:
        return robin_sign(self.h_in) * robin_sign(self.h_out)

    @staticmethod
    def parse(h_in, h_out) -> "RobinPair":
        return RobinPair(parse_robin(h_in), parse_robin(h_out))


def parse_robin(token) -> float:
    """Parse a Robin parameter; the literal token "inf" means Dirichlet."""
    if isinstance(token, str):
        if token.strip().lower() == "inf":
            return math.inf
        token = float(token)
    return float(token)


def format_robin(h: float) -> str:
    return "inf" if math.isinf(h) else repr(float(h))


class StarBoundary:
    """Smooth closed curve, star-shaped about ``center``, from a Fourier radius."""

    def __init__(self, center, cos_coeffs, sin_coeffs=(), n_samples: int = 1024):
        self.center = np.asarray(center, dtype=float).reshape(2)
        a = np.atleast_1d(np.asarray(cos_coeffs, dtype=float))
        b = np.atleast_1d(np.asarray(sin_coeffs, dtype=float)) if len(sin_coeffs) else np.zeros(0)
        k = max(len(a) - 1, len(b))
        self.cos_coeffs = np.zeros(k + 1)
        self.cos_coeffs[: len(a)] = a
        self.sin_coeffs = np.zeros(k)
        self.sin_coeffs[: len(b)] = b
        self.n_samples = int(n_samples)
        if self.n_samples < 3:
            raise InvalidDomainError("polyline needs at least 3 vertices")
        if not np.all(np.isfinite(self.center)) or not np.all(np.isfinite(self.cos_coeffs)) \
                or not np.all(np.isfinite(self.sin_coeffs)):
            raise InvalidDomainError("non-finite boundary data")
        # positivity of rho on a grid 4x denser than the polyline
        theta_dense = np.linspace(0.0, TWO_PI, 4 * self.n_samples, endpoint=False)
        if np.min(self.rho(theta_dense)) <= 0.0:
            raise InvalidDomainError("radius function must be positive everywhere")
        self.thetas = np.linspace(0.0, TWO_PI, self.n_samples, endpoint=False)
        self.vertices = self.point(self.thetas)
        self._segments = None

    @classmethod
    def circle(cls, radius: float, center=(0.0, 0.0), n_samples: int = 1024) -> "StarBoundary":
        return cls(center, [radius], n_samples=n_samples)

    @property
    def order(self) -> int:
        return len(self.sin_coeffs)

    def rho(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.full(theta.shape, self.cos_coeffs[0])
        for k in range(1, self.order + 1):
            out = out + self.cos_coeffs[k] * np.cos(k * theta) + self.sin_coeffs[k - 1] * np.sin(k * theta)
        return out

    def drho(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(theta.shape)
        for k in range(1, self.order + 1):
            out = out - k * self.cos_coeffs[k] * np.sin(k * theta) + k * self.sin_coeffs[k - 1] * np.cos(k * theta)
        return out

    def point(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = self.rho(theta)
        return np.stack([self.center[0] + r * np.cos(theta), self.center[1] + r * np.sin(theta)], axis=-1)

    def signed_margin(self, pts):
        """rho(theta) - |p - center|: positive inside, negative outside."""
        pts = np.asarray(pts, dtype=float)
        d = pts.reshape(-1, 2) - self.center
        theta = np.arctan2(d[:, 1], d[:, 0])
        margin = self.rho(theta) - np.hypot(d[:, 0], d[:, 1])
        return margin.reshape(pts.shape[:-1])

    def contains(self, pts, margin: float = 0.0):
        return self.signed_margin(pts) > margin

    def region_area(self) -> float:
        """Shoelace area of the enclosed region's polyline."""
        return shoelace_area(self.vertices)

    def arc_length(self) -> float:
        p = self.vertices
        return float(np.sum(np.hypot(*(np.roll(p, -1, axis=0) - p).T)))

    def isoperimetric_deficit(self) -> float:
        return self.arc_length() ** 2 - 4.0 * math.pi * self.region_area()

    def resample(self, n: int):
        """n points on the curve, denser than the polyline if requested."""
        theta = np.linspace(0.0, TWO_PI, n, endpoint=False)
        return self.point(theta)

    def distance(self, pts):
        return polyline_distance(pts, self.vertices)

    def scaled(self, c: float) -> "StarBoundary":
        return StarBoundary(self.center * c, self.cos_coeffs * c, self.sin_coeffs * c, self.n_samples)

    def translated(self, v) -> "StarBoundary":
        return StarBoundary(self.center + np.asarray(v, dtype=float), self.cos_coeffs, self.sin_coeffs,
                            self.n_samples)

    def rotated(self, angle: float) -> "StarBoundary":
        """Rigid rotation about the origin."""
        ca, sa = math.cos(angle), math.sin(angle)
        rot = np.array([[ca, -sa], [sa, ca]])
        k = np.arange(1, self.order + 1)
        cos_new = self.cos_coeffs.copy()
        cos_new[1:] = self.cos_coeffs[1:] * np.cos(k * angle) - self.sin_coeffs * np.sin(k * angle)
        sin_new = self.cos_coeffs[1:] * np.sin(k * angle) + self.sin_coeffs * np.cos(k * angle)
        return StarBoundary(rot @ self.center, cos_new, sin_new, self.n_samples)


def shoelace_area(vertices) -> float:
    p = np.asarray(vertices, dtype=float)
    if p.ndim != 2 or p.shape[0] < 3:
        raise InvalidDomainError("degenerate polyline (< 3 vertices)")
    x, y = p[:, 0], p[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return float(0.5 * np.sum(x * yn - xn * y))


def polyline_distance(pts, vertices, chunk: int = 2048):
    """Exact Euclidean distance from points to a closed polyline.

    Vectorized over point chunks to bound memory; the polyline is treated as
    the closed sequence of its segments.
    """
    pts = np.asarray(pts, dtype=float)
    single = pts.ndim == 1
    p = pts.reshape(-1, 2)
    a = np.asarray(vertices, dtype=float)
    d = np.roll(a, -1, axis=0) - a
    dd = np.einsum("ij,ij->i", d, d)
    dd = np.where(dd == 0.0, 1.0, dd)
    out = np.empty(len(p))
    for lo in range(0, len(p), chunk):
        q = p[lo:lo + chunk]
        diff = q[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("pij,ij->pi", diff, d) / dd, 0.0, 1.0)
        closest = diff - t[:, :, None] * d[None, :, :]
        dist2 = np.einsum("pij,pij->pi", closest, closest)
        out[lo:lo + chunk] = np.sqrt(dist2.min(axis=1))
    return float(out[0]) if single else out.reshape(pts.shape[:-1])


class DomainSpec:
    """Doubly connected domain: region between two star-shaped curves."""

    def __init__(self, inner: StarBoundary, outer: StarBoundary, rel_clearance: float = 0.02):
        self.inner = inner
        self.outer = outer
        clearance = np.min(outer.signed_margin(inner.vertices))
        if clearance < rel_clearance * outer.cos_coeffs[0]:
            raise InvalidDomainError(
                f"inner boundary too close to outer boundary (clearance {clearance:.4g})")
        if area(self) <= 0.0:
            raise InvalidDomainError("domain has nonpositive area")

    def contains(self, pts):
        """Membership in the open domain (between the two curves)."""
        return self.outer.contains(pts) & ~self.inner.contains(pts, margin=-1e-12)

    def bounding_box(self, pad: float = 0.0):
        v = self.outer.vertices
        lo = v.min(axis=0) - pad
        hi = v.max(axis=0) + pad
        return lo, hi

    def scaled(self, c: float) -> "DomainSpec":
        return DomainSpec(self.inner.scaled(c), self.outer.scaled(c))

    def translated(self, v) -> "DomainSpec":
        return DomainSpec(self.inner.translated(v), self.outer.translated(v))

    def rotated(self, angle: float) -> "DomainSpec":
        return DomainSpec(self.inner.rotated(angle), self.outer.rotated(angle))

    @classmethod
    def annulus(cls, r: float, R: float, offset=(0.0, 0.0), n_samples: int = 1024) -> "DomainSpec":
        return cls(StarBoundary.circle(r, offset, n_samples), StarBoundary.circle(R, n_samples=n_samples))


@dataclass(frozen=True)
class AnnulusMatch:
    """Annulus (r, R) matched to a domain under the constraint set of its regime."""

    r: float
    R: float
    matched_constraints: tuple
    residuals: dict = field(default_factory=dict)


def area(domain: DomainSpec) -> float:
    """Area between the two boundary polylines."""
    return shoelace_area(domain.outer.vertices) - shoelace_area(domain.inner.vertices)


def perimeter(boundary: StarBoundary) -> float:
    """Arc length of the boundary polyline."""
    return boundary.arc_length()


def distance_to_boundary(domain: DomainSpec, point, which: str):
    """Distance from point(s) to the selected boundary polyline ('inner'|'outer')."""
    if which not in ("inner", "outer"):
        raise ValueError(f"which must be 'inner' or 'outer', got {which!r}")
    boundary = domain.inner if which == "inner" else domain.outer
    return boundary.distance(point)


def match_annulus(domain: DomainSpec, robin: RobinPair, tol: float | None = None) -> AnnulusMatch:
    """Concentric annulus carrying the comparison constraints for the given regime.

    Neumann outer: matches area + inner perimeter.  Neumann inner: matches
    area + outer perimeter.  Robin-Robin: matches both perimeters and reports
    the compatibility residual of |bd_out|^2 - |bd_in|^2 = 4 pi |Omega|.

    The default tolerance absorbs the O(N^-2) polyline discretization of the
    perimeters and the area (a concentric annulus at N=1024 self-matches with
    residual ~6e-6).
    """
    if tol is None:
        tol = 100.0 / min(domain.inner.n_samples, domain.outer.n_samples) ** 2
    if robin.product_sign < 0:
        raise UnsupportedRegimeError("h_in * h_out < 0 is outside the supported regime")
    omega = area(domain)
    p_in = perimeter(domain.inner)
    p_out = perimeter(domain.outer)
    if robin.h_out == 0.0:
        r = p_in / TWO_PI
        R = math.sqrt(r * r + omega / math.pi)
        return AnnulusMatch(r, R, ("area", "inner_perimeter"),
                            {"area": 0.0, "inner_perimeter": 0.0})
    if robin.h_in == 0.0:
        R = p_out / TWO_PI
        r_sq = R * R - omega / math.pi
        if r_sq < -tol * R * R:
            raise InfeasibleMatchError(f"negative inner radius squared {r_sq:.4g}")
        r = math.sqrt(max(r_sq, 0.0))
        return AnnulusMatch(r, R, ("area", "outer_perimeter"),
                            {"area": 0.0, "outer_perimeter": 0.0})
    r = p_in / TWO_PI
    R = p_out / TWO_PI
    residual = (p_out ** 2 - p_in ** 2 - 4.0 * math.pi * omega) / (4.0 * math.pi * omega)
    if abs(residual) > tol:
        raise IncompatibleDomainError(
            f"perimeter/area compatibility residual {residual:.3e} exceeds {tol:.1e}")
    zeros = {"area": residual, "inner_perimeter": 0.0, "outer_perimeter": 0.0}
    return AnnulusMatch(r, R, ("area", "inner_perimeter", "outer_perimeter"), zeros)


def save_domain(domain: DomainSpec, path) -> None:
    """Write the text format: center and interleaved coefficients per curve."""
    lines = []
    for name, b in (("inner", domain.inner), ("outer", domain.outer)):
        lines.append(f"{name}_center {float(b.center[0])!r} {float(b.center[1])!r}")
        coeffs = [b.cos_coeffs[0]]
        for k in range(1, b.order + 1):
            coeffs += [b.cos_coeffs[k], b.sin_coeffs[k - 1]]
        lines.append(f"{name}_coeffs " + " ".join(repr(float(c)) for c in coeffs))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_domain(path, n_samples: int = 1024) -> DomainSpec:
    data = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, *values = line.split()
            nums = [float(v) for v in values]
            if not all(math.isfinite(x) for x in nums):
                raise InvalidDomainError(f"non-finite number in domain file line {key!r}")
            data[key] = nums
    curves = {}
    for name in ("inner", "outer"):
        try:
            center = data[f"{name}_center"]
            coeffs = data[f"{name}_coeffs"]
        except KeyError as exc:
            raise InvalidDomainError(f"domain file missing {exc.args[0]} entries") from None
        a = [coeffs[0]] + coeffs[1::2]
        b = coeffs[2::2]
        curves[name] = StarBoundary(center, a, b, n_samples)
    return DomainSpec(curves["inner"], curves["outer"])
