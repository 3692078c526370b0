"""Method of interior parallels: level-set lengths and comparison test functions.

For a doubly connected domain the distance field to one boundary component is
sampled on a Cartesian background grid; each level curve {d = delta} is
extracted by marching squares, clipped to the domain, and its length s(delta)
is compared against the circular comparator S(delta) of the matched annulus
(Nagy's inequality).  The induced reparametrizations turn the radial annulus
eigenfunction into an admissible test function on the domain whose Rayleigh
quotient sits between lambda1 of the domain and lambda1 of the annulus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import fem
from .errors import DegenerateProfileError, InconsistentInputError
from .geometry import DomainSpec, RobinPair, match_annulus, perimeter
from .radial import RadialEigen, RadialProblem, lambda1_radial

TWO_PI = 2.0 * math.pi

# marching-squares case table: corner bit -> pairs of crossed edges
# corners: 0=(i,j) 1=(i+1,j) 2=(i+1,j+1) 3=(i,j+1); edges: 0=bottom 1=right 2=top 3=left
_CASE_SEGMENTS = {
    1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)], 5: [(3, 2), (0, 1)],
    6: [(0, 2)], 7: [(3, 2)], 8: [(2, 3)], 9: [(0, 2)], 10: [(0, 3), (1, 2)],
    11: [(1, 2)], 12: [(1, 3)], 13: [(0, 1)], 14: [(0, 3)],
}


@dataclass
class BackgroundField:
    """Distance field to one boundary component on a Cartesian grid."""

    xs: np.ndarray
    ys: np.ndarray
    dist: np.ndarray      # (nx, ny), distance to the selected boundary
    in_domain: np.ndarray  # (nx, ny) boolean domain membership of grid points

    @property
    def cell(self) -> float:
        return float(self.xs[1] - self.xs[0])


def background_field(domain: DomainSpec, side: str, grid_n: int = 1024,
                     pad_cells: float = 2.0) -> BackgroundField:
    boundary = domain.inner if side == "inner" else domain.outer
    lo, hi = domain.bounding_box()
    span = float(np.max(hi - lo))
    pad = pad_cells * span / grid_n
    xs = np.linspace(lo[0] - pad, hi[0] + pad, grid_n)
    ys = np.linspace(lo[1] - pad, hi[1] + pad, grid_n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    tree = cKDTree(boundary.resample(max(4096, 4 * grid_n)))
    dist, _ = tree.query(pts, workers=-1)
    inside = domain.contains(pts)
    return BackgroundField(xs, ys, dist.reshape(grid_n, grid_n), inside.reshape(grid_n, grid_n))


def _cells_by_level(field: BackgroundField, deltas: np.ndarray):
    """Flat cell indices whose corner range straddles each (uniform) level."""
    D = field.dist
    c0, c1, c2, c3 = D[:-1, :-1], D[1:, :-1], D[1:, 1:], D[:-1, 1:]
    cmin = np.minimum(np.minimum(c0, c1), np.minimum(c2, c3)).ravel()
    cmax = np.maximum(np.maximum(c0, c1), np.maximum(c2, c3)).ravel()
    d0, step = deltas[0], deltas[1] - deltas[0]
    lo = np.floor((cmin - d0) / step).astype(np.int64) + 1   # first level > cmin
    hi = np.floor((cmax - d0) / step).astype(np.int64)       # last level <= cmax
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, len(deltas) - 1)
    counts = np.maximum(hi - lo + 1, 0)
    keep = counts > 0
    counts = counts[keep]
    total = int(counts.sum())
    cell_rep = np.repeat(np.nonzero(keep)[0], counts)
    offsets = np.cumsum(counts) - counts
    level_ids = np.repeat(lo[keep], counts) + (np.arange(total) - np.repeat(offsets, counts))
    order = np.argsort(level_ids, kind="stable")
    cells_sorted = cell_rep[order]
    bounds = np.searchsorted(level_ids[order], np.arange(len(deltas) + 1))
    return [cells_sorted[bounds[k]:bounds[k + 1]] for k in range(len(deltas))]


def _level_segments(field: BackgroundField, level: float, cells=None):
    """Marching-squares segments of {dist = level}, not yet clipped."""
    D = field.dist
    n_cell = D.shape[1] - 1
    if cells is None:
        neg = D < level
        code_grid = (neg[:-1, :-1].astype(np.int8) + 2 * neg[1:, :-1]
                     + 4 * neg[1:, 1:] + 8 * neg[:-1, 1:])
        ii, jj = np.nonzero((code_grid != 0) & (code_grid != 15))
    else:
        ii, jj = cells // n_cell, cells % n_cell
    if len(ii) == 0:
        return np.zeros((0, 2, 2))
    xs, ys, h = field.xs, field.ys, field.cell
    va = D[ii, jj]
    vb = D[ii + 1, jj]
    vc = D[ii + 1, jj + 1]
    vd = D[ii, jj + 1]
    x0, y0 = xs[ii], ys[jj]

    def crossing(edge):
        if edge == 0:   # bottom: a-b, along x
            f = (level - va) / (vb - va)
            return np.stack([x0 + f * h, y0], axis=1)
        if edge == 1:   # right: b-c, along y
            f = (level - vb) / (vc - vb)
            return np.stack([x0 + h, y0 + f * h], axis=1)
        if edge == 2:   # top: d-c, along x
            f = (level - vd) / (vc - vd)
            return np.stack([x0 + f * h, y0 + h], axis=1)
        f = (level - va) / (vd - va)  # left: a-d, along y
        return np.stack([x0, y0 + f * h], axis=1)

    with np.errstate(divide="ignore", invalid="ignore"):
        pts = [crossing(e) for e in range(4)]
    cell_codes = ((va < level).astype(np.int8) + 2 * (vb < level)
                  + 4 * (vc < level) + 8 * (vd < level))
    segs = []
    for case, pairs in _CASE_SEGMENTS.items():
        mask = cell_codes == case
        if not np.any(mask):
            continue
        for e1, e2 in pairs:
            segs.append(np.stack([pts[e1][mask], pts[e2][mask]], axis=1))
    return np.concatenate(segs, axis=0)


def _clip_segments_to_domain(domain: DomainSpec, segs, n_bisect: int = 20):
    """Total length of the segment set intersected with the open domain."""
    if len(segs) == 0:
        return 0.0
    p, q = segs[:, 0, :], segs[:, 1, :]
    pin = domain.contains(p)
    qin = domain.contains(q)
    both = pin & qin
    length = float(np.sum(np.hypot(*(q[both] - p[both]).T)))
    partial = pin ^ qin
    if np.any(partial):
        a = np.where(pin[partial, None], p[partial], q[partial])
        b = np.where(pin[partial, None], q[partial], p[partial])
        # bisect for the domain boundary crossing along each segment
        lo = np.zeros(len(a))
        hi = np.ones(len(a))
        for _ in range(n_bisect):
            mid = 0.5 * (lo + hi)
            m = a + mid[:, None] * (b - a)
            inside = domain.contains(m)
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        cut = 0.5 * (lo + hi)
        length += float(np.sum(cut * np.hypot(*(b - a).T)))
    return length


@dataclass
class ParallelProfile:
    """Tabulated level-set lengths with annulus comparators and parametrizations.

    The inner side carries the reciprocal-length parametrizations (t, T); the
    outer side the cumulative-area parametrizations (l, L).  ``t_star`` and
    ``T_sharp`` hold the terminal values of whichever pair applies.
    """

    side: str
    r: float
    R: float
    delta: np.ndarray
    s: np.ndarray
    S: np.ndarray
    delta_star: float
    t: np.ndarray | None = None
    T: np.ndarray | None = None
    l: np.ndarray | None = None
    L: np.ndarray | None = None
    t_star: float = 0.0
    T_sharp: float = 0.0

    def g_of(self, alpha):
        """s expressed in the t-parameter (inner side)."""
        return np.interp(alpha, self.t, self.s)

    def G_of(self, alpha):
        """Annulus comparator in the T-parameter: 2 pi r exp(2 pi alpha)."""
        return TWO_PI * self.r * np.exp(TWO_PI * np.asarray(alpha))

    def h_of(self, alpha):
        """s expressed in the cumulative-area parameter (outer side)."""
        return np.interp(alpha, self.l, self.s)

    def H_of(self, alpha):
        """Annulus comparator: 2 pi sqrt(R^2 - alpha/pi)."""
        a = np.minimum(np.asarray(alpha, dtype=float), math.pi * self.R ** 2)
        return TWO_PI * np.sqrt(self.R ** 2 - a / math.pi)

    def swept_area(self) -> float:
        """Integral of s over delta = area swept by the level sets (= g^2 in t)."""
        return float(np.trapezoid(self.s, self.delta))


def level_lengths(domain: DomainSpec, side: str, grid_n: int = 1024,
                  n_delta: int = 256) -> ParallelProfile:
    """Measure s(delta) for the chosen side and build the parametrizations.

    The delta grid starts at one background cell (the paper's parametrization
    integrals are taken from 0 with the exact boundary perimeter standing in
    for the noisy s(0+) value) and stops at the last level with nonnegligible
    length, which defines delta_star.
    """
    if side not in ("inner", "outer"):
        raise ValueError(f"side must be 'inner' or 'outer', got {side!r}")
    field = background_field(domain, side, grid_n)
    boundary = domain.inner if side == "inner" else domain.outer
    p0 = perimeter(boundary)
    dmax = float(np.max(field.dist[field.in_domain]))
    deltas = np.linspace(0.0, dmax + field.cell, n_delta + 1)[1:]
    cells = _cells_by_level(field, deltas)
    lengths = np.array([
        _clip_segments_to_domain(domain, _level_segments(field, d, c))
        for d, c in zip(deltas, cells)
    ])
    if np.all(lengths <= 0.0):
        raise DegenerateProfileError("all level sets of the distance field are empty")
    threshold = 1e-3 * (perimeter(domain.inner) + perimeter(domain.outer))
    live = np.nonzero(lengths > threshold)[0]
    last = live[-1]
    delta = np.concatenate(([0.0], deltas[: last + 1]))
    s = np.concatenate(([p0], lengths[: last + 1]))
    delta_star = float(delta[-1])

    robin = RobinPair(1.0, 0.0) if side == "inner" else RobinPair(0.0, 1.0)
    m = match_annulus(domain, robin)
    if side == "inner":
        S = TWO_PI * (m.r + delta)
        t = np.concatenate(([0.0], np.cumsum(0.5 * np.diff(delta) * (1.0 / s[1:] + 1.0 / s[:-1]))))
        T_sharp = math.log1p((m.R - m.r) / m.r) / TWO_PI
        return ParallelProfile(side, m.r, m.R, delta, s, S, delta_star,
                               t=t, T=np.log1p(delta / m.r) / TWO_PI,
                               t_star=float(t[-1]), T_sharp=T_sharp)
    S = TWO_PI * np.maximum(m.R - delta, 0.0)
    ell = np.concatenate(([0.0], np.cumsum(0.5 * np.diff(delta) * (s[1:] + s[:-1]))))
    L = TWO_PI * (m.R * delta - 0.5 * delta ** 2)
    L_sharp = TWO_PI * (m.R * (m.R - m.r) - 0.5 * (m.R - m.r) ** 2)
    return ParallelProfile(side, m.r, m.R, delta, s, S, delta_star,
                           l=ell, L=L, t_star=float(ell[-1]), T_sharp=L_sharp)


@dataclass
class LevelSetTestFunction:
    """Nodal test function constant on level sets of a boundary distance."""

    values: np.ndarray
    cap: float | None
    alpha: np.ndarray
    phi: np.ndarray


def _radial_consistency(eigen: RadialEigen, expected_r: float, expected_R: float):
    r0, R0 = float(eigen.grid[0]), float(eigen.grid[-1])
    if abs(r0 - expected_r) > 1e-6 * max(1.0, expected_r) or \
            abs(R0 - expected_R) > 1e-6 * max(1.0, expected_R):
        raise InconsistentInputError(
            f"radial solution on ({r0:.6g}, {R0:.6g}) does not match profile annulus "
            f"({expected_r:.6g}, {expected_R:.6g})")


def build_test_function_rn(domain: DomainSpec, h_in: float, radial: RadialEigen,
                           profile: ParallelProfile, mesh: fem.Mesh) -> LevelSetTestFunction:
    """Test function for the Robin-inner / Neumann-outer comparison.

    Nodal values are phi(t(d(x, inner boundary))) with phi the radial profile
    in the T-parameter; past T_sharp the value is capped at the eigenfunction
    extremum reached on the annulus (max for h_in > 0, min for h_in < 0).
    """
    if profile.side != "inner":
        raise InconsistentInputError("RN test function needs an inner-side profile")
    _radial_consistency(radial, profile.r, profile.R)
    w_delta = radial.grid - radial.grid[0]
    cap = float(np.max(radial.v)) if h_in > 0 or math.isinf(h_in) else float(np.min(radial.v))

    dists = domain.inner.distance(mesh.nodes)
    # boundary mesh nodes lie on the smooth curve; clear the sagitta offset
    # to the sampled polyline so Dirichlet traces vanish exactly
    dists[mesh.node_flags == fem.FLAG_INNER] = 0.0
    alpha = np.interp(dists, profile.delta, profile.t)
    # T^{-1}(alpha) = r (exp(2 pi alpha) - 1)
    delta_eq = profile.r * np.expm1(TWO_PI * np.minimum(alpha, profile.T_sharp))
    values = np.interp(delta_eq, w_delta, radial.v)
    values = np.where(alpha > profile.T_sharp, cap, values)

    alpha_tab = profile.T
    phi_tab = np.interp(profile.r * np.expm1(TWO_PI * alpha_tab), w_delta, radial.v)
    return LevelSetTestFunction(values=values, cap=cap, alpha=alpha_tab, phi=phi_tab)


def build_test_function_nr(domain: DomainSpec, h_out: float, radial: RadialEigen,
                           profile: ParallelProfile, mesh: fem.Mesh) -> LevelSetTestFunction:
    """Test function for the Neumann-inner / Robin-outer comparison.

    Nodal values are phi(l(d(x, outer boundary))); no capping is needed since
    the cumulative-area parametrizations exhaust the full area on both sides.
    """
    if profile.side != "outer":
        raise InconsistentInputError("NR test function needs an outer-side profile")
    _radial_consistency(radial, profile.r, profile.R)
    w_delta = radial.grid[-1] - radial.grid[::-1]   # distance from the outer circle
    v_rev = radial.v[::-1]

    dists = domain.outer.distance(mesh.nodes)
    dists[mesh.node_flags == fem.FLAG_OUTER] = 0.0
    alpha = np.clip(np.interp(dists, profile.delta, profile.l), 0.0, profile.T_sharp)
    # L^{-1}(alpha) = R - sqrt(R^2 - alpha/pi)
    delta_eq = profile.R - np.sqrt(np.maximum(profile.R ** 2 - alpha / math.pi, 0.0))
    values = np.interp(delta_eq, w_delta, v_rev)

    alpha_tab = profile.L
    d_tab = profile.R - np.sqrt(np.maximum(profile.R ** 2 - alpha_tab / math.pi, 0.0))
    phi_tab = np.interp(d_tab, w_delta, v_rev)
    return LevelSetTestFunction(values=values, cap=None, alpha=alpha_tab, phi=phi_tab)


@dataclass
class SandwichReport:
    """lambda1(domain) <= quotient(v) <= lambda1(annulus), with residuals."""

    lam_domain: float
    quotient: float
    lam_annulus: float
    lower_residual: float   # quotient - lam_domain, expected >= -eps
    upper_residual: float   # lam_annulus - quotient, expected >= -eps
    eps: float
    passed: bool


def sandwich_check(domain: DomainSpec, robin: RobinPair, test: LevelSetTestFunction,
                   mesh: fem.Mesh, eps_chain: float = 0.02,
                   lam_domain: float | None = None) -> SandwichReport:
    """Evaluate the two-sided eigenvalue chain for a prepared test function.

    Violations are reported, not raised: at fixed resolution they may be
    discretization artifacts, which a refinement rerun distinguishes from
    genuine counterexamples.
    """
    match = match_annulus(domain, robin)
    lam_annulus = lambda1_radial(RadialProblem(match.r, match.R, robin.h_in, robin.h_out)).lambda1
    if lam_domain is None:
        lam_domain = fem.solve(mesh, robin).lambda1
    q = fem.rayleigh_quotient(mesh, robin, test.values)
    eps = eps_chain * max(abs(lam_annulus), abs(lam_domain), 1e-6)
    lower = q - lam_domain
    upper = lam_annulus - q
    return SandwichReport(lam_domain, q, lam_annulus, lower, upper, eps,
                          passed=bool(lower >= -eps and upper >= -eps))
