"""Gradient flow of the first eigenfunction: basins and the effectless cut.

Flow lines of the recovered eigenfunction gradient are traced with RK4 until
they reach one of the two boundary components, stall at a critical point, or
exhaust their step budget.  Labeling a background grid of seeds by the reached
component decomposes the domain into the two basins; one-cell morphological
closing realizes the interior-of-closure regularization, and the basin
interface is the effectless cut, a closed curve crossing no flow line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from matplotlib.tri import LinearTriInterpolator, Triangulation
from scipy import ndimage

from . import fem
from .errors import DecompositionError, InvalidSeedError
from .geometry import DomainSpec, RobinPair

REACHED_INNER = "inner"
REACHED_OUTER = "outer"
CRITICAL = "critical"
BUDGET = "budget"


@dataclass(frozen=True)
class FlowOptions:
    eps_bd: float | None = None   # boundary capture distance (auto: half a layer)
    eps_crit: float = 1e-3        # |grad u| threshold relative to its maximum
    max_steps: int = 4000
    step_factor: float = 0.5      # spatial step as a fraction of the local edge


@dataclass
class FlowLine:
    seed: np.ndarray
    points: np.ndarray        # (k, 2) polyline
    u_values: np.ndarray      # interpolated u along the polyline
    termination: str
    location: np.ndarray      # final position


class FlowField:
    """Interpolated eigenfunction data used by the tracer."""

    def __init__(self, eigen: fem.EigenResult, mesh: fem.Mesh, domain: DomainSpec,
                 opts: FlowOptions = FlowOptions()):
        self.mesh = mesh
        self.domain = domain
        self.opts = opts
        tri = Triangulation(mesh.nodes[:, 0], mesh.nodes[:, 1], mesh.triangles)
        finder = tri.get_trifinder()
        self.interp_u = LinearTriInterpolator(tri, eigen.u, trifinder=finder)
        self.interp_gx = LinearTriInterpolator(tri, eigen.recovered_grad[:, 0], trifinder=finder)
        self.interp_gy = LinearTriInterpolator(tri, eigen.recovered_grad[:, 1], trifinder=finder)
        self.gmax = float(np.max(np.hypot(*eigen.recovered_grad.T)))
        # local spatial step: half the radial layer spacing at each ring
        rings = mesh.nodes.reshape(mesh.n_radial + 1, mesh.n_theta, 2)
        layer = np.hypot(*(rings[1:] - rings[:-1]).T.reshape(2, -1)).min()
        self.step = opts.step_factor * float(layer)
        self.eps_bd = opts.eps_bd if opts.eps_bd is not None else 0.75 * float(layer)

    def grad(self, pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        gx = np.ma.filled(self.interp_gx(pts[:, 0], pts[:, 1]), np.nan)
        gy = np.ma.filled(self.interp_gy(pts[:, 0], pts[:, 1]), np.nan)
        return np.stack([gx, gy], axis=1)

    def u(self, pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        return np.ma.filled(self.interp_u(pts[:, 0], pts[:, 1]), np.nan)

    def inner_margin(self, pts):
        """Approximate distance outside the inner curve (radius-function gap)."""
        return -self.domain.inner.signed_margin(pts)

    def outer_margin(self, pts):
        return self.domain.outer.signed_margin(pts)

def _rk4_step(field: FlowField, z, direction_sign, step_len):
    """One RK4 step of dz/dt = -sign * grad u with |dz| ~ step_len."""
    g1 = field.grad(z)
    speed = np.hypot(g1[:, 0], g1[:, 1])
    dt = step_len / np.maximum(speed, 1e-30)
    s = -direction_sign
    k1 = s * g1
    z2 = z + 0.5 * dt[:, None] * k1
    k2 = s * field.grad(z2)
    z3 = z + 0.5 * dt[:, None] * k2
    k3 = s * field.grad(z3)
    z4 = z + dt[:, None] * k3
    k4 = s * field.grad(z4)
    dz = dt[:, None] * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    bad = ~np.isfinite(dz).all(axis=1)
    if np.any(bad):
        dz[bad] = dt[bad, None] * k1[bad]   # Euler fallback near the mesh edge
        still = ~np.isfinite(dz).all(axis=1)
        dz[still] = 0.0
    return z + dz, speed


def _direction_sign(eigen: fem.EigenResult, mesh: fem.Mesh) -> float:
    """+1 integrates toward decreasing u (boundary-reaching for h > 0 regimes)."""
    interior = mesh.node_flags == fem.FLAG_INTERIOR
    u = eigen.u
    span = float(u.max() - u.min())
    if abs(eigen.lambda1) < 1e-7 and span < 1e-4:
        raise DecompositionError(
            "eigenfunction is constant (pure Neumann input has no flow)")
    return 1.0 if u[interior].max() >= u[~interior].max() else -1.0


def trace_flow(eigen: fem.EigenResult, mesh: fem.Mesh, domain: DomainSpec, seed,
               direction: str = "forward", opts: FlowOptions = FlowOptions()) -> FlowLine:
    """Trace a single flow line; 'forward' follows -grad u, 'backward' +grad u.

    Terminates on boundary capture (within eps_bd of a component), at
    near-critical points (|grad u| below eps_crit relative), or on budget.
    """
    seed = np.asarray(seed, dtype=float).reshape(2)
    field = FlowField(eigen, mesh, domain, opts)
    if field.inner_margin(seed[None])[0] < -field.eps_bd or \
            field.outer_margin(seed[None])[0] < -field.eps_bd:
        raise InvalidSeedError(f"seed {seed} lies outside the domain")
    sign = 1.0 if direction == "forward" else -1.0
    z = seed[None].copy()
    pts = [seed.copy()]
    uvals = [field.u(z)[0]]
    termination = BUDGET
    for _ in range(opts.max_steps):
        if field.inner_margin(z)[0] <= field.eps_bd:
            termination = REACHED_INNER
            break
        if field.outer_margin(z)[0] <= field.eps_bd:
            termination = REACHED_OUTER
            break
        g = field.grad(z)
        speed = float(np.hypot(g[0, 0], g[0, 1]))
        # threshold scaled by local |u|: localized eigenfunctions have tiny
        # gradients in narrow necks without being anywhere near critical
        if not math.isfinite(speed) or speed < opts.eps_crit * field.gmax * min(1.0, abs(uvals[-1])):
            termination = CRITICAL
            break
        # keep u strictly monotone along the line: shrink the step when a
        # trial move overshoots a critical set (u would change the wrong way)
        step_len = field.step
        u_old = uvals[-1]
        moved = False
        for _ in range(7):
            z_try, _ = _rk4_step(field, z, sign, step_len)
            u_new = field.u(z_try)[0]
            if math.isfinite(u_new) and sign * (u_old - u_new) >= 0.0:
                moved = True
                break
            step_len *= 0.5
        if not moved:
            termination = CRITICAL
            break
        z = z_try
        pts.append(z[0].copy())
        uvals.append(u_new)
    return FlowLine(seed=seed, points=np.array(pts), u_values=np.array(uvals),
                    termination=termination, location=z[0].copy())


@dataclass
class FlowDecomposition:
    xs: np.ndarray            # cell-center x coordinates
    ys: np.ndarray
    labels: np.ndarray        # (nx, ny): 0 outside, 1 inner basin, 2 outer, 3 unresolved
    in_mask: np.ndarray       # regularized basin masks (disjoint)
    out_mask: np.ndarray
    coverage: np.ndarray      # fraction of each cell inside the domain
    cut: list                 # list of (k, 2) closed polylines (interface of in_mask)
    area_in: float
    area_out: float
    unresolved_fraction: float
    tie_broken_cells: int

    @property
    def cell(self) -> float:
        return float(self.xs[1] - self.xs[0])

    def cut_segments(self) -> np.ndarray:
        segs = []
        for loop in self.cut:
            p, q = loop[:-1], loop[1:]
            segs.append(np.stack([p, q], axis=1))
        return np.concatenate(segs, axis=0) if segs else np.zeros((0, 2, 2))


def _cell_coverage(domain: DomainSpec, xs, ys, sub: int = 4):
    """Fraction of each grid cell inside the domain (subsampled on mixed cells)."""
    nx, ny = len(xs), len(ys)
    h = xs[1] - xs[0]
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    centers = np.stack([X.ravel(), Y.ravel()], axis=1)
    inside = domain.contains(centers).reshape(nx, ny)
    # mixed cells: any 4-neighborhood disagreement
    grown = ndimage.binary_dilation(inside) != ndimage.binary_erosion(inside)
    coverage = inside.astype(float)
    ii, jj = np.nonzero(grown)
    if len(ii):
        offs = (np.arange(sub) + 0.5) / sub - 0.5
        ox, oy = np.meshgrid(offs, offs, indexing="ij")
        px = xs[ii][:, None] + (ox.ravel() * h)[None, :]
        py = ys[jj][:, None] + (oy.ravel() * h)[None, :]
        pts = np.stack([px.ravel(), py.ravel()], axis=1)
        frac = domain.contains(pts).reshape(len(ii), sub * sub).mean(axis=1)
        coverage[ii, jj] = frac
    return coverage


def decompose(eigen: fem.EigenResult, mesh: fem.Mesh, domain: DomainSpec,
              grid_n: int = 256, opts: FlowOptions = FlowOptions()) -> FlowDecomposition:
    """Label a seed grid by flow destination and extract the effectless cut.

    The integration direction is chosen from the sign regime via the location
    of the eigenfunction extremum (always toward decreasing u for positive
    regimes, increasing for negative), so flow lines reach the boundary.
    """
    sign = _direction_sign(eigen, mesh)
    field = FlowField(eigen, mesh, domain, opts)
    lo, hi = domain.bounding_box(pad=0.0)
    span = float(np.max(hi - lo))
    h = span / grid_n
    xs = np.linspace(lo[0] + 0.5 * h, lo[0] + (grid_n - 0.5) * h, grid_n)
    ys = np.linspace(lo[1] + 0.5 * h, lo[1] + (grid_n - 0.5) * h, grid_n)
    coverage = _cell_coverage(domain, xs, ys)

    X, Y = np.meshgrid(xs, ys, indexing="ij")
    centers = np.stack([X.ravel(), Y.ravel()], axis=1)
    active_idx = np.nonzero(domain.contains(centers))[0]
    z = centers[active_idx].copy()
    state = np.zeros(len(active_idx), dtype=np.int8)   # 0 active, 1 in, 2 out, 3 unresolved

    alive = np.arange(len(active_idx))
    u_prev = field.u(z)
    strikes = np.zeros(len(active_idx), dtype=np.int8)
    for _ in range(opts.max_steps):
        if len(alive) == 0:
            break
        za = z[alive]
        m_in = field.inner_margin(za)
        m_out = field.outer_margin(za)
        g = field.grad(za)
        speed = np.hypot(g[:, 0], g[:, 1])
        thresh = opts.eps_crit * field.gmax * np.minimum(1.0, np.abs(u_prev[alive]))
        hit_in = m_in <= field.eps_bd
        hit_out = (~hit_in) & (m_out <= field.eps_bd)
        stalled = (~hit_in) & (~hit_out) & (~np.isfinite(speed) | (speed < thresh))
        state[alive[hit_in]] = 1
        state[alive[hit_out]] = 2
        state[alive[stalled]] = 3
        keep = ~(hit_in | hit_out | stalled)
        alive = alive[keep]
        if len(alive) == 0:
            break
        z_new, _ = _rk4_step(field, z[alive], sign, field.step)
        u_new = field.u(z_new)
        # revert wrong-way moves (ridge overshoot); three strikes -> critical
        ok = np.isfinite(u_new) & (sign * (u_prev[alive] - u_new) >= 0.0)
        z[alive[ok]] = z_new[ok]
        u_prev[alive[ok]] = u_new[ok]
        strikes[alive[ok]] = 0
        strikes[alive[~ok]] += 1
        struck = strikes[alive] >= 3
        state[alive[struck]] = 3
        alive = alive[~struck]
    state[state == 0] = 3   # budget-exhausted seeds count as unresolved

    labels = np.zeros((grid_n, grid_n), dtype=np.int8)
    labels.ravel()[active_idx] = state
    unresolved = float(np.mean(state == 3))
    if unresolved > 0.10:
        raise DecompositionError(
            f"{unresolved:.1%} of seeds unresolved; retune eps_crit or the step budget")

    struct = ndimage.generate_binary_structure(2, 1)
    domain_cells = labels > 0
    in_mask = ndimage.binary_closing(labels == 1, structure=struct) & domain_cells
    out_mask = ndimage.binary_closing(labels == 2, structure=struct) & domain_cells
    overlap = in_mask & out_mask
    # resolve closing overlaps by the original label, breaking ties toward the
    # inner basin; record how many cells were tie-broken
    keep_out = overlap & (labels == 2)
    in_mask &= ~keep_out
    out_mask &= ~(overlap & ~keep_out)
    tie_broken = int(np.sum(overlap & ~keep_out & (labels != 1)))
    # absorb leftover unresolved cells into the basin that surrounds them
    leftover = domain_cells & ~in_mask & ~out_mask
    if np.any(leftover):
        nearest_in = ndimage.binary_dilation(in_mask, structure=struct, iterations=2)
        in_mask |= leftover & nearest_in
        out_mask |= leftover & ~nearest_in

    cell_area = h * h
    area_in = float(np.sum(coverage[in_mask]) * cell_area)
    area_out = float(np.sum(coverage[out_mask]) * cell_area)
    cut = _mask_interface(in_mask, xs, ys, domain, field.eps_bd)
    return FlowDecomposition(xs, ys, labels, in_mask, out_mask, coverage, cut,
                             area_in, area_out, unresolved, tie_broken)


def _mask_interface(in_mask, xs, ys, domain: DomainSpec, eps_bd: float):
    """Closed polylines of the in-basin boundary lying inside the domain.

    Marching squares on the binary mask at level 0.5; segments hugging the
    domain boundary (the trivial part of the basin boundary) are discarded,
    leaving the interface between the basins.  Segments are chained into
    closed loops by endpoint matching.
    """
    from .parallels import BackgroundField, _level_segments

    field = BackgroundField(np.asarray(xs), np.asarray(ys),
                            in_mask.astype(float), np.ones_like(in_mask, dtype=bool))
    segs = _level_segments(field, 0.5)
    if len(segs) == 0:
        return []
    h = float(xs[1] - xs[0])
    mid = 0.5 * (segs[:, 0, :] + segs[:, 1, :])
    keep = (-domain.inner.signed_margin(mid) > eps_bd + h) & \
           (domain.outer.signed_margin(mid) > eps_bd + h)
    return _chain_segments(segs[keep], tol=1e-9 * max(1.0, h))


def _chain_segments(segs, tol):
    """Link segments sharing endpoints into polylines (closed where possible)."""
    if len(segs) == 0:
        return []
    key = lambda p: (round(p[0] / tol), round(p[1] / tol))
    adj = {}
    for i, (p, q) in enumerate(segs):
        adj.setdefault(key(p), []).append((i, 0))
        adj.setdefault(key(q), []).append((i, 1))
    used = np.zeros(len(segs), dtype=bool)
    loops = []
    for start in range(len(segs)):
        if used[start]:
            continue
        used[start] = True
        chain = [segs[start][0], segs[start][1]]
        # extend forward from the tail until the loop closes or dead-ends
        for _ in range(2 * len(segs)):
            tail = chain[-1]
            candidates = [(i, e) for i, e in adj.get(key(tail), []) if not used[i]]
            if not candidates:
                break
            i, e = candidates[0]
            used[i] = True
            chain.append(segs[i][1 - e])
            if key(chain[-1]) == key(chain[0]):
                break
        loops.append(np.array(chain))
    loops.sort(key=lambda c: -len(c))
    return loops


def cut_neumann_residual(eigen: fem.EigenResult, mesh: fem.Mesh,
                         decomposition_or_segments) -> float:
    """L2 average of the normal derivative of u across the cut, relative to max |grad u|."""
    if isinstance(decomposition_or_segments, FlowDecomposition):
        segs = decomposition_or_segments.cut_segments()
    else:
        segs = np.asarray(decomposition_or_segments)
    if len(segs) == 0:
        return math.nan
    tri = Triangulation(mesh.nodes[:, 0], mesh.nodes[:, 1], mesh.triangles)
    finder = tri.get_trifinder()
    gx = LinearTriInterpolator(tri, eigen.recovered_grad[:, 0], trifinder=finder)
    gy = LinearTriInterpolator(tri, eigen.recovered_grad[:, 1], trifinder=finder)
    p, q = segs[:, 0, :], segs[:, 1, :]
    mid = 0.5 * (p + q)
    tangent = q - p
    lengths = np.hypot(tangent[:, 0], tangent[:, 1])
    ok = lengths > 0
    normal = np.stack([-tangent[:, 1], tangent[:, 0]], axis=1)[ok] / lengths[ok, None]
    gxv = np.ma.filled(gx(mid[ok, 0], mid[ok, 1]), np.nan)
    gyv = np.ma.filled(gy(mid[ok, 0], mid[ok, 1]), np.nan)
    dn = gxv * normal[:, 0] + gyv * normal[:, 1]
    valid = np.isfinite(dn)
    w = lengths[ok][valid]
    gmax = float(np.max(np.hypot(*eigen.recovered_grad.T)))
    return float(math.sqrt(np.sum(dn[valid] ** 2 * w) / np.sum(w)) / gmax)


def _triangle_mask_fraction(mesh: fem.Mesh, mask, xs, ys):
    """Fraction of each triangle covered by mask cells (barycentric sampling)."""
    bary = []
    n_sub = 3
    for i in range(n_sub + 1):
        for j in range(n_sub + 1 - i):
            k = n_sub - i - j
            bary.append(((i + 1 / 3) / (n_sub + 1), (j + 1 / 3) / (n_sub + 1), (k + 1 / 3) / (n_sub + 1)))
    bary = np.array(bary)
    bary /= bary.sum(axis=1, keepdims=True)
    p = mesh.nodes[mesh.triangles]          # (m, 3, 2)
    samples = np.einsum("sk,mkd->msd", bary, p)
    h = xs[1] - xs[0]
    ix = np.clip(((samples[:, :, 0] - xs[0]) / h + 0.5).astype(int), 0, len(xs) - 1)
    iy = np.clip(((samples[:, :, 1] - ys[0]) / h + 0.5).astype(int), 0, len(ys) - 1)
    return mask[ix, iy].mean(axis=1)


def restricted_rayleigh(eigen: fem.EigenResult, mesh: fem.Mesh,
                        decomposition: FlowDecomposition, side: str,
                        robin: RobinPair) -> float:
    """Rayleigh quotient of u restricted to one basin (natural Neumann on the cut).

    Triangle integrals are weighted by the basin-mask coverage fraction; the
    boundary term uses the Robin parameter of the matching component only.
    """
    mask = decomposition.in_mask if side == "in" else decomposition.out_mask
    if not np.any(mask):
        raise DecompositionError(f"empty {side} basin")
    frac = _triangle_mask_fraction(mesh, mask, decomposition.xs, decomposition.ys)
    areas, b, c = fem.triangle_geometry(mesh.nodes, mesh.triangles)
    ut = eigen.u[mesh.triangles]
    grad2 = (np.sum(ut * b, axis=1) ** 2 + np.sum(ut * c, axis=1) ** 2) / (4.0 * areas ** 2)
    num = float(np.sum(frac * grad2 * areas))
    mass = areas / 12.0 * ((ut.sum(axis=1)) ** 2 + (ut ** 2).sum(axis=1))
    den = float(np.sum(frac * mass))
    h = robin.h_in if side == "in" else robin.h_out
    if not math.isinf(h) and h != 0.0:
        edges = mesh.inner_edges if side == "in" else mesh.outer_edges
        pe = mesh.nodes[edges]
        lengths = np.hypot(*(pe[:, 1] - pe[:, 0]).T)
        ue = eigen.u[edges]
        num += h * float(np.sum(lengths / 6.0 * (ue[:, 0] ** 2 + ue[:, 1] ** 2 + ue[:, 0] * ue[:, 1]) * 2.0))
    if den <= 0.0:
        raise DecompositionError(f"{side} basin has zero mass")
    return num / den


def matched_interface_radii(decomposition: FlowDecomposition, domain: DomainSpec):
    """(sigma1, sigma2): interface radii of the annuli matched to each basin."""
    from .geometry import perimeter
    r = perimeter(domain.inner) / (2.0 * math.pi)
    R = perimeter(domain.outer) / (2.0 * math.pi)
    sigma1 = math.sqrt(r * r + decomposition.area_in / math.pi)
    sigma2 = math.sqrt(max(R * R - decomposition.area_out / math.pi, 0.0))
    return sigma1, sigma2
