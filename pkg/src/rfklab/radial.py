"""First eigenvalue of the radial annulus problem by shooting.

Solves -(t v')' = lam t v on (r, R) with Robin conditions -v'(r) + h_in v(r) = 0
and v'(R) + h_out v(R) = 0 (Dirichlet when the parameter is +inf).  The
smallest eigenvalue is located as the first root of the outer boundary
residual whose shooting solution has no interior zero; nodelessness is the
first-eigenfunction certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ._shooting import rk4_batch, rk4_trajectory
from .errors import NoEigenvalueError, ShootingOverflowError, StructureViolationError
from .geometry import RobinPair, robin_sign


@dataclass(frozen=True)
class RadialProblem:
    """Annulus (r, R) with Robin parameters; r = 0 is the disk limit."""

    r: float
    R: float
    h_in: float
    h_out: float

    def __post_init__(self):
        if not 0.0 <= self.r < self.R:
            raise ValueError(f"need 0 <= r < R, got r={self.r}, R={self.R}")
        for h in (self.h_in, self.h_out):
            if math.isnan(h) or h == -math.inf:
                raise ValueError(f"robin parameter must be finite or +inf, got {h}")

    @property
    def robin(self) -> RobinPair:
        return RobinPair(self.h_in, self.h_out)


@dataclass
class RadialEigen:
    """Radial eigenpair: grid on [r, R], v normalized to max 1, and v'."""

    lambda1: float
    grid: np.ndarray
    v: np.ndarray
    vprime: np.ndarray
    sigma: float | None = None


@dataclass(frozen=True)
class SolverOptions:
    steps: int = 4096             # RK4 steps over (r, R)
    n_scan: int = 96              # lambda samples in the bracketing scan
    rtol: float = 1e-10           # bisection width: rtol * max(1, |lambda|)
    max_expand: int = 8           # centered window expansions (factor 4 each)
    window: tuple | None = None   # optional (lo, hi) scan window override
    eps_axis: float = 1e-8        # integration start for the disk limit r = 0
    n_section: int = 14           # interior points per multisection round


DEFAULT_OPTS = SolverOptions()


def _launch(problem: RadialProblem, eps_axis: float):
    """Integration start point and initial (v, w = t v') for the inner condition."""
    if problem.r == 0.0:
        return eps_axis, 1.0, 0.0
    if math.isinf(problem.h_in):
        return problem.r, 0.0, problem.r
    return problem.r, 1.0, problem.r * problem.h_in


def _residual(problem: RadialProblem, v_end, w_end):
    if math.isinf(problem.h_out):
        return v_end
    return w_end / problem.R + problem.h_out * v_end


def _default_window(problem: RadialProblem):
    finite = [abs(h) for h in (problem.h_in, problem.h_out) if math.isfinite(h)]
    if problem.r == 0.0:
        finite = [abs(problem.h_out)] if math.isfinite(problem.h_out) else []
    hmax = max(finite, default=0.0)
    width = problem.R - (problem.r if problem.r > 0.0 else 0.0)
    return -4.0 * (hmax + 1.0) ** 2, 16.0 * (math.pi / width) ** 2


def _shoot(problem, lams, opts, steps):
    a, v0, w0 = _launch(problem, opts.eps_axis)
    v, w, nodes = rk4_batch(np.ascontiguousarray(lams, dtype=float), a, problem.R, v0, w0, steps)
    return _residual(problem, v, w), nodes


def _first_bracket(lams, F, nodes):
    finite = np.isfinite(F)
    for i in range(len(lams) - 1):
        if finite[i] and finite[i + 1] and F[i] * F[i + 1] < 0.0 and nodes[i] == 0:
            return i
    return None


def lambda1_radial(problem: RadialProblem, opts: SolverOptions = DEFAULT_OPTS) -> RadialEigen:
    """Smallest eigenvalue and positive eigenfunction of the radial problem."""
    steps = opts.steps
    lo, hi = opts.window if opts.window is not None else _default_window(problem)
    bracket = None
    overflow_seen = False
    halved = False
    for _ in range(opts.max_expand + 1):
        lams = np.linspace(lo, hi, opts.n_scan)
        F, nodes = _shoot(problem, lams, opts, steps)
        if not np.all(np.isfinite(F)):
            overflow_seen = True
            if not halved:
                halved = True
                steps *= 2
                F, nodes = _shoot(problem, lams, opts, steps)
        i = _first_bracket(lams, F, nodes)
        if i is not None:
            bracket = (lams[i], lams[i + 1], F[i])
            break
        center = 0.5 * (lo + hi)
        lo = center - 4.0 * (center - lo)
        hi = center + 4.0 * (hi - center)
    if bracket is None:
        if overflow_seen:
            raise ShootingOverflowError(
                f"non-finite shooting values for {problem} persisted after step halving")
        raise NoEigenvalueError(f"no eigenvalue bracket for {problem} within expansion budget")

    lam_lo, lam_hi, f_lo = bracket
    while lam_hi - lam_lo > opts.rtol * max(1.0, abs(lam_lo), abs(lam_hi)):
        mids = np.linspace(lam_lo, lam_hi, opts.n_section + 2)[1:-1]
        Fm, _ = _shoot(problem, mids, opts, steps)
        if not np.all(np.isfinite(Fm)):
            if halved:
                raise ShootingOverflowError(f"non-finite shooting values for {problem}")
            halved = True
            steps *= 2
            continue
        edges = np.concatenate(([lam_lo], mids, [lam_hi]))
        vals = np.concatenate(([f_lo], Fm))
        moved = False
        for i in range(len(Fm)):
            if vals[i] * Fm[i] < 0.0:
                lam_lo, lam_hi, f_lo = edges[i], edges[i + 1], vals[i]
                moved = True
                break
        if not moved:
            lam_lo, f_lo = edges[len(Fm)], Fm[-1]
    lam1 = 0.5 * (lam_lo + lam_hi)

    a, v0, w0 = _launch(problem, opts.eps_axis)
    ts, vs, ws = rk4_trajectory(lam1, a, problem.R, v0, w0, steps)
    if not (np.all(np.isfinite(vs)) and np.all(np.isfinite(ws))):
        raise ShootingOverflowError(f"non-finite eigenfunction trajectory for {problem}")
    interior = vs[1:-1]
    if np.any(interior > 0.0) and np.any(interior < 0.0):
        raise StructureViolationError("converged shooting solution is not nodeless")
    sign = 1.0 if interior[len(interior) // 2] >= 0.0 else -1.0
    scale = sign / np.max(sign * vs)
    return RadialEigen(lambda1=float(lam1), grid=ts, v=vs * scale, vprime=ws * scale / ts)


def _hermite_root(t0, t1, w0, w1, d0, d1):
    """Root of the cubic Hermite interpolant on [t0, t1]; assumes w0*w1 < 0."""
    h = t1 - t0

    def val(t):
        s = (t - t0) / h
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return h00 * w0 + h10 * h * d0 + h01 * w1 + h11 * h * d1

    a_, b_ = t0, t1
    fa = w0
    for _ in range(80):
        m = 0.5 * (a_ + b_)
        fm = val(m)
        if fa * fm <= 0.0:
            b_ = m
        else:
            a_, fa = m, fm
    return 0.5 * (a_ + b_)


def sigma_of(eigen: RadialEigen, problem: RadialProblem) -> float:
    """Unique interior radius where v' vanishes (Robin-Robin regimes only)."""
    if problem.robin.product_sign <= 0:
        raise ValueError("sigma is defined only for h_in * h_out > 0")
    t, v, w = eigen.grid, eigen.v, eigen.vprime * eigen.grid
    crossings = np.nonzero(w[:-1] * w[1:] < 0.0)[0]
    if len(crossings) != 1:
        raise StructureViolationError(
            f"v' has {len(crossings)} sign changes, expected exactly 1")
    i = crossings[0]
    # w' = -lam t v exactly on solutions, giving a cubic Hermite root refinement
    lam = eigen.lambda1
    return _hermite_root(t[i], t[i + 1], w[i], w[i + 1],
                         -lam * t[i] * v[i], -lam * t[i + 1] * v[i + 1])


def monotonicity_scan(r: float, R: float, h: float, side: str = "inner",
                      n_samples: int = 16, opts: SolverOptions = DEFAULT_OPTS):
    """lambda1 of the one-Robin-one-Neumann annulus family over a delta grid.

    side='inner': Robin h on the inner circle, Neumann outer, scanning the
    outer radius delta in (r, R).  side='outer': Neumann inner, Robin h on the
    outer circle, scanning the inner radius delta.  Monotonicity in delta is
    asserted by the caller.
    """
    if h == 0.0:
        raise ValueError("the scanned family needs a nonzero Robin parameter")
    if side not in ("inner", "outer"):
        raise ValueError(f"side must be 'inner' or 'outer', got {side!r}")
    deltas = np.linspace(r, R, n_samples + 2)[1:-1]
    lams = np.empty(n_samples)
    hint = None
    for j, d in enumerate(deltas):
        problem = RadialProblem(r, d, h, 0.0) if side == "inner" else RadialProblem(d, R, 0.0, h)
        o = replace(opts, window=hint)
        try:
            lams[j] = lambda1_radial(problem, o).lambda1
        except NoEigenvalueError:
            lams[j] = lambda1_radial(problem, replace(opts, window=None)).lambda1
        spread = max(2.0, abs(lams[j]))
        hint = (lams[j] - spread, lams[j] + spread)
    return deltas, lams


def minimax_crossing(r: float, R: float, h_in: float, h_out: float,
                     opts: SolverOptions = DEFAULT_OPTS, delta_tol: float = 1e-10):
    """Crossing of the two split-annulus eigenvalue curves.

    Returns (delta_star, lam_minimax, lam_maximin) where the optima run over
    delta of max/min of {lambda1_RN(r, delta), lambda1_NR(delta, R)}.  Both
    optima are attained at the unique crossing of the two strictly monotone
    curves.
    """
    if RobinPair(h_in, h_out).product_sign <= 0:
        raise ValueError("minimax characterization requires h_in * h_out > 0")
    tight = replace(opts, rtol=min(opts.rtol, 1e-12))

    cache = {}

    def f(delta):
        if delta not in cache:
            rn = lambda1_radial(RadialProblem(r, delta, h_in, 0.0), tight).lambda1
            nr = lambda1_radial(RadialProblem(delta, R, 0.0, h_out), tight).lambda1
            cache[delta] = (rn, nr)
        rn, nr = cache[delta]
        return rn - nr

    margin = 0.02
    for _ in range(5):
        lo = r + margin * (R - r)
        hi = R - margin * (R - r)
        if f(lo) * f(hi) < 0.0:
            break
        margin /= 5.0
    else:
        raise StructureViolationError("split-annulus eigenvalue curves fail to cross")

    flo = f(lo)
    while hi - lo > delta_tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if flo * fm <= 0.0:
            hi = mid
        else:
            lo, flo = mid, fm
    delta_star = 0.5 * (lo + hi)
    rn, nr = cache.get(lo) or cache.get(hi)
    rn_s = lambda1_radial(RadialProblem(r, delta_star, h_in, 0.0), tight).lambda1
    nr_s = lambda1_radial(RadialProblem(delta_star, R, 0.0, h_out), tight).lambda1
    return float(delta_star), float(max(rn_s, nr_s)), float(min(rn_s, nr_s))


def boundary_residuals(eigen: RadialEigen, problem: RadialProblem):
    """(inner, outer) boundary-condition residuals of the computed eigenpair."""
    v, vp = eigen.v, eigen.vprime
    if problem.r == 0.0:
        inner = abs(vp[0])
    elif math.isinf(problem.h_in):
        inner = abs(v[0])
    else:
        inner = abs(-vp[0] + problem.h_in * v[0])
    if math.isinf(problem.h_out):
        outer = abs(v[-1])
    else:
        outer = abs(vp[-1] + problem.h_out * v[-1])
    return inner, outer


def dirichlet_energy(eigen: RadialEigen) -> float:
    """2 pi * integral of t v'(t)^2 over the radial grid."""
    return 2.0 * math.pi * float(np.trapezoid(eigen.grid * eigen.vprime ** 2, eigen.grid))


def l2_mass(eigen: RadialEigen) -> float:
    """2 pi * integral of t v(t)^2, the squared L2 norm on the annulus."""
    return 2.0 * math.pi * float(np.trapezoid(eigen.grid * eigen.v ** 2, eigen.grid))
