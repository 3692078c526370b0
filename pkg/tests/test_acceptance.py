"""Acceptance suite: one test per exit criterion, each printing a verdict line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
pass/fail lines.  Tolerances are fixed here, not tuned at run time.
"""

import math
import time

import numpy as np
import pytest

from rfklab import fem, flow, harness, parallels as par
from rfklab.geometry import DomainSpec, RobinPair, area, match_annulus
from rfklab.radial import (
    RadialProblem,
    lambda1_radial,
    minimax_crossing,
    monotonicity_scan,
    sigma_of,
)

from oracles import fd_lambda1

INF = math.inf

CROSS_VALIDATION_REGIMES = [
    (1.0, 1.0), (-1.0, -1.0), (INF, INF), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0),
    (0.0, -1.0), (INF, 0.0), (0.0, INF), (INF, 1.0), (1.0, INF),
]


def _verdict(name, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def test_criterion_1_radial_fem_cross_validation(annulus12):
    t0 = time.perf_counter()
    mesh = fem.build_mesh(annulus12, 128, 32)
    mesh_fine = fem.build_mesh(annulus12, 256, 64)
    worst = 0.0
    improving = True
    for pair in CROSS_VALIDATION_REGIMES:
        robin = RobinPair(*pair)
        ref = lambda1_radial(RadialProblem(1.0, 2.0, *pair)).lambda1
        denom = abs(ref) if ref != 0.0 else 1e-3
        err = abs(fem.solve(mesh, robin).lambda1 - ref) / denom
        err_fine = abs(fem.solve(mesh_fine, robin).lambda1 - ref) / denom
        worst = max(worst, err)
        improving &= err_fine < err
        assert err < 1e-2, f"{pair}: rel err {err:.2e}"
    elapsed = time.perf_counter() - t0
    _verdict("criterion 1 (radial/FEM cross-validation)",
             worst < 1e-2 and improving and elapsed < 60.0,
             f"11 regimes, worst rel err {worst:.2e}, refinement improves: {improving}, "
             f"{elapsed:.1f} s")


def test_criterion_2_disk_limit():
    oracle = fd_lambda1(0.0, 1.0, 0.0, INF, n=100_000)
    got = lambda1_radial(RadialProblem(0.0, 1.0, 0.0, INF)).lambda1
    rel = abs(got - oracle) / oracle
    _verdict("criterion 2 (disk Dirichlet limit)", rel < 1e-4,
             f"shooting {got:.6f} vs finite-difference oracle {oracle:.6f} "
             f"(~5.78319), rel {rel:.2e}")


def test_criterion_3_sign_dichotomy():
    grid = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0]
    violations = 0
    checked = 0
    for h_in in grid:
        for h_out in grid:
            if h_in * h_out < 0.0 or (h_in, h_out) == (0.0, 0.0):
                continue
            lam = lambda1_radial(RadialProblem(1.0, 2.0, h_in, h_out)).lambda1
            checked += 1
            if h_in >= 0.0 and h_out >= 0.0 and not lam > 0.0:
                violations += 1
            if h_in <= 0.0 and h_out <= 0.0 and not lam < 0.0:
                violations += 1
    _verdict("criterion 3 (sign dichotomy)", violations == 0,
             f"{checked} admissible pairs on the 7x7 grid, {violations} violations")


def test_criterion_4_domain_monotonicity():
    violations = 0
    for h in (0.5, -0.5, 2.0, -2.0):
        _, inner = monotonicity_scan(1.0, 2.0, h, "inner", 16)
        _, outer = monotonicity_scan(1.0, 2.0, h, "outer", 16)
        # h_in > 0: decreasing; h_in < 0: increasing
        if not np.all(np.sign(np.diff(inner)) == -np.sign(h)):
            violations += 1
        # h_out > 0: increasing; h_out < 0: decreasing
        if not np.all(np.sign(np.diff(outer)) == np.sign(h)):
            violations += 1
    _verdict("criterion 4 (domain monotonicity)", violations == 0,
             f"16-point scans for h in {{+-0.5, +-2}}, {violations} violations")


def test_criterion_5_minimax_characterization():
    worst_gap = 0.0
    worst_rel = 0.0
    worst_sigma = 0.0
    for pair in [(1.0, 1.0), (-1.0, -1.0), (INF, INF)]:
        p = RadialProblem(1.0, 2.0, *pair)
        eig = lambda1_radial(p)
        sigma = sigma_of(eig, p)
        d_star, mm, mM = minimax_crossing(1.0, 2.0, *pair)
        worst_gap = max(worst_gap, abs(mm - mM))
        worst_rel = max(worst_rel, abs(mm - eig.lambda1) / abs(eig.lambda1),
                        abs(mM - eig.lambda1) / abs(eig.lambda1))
        worst_sigma = max(worst_sigma, abs(d_star - sigma))
    ok = worst_gap < 1e-8 and worst_rel < 1e-6 and worst_sigma < 1e-6
    _verdict("criterion 5 (minimax characterization)", ok,
             f"|minimax-maximin| {worst_gap:.2e}, rel to lambda_RR {worst_rel:.2e}, "
             f"|delta*-sigma| {worst_sigma:.2e}")


def _criterion_domains_one_sided():
    domains = []
    for i, off in enumerate(np.linspace(0.04, 0.31, 10)):
        domains.append((f"ecc_{i}", DomainSpec.annulus(1.0, 2.0, offset=(float(off), 0.0))))
    rng = np.random.default_rng(2024)
    fam = {"kind": "fourier", "count": 10, "amplitude": 0.07, "modes": [2, 3, 5],
           "base_inner": 1.0, "base_outer": 2.0, "robin": []}
    domains += harness.build_family(fam, rng)
    return domains


def test_criterion_6_one_sided_rfk_with_sandwich():
    t0 = time.perf_counter()
    config = harness.ExperimentConfig(families=[], n_theta=128, n_radial=24,
                                      profile_grid=1024, n_delta=256,
                                      flow_checks=False)
    regimes = [(1.0, 0.0), (-1.0, 0.0), (INF, 0.0), (0.0, 1.0), (0.0, -1.0), (0.0, INF)]
    domains = _criterion_domains_one_sided()
    lemmas = []
    cache = {}
    n_fail = 0
    n_rows = 0
    for pair in regimes:
        for domain_id, domain in domains:
            row = harness.evaluate_row(domain_id, domain, RobinPair(*pair),
                                       config, lemmas, cache)
            n_rows += 1
            if row.status == "FAIL":
                n_fail += 1
                print("  FAIL row:", row)
    sandwich_fail = sum(1 for l in lemmas if l.check.startswith("sandwich") and not l.passed)
    elapsed = time.perf_counter() - t0
    ok = n_fail == 0 and sandwich_fail == 0 and elapsed < 900.0
    _verdict("criterion 6 (one-sided RFK + sandwich)", ok,
             f"{n_rows} rows over 20 domains x 6 regimes, {n_fail} persistent FAILs, "
             f"{sandwich_fail} sandwich violations, {elapsed:.0f} s (< 900)")


def test_criterion_7_robin_robin_rfk():
    config = harness.ExperimentConfig(families=[], n_theta=128, n_radial=24,
                                      sandwich_checks=False, flow_checks=False)
    rng = np.random.default_rng(7)
    spec = {"inner_amplitude": 0.12, "inner_mode": 3, "outer_mode": 5, "amp_max": 0.4}
    domains = [(f"deficit_{i}", harness.generate_deficit_matched(spec, rng))
               for i in range(10)]
    regimes = [(1.0, 1.0), (-1.0, -1.0), (INF, INF), (INF, 1.0), (1.0, INF)]
    lemmas = []
    cache = {}
    n_fail = 0
    margins = []
    for pair in regimes:
        for domain_id, domain in domains:
            row = harness.evaluate_row(domain_id, domain, RobinPair(*pair),
                                       config, lemmas, cache)
            margins.append(row.margin)
            if row.status == "FAIL":
                n_fail += 1
                print("  FAIL row:", row)
    _verdict("criterion 7 (Robin-Robin RFK on deficit-matched domains)", n_fail == 0,
             f"{len(margins)} rows over 10 domains x 5 regimes, {n_fail} persistent FAILs, "
             f"min margin {min(margins):+.3e}")


def test_criterion_8_flow_decomposition(annulus12, mesh_annulus_128, eig_annulus_11,
                                        eccentric025):
    p = RadialProblem(1.0, 2.0, 1.0, 1.0)
    sigma = sigma_of(lambda1_radial(p), p)
    dec = flow.decompose(eig_annulus_11, mesh_annulus_128, annulus12, grid_n=256)
    pts = np.concatenate(dec.cut)
    hausdorff = float(np.max(np.abs(np.hypot(pts[:, 0], pts[:, 1]) - sigma)))
    cut_ok = hausdorff <= 2.0 * dec.cell
    om = area(annulus12)
    sum_ok = abs(dec.area_in + dec.area_out - om) / om <= 0.02
    lam = eig_annulus_11.lambda1
    rq_ok = all(
        abs(flow.restricted_rayleigh(eig_annulus_11, mesh_annulus_128, dec, side,
                                     RobinPair(1.0, 1.0)) - lam) / abs(lam) <= 0.02
        for side in ("in", "out"))

    mesh_e = fem.build_mesh(eccentric025, 128, 24)
    eig_e = fem.solve(mesh_e, RobinPair(INF, INF))
    dec_e = flow.decompose(eig_e, mesh_e, eccentric025, grid_n=256)
    rq_e_ok = all(
        abs(flow.restricted_rayleigh(eig_e, mesh_e, dec_e, side, RobinPair(INF, INF))
            - eig_e.lambda1) / eig_e.lambda1 <= 0.03
        for side in ("in", "out"))
    ok = cut_ok and sum_ok and rq_ok and rq_e_ok
    _verdict("criterion 8 (flow decomposition)", ok,
             f"cut-to-sigma Hausdorff {hausdorff:.4f} (<= {2*dec.cell:.4f}), "
             f"area sum ok: {sum_ok}, restricted quotients ok: {rq_ok}, "
             f"eccentric DD ok: {rq_e_ok}")


def test_criterion_9_parallels_machinery(annulus12):
    prof = par.level_lengths(annulus12, "inner")
    live = prof.delta > 0.0
    expected = 2.0 * math.pi * (1.0 + prof.delta[live])
    s_rel = float(np.max(np.abs(prof.s[live] - expected) / expected))
    s_ok = s_rel < 0.005

    nagy_ok = True
    swept_ok = abs(prof.swept_area() - area(annulus12)) / area(annulus12) <= 0.01
    rng = np.random.default_rng(5)
    generated = [
        DomainSpec.annulus(1.0, 2.0, offset=(0.25, 0.0)),
        harness.build_family({"kind": "fourier", "count": 1, "amplitude": 0.08,
                              "modes": [2, 3, 5], "robin": []}, rng)[0][1],
        harness.generate_deficit_matched(
            {"inner_amplitude": 0.12, "inner_mode": 3, "outer_mode": 5, "amp_max": 0.4}, rng),
    ]
    for dom in generated:
        for side in ("inner", "outer"):
            p = par.level_lengths(dom, side, grid_n=768, n_delta=192)
            tol = 0.005 * 2.0 * math.pi * max(p.r, p.R)
            nagy_ok &= bool(np.max(p.s - p.S) <= tol)
            swept_ok &= abs(p.swept_area() - area(dom)) / area(dom) <= 0.01
    ok = s_ok and nagy_ok and swept_ok
    _verdict("criterion 9 (parallels machinery)", ok,
             f"annulus s(delta) max rel err {s_rel:.2e} (< 5e-3), Nagy bound ok: {nagy_ok}, "
             f"swept area within 1%: {swept_ok}")
