import math

import numpy as np
import pytest

from rfklab import fem, flow
from rfklab.geometry import DomainSpec, RobinPair, area
from rfklab.radial import RadialProblem, lambda1_radial, sigma_of

INF = math.inf


@pytest.fixture(scope="module")
def annulus_sigma():
    p = RadialProblem(1.0, 2.0, 1.0, 1.0)
    return sigma_of(lambda1_radial(p), p)


@pytest.fixture(scope="module")
def annulus_decomp(annulus12, mesh_annulus_128, eig_annulus_11):
    return flow.decompose(eig_annulus_11, mesh_annulus_128, annulus12, grid_n=256)


@pytest.fixture(scope="module")
def ecc_dd(eccentric025):
    mesh = fem.build_mesh(eccentric025, 128, 24)
    eig = fem.solve(mesh, RobinPair(INF, INF))
    dec = flow.decompose(eig, mesh, eccentric025, grid_n=256)
    return mesh, eig, dec


class TestTraceFlow:
    def test_downhill_from_inner_region(self, annulus12, mesh_annulus_128, eig_annulus_11):
        # between the hole and the critical circle, decreasing u leads inward
        line = flow.trace_flow(eig_annulus_11, mesh_annulus_128, annulus12, (1.2, 0.0))
        assert line.termination == flow.REACHED_INNER
        span = line.u_values.max() - line.u_values.min()
        assert np.all(np.diff(line.u_values) <= 1e-6 * span)

    def test_uphill_stalls_at_critical_circle(self, annulus12, mesh_annulus_128,
                                              eig_annulus_11, annulus_sigma):
        line = flow.trace_flow(eig_annulus_11, mesh_annulus_128, annulus12,
                               (1.2, 0.0), direction="backward")
        assert line.termination == flow.CRITICAL
        assert abs(np.hypot(*line.location) - annulus_sigma) < 0.05
        span = line.u_values.max() - line.u_values.min()
        assert np.all(np.diff(line.u_values) >= -1e-6 * span)

    def test_seed_on_critical_circle(self, annulus12, mesh_annulus_128,
                                     eig_annulus_11, annulus_sigma):
        line = flow.trace_flow(eig_annulus_11, mesh_annulus_128, annulus12,
                               (annulus_sigma, 0.0), direction="backward")
        assert line.termination == flow.CRITICAL
        assert len(line.points) <= 3

    def test_dd_seeds_near_each_boundary(self, eccentric025, ecc_dd):
        mesh, eig, _ = ecc_dd
        near_inner = flow.trace_flow(eig, mesh, eccentric025, (1.37, 0.0))
        near_outer = flow.trace_flow(eig, mesh, eccentric025, (-1.9, 0.0))
        assert near_inner.termination == flow.REACHED_INNER
        assert near_outer.termination == flow.REACHED_OUTER

    def test_lines_stay_in_domain(self, eccentric025, ecc_dd):
        mesh, eig, _ = ecc_dd
        line = flow.trace_flow(eig, mesh, eccentric025, (0.0, 1.6))
        margin_in = -eccentric025.inner.signed_margin(line.points)
        margin_out = eccentric025.outer.signed_margin(line.points)
        field_eps = flow.FlowField(eig, mesh, eccentric025).eps_bd
        assert np.all(margin_in > -field_eps) and np.all(margin_out > -field_eps)

    def test_invalid_seed(self, annulus12, mesh_annulus_128, eig_annulus_11):
        from rfklab.errors import InvalidSeedError
        with pytest.raises(InvalidSeedError):
            flow.trace_flow(eig_annulus_11, mesh_annulus_128, annulus12, (0.1, 0.0))


class TestDecompose:
    def test_cut_near_sigma_circle(self, annulus_decomp, annulus_sigma):
        assert len(annulus_decomp.cut) >= 1
        pts = np.concatenate(annulus_decomp.cut)
        radii = np.hypot(pts[:, 0], pts[:, 1])
        # two background cells of Hausdorff tolerance in both directions
        assert np.max(np.abs(radii - annulus_sigma)) <= 2.0 * annulus_decomp.cell

    def test_basin_areas(self, annulus12, annulus_decomp, annulus_sigma):
        om = area(annulus12)
        assert annulus_decomp.area_in + annulus_decomp.area_out == pytest.approx(om, rel=0.02)
        assert annulus_decomp.area_in == pytest.approx(
            math.pi * (annulus_sigma ** 2 - 1.0), rel=0.02)

    def test_masks_disjoint_and_hug_boundaries(self, annulus_decomp):
        dec = annulus_decomp
        assert not np.any(dec.in_mask & dec.out_mask)
        X, Y = np.meshgrid(dec.xs, dec.ys, indexing="ij")
        radii = np.hypot(X, Y)
        near_inner = (dec.labels > 0) & (radii < 1.0 + 2.0 * dec.cell) & (radii > 1.0)
        near_outer = (dec.labels > 0) & (radii > 2.0 - 2.0 * dec.cell) & (radii < 2.0)
        assert np.all(dec.in_mask[near_inner])
        assert not np.any(dec.in_mask[near_outer])
        assert np.all(dec.out_mask[near_outer])

    def test_openness_proxy(self, annulus_decomp):
        # labeled cells agree with their 4-neighbors except along the interface
        lab = annulus_decomp.labels
        inn = lab == 1
        out = lab == 2
        mixed = np.zeros_like(inn)
        for shift in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            mixed |= inn & np.roll(out, shift, axis=(0, 1))
        interface_cells = int(np.sum(mixed))
        # the interface band should scale like its length over the cell size
        expected = 2.0 * math.pi * 1.43 / annulus_decomp.cell
        assert interface_cells <= 3.0 * expected

    def test_unresolved_fraction_small(self, annulus_decomp, ecc_dd):
        assert annulus_decomp.unresolved_fraction <= 0.02
        assert ecc_dd[2].unresolved_fraction <= 0.02

    def test_pure_neumann_rejected(self, annulus12, mesh_annulus_128):
        from rfklab.errors import DecompositionError
        eig = fem.solve(mesh_annulus_128, RobinPair(0.0, 0.0))
        with pytest.raises(DecompositionError):
            flow.decompose(eig, mesh_annulus_128, annulus12, grid_n=64)

    def test_eccentric_dd_single_separating_cut(self, eccentric025, ecc_dd):
        _, _, dec = ecc_dd
        lengths = [np.sum(np.hypot(*np.diff(c, axis=0).T)) for c in dec.cut]
        assert max(lengths) / sum(lengths) > 0.95
        loop = dec.cut[int(np.argmax(lengths))]
        # closed and separating: winds once around the inner hole center
        assert np.linalg.norm(loop[0] - loop[-1]) < 2.0 * dec.cell
        z = loop - np.array([0.25, 0.0])
        winding = np.sum(np.diff(np.unwrap(np.arctan2(z[:, 1], z[:, 0])))) / (2.0 * math.pi)
        assert abs(abs(winding) - 1.0) < 0.05

    def test_sigma_refinement_trend(self, annulus12, mesh_annulus_128,
                                    eig_annulus_11, annulus_sigma):
        # Hausdorff distance to the sigma-circle stays within 2 cells as the
        # grid refines
        for grid_n in (128, 256):
            dec = flow.decompose(eig_annulus_11, mesh_annulus_128, annulus12, grid_n=grid_n)
            pts = np.concatenate(dec.cut)
            radii = np.hypot(pts[:, 0], pts[:, 1])
            assert np.max(np.abs(radii - annulus_sigma)) <= 2.0 * dec.cell


class TestCutResidual:
    def test_annulus_residual_small(self, mesh_annulus_128, eig_annulus_11, annulus_decomp):
        res = flow.cut_neumann_residual(eig_annulus_11, mesh_annulus_128, annulus_decomp)
        assert res < 1e-2

    def test_eccentric_residual_and_refinement(self, eccentric025, ecc_dd):
        mesh, eig, dec = ecc_dd
        res = flow.cut_neumann_residual(eig, mesh, dec)
        assert res < 5e-2

    def test_fake_cut_negative_control(self, mesh_annulus_128, eig_annulus_11, annulus_decomp):
        true_res = flow.cut_neumann_residual(eig_annulus_11, mesh_annulus_128, annulus_decomp)
        theta = np.linspace(0.0, 2.0 * math.pi, 256)
        wrong = np.stack([1.2 * np.cos(theta), 1.2 * np.sin(theta)], axis=1)
        segs = np.stack([wrong[:-1], wrong[1:]], axis=1)
        fake_res = flow.cut_neumann_residual(eig_annulus_11, mesh_annulus_128, segs)
        assert fake_res >= 5.0 * true_res


class TestRestrictedRayleigh:
    def test_annulus_both_sides(self, mesh_annulus_128, eig_annulus_11, annulus_decomp):
        for side in ("in", "out"):
            rq = flow.restricted_rayleigh(eig_annulus_11, mesh_annulus_128, annulus_decomp,
                                          side, RobinPair(1.0, 1.0))
            assert rq == pytest.approx(eig_annulus_11.lambda1, rel=0.02)

    def test_eccentric_dd_both_sides(self, ecc_dd):
        mesh, eig, dec = ecc_dd
        for side in ("in", "out"):
            rq = flow.restricted_rayleigh(eig, mesh, dec, side, RobinPair(INF, INF))
            assert rq == pytest.approx(eig.lambda1, rel=0.03)

    def test_sigma1_equals_sigma2(self, annulus12, annulus_decomp, eccentric025, ecc_dd):
        s1, s2 = flow.matched_interface_radii(annulus_decomp, annulus12)
        assert abs(s1 - s2) / max(s1, s2) < 0.02
        s1, s2 = flow.matched_interface_radii(ecc_dd[2], eccentric025)
        assert abs(s1 - s2) / max(s1, s2) < 0.02
