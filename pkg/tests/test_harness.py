import json
import math

import numpy as np
import pytest

from rfklab import cli, harness
from rfklab.errors import GenerationError
from rfklab.geometry import (
    DomainSpec,
    RobinPair,
    area,
    perimeter,
    match_annulus,
    save_domain,
)

INF = math.inf


def small_config(out_dir, **overrides):
    cfg = dict(
        families=[{"kind": "concentric", "r": 1.0, "R": 2.0,
                   "robin": [["1", "1"], ["0", "inf"]]}],
        out_dir=str(out_dir), n_theta=64, n_radial=16,
        flow_grid=128, profile_grid=512, n_delta=128)
    cfg.update(overrides)
    return harness.ExperimentConfig(**cfg)


class TestDeficitGenerator:
    def test_circles_trivially_matched(self):
        rng = np.random.default_rng(0)
        dom = harness.generate_deficit_matched(
            {"inner_amplitude": 0.0, "amp_max": 0.1, "offset": 0.2}, rng)
        m = match_annulus(dom, RobinPair(1.0, 1.0))
        assert abs(m.residuals["area"]) < 1e-4

    @pytest.mark.parametrize("seed", range(4))
    def test_identity_residual(self, seed):
        rng = np.random.default_rng(seed)
        dom = harness.generate_deficit_matched(
            {"inner_amplitude": 0.12, "inner_mode": 3, "outer_mode": 5, "amp_max": 0.4}, rng)
        p_in = perimeter(dom.inner)
        p_out = perimeter(dom.outer)
        om = area(dom)
        residual = (p_out ** 2 - p_in ** 2 - 4.0 * math.pi * om) / (4.0 * math.pi * om)
        assert abs(residual) < 1e-8

    def test_amplitude_cap_too_small(self):
        rng = np.random.default_rng(0)
        with pytest.raises(GenerationError):
            harness.generate_deficit_matched(
                {"inner_amplitude": 0.3, "inner_mode": 3, "outer_mode": 5,
                 "amp_max": 0.01}, rng)


class TestConfig:
    def test_rejects_mixed_signs(self, tmp_path):
        with pytest.raises(ValueError):
            small_config(tmp_path, families=[
                {"kind": "concentric", "r": 1.0, "R": 2.0, "robin": [["-1", "1"]]}])

    def test_rejects_double_neumann(self, tmp_path):
        with pytest.raises(ValueError):
            small_config(tmp_path, families=[
                {"kind": "concentric", "r": 1.0, "R": 2.0, "robin": [["0", "0"]]}])

    def test_json_roundtrip(self, tmp_path):
        cfg = small_config(tmp_path)
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({
            "families": cfg.families, "out_dir": cfg.out_dir,
            "n_theta": cfg.n_theta, "n_radial": cfg.n_radial,
            "flow_grid": cfg.flow_grid, "profile_grid": cfg.profile_grid,
            "n_delta": cfg.n_delta}))
        loaded = harness.ExperimentConfig.from_json(path)
        assert loaded.families == cfg.families

    def test_default_covers_regime_table(self):
        cfg = harness.default_config()
        seen = set()
        for fam in cfg.families:
            for pair in fam["robin"]:
                rp = RobinPair.parse(*pair)
                seen.add((rp.h_in, rp.h_out))
        assert set(harness.COVERED_REGIMES) <= seen


@pytest.fixture(scope="module")
def suite_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("suite")
    cfg = small_config(out)
    result = harness.run_rfk_suite(cfg)
    harness.write_outputs(result, cfg.out_dir)
    return cfg, result


class TestSuite:
    def test_all_rows_resolved(self, suite_run):
        _, result = suite_run
        assert result.persistent_failures == 0
        statuses = {r.status for r in result.rows}
        assert statuses <= {"PASS", "INCONCLUSIVE"}

    def test_outputs_exist(self, suite_run):
        cfg, result = suite_run
        from pathlib import Path
        out = Path(cfg.out_dir)
        assert (out / "results.csv").exists()
        assert (out / "lemmas.csv").exists()
        assert (out / "concentric.svg").exists()

    def test_results_csv_columns(self, suite_run):
        cfg, _ = suite_run
        from pathlib import Path
        header = (Path(cfg.out_dir) / "results.csv").read_text().splitlines()[0]
        assert header.split(",")[:5] == ["domain_id", "h_in", "h_out", "r", "R"]

    def test_dirichlet_token_in_csv(self, suite_run):
        cfg, _ = suite_run
        from pathlib import Path
        body = (Path(cfg.out_dir) / "results.csv").read_text()
        assert ",inf," in body

    def test_determinism(self, tmp_path):
        cfg = small_config(tmp_path / "a", families=[
            {"kind": "fourier", "count": 2, "amplitude": 0.06, "modes": [2, 3],
             "robin": [["1", "0"]]}], seed=11)
        r1 = harness.run_rfk_suite(cfg)
        harness.write_results_csv(r1.rows, tmp_path / "r1.csv")
        r2 = harness.run_rfk_suite(cfg)
        harness.write_results_csv(r2.rows, tmp_path / "r2.csv")
        assert (tmp_path / "r1.csv").read_bytes() == (tmp_path / "r2.csv").read_bytes()


class TestCli:
    def test_radial_csv(self, capsys):
        assert cli.main(["radial", "--r", "1", "--R", "2", "--hin", "1", "--hout", "1"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "r,R,h_in,h_out,lambda1,sigma"
        vals = out[1].split(",")
        assert float(vals[4]) == pytest.approx(1.697291, rel=1e-5)
        assert float(vals[5]) == pytest.approx(1.425193, rel=1e-5)

    def test_radial_dirichlet_token(self, capsys):
        cli.main(["radial", "--r", "0", "--R", "1", "--hin", "0", "--hout", "inf"])
        out = capsys.readouterr().out.splitlines()[1].split(",")
        assert out[3] == "inf"
        assert out[5] == ""

    def test_verify_exit_code_and_outputs(self, tmp_path):
        cfg = dict(families=[{"kind": "concentric", "r": 1.0, "R": 2.0,
                              "robin": [["0", "1"]]}],
                   out_dir=str(tmp_path / "out"), n_theta=64, n_radial=16,
                   flow_grid=96, profile_grid=512, n_delta=128)
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        assert cli.main(["verify", "--config", str(cfg_path)]) == 0
        assert (tmp_path / "out" / "results.csv").exists()

    def test_profile_csv(self, tmp_path, capsys):
        dom = DomainSpec.annulus(1.0, 2.0)
        dpath = tmp_path / "dom.txt"
        save_domain(dom, dpath)
        svg = tmp_path / "levels.svg"
        assert cli.main(["profile", "--domain", str(dpath), "--side", "inner",
                         "--grid", "384", "--plot-parallels", str(svg)]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "delta,s,S,t,T"
        assert len(lines) > 50
        assert svg.exists()

    def test_flow_outputs(self, tmp_path):
        dom = DomainSpec.annulus(1.0, 2.0, offset=(0.2, 0.0))
        dpath = tmp_path / "dom.txt"
        save_domain(dom, dpath)
        labels = tmp_path / "labels.csv"
        dump = tmp_path / "field.txt"
        assert cli.main(["flow", "--domain", str(dpath), "--hin", "1", "--hout", "1",
                         "--grid", "96", "--n-theta", "96", "--n-radial", "16",
                         "--out", str(labels), "--dump-field", str(dump)]) == 0
        header = labels.read_text().splitlines()[0]
        assert header == "seed_x,seed_y,label"
        assert dump.read_text().startswith("node ")
