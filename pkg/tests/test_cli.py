import json
import os

import pytest

import bandtopo as bt
from bandtopo.cli import main

from conftest import gapped_model


def run(args):
    return main(args)


@pytest.fixture()
def gapped_config(tmp_path):
    path = tmp_path / "gapped.json"
    bt.save_model_config(gapped_model(), path)
    return str(path)


class TestLocate:
    def test_weyl_two_points(self, tmp_path, capsys):
        code = run(
            ["locate", "--model", "weyl-lattice", "--param", "m=2",
             "--grid", "32", "--out", str(tmp_path)]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "P0" in out and "P1" in out
        payload = json.loads((tmp_path / "locus.json").read_text())
        assert len(payload["components"]) == 2

    def test_gapped_no_nodal_set(self, tmp_path, capsys, gapped_config):
        code = run(["locate", "--config", gapped_config, "--grid", "16",
                    "--out", str(tmp_path)])
        assert code == 0
        assert "no nodal set" in capsys.readouterr().out

    def test_malformed_config_exit_64(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{broken")
        code = run(["locate", "--config", str(bad), "--out", str(tmp_path)])
        assert code == 64

    def test_missing_model_exit_64(self, tmp_path):
        assert run(["locate", "--out", str(tmp_path)]) == 64

    def test_ambiguous_locus_exit_2(self, tmp_path):
        from bandtopo.model import CoefficientSpec, TwoBandField, model_from_field

        h1 = CoefficientSpec([("cos", (0, 0, 1), 1.0), ("cos", (0, 0, 0), -0.3)])
        field = TwoBandField([h1, CoefficientSpec([]), CoefficientSpec([])])
        model = model_from_field("nodal-surface", field, reality=True)
        cfg = tmp_path / "surface.json"
        bt.save_model_config(model, cfg)
        code = run(["locate", "--config", str(cfg), "--grid", "16",
                    "--out", str(tmp_path)])
        assert code == 2


class TestVerify:
    def test_weyl_passes(self, tmp_path, capsys):
        code = run(
            ["verify", "--model", "weyl-lattice", "--param", "m=2",
             "--grid", "32", "--mesh", "48x48", "--out", str(tmp_path)]
        )
        assert code == 0
        assert "PASS" in capsys.readouterr().out

    def test_tampered_ledger_fails(self, tmp_path):
        code = run(
            ["charges", "--model", "weyl-lattice", "--param", "m=2",
             "--grid", "32", "--mesh", "48x48", "--out", str(tmp_path)]
        )
        assert code == 0
        payload = json.loads((tmp_path / "charges.json").read_text())
        payload["entries"][0]["chirality"] += 2  # inject a bad charge
        bad = tmp_path / "tampered.json"
        bad.write_text(json.dumps(payload))
        code = run(
            ["verify", "--model", "weyl-lattice", "--param", "m=2",
             "--ledger-file", str(bad), "--out", str(tmp_path)]
        )
        assert code == 1

    def test_empty_locus_passes(self, tmp_path, gapped_config):
        code = run(["verify", "--config", gapped_config, "--grid", "16",
                    "--mesh", "16x16", "--out", str(tmp_path)])
        assert code == 0


class TestScanLink:
    def test_scan_csv(self, tmp_path):
        code = run(
            ["scan", "--model", "weyl-lattice", "--param", "m=2",
             "--values", "-2.0,0.0,2.0", "--mesh", "32x32", "--out", str(tmp_path)]
        )
        assert code == 0
        rows = (tmp_path / "scan.csv").read_text().strip().splitlines()
        assert rows[0] == "value,chern,skipped,reason"
        assert len(rows) == 4

    def test_link_four_band(self, tmp_path, capsys):
        code = run(
            ["link", "--model", "four-band-linked", "--param", "m=1",
             "--grid", "32", "--out", str(tmp_path)]
        )
        assert code == 0
        payload = json.loads((tmp_path / "linking.json").read_text())
        assert len(payload["pairs"]) == 1
        assert abs(payload["pairs"][0]["value"]) == 1


class TestCohomologyCmd:
    def test_loop_fixture(self, tmp_path, capsys):
        code = run(
            ["cohomology", "--fixture", "loop", "--resolution", "8",
             "--tube-voxels", "1", "--snf-resolution", "8", "--out", str(tmp_path)]
        )
        assert code == 0
        payload = json.loads((tmp_path / "cohomology.json").read_text())
        names = {v["name"] for v in payload["verdicts"]}
        assert any(name.startswith("mv_dimension_check") for name in names)
        assert all(v["passed"] for v in payload["verdicts"])
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_none_fixture_torus(self, tmp_path):
        code = run(
            ["cohomology", "--fixture", "none", "--resolution", "8",
             "--out", str(tmp_path)]
        )
        assert code == 0
        payload = json.loads((tmp_path / "cohomology.json").read_text())
        t3 = [t for t in payload["tables"] if t["space"].startswith("T3")]
        assert t3[0]["groups"]["Q"]["ranks"] == [1, 3, 3, 1]

    def test_torsion_fixture_fails(self, tmp_path):
        code = run(
            ["cohomology", "--fixture", "torsion", "--out", str(tmp_path)]
        )
        assert code == 1

    def test_from_locus(self, tmp_path):
        code = run(
            ["locate", "--model", "nodal-loop-real", "--param", "m=2",
             "--grid", "32", "--out", str(tmp_path)]
        )
        assert code == 0
        code = run(
            ["cohomology", "--from-locus", str(tmp_path / "locus.json"),
             "--resolution", "12", "--tube-voxels", "1", "--no-integral",
             "--out", str(tmp_path)]
        )
        assert code == 0


class TestReportDeterminism:
    def test_byte_identical_reruns(self, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        args = ["report", "--model", "weyl-lattice", "--param", "m=2",
                "--grid", "32", "--mesh", "48x48"]
        assert run(args + ["--out", str(out_a)]) == 0
        assert run(args + ["--out", str(out_b)]) == 0
        a = (out_a / "report.json").read_bytes()
        b = (out_b / "report.json").read_bytes()
        assert a == b
