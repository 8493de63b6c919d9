import csv
import json

import numpy as np
import pytest

import onechannel.mat2core as m2
from onechannel import cli
from onechannel.config import encode_matrix
from onechannel.model import HADAMARD, theta_block

SWAP_ROWS = [[0, 1], [1, 0]]


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def theta_cfg(th):
    return {"type": "zipper", "blocks": [{"V": encode_matrix(theta_block(th)), "W": SWAP_ROWS}], "n_shells": 50}


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def run(argv, capsys=None):
    code = cli.main([str(a) for a in argv])
    err = capsys.readouterr().err if capsys is not None else ""
    return code, err


class TestDensity:
    def test_all_swap_constant(self, tmp_path):
        cfg = write_cfg(tmp_path, {"type": "zipper", "blocks": [{"V": SWAP_ROWS, "W": SWAP_ROWS}], "n_shells": 30})
        assert cli.main(["density", cfg, "--grid", "512", "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "density.csv")
        vals = np.array([float(r["density"]) for r in rows])
        assert np.allclose(vals, 1 / (2 * np.pi), rtol=1e-13)
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert abs(man["mass"] - 1) < 1e-12

    def test_hadamard_shape(self, tmp_path):
        cfg = write_cfg(tmp_path, {"type": "qw1d", "blocks": [encode_matrix(HADAMARD)], "n_shells": 10})
        assert cli.main(["density", cfg, "--n", "200", "--out", str(tmp_path)]) == 0
        text = (tmp_path / "density.csv").read_text()
        lines = text.splitlines()
        assert lines[0] == "phi,density,masked" and len(lines) == 4097
        assert "\r" not in text
        rows = read_rows(tmp_path / "density.csv")
        d = np.array([float(r["density"] or 0.0) for r in rows])
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["grids"] == {"grid": 4096, "n": 200}
        assert man["mass"] == pytest.approx(d.sum() * 2 * np.pi / d.size, rel=1e-14)

    def test_resolved_mass(self, tmp_path):
        cfg = write_cfg(tmp_path, theta_cfg(np.pi / 2))
        assert cli.main(["density", cfg, "--n", "100", "--out", str(tmp_path)]) == 0
        d = np.array([float(r["density"]) for r in read_rows(tmp_path / "density.csv")])
        assert abs(d.sum() * 2 * np.pi / d.size - 1) < 2e-2

    def test_eigenvalue_on_node_stays_finite(self, tmp_path):
        # theta = 0.9 with u = 1 has an eigenvalue exactly at phi = 0
        cfg = write_cfg(tmp_path, theta_cfg(0.9))
        assert cli.main(["density", cfg, "--grid", "64", "--out", str(tmp_path)]) == 0
        d = np.array([float(r["density"]) for r in read_rows(tmp_path / "density.csv")])
        assert np.all(np.isfinite(d)) and d[0] > 1e25

    def test_broken_channel(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, {"type": "zipper", "blocks": [{"V": [[1, 0], [0, 1]], "W": SWAP_ROWS}], "n_shells": 4})
        code, err = run(["density", cfg, "--out", tmp_path], capsys)
        assert code == 3 and "A1 failure" in err
        assert not (tmp_path / "density.csv").exists()

    def test_config_errors(self, tmp_path, capsys):
        assert run(["density", tmp_path / "missing.json"], capsys)[0] == 2
        cfg = write_cfg(tmp_path, theta_cfg(0.3))
        assert run(["density", cfg, "--u", "2"], capsys)[0] == 2
        assert run(["density", cfg, "--n", "-5"], capsys)[0] == 2
        assert run(["density", cfg, "--grid", "x"], capsys)[0] == 2
        assert run([], capsys)[0] == 2

    def test_boundary_phase_flag(self, tmp_path):
        cfg = write_cfg(tmp_path, theta_cfg(0.5))
        assert cli.main(["density", cfg, "--grid", "256", "--u", "0+1j", "--out", str(tmp_path / "a")]) == 0
        assert cli.main(["density", cfg, "--grid", "256", "--out", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "density.csv").read_text()
        b = (tmp_path / "b" / "density.csv").read_text()
        assert a != b


class TestBands:
    def test_theta_pi6(self, tmp_path):
        cfg = write_cfg(tmp_path, theta_cfg(np.pi / 6))
        assert cli.main(["bands", cfg, "--out", str(tmp_path)]) == 0
        arcs = [(float(r["arc_start"]), float(r["arc_end"])) for r in read_rows(tmp_path / "bands.csv")]
        assert len(arcs) == 2
        a = np.arccos(0.5)
        expect = sorted([(a, np.pi - a), (np.pi + a, 2 * np.pi - a)])
        assert np.allclose(sorted(arcs), expect, atol=1e-9)
        assert (tmp_path / "points.csv").read_text().splitlines()[0] == "eig_angle,contraction"

    def test_theta_pi2_touching(self, tmp_path):
        cfg = write_cfg(tmp_path, theta_cfg(np.pi / 2))
        assert cli.main(["bands", cfg, "--out", str(tmp_path)]) == 0
        arcs = [(float(r["arc_start"]), float(r["arc_end"])) for r in read_rows(tmp_path / "bands.csv")]
        assert len(arcs) == 2
        ends = np.mod(np.array(arcs).ravel(), 2 * np.pi)
        for target in (0.0, np.pi):
            hits = np.abs(np.angle(np.exp(1j * (ends - target)))) < 1e-9
            assert hits.sum() == 2

    def test_non_zipper(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, {"type": "stroboscopic", "blocks": [encode_matrix(theta_block(0.4))], "n_shells": 3})
        code, err = run(["bands", cfg, "--out", tmp_path], capsys)
        assert code == 2 and "bands require zipper" in err


class TestEnsemble:
    def test_flat_at_zero_amplitude(self, tmp_path):
        cfg = write_cfg(tmp_path, theta_cfg(np.pi / 6))
        argv = ["ensemble", cfg, "--c", "0", "--samples", "4", "--periods", "5,20,40", "--out", str(tmp_path)]
        assert cli.main(argv) == 0
        m = np.array([float(r["moment4"]) for r in read_rows(tmp_path / "moments.csv")])
        assert np.ptp(m) < 1e-8 * m[0]

    def test_shape_and_manifest(self, tmp_path):
        cfg = write_cfg(tmp_path, theta_cfg(np.pi / 6))
        argv = ["ensemble", cfg, "--samples", "100", "--periods", "10,20,30", "--phi", str(np.pi / 2),
                "--seed", "7", "--out", str(tmp_path)]
        assert cli.main(argv) == 0
        lines = (tmp_path / "moments.csv").read_text().splitlines()
        assert lines[0] == "n,moment4,stderr" and len(lines) == 4
        info = json.loads((tmp_path / "ensemble.json").read_text())
        assert info["config"]["seed"] == 7 and info["n_periods"] == [10, 20, 30]
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["command"] == "ensemble" and man["seed"] == 7

    def test_summability(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, theta_cfg(np.pi / 6))
        code, err = run(["ensemble", cfg, "--alpha", "0.4", "--out", tmp_path], capsys)
        assert code == 2 and "(C2) requires alpha > 1/2" in err

    def test_bad_periods_and_phi(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, theta_cfg(np.pi / 6))
        assert run(["ensemble", cfg, "--periods", "a,b", "--out", tmp_path], capsys)[0] == 2
        # phi = 0 lies in a gap of the theta = pi/6 zipper
        code, _ = run(["ensemble", cfg, "--phi", "0", "--samples", "2", "--periods", "1", "--out", tmp_path], capsys)
        assert code == 3


class TestSelftest:
    def test_fresh_build(self, tmp_path, capsys):
        code = cli.main(["selftest", "--scale", "small", "--out", str(tmp_path)])
        out = capsys.readouterr().out
        assert code == 0
        assert json.loads(out)["passed"] is True
        assert json.loads((tmp_path / "selftest.json").read_text())["failed"] == []

    def test_corrupted_phi(self, monkeypatch, capsys):
        good = m2.phi_sharp

        def flipped(M, tol_beta=m2.TOL_BETA):
            return good(M, tol_beta) * np.array([[1, 1], [-1, 1]])

        monkeypatch.setattr(m2, "phi_sharp", flipped)
        code = cli.main(["selftest", "--scale", "small"])
        err = capsys.readouterr().err
        assert code == 1 and "phi-identities" in err


class TestPlumbing:
    def test_determinism(self, tmp_path):
        cfg = write_cfg(tmp_path, theta_cfg(0.9))
        for sub in ("a", "b"):
            assert cli.main(["density", cfg, "--grid", "1024", "--out", str(tmp_path / sub)]) == 0
            argv = ["ensemble", cfg, "--samples", "6", "--periods", "3,6", "--seed", "5",
                    "--out", str(tmp_path / sub / "e")]
            assert cli.main(argv) == 0
        for name in ("density.csv", "e/moments.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_manifest_fields(self, tmp_path):
        cfg = write_cfg(tmp_path, theta_cfg(0.9))
        assert cli.main(["density", cfg, "--grid", "128", "--out", str(tmp_path)]) == 0
        man = json.loads((tmp_path / "manifest.json").read_text())
        for key in ("command", "config_digest", "seed", "grids", "version", "wall_time", "files"):
            assert key in man
        assert len(man["config_digest"]) == 64

    @pytest.mark.parametrize("flag", [["--threads", "1"], ["--threads", "2"]])
    def test_threads_flag(self, tmp_path, flag):
        cfg = write_cfg(tmp_path, theta_cfg(0.9))
        assert cli.main(flag + ["density", cfg, "--grid", "64", "--out", str(tmp_path)]) == 0

    def test_threads_env(self, tmp_path, monkeypatch, capsys):
        cfg = write_cfg(tmp_path, theta_cfg(0.9))
        monkeypatch.setenv(cli.THREADS_ENV, "lots")
        assert run(["density", cfg, "--grid", "64", "--out", tmp_path], capsys)[0] == 2

    def test_version(self, capsys):
        assert cli.main(["--version"]) == 0
        assert "onechannel" in capsys.readouterr().out
