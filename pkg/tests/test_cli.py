import json
import math
import subprocess
import sys

import numpy as np
import pytest

from iga_peec.assembly import EPSILON0
from iga_peec.cli import main
from iga_peec.geometry import make_concentric_spheres, save_geometry

C_ANALYTIC = 4.0 * math.pi * EPSILON0 / (1.0 / 0.1 - 1.0 / 0.2)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestCapacitance:
    def test_concentric_default_drive(self, capsys):
        code, out, _ = run(capsys, "capacitance", "--geometry",
                           "spheres:0.1,0.2", "--level", "0")
        assert code == 0
        doc = json.loads(out)
        assert doc["dof"] == 12
        assert doc["C_total_farad"] == pytest.approx(C_ANALYTIC, rel=1e-4)
        assert set(doc["Q_per_domain"]) == {"1", "2"}
        assert doc["Q_per_domain"]["2"] < 0.0

    def test_isolated_sphere_free_space(self, capsys):
        code, out, _ = run(capsys, "capacitance", "--geometry", "sphere:1",
                           "--level", "1", "--potential", "1=1")
        assert code == 0
        doc = json.loads(out)
        c_free = 4.0 * math.pi * EPSILON0
        assert doc["C_total_farad"] == pytest.approx(c_free, rel=5e-3)

    def test_partial_potentials_exit_2(self, capsys):
        code, _, err = run(capsys, "capacitance", "--geometry",
                           "spheres:0.1,0.2", "--potential", "1=1")
        assert code == 2
        assert "domain" in err

    def test_malformed_potential_exit_2(self, capsys):
        code, _, _ = run(capsys, "capacitance", "--geometry",
                         "spheres:0.1,0.2", "--potential", "1:1")
        assert code == 2

    def test_bad_geometry_exit_2(self, capsys):
        for spec in ("spheres:0.1", "sphere:zero", "no/such/file.json"):
            code, _, err = run(capsys, "capacitance", "--geometry", spec)
            assert code == 2, spec
            assert err.startswith("error:")

    def test_geometry_file_roundtrip(self, capsys, tmp_path):
        path = tmp_path / "g.json"
        save_geometry(make_concentric_spheres(0.1, 0.2), str(path))
        code, out, _ = run(capsys, "capacitance", "--geometry", str(path),
                           "--level", "0")
        assert code == 0
        assert json.loads(out)["C_total_farad"] == pytest.approx(
            C_ANALYTIC, rel=1e-4)

    def test_csv_report(self, capsys, tmp_path):
        csv = tmp_path / "cap.csv"
        code, out, _ = run(capsys, "capacitance", "--geometry",
                           "spheres:0.1,0.2", "--csv-out", str(csv))
        assert code == 0
        lines = csv.read_text().splitlines()
        assert lines[0].startswith("dof,C_total_farad")
        assert len(lines) == 2

    def test_stdout_deterministic_across_threads(self, capsys):
        argv = ["capacitance", "--geometry", "spheres:0.1,0.2", "--level", "0"]
        _, out1, _ = run(capsys, *argv, "--threads", "1")
        _, out2, _ = run(capsys, *argv, "--threads", "2")
        assert out1 == out2


class TestConvergence:
    def test_rows_slope_and_figure(self, capsys, tmp_path):
        csv = tmp_path / "conv.csv"
        code, out, _ = run(capsys, "convergence", "--geometry",
                           "spheres:0.1,0.2", "--levels", "0,1",
                           "--csv-out", str(csv))
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0].startswith("12,")
        assert lines[1].startswith("48,")
        assert lines[-1].startswith("slope vs h:")
        body = csv.read_text().splitlines()
        assert body[0] == "dof,C_farad,rel_error"
        assert len(body) == 3
        png = tmp_path / "conv.png"
        assert png.exists() and png.stat().st_size > 1000
        assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_triangle_method(self, capsys):
        code, out, _ = run(capsys, "convergence", "--geometry",
                           "spheres:0.1,0.2", "--levels", "0", "--method",
                           "tri")
        assert code == 0
        assert out.startswith("40,")

    def test_needs_builtin_geometry(self, capsys, tmp_path):
        path = tmp_path / "g.json"
        save_geometry(make_concentric_spheres(0.1, 0.2), str(path))
        code, _, err = run(capsys, "convergence", "--geometry", str(path))
        assert code == 2 and "analytic" in err


class TestNetlistCommand:
    def test_write_and_verify(self, capsys, tmp_path):
        cir = tmp_path / "n.cir"
        code, out, _ = run(capsys, "netlist", "--geometry", "spheres:0.1,0.2",
                           "--netlist-out", str(cir), "--verify")
        assert code == 0
        doc = json.loads(out)
        assert doc["components"] == 156
        assert doc["capacitors"] == 12 and doc["cccs"] == 132
        assert doc["mismatch"] <= 1e-8
        assert cir.read_text().startswith("* iga-peec netlist\n")

    def test_requires_output_path(self, capsys):
        code, _, err = run(capsys, "netlist", "--geometry", "spheres:0.1,0.2")
        assert code == 2 and "netlist-out" in err

    def test_stamp_from_matrix_dump(self, capsys, tmp_path):
        dump, tags = tmp_path / "p.bin", tmp_path / "tags.csv"
        direct, stamped = tmp_path / "a.cir", tmp_path / "b.cir"
        code, _, _ = run(capsys, "capacitance", "--geometry",
                         "spheres:0.1,0.2", "--p-matrix-out", str(dump),
                         "--tags-out", str(tags))
        assert code == 0
        code, _, _ = run(capsys, "netlist", "--geometry", "spheres:0.1,0.2",
                         "--netlist-out", str(direct))
        assert code == 0
        code, out, _ = run(capsys, "netlist", "--p-matrix", str(dump),
                           "--tags", str(tags), "--netlist-out", str(stamped))
        assert code == 0
        assert json.loads(out)["components"] == 156
        assert stamped.read_text() == direct.read_text()

    def test_verify_subcommand(self, capsys):
        code, out, _ = run(capsys, "verify", "--geometry", "spheres:0.1,0.2",
                           "--omega", str(2.0 * math.pi * 1e6))
        assert code == 0
        doc = json.loads(out)
        assert doc["mismatch"] <= 1e-8
        assert doc["omega"] == pytest.approx(2.0 * math.pi * 1e6)


class TestCharges:
    def test_csv_rows_and_density(self, capsys, tmp_path):
        csv = tmp_path / "q.csv"
        code, _, _ = run(capsys, "charges", "--geometry", "spheres:0.1,0.2",
                         "--level", "1", "--csv-out", str(csv))
        assert code == 0
        lines = csv.read_text().splitlines()
        assert lines[0] == "element,patch,domain,area_m2,charge_C,density_C_m2"
        assert len(lines) == 49
        rows = [line.split(",") for line in lines[1:]]
        dens = np.array([float(r[5]) for r in rows])
        dom = np.array([int(r[2]) for r in rows])
        assert np.all(dens[dom == 1] > 0.0)
        inner = dens[dom == 1]
        assert np.ptp(inner) / np.abs(inner).mean() < 0.05

    def test_stdout_fallback(self, capsys):
        code, out, _ = run(capsys, "charges", "--geometry", "spheres:0.1,0.2")
        assert code == 0
        assert out.splitlines()[0].startswith("element,")
        assert len(out.splitlines()) == 13


class TestEntryPoint:
    def test_console_script(self):
        proc = subprocess.run(
            [sys.executable, "-m", "iga_peec.cli", "capacitance",
             "--geometry", "spheres:0.1,0.2", "--level", "0"],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["dof"] == 12

    def test_missing_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2
