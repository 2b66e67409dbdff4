import numpy as np
import pytest

from iga_peec.assembly import (EPSILON0, PotentialMatrix,
                               assemble_potential_matrix, assemble_rhs,
                               load_matrix, save_matrix)
from iga_peec.errors import ConfigError, IgaPeecError
from iga_peec.geometry import make_concentric_spheres, make_sphere, refine
from iga_peec.quadrature import pair_integral


class TestMatrixStructure:
    def test_dim_and_symmetry(self, matrix_l0, mesh_l0):
        assert matrix_l0.dim == mesh_l0.n_elements == 12
        assert np.array_equal(matrix_l0.entries, matrix_l0.entries.T)
        assert matrix_l0.asymmetry <= 1e-9
        assert matrix_l0.epsilon0 == EPSILON0

    @pytest.mark.parametrize("fix", ["matrix_l0", "matrix_l1"])
    def test_positive_definite(self, fix, request):
        m = request.getfixturevalue(fix)
        ev = np.linalg.eigvalsh(m.entries)
        assert ev.min() > 0.0

    def test_diagonal_dominates_row(self, matrix_l0):
        e = matrix_l0.entries
        off = e - np.diag(np.diag(e))
        assert np.all(np.diag(e) > off.max(axis=1))

    def test_entries_match_pair_integrals(self, matrix_l0, mesh_l0):
        a = mesh_l0.areas
        for i, j in [(0, 0), (0, 1), (0, 5), (0, 7), (3, 11)]:
            want = pair_integral(mesh_l0, i, j) / (
                4.0 * np.pi * EPSILON0 * a[i] * a[j])
            assert matrix_l0.entries[i, j] == pytest.approx(want, rel=1e-12)

    def test_scale_invariance(self):
        # P has units 1/(eps0 * length): doubling every length halves it
        m1 = assemble_potential_matrix(refine(make_concentric_spheres(0.1, 0.2), 0))
        m2 = assemble_potential_matrix(refine(make_concentric_spheres(0.2, 0.4), 0))
        assert np.allclose(m2.entries * 2.0, m1.entries, rtol=1e-12, atol=0.0)


class TestDeterminism:
    def test_thread_count_bitwise_identical(self, mesh_l1, matrix_l1):
        m2 = assemble_potential_matrix(mesh_l1, threads=2)
        m3 = assemble_potential_matrix(mesh_l1, threads=3)
        assert np.array_equal(matrix_l1.entries, m2.entries)
        assert np.array_equal(matrix_l1.entries, m3.entries)

    def test_repeat_run_bitwise_identical(self, mesh_l0, matrix_l0):
        again = assemble_potential_matrix(mesh_l0)
        assert np.array_equal(matrix_l0.entries, again.entries)

    def test_env_thread_fallback(self, mesh_l0, matrix_l0, monkeypatch):
        monkeypatch.setenv("IGA_PEEC_THREADS", "2")
        m = assemble_potential_matrix(mesh_l0)
        assert np.array_equal(matrix_l0.entries, m.entries)

    def test_bad_env_thread_count(self, mesh_l0, monkeypatch):
        monkeypatch.setenv("IGA_PEEC_THREADS", "many")
        with pytest.raises(ConfigError):
            assemble_potential_matrix(mesh_l0)

    def test_bad_thread_argument(self, mesh_l0):
        with pytest.raises(ConfigError):
            assemble_potential_matrix(mesh_l0, threads=0)


class TestRhs:
    def test_maps_domains(self, mesh_l0):
        rhs = assemble_rhs(mesh_l0, {1: 2.5, 2: -1.0})
        assert rhs.shape == (12,)
        assert np.all(rhs[mesh_l0.domains == 1] == 2.5)
        assert np.all(rhs[mesh_l0.domains == 2] == -1.0)

    def test_missing_domain_rejected(self, mesh_l0):
        with pytest.raises(ConfigError, match=r"\[2\]"):
            assemble_rhs(mesh_l0, {1: 1.0})

    def test_extra_domain_ignored(self, mesh_l0):
        rhs = assemble_rhs(mesh_l0, {1: 1.0, 2: 0.0, 9: 4.0})
        assert rhs.max() == 1.0


class TestDump:
    def test_round_trip_bitwise(self, matrix_l0, tmp_path):
        path = tmp_path / "p.bin"
        save_matrix(str(path), matrix_l0)
        back = load_matrix(str(path))
        assert np.array_equal(back, matrix_l0.entries)
        assert path.stat().st_size == 8 + 12 * 12 * 8

    def test_accepts_plain_array(self, tmp_path):
        path = tmp_path / "a.bin"
        a = np.arange(9.0).reshape(3, 3)
        save_matrix(str(path), a)
        assert np.array_equal(load_matrix(str(path)), a)

    def test_rejects_non_square(self, tmp_path):
        with pytest.raises(IgaPeecError):
            save_matrix(str(tmp_path / "b.bin"), np.zeros((2, 3)))

    def test_truncated_file_rejected(self, matrix_l0, tmp_path):
        path = tmp_path / "t.bin"
        save_matrix(str(path), matrix_l0)
        data = path.read_bytes()
        path.write_bytes(data[:-16])
        with pytest.raises(IgaPeecError):
            load_matrix(str(path))
        path.write_bytes(data[:4])
        with pytest.raises(IgaPeecError):
            load_matrix(str(path))


class TestPhysicalLimits:
    def test_shell_interior_potential(self, matrix_l0, mesh_l0):
        # unit surface density on the outer shell gives the constant
        # potential R/eps0 everywhere inside, element 0 included
        outer = np.where(mesh_l0.domains == 2)[0]
        tot = sum(matrix_l0.entries[0, j] * mesh_l0.areas[j] for j in outer)
        assert tot == pytest.approx(0.2 / EPSILON0, rel=1e-5)

    def test_uniform_diagonal_per_sphere(self, matrix_l0):
        d = np.diag(matrix_l0.entries)
        assert np.allclose(d[:6], d[0], rtol=1e-12)
        assert np.allclose(d[6:], d[6], rtol=1e-12)

    def test_potential_matrix_container(self):
        e = np.eye(2)
        m = PotentialMatrix(e, 0.0)
        assert m.dim == 2 and m.epsilon0 == EPSILON0
