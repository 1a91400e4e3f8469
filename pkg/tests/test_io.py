import numpy as np
import pytest

from batrom import CellConfig
from batrom.io import (CYCLE_HEADER, TRAJECTORY_HEADER, ContainerError, MAGIC, config_from_ini,
                       config_to_ini, load_artifact, load_config, load_states, read_container,
                       read_csv, save_artifact, save_config, save_states, write_container,
                       write_csv, write_cycle_csv, write_trajectory_csv)
from batrom.degradation import DegradationSchedule, run_cycle_study
from batrom.model import ParameterPoint


class TestContainer:
    def test_round_trip(self, tmp_path):
        sec = {"a": np.arange(6.0).reshape(2, 3), "b": np.array([1, -2], dtype=np.int64),
               "c": np.frombuffer(b"xyz", dtype=np.uint8), "s": np.array(3.5)}
        write_container(tmp_path / "x.bin", "test", "sig", "hash", sec)
        kind, sig, h, out = read_container(tmp_path / "x.bin")
        assert (kind, sig, h) == ("test", "sig", "hash")
        for k, v in sec.items():
            np.testing.assert_array_equal(out[k], v)
            assert out[k].shape == v.shape

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.bin"
        p.write_bytes(b"NOTBATROM" + bytes(20))
        with pytest.raises(ContainerError, match="not a batrom"):
            read_container(p)

    def test_truncated(self, tmp_path):
        p = tmp_path / "x.bin"
        write_container(p, "t", "s", "h", {"a": np.ones(10)})
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(ContainerError, match="truncated"):
            read_container(p)

    def test_trailing_bytes(self, tmp_path):
        p = tmp_path / "x.bin"
        write_container(p, "t", "s", "h", {"a": np.ones(2)})
        p.write_bytes(p.read_bytes() + b"\0")
        with pytest.raises(ContainerError, match="trailing"):
            read_container(p)

    def test_unsupported_dtype(self, tmp_path):
        with pytest.raises(TypeError):
            write_container(tmp_path / "x.bin", "t", "s", "h", {"a": np.ones(2, dtype=complex)})

    def test_magic_prefix(self, tmp_path):
        p = tmp_path / "x.bin"
        write_container(p, "t", "s", "h", {})
        assert p.read_bytes().startswith(MAGIC)


class TestArtifactFile:
    def test_bit_exact_round_trip(self, artifact, tmp_path):
        save_artifact(artifact, tmp_path / "rom.bin")
        back = load_artifact(tmp_path / "rom.bin", mesh=artifact.mesh, config=artifact.config)
        assert back.config == artifact.config
        assert back.mesh.signature == artifact.mesh.signature
        assert back.metadata == artifact.metadata
        for c in ("u1", "u2", "u3", "u4"):
            np.testing.assert_array_equal(back.bases[c].modes, artifact.bases[c].modes)
            np.testing.assert_array_equal(back.bases[c].singular_values,
                                          artifact.bases[c].singular_values)
            np.testing.assert_array_equal(back.collateral[c].modes, artifact.collateral[c].modes)
            np.testing.assert_array_equal(back.points[c].indices, artifact.points[c].indices)
            np.testing.assert_array_equal(back.points[c].matrix, artifact.points[c].matrix)

    def test_save_is_deterministic(self, artifact, tmp_path):
        save_artifact(artifact, tmp_path / "a.bin")
        save_artifact(artifact, tmp_path / "b.bin")
        assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()

    def test_reduced_runs_identical_after_reload(self, artifact, disc, tmp_path):
        from batrom.rom import ReducedModel
        save_artifact(artifact, tmp_path / "rom.bin")
        back = load_artifact(tmp_path / "rom.bin")
        mu = ParameterPoint(1.5)
        a = ReducedModel(artifact, disc=disc).simulate(mu)
        b = ReducedModel(back, disc=disc).simulate(mu)
        np.testing.assert_array_equal(a.coefficients, b.coefficients)

    def test_mesh_mismatch(self, artifact, small_mesh, tmp_path):
        save_artifact(artifact, tmp_path / "rom.bin")
        with pytest.raises(ContainerError, match="mesh mismatch"):
            load_artifact(tmp_path / "rom.bin", mesh=small_mesh)

    def test_config_mismatch(self, artifact, tmp_path):
        save_artifact(artifact, tmp_path / "rom.bin")
        with pytest.raises(ContainerError, match="config mismatch"):
            load_artifact(tmp_path / "rom.bin", config=CellConfig().replace(e_min=-0.3))

    def test_wrong_kind(self, traj, config, mesh, tmp_path):
        save_states(tmp_path / "s.bin", traj.states, traj.times, mesh, config)
        with pytest.raises(ContainerError, match="not a reduced model"):
            load_artifact(tmp_path / "s.bin")


class TestStates:
    def test_round_trip(self, traj, config, mesh, tmp_path):
        save_states(tmp_path / "s.bin", traj.states, traj.times, mesh, config)
        states, times, m, cfg = load_states(tmp_path / "s.bin", mesh=mesh, config=config)
        np.testing.assert_array_equal(states, traj.states)
        np.testing.assert_array_equal(times, traj.times)
        assert m.signature == mesh.signature and cfg == config

    def test_length_checked(self, config, mesh, tmp_path):
        with pytest.raises(ValueError):
            save_states(tmp_path / "s.bin", np.zeros((2, 5)), [0, 1], mesh, config)


class TestCsv:
    def test_round_trip_exact(self, tmp_path):
        rows = [[1, 0.1, 1 / 3], [2, -1e-300, np.pi]]
        write_csv(tmp_path / "t.csv", ["n", "a", "b"], rows)
        header, data = read_csv(tmp_path / "t.csv")
        assert header == ["n", "a", "b"]
        np.testing.assert_array_equal(data, np.array(rows, dtype=float))

    def test_line_endings(self, tmp_path):
        write_csv(tmp_path / "t.csv", ["a"], [[1.0]])
        assert (tmp_path / "t.csv").read_bytes() == b"a\n1.0\n"

    def test_trajectory(self, traj, config, tmp_path):
        write_trajectory_csv(tmp_path / "t.csv", traj, config)
        header, data = read_csv(tmp_path / "t.csv")
        assert header == TRAJECTORY_HEADER
        assert data.shape == (len(traj), 5)
        np.testing.assert_array_equal(data[:, 0], traj.times)

    def test_cycles(self, tmp_path):
        class Run:
            soc_at_emin, wall_seconds = 0.8, 1.0
        res = run_cycle_study(DegradationSchedule(0.5, 0.5, 2), lambda mu: Run(), ParameterPoint(1.0))
        write_cycle_csv(tmp_path / "c.csv", res)
        header, data = read_csv(tmp_path / "c.csv")
        assert header == CYCLE_HEADER and data.shape == (3, 5)


class TestIni:
    def test_round_trip(self, config, tmp_path):
        save_config(config, tmp_path / "cell.ini")
        assert load_config(tmp_path / "cell.ini") == config

    def test_modified_value(self, config):
        text = config_to_ini(config.replace(e_min=-0.35))
        assert config_from_ini(text).e_min == -0.35

    def test_partial_file_keeps_reference(self):
        assert config_from_ini("[cell]\ne_min = -0.1\n") == CellConfig().replace(e_min=-0.1)

    @pytest.mark.parametrize("text", ["[bogus]\nx = 1\n", "[anode]\ncolour = 1\n"])
    def test_unknown_entries(self, text):
        with pytest.raises(ValueError):
            config_from_ini(text)
