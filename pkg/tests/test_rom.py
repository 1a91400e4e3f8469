import numpy as np
import pytest

from batrom import CellConfig, ParameterPoint, simulate
from batrom.degradation import relative_l2l2_error
from batrom.fom import Discretization
from batrom.pod import pod
from batrom.rom import (InterpolationPoints, ReducedModel, SingularInterpolationError,
                        collect_operator_snapshots, greedy_points, interpolate, offline_build,
                        operator_images, rom_simulate)


@pytest.fixture(scope="module")
def rom(artifact, disc):
    return ReducedModel(artifact, disc=disc)


@pytest.fixture(scope="module")
def step(rom, traj):
    i = len(traj) // 2
    return rom.project(traj.states[i]), rom.project(traj.states[i - 1])


class TestGreedyPoints:
    @pytest.mark.parametrize("perm", [[0, 1, 2], [4, 0, 2], [5, 3, 1]])
    def test_unit_vectors(self, perm):
        U = np.eye(6)[:, perm]
        P = greedy_points(U)
        np.testing.assert_array_equal(P.indices, perm)
        np.testing.assert_array_equal(P.matrix, np.eye(3))

    def test_first_point_is_largest_entry(self):
        U = pod(np.random.default_rng(1).standard_normal((40, 6))).modes
        assert greedy_points(U).indices[0] == np.argmax(np.abs(U[:, 0]))

    def test_points_distinct(self):
        U = pod(np.random.default_rng(2).standard_normal((60, 12))).modes
        idx = greedy_points(U).indices
        assert len(set(idx.tolist())) == len(idx)

    def test_singular_detected(self):
        U = np.ones((5, 2))
        with pytest.raises(SingularInterpolationError) as info:
            greedy_points(U)
        assert info.value.mode_index == 1

    def test_condition(self):
        assert InterpolationPoints(np.array([0]), np.eye(1)).condition == 1.0


@pytest.fixture(scope="module")
def collateral(disc, traj):
    return pod(operator_images(disc, traj).T, eps=1e-8)


class TestInterpolation:
    def test_reproduces_modes(self, collateral):
        P = greedy_points(collateral)
        M = collateral.modes
        for j in range(M.shape[1]):
            _, approx = interpolate(collateral, P, M[P.indices, j])
            assert np.abs(approx - M[:, j]).max() < 1e-10

    def test_span_is_interpolated_exactly(self, collateral):
        P = greedy_points(collateral)
        M = collateral.modes
        coef = np.random.default_rng(3).standard_normal(M.shape[1])
        g = M @ coef
        theta, approx = interpolate(M, P, g[P.indices])
        np.testing.assert_allclose(theta, coef, rtol=1e-8, atol=1e-8)
        assert np.abs(approx - g).max() < 1e-10 * np.abs(g).max()

    def test_operator_images_need_iterates(self, disc, config, mesh):
        tr = simulate(ParameterPoint(1.0), config, mesh, disc=disc, t_end=0.02)
        with pytest.raises(ValueError):
            operator_images(disc, tr)

    def test_snapshot_provenance(self, disc, traj):
        sets = collect_operator_snapshots(disc, [traj])
        n = sum(len(its) for its in traj.iterates)
        assert all(len(s) == n for s in sets.values())
        assert sets["u1"].provenance[0] == (traj.parameter.as_tuple(), 1, 0)


class TestArtifact:
    def test_sizes(self, artifact, mesh):
        assert all(0 < r <= n for r, n in zip(artifact.sizes, mesh.component_sizes()))
        assert artifact.collateral_sizes == tuple(len(artifact.points[c].indices)
                                                  for c in ("u1", "u2", "u3", "u4"))

    def test_point_matrices_well_conditioned(self, artifact):
        assert max(artifact.points[c].condition for c in artifact.points) < 1e8

    def test_rebuild_is_bit_identical(self, config, small_mesh, small_disc):
        train = [ParameterPoint(c) for c in (0.5, 2.0)]
        a, b = (offline_build(train, config, small_mesh, disc=small_disc) for _ in range(2))
        for c in ("u1", "u2", "u3", "u4"):
            assert a.bases[c].modes.tobytes() == b.bases[c].modes.tobytes()
            assert a.collateral[c].modes.tobytes() == b.collateral[c].modes.tobytes()
            np.testing.assert_array_equal(a.points[c].indices, b.points[c].indices)

    def test_projected_shapes(self, artifact):
        W = artifact.projected((2, 1, 1, 1), (3, 2, 2, 2))
        assert W["u1"].shape == (2, 3) and W["u4"].shape == (1, 2)

    def test_metadata(self, artifact):
        md = artifact.metadata
        assert len(md["train"]) == 5 and md["dt"] == 1e-2
        assert md["offline_seconds"] >= md["compression_seconds"]

    def test_empty_training_set(self, config, mesh):
        with pytest.raises(ValueError):
            offline_build([], config, mesh)

    def test_global_pod_variant(self, config, small_mesh, small_disc):
        train = [ParameterPoint(c) for c in (0.5, 2.0)]
        a = offline_build(train, config, small_mesh, disc=small_disc, use_hapod=False,
                          newton_stages=False)
        assert not a.metadata["use_hapod"] and not a.metadata["newton_stages"]
        a.check_consistency()


class TestReducedModel:
    def test_touches_fewer_dofs(self, rom, mesh):
        assert rom.dof_touch_count < mesh.n_dofs
        assert len(rom.rows) == sum(rom.n_points)

    def test_rows_evaluated_per_call(self, rom, step):
        a, ap = step
        before = rom.disc.touched
        rom.interpolated_operator_apply(a, ParameterPoint(1.5), 1e-2, ap)
        assert rom.disc.touched - before == sum(rom.n_points)

    def test_residual_formula(self, rom, disc, step):
        a, ap = step
        mu = ParameterPoint(1.5)
        r = rom.interpolated_operator_apply(a, mu, 1e-2, ap)
        G = disc.operator(rom.lift(a), rom.lift(ap), mu, 1e-2)
        expected = rom.W @ G[rom.rows] - rom.V.T @ disc.rhs(mu)
        np.testing.assert_allclose(r, expected, rtol=1e-10, atol=1e-10 * np.abs(expected).max())

    def test_jacobian_finite_differences(self, rom, step):
        a, ap = step
        mu = ParameterPoint(1.5)
        J = rom.reduced_jacobian(a, mu, 1e-2, ap)
        rng = np.random.default_rng(0)
        for _ in range(5):
            v = rng.standard_normal(a.size) * 1e-4 * np.linalg.norm(a) / np.sqrt(a.size)
            fd = (rom.interpolated_operator_apply(a + v, mu, 1e-2, ap)
                  - rom.interpolated_operator_apply(a - v, mu, 1e-2, ap)) / 2
            assert np.linalg.norm(fd - J @ v) < 1e-6 * np.linalg.norm(J @ v)

    def test_galerkin_jacobian(self, artifact, disc, step):
        g = ReducedModel(artifact, hyper_reduction=False, disc=disc)
        a, ap = step
        mu = ParameterPoint(1.5)
        g._begin_step(ap)
        r, J = g.residual_and_jacobian(a, mu, 1e-2)
        v = 1e-6 * np.ones(a.size)
        g._begin_step(ap)
        fd = (g.residual_and_jacobian(a + v, mu, 1e-2, False)[0]
              - g.residual_and_jacobian(a - v, mu, 1e-2, False)[0]) / 2
        assert np.linalg.norm(fd - J @ v) < 1e-6 * np.linalg.norm(J @ v)

    def test_accuracy_off_training_set(self, rom, config, mesh, disc):
        mu = ParameterPoint(1.5)
        fom = simulate(mu, config, mesh, disc=disc)
        red = rom.simulate(mu)
        assert relative_l2l2_error(fom, red) < 1e-3
        assert red.soc_at_emin == pytest.approx(fom.soc_at_emin, rel=1e-3)

    def test_galerkin_agrees(self, artifact, rom, disc):
        mu = ParameterPoint(1.5)
        g = ReducedModel(artifact, hyper_reduction=False, disc=disc).simulate(mu)
        assert relative_l2l2_error(g, rom.simulate(mu)) < 1e-3

    def test_backends_agree(self, artifact, config, mesh):
        mu = ParameterPoint(2.5)
        runs = [ReducedModel(artifact, disc=Discretization(config, mesh, backend=b)).simulate(mu)
                for b in ("numba", "numpy")]
        np.testing.assert_allclose(runs[0].coefficients, runs[1].coefficients, rtol=1e-8, atol=1e-8)

    def test_lift(self, rom, mesh):
        lifted, rt = rom_simulate(ParameterPoint(1.0), rom.artifact, model=rom)
        assert lifted.states.shape == (len(rt), mesh.n_dofs)
        assert lifted.soc_at_emin == rt.soc_at_emin

    def test_nested_sizes(self, artifact, disc):
        small = ReducedModel(artifact, sizes=(3, 1, 1, 1), n_points=(3, 1, 1, 1), disc=disc)
        assert small.r_tot == 6 and small.W.shape == (6, 6)

    @pytest.mark.parametrize("sizes", [(0, 1, 1, 1), (10 ** 4, 1, 1, 1)])
    def test_size_range(self, artifact, disc, sizes):
        with pytest.raises(ValueError):
            ReducedModel(artifact, sizes=sizes, disc=disc)

    def test_mesh_mismatch(self, artifact, small_disc):
        with pytest.raises(ValueError, match="mesh"):
            ReducedModel(artifact, disc=small_disc)

    def test_config_mismatch(self, artifact, mesh):
        other = Discretization(CellConfig().replace(e_min=-0.3), mesh)
        with pytest.raises(ValueError, match="hash"):
            ReducedModel(artifact, disc=other)


class TestExactReproduction:
    def test_untruncated_small_mesh(self, config, small_mesh, small_disc):
        mu = ParameterPoint(1.0)
        art = offline_build([mu], config, small_mesh, eps=0.0, disc=small_disc, rtol=1e-10)
        fom = simulate(mu, config, small_mesh, disc=small_disc, rtol=1e-10)
        red = ReducedModel(art, disc=small_disc).simulate(mu)
        assert relative_l2l2_error(fom, red) < 1e-6
