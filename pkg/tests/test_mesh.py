import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from batrom.mesh import (PseudoMesh, State, build_mesh, decode, encode, initial_state,
                         micro_element_mass)


class TestPseudoMesh:
    def test_desk_scale_sizes(self, mesh):
        assert mesh.n_macro_total == 58
        assert mesh.n_electrode == 40
        assert mesh.component_sizes() == (400, 40, 58, 58)
        assert mesh.n_dofs == 556

    def test_grid_count(self, mesh):
        assert mesh.grid_dofs == 3 * 20 * (10 + 3)

    def test_macro_nodes_cover_unit_interval(self, mesh):
        x = mesh.macro_nodes
        assert x[0] == 0.0 and x[-1] == 1.0
        assert np.all(np.diff(x) > 0)

    def test_interfaces_shared(self, mesh):
        a, s, c = (mesh.region_nodes(r) for r in ("anode", "separator", "cathode"))
        assert a[-1] == s[0] and s[-1] == c[0]
        np.testing.assert_array_equal(mesh.electrode_macro_index(), np.concatenate([a, c]))

    @pytest.mark.parametrize("n_macro,n_micro", [(1, 5), (5, 1), (0, 0)])
    def test_rejects_degenerate(self, n_macro, n_micro):
        with pytest.raises(ValueError):
            PseudoMesh(n_macro, n_micro)

    def test_widths_must_sum_to_one(self):
        with pytest.raises(ValueError):
            PseudoMesh(4, 4, (0.5, 0.5, 0.5))

    def test_signature_distinguishes_meshes(self, config):
        assert build_mesh(20, 10, config).signature == build_mesh(20, 10, config).signature
        assert build_mesh(20, 10, config).signature != build_mesh(20, 11, config).signature

    @pytest.mark.parametrize("n_micro", [2, 5, 10, 40])
    def test_micro_weights_integrate_nu_squared(self, n_micro):
        w = PseudoMesh(3, n_micro).micro_mass_weights()
        assert w.sum() == pytest.approx(1.0 / 3.0, rel=1e-13)

    def test_micro_mass_exact_for_linear_profile(self):
        # flipped coordinate nu_tilde = 1 - nu; integral of nu^2 * nu_tilde = 1/12
        n = 7
        w = PseudoMesh(3, n).micro_mass_weights()
        assert w @ np.linspace(0, 1, n) == pytest.approx(1.0 / 12.0, rel=1e-13)

    def test_element_mass_positive_definite(self):
        M = micro_element_mass(6)
        for m00, m01, m11 in M:
            assert np.all(np.linalg.eigvalsh([[m00, m01], [m01, m11]]) > 0)

    def test_electrode_weights(self, mesh, config):
        w = mesh.electrode_weights()
        assert w[:20].sum() == pytest.approx(config.width_fraction("anode"), rel=1e-13)
        assert w[20:].sum() == pytest.approx(config.width_fraction("cathode"), rel=1e-13)


class TestState:
    def test_initial_state_uniform(self, config, mesh):
        s = initial_state(config, mesh)
        assert s.u.shape == (mesh.n_dofs,)
        assert np.ptp(s.u3) == 0.0 and np.ptp(s.u4) == 0.0
        assert np.ptp(s.y_a[:20]) == 0.0 and np.ptp(s.y_a[20:]) == 0.0
        assert s.is_evaluable()

    def test_initial_fractions(self, config, mesh):
        s = initial_state(config, mesh)
        assert s.y_a[0, 0] == pytest.approx(config.anode.y_initial, rel=1e-12)
        assert s.y_a[-1, 0] == pytest.approx(config.cathode.y_initial, rel=1e-12)
        assert s.u3[0] == pytest.approx(config.y_e_initial, rel=1e-12)

    def test_shape_checked(self, mesh):
        with pytest.raises(ValueError):
            State(mesh, np.zeros(mesh.n_dofs + 1))

    def test_not_evaluable_outside_domain(self, config, mesh):
        s = initial_state(config, mesh).copy()
        s.u[mesh.component_slice("u3")][3] = 0.6
        assert not s.is_evaluable()

    def test_copy_is_independent(self, config, mesh):
        s = initial_state(config, mesh)
        c = s.copy()
        c.u[0] += 1.0
        assert c.u[0] != s.u[0]

    @settings(max_examples=50, deadline=None)
    @given(st.floats(1e-12, 1 - 1e-12))
    def test_encode_round_trip(self, y):
        assert decode(encode(y)) == pytest.approx(y, rel=1e-9, abs=1e-15)
