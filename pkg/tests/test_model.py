import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from batrom import model
from batrom.model import (CellConfig, DomainError, ElectrodeParams, ParameterPoint, PorousGeometry,
                          butler_volmer_g, coefficient, coefficients, f_active, f_electrolyte,
                          gamma_active, gamma_electrolyte, initial_values, surface_affinity)


class TestMaterialFunctions:
    def test_gamma_electrolyte_at_initial_fraction(self):
        assert gamma_electrolyte(0.25575, 4.0) == pytest.approx(5.1886, abs=1e-3)

    def test_gamma_electrolyte_dilute_limit(self):
        assert gamma_electrolyte(0.0, 4.0) == 1.0

    @pytest.mark.parametrize("y", [0.5, 0.7, -0.1])
    def test_gamma_electrolyte_domain(self, y):
        with pytest.raises(DomainError):
            gamma_electrolyte(y, 4.0)

    def test_gamma_active_values(self):
        assert gamma_active(0.5, 0.0) == pytest.approx(2.0)
        assert gamma_active(0.5, 1.0) == pytest.approx(3.0)

    @pytest.mark.parametrize("y", [0.0, 1.0])
    def test_gamma_active_domain(self, y):
        with pytest.raises(DomainError):
            gamma_active(y, 1.0)

    def test_f_active_symmetric_point(self):
        assert f_active(0.5, 2.0) == pytest.approx(0.0, abs=1e-15)

    def test_f_active_logit_argument(self):
        assert f_active(0.99, 1.0) == pytest.approx(np.log(99.0) + 0.98, rel=1e-12)
        assert f_active(0.2, 0.0) == pytest.approx(np.log(0.25), rel=1e-12)

    def test_f_electrolyte_derivative(self):
        y, h = 0.1, 1e-7
        d = y * (f_electrolyte(y + h, 4.0) - f_electrolyte(y - h, 4.0)) / (2 * h)
        assert d == pytest.approx(2.0, rel=1e-6)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.02, 0.98), st.floats(-2.0, 3.0))
    def test_f_active_is_antiderivative(self, y, g):
        h = 1e-6 * min(y, 1 - y)
        d = y * (f_active(y + h, g) - f_active(y - h, g)) / (2 * h)
        assert d == pytest.approx(gamma_active(y, g), rel=1e-6)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.01, 0.48), st.floats(1.0, 8.0))
    def test_f_electrolyte_is_antiderivative(self, y, kappa):
        h = 1e-6 * min(y, 0.5 - y)
        d = y * (f_electrolyte(y + h, kappa) - f_electrolyte(y - h, kappa)) / (2 * h)
        assert d == pytest.approx(gamma_electrolyte(y, kappa), rel=1e-6)

    def test_butler_volmer(self):
        assert butler_volmer_g(0.0) == 0.0
        assert butler_volmer_g(1.0) == pytest.approx(2 * np.sinh(0.5))
        assert butler_volmer_g(2.0, 1.0) == pytest.approx(np.exp(2.0) - 1.0)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-20, 20, allow_subnormal=False))
    def test_butler_volmer_odd_and_monotone(self, z):
        assert butler_volmer_g(-z) == pytest.approx(-butler_volmer_g(z), abs=1e-12, rel=1e-12)
        assert np.sign(butler_volmer_g(z)) == np.sign(z)

    def test_butler_volmer_alpha_checked(self):
        with pytest.raises(ValueError):
            butler_volmer_g(1.0, 1.5)

    def test_affinity_monotone_in_solid_potential(self):
        a = surface_affinity(0.0, 0.1, 0.4, 0.2, 1.0, 4.0)
        b = surface_affinity(0.1, 0.1, 0.4, 0.2, 1.0, 4.0)
        assert b - a == pytest.approx(0.1)


class TestParameters:
    def test_reference_initial_fraction(self, config):
        assert config.y_e_initial == pytest.approx(0.2557348541, rel=1e-9)

    def test_capacity_slope_is_one(self, config):
        assert config.capacity_slope() == pytest.approx(1.0, rel=1e-12)

    def test_initial_values_zero_affinity(self, config):
        iv = initial_values(config)
        kappa = config.electrolyte.solvation_number
        for e in ("anode", "cathode"):
            lam = surface_affinity(iv["phi_s"][e], iv["phi_e"], iv["y_a"][e], iv["y_e"],
                                   config.electrode(e).enthalpy_gamma, kappa)
            assert abs(lam) < 1e-12

    def test_initial_cell_voltage(self, config):
        iv = initial_values(config)
        assert iv["phi_s"]["cathode"] == pytest.approx(11.1502397003, rel=1e-9)

    def test_hash_changes_with_parameters(self, config):
        other = config.replace(e_min=-0.3)
        assert other.config_hash() != config.config_hash()
        assert CellConfig().config_hash() == config.config_hash()

    def test_dict_round_trip(self, config):
        assert CellConfig.from_dict(config.to_dict()) == config

    @pytest.mark.parametrize("kw", [
        {"y_initial": 1.0}, {"diff_ref": 0.0}, {"exchange_rate": -1.0}, {"enthalpy_gamma": -3.0},
    ])
    def test_electrode_validation(self, kw):
        with pytest.raises(ValueError):
            ElectrodeParams(**kw)

    def test_geometry_validation(self):
        with pytest.raises(ValueError):
            PorousGeometry(psi_E=1.2)

    def test_parameter_point_validation(self):
        with pytest.raises(ValueError):
            ParameterPoint(-1.0)
        with pytest.raises(ValueError):
            ParameterPoint(1.0, d_scale=0.0)

    def test_frozen(self, config):
        with pytest.raises(dataclasses.FrozenInstanceError):
            config.e_min = 0.0


class TestCoefficients:
    def test_separator_has_no_solid(self, config):
        with pytest.raises(KeyError):
            coefficient("D_A", 0.3, "separator", config)
        with pytest.raises(KeyError):
            coefficient("sigma_S", 0.3, "separator", config)

    def test_electrolyte_density_identities(self, config):
        el = config.electrolyte
        y = np.linspace(0.01, 0.45, 7)
        h = 1e-7
        d = (model.n_salt(y + h, el) - model.n_salt(y - h, el)) / (2 * h)
        np.testing.assert_allclose(d, model.c_e(y, el), rtol=1e-7)

    def test_region_keys(self, config):
        sep = coefficients(0.25, "separator", config)
        cat = coefficients(0.25, "cathode", config, nu=0.5, point=ParameterPoint(1.0))
        assert "sigma_S" not in sep
        assert {"sigma_S", "D_A"} <= set(cat)
