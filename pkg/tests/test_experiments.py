import numpy as np
import pytest

from batrom.experiments import (RunSpec, nested_sizes, parse_parameter_set, run_experiment_1,
                                run_experiment_2, run_experiment_3, select_sizes)
from batrom.model import ParameterPoint


def small_spec(out, **kw):
    opts = dict(out=out, n_macro=6, n_micro=4, train="0.5:2:3", test="0.5:2:2", n_cycles=4,
                fom_every=2, n_test=2, n_sizes=2, curve_rates=(0.5,), cycle_rates=(0.5, 1.0),
                betas=(0.4, 0.7))
    opts.update(kw)
    return RunSpec(**opts)


def csv_bytes(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.glob("*.csv"))
            if not p.name.endswith("_timing.csv")}


class TestParameterSets:
    def test_range(self):
        pts = parse_parameter_set("0.01:4:5")
        np.testing.assert_allclose([p.c_rate for p in pts], np.linspace(0.01, 4, 5))

    def test_list(self):
        assert [p.c_rate for p in parse_parameter_set("0.5,1,2")] == [0.5, 1.0, 2.0]

    def test_grid(self):
        pts = parse_parameter_set("d_scale=0.1:0.5:3 l_scale=0.2,0.4", base=ParameterPoint(2.0))
        assert len(pts) == 6
        assert {p.c_rate for p in pts} == {2.0}
        assert pts[1].as_tuple() == (2.0, 0.1, 0.4)

    def test_random_is_seeded(self):
        a = parse_parameter_set("0.01:4:10", random=True, seed=3)
        b = parse_parameter_set("0.01:4:10", random=True, seed=3)
        c = parse_parameter_set("0.01:4:10", random=True, seed=4)
        assert a == b and a != c
        assert all(0.01 <= p.c_rate <= 4 for p in a)

    def test_random_joint(self):
        pts = parse_parameter_set("d_scale=0.1:0.5:4 l_scale=0.1:0.5:4", random=True)
        assert len(pts) == 4

    @pytest.mark.parametrize("text", ["", "1:2", "2:1:3", "x=1", "d_scale=0.1:0.5:4 l_scale=0.1:0.5:3 r"])
    def test_invalid(self, text):
        with pytest.raises(ValueError):
            parse_parameter_set(text, random=True)


class TestSizes:
    def test_nested(self):
        assert nested_sizes((8, 4, 2, 1), 4) == [(2, 1, 1, 1), (4, 2, 1, 1), (6, 3, 2, 1), (8, 4, 2, 1)]

    def test_select(self):
        rows = [[5, 2, 1, 1, 1, 1, np.nan], [9, 4, 2, 2, 1, 0, 2e-5], [13, 6, 3, 3, 1, 0, 1e-6]]
        assert select_sizes(rows, 1e-5) == (6, 3, 3, 1)
        assert select_sizes(rows, 1e-9) == (6, 3, 3, 1)
        assert select_sizes(rows, 1e-4) == (4, 2, 2, 1)

    def test_spec_validation(self, tmp_path):
        with pytest.raises(ValueError):
            RunSpec(out=tmp_path, n_cycles=0)


class TestDrivers:
    def test_experiment_1(self, tmp_path):
        rep = run_experiment_1(small_spec(tmp_path, curve_rates=(0.01, 1.0)))
        assert (tmp_path / "exp1_errors.csv").exists()
        assert (tmp_path / "exp1_timing.csv").exists()
        assert rep.checks["rom_failures"] == 0
        assert rep.checks["ocp_max_rel_dev"] < 0.02

    def test_experiment_2(self, tmp_path):
        rep = run_experiment_2(small_spec(tmp_path))
        names = {p.name for p in rep.files}
        assert "exp2_compare_c1.csv" in names
        assert "exp2_capacity_diffusion_c1_beta0.4.csv" in names
        assert rep.checks["capacity_rel_error_c1"] < 1e-2
        assert rep.checks["beta_ordering_diffusion_c1"]

    def test_experiment_3(self, tmp_path):
        rep = run_experiment_3(small_spec(tmp_path))
        names = {p.name for p in rep.files}
        assert "exp3_capacity_reaction_rate_c0.5_beta0.6.csv" in names
        assert "exp3_compare_c1.csv" in names

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_experiment_2(small_spec(a))
        run_experiment_2(small_spec(b))
        assert csv_bytes(a) == csv_bytes(b)
        assert len(csv_bytes(a)) > 3
