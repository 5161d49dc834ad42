import numpy as np
import pytest

from micplan.errors import SchemaError
from micplan.robot import build_trig_table, load_robot

from instances import biped_robot


def base_doc():
    J = [[0.3, 0.0, 0.0], [0.0, 0.3, 0.0], [0.0, 0.0, 0.3]]
    return {
        "mass": 85.0,
        "d_lim": 0.22,
        "legs": [{"name": n, "L": 0.42, "phi": p, "J_nominal": J,
                  "tau_max": [120, 120, 120]}
                 for n, p in (("LF", 0.5), ("RF", -0.5), ("LH", 2.6),
                              ("RH", -2.6))],
        "com_box": {"min": [-0.15, -0.15, 0.4], "max": [0.15, 0.15, 0.7]},
        "initial_feet": [[0.37, 0.21, 0], [0.37, -0.21, 0],
                         [-0.37, 0.21, 0], [-0.37, -0.21, 0]],
        "initial_com": [0.0, 0.0, 0.55],
    }


class TestLoadRobot:
    def test_quadruped_accepted(self):
        robot = load_robot(base_doc())
        assert robot.mass == 85.0
        assert robot.n_legs == 4
        assert robot.leg_names == ["LF", "RF", "LH", "RH"]

    def test_zero_mass_rejected(self):
        doc = base_doc()
        doc["mass"] = 0.0
        with pytest.raises(SchemaError, match="mass"):
            load_robot(doc)

    def test_singular_jacobian_rejected(self):
        doc = base_doc()
        doc["legs"][2]["J_nominal"] = [[0.0] * 3] * 3
        with pytest.raises(SchemaError, match="singular"):
            load_robot(doc)

    def test_inverted_box_rejected(self):
        doc = base_doc()
        doc["com_box"]["min"][1] = 0.5
        with pytest.raises(SchemaError, match="com_box"):
            load_robot(doc)

    def test_nonpositive_torque_rejected(self):
        doc = base_doc()
        doc["legs"][0]["tau_max"] = [120, 0, 120]
        with pytest.raises(SchemaError, match="tau_max"):
            load_robot(doc)

    def test_hip_offset_rotation(self):
        robot = biped_robot()
        off = robot.hip_offset_xy(0, 1.0, 0.0)
        assert np.allclose(off, [0.0, 0.12], atol=1e-12)
        # quarter turn moves the left hip to -x
        off = robot.hip_offset_xy(0, 0.0, 1.0)
        assert np.allclose(off, [-0.12, 0.0], atol=1e-12)


class TestTrigTable:
    def test_single_segment_endpoint_interpolation(self):
        t = build_trig_table(1, (0.0, 0.01))
        assert t.sin_value(0.0) == pytest.approx(0.0, abs=1e-15)
        assert t.cos_value(0.0) == pytest.approx(1.0)
        assert t.sin_value(0.01) == pytest.approx(np.sin(0.01))

    def test_chord_error_bound_five_segments(self):
        # dense-sampling oracle against the h^2/8 chord bound
        t = build_trig_table(5, (-np.pi / 2, np.pi / 2))
        h = np.pi / 5
        thetas = np.linspace(-np.pi / 2, np.pi / 2, 10_000)
        err_s = max(abs(t.sin_value(th) - np.sin(th)) for th in thetas)
        err_c = max(abs(t.cos_value(th) - np.cos(th)) for th in thetas)
        assert err_s <= h * h / 8
        assert err_c <= h * h / 8

    def test_query_outside_range_raises(self):
        t = build_trig_table(5, (-1.0, 1.0))
        with pytest.raises(ValueError, match="outside"):
            t.segment_of(1.5)

    def test_empty_range_rejected(self):
        with pytest.raises(ValueError, match="range"):
            build_trig_table(3, (0.5, 0.5))
        with pytest.raises(ValueError, match="segment"):
            build_trig_table(0, (0.0, 1.0))

    def test_half_open_segments_unique(self):
        t = build_trig_table(4, (-1.0, 1.0))
        for th in np.linspace(-1.0, 1.0, 1001):
            k = t.segment_of(th)
            assert t.sin_bounds[k] <= th
            assert th <= t.sin_bounds[k + 1]
            if th < t.sin_bounds[-1]:
                assert th < t.sin_bounds[k + 1] or k == t.n_segments - 1
        assert t.segment_of(1.0) == 3

    def test_boundary_continuity(self):
        t = build_trig_table(7, (-1.2, 1.4))
        for k in range(1, 7):
            th = t.sin_bounds[k]
            left = t.sin_slope[k - 1] * th + t.sin_icept[k - 1]
            right = t.sin_slope[k] * th + t.sin_icept[k]
            assert left == pytest.approx(right, abs=1e-12)

    def test_sine_chord_underestimates_on_concave_side(self):
        t = build_trig_table(6, (0.0, np.pi / 2))
        for th in np.linspace(0, np.pi / 2, 500):
            assert t.sin_value(th) <= np.sin(th) + 1e-12
