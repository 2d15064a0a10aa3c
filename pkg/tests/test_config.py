import json
import math

import numpy as np
import pytest

from cloudmhe import ConfigError, RunConfig, paper_scenario_path


@pytest.fixture
def scenario_dict():
    with open(paper_scenario_path()) as fh:
        return json.load(fh)


class TestLoading:
    def test_bundled_scenario_loads(self, scenario_dict):
        config = RunConfig.from_dict(scenario_dict)
        assert config.sim.duration == 6.0
        assert config.sim.ts == 0.01
        assert config.mhe.horizon == 10
        assert len(config.road.left.segments) == 2
        assert config.road.speed == 15.0
        assert not config.road.stagger

    def test_degrees_converted(self, scenario_dict):
        config = RunConfig.from_dict(scenario_dict)
        x0 = config.sim.initial_state
        assert x0[10] == pytest.approx(-5 * math.pi / 180)
        assert x0[11] == pytest.approx(2 * math.pi / 180)
        assert x0[13] == pytest.approx(-3 * math.pi / 180)

    def test_rad_suffix_passthrough(self, scenario_dict):
        scenario_dict["sim"]["initial_state"][10] = "0.25 rad"
        config = RunConfig.from_dict(scenario_dict)
        assert config.sim.initial_state[10] == 0.25

    def test_wheelbase_derived_from_geometry(self, scenario_dict):
        config = RunConfig.from_dict(scenario_dict)
        assert config.road.wheelbase == pytest.approx(3.0)

    def test_default_sections_allowed(self):
        config = RunConfig.from_dict({})
        assert config.params.ms == 1200.0
        assert config.channel.ideal


class TestValidation:
    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="config.bogus"):
            RunConfig.from_dict({"bogus": 1})

    def test_unknown_nested_key_is_path_qualified(self, scenario_dict):
        scenario_dict["sim"]["wstd"] = 0.01
        with pytest.raises(ConfigError, match=r"sim\.wstd"):
            RunConfig.from_dict(scenario_dict)

    def test_negative_mass_names_key(self, scenario_dict):
        scenario_dict["params"]["ms"] = -100.0
        with pytest.raises(ConfigError, match="ms"):
            RunConfig.from_dict(scenario_dict)

    def test_bad_quantity_suffix(self, scenario_dict):
        scenario_dict["sim"]["initial_state"][10] = "-5 degrees"
        with pytest.raises(ConfigError, match=r"initial_state\[10\]"):
            RunConfig.from_dict(scenario_dict)

    def test_overlapping_road_segments_rejected(self, scenario_dict):
        scenario_dict["road"]["segments"][1]["start"] = 2.0
        with pytest.raises(ConfigError, match="overlap"):
            RunConfig.from_dict(scenario_dict)

    def test_segments_and_tracks_conflict(self, scenario_dict):
        scenario_dict["road"]["left"] = []
        with pytest.raises(ConfigError, match="road.segments"):
            RunConfig.from_dict(scenario_dict)

    def test_bad_drop_probability(self, scenario_dict):
        scenario_dict["network"]["drop_prob"] = 1.5
        with pytest.raises(ConfigError, match="network"):
            RunConfig.from_dict(scenario_dict)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            RunConfig.from_file(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            RunConfig.from_file(path)


class TestResidualBoxDefault:
    def test_auto_box_from_noise_std(self, scenario_dict):
        config = RunConfig.from_dict(scenario_dict)
        np.testing.assert_allclose(config.mhe.v_lo, [-0.1] * 7)
        np.testing.assert_allclose(config.mhe.v_hi, [0.1] * 7)

    def test_explicit_null_disables_box(self, scenario_dict):
        scenario_dict["mhe"]["v_lo"] = None
        scenario_dict["mhe"]["v_hi"] = None
        config = RunConfig.from_dict(scenario_dict)
        assert config.mhe.v_lo is None
        assert config.mhe.v_hi is None

    def test_explicit_bounds_honoured(self, scenario_dict):
        scenario_dict["mhe"]["v_lo"] = [-1.0] * 7
        scenario_dict["mhe"]["v_hi"] = [1.0] * 7
        config = RunConfig.from_dict(scenario_dict)
        np.testing.assert_allclose(config.mhe.v_lo, -1.0)

    def test_inf_strings_in_bounds(self, scenario_dict):
        scenario_dict["mhe"]["x_lo"] = ["-inf"] * 14
        scenario_dict["mhe"]["x_hi"] = ["inf"] * 13 + [2.0]
        config = RunConfig.from_dict(scenario_dict)
        assert config.mhe.x_lo[0] == -math.inf
        assert config.mhe.x_hi[13] == 2.0


class TestRoundTrip:
    def test_load_serialize_load_is_identity(self, scenario_dict):
        first = RunConfig.from_dict(scenario_dict)
        second = RunConfig.from_dict(first.to_dict())
        assert first == second

    def test_round_trip_with_everything_set(self, scenario_dict):
        scenario_dict["sim"]["input_steps"] = [{"t": 1.0, "u": [10.0, 0, 0, 0]}]
        scenario_dict["mhe"]["x_lo"] = ["-inf"] * 13 + [-0.5]
        scenario_dict["mhe"]["x_hi"] = ["inf"] * 13 + [0.5]
        scenario_dict["network"]["base_delay"] = 25.0
        scenario_dict["network"]["gps_err_std"] = 0.25
        scenario_dict["road"]["stagger"] = True
        first = RunConfig.from_dict(scenario_dict)
        second = RunConfig.from_dict(first.to_dict())
        assert first == second

    def test_distinct_tracks_round_trip(self, scenario_dict):
        segments = scenario_dict["road"].pop("segments")
        scenario_dict["road"]["left"] = segments
        scenario_dict["road"]["right"] = [segments[0]]
        first = RunConfig.from_dict(scenario_dict)
        second = RunConfig.from_dict(first.to_dict())
        assert first == second
        assert len(first.road.right.segments) == 1
