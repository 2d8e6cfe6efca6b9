from pathlib import Path

import pytest
from pydantic import ValidationError as PydanticValidationError

from spde.config import ExperimentConfig
from spde.errors import GridError, HurstRangeError, ValidationError
from spde.noise import OutsideHypothesisWarning

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


class TestExperimentConfig:

    def test_defaults_are_the_headline_heat_run(self):
        config = ExperimentConfig()
        assert config.kernels.kind == "heat"
        assert config.noise.H == 0.3
        assert config.build_grid().L == pytest.approx(9.5)
        assert config.build_sigma().a == 0.5

    def test_ini_round_trip(self, small_config):
        assert ExperimentConfig.from_ini(small_config.to_ini()) == small_config

    def test_hash_ignores_run_local_keys(self, small_config):
        faster = small_config.with_overrides(["run.workers=8", "run.out_dir=/tmp/x"])
        assert faster.config_hash() == small_config.config_hash()
        assert len(small_config.config_hash()) == 64

    def test_hash_follows_seed(self, small_config):
        assert small_config.with_overrides(["run.seed=8"]).config_hash() != \
            small_config.config_hash()

    def test_overrides_are_revalidated(self, small_config):
        with pytest.raises(HurstRangeError):
            small_config.with_overrides(["noise.H=0.7"])

    @pytest.mark.parametrize("item", ["noise.H", "H=0.3", "physics.H=0.3", "noise.hurst=0.3"])
    def test_malformed_overrides(self, small_config, item):
        with pytest.raises(ValidationError):
            small_config.with_overrides([item])

    def test_outside_hypothesis_needs_flag(self):
        with pytest.raises(HurstRangeError):
            ExperimentConfig.model_validate({"noise": {"H": 0.2}})
        with pytest.warns(OutsideHypothesisWarning):
            config = ExperimentConfig.model_validate(
                {"noise": {"H": 0.2, "allow_outside_hypothesis": True}})
        assert config.hurst().outside_hypothesis

    def test_wave_needs_time_step_below_space_step(self):
        with pytest.raises(GridError):
            ExperimentConfig.model_validate({"kernels": {"kind": "wave"},
                                             "grid": {"nx": 4096, "nt": 16}})

    def test_time_lags_need_room_after_ramp(self):
        with pytest.raises(GridError):
            ExperimentConfig.model_validate({"regularity": {"h0": 0.9}})

    def test_comma_separated_lists(self):
        config = ExperimentConfig.model_validate(
            {"regularity": {"directions": "space", "p_values": "2, 4, 6"}})
        assert config.regularity.directions == ["space"]
        assert config.regularity.p_values == [2.0, 4.0, 6.0]

    def test_rejects_p_below_two(self):
        with pytest.raises(PydanticValidationError):
            ExperimentConfig.model_validate({"regularity": {"p_values": "1"}})

    def test_unknown_section(self):
        with pytest.raises(ValidationError):
            ExperimentConfig.from_ini("[physics]\nH = 0.3\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError):
            ExperimentConfig.load(tmp_path / "absent.ini")

    @pytest.mark.parametrize("name,kind", [("heat_headline.ini", "heat"),
                                           ("wave_headline.ini", "wave")])
    def test_shipped_configs_load(self, name, kind):
        config = ExperimentConfig.load(CONFIGS / name)
        assert config.kernels.kind == kind
        assert config.run.paths == 2048
        assert config.regularity.p_values == [2.0, 4.0]

    def test_builders(self, small_config):
        grid = small_config.build_grid(refine=1)
        assert grid.nx == 1024 and grid.nt == 64
        assert small_config.build_kernel().kind == "heat"
        assert small_config.build_init().family == "zero"
