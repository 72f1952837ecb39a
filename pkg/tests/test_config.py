"""
Tests for configuration management.
"""

import json
import math

import pytest

from src.utils.config import LITERAL_EXPONENTS, Config, ExperimentConfig
from src.utils.errors import ConfigurationError


class TestExperimentConfig:
    """Tests for the flat experiment configuration."""

    def test_defaults_validate(self):
        ExperimentConfig().validate()

    def test_derived_fields(self):
        config = ExperimentConfig(num_users=3, deadline_slots=7, episode_slots=100, batch_size=50,
                                  pretrain_episodes=3)
        assert config.deadlines == [7, 7, 7]
        assert config.pretrain_iterations == 6
        assert math.isinf(config.regime_mean_slots)
        assert config.with_overrides(scenario="nonstationary").regime_mean_slots == 100.0

    def test_strict_exponents(self):
        assert ExperimentConfig(literal_rules=True).exponents == LITERAL_EXPONENTS
        assert ExperimentConfig().exponents == (0.7, 0.6, 0.55)

    def test_overrides_skip_none(self):
        config = ExperimentConfig().with_overrides(seed=None, iterations=5)
        assert config.seed == 0
        assert config.iterations == 5

    @pytest.mark.parametrize("changes", [
        {"variant": "dqn"},
        {"scenario": "bursty"},
        {"packet_regime": "huge"},
        {"num_users": 0},
        {"batch_size": 10, "context_size": 20},
        {"critic_batches": 200},
        {"max_dropout_rate": 1.0},
        {"eps_min": 0.0},
        {"gain_min_db": 20.0},
    ])
    def test_invalid(self, changes):
        with pytest.raises(ConfigurationError):
            ExperimentConfig(**changes).validate()

    def test_unknown_keys(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict({"learning_rate": 0.1})


class TestConfigManager:
    """Tests for JSON persistence."""

    def test_defaults_without_file(self):
        assert Config().experiment == ExperimentConfig()

    def test_overlay(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"num_users": 2, "scenario": "nonstationary"}))
        config = Config(path)
        assert config.get("num_users") == 2
        assert config.get("num_antennas") == ExperimentConfig().num_antennas

    def test_save_and_reload(self, tmp_path):
        manager = Config.from_experiment(ExperimentConfig(seed=9, hidden_sizes=[3, 3]))
        path = manager.save(tmp_path / "out" / "config.json")
        assert Config(path).experiment == manager.experiment

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            Config(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigurationError):
            Config(path)

    def test_non_object(self, tmp_path):
        path = tmp_path / "list.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigurationError):
            Config(path)

    def test_set_then_get(self):
        manager = Config()
        manager.set("seed", 11)
        assert manager.get("seed") == 11
        assert manager.experiment.seed == 11
        assert manager.get("absent", "fallback") == "fallback"

    def test_set_unknown_key(self):
        with pytest.raises(ConfigurationError):
            Config().set("nope", 1)

    def test_save_needs_path(self):
        with pytest.raises(ConfigurationError):
            Config().save()
