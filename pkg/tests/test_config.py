"""Configuration dataclasses and the flat text format."""

import pytest

from bridgepose.config import (
    AugmentPolicy,
    FixtureSpec,
    ModelConfig,
    RunConfig,
    TrainSchedule,
    apply_overrides,
    config_from_text,
    config_to_text,
    known_keys,
    load_config,
    model_digest,
)
from bridgepose.errors import ConfigError


def test_defaults_validate():
    config = RunConfig()
    config.validate()
    assert config.model.levels == 4
    assert config.model.columns == 7
    assert config.model.num_joints == 16
    assert config.train.milestones == (180, 260)


def test_default_channel_multipliers():
    assert ModelConfig().channel_multipliers == (1, 2, 4, 7)
    assert ModelConfig(levels=3, output_size=128).channel_multipliers == (1, 2, 4)
    assert ModelConfig(levels=1).channel_multipliers == (1,)


def test_width_and_spatial():
    cfg = ModelConfig()
    assert [cfg.width(lvl) for lvl in (1, 2, 3, 4)] == [16, 32, 64, 112]
    assert [cfg.spatial(lvl) for lvl in (1, 2, 3, 4)] == [128, 64, 32, 16]


@pytest.mark.parametrize(
    "kwargs",
    [
        {"levels": 0},
        {"columns": 0},
        {"num_joints": 0},
        {"base_channels": 0},
        {"channel_multipliers": (1, 2)},
        {"channel_multipliers": (1, 0, 4, 7)},
        {"input_size": 255},
        {"output_size": 100},
        {"hsa_placements": ((5, 1),)},
        {"hsa_placements": ((1, 8),)},
    ],
)
def test_model_validation_rejects(kwargs):
    with pytest.raises(ConfigError):
        ModelConfig(**kwargs).validate()


def test_output_size_must_cover_levels():
    # output 16 only supports 5 halvings; 6 levels need output >= 32
    with pytest.raises(ConfigError):
        ModelConfig(levels=6, input_size=32, output_size=16).validate()


@pytest.mark.parametrize(
    "kwargs",
    [
        {"initial_lr": 0.0},
        {"decay_factor": 1.0},
        {"decay_factor": 0.0},
        {"milestones": (260, 180)},
        {"milestones": (180, 180)},
        {"milestones": (0, 180)},
        {"milestones": (180, 300)},
        {"total_epochs": 0},
        {"batch_size": 0},
        {"target_sigma": 0.0},
        {"eval_interval": 0},
        {"max_steps": -1},
    ],
)
def test_schedule_validation_rejects(kwargs):
    with pytest.raises(ConfigError):
        TrainSchedule(**kwargs).validate()


@pytest.mark.parametrize(
    "kwargs",
    [
        {"p_rotate": -0.1},
        {"p_flip": 1.5},
        {"rotation_max_deg": -1.0},
        {"scale_min": 0.0},
        {"scale_min": 1.3, "scale_max": 1.2},
        {"half_body_min_visible": 1},
        {"half_body_padding": 0.0},
    ],
)
def test_augment_validation_rejects(kwargs):
    with pytest.raises(ConfigError):
        AugmentPolicy(**kwargs).validate()


def test_text_round_trip_defaults():
    config = RunConfig()
    assert config_from_text(config_to_text(config)) == config


def test_text_round_trip_custom():
    config = RunConfig(
        model=ModelConfig(
            levels=2,
            columns=4,
            num_joints=3,
            base_channels=4,
            channel_multipliers=(1, 2),
            bridges_enabled=False,
            hsa_enabled=True,
            hsa_placements=((1, 3), (2, 1)),
            input_size=32,
            output_size=16,
        ),
        train=TrainSchedule(initial_lr=0.01, milestones=(), total_epochs=5,
                            batch_size=4, max_steps=12),
        augment=AugmentPolicy(p_rotate=0.0, p_scale=0.25, p_flip=1.0),
        fixture=FixtureSpec(n_samples=8, image_size=64, num_joints=3, seed=11),
    )
    text = config_to_text(config)
    assert "model.hsa_placements = 1:3,2:1" in text
    assert "model.bridges_enabled = false" in text
    assert "train.milestones = " in text
    assert config_from_text(text) == config


def test_text_ignores_comments_and_blanks():
    text = "# a comment\n\nmodel.levels = 2\n  # indented comment\n"
    config = config_from_text(text)
    assert config.model.levels == 2


def test_text_bad_line_reports_lineno():
    with pytest.raises(ConfigError, match="line 2"):
        config_from_text("model.levels = 2\nmodel.columns 7\n")


def test_placements_default_keyword():
    config = config_from_text("model.hsa_placements = default\n")
    assert config.model.hsa_placements is None


def test_overrides_change_values():
    config = apply_overrides(RunConfig(), ["model.num_joints=17", "train.batch_size=4"])
    assert config.model.num_joints == 17
    assert config.train.batch_size == 4
    # untouched sections keep their defaults
    assert config.augment == AugmentPolicy()


def test_overrides_reject_unknown_key():
    with pytest.raises(ConfigError, match="unknown config key"):
        apply_overrides(RunConfig(), ["model.depth=4"])
    with pytest.raises(ConfigError, match="unknown config key"):
        apply_overrides(RunConfig(), ["optimizer.lr=0.1"])


def test_overrides_reject_bad_value():
    with pytest.raises(ConfigError, match="model.levels"):
        apply_overrides(RunConfig(), ["model.levels=four"])
    with pytest.raises(ConfigError, match="--set expects"):
        apply_overrides(RunConfig(), ["model.levels"])


def test_known_keys_cover_all_sections():
    keys = known_keys()
    assert len(keys) == len(set(keys))
    for expected in ("model.levels", "train.initial_lr", "augment.p_flip",
                     "fixture.seed"):
        assert expected in keys


def test_model_digest_stability():
    assert model_digest(ModelConfig()) == model_digest(ModelConfig())
    assert model_digest(ModelConfig()) != model_digest(ModelConfig(num_joints=17))
    # digest covers only the model section, not the rest of the run config
    assert len(model_digest(ModelConfig())) == 64


def test_load_config_defaults_and_overrides(tmp_path):
    config = load_config(None, ["model.levels=2", "model.channel_multipliers=1,2"])
    assert config.model.levels == 2
    path = tmp_path / "run.cfg"
    path.write_text(config_to_text(config), encoding="utf-8")
    reread = load_config(path)
    assert reread == config
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.cfg")


def test_load_config_validates():
    with pytest.raises(ConfigError):
        load_config(None, ["model.levels=0"])
