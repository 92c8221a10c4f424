"""
Tests for attack configuration parsing, validation and persistence.
"""

import pytest

from dfms.attack import AttackConfig, build_config, config_keys, load_config, parse_config_text, save_config
from dfms.attack.config import config_to_text, flatten_config
from dfms.core.errors import ConfigError


def test_empty_text_gives_defaults():
    config, defaulted = parse_config_text("")
    assert config == AttackConfig()
    assert defaulted == config_keys()
    assert config.lambda_div == 500.0
    assert config.N_Q == 8_000_000
    assert config.total_budget == 2 * 50_000 + 8_000_000


def test_parse_values_and_comments():
    text = """
    # tiny run
    seed = 7
    lambda_div = 250   # diversity weight
    mode = SOFT-KL
    discriminator_enabled = false
    clone.lr = 0.05
    nets.clone_arch = resnet8
    data.budget = none
    """
    config, defaulted = parse_config_text(text)
    assert config.seed == 7
    assert config.lambda_div == 250.0
    assert config.mode == "soft-kl"
    assert config.discriminator_enabled is False
    assert config.clone.lr == 0.05
    assert config.nets.clone_arch == "resnet8"
    assert config.data.budget is None
    assert "seed" not in defaulted
    assert "n_G" in defaulted


def test_invalid_value_names_the_field():
    with pytest.raises(ConfigError) as exc:
        parse_config_text("lambda_div = -1")
    assert exc.value.field == "lambda_div"
    with pytest.raises(ConfigError) as exc:
        parse_config_text("clone.lr = 0")
    assert exc.value.field == "clone.lr"
    with pytest.raises(ConfigError):
        parse_config_text("mode = psychic")


def test_unknown_duplicate_and_malformed_lines():
    with pytest.raises(ConfigError) as exc:
        parse_config_text("lambda = 3")
    assert exc.value.field == "lambda"
    with pytest.raises(ConfigError) as exc:
        parse_config_text("seed = 1\nseed = 2")
    assert exc.value.field == "seed"
    with pytest.raises(ConfigError):
        parse_config_text("seed 1")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_save_and_load_roundtrip(tmp_path):
    config = build_config({"seed": 3, "gan.shared_latent": True, "init_mix_fraction": 0.25, "data.budget": 1000})
    path = save_config(config, tmp_path / "run" / "config.txt")
    loaded, defaulted = load_config(path)
    assert loaded == config
    assert defaulted == []
    assert config_to_text(loaded) == path.read_text()


def test_build_config_on_base():
    base = build_config({"seed": 9, "n_C": 10})
    derived = build_config({"lambda_div": 0}, base=base)
    assert (derived.seed, derived.n_C, derived.lambda_div) == (9, 10, 0.0)
    assert base.lambda_div == 500.0


def test_flatten_config_keys_are_dotted():
    flat = flatten_config(AttackConfig())
    assert "clone.alternating_lr" in flat
    assert "nets.latent_dim" in flat
    assert "clone" not in flat
