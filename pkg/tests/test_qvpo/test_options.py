import io
import logging
import os
import numpy as np
import pytest
from qvpo.envs import make_env
from qvpo.errors import ConfigurationError
from qvpo.option_handling import (CONFIG_KEYS, TrainConfig, build_config, load_config_file, parse_value,
                                  read_config)


def test_defaults():
    config = TrainConfig()
    assert config.env == "bandit"
    assert (config.n_d, config.n_e, config.k_b, config.k_t) == (64, 10, 4, 2)
    assert config.omega_ent == 0.01
    assert config.diffusion_steps == 20
    assert config.hidden == (256, 256)
    assert config.metrics_path == os.path.join(".", "qvpo_metrics.csv")


def test_every_field_is_a_config_key():
    assert set(CONFIG_KEYS) == set(TrainConfig().as_dict())


@pytest.mark.parametrize('text,expected', [
    ("12", 12),
    ("0.5", 0.5),
    ("true", True),
    ("qadv", "qadv"),
    ("1e-4", "1e-4"),
    ])
def test_parse_value(text, expected):
    assert parse_value(text) == expected


def test_read_key_value_config():
    handle = io.StringIO("# a comment\n"
                         "env = pendulum\n"
                         "\n"
                         "total_steps = 5000   # trailing comment\n"
                         "actor_lr = 1e-4\n"
                         "strict_gaussian = true\n")
    values = read_config(handle)
    assert values == {"env": "pendulum", "total_steps": 5000, "actor_lr": "1e-4", "strict_gaussian": True}
    config = build_config(values)
    assert config.actor_lr == 1e-4
    assert config.total_steps == 5000


def test_read_config_rejects_duplicates():
    with pytest.raises(ConfigurationError, match="line 2"):
        read_config(io.StringIO("seed = 1\nseed = 2\n"))


def test_read_config_rejects_lines_without_value():
    with pytest.raises(ConfigurationError, match="Line 2"):
        read_config(io.StringIO("seed = 1\nseed\n"))


def test_read_yaml_config():
    values = read_config(io.StringIO("env: bandit\nn_d: 32\nomega_ent: 0.1\n"), yaml_format=True)
    assert build_config(values).n_d == 32


def test_read_yaml_config_must_be_a_mapping():
    with pytest.raises(ConfigurationError):
        read_config(io.StringIO("- 1\n- 2\n"), yaml_format=True)
    assert read_config(io.StringIO(""), yaml_format=True) == {}


def test_load_config_file(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("seed = 7\nrun_id = abc\n")
    yml = tmp_path / "run.yaml"
    yml.write_text("seed: 8\n")
    assert load_config_file(str(conf)) == {"seed": 7, "run_id": "abc"}
    assert load_config_file(str(yml)) == {"seed": 8}


def test_load_config_file_logs_what_it_read(tmp_path, caplog):
    conf = tmp_path / "run.conf"
    conf.write_text("seed = 7\nrun_id = abc\n")
    with caplog.at_level(logging.INFO, logger="qvpo.option_handling"):
        load_config_file(str(conf))
    assert "Read 2 options from {}".format(conf) in caplog.text


def test_load_missing_config_file(tmp_path):
    with pytest.raises(OSError):
        load_config_file(str(tmp_path / "missing.conf"))


def test_overrides_take_precedence():
    config = build_config({"seed": 1, "n_d": 8}, seed=3, n_e=None)
    assert config.seed == 3
    assert config.n_d == 8
    assert config.n_e == 10


@pytest.mark.parametrize('values', [
    {"k_b": 2, "k_t": 3},
    {"n_d": 0},
    {"total_steps": -1},
    {"tau": 0.0},
    {"gamma": 1.0},
    {"env": "cartpole"},
    {"transform": "softmax"},
    {"beta_schedule": "cosine"},
    {"beta_schedule": "vp", "beta_max": 0.05},
    {"n_d": 4, "n_selected": 5},
    {"actor_lr": 0.0},
    {"unknown_option": 1},
    {"seed": 2.5},
    {"seed": "abc"},
    {"omega_ent": True},
    {"strict_gaussian": "sometimes"},
    ])
def test_build_config_rejects(values):
    with pytest.raises(ConfigurationError):
        build_config(values)


def test_integral_floats_are_accepted_for_integers():
    config = build_config({"total_steps": 2e4, "warmup_steps": "1e3"})
    assert config.total_steps == 20000 and isinstance(config.total_steps, int)
    assert config.warmup_steps == 1000


def test_strings_are_kept_as_strings():
    assert build_config({"run_id": 123}).run_id == "123"


def test_policy_config_follows_environment():
    config = build_config({"n_d": 16, "transform": "qcut", "n_selected": 2})
    policy = config.policy_config(make_env("pendulum").spec)
    assert policy.n_d == 16 and policy.transform == "qcut" and policy.n_selected == 2
    assert np.array_equal(policy.action_low, np.array([-2.0]))


def test_output_paths():
    config = build_config({"output_dir": "runs", "run_id": "b1"})
    assert config.metrics_path == os.path.join("runs", "b1_metrics.csv")
    assert config.agent_path == os.path.join("runs", "b1_agent.npz")
