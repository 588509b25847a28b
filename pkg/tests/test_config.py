"""Config resolution: defaults, file text, overrides, echo, validation."""

import pytest

from igloo.config import (
    DEFAULTS,
    FLAG_ALIASES,
    echo,
    flag_for_key,
    parse_config_text,
    resolve,
)
from igloo.errors import ConfigError


def test_defaults_resolve_complete_and_typed():
    cfg = resolve()
    assert set(cfg) == set(DEFAULTS)
    for key, (default, _) in DEFAULTS.items():
        assert cfg[key] == default
        assert type(cfg[key]) is type(default)


def test_every_default_has_help_text():
    for key, (_, help_text) in DEFAULTS.items():
        assert help_text and isinstance(help_text, str)


def test_file_text_layering():
    cfg = resolve("model.J = 50\ntrain.lr = 0.01\n")
    assert cfg["model.J"] == 50
    assert cfg["train.lr"] == 0.01
    assert cfg["model.p"] == DEFAULTS["model.p"][0]


def test_overrides_beat_file_text():
    cfg = resolve("model.J = 50\n", overrides={"model.J": "60"})
    assert cfg["model.J"] == 60


def test_comments_and_blank_lines():
    text = "# full line comment\n\nmodel.J = 12  # trailing comment\n   \n"
    assert parse_config_text(text) == {"model.J": "12"}


def test_value_may_contain_equals(tmp_path):
    cfg = resolve("paths.out_dir = runs/a=b\n")
    assert cfg["paths.out_dir"] == "runs/a=b"


def test_unknown_key_named_in_file():
    with pytest.raises(ConfigError, match=r"cfg:2: unknown key 'model\.js'"):
        parse_config_text("model.J = 3\nmodel.js = 4\n", source="cfg")


def test_unknown_key_named_in_overrides():
    with pytest.raises(ConfigError, match="unknown key 'modell.J'"):
        resolve(overrides={"modell.J": "3"})


def test_missing_equals_reports_line():
    with pytest.raises(ConfigError, match="expected key=value"):
        parse_config_text("model.J 3\n")


def test_integer_coercion_failure_names_key():
    with pytest.raises(ConfigError, match="model.J: expected integer, got 'banana'"):
        resolve("model.J = banana\n")


def test_float_coercion_failure_names_key():
    with pytest.raises(ConfigError, match="train.lr: expected number"):
        resolve(overrides={"train.lr": "fast"})


def test_float_accepts_int_text():
    assert resolve(overrides={"train.lr": "1"})["train.lr"] == 1.0


def test_int_rejects_float_text():
    with pytest.raises(ConfigError, match="model.J"):
        resolve(overrides={"model.J": "3.5"})


def test_echo_round_trips():
    cfg = resolve(overrides={"task": "addition", "model.J": "250",
                             "train.lr": "0.0125", "train.eps": "1e-9",
                             "paths.out_dir": "runs/exp 1",
                             "train.threshold_metric": "mse",
                             "train.threshold_value": "0.01"})
    text = echo(cfg)
    again = resolve(text)
    assert again == cfg
    assert echo(again) == text


def test_echo_is_sorted_and_complete():
    lines = echo(resolve()).strip().splitlines()
    keys = [line.split("=", 1)[0] for line in lines]
    assert keys == sorted(DEFAULTS)


def test_flag_for_key():
    assert flag_for_key("model.J") == "--model-J"
    assert flag_for_key("copy.T") == "--copy-T"
    assert flag_for_key("train.max_steps") == "--train-max-steps"
    assert flag_for_key("model.b_mode") == "--model-b-mode"


def test_flag_aliases_target_real_keys():
    for flag, key in FLAG_ALIASES.items():
        assert key in DEFAULTS
        assert flag.startswith("--")
    assert FLAG_ALIASES["--max-steps"] == "train.max_steps"
    assert FLAG_ALIASES["--lr"] == "train.lr"
    assert FLAG_ALIASES["--out-dir"] == "paths.out_dir"


@pytest.mark.parametrize("key,value,needle", [
    ("task", "sorting", "task"),
    ("model.b_mode", "diagonal", "per_patch or literal"),
    ("model.plan", "grid", "random or deterministic"),
    ("model.dropout", "1.0", "model.dropout"),
    ("model.dropout", "-0.1", "model.dropout"),
    ("model.sigma", "0.0", "model.sigma"),
    ("charlm.train_frac", "1.5", "charlm.train_frac"),
    ("model.J", "0", "model.J"),
    ("train.batch_size", "-4", "train.batch_size"),
    ("train.max_steps", "-1", "train.max_steps"),
])
def test_validation_rejects(key, value, needle):
    with pytest.raises(ConfigError, match=needle):
        resolve(overrides={key: value})


def test_native_values_pass_through():
    cfg = resolve(overrides={"model.J": 7, "train.lr": 0.5})
    assert cfg["model.J"] == 7 and cfg["train.lr"] == 0.5
