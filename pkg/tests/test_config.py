import pytest

from adaptrec.config import RunConfig, canonical_text, config_hash, load_config, save_config
from adaptrec.errors import ConfigError


def test_defaults_follow_reference_setup():
    config = RunConfig()
    assert config.embed_dim == 100
    assert config.state_dim == 150
    assert config.gamma == 0.82
    assert config.epochs == 100
    assert config.reward_k == 10
    assert config.max_seq_len == 200


def test_validation_catches_bad_values():
    with pytest.raises(ConfigError):
        RunConfig(mode="sometimes").validate()
    with pytest.raises(ConfigError):
        RunConfig(gamma=1.0).validate()
    with pytest.raises(ConfigError):
        RunConfig(epochs=0).validate()
    with pytest.raises(ConfigError):
        RunConfig(reward_mode="mrr").validate()
    with pytest.raises(ConfigError):
        RunConfig(dropout=1.0).validate()


def test_config_file_round_trip(tmp_path):
    config = RunConfig(embed_dim=12, lr=0.05, mode="fixed", fixed_length=7,
                       shared_embeddings=False, seed=3)
    path = tmp_path / "run.cfg"
    save_config(config, path)
    loaded = load_config(path)
    assert loaded == config


def test_config_file_parsing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nembed_dim = 16\nmode=fixed\n\nlr=0.01\n")
    config = load_config(path)
    assert config.embed_dim == 16
    assert config.mode == "fixed"
    assert config.lr == 0.01
    assert config.state_dim == 150  # untouched default


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("embed_dmi=16\n")
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(path)


def test_bad_value_rejected(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("embed_dim=sixteen\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_overrides_apply_after_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("epochs=5\n")
    config = load_config(path, epochs=2, seed=9)
    assert config.epochs == 2
    assert config.seed == 9


def test_hash_stable_and_sensitive():
    a = RunConfig(seed=1)
    b = RunConfig(seed=1)
    c = RunConfig(seed=2)
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)
    assert config_hash(a, "train") != config_hash(a, "evaluate")
    assert len(config_hash(a)) == 12


def test_canonical_text_sorted_and_complete():
    text = canonical_text(RunConfig())
    lines = text.strip().split("\n")
    keys = [line.split("=")[0] for line in lines]
    assert keys == sorted(keys)
    assert "gamma=0.82" in lines
    assert "shared_embeddings=true" in lines
