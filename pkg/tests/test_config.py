"""Tests for run configuration loading."""

import pytest

from mfgan.config import (
    RunConfig,
    dump_config,
    load_config,
    parse_factor_specs,
    write_effective_config,
)
from mfgan.discriminator import FactorKind
from mfgan.errors import ConfigError


@pytest.fixture
def config_file(tmp_dir):
    path = tmp_dir / "run.conf"
    path.write_text(
        "# toy run\n"
        "interactions=data/interactions.tsv\n"
        "factor_specs=category:categorical,price:numeric:8\n"
        "D=16\n"
        "lr=0.005\n"
        "baseline=yes\n",
        encoding="utf-8",
    )
    return path


class TestLoadConfig:
    def test_defaults(self):
        config = load_config(use_env=False)
        assert config.k_core == 5
        assert config.training.d == 50
        assert config.checkpoint_path.name == "latest.ckpt"
        assert config.manifest_dir == config.out_dir / "manifest"

    def test_file_values_and_case(self, config_file):
        config = load_config(config_file, use_env=False)
        assert config.interactions == "data/interactions.tsv"
        assert config.training.d == 16
        assert config.training.lr == 0.005
        assert config.training.baseline is True

    def test_precedence(self, config_file, monkeypatch):
        monkeypatch.setenv("MFGAN_D", "32")
        monkeypatch.setenv("MFGAN_WINDOW", "12")
        config = load_config(config_file, overrides={"lr": 0.1, "seed": None})
        assert config.training.window == 12
        assert config.training.d == 16
        assert config.training.lr == 0.1
        assert config.training.seed == 42

    def test_unknown_key(self, tmp_dir):
        path = tmp_dir / "bad.conf"
        path.write_text("learning_rate=0.1\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="unknown config key"):
            load_config(path, use_env=False)

    def test_bad_value(self, tmp_dir):
        path = tmp_dir / "bad.conf"
        path.write_text("d=wide\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(path, use_env=False)

    def test_bad_bool(self):
        with pytest.raises(ConfigError):
            load_config(overrides={"baseline": "maybe"}, use_env=False)

    def test_missing_file(self, tmp_dir):
        with pytest.raises(ConfigError):
            load_config(tmp_dir / "absent.conf", use_env=False)

    def test_validation(self):
        with pytest.raises(ConfigError):
            load_config(overrides={"k_core": 0}, use_env=False)
        with pytest.raises(ConfigError):
            load_config(overrides={"d": 10, "heads": 3}, use_env=False)


class TestDump:
    def test_round_trip(self, config_file, tmp_dir):
        config = load_config(config_file, use_env=False)
        path = write_effective_config(config, tmp_dir / "out")
        again = load_config(path, use_env=False)
        assert dump_config(again) == dump_config(config)
        assert again.training == config.training

    def test_sorted_lines(self):
        lines = dump_config(RunConfig()).splitlines()
        assert lines == sorted(lines)
        assert "variant=full" in lines
        assert "layer_norm=true" in lines


class TestFactorSpecs:
    def test_parse(self):
        specs = parse_factor_specs("category:categorical, price:numeric:10,popularity:popularity")
        assert [s.name for s in specs] == ["category", "price", "popularity"]
        assert specs[0].kind is FactorKind.CATEGORICAL
        assert specs[1].num_bins == 10
        assert specs[2].num_bins == 50

    def test_empty(self):
        assert parse_factor_specs("") == []

    @pytest.mark.parametrize("text", [
        "category", "category:colour", "price:numeric:many", "price:numeric:1", "a:categorical,a:numeric",
    ])
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            parse_factor_specs(text)
