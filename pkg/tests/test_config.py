"""Tests for configuration loading and CLI option models."""

import tempfile
from pathlib import Path

import pytest

from src.core.config import ConfigLoader, Settings
from src.core.errors import ConfigurationError
from src.core.models import RunConfig, parse_group, parse_int_list, parse_range


class TestConfigLoader:
    """Test cases for ConfigLoader."""

    def setup_method(self):
        """Set up an empty config directory."""
        self.temp_dir = tempfile.mkdtemp()
        self.config_dir = Path(self.temp_dir)
        self.loader = ConfigLoader(str(self.config_dir))

    def write(self, text: str) -> None:
        (self.config_dir / "hybridpipe.yml").write_text(text, encoding="utf-8")

    def test_missing_file_gives_defaults(self):
        """Without a config file every section takes its defaults."""
        assert self.loader.load() == Settings()

    def test_sections_override_defaults(self):
        """Values in the file replace defaults section by section."""
        self.write("engine:\n  workers: 3\nptycho:\n  beta: 0.5\n")
        settings = self.loader.load()
        assert settings.engine.workers == 3
        assert settings.ptycho.beta == 0.5
        assert settings.tomo.sweeps == 10

    def test_invalid_value(self):
        """Out-of-range values are configuration errors."""
        self.write("tomo:\n  beta: 3.0\n")
        with pytest.raises(ConfigurationError):
            self.loader.load()

    def test_invalid_yaml(self):
        """Unparseable YAML is a configuration error."""
        self.write("engine: [unclosed\n")
        with pytest.raises(ConfigurationError):
            self.loader.load()

    def test_non_mapping(self):
        """The file must hold a mapping."""
        self.write("- a\n- b\n")
        with pytest.raises(ConfigurationError):
            self.loader.load()

    def test_environment_overrides(self, monkeypatch):
        """LOG_LEVEL and HYBRIDPIPE_TASK_MODULES override the file."""
        self.write("logging:\n  level: INFO\n")
        monkeypatch.setenv("LOG_LEVEL", "DEBUG")
        monkeypatch.setenv("HYBRIDPIPE_TASK_MODULES", "pkg.a, pkg.b,")
        settings = self.loader.load()
        assert settings.logging.level == "DEBUG"
        assert settings.engine.task_modules == ["pkg.a", "pkg.b"]

    def test_settings_cached_until_reset(self):
        """The settings property loads once."""
        first = self.loader.settings
        self.write("engine:\n  workers: 2\n")
        assert self.loader.settings is first
        self.loader.reset()
        assert self.loader.settings.engine.workers == 2

    def test_env_config_dir(self, monkeypatch):
        """HYBRIDPIPE_CONFIG_DIR selects the directory."""
        monkeypatch.setenv("HYBRIDPIPE_CONFIG_DIR", self.temp_dir)
        assert ConfigLoader().config_dir == self.config_dir

    def test_repository_config_is_valid(self):
        """The shipped config file validates."""
        settings = ConfigLoader(Path(__file__).resolve().parents[1] / "config").load()
        assert settings.streamlog.control_topic == "_control"


class TestRunConfig:
    """CLI option validation."""

    def test_defaults(self):
        """A bare subcommand is valid."""
        config = RunConfig.build(subcommand="serve")
        assert config.workers == [0]
        assert config.out == Path("out")

    @pytest.mark.parametrize("fields", [{"workers": []}, {"workers": [1, -1]}, {"partitions": 0}])
    def test_invalid(self, fields):
        """Empty or negative worker lists and zero partitions are refused."""
        with pytest.raises(ConfigurationError):
            RunConfig.build(subcommand="tomo recon", **fields)

    def test_parse_int_list(self):
        """Comma lists of integers."""
        assert parse_int_list("1,2,4,8") == [1, 2, 4, 8]
        with pytest.raises(ConfigurationError):
            parse_int_list("1,,2")

    def test_parse_group(self):
        """name:size, with colons allowed in the name."""
        assert parse_group("g0:4") == ("g0", 4)
        assert parse_group("a:b:2") == ("a:b", 2)
        for bad in ("g0", ":4", "g0:x"):
            with pytest.raises(ConfigurationError):
                parse_group(bad)

    def test_parse_range(self):
        """start:stop:step in degrees."""
        assert parse_range("-90:90:2") == (-90.0, 90.0, 2.0)
        for bad in ("0:90", "a:b:c"):
            with pytest.raises(ConfigurationError):
                parse_range(bad)
