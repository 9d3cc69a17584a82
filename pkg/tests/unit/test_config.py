import json

import pytest

from core.config import ConfigManager
from core.exceptions import ConfigError

ENV_KEYS = ["SMAG_ENVIRONMENT", "SMAG_LOG_LEVEL", "SMAG_LOG_FILE", "SMAG_OUTPUT_DIR", "SMAG_THREADS"]


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for key in ENV_KEYS:
        monkeypatch.delenv(key, raising=False)

# --- Unit Tests for ConfigManager ---

def test_defaults(tmp_path):
    config = ConfigManager(config_file=str(tmp_path / "absent.json")).get_config()
    assert config.execution.threads == 1
    assert config.output.directory == "results"
    assert config.output.figures is False
    assert config.logging.level == "INFO"


def test_settings_file_is_merged(tmp_path):
    path = tmp_path / "settings.json"
    path.write_text(json.dumps({
        "environment": "testing",
        "execution": {"threads": 4, "chunk_size": 8},
        "output": {"figures": True},
        "database": {"url": "sqlite://"},
    }))
    manager = ConfigManager(config_file=str(path))
    config = manager.get_config()
    assert config.environment == "testing"
    assert config.execution.threads == 4
    assert not hasattr(config.execution, "chunk_size")
    assert config.output.figures is True
    assert not hasattr(config, "database")


def test_malformed_settings_file_falls_back_to_defaults(tmp_path):
    path = tmp_path / "settings.json"
    path.write_text("{broken")
    assert ConfigManager(config_file=str(path)).get_config().execution.threads == 1


def test_environment_overrides_file(tmp_path, monkeypatch):
    path = tmp_path / "settings.json"
    path.write_text(json.dumps({"execution": {"threads": 4}}))
    monkeypatch.setenv("SMAG_THREADS", "2")
    monkeypatch.setenv("SMAG_LOG_LEVEL", "debug")
    monkeypatch.setenv("SMAG_OUTPUT_DIR", str(tmp_path / "out"))
    config = ConfigManager(config_file=str(path)).get_config()
    assert config.execution.threads == 2
    assert config.logging.level == "DEBUG"
    assert config.output.directory == str(tmp_path / "out")


@pytest.mark.parametrize("value", ["many", "0", "-3"])
def test_invalid_thread_count(tmp_path, monkeypatch, value):
    monkeypatch.setenv("SMAG_THREADS", value)
    with pytest.raises(ConfigError) as info:
        ConfigManager(config_file=str(tmp_path / "absent.json"))
    assert info.value.key_path == "SMAG_THREADS"
    assert info.value.exit_code == 1


def test_save_and_reload(tmp_path):
    path = tmp_path / "settings.json"
    manager = ConfigManager(config_file=str(path))
    manager.get_config().execution.threads = 3
    manager.save_config()
    manager.get_config().execution.threads = 1
    manager.reload()
    assert manager.get_config().execution.threads == 3
