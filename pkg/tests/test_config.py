import pytest

from config import Config
from errors import ConfigError


def test_defaults_validate():
    assert Config.validate()


@pytest.mark.parametrize("name, value", [
    ("JOBS", 0), ("DIRECT_BUDGET", 0), ("DIRECT_TOL", 0.0), ("HYPER_SAMPLES", 0), ("MC_SIZE", 50),
])
def test_bad_values_rejected(monkeypatch, name, value):
    monkeypatch.setattr(Config, name, value)
    with pytest.raises(ConfigError):
        Config.validate()


def test_ensure_output_dir_creates_nested_directories(tmp_path):
    path = Config.ensure_output_dir(tmp_path / "a" / "b")
    assert path.is_dir()
