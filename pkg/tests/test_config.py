import pytest

from beeflow.config import CONFIG_ENV, BeeFlowConfig, MiB, load_config
from beeflow.utils import InputFormatError


def test_defaults():
    config = BeeFlowConfig()
    assert config.payload_limit_bytes == MiB
    assert config.policy == 'io-contention'
    assert config.tx_window_s == 5.0


def test_file_overrides_and_unknown_keys(tmp_path, caplog):
    path = tmp_path / 'c.json'
    path.write_text('{"seed": 7, "tx_window_s": 1.0, "bogus": 3}')
    config = load_config(path)
    assert config.seed == 7
    assert config.tx_window_s == 1.0
    assert 'bogus' in caplog.text


def test_env_var(tmp_path, monkeypatch):
    path = tmp_path / 'c.json'
    path.write_text('{"policy": "longest-path"}')
    monkeypatch.setenv(CONFIG_ENV, str(path))
    assert load_config().policy == 'longest-path'


def test_no_file(monkeypatch):
    monkeypatch.delenv(CONFIG_ENV, raising=False)
    assert load_config() == BeeFlowConfig()


@pytest.mark.parametrize('text', ['[1, 2]', '{"seed": '])
def test_bad_files(tmp_path, text):
    path = tmp_path / 'c.json'
    path.write_text(text)
    with pytest.raises(InputFormatError):
        load_config(path)


def test_missing_file(tmp_path):
    with pytest.raises(InputFormatError):
        load_config(tmp_path / 'missing.json')


def test_replace_ignores_none():
    config = BeeFlowConfig().replace(payload_limit_bytes=None, seed=3)
    assert config.payload_limit_bytes == MiB
    assert config.seed == 3
