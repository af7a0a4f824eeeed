import dataclasses
import json
import logging as log
import os
from dataclasses import dataclass
from pathlib import Path

from beeflow.utils import InputFormatError

CONFIG_ENV = 'BEEFLOW_CONFIG'
MiB = 1024 * 1024


@dataclass(frozen=True)
class BeeFlowConfig:
    """
    Pipeline defaults. Every field can be overridden from a JSON file named by the
    BEEFLOW_CONFIG environment variable, and again by command-line flags.
    """
    payload_limit_bytes: int = MiB
    expand_cap: int = 4096
    max_steps: int = 100000
    # profile used for leaves with no traces
    default_init_delay_s: float = 0.5
    default_input_delay_s: float = 0.1
    default_input_bytes: float = float(MiB)
    default_exec_delay_s: float = 1.0
    default_output_delay_s: float = 0.1
    default_output_bytes: float = float(MiB)
    default_exec_prob: float = 1.0
    default_fail_prob: float = 0.0
    default_expected_iterations: float = 1.0
    tx_window_s: float = 5.0
    seed: int = 0
    policy: str = 'io-contention'
    mode: str = 'single'

    def replace(self, **changes):
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **changes)


def load_config(path=None):
    """
    Loads the configuration, starting from the built-in defaults.

    Args:
        path (str, optional): JSON file with overrides. Falls back to $BEEFLOW_CONFIG.

    Returns:
        BeeFlowConfig

    Raises:
        InputFormatError: If the file cannot be read or is not a JSON object.
    """
    path = path or os.environ.get(CONFIG_ENV)
    config = BeeFlowConfig()
    if not path:
        return config

    path = Path(path)
    try:
        overrides = json.loads(path.read_text(encoding='utf-8'))
    except FileNotFoundError as e:
        raise InputFormatError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise InputFormatError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    if not isinstance(overrides, dict):
        raise InputFormatError(f"{path}: config must be a JSON object")

    known = {f.name: f.type for f in dataclasses.fields(BeeFlowConfig)}
    accepted = {}
    for key, value in sorted(overrides.items()):
        if key not in known:
            log.warning(f"ignoring unknown config key {key!r} in {path}")
            continue
        accepted[key] = value
    log.info(f"loaded config overrides from {path}: {sorted(accepted)}")
    return dataclasses.replace(config, **accepted)
