import os
import re
import copy
import yaml
import logging
from pathlib import Path
from dotenv import load_dotenv
from pydantic import BaseModel

from .schema import COMMAND_MODELS

# Logging setup
logger = logging.getLogger(__name__)

PRESETS_PATH = Path(__file__).resolve().parent / "presets.yaml"
variable_pattern = re.compile(r'\$\{([^}^:]+)(?::([^}]*))?\}')


def expand_vars(match):
    env_var = match.group(1)
    default_val = match.group(2) if match.group(2) is not None else match.group(0)
    return os.getenv(env_var, default_val)


def read_config_file(config_path: Path) -> dict:
    # Read a YAML (or JSON) file, expanding ${VAR} and ${VAR:default} from the environment
    config_path = Path(config_path)
    if not config_path.exists() or not config_path.is_file():
        raise FileNotFoundError(
            f"Config file not found at: {config_path}\n"
            f"Current working dir: {os.getcwd()}"
        )

    with open(config_path, "r") as f:
        raw_content = f.read()

    expanded_content = variable_pattern.sub(expand_vars, raw_content)

    try:
        data = yaml.safe_load(expanded_content) or {}
    except yaml.YAMLError as e:
        raise ValueError(f"Error parsing YAML file at {config_path}: {e}")
    if not isinstance(data, dict):
        raise ValueError(f"Config file {config_path} must hold a mapping, got {type(data).__name__}")
    return data


def list_presets() -> dict:
    return read_config_file(PRESETS_PATH)


def _unwrap(command: str, data: dict, origin: str) -> dict:
    # Accept either a bare field mapping or the manifest shape {command, config}
    if "command" not in data:
        return data
    if data["command"] != command:
        raise ValueError(f"{origin} is a '{data['command']}' configuration, not '{command}'")
    return data.get("config") or {}


def deep_merge(base: dict, update: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def set_path(data: dict, dotted: str, value) -> None:
    # Assign data["a"]["b"] = value for "a.b", creating (or replacing scalars with) dicts on the way
    keys = dotted.split(".")
    node = data
    for key in keys[:-1]:
        if not isinstance(node.get(key), dict):
            node[key] = {}
        node = node[key]
    node[keys[-1]] = value


def load_run_config(
    command: str,
    custom_path: str = None,
    preset: str = None,
    overrides: dict = None,
) -> BaseModel:
    load_dotenv()
    model_cls = COMMAND_MODELS[command]
    data: dict = {}

    # 1. Named preset
    if preset:
        presets = list_presets()
        if preset not in presets:
            raise ValueError(f"Unknown preset '{preset}'. Available: {', '.join(sorted(presets))}")
        data = deep_merge(data, _unwrap(command, presets[preset], f"Preset '{preset}'"))
        logger.info(f"Using preset: {preset}")

    # 2. Explicit argument or environment variable
    path_str = custom_path or os.getenv("NPSI_CONFIG")
    if path_str:
        logger.info(f"Loading config from: {path_str}")
        data = deep_merge(data, _unwrap(command, read_config_file(Path(path_str)), path_str))

    # 3. Command-line flags
    for dotted, value in (overrides or {}).items():
        set_path(data, dotted, value)

    return model_cls.model_validate(data)
