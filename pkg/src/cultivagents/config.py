"""Service configuration: dataclass defaults, optional YAML config file, and
environment-variable overrides (CULTIVAGENTS_* wins over the file)."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import yaml

from .coordinator import CoordinatorConfig

ENV_PREFIX = "CULTIVAGENTS_"

_TRUE_WORDS = {"1", "true", "yes", "on"}
_FALSE_WORDS = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    pass


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    provider_endpoint: str = "https://api.openai.com/v1"
    api_key: str = ""
    agent_model: str = "gpt-4o-mini"
    selector_model: str = ""  # empty: same model as the agents
    round_size: int = 3
    context_window: int = 30
    selector_temperature: float = 0.0
    agent_temperature: float = 0.7
    max_tokens: int = 700
    request_timeout_s: float = 60.0
    exclude_across_rounds: bool = False
    persona_path: str = ""
    store_dir: str = "sessions"
    scripted: bool = False
    static_dir: str = ""

    def coordinator_config(self) -> CoordinatorConfig:
        return CoordinatorConfig(
            round_size=self.round_size,
            context_window=self.context_window,
            selector_temperature=self.selector_temperature,
            agent_temperature=self.agent_temperature,
            max_tokens=self.max_tokens,
            selector_model=self.selector_model or self.agent_model,
            agent_model=self.agent_model,
            exclude_across_rounds=self.exclude_across_rounds,
        )


def _coerce(field: dataclasses.Field, raw: object, where: str):
    if field.type in ("bool", bool):
        if isinstance(raw, bool):
            return raw
        word = str(raw).strip().lower()
        if word in _TRUE_WORDS:
            return True
        if word in _FALSE_WORDS:
            return False
        raise ConfigError(f"{where}: {field.name} expects a boolean, got {raw!r}")
    try:
        if field.type in ("int", int):
            return int(str(raw).strip())
        if field.type in ("float", float):
            return float(str(raw).strip())
    except ValueError as exc:
        raise ConfigError(f"{where}: {field.name} expects a number, got {raw!r}") from exc
    return str(raw)


def load_config(
    path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
    **overrides,
) -> ServiceConfig:
    """Defaults <- config file <- environment <- explicit overrides."""
    env = os.environ if env is None else env
    fields = {f.name: f for f in dataclasses.fields(ServiceConfig)}
    values: dict = {}

    if path is not None:
        p = Path(path)
        try:
            doc = yaml.safe_load(p.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config file {p}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in config file {p}: {exc}") from exc
        doc = doc or {}
        if not isinstance(doc, dict):
            raise ConfigError(f"config file {p} must contain a mapping")
        for key, raw in doc.items():
            if key not in fields:
                raise ConfigError(f"config file {p}: unknown setting {key!r}")
            values[key] = _coerce(fields[key], raw, str(p))

    for name, field in fields.items():
        env_name = ENV_PREFIX + name.upper()
        if env_name in env:
            values[name] = _coerce(field, env[env_name], env_name)

    for name, value in overrides.items():
        if name not in fields:
            raise ConfigError(f"unknown setting {name!r}")
        if value is not None:
            values[name] = value

    config = ServiceConfig(**values)
    if config.round_size < 1:
        raise ConfigError("round_size must be >= 1")
    if config.context_window < 0:
        raise ConfigError("context_window must be >= 0")
    if not 1 <= config.port <= 65535:
        raise ConfigError("port must be in 1..65535")
    return config


def validate_live_config(config: ServiceConfig) -> None:
    """Startup checks for live (non-scripted) mode; failures name the env var."""
    if config.scripted:
        return
    if not config.api_key:
        raise ConfigError(
            f"live mode needs an API key: set {ENV_PREFIX}API_KEY or api_key in the config file, "
            "or pass --scripted to run offline"
        )
    if not config.provider_endpoint:
        raise ConfigError(f"live mode needs a provider endpoint: set {ENV_PREFIX}PROVIDER_ENDPOINT")
