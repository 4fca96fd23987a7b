"""Scenario parameters: defaults, JSON config file, then explicit CLI flags."""

import json
import logging
import os
from pathlib import Path
from typing import Dict, Optional

import psutil

from config import COMMON_PARAMETERS, SCENARIO_PARAMETERS, THREADS_ENV_VAR

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid scenario configuration."""


def _coerce(name, kind, value, spec):
    try:
        if kind == 'int':
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError
            value = int(value)
        elif kind == 'float':
            if isinstance(value, bool):
                raise ValueError
            value = float(value)
        elif kind == 'bool':
            if isinstance(value, str):
                if value.lower() not in ('true', 'false', '1', '0'):
                    raise ValueError
                value = value.lower() in ('true', '1')
            elif not isinstance(value, bool):
                raise ValueError
        elif kind == 'choice':
            value = str(value)
        elif kind in ('float_list', 'int_list'):
            if isinstance(value, str):
                value = [v for v in value.split(',') if v.strip()]
            cast = float if kind == 'float_list' else int
            value = [cast(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"'{name}' expects {kind}, got {value!r}")

    if kind == 'choice':
        if value not in spec:
            raise ConfigError(f"'{name}' must be one of {spec}, got '{value}'")
    elif spec is not None:
        low, high = spec[:2]
        low_open = len(spec) > 2 and spec[2]
        items = value if isinstance(value, list) else [value]
        for item in items:
            above = low < item if low_open else low <= item
            if not (above and item <= high):
                raise ConfigError(f"'{name}' value {item} outside {'(' if low_open else '['}{low}, {high}]")
    return value


class ScenarioConfig:
    """Validated parameters of one scenario run."""

    def __init__(self, scenario: str, values: Dict):
        self.scenario = scenario
        self.values = values

    @staticmethod
    def schema(scenario):
        if scenario not in SCENARIO_PARAMETERS:
            raise ConfigError(f"unknown scenario '{scenario}'")
        return {**COMMON_PARAMETERS, **SCENARIO_PARAMETERS[scenario]}

    @classmethod
    def load(cls, scenario, config_file=None, overrides: Optional[Dict] = None):
        """Merge defaults, the JSON file and non-None overrides, validating every key."""
        schema = cls.schema(scenario)
        values = {name: spec[1] for name, spec in schema.items()}
        layers = []
        if config_file is not None:
            path = Path(config_file)
            try:
                with open(path, 'r') as f:
                    data = json.load(f)
            except (OSError, json.JSONDecodeError) as e:
                raise ConfigError(f"cannot read config file {path}: {e}")
            if not isinstance(data, dict):
                raise ConfigError(f"config file {path} must hold a JSON object")
            data.pop('scenario', None)
            layers.append(data)
        if overrides:
            layers.append({k: v for k, v in overrides.items() if v is not None})
        for layer in layers:
            unknown = sorted(set(layer) - set(schema))
            if unknown:
                raise ConfigError(f"unknown keys for '{scenario}': {', '.join(unknown)}")
            for name, value in layer.items():
                kind, _, spec = schema[name]
                values[name] = _coerce(name, kind, value, spec)
        if values['h_init'] > values['h_max']:
            raise ConfigError("h_init must not exceed h_max")
        logger.debug("scenario %s parameters: %s", scenario, values)
        return cls(scenario, values)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def to_dict(self):
        return dict(self.values)


def resolve_threads(cli_threads=None):
    """--threads, then the environment variable, then physical cores."""
    if cli_threads is not None:
        if cli_threads < 1:
            raise ConfigError("--threads must be >= 1")
        return int(cli_threads)
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        try:
            threads = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV_VAR}={env!r} is not an integer")
        if threads < 1:
            raise ConfigError(f"{THREADS_ENV_VAR} must be >= 1")
        return threads
    return psutil.cpu_count(logical=False) or psutil.cpu_count() or 1
