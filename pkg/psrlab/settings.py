"""Runtime settings lookup for psrlab."""

import json
import os
from pathlib import Path

import jsonschema

from psrlab import config
from psrlab.exceptions import ConfigError

CAP_ENV_VAR = "PSRLAB_CAP"
SETTINGS_ENV_VAR = "PSRLAB_SETTINGS"

_SETTINGS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "enumeration_cap": {"type": "integer", "minimum": 1},
        "subset_cap": {"type": "integer", "minimum": 1},
        "rank_tolerance": {"type": "number", "exclusiveMinimum": 0},
        "stochastic_tolerance": {"type": "number", "exclusiveMinimum": 0},
        "distribution_tolerance": {"type": "number", "exclusiveMinimum": 0},
        "likelihood_floor": {"type": "number", "exclusiveMinimum": 0},
        "saddle_step_scale": {"type": "number", "exclusiveMinimum": 0},
        "saddle_max_iterations": {"type": "integer", "minimum": 1},
        "saddle_tolerance": {"type": "number", "exclusiveMinimum": 0},
        "mle_beta_constant": {"type": "number", "minimum": 0},
        "weak_stability_samples": {"type": "integer", "minimum": 0},
        "run_logging_enabled": {"type": "boolean"},
        "log_trajectories": {"type": "boolean"},
    },
}


def get_app_settings():
    """Return psrlab settings, merging defaults with environment overrides.

    ``PSRLAB_SETTINGS`` may point at a JSON file of overrides; ``PSRLAB_CAP`` overrides
    ``enumeration_cap`` last.

    Returns:
        dict: The merged settings.

    Raises:
        ConfigError: If an override file is unreadable or does not match the settings schema.
    """
    settings = dict(config.default_settings)
    overrides_path = os.environ.get(SETTINGS_ENV_VAR)
    if overrides_path:
        try:
            overrides = json.loads(Path(overrides_path).read_text(encoding="utf-8"))
            jsonschema.validate(overrides, _SETTINGS_SCHEMA)
        except (OSError, ValueError, jsonschema.ValidationError) as exc:
            raise ConfigError(f"Invalid settings override file {overrides_path}: {exc}") from exc
        settings.update(overrides)
    cap = os.environ.get(CAP_ENV_VAR)
    if cap:
        try:
            settings["enumeration_cap"] = int(cap)
        except ValueError as exc:
            raise ConfigError(f"{CAP_ENV_VAR} must be an integer, got {cap!r}") from exc
    return settings
