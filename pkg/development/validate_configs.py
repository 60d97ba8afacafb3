"""Experiment config and settings override validator."""

import json
import sys
from os import getenv
from pathlib import Path

from psrlab.cli import load_experiment_config
from psrlab.exceptions import ConfigError
from psrlab.settings import SETTINGS_ENV_VAR, get_app_settings


def _main(directory):
    failures = 0
    paths = sorted(Path(directory).glob("*.json"))
    for path in paths:
        try:
            config = load_experiment_config(path)
        except ConfigError as exc:
            failures += 1
            print(f"INVALID {path}: {exc}")
            continue
        print(f"valid   {path} ({config.command}, hash {config.config_hash[:12]})")

    if getenv(SETTINGS_ENV_VAR):
        try:
            settings = get_app_settings()
        except ConfigError as exc:
            failures += 1
            print(f"INVALID {getenv(SETTINGS_ENV_VAR)}: {exc}")
        else:
            print(f"valid   {getenv(SETTINGS_ENV_VAR)}")
            print(json.dumps(settings, indent=4, sort_keys=True))

    print(f"\n==================\nChecked {len(paths)} experiment configs, {failures} invalid.")
    return 1 if failures else 0


sys.exit(_main(sys.argv[1] if len(sys.argv) > 1 else "development/experiments"))
