"""Tests for the settings lookup and its environment overrides."""

import json
import os
import tempfile
from pathlib import Path
from unittest import TestCase
from unittest.mock import patch

from psrlab import config
from psrlab.exceptions import ConfigError
from psrlab.settings import get_app_settings


class GetAppSettingsTest(TestCase):
    """Test cases for get_app_settings."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def _write(self, payload):
        path = Path(self.tmp.name) / "settings.json"
        path.write_text(payload if isinstance(payload, str) else json.dumps(payload), encoding="utf-8")
        return str(path)

    @patch.dict(os.environ, {}, clear=True)
    def test_defaults(self):
        self.assertEqual(get_app_settings(), config.default_settings)

    @patch.dict(os.environ, {"PSRLAB_CAP": "4096"}, clear=True)
    def test_cap_override(self):
        self.assertEqual(get_app_settings()["enumeration_cap"], 4096)

    @patch.dict(os.environ, {"PSRLAB_CAP": "lots"}, clear=True)
    def test_bad_cap_raises(self):
        with self.assertRaises(ConfigError):
            get_app_settings()

    def test_override_file(self):
        path = self._write({"saddle_tolerance": 1e-6, "log_trajectories": True})
        with patch.dict(os.environ, {"PSRLAB_SETTINGS": path}, clear=True):
            settings = get_app_settings()
        self.assertEqual(settings["saddle_tolerance"], 1e-6)
        self.assertTrue(settings["log_trajectories"])
        self.assertEqual(settings["subset_cap"], config.default_settings["subset_cap"])

    def test_cap_wins_over_override_file(self):
        path = self._write({"enumeration_cap": 10})
        with patch.dict(os.environ, {"PSRLAB_SETTINGS": path, "PSRLAB_CAP": "20"}, clear=True):
            self.assertEqual(get_app_settings()["enumeration_cap"], 20)

    def test_unknown_key_rejected(self):
        path = self._write({"not_a_setting": 1})
        with patch.dict(os.environ, {"PSRLAB_SETTINGS": path}, clear=True):
            with self.assertRaises(ConfigError):
                get_app_settings()

    def test_invalid_json_rejected(self):
        path = self._write("{not json")
        with patch.dict(os.environ, {"PSRLAB_SETTINGS": path}, clear=True):
            with self.assertRaises(ConfigError):
                get_app_settings()

    def test_missing_file_rejected(self):
        missing = str(Path(self.tmp.name) / "missing.json")
        with patch.dict(os.environ, {"PSRLAB_SETTINGS": missing}, clear=True):
            with self.assertRaises(ConfigError):
                get_app_settings()
