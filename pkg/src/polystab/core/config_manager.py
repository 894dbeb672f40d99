"""Configuration Manager - hierarchical solver and pipeline settings."""

import copy
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

from .exceptions import ConfigError

logger = logging.getLogger(__name__)


DEFAULTS: Dict[str, Any] = {
    "logging": {
        "level": "WARNING",
    },
    "mesh": {
        "resolution": 8,
        "grading": 1.0,
    },
    "cone": {
        "feasibility_tol": 1e-9,
        "battery_size": 200,
    },
    "destabilizer": {
        "tol": 1e-8,
        "eps_rel": 1e-7,
        "rho": 1.0,
        "sigma": 1e-6,
        "relaxation": 1.6,
        "max_iter": 20000,
        "abs_tol": 1e-9,
        "rel_tol": 1e-9,
        "restarts": 3,
        "polish": True,
        "polish_refine": 25,
        "max_cuts": 40,
        "cut_batch": 8,
        "crease_starts": [12, 8],
        "certificate_tol": 1e-6,
    },
    "decomposition": {
        "cluster_cap": 8,
        "gradient_tol": 1e-6,
        "density_tol": 1e-5,
        "volume_tol": 1e-10,
    },
    "flow": {
        "resolution": 48,
        "grading": 1.0,
        "cfl": 0.05,
        "max_halvings": 30,
        "blowup_cap": 1e6,
        "energy_slack": 1e-10,
        "target_tol": 1e-3,
        "record_every": 1,
        "max_steps": 5000000,
    },
    "cli": {
        "seed": 42,
        "jobs": 1,
    },
}


class ConfigManager:
    """Singleton configuration manager for solver tolerances and defaults."""

    _instance: Optional['ConfigManager'] = None

    def __new__(cls):
        """Ensure only one instance exists (singleton pattern)."""
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self) -> None:
        """Initialize configuration manager."""
        if self._initialized:
            return

        self._initialized = True
        self._config: Dict[str, Any] = copy.deepcopy(DEFAULTS)
        override = os.environ.get("POLYSTAB_CONFIG")
        self._config_file = (
            Path(override) if override else Path.home() / ".polystab" / "config.json"
        )

        self.load()

    @property
    def config_file(self) -> Path:
        return self._config_file

    def load(self) -> None:
        """Merge the JSON configuration file (if any) over the built-in defaults."""
        self._config = copy.deepcopy(DEFAULTS)
        if not self._config_file.exists():
            return
        try:
            with open(self._config_file, 'r', encoding='utf-8') as f:
                user = json.load(f)
        except (json.JSONDecodeError, IOError) as e:
            logger.warning(f"Failed to load config file {self._config_file}: {e}; using defaults")
            return
        if not isinstance(user, dict):
            logger.warning(f"Ignoring config file {self._config_file}: top level is not an object")
            return
        _deep_merge(self._config, user)
        logger.debug(f"Configuration loaded from {self._config_file}")

    def save(self) -> None:
        """Save configuration to JSON file.

        Raises:
            ConfigError: If unable to write configuration file
        """
        try:
            self._config_file.parent.mkdir(parents=True, exist_ok=True)
            with open(self._config_file, 'w', encoding='utf-8') as f:
                json.dump(self._config, f, indent=2, ensure_ascii=False)
            logger.debug(f"Configuration saved to {self._config_file}")
        except IOError as e:
            logger.error(f"Failed to save config file: {e}")
            raise ConfigError(f"Failed to save config file {self._config_file}: {e}") from e

    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value by hierarchical key.

        Args:
            key: Hierarchical key using '/' separator (e.g., 'destabilizer/rho')
            default: Default value if key doesn't exist

        Returns:
            Configuration value or default
        """
        value: Any = self._config
        for k in key.split('/'):
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return value

    def set(self, key: str, value: Any) -> None:
        """Set configuration value by hierarchical key (in memory only).

        Args:
            key: Hierarchical key using '/' separator
            value: Value to store
        """
        keys = key.split('/')
        config = self._config
        for k in keys[:-1]:
            if k not in config or not isinstance(config[k], dict):
                config[k] = {}
            config = config[k]
        config[keys[-1]] = value

    def section(self, name: str) -> Dict[str, Any]:
        """Return a copy of one top-level section."""
        return copy.deepcopy(self._config.get(name, {}))

    def reset(self) -> None:
        """Restore built-in defaults, discarding in-memory changes."""
        self._config = copy.deepcopy(DEFAULTS)


def _deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> None:
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_merge(base[key], value)
        else:
            base[key] = value


# Global instance
_config_manager: Optional[ConfigManager] = None


def get_config_manager() -> ConfigManager:
    """Get the global configuration manager instance.

    Returns:
        ConfigManager singleton instance
    """
    global _config_manager
    if _config_manager is None:
        _config_manager = ConfigManager()
    return _config_manager
