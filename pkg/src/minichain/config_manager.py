"""
This file is part of the minichain distribution.

Copyright (C) 2026 minichain contributors

This program is free software: you can redistribute it and/or modify it under the terms of the
GNU General Public License as published by the Free Software Foundation, version 3.

This program is distributed in the hope that it will be useful, but WITHOUT ANY WARRANTY;
without even the implied warranty of MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.
See the GNU General Public License for more details.

You should have received a copy of the GNU General Public License along with this program.
If not, see <http://www.gnu.org/licenses/>.
"""

import argparse
import logging
import os
from dataclasses import fields, replace
from typing import Any

from minichain.chain_model import GENESIS_MESSAGE_DEFAULT, ChainParams, params_by_name
from minichain.errors import NotFoundError, StorageError, ValidationError

# Environment variable with the data directory
DATADIR_ENV = "MINICHAIN_DATADIR"
DATADIR_DEFAULT = "minichain-data"

# Config file name inside the data directory
CONFIG_FILE_NAME = "minichain.conf"

# ChainParams fields that can be overridden from the config file
PARAM_KEYS = tuple(param.name for param in fields(ChainParams) if param.name != "network_magic")

CONFIG_DEFAULT = {
    "params": "simnet",
    "seed": 0,
    "output": "text",
    "fee": 1000,
    "message": GENESIS_MESSAGE_DEFAULT,
    "sweep_processes": 4,
}

CONFIG_KEYS = frozenset(CONFIG_DEFAULT) | frozenset(PARAM_KEYS)


def parse_kv_lines(lines: list[str], source: str = "<text>") -> dict[str, str]:
    """Parses flat key=value lines. Blank lines and lines starting with # are skipped

    Args:
        lines (list[str]): text lines
        source (str, optional): file name for error messages

    Raises:
        ValidationError: line without "=", empty key or repeated key

    Returns:
        dict[str, str]: stripped keys and values in file order
    """
    result = {}
    for number, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, separator, value = line.partition("=")
        key = key.strip()
        if not separator or not key:
            raise ValidationError(f"{source}:{number}: expected key=value, got {line!r}")
        if key in result:
            raise ValidationError(f"{source}:{number}: key {key!r} is repeated")
        result[key] = value.strip()
    return result


def parse_kv_file(path: str) -> dict[str, str]:
    """
    Raises:
        NotFoundError: file doesn't exist
        StorageError: file can't be read
        ValidationError: malformed line
    """
    try:
        with open(path, encoding="utf-8", errors="replace") as file_io:
            return parse_kv_lines(file_io.read().splitlines(), path)
    except FileNotFoundError as e:
        raise NotFoundError(f"File {path} doesn't exist") from e
    except OSError as e:
        raise StorageError(f"Unable to read {path}: {e}") from e


def resolve_datadir(datadir_arg: str | None) -> str:
    """
    Returns:
        str: absolute data directory. Priority: --datadir, MINICHAIN_DATADIR, ./minichain-data
    """
    datadir = datadir_arg or os.getenv(DATADIR_ENV) or DATADIR_DEFAULT
    return os.path.abspath(datadir)


class ConfigManager:
    def __init__(self, config_file: str, args: argparse.Namespace | None = None) -> None:
        """Initializes ConfigManager and reads config file

        Args:
            config_file (str): config file (key=value lines)
            args (argparse.Namespace | None, optional): cli arguments

        Raises:
            ValidationError: malformed line or unknown key
        """
        self._config_file = config_file
        self._config: dict[str, str] = {}
        self._args_d = vars(args) if args is not None else {}

        if os.path.exists(config_file):
            logging.debug(f"Loading {config_file}")
            config = parse_kv_file(config_file)
            for key in config:
                if key not in CONFIG_KEYS:
                    raise ValidationError(f"{config_file}: unknown key {key!r}")
            self._config = config
        else:
            logging.debug(f"File {config_file} doesn't exist, using defaults")

    def get(self, key: str, default_value: Any | None = None, ignore_args: bool = False) -> Any:
        """Retrieves value from args or config by key
        Priority: args -> config -> CONFIG_DEFAULT -> default_value

        Args:
            key (str): config key to get value of
            default_value (Any | None): value to return if key doesn't exists even in CONFIG_DEFAULT
            ignore_args (bool, optional): True to ignore cli arguments

        Returns:
            Any: key's value or default_value
        """
        sources = [self._config, CONFIG_DEFAULT] if ignore_args else [self._args_d, self._config, CONFIG_DEFAULT]
        for source in sources:
            value = source.get(key)
            if value is not None:
                return value

        logging.debug(f"Key {key} doesn't exist in arguments, config or CONFIG_DEFAULT")
        return default_value

    def get_int(self, key: str, default_value: int | None = None, ignore_args: bool = False) -> int:
        """get() converted to int (decimal or 0x hex)

        Raises:
            ValidationError: value isn't an integer
        """
        value = self.get(key, default_value, ignore_args)
        if isinstance(value, int):
            return value
        try:
            return int(str(value), 0)
        except ValueError as e:
            raise ValidationError(f"Config key {key} must be an integer, got {value!r}") from e

    def chain_params(self) -> ChainParams:
        """Preset named by "params" with ChainParams overrides from the config file

        Raises:
            ValidationError: unknown preset or invalid override
        """
        params = params_by_name(self.get("params"))
        overrides = {key: self.get_int(key, ignore_args=True) for key in PARAM_KEYS if key in self._config}
        if overrides:
            logging.debug(f"Chain parameter overrides: {overrides}")
            params = replace(params, **overrides)
        return params

    def set(self, key: str, value: Any) -> None:
        """Updates config values and saves it to the file

        Raises:
            ValidationError: unknown key
            StorageError: file can't be written
        """
        if key not in CONFIG_KEYS:
            raise ValidationError(f"Unknown config key {key!r}")
        self._config[key] = str(value)

        logging.debug(f"Saving config to {self._config_file}")
        try:
            with open(self._config_file, "w+", encoding="utf-8") as config_file_io:
                for config_key, config_value in self._config.items():
                    config_file_io.write(f"{config_key}={config_value}\n")
        except OSError as e:
            raise StorageError(f"Unable to write {self._config_file}: {e}") from e
