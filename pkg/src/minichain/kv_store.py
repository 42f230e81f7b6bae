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

import errno
import logging
import os
import struct

from minichain.errors import StorageError, ValidationError

# Record layout: key_len u16, key, val_len u32, value
KEY_LEN_SIZE = 2
VALUE_LEN_SIZE = 4

MAX_KEY_SIZE = 0xFFFF
MAX_VALUE_SIZE = 0xFFFFFFFF


class KvStoreError(StorageError):
    """Key-value log can't be read or written"""


def io_error_message(e: OSError) -> str:
    """Disk-full is reported separately from other IO errors"""
    if e.errno == errno.ENOSPC:
        return f"Disk full: {e}"
    return f"IO error: {e}"


class KvStore:
    def __init__(self, path: str) -> None:
        """Append-only key-value log replayed into memory on open. Last write for a key wins

        Args:
            path (str): log file (created if missing)

        Raises:
            KvStoreError: file can't be opened
        """
        self._path = path
        self._map: dict[bytes, bytes] = {}
        try:
            parent_dir = os.path.dirname(os.path.abspath(path))
            if not os.path.exists(parent_dir):
                logging.debug(f"Creating {parent_dir} directory")
                os.makedirs(parent_dir)
            self._replay()
            self._file = open(path, "ab")
            self._end = os.path.getsize(path)
        except OSError as e:
            raise KvStoreError(f"Unable to open {path}: {io_error_message(e)}") from e

    @property
    def path(self) -> str:
        return self._path

    def _replay(self) -> None:
        if not os.path.exists(self._path):
            return
        with open(self._path, "rb") as log_io:
            data = log_io.read()

        position = 0
        records = 0
        while position < len(data):
            record_start = position
            if position + KEY_LEN_SIZE > len(data):
                break
            (key_len,) = struct.unpack_from("<H", data, position)
            position += KEY_LEN_SIZE
            if position + key_len + VALUE_LEN_SIZE > len(data):
                position = record_start
                break
            key = data[position : position + key_len]
            position += key_len
            (value_len,) = struct.unpack_from("<I", data, position)
            position += VALUE_LEN_SIZE
            if position + value_len > len(data):
                position = record_start
                break
            self._map[key] = data[position : position + value_len]
            position += value_len
            records += 1

        if position < len(data):
            logging.warning(f"Dropping torn record at offset {position} of {self._path} ({len(data) - position} bytes)")
            with open(self._path, "r+b") as log_io:
                log_io.truncate(position)
        logging.debug(f"Replayed {records} records from {self._path}")

    def put(self, key: bytes, value: bytes) -> None:
        """Appends key -> value record

        Raises:
            ValidationError: key or value too long
            KvStoreError: write failed
        """
        if len(key) > MAX_KEY_SIZE:
            raise ValidationError(f"Key is {len(key)} bytes, limit is {MAX_KEY_SIZE}")
        if len(value) > MAX_VALUE_SIZE:
            raise ValidationError(f"Value is {len(value)} bytes, limit is {MAX_VALUE_SIZE}")
        record = struct.pack("<H", len(key)) + key + struct.pack("<I", len(value)) + value
        if self._file.closed:
            raise KvStoreError(f"{self._path} is closed")
        try:
            self._file.write(record)
            self._file.flush()
        except OSError as e:
            self._discard_tail()
            raise KvStoreError(f"Unable to write {self._path}: {io_error_message(e)}") from e
        self._end += len(record)
        self._map[key] = value

    def _discard_tail(self) -> None:
        """Reopens the log cut back to the end of the last complete record"""
        try:
            self._file.close()
        except OSError as close_error:
            logging.debug("Error details", exc_info=close_error)
        try:
            os.truncate(self._path, self._end)
            self._file = open(self._path, "ab")
        except OSError as reopen_error:
            logging.error(f"Unable to reopen {self._path}: {io_error_message(reopen_error)}")

    def get(self, key: bytes) -> bytes | None:
        return self._map.get(key)

    def keys(self, prefix: bytes = b"") -> list[bytes]:
        return sorted(key for key in self._map if key.startswith(prefix))

    def sync(self) -> None:
        """Makes every written record durable"""
        try:
            self._file.flush()
            os.fsync(self._file.fileno())
        except OSError as e:
            raise KvStoreError(f"Unable to sync {self._path}: {io_error_message(e)}") from e

    def close(self) -> None:
        if not self._file.closed:
            self.sync()
            self._file.close()

    def __enter__(self) -> "KvStore":
        return self

    def __exit__(self, *_) -> None:
        self.close()
