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

import logging
import os
import struct
from dataclasses import dataclass

from minichain.chain_model import Block, deserialize_block, serialize_block
from minichain.errors import StorageError
from minichain.kv_store import io_error_message

# magic (4 bytes) + block length u32
RECORD_HEADER_SIZE = 8

# Single record limit
MAX_BLOCK_SIZE = 0xFFFFFFFF


class BlockStoreError(StorageError):
    """Block file can't be read or written"""


@dataclass(frozen=True)
class BlockLocation:
    # Offset of the record (its magic) in the block file
    offset: int

    # Length of serialized block, without the record header
    length: int


class BlockStore:
    def __init__(self, path: str, magic: bytes) -> None:
        """Append-only block file. Each record is magic, length u32 and the serialized block.
        A torn record at the end of the file (crash during append) is truncated on open

        Args:
            path (str): blocks.dat path
            magic (bytes): 4-byte network magic

        Raises:
            BlockStoreError: file can't be opened
        """
        self._path = path
        self._magic = magic
        self._locations: list[BlockLocation] = []
        try:
            parent_dir = os.path.dirname(os.path.abspath(path))
            if not os.path.exists(parent_dir):
                logging.debug(f"Creating {parent_dir} directory")
                os.makedirs(parent_dir)
            if not os.path.exists(path):
                logging.debug(f"Creating block file {path}")
                open(path, "wb").close()
            self._end = self._recover()
            self._file = open(path, "r+b")
        except OSError as e:
            raise BlockStoreError(f"Unable to open {path}: {io_error_message(e)}") from e

    @property
    def path(self) -> str:
        return self._path

    @property
    def locations(self) -> list[BlockLocation]:
        """
        Returns:
            list[BlockLocation]: every complete record in file order
        """
        return list(self._locations)

    @property
    def size(self) -> int:
        return self._end

    def _recover(self) -> int:
        """Scans records and truncates whatever follows the last complete one

        Returns:
            int: end of the last complete record
        """
        file_size = os.path.getsize(self._path)
        position = 0
        with open(self._path, "rb") as block_io:
            while position + RECORD_HEADER_SIZE <= file_size:
                block_io.seek(position)
                record_header = block_io.read(RECORD_HEADER_SIZE)
                if record_header[:4] != self._magic:
                    logging.error(f"Bad magic at offset {position} of {self._path}")
                    break
                (length,) = struct.unpack("<I", record_header[4:])
                if position + RECORD_HEADER_SIZE + length > file_size:
                    break
                self._locations.append(BlockLocation(position, length))
                position += RECORD_HEADER_SIZE + length

        if position < file_size:
            logging.warning(f"Truncating {file_size - position} bytes of partial record at offset {position} of {self._path}")
            with open(self._path, "r+b") as block_io:
                block_io.truncate(position)
        logging.debug(f"Block file {self._path}: {len(self._locations)} records, {position} bytes")
        return position

    def append_block(self, block: Block) -> BlockLocation:
        """Appends block record and fsyncs it

        Raises:
            BlockStoreError: write failed

        Returns:
            BlockLocation: where the record starts and the block length
        """
        data = serialize_block(block)
        if len(data) > MAX_BLOCK_SIZE:
            raise BlockStoreError(f"Block is {len(data)} bytes, limit is {MAX_BLOCK_SIZE}")
        location = BlockLocation(self._end, len(data))
        try:
            self._file.seek(self._end)
            self._file.write(self._magic + struct.pack("<I", len(data)) + data)
            self._file.flush()
            os.fsync(self._file.fileno())
        except OSError as e:
            # Leave nothing half-written behind for the next append
            try:
                self._file.truncate(self._end)
            except OSError as truncate_error:
                logging.debug("Error details", exc_info=truncate_error)
            raise BlockStoreError(f"Unable to append to {self._path}: {io_error_message(e)}") from e

        self._end += RECORD_HEADER_SIZE + len(data)
        self._locations.append(location)
        return location

    def read_block(self, location: BlockLocation) -> Block:
        """
        Raises:
            BlockStoreError: location outside the file or record doesn't match it

        Returns:
            Block: block stored at location
        """
        if location.offset < 0 or location.offset + RECORD_HEADER_SIZE + location.length > self._end:
            raise BlockStoreError(f"Location {location} is outside of {self._path}")
        try:
            self._file.seek(location.offset)
            record = self._file.read(RECORD_HEADER_SIZE + location.length)
        except OSError as e:
            raise BlockStoreError(f"Unable to read {self._path}: {io_error_message(e)}") from e

        if record[:4] != self._magic or struct.unpack("<I", record[4:8])[0] != location.length:
            raise BlockStoreError(f"No block record at offset {location.offset} of {self._path}")
        return deserialize_block(record[RECORD_HEADER_SIZE:])

    def iter_blocks(self):
        """Yields (location, block) for every record in file order"""
        for location in self.locations:
            yield location, self.read_block(location)

    def close(self) -> None:
        if not self._file.closed:
            self._file.close()

    def __enter__(self) -> "BlockStore":
        return self

    def __exit__(self, *_) -> None:
        self.close()
