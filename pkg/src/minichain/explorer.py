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
import struct
from dataclasses import dataclass

from minichain.block_store import BlockLocation, BlockStore
from minichain.chain_model import Block
from minichain.consensus import ChainState
from minichain.crypto import Digest32
from minichain.errors import NotFoundError, StorageError
from minichain.kv_store import KvStore

# b:<hash-hex> value: offset u64, length u32, height u32, prev hash
BLOCK_VALUE_FORMAT = "<QII32s"

TIP_KEY = b"tip"


class IndexConsistencyError(StorageError):
    """Index entry contradicts the block file or another entry"""


@dataclass(frozen=True)
class ExplorerInfo:
    block_hash: str
    height: int
    next_block: str | None
    size_bytes: int
    prev_block: str | None
    tx_count: int

    def to_dict(self) -> dict:
        return {
            "block_hash": self.block_hash,
            "height": self.height,
            "next_block": self.next_block,
            "size_bytes": self.size_bytes,
            "prev_block": self.prev_block,
            "tx_count": self.tx_count,
        }


@dataclass(frozen=True)
class TxLocation:
    block_hash: Digest32
    height: int

    # Index inside block.transactions
    position: int


def _block_key(block_hash: Digest32) -> bytes:
    return b"b:" + block_hash.hex().encode()


def _height_key(height: int) -> bytes:
    return f"h:{height}".encode()


def _tx_key(txid: Digest32) -> bytes:
    return b"t:" + txid.hex().encode()


class Explorer:
    def __init__(self, kv: KvStore, blocks: BlockStore) -> None:
        """Metadata index over the block file

        Keys:
            b:<hash-hex>  -> location, height, prev hash (every stored block, any branch)
            h:<height>    -> hash of the active block at height
            t:<txid-hex>  -> hash of the active block holding the transaction
            tip           -> hash of the active tip

        Args:
            kv (KvStore): index.kv store
            blocks (BlockStore): blocks.dat store
        """
        self._kv = kv
        self._blocks = blocks

    def _entry(self, block_hash: Digest32) -> tuple[BlockLocation, int, Digest32] | None:
        value = self._kv.get(_block_key(block_hash))
        if value is None:
            return None
        offset, length, height, prev_hash = struct.unpack(BLOCK_VALUE_FORMAT, value)
        return BlockLocation(offset, length), height, prev_hash

    def _require_entry(self, block_hash: Digest32) -> tuple[BlockLocation, int, Digest32]:
        entry = self._entry(block_hash)
        if entry is None:
            raise NotFoundError(f"Block {block_hash.hex()} not found")
        return entry

    def is_indexed(self, block_hash: Digest32) -> bool:
        return self._kv.get(_block_key(block_hash)) is not None

    def tip(self) -> tuple[Digest32, int] | None:
        """
        Returns:
            tuple[Digest32, int] | None: (tip hash, tip height) or None for an empty index
        """
        tip_hash = self._kv.get(TIP_KEY)
        if tip_hash is None:
            return None
        return tip_hash, self._require_entry(tip_hash)[1]

    def index_block(
        self,
        block_hash: Digest32,
        height: int,
        location: BlockLocation,
        prev_hash: Digest32 | None,
        active: bool = False,
    ) -> None:
        """Indexes appended block by hash. Active blocks also get h:<height>, t:<txid> and tip

        Args:
            block_hash (Digest32): block hash
            height (int): block height
            location (BlockLocation): record location from BlockStore.append_block()
            prev_hash (Digest32 | None): parent hash, None for genesis
            active (bool, optional): block extends the active chain. Defaults to False

        Raises:
            IndexConsistencyError: height doesn't follow the parent or contradicts an existing entry
        """
        if prev_hash is None:
            if height != 0:
                raise IndexConsistencyError(f"Block {block_hash.hex()} at height {height} has no parent")
        else:
            parent = self._entry(prev_hash)
            if parent is None:
                raise IndexConsistencyError(f"Parent {prev_hash.hex()} of {block_hash.hex()} is not indexed")
            if parent[1] != height - 1:
                raise IndexConsistencyError(
                    f"Block {block_hash.hex()} at height {height}, but its parent is at height {parent[1]}"
                )

        existing = self._entry(block_hash)
        if existing is not None and existing[1] != height:
            raise IndexConsistencyError(f"Block {block_hash.hex()} already indexed at height {existing[1]}")
        if existing is None:
            value = struct.pack(BLOCK_VALUE_FORMAT, location.offset, location.length, height, prev_hash or bytes(32))
            self._kv.put(_block_key(block_hash), value)

        if active:
            self.activate(block_hash)

    def activate(self, block_hash: Digest32) -> None:
        """Makes indexed block the active block at its height and the new tip. Reorgs call it
        for every connected block in order

        Raises:
            NotFoundError: block isn't indexed
        """
        location, height, _ = self._require_entry(block_hash)
        block = self._blocks.read_block(location)
        self._kv.put(_height_key(height), block_hash)
        for tx in block.transactions:
            self._kv.put(_tx_key(tx.txid), block_hash)
        self._kv.put(TIP_KEY, block_hash)
        logging.debug(f"Index: height {height} -> {block_hash.hex()}")

    def _active_hash(self, height: int) -> Digest32 | None:
        tip = self.tip()
        if tip is None or not 0 <= height <= tip[1]:
            return None
        return self._kv.get(_height_key(height))

    def block_hash_at(self, height: int) -> Digest32:
        """
        Raises:
            NotFoundError: height above the tip or negative

        Returns:
            Digest32: active block hash at height
        """
        block_hash = self._active_hash(height)
        if block_hash is None:
            raise NotFoundError(f"No block at height {height}")
        return block_hash

    def read_block(self, block_hash: Digest32) -> Block:
        location, _, _ = self._require_entry(block_hash)
        return self._blocks.read_block(location)

    def explorer_info(self, block_hash: Digest32) -> ExplorerInfo:
        """
        Raises:
            NotFoundError: unknown hash

        Returns:
            ExplorerInfo: block details. next_block only for active blocks below the tip
        """
        location, height, prev_hash = self._require_entry(block_hash)
        block = self._blocks.read_block(location)
        next_block = None
        if self._active_hash(height) == block_hash:
            next_hash = self._active_hash(height + 1)
            if next_hash is not None:
                next_block = next_hash.hex()
        return ExplorerInfo(
            block_hash=block_hash.hex(),
            height=height,
            next_block=next_block,
            size_bytes=location.length,
            prev_block=prev_hash.hex() if height > 0 else None,
            tx_count=len(block.transactions),
        )

    def latest_blocks(self, count: int) -> list[ExplorerInfo]:
        """
        Returns:
            list[ExplorerInfo]: up to count active blocks, newest first
        """
        tip = self.tip()
        if tip is None:
            return []
        _, tip_height = tip
        return [
            self.explorer_info(self.block_hash_at(height))
            for height in range(tip_height, max(tip_height - count, -1), -1)
        ]

    def find_transaction(self, txid: Digest32) -> TxLocation:
        """Looks a transaction up on the active chain

        Raises:
            NotFoundError: transaction isn't in an active block

        Returns:
            TxLocation: block hash, height and position in the block
        """
        block_hash = self._kv.get(_tx_key(txid))
        if block_hash is None:
            raise NotFoundError(f"Transaction {txid.hex()} not found")
        location, height, _ = self._require_entry(block_hash)

        # Entry left behind by a reorg
        if self._active_hash(height) != block_hash:
            raise NotFoundError(f"Transaction {txid.hex()} is not on the active chain")
        block = self._blocks.read_block(location)
        for position, tx in enumerate(block.transactions):
            if tx.txid == txid:
                return TxLocation(block_hash, height, position)
        raise IndexConsistencyError(f"Block {block_hash.hex()} doesn't contain {txid.hex()}")

    def check_coherence(self) -> int:
        """Reads every indexed block back and compares its hash with the key

        Raises:
            IndexConsistencyError: mismatch found

        Returns:
            int: number of blocks checked
        """
        checked = 0
        for key in self._kv.keys(b"b:"):
            block_hash = bytes.fromhex(key[2:].decode())
            location, _, _ = self._require_entry(block_hash)
            if self._blocks.read_block(location).hash != block_hash:
                raise IndexConsistencyError(f"Block at offset {location.offset} doesn't hash to {block_hash.hex()}")
            checked += 1
        tip = self.tip()
        if tip is not None:
            for height in range(tip[1] + 1):
                if self._active_hash(height) is None:
                    raise IndexConsistencyError(f"Active chain has no block at height {height}")
        return checked

    def rebuild(self, state: ChainState) -> None:
        """Regenerates every entry from the block file, then marks state's chain active

        Args:
            state (ChainState): ledger replayed from the same block file
        """
        logging.info(f"Rebuilding block index from {self._blocks.path}")
        for location in self._blocks.locations:
            block = self._blocks.read_block(location)
            if block.header.prev_hash == bytes(32) and block.hash == state.genesis_hash:
                self.index_block(block.hash, 0, location, None)
                continue
            parent = self._entry(block.header.prev_hash)
            if parent is None:
                logging.warning(f"Skipping block {block.hash.hex()} without stored parent")
                continue
            self.index_block(block.hash, parent[1] + 1, location, block.header.prev_hash)
        for height in range(state.height + 1):
            self.activate(state.hash_at(height))
        self._kv.sync()
