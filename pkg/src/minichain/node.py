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

from minichain.block_store import BlockStore
from minichain.block_tree import AcceptResult, AcceptStatus, BlockTree, accept_block
from minichain.chain_model import Block, ChainParams, OutPoint, Script, Transaction, deserialize_tx, serialize_tx
from minichain.consensus import BlockValidationError, ChainState, TxValidationError, check_pow
from minichain.errors import NotFoundError, ValidationError
from minichain.explorer import Explorer
from minichain.kv_store import KvStore
from minichain.mempool import Mempool
from minichain.miner import build_block

# File names inside the data directory
BLOCKS_FILE = "blocks.dat"
INDEX_FILE = "index.kv"
WALLET_FILE = "wallet.kv"

# index.kv key holding unconfirmed transactions between invocations
MEMPOOL_KEY = b"mempool"


def _encode_transactions(transactions: list[Transaction]) -> bytes:
    parts = [struct.pack("<I", len(transactions))]
    for tx in transactions:
        data = serialize_tx(tx)
        parts.append(struct.pack("<I", len(data)) + data)
    return b"".join(parts)


def _decode_transactions(data: bytes) -> list[Transaction]:
    (count,) = struct.unpack_from("<I", data, 0)
    position = 4
    transactions = []
    for _ in range(count):
        (length,) = struct.unpack_from("<I", data, position)
        position += 4
        transactions.append(deserialize_tx(data[position : position + length]))
        position += length
    return transactions


class FullNode:
    def __init__(self, datadir: str, params: ChainParams) -> None:
        """Chain persisted in a data directory: blocks.dat, index.kv (block index and mempool).
        Ledger state is rebuilt by replaying blocks.dat on open

        Args:
            datadir (str): data directory (created if missing)
            params (ChainParams): chain parameters
        """
        self._datadir = datadir
        self._params = params
        self._blocks = BlockStore(os.path.join(datadir, BLOCKS_FILE), params.network_magic)
        self._kv = KvStore(os.path.join(datadir, INDEX_FILE))
        self._explorer = Explorer(self._kv, self._blocks)
        self._state: ChainState | None = None
        self._tree: BlockTree | None = None
        self._mempool = Mempool()
        self._load()

    @property
    def datadir(self) -> str:
        return self._datadir

    @property
    def params(self) -> ChainParams:
        return self._params

    @property
    def is_initialized(self) -> bool:
        return self._state is not None

    @property
    def state(self) -> ChainState:
        """
        Raises:
            NotFoundError: no genesis block yet
        """
        if self._state is None:
            raise NotFoundError(f"No chain in {self._datadir}, run init first")
        return self._state

    @property
    def tree(self) -> BlockTree:
        if self._tree is None:
            raise NotFoundError(f"No chain in {self._datadir}, run init first")
        return self._tree

    @property
    def explorer(self) -> Explorer:
        return self._explorer

    @property
    def mempool(self) -> Mempool:
        return self._mempool

    @property
    def now(self) -> int:
        """
        Returns:
            int: deterministic clock, tip time + target_spacing
        """
        return self.state.tip.time + self._params.target_spacing

    def _load(self) -> None:
        locations = self._blocks.locations
        if not locations:
            return

        genesis = self._blocks.read_block(locations[0])
        if genesis.header.prev_hash != bytes(32) or not check_pow(genesis.header, self._params):
            raise ValidationError(f"First block of {self._blocks.path} is not a genesis block for these parameters")
        self._state = ChainState(self._params, genesis)
        self._tree = BlockTree(genesis)

        for location in locations[1:]:
            block = self._blocks.read_block(location)
            try:
                accept_block(self._tree, self._state, block, max(block.header.time, self._state.tip.time))
            except BlockValidationError as e:
                logging.warning(f"Stored block {block.hash.hex()} rejected on replay: {e}")
        logging.debug(f"Replayed {len(locations)} blocks, tip at height {self._state.height}")

        if self._explorer.tip() != (self._state.tip_hash, self._state.height):
            logging.warning("Block index doesn't match the block file")
            self._explorer.rebuild(self._state)

        stored = self._kv.get(MEMPOOL_KEY)
        if stored:
            for tx in _decode_transactions(stored):
                try:
                    self._mempool.accept(tx, self._state, self.now)
                except TxValidationError as e:
                    logging.debug(f"Dropping stored mempool tx {tx.txid.hex()}: {e}")

    def _save_mempool(self) -> None:
        self._kv.put(MEMPOOL_KEY, _encode_transactions(self._mempool.transactions()))
        self._kv.sync()

    def initialize(self, genesis: Block) -> None:
        """Stores genesis block as block #0

        Raises:
            ValidationError: data directory already holds a chain
        """
        if self._state is not None:
            raise ValidationError(f"{self._datadir} already holds a chain (genesis {self._state.genesis_hash.hex()})")
        location = self._blocks.append_block(genesis)
        self._explorer.index_block(genesis.hash, 0, location, None, active=True)
        self._kv.sync()
        self._state = ChainState(self._params, genesis)
        self._tree = BlockTree(genesis)
        logging.info(f"Initialized chain with genesis {genesis.hash.hex()}")

    def submit_block(self, block: Block) -> AcceptResult:
        """Validates block, stores it (and orphans it adopted) and updates index and mempool

        Raises:
            BlockValidationError: invalid block, nothing stored
        """
        now = self.now
        result = accept_block(self.tree, self.state, block, now)
        if result.status in (AcceptStatus.DUPLICATE, AcceptStatus.ORPHAN):
            return result

        for stored_block in [block, *result.connected]:
            if self._explorer.is_indexed(stored_block.hash):
                continue
            entry = self.tree.get(stored_block.hash)
            if entry is None:
                continue
            location = self._blocks.append_block(stored_block)
            self._explorer.index_block(stored_block.hash, entry.height, location, stored_block.header.prev_hash)
        for connected_block in result.connected:
            self._explorer.activate(connected_block.hash)

        self._mempool.reconcile(self.state, self.now, result.disconnected, result.connected)
        self._save_mempool()
        return result

    def submit_tx(self, tx: Transaction) -> int:
        """
        Raises:
            TxValidationError: rejected by the mempool

        Returns:
            int: fee
        """
        fee = self._mempool.accept(tx, self.state, self.now)
        self._save_mempool()
        logging.info(f"Accepted tx {tx.txid.hex()} into mempool (fee {fee})")
        return fee

    def mempool_spent(self) -> set[OutPoint]:
        """Outpoints already spent by unconfirmed transactions"""
        return {input_.prevout for tx in self._mempool.transactions() for input_ in tx.inputs}

    def mine(self, count: int, script_pubkey: Script) -> list[Block]:
        """Mines count blocks on the tip, each with the mempool's transactions

        Raises:
            ValidationError: count not positive
        """
        if count <= 0:
            raise ValidationError("Block count must be positive")
        blocks = []
        for _ in range(count):
            block = build_block(self.state, self._mempool.transactions(), script_pubkey, self.now)
            self.submit_block(block)
            blocks.append(block)
        logging.info(f"Mined {count} blocks, tip at height {self.state.height}")
        return blocks

    def close(self) -> None:
        self._kv.close()
        self._blocks.close()

    def __enter__(self) -> "FullNode":
        return self

    def __exit__(self, *_) -> None:
        self.close()
