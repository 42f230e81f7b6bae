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
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum

from minichain.chain_model import Block
from minichain.consensus import (
    BlockValidationError,
    ChainState,
    RejectReason,
    check_pow,
    disconnect_tip,
    header_work,
    validate_and_connect,
)
from minichain.crypto import Digest32

# Blocks with unknown parents kept at most (oldest evicted first)
MAX_ORPHANS = 1000


class AcceptStatus(Enum):
    CONNECTED = "connected"
    REORG = "reorg"
    SIDE_BRANCH = "side-branch"
    ORPHAN = "orphan"
    DUPLICATE = "duplicate"


@dataclass
class BlockEntry:
    block: Block
    height: int

    # Cumulative work of the chain ending with this block
    work: int
    invalid: bool = False


@dataclass
class AcceptResult:
    status: AcceptStatus

    # Blocks removed from / added to the active chain, in the order it happened
    disconnected: list[Block] = field(default_factory=list)
    connected: list[Block] = field(default_factory=list)


class BlockTree:
    def __init__(self, genesis: Block) -> None:
        """Every known block (active chain, side branches) plus the orphan pool

        Args:
            genesis (Block): root of the tree
        """
        self._entries: dict[Digest32, BlockEntry] = {
            genesis.hash: BlockEntry(genesis, 0, header_work(genesis.header))
        }
        self._orphans: OrderedDict[Digest32, Block] = OrderedDict()

    def __contains__(self, block_hash: Digest32) -> bool:
        return block_hash in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, block_hash: Digest32) -> BlockEntry | None:
        return self._entries.get(block_hash)

    def entries(self) -> list[BlockEntry]:
        return list(self._entries.values())

    @property
    def orphan_count(self) -> int:
        return len(self._orphans)

    def has_orphan(self, block_hash: Digest32) -> bool:
        return block_hash in self._orphans

    def add(self, block: Block) -> BlockEntry:
        """Adds block whose parent is already in the tree"""
        parent = self._entries[block.header.prev_hash]
        entry = BlockEntry(block, parent.height + 1, parent.work + header_work(block.header))
        self._entries[block.hash] = entry
        return entry

    def add_orphan(self, block: Block) -> None:
        self._orphans[block.hash] = block
        while len(self._orphans) > MAX_ORPHANS:
            evicted, _ = self._orphans.popitem(last=False)
            logging.debug(f"Orphan pool full, evicting {evicted.hex()}")

    def take_orphans(self, parent_hash: Digest32) -> list[Block]:
        """Removes and returns orphans waiting for parent_hash"""
        children = [block for block in self._orphans.values() if block.header.prev_hash == parent_hash]
        for child in children:
            del self._orphans[child.hash]
        return children

    def branch_to(self, state: ChainState, entry: BlockEntry) -> tuple[int, list[BlockEntry]]:
        """Walks back from entry to the active chain

        Returns:
            tuple[int, list[BlockEntry]]: (fork height, entries after the fork point up to entry)
        """
        path = []
        current = entry
        while not state.contains(current.block.hash, current.height):
            path.append(current)
            current = self._entries[current.block.header.prev_hash]
        return current.height, path[::-1]

    def is_invalid_branch(self, entry: BlockEntry) -> bool:
        current: BlockEntry | None = entry
        while current is not None and current.height > 0:
            if current.invalid:
                return True
            current = self._entries.get(current.block.header.prev_hash)
        return False


def _reorganize(tree: BlockTree, state: ChainState, entry: BlockEntry, now: int) -> AcceptResult:
    """Switches active chain to the branch ending with entry, restoring the old chain on failure"""
    fork_height, path = tree.branch_to(state, entry)
    result = AcceptResult(AcceptStatus.CONNECTED if fork_height == state.height else AcceptStatus.REORG)

    while state.height > fork_height:
        old = tree.get(state.tip_hash)
        disconnect_tip(state)
        result.disconnected.append(old.block)

    for branch_entry in path:
        try:
            validate_and_connect(state, branch_entry.block, now)
        except BlockValidationError as e:
            branch_entry.invalid = True
            logging.warning(f"Block {branch_entry.block.hash.hex()} rejected: {e}")

            # Roll back to the previous active chain
            while state.height > fork_height:
                disconnect_tip(state)
            for old_block in reversed(result.disconnected):
                validate_and_connect(state, old_block, now)
            raise
        result.connected.append(branch_entry.block)

    if result.status == AcceptStatus.REORG:
        logging.info(
            f"Reorg: disconnected {len(result.disconnected)}, connected {len(result.connected)},"
            f" new tip {state.tip_hash.hex()} at height {state.height}"
        )
    return result


def accept_block(tree: BlockTree, state: ChainState, block: Block, now: int) -> AcceptResult:
    """Adds block to the tree and keeps the active chain on the most cumulative work (ties: first seen)

    Args:
        tree (BlockTree): known blocks
        state (ChainState): active chain ledger
        block (Block): received block
        now (int): current simulated time

    Raises:
        BlockValidationError: block (or the branch it completes) is invalid. State is unchanged

    Returns:
        AcceptResult: what happened, with blocks connected and disconnected (orphans adopted included)
    """
    if block.hash in tree or tree.has_orphan(block.hash):
        return AcceptResult(AcceptStatus.DUPLICATE)
    if not check_pow(block.header, state.params):
        raise BlockValidationError(RejectReason.BAD_POW, f"block {block.hash.hex()}")

    parent = tree.get(block.header.prev_hash)
    if parent is None:
        logging.debug(f"Orphan block {block.hash.hex()}, parent {block.header.prev_hash.hex()} unknown")
        tree.add_orphan(block)
        return AcceptResult(AcceptStatus.ORPHAN)

    entry = tree.add(block)
    if tree.is_invalid_branch(entry):
        entry.invalid = True
        raise BlockValidationError(RejectReason.BAD_LINK, f"block {block.hash.hex()} extends an invalid block")

    if entry.work > state.cumulative_work:
        result = _reorganize(tree, state, entry, now)
    else:
        result = AcceptResult(AcceptStatus.SIDE_BRANCH)

    # Parent arrived, try waiting children
    for orphan in tree.take_orphans(block.hash):
        try:
            orphan_result = accept_block(tree, state, orphan, now)
        except BlockValidationError as e:
            logging.warning(f"Orphan block {orphan.hash.hex()} rejected: {e}")
            continue
        result.disconnected.extend(orphan_result.disconnected)
        result.connected.extend(orphan_result.connected)
    return result
