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

import pytest

from minichain.block_store import BlockLocation
from minichain.errors import NotFoundError
from minichain.explorer import IndexConsistencyError


@pytest.fixture
def mined(node, miner_wallet):
    return node.mine(3, miner_wallet.script_pubkey("miner"))


def test_genesis_info(node, genesis, mined):
    info = node.explorer.explorer_info(genesis.hash)
    assert info.height == 0
    assert info.prev_block is None
    assert info.next_block == mined[0].hash.hex()
    assert info.tx_count == 1
    assert info.to_dict()["block_hash"] == genesis.hash.hex()


def test_tip_info_has_no_next_block(node, mined):
    info = node.explorer.explorer_info(mined[-1].hash)
    assert info.height == 3
    assert info.next_block is None
    assert info.prev_block == mined[-2].hash.hex()
    assert info.size_bytes > 0


def test_latest_blocks_newest_first(node, genesis, mined):
    latest = node.explorer.latest_blocks(2)
    assert [info.height for info in latest] == [3, 2]
    assert [info.block_hash for info in node.explorer.latest_blocks(10)][-1] == genesis.hash.hex()


def test_lookups(node, mined):
    explorer = node.explorer
    assert explorer.block_hash_at(2) == mined[1].hash
    assert explorer.read_block(mined[1].hash) == mined[1]
    coinbase = mined[2].transactions[0]
    location = explorer.find_transaction(coinbase.txid)
    assert (location.height, location.position) == (3, 0)

    with pytest.raises(NotFoundError):
        explorer.block_hash_at(4)
    with pytest.raises(NotFoundError):
        explorer.block_hash_at(-1)
    with pytest.raises(NotFoundError):
        explorer.explorer_info(bytes(32))
    with pytest.raises(NotFoundError):
        explorer.find_transaction(bytes(32))


def test_coherence_and_inconsistent_entries(node, mined):
    explorer = node.explorer
    assert explorer.check_coherence() == 4
    with pytest.raises(IndexConsistencyError):
        explorer.index_block(bytes(32), 9, BlockLocation(0, 1), mined[0].hash)
    with pytest.raises(IndexConsistencyError):
        explorer.index_block(bytes(32), 1, BlockLocation(0, 1), None)
    with pytest.raises(IndexConsistencyError):
        explorer.index_block(mined[1].hash, 4, BlockLocation(0, 1), mined[-1].hash)
