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

import os

import pytest

from minichain.block_store import RECORD_HEADER_SIZE, BlockLocation, BlockStore, BlockStoreError

MAGIC = b"MINI"


@pytest.fixture
def blocks(chain, genesis, miner_wallet, mine):
    return [genesis, *mine(chain, miner_wallet.script_pubkey("miner"), 4)]


def _write(path: str, blocks) -> list[BlockLocation]:
    with BlockStore(path, MAGIC) as store:
        return [store.append_block(block) for block in blocks]


def test_append_and_read_back(tmp_path, blocks):
    path = str(tmp_path / "data" / "blocks.dat")
    locations = _write(path, blocks)
    assert locations[0].offset == 0
    assert locations[1].offset == RECORD_HEADER_SIZE + locations[0].length

    with BlockStore(path, MAGIC) as store:
        assert store.locations == locations
        assert [block.hash for _, block in store.iter_blocks()] == [block.hash for block in blocks]
        assert store.read_block(locations[2]) == blocks[2]
        assert store.size == os.path.getsize(path)


def test_truncated_tail_is_recovered(tmp_path, blocks):
    path = str(tmp_path / "blocks.dat")
    locations = _write(path, blocks)
    last = locations[-1]
    full = last.offset + RECORD_HEADER_SIZE + last.length

    for cut in range(last.offset + 1, full):
        with open(path, "r+b") as block_io:
            block_io.truncate(cut)
        with BlockStore(path, MAGIC) as store:
            assert store.locations == locations[:-1]
            assert store.size == last.offset
            assert store.append_block(blocks[-1]) == last
        assert os.path.getsize(path) == full


def test_garbage_after_last_record(tmp_path, blocks):
    path = str(tmp_path / "blocks.dat")
    locations = _write(path, blocks[:2])
    end = os.path.getsize(path)
    with open(path, "ab") as block_io:
        block_io.write(b"XXXX" + b"\x00" * 20)
    with BlockStore(path, MAGIC) as store:
        assert store.locations == locations
    assert os.path.getsize(path) == end


def test_read_outside_file(tmp_path, blocks):
    path = str(tmp_path / "blocks.dat")
    locations = _write(path, blocks[:1])
    with BlockStore(path, MAGIC) as store:
        with pytest.raises(BlockStoreError):
            store.read_block(BlockLocation(locations[0].offset + 1, locations[0].length))
        with pytest.raises(BlockStoreError):
            store.read_block(BlockLocation(10_000, 10))
