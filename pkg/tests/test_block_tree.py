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

from minichain.block_tree import AcceptStatus, BlockTree, accept_block
from minichain.chain_model import Block, BlockHeader, bits_to_target, make_coinbase, solve_header, tx_commitment
from minichain.consensus import BlockValidationError, ChainState, block_subsidy, validate_and_connect

NOW = 10_000


def _child(parent: Block, height: int, script_pubkey: bytes, params, bonus: int = 0) -> Block:
    """Coinbase-only block on parent (heights below the first retarget)"""
    coinbase = make_coinbase(height, script_pubkey, block_subsidy(height, params) + bonus)
    header = BlockHeader(
        prev_hash=parent.hash,
        tx_commitment=tx_commitment([coinbase]),
        time=parent.header.time + 1,
        bits=parent.header.bits,
    )
    return Block(solve_header(header, bits_to_target(header.bits)), (coinbase,))


def _branch(start: Block, length: int, script_pubkey: bytes, params, start_height: int = 0) -> list[Block]:
    blocks = []
    parent = start
    for offset in range(1, length + 1):
        parent = _child(parent, start_height + offset, script_pubkey, params)
        blocks.append(parent)
    return blocks


@pytest.fixture
def tree(genesis) -> BlockTree:
    return BlockTree(genesis)


def test_extends_active_chain(tree, chain, genesis, miner_wallet, easy_params):
    blocks = _branch(genesis, 3, miner_wallet.script_pubkey("miner"), easy_params)
    for height, block in enumerate(blocks, start=1):
        result = accept_block(tree, chain, block, NOW)
        assert result.status == AcceptStatus.CONNECTED
        assert result.connected == [block]
        assert tree.get(block.hash).height == height
    assert chain.tip_hash == blocks[-1].hash
    assert accept_block(tree, chain, blocks[0], NOW).status == AcceptStatus.DUPLICATE


def test_most_work_wins_and_ties_keep_first_seen(tree, chain, genesis, miner_wallet, easy_params):
    first = _branch(genesis, 2, miner_wallet.script_pubkey("miner"), easy_params)
    second = _branch(genesis, 3, miner_wallet.script_pubkey("other"), easy_params)
    for block in first:
        accept_block(tree, chain, block, NOW)

    assert accept_block(tree, chain, second[0], NOW).status == AcceptStatus.SIDE_BRANCH
    assert accept_block(tree, chain, second[1], NOW).status == AcceptStatus.SIDE_BRANCH
    assert chain.tip_hash == first[-1].hash

    result = accept_block(tree, chain, second[2], NOW)
    assert result.status == AcceptStatus.REORG
    assert result.disconnected == [first[1], first[0]]
    assert result.connected == second
    assert chain.tip_hash == second[-1].hash

    replayed = ChainState(easy_params, genesis)
    for block in second:
        validate_and_connect(replayed, block, NOW)
    assert chain.utxo_digest() == replayed.utxo_digest()
    assert chain.cumulative_work == replayed.cumulative_work


def test_orphans_are_adopted_when_parent_arrives(tree, chain, genesis, miner_wallet, easy_params):
    blocks = _branch(genesis, 3, miner_wallet.script_pubkey("miner"), easy_params)
    assert accept_block(tree, chain, blocks[2], NOW).status == AcceptStatus.ORPHAN
    assert accept_block(tree, chain, blocks[1], NOW).status == AcceptStatus.ORPHAN
    assert tree.orphan_count == 2
    assert accept_block(tree, chain, blocks[2], NOW).status == AcceptStatus.DUPLICATE

    result = accept_block(tree, chain, blocks[0], NOW)
    assert result.connected == blocks
    assert tree.orphan_count == 0
    assert chain.height == 3


def test_invalid_branch_leaves_active_chain(tree, chain, genesis, miner_wallet, easy_params):
    spk = miner_wallet.script_pubkey("miner")
    active = _branch(genesis, 2, spk, easy_params)
    for block in active:
        accept_block(tree, chain, block, NOW)
    before = chain.utxo_digest()

    other = miner_wallet.script_pubkey("other")
    fork = _child(genesis, 1, other, easy_params)
    greedy = _child(fork, 2, other, easy_params, bonus=1)
    heavier = _child(greedy, 3, other, easy_params)

    assert accept_block(tree, chain, fork, NOW).status == AcceptStatus.SIDE_BRANCH
    assert accept_block(tree, chain, greedy, NOW).status == AcceptStatus.SIDE_BRANCH
    with pytest.raises(BlockValidationError):
        accept_block(tree, chain, heavier, NOW)
    assert chain.tip_hash == active[-1].hash
    assert chain.utxo_digest() == before
    assert tree.get(greedy.hash).invalid

    with pytest.raises(BlockValidationError):
        accept_block(tree, chain, _child(heavier, 4, other, easy_params), NOW)
    assert chain.tip_hash == active[-1].hash


def test_bad_pow_is_not_stored(tree, chain, genesis, miner_wallet, easy_params):
    block = _child(genesis, 1, miner_wallet.script_pubkey("miner"), easy_params)
    header = block.header
    nonce = 0
    while int.from_bytes(BlockHeader(header.prev_hash, header.tx_commitment, header.time, header.bits, nonce).hash, "big") <= bits_to_target(header.bits):
        nonce += 1
    unsolved = Block(BlockHeader(header.prev_hash, header.tx_commitment, header.time, header.bits, nonce), block.transactions)
    with pytest.raises(BlockValidationError):
        accept_block(tree, chain, unsolved, NOW)
    assert unsolved.hash not in tree
    assert len(tree) == 1
