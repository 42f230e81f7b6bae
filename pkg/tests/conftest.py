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

from dataclasses import replace

import hypothesis
import pytest

from minichain.chain_model import SIMNET_PARAMS, Block, ChainParams, Transaction, make_genesis
from minichain.consensus import ChainState, validate_and_connect
from minichain.miner import build_block
from minichain.node import FullNode
from minichain.wallet import Wallet

hypothesis.settings.register_profile("ci", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False, deadline=None)
hypothesis.settings.load_profile("ci")

# About two hashes per block, keeps nonce search out of the way in multi-block tests
EASY_MAX_TARGET = 0x7FFFFF << 232


@pytest.fixture
def easy_params() -> ChainParams:
    """Simnet parameters with near-trivial proof-of-work and coinbase maturity 1"""
    return replace(SIMNET_PARAMS, max_target=EASY_MAX_TARGET, coinbase_maturity=1)


@pytest.fixture
def datadir(tmp_path) -> str:
    return str(tmp_path / "data")


@pytest.fixture
def miner_wallet() -> Wallet:
    wallet = Wallet()
    wallet.add_key("miner", b"test-miner")
    wallet.add_key("other", b"test-other")
    return wallet


@pytest.fixture
def genesis(easy_params, miner_wallet) -> Block:
    return make_genesis(
        easy_params, message="test chain", timestamp=1000, script_pubkey=miner_wallet.script_pubkey("miner")
    )


@pytest.fixture
def chain(easy_params, genesis) -> ChainState:
    return ChainState(easy_params, genesis)


@pytest.fixture
def mine():
    """Returns mine(state, script_pubkey, count=1, transactions=(), spacing=1) -> list[Block]

    Builds and connects count blocks, the first one carrying transactions
    """

    def _mine(
        state: ChainState,
        script_pubkey: bytes,
        count: int = 1,
        transactions: tuple[Transaction, ...] | list[Transaction] = (),
        spacing: int = 1,
    ) -> list[Block]:
        blocks = []
        for index in range(count):
            candidates = list(transactions) if index == 0 else []
            block = build_block(state, candidates, script_pubkey, state.tip.time + spacing)
            validate_and_connect(state, block, block.header.time)
            blocks.append(block)
        return blocks

    return _mine


@pytest.fixture
def node(datadir, easy_params, genesis):
    """Initialized FullNode on datadir"""
    with FullNode(datadir, easy_params) as full_node:
        full_node.initialize(genesis)
        yield full_node
