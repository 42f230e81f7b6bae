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

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from minichain.chain_model import (
    COIN,
    MAINNET_LIKE_PARAMS,
    SIMNET_PARAMS,
    Block,
    OutPoint,
    Transaction,
    TxInput,
    TxOutput,
    bits_to_target,
    make_coinbase,
    solve_header,
    target_to_bits,
    tx_commitment,
)
from minichain.consensus import (
    BlockValidationError,
    ChainState,
    RejectReason,
    TxValidationError,
    block_subsidy,
    chain_work,
    check_pow,
    check_tx,
    cumulative_supply,
    disconnect_tip,
    next_bits,
    retarget,
    supply_cap,
    supply_schedule,
    validate_and_connect,
)
from minichain.errors import ValidationError
from minichain.miner import build_block

from conftest import EASY_MAX_TARGET

# Random blocks connected and disconnected again
CONNECT_TRIALS = 1000

# Share of random blocks carrying nothing but the coinbase
COINBASE_ONLY_SHARE = 0.2

# Most transactions a random block carries
MAX_RANDOM_TXS = 6


def _resolved(block: Block, transactions: tuple[Transaction, ...] | None = None, **header_changes) -> Block:
    """Same block with new transactions or header fields and a fresh valid nonce"""
    transactions = block.transactions if transactions is None else transactions
    changes = {"tx_commitment": tx_commitment(transactions), "nonce": 0, **header_changes}
    header = replace(block.header, **changes)
    return Block(solve_header(header, bits_to_target(header.bits)), transactions)


def _payment(state: ChainState, wallet, amount: int = COIN, fee: int = 1000, **kwargs) -> Transaction:
    unsigned = wallet.build_payment(state, wallet.address("other"), amount, fee, "miner", **kwargs)
    return wallet.sign_all(unsigned, state)


def test_mainnet_like_subsidy_halves_by_floor():
    for halvings in range(40):
        height = halvings * MAINNET_LIKE_PARAMS.halving_interval
        assert block_subsidy(height, MAINNET_LIKE_PARAMS) == (50 * COIN) // 2**halvings
    assert block_subsidy(209_999, MAINNET_LIKE_PARAMS) == 50 * COIN
    assert block_subsidy(64 * 210_000, MAINNET_LIKE_PARAMS) == 0


def test_mainnet_like_supply_cap():
    cap = supply_cap(MAINNET_LIKE_PARAMS)
    assert cap == 2_099_999_997_690_000
    assert cap < MAINNET_LIKE_PARAMS.max_money
    assert cumulative_supply(209_999, MAINNET_LIKE_PARAMS) == 210_000 * 50 * COIN
    assert cumulative_supply(100 * 210_000, MAINNET_LIKE_PARAMS) == cap


def test_supply_schedule_rows():
    rows = supply_schedule(MAINNET_LIKE_PARAMS)
    assert len(rows) == 33
    assert rows[0]["subsidy"] == 50 * COIN
    assert rows[-1]["subsidy"] == 1
    assert rows[-1]["running_total"] == supply_cap(MAINNET_LIKE_PARAMS)


def test_simnet_supply_matches_schedule():
    assert cumulative_supply(0, SIMNET_PARAMS) == 50 * COIN
    assert cumulative_supply(149, SIMNET_PARAMS) == 150 * 50 * COIN
    assert cumulative_supply(150, SIMNET_PARAMS) == 150 * 50 * COIN + 25 * COIN


def test_retarget_on_schedule_keeps_target():
    target = SIMNET_PARAMS.max_target >> 8
    assert retarget(target, SIMNET_PARAMS.expected_timespan, SIMNET_PARAMS) == target


def test_retarget_clamps():
    target = SIMNET_PARAMS.max_target >> 8
    expected = SIMNET_PARAMS.expected_timespan
    assert retarget(target, expected * 100, SIMNET_PARAMS) == target * 4
    assert retarget(target, 1, SIMNET_PARAMS) == target // 4
    assert retarget(SIMNET_PARAMS.max_target, expected * 2, SIMNET_PARAMS) == SIMNET_PARAMS.max_target
    with pytest.raises(ValidationError):
        retarget(target, 0, SIMNET_PARAMS)


@given(
    target=st.integers(min_value=1, max_value=SIMNET_PARAMS.max_target),
    timespan=st.integers(min_value=1, max_value=10_000),
)
def test_retarget_stays_within_clamp(target, timespan):
    new_target = retarget(target, timespan, SIMNET_PARAMS)
    assert 1 <= new_target <= SIMNET_PARAMS.max_target
    assert new_target <= target * SIMNET_PARAMS.clamp_factor
    assert new_target >= target // SIMNET_PARAMS.clamp_factor - 1


def test_chain_work():
    assert chain_work((1 << 256) - 1) == 1
    assert chain_work(EASY_MAX_TARGET) == 2
    with pytest.raises(ValidationError):
        chain_work(0)


def test_genesis_pow_and_state(chain, genesis, easy_params):
    assert check_pow(genesis.header, easy_params)
    assert chain.height == 0
    assert chain.tip_hash == genesis.hash
    assert chain.utxo_total() == easy_params.initial_subsidy
    assert not check_pow(genesis.header, replace(easy_params, max_target=EASY_MAX_TARGET >> 8))


def test_next_bits_outside_retarget_height(chain, miner_wallet, mine):
    mine(chain, miner_wallet.script_pubkey("miner"), 5)
    assert next_bits(chain) == chain.tip.bits


def test_fast_blocks_raise_difficulty(chain, miner_wallet, mine, easy_params):
    mine(chain, miner_wallet.script_pubkey("miner"), easy_params.retarget_interval - 1, spacing=0)
    assert next_bits(chain) == target_to_bits(EASY_MAX_TARGET // easy_params.clamp_factor)


def test_slow_blocks_stay_at_max_target(chain, miner_wallet, mine, easy_params):
    mine(chain, miner_wallet.script_pubkey("miner"), easy_params.retarget_interval - 1, spacing=5)
    assert next_bits(chain) == easy_params.max_bits


def test_connect_and_disconnect_are_inverse(chain, miner_wallet, mine):
    spk = miner_wallet.script_pubkey("miner")
    mine(chain, spk, 2)
    before = chain.utxo_digest()
    total_before = chain.utxo_total()

    first = _payment(chain, miner_wallet, 10 * COIN)
    prevout = OutPoint(first.txid, 0)
    second = miner_wallet.sign_all(
        Transaction(inputs=(TxInput(prevout),), outputs=(TxOutput(10 * COIN - 1000, spk),)),
        chain,
        {prevout: first.outputs[0]},
    )
    [block] = mine(chain, spk, 1, [first, second])
    assert [tx.txid for tx in block.transactions[1:]] == [first.txid, second.txid]
    assert prevout not in chain.utxos
    assert chain.utxo_total() == total_before + block_subsidy(3, chain.params)

    assert disconnect_tip(chain) == block.header
    assert chain.height == 2
    assert chain.utxo_digest() == before


def _random_spend(rng, wallet, state, inputs, extra_outputs) -> Transaction:
    """Signed transaction spending inputs [(outpoint, output)] into one or two outputs"""
    total = sum(output.amount for _, output in inputs)
    remaining = total - int(rng.integers(0, min(1000, total)))
    count = min(int(rng.integers(1, 3)), remaining)
    amounts = [remaining // count] * count
    amounts[0] += remaining % count
    outputs = tuple(TxOutput(amount, wallet.script_pubkey(str(rng.choice(["miner", "other"])))) for amount in amounts)
    unsigned = Transaction(inputs=tuple(TxInput(outpoint) for outpoint, _ in inputs), outputs=outputs)
    return wallet.sign_all(unsigned, state, extra_outputs)


def _random_transactions(rng, wallet, state) -> list[Transaction]:
    """Random spends of the wallet's outputs, some of them spending an earlier one of the same list"""
    spendable = wallet.spendable_utxos(state)
    if not spendable or rng.random() < COINBASE_ONLY_SHARE:
        return []
    picks = rng.permutation(len(spendable))[: int(rng.integers(1, 5))]
    pending = [(spendable[index].outpoint, spendable[index].entry.output) for index in picks]
    extra_outputs = {}
    transactions = []
    while pending and len(transactions) < MAX_RANDOM_TXS:
        take = int(rng.integers(1, 3))
        inputs, pending = pending[:take], pending[take:]
        tx = _random_spend(rng, wallet, state, inputs, extra_outputs)
        transactions.append(tx)
        if rng.random() < 0.5:
            chained = (OutPoint(tx.txid, 0), tx.outputs[0])
            extra_outputs[chained[0]] = chained[1]
            pending.insert(0, chained)
    return transactions


@pytest.mark.slow
def test_random_blocks_disconnect_exactly(chain, miner_wallet):
    rng = np.random.default_rng(9)
    spk = miner_wallet.script_pubkey("miner")
    for _ in range(CONNECT_TRIALS):
        transactions = _random_transactions(rng, miner_wallet, chain)
        block = build_block(chain, transactions, spk, chain.tip.time + 1)
        assert list(block.transactions[1:]) == transactions

        before = chain.utxo_digest()
        height = chain.height
        validate_and_connect(chain, block, block.header.time)
        assert chain.utxo_digest() != before

        assert disconnect_tip(chain) == block.header
        assert chain.height == height
        assert chain.utxo_digest() == before

        # Keep the chain growing so later blocks have more to spend
        validate_and_connect(chain, block, block.header.time)


def test_disconnect_genesis_fails(chain):
    with pytest.raises(ValidationError):
        disconnect_tip(chain)


def test_check_tx_returns_fee(chain, miner_wallet):
    tx = _payment(chain, miner_wallet, fee=1234)
    assert check_tx(chain, tx, 1, chain.tip.time) == 1234


def _reason(state: ChainState, tx: Transaction, block_time: int | None = None) -> RejectReason:
    with pytest.raises(TxValidationError) as e:
        check_tx(state, tx, state.height + 1, state.tip.time if block_time is None else block_time)
    return e.value.reason


def test_check_tx_rejections(chain, miner_wallet, genesis, easy_params):
    spk = miner_wallet.script_pubkey("miner")
    good = _payment(chain, miner_wallet)
    coin = good.inputs[0]

    missing = Transaction(inputs=(TxInput(OutPoint(bytes(range(32)), 0)),), outputs=good.outputs)
    assert _reason(chain, missing) == RejectReason.MISSING_UTXO

    twice = Transaction(inputs=(coin, coin), outputs=good.outputs)
    assert _reason(chain, twice) == RejectReason.DOUBLE_SPEND

    unsigned = replace(good, inputs=(replace(coin, script_sig=b""),))
    assert _reason(chain, unsigned) == RejectReason.SCRIPT_REJECT

    tampered = replace(good, outputs=(TxOutput(good.outputs[0].amount + 1, good.outputs[0].script_pubkey),) + good.outputs[1:])
    assert _reason(chain, tampered) == RejectReason.SCRIPT_REJECT

    overspend = miner_wallet.sign_all(
        Transaction(inputs=(TxInput(coin.prevout),), outputs=(TxOutput(51 * COIN, spk),)), chain
    )
    assert _reason(chain, overspend) == RejectReason.VALUE_OVERFLOW

    no_outputs = Transaction(inputs=(coin,), outputs=())
    assert _reason(chain, no_outputs) == RejectReason.BAD_TX

    coinbase_like = make_coinbase(1, spk, COIN)
    assert _reason(chain, coinbase_like) == RejectReason.BAD_COINBASE

    locked = _payment(chain, miner_wallet, lock_time=chain.tip.time + 100)
    assert _reason(chain, locked) == RejectReason.NON_FINAL
    assert check_tx(chain, locked, 1, chain.tip.time + 100) == 1000

    strict = ChainState(replace(easy_params, coinbase_maturity=10), genesis)
    assert _reason(strict, good) == RejectReason.IMMATURE_COINBASE


def _block_reason(state: ChainState, block: Block, now: int | None = None) -> RejectReason:
    before = state.utxo_digest()
    height = state.height
    with pytest.raises(BlockValidationError) as e:
        validate_and_connect(state, block, block.header.time if now is None else now)
    assert state.utxo_digest() == before
    assert state.height == height
    return e.value.reason


def test_block_rejections(chain, miner_wallet, mine):
    spk = miner_wallet.script_pubkey("miner")
    mine(chain, spk, 2)
    payment = _payment(chain, miner_wallet)
    block = build_block(chain, [payment], spk, chain.tip.time + 1)
    coinbase = block.transactions[0]
    subsidy = block_subsidy(chain.height + 1, chain.params)

    assert _block_reason(chain, _resolved(block, prev_hash=bytes(32))) == RejectReason.BAD_LINK
    assert _block_reason(chain, _resolved(block, tx_commitment=bytes(32))) == RejectReason.BAD_COMMITMENT
    assert _block_reason(chain, _resolved(block, time=chain.tip.time - 1)) == RejectReason.BAD_TIME
    assert _block_reason(chain, block, now=block.header.time - chain.params.max_future_time - 1) == RejectReason.BAD_TIME
    assert _block_reason(chain, _resolved(block, bits=target_to_bits(EASY_MAX_TARGET // 2))) == RejectReason.BAD_BITS

    greedy = make_coinbase(chain.height + 1, spk, subsidy + 1000 + 1)
    assert _block_reason(chain, _resolved(block, (greedy, payment))) == RejectReason.BAD_SUBSIDY

    wrong_height = make_coinbase(chain.height + 7, spk, subsidy)
    assert _block_reason(chain, _resolved(block, (wrong_height,))) == RejectReason.BAD_COINBASE
    assert _block_reason(chain, _resolved(block, (payment,))) == RejectReason.BAD_COINBASE
    assert _block_reason(chain, _resolved(block, (coinbase, payment, payment))) == RejectReason.BAD_TX

    conflicting = _payment(chain, miner_wallet, amount=2 * COIN)
    assert conflicting.inputs[0].prevout == payment.inputs[0].prevout
    assert _block_reason(chain, _resolved(block, (coinbase, payment, conflicting))) == RejectReason.DOUBLE_SPEND

    target = bits_to_target(block.header.bits)
    nonce = 0
    while int.from_bytes(replace(block.header, nonce=nonce).hash, "big") <= target:
        nonce += 1
    unsolved = Block(replace(block.header, nonce=nonce), block.transactions)
    assert _block_reason(chain, unsolved) == RejectReason.BAD_POW

    validate_and_connect(chain, block, block.header.time)
    assert chain.tip_hash == block.hash
