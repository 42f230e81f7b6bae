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

import pytest
from hypothesis import given
from hypothesis import strategies as st

from minichain.chain_model import (
    COIN,
    COINBASE_OUTPOINT,
    GENESIS_MESSAGE_DEFAULT,
    HEADER_SIZE,
    MAINNET_LIKE_PARAMS,
    SIMNET_PARAMS,
    Block,
    BlockHeader,
    CountOverflowError,
    OutPoint,
    TrailingBytesError,
    Transaction,
    TruncatedError,
    TxInput,
    TxOutput,
    bits_to_target,
    block_hash,
    deserialize_block,
    deserialize_header,
    deserialize_tx,
    genesis_message,
    make_coinbase,
    make_genesis,
    params_by_name,
    serialize_block,
    serialize_header,
    serialize_tx,
    sighash,
    target_to_bits,
    tx_commitment,
)
from minichain.crypto import hash256
from minichain.errors import ValidationError
from minichain.script_engine import make_p2pkh


# One coin from 11..11:index to the all-zero key hash, byte layout checked independently
GOLDEN_TX_HEX = (
    "01000000" "0000000000000000" "01000000" + "11" * 32 + "00000000" "00000000"
    "01000000" "00e1f50500000000" "19000000" "76a914" + "00" * 20 + "88ac"
)
GOLDEN_TXID = "57c8d3fec6646cf4b1c51741cb1a9cf132d59795553980f3d17a72aed93fd1ac"

# Commitment of the golden transaction spending indexes 0, 1 and 2
GOLDEN_COMMITMENT = "0646d337b0178741caaa2a1425802e059ac969ddd046f144a22193a8417b6043"

# Simnet genesis with the default message, time and an empty output script
GOLDEN_GENESIS_COINBASE_TXID = "bdfa48872870b65f4b86f2a182f4da21dc70fe98f75e6c25a61c7b35692d0e95"
GOLDEN_GENESIS_HASH = "0553972a23be351147d6ef519e6b88b394aa13f51a339e8b3f7003de9595660e"


def _golden_tx(index: int = 0) -> Transaction:
    return Transaction(
        inputs=(TxInput(OutPoint(bytes([0x11]) * 32, index)),),
        outputs=(TxOutput(COIN, make_p2pkh(bytes(20))),),
    )


def _payment(index: int = 0, lock_time: int = 0) -> Transaction:
    return Transaction(
        inputs=(TxInput(OutPoint(bytes([7]) * 32, index), b"\x01\x02"),),
        outputs=(TxOutput(1000, b"\x51"), TxOutput(2000, b"")),
        lock_time=lock_time,
    )


def test_compact_target_known_values():
    assert bits_to_target(0x1D00FFFF) == 0xFFFF << 208
    assert target_to_bits(0xFFFF << 208) == 0x1D00FFFF
    assert bits_to_target(target_to_bits(SIMNET_PARAMS.max_target)) == SIMNET_PARAMS.max_target


def test_compact_target_keeps_sign_bit_clear():
    bits = target_to_bits(0x80)
    assert bits & 0x00800000 == 0
    assert bits_to_target(bits) == 0x80


def test_negative_or_zero_bits_decode_to_zero():
    assert bits_to_target(0x04800000) == 0
    assert bits_to_target(0x04000000) == 0


@given(st.integers(min_value=1, max_value=(1 << 255)))
def test_compact_target_never_exceeds_original(target):
    decoded = bits_to_target(target_to_bits(target))
    assert 0 < decoded <= target
    assert target - decoded < 1 << max(target.bit_length() - 16, 0)


def test_params_presets():
    assert params_by_name("simnet") is SIMNET_PARAMS
    assert params_by_name("mainnet-like") is MAINNET_LIKE_PARAMS
    assert MAINNET_LIKE_PARAMS.halving_interval == 210_000
    assert MAINNET_LIKE_PARAMS.retarget_interval == 2016
    assert MAINNET_LIKE_PARAMS.target_spacing == 600
    with pytest.raises(ValidationError):
        params_by_name("testnet")


def test_params_validation():
    with pytest.raises(ValidationError):
        replace(SIMNET_PARAMS, target_spacing=0)
    with pytest.raises(ValidationError):
        replace(SIMNET_PARAMS, network_magic=b"AB")
    with pytest.raises(ValidationError):
        replace(SIMNET_PARAMS, max_target=1 << 256)


def test_transaction_serialization_round_trip():
    tx = _payment(lock_time=12345)
    assert deserialize_tx(serialize_tx(tx)) == tx
    assert deserialize_tx(serialize_tx(tx)).txid == tx.txid


def test_txid_depends_on_every_field():
    tx = _payment()
    assert replace(tx, lock_time=1).txid != tx.txid
    assert _payment(index=1).txid != tx.txid
    assert tx.with_script_sig(0, b"\x03").txid != tx.txid


def test_truncated_transaction():
    data = serialize_tx(_payment())
    with pytest.raises(TruncatedError):
        deserialize_tx(data[:-1])


def test_trailing_bytes():
    data = serialize_tx(_payment())
    with pytest.raises(TrailingBytesError):
        deserialize_tx(data + b"\x00")


def test_count_overflow():
    # version, lock_time, then an absurd input count
    data = bytes(4) + bytes(8) + (0xFFFFFFFF).to_bytes(4, "little")
    with pytest.raises(CountOverflowError):
        deserialize_tx(data)


def test_header_round_trip_and_size():
    header = BlockHeader(prev_hash=bytes(range(32)), tx_commitment=bytes(32), time=99, bits=0x1F00FFFF, nonce=5)
    data = serialize_header(header)
    assert len(data) == HEADER_SIZE == 88
    assert deserialize_header(data) == header


def test_block_round_trip():
    coinbase = make_coinbase(1, b"\x51", 50)
    transactions = (coinbase, _payment())
    header = BlockHeader(prev_hash=bytes(32), tx_commitment=tx_commitment(transactions), time=10, bits=0x1F00FFFF)
    block = Block(header, transactions)
    decoded = deserialize_block(serialize_block(block))
    assert decoded == block
    assert decoded.hash == block.hash


def test_commitment_binds_order():
    first, second = _payment(0), _payment(1)
    assert tx_commitment([first, second]) != tx_commitment([second, first])
    with pytest.raises(ValidationError):
        tx_commitment([])


def test_coinbase_height_keeps_txids_unique():
    first = make_coinbase(1, b"\x51", 50)
    second = make_coinbase(2, b"\x51", 50)
    assert first.is_coinbase and second.is_coinbase
    assert first.txid != second.txid
    assert first.inputs[0].prevout == COINBASE_OUTPOINT
    assert not _payment().is_coinbase


def test_sighash_ignores_script_sigs_but_binds_index():
    tx = Transaction(
        inputs=(TxInput(OutPoint(bytes(32), 0)), TxInput(OutPoint(bytes(32), 1))),
        outputs=(TxOutput(5, b""),),
    )
    assert sighash(tx, 0) == sighash(tx.with_script_sig(0, b"\x01\x02"), 0)
    assert sighash(tx, 0) != sighash(tx, 1)
    assert sighash(tx, 0) != sighash(replace(tx, outputs=(TxOutput(6, b""),)), 0)
    with pytest.raises(ValidationError):
        sighash(tx, 2)


def test_genesis_block():
    genesis = make_genesis(SIMNET_PARAMS)
    assert genesis.header.prev_hash == bytes(32)
    assert genesis.header.bits == SIMNET_PARAMS.max_bits
    assert int.from_bytes(genesis.hash, "big") <= SIMNET_PARAMS.max_target
    assert genesis_message(genesis) == GENESIS_MESSAGE_DEFAULT
    assert genesis.transactions[0].outputs[0].amount == SIMNET_PARAMS.initial_subsidy
    assert make_genesis(SIMNET_PARAMS).hash == genesis.hash


def test_genesis_message_changes_hash():
    genesis = make_genesis(SIMNET_PARAMS, message="hello")
    assert genesis_message(genesis) == "hello"
    assert genesis.hash != make_genesis(SIMNET_PARAMS).hash
    with pytest.raises(ValidationError):
        make_genesis(SIMNET_PARAMS, message="")
    with pytest.raises(ValidationError):
        make_genesis(SIMNET_PARAMS, message="x" * 1001)


def test_golden_transaction():
    tx = _golden_tx()
    assert serialize_tx(tx).hex() == GOLDEN_TX_HEX
    assert tx.txid.hex() == GOLDEN_TXID
    assert deserialize_tx(bytes.fromhex(GOLDEN_TX_HEX)) == tx


def test_golden_commitment():
    assert tx_commitment([_golden_tx(index) for index in range(3)]).hex() == GOLDEN_COMMITMENT


def test_golden_genesis():
    genesis = make_genesis(SIMNET_PARAMS)
    assert genesis.header.bits == 0x2100FFFF
    assert genesis.header.time == 1231006505
    assert genesis.header.nonce == 0
    assert genesis.transactions[0].txid.hex() == GOLDEN_GENESIS_COINBASE_TXID
    assert genesis.header.tx_commitment == hash256(genesis.transactions[0].txid)
    assert block_hash(genesis.header).hex() == GOLDEN_GENESIS_HASH


def test_output_amount_must_fit_u64():
    assert TxOutput((1 << 64) - 1, b"").amount == (1 << 64) - 1
    with pytest.raises(ValidationError):
        TxOutput(-1, b"")
    with pytest.raises(ValidationError):
        TxOutput(1 << 64, b"")
