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
from dataclasses import replace

import pytest

from minichain.chain_model import COIN, OutPoint, Transaction, TxInput, TxOutput
from minichain.consensus import ChainState, check_tx
from minichain.crypto import ADDRESS_VERSION_P2PKH, encode_address, hash20
from minichain.errors import NotFoundError
from minichain.kv_store import KvStore
from minichain.script_engine import ExecContext, classify_script, eval_script, make_p2sh
from minichain.wallet import (
    InsufficientFundsError,
    MissingKeyError,
    Wallet,
    WalletError,
    create_multisig,
    script_for_address,
)


def test_keys_are_deterministic_per_seed(miner_wallet):
    again = Wallet()
    again.add_key("miner", b"test-miner")
    assert again.public_key("miner") == miner_wallet.public_key("miner")
    assert again.add_key("miner", b"test-miner") == again.key("miner")
    with pytest.raises(WalletError):
        again.add_key("miner", b"another seed")
    with pytest.raises(WalletError):
        again.add_key("", b"seed")
    with pytest.raises(NotFoundError):
        again.key("missing")


def test_script_for_address(miner_wallet):
    address = miner_wallet.address("miner")
    assert address.text.startswith("1")
    assert script_for_address(address.text) == miner_wallet.script_pubkey("miner")

    _, p2sh = create_multisig(1, [miner_wallet.public_key("miner")])
    assert classify_script(script_for_address(p2sh)) == "p2sh"

    with pytest.raises(WalletError):
        script_for_address(encode_address(0x6F, bytes(20)))
    assert script_for_address(encode_address(ADDRESS_VERSION_P2PKH, bytes(20)))[3:23] == bytes(20)


def test_balance_and_maturity(chain, miner_wallet, genesis, easy_params):
    assert miner_wallet.balance(chain) == 50 * COIN
    assert len(miner_wallet.spendable_utxos(chain)) == 1

    strict = ChainState(replace(easy_params, coinbase_maturity=10), genesis)
    assert miner_wallet.balance(strict) == 50 * COIN
    assert miner_wallet.spendable_utxos(strict) == []
    with pytest.raises(InsufficientFundsError):
        miner_wallet.build_payment(strict, miner_wallet.address("other"), COIN, 0)


def test_build_payment_largest_first_with_change(chain, miner_wallet, mine):
    mine(chain, miner_wallet.script_pubkey("miner"), 2)
    unsigned = miner_wallet.build_payment(chain, miner_wallet.address("other"), 60 * COIN, 1000, "miner")
    assert len(unsigned.inputs) == 2
    assert unsigned.outputs[0] == TxOutput(60 * COIN, miner_wallet.script_pubkey("other"))
    assert unsigned.outputs[1] == TxOutput(40 * COIN - 1000, miner_wallet.script_pubkey("miner"))

    exact = miner_wallet.build_payment(chain, miner_wallet.address("other"), 50 * COIN - 1000, 1000)
    assert len(exact.outputs) == 1

    signed = miner_wallet.sign_all(unsigned, chain)
    assert check_tx(chain, signed, chain.height + 1, chain.tip.time) == 1000


def test_build_payment_errors(chain, miner_wallet):
    address = miner_wallet.address("other")
    with pytest.raises(WalletError):
        miner_wallet.build_payment(chain, address, 0, 0)
    with pytest.raises(WalletError):
        miner_wallet.build_payment(chain, address, COIN, -1)
    with pytest.raises(InsufficientFundsError):
        miner_wallet.build_payment(chain, address, 50 * COIN, 1)
    outpoint = miner_wallet.spendable_utxos(chain)[0].outpoint
    with pytest.raises(InsufficientFundsError):
        miner_wallet.build_payment(chain, address, COIN, 0, exclude={outpoint})


def test_multisig_fund_and_spend(chain, miner_wallet, mine):
    cosigners = [Wallet() for _ in range(3)]
    for index, cosigner in enumerate(cosigners):
        cosigner.add_key("key", f"cosigner-{index}".encode())
    pubkeys = [cosigner.public_key("key") for cosigner in cosigners]

    watcher = Wallet()
    redeem, address = watcher.create_multisig(2, pubkeys)
    assert address.text.startswith("3")
    assert len(address.text) == 34

    funding = miner_wallet.sign_all(miner_wallet.build_payment(chain, address, 10 * COIN, 1000, "miner"), chain)
    mine(chain, miner_wallet.script_pubkey("miner"), 1, [funding])
    assert watcher.balance(chain) == 10 * COIN
    assert not watcher.can_sign(funding.outputs[0].script_pubkey)

    spend = Transaction(
        inputs=(TxInput(OutPoint(funding.txid, 0)),),
        outputs=(TxOutput(10 * COIN - 1000, miner_wallet.script_pubkey("miner")),),
    )
    with pytest.raises(MissingKeyError) as e:
        watcher.sign_all(spend, chain)
    assert e.value.input_index == 0

    signer = Wallet()
    signer.add_key("first", b"cosigner-0")
    signer.add_key("third", b"cosigner-2")
    signer.watch_redeem(redeem)
    signed = signer.sign_all(spend, chain)
    assert check_tx(chain, signed, chain.height + 1, chain.tip.time) == 1000

    lonely = Wallet()
    lonely.add_key("first", b"cosigner-0")
    lonely.watch_redeem(redeem)
    with pytest.raises(MissingKeyError):
        lonely.sign_all(spend, chain)


def test_wallet_persists_keys_and_records(tmp_path):
    path = str(tmp_path / "wallet.kv")
    with KvStore(path) as store:
        wallet = Wallet(store)
        wallet.add_key("alice", b"alice-seed")
        redeem, _ = wallet.create_multisig(1, [wallet.public_key("alice")])
        wallet.save_record("note", b"hello")
    assert os.path.getsize(path) > 0

    with KvStore(path) as store:
        reopened = Wallet(store)
        assert reopened.labels == ["alice"]
        assert reopened.public_key("alice") == wallet.public_key("alice")
        assert reopened.can_sign(make_p2sh(hash20(redeem)))
        assert reopened.load_record("note") == b"hello"

    with pytest.raises(WalletError):
        Wallet().save_record("note", b"x")
    assert Wallet().load_record("note") is None


def test_p2sh_wrapping_p2pkh(miner_wallet):
    redeem = miner_wallet.script_pubkey("other")
    miner_wallet.watch_redeem(redeem)
    script_pubkey = make_p2sh(hash20(redeem))
    assert miner_wallet.can_sign(script_pubkey)

    tx = Transaction(inputs=(TxInput(OutPoint(bytes([3]) * 32, 0)),), outputs=(TxOutput(COIN, redeem),))
    signed = miner_wallet.sign_input(tx, 0, script_pubkey)
    assert eval_script(signed.inputs[0].script_sig, script_pubkey, ExecContext(signed, 0)).accepted

    # Redeem script that is itself a P2SH lock
    nested = make_p2sh(hash20(redeem))
    miner_wallet.watch_redeem(nested)
    with pytest.raises(WalletError):
        miner_wallet.sign_input(tx, 0, make_p2sh(hash20(nested)))
