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
from dataclasses import dataclass

from minichain.chain_model import OutPoint, Script, Transaction, TxInput, TxOutput
from minichain.consensus import ChainState, UtxoEntry
from minichain.crypto import (
    ADDRESS_VERSION_P2PKH,
    ADDRESS_VERSION_P2SH,
    Address,
    KeyPair,
    Signature,
    address_for_pubkey,
    hash20,
    keypair_generate,
    parse_address,
    sign,
)
from minichain.errors import NotFoundError, ValidationError
from minichain.kv_store import KvStore
from minichain.script_engine import (
    ExecContext,
    classify_script,
    make_multisig,
    make_p2pkh,
    make_p2sh,
    multisig_params,
    p2sh_address,
    push_data,
)

KEY_PREFIX = b"key:"
REDEEM_PREFIX = b"redeem:"
RECORD_PREFIX = b"record:"


class WalletError(ValidationError):
    pass


class InsufficientFundsError(WalletError):
    pass


class MissingKeyError(WalletError):
    def __init__(self, input_index: int, message: str) -> None:
        super().__init__(f"input {input_index}: {message}")
        self.input_index = input_index


@dataclass(frozen=True)
class OwnedUtxo:
    outpoint: OutPoint
    entry: UtxoEntry

    @property
    def amount(self) -> int:
        return self.entry.output.amount


def create_multisig(m: int, pubkeys: list[bytes]) -> tuple[Script, Address]:
    """
    Raises:
        ValidationError: unless 1 <= m <= N <= 16, or redeem script too long

    Returns:
        tuple[Script, Address]: (redeem script, P2SH address)
    """
    redeem = make_multisig(m, pubkeys)
    return redeem, p2sh_address(redeem)


def script_for_address(address: Address | str) -> Script:
    """
    Raises:
        WalletError: address version is neither P2PKH nor P2SH

    Returns:
        Script: output lock paying to address
    """
    if isinstance(address, str):
        address = parse_address(address)
    if address.version == ADDRESS_VERSION_P2PKH:
        return make_p2pkh(address.payload)
    if address.version == ADDRESS_VERSION_P2SH:
        return make_p2sh(address.payload)
    raise WalletError(f"Unknown address version {address.version} of {address.text}")


def _unlocking_script(script: Script, signatures: list[Signature], key_pairs: list[KeyPair]) -> Script:
    """script_sig pushes that satisfy a p2pkh, p2pk or bare multisig lock

    Raises:
        WalletError: any other kind of lock (a redeem script wrapping another P2SH included)
    """
    kind = classify_script(script)
    if kind == "p2pkh":
        return push_data(signatures[0]) + push_data(key_pairs[0].public_key)
    if kind == "p2pk":
        return push_data(signatures[0])
    if kind == "multisig":
        return b"".join(push_data(signature) for signature in signatures)
    raise WalletError(f"Can't build an unlocking script for a {kind} lock")


class Wallet:
    def __init__(self, store: KvStore | None = None) -> None:
        """Keys by label and watched redeem scripts, optionally persisted into a KV log

        Args:
            store (KvStore | None, optional): wallet.kv store. Defaults to memory only
        """
        self._store = store
        self._keys: dict[str, KeyPair] = {}
        self._by_pubkey: dict[bytes, KeyPair] = {}
        self._redeem_scripts: dict[bytes, Script] = {}
        if store is not None:
            for key in store.keys(KEY_PREFIX):
                self._load_key(key[len(KEY_PREFIX) :].decode("utf-8"), store.get(key) or b"")
            for key in store.keys(REDEEM_PREFIX):
                redeem = store.get(key) or b""
                self._redeem_scripts[hash20(redeem)] = redeem
            logging.debug(f"Loaded {len(self._keys)} keys and {len(self._redeem_scripts)} redeem scripts")

    def _load_key(self, label: str, seed: bytes) -> KeyPair:
        key_pair = keypair_generate(seed)
        self._keys[label] = key_pair
        self._by_pubkey[key_pair.public_key] = key_pair
        return key_pair

    @property
    def labels(self) -> list[str]:
        return list(self._keys)

    def add_key(self, label: str, seed: bytes) -> KeyPair:
        """Derives key pair from seed and stores it under label

        Raises:
            WalletError: label already holds a different key
        """
        if not label:
            raise WalletError("Key label must not be empty")
        key_pair = keypair_generate(seed)
        existing = self._keys.get(label)
        if existing is not None:
            if existing.public_key != key_pair.public_key:
                raise WalletError(f"Label {label!r} already holds another key")
            return existing
        if self._store is not None:
            self._store.put(KEY_PREFIX + label.encode("utf-8"), seed)
        return self._load_key(label, seed)

    def key(self, label: str) -> KeyPair:
        if label not in self._keys:
            raise NotFoundError(f"No key labelled {label!r} in the wallet")
        return self._keys[label]

    def public_key(self, label: str) -> bytes:
        return self.key(label).public_key

    def address(self, label: str) -> Address:
        return address_for_pubkey(self.key(label).public_key)

    def script_pubkey(self, label: str) -> Script:
        return make_p2pkh(hash20(self.key(label).public_key))

    def watch_redeem(self, redeem: Script) -> Address:
        """Remembers redeem script so outputs to its P2SH address count as owned"""
        address = p2sh_address(redeem)
        script_hash = hash20(redeem)
        if script_hash not in self._redeem_scripts:
            self._redeem_scripts[script_hash] = redeem
            if self._store is not None:
                self._store.put(REDEEM_PREFIX + script_hash.hex().encode(), redeem)
        return address

    def create_multisig(self, m: int, pubkeys: list[bytes]) -> tuple[Script, Address]:
        """create_multisig() that also watches the resulting address"""
        redeem, address = create_multisig(m, pubkeys)
        self.watch_redeem(redeem)
        return redeem, address

    def save_record(self, name: str, value: bytes) -> None:
        if self._store is None:
            raise WalletError("Wallet has no backing store")
        self._store.put(RECORD_PREFIX + name.encode("utf-8"), value)

    def load_record(self, name: str) -> bytes | None:
        if self._store is None:
            return None
        return self._store.get(RECORD_PREFIX + name.encode("utf-8"))

    def _signing_keys(self, script_pubkey: Script) -> tuple[int, list[KeyPair]] | None:
        """
        Returns:
            tuple[int, list[KeyPair]] | None: (signatures required, our keys in script order)
        """
        kind = classify_script(script_pubkey)
        if kind == "p2pkh":
            key_pair = next((kp for kp in self._keys.values() if hash20(kp.public_key) == script_pubkey[3:23]), None)
            return (1, [key_pair]) if key_pair else (1, [])
        if kind == "p2pk":
            key_pair = self._by_pubkey.get(script_pubkey[1:-1])
            return (1, [key_pair]) if key_pair else (1, [])
        if kind == "p2sh":
            redeem = self._redeem_scripts.get(script_pubkey[2:22])
            if redeem is None:
                return None
            return self._signing_keys(redeem)
        if kind == "multisig":
            m, pubkeys = multisig_params(script_pubkey) or (0, [])
            return m, [self._by_pubkey[pubkey] for pubkey in pubkeys if pubkey in self._by_pubkey]
        return None

    def owns(self, script_pubkey: Script) -> bool:
        """True if script pays to one of our keys or a watched redeem script"""
        kind = classify_script(script_pubkey)
        if kind == "p2sh":
            return script_pubkey[2:22] in self._redeem_scripts
        signing = self._signing_keys(script_pubkey)
        return signing is not None and bool(signing[1])

    def can_sign(self, script_pubkey: Script) -> bool:
        signing = self._signing_keys(script_pubkey)
        return signing is not None and len(signing[1]) >= signing[0]

    def owned_utxos(self, state: ChainState) -> list[OwnedUtxo]:
        """
        Returns:
            list[OwnedUtxo]: UTXOs paying to the wallet, sorted by outpoint
        """
        return [
            OwnedUtxo(outpoint, entry)
            for outpoint, entry in sorted(state.utxos.items(), key=lambda item: item[0])
            if self.owns(entry.output.script_pubkey)
        ]

    def balance(self, state: ChainState) -> int:
        return sum(utxo.amount for utxo in self.owned_utxos(state))

    def spendable_utxos(self, state: ChainState, exclude: set[OutPoint] | frozenset = frozenset()) -> list[OwnedUtxo]:
        """Owned, signable UTXOs usable in the next block (mature coinbases only), minus exclude"""
        next_height = state.height + 1
        return [
            utxo
            for utxo in self.owned_utxos(state)
            if utxo.outpoint not in exclude
            and self.can_sign(utxo.entry.output.script_pubkey)
            and not (utxo.entry.is_coinbase and next_height < utxo.entry.height + state.params.coinbase_maturity)
        ]

    def build_payment(
        self,
        state: ChainState,
        destination: Address | str,
        amount: int,
        fee: int,
        change_label: str | None = None,
        exclude: set[OutPoint] | frozenset = frozenset(),
        lock_time: int = 0,
    ) -> Transaction:
        """Builds unsigned payment. Inputs are taken largest first; change goes back to the wallet

        Args:
            state (ChainState): active chain to spend from
            destination (Address | str): P2PKH or P2SH address
            amount (int): base units sent to destination
            fee (int): base units left to the miner
            change_label (str | None, optional): key receiving change. Defaults to the first key
            exclude (set[OutPoint], optional): outpoints not to use (e.g. spent in the mempool)
            lock_time (int, optional): transaction lock_time. Defaults to 0

        Raises:
            WalletError: zero amount, negative fee or unknown address version
            InsufficientFundsError: spendable balance below amount + fee

        Returns:
            Transaction: payment with empty script_sigs
        """
        if amount <= 0:
            raise WalletError("Amount must be positive")
        if fee < 0:
            raise WalletError("Fee must not be negative")
        destination_script = script_for_address(destination)

        candidates = sorted(
            self.spendable_utxos(state, exclude), key=lambda utxo: (-utxo.amount, utxo.outpoint)
        )
        selected: list[OwnedUtxo] = []
        total = 0
        for utxo in candidates:
            if total >= amount + fee:
                break
            selected.append(utxo)
            total += utxo.amount
        if total < amount + fee:
            raise InsufficientFundsError(f"Spendable balance {total} is below {amount + fee}")

        outputs = [TxOutput(amount, destination_script)]
        change = total - amount - fee
        if change > 0:
            if change_label is None:
                if not self._keys:
                    raise WalletError("Wallet has no key to receive change")
                change_label = next(iter(self._keys))
            outputs.append(TxOutput(change, self.script_pubkey(change_label)))

        logging.debug(f"Payment of {amount} (fee {fee}) uses {len(selected)} inputs, change {change}")
        return Transaction(
            inputs=tuple(TxInput(utxo.outpoint) for utxo in selected),
            outputs=tuple(outputs),
            lock_time=lock_time,
        )

    def signature(self, tx: Transaction, input_index: int, public_key: bytes) -> Signature:
        """Signs sighash(tx, input_index) with the key owning public_key

        Raises:
            MissingKeyError: wallet doesn't hold that key
        """
        key_pair = self._by_pubkey.get(public_key)
        if key_pair is None:
            raise MissingKeyError(input_index, f"no key for public key {public_key.hex()}")
        return sign(key_pair.secret_key, ExecContext(tx, input_index).digest)

    def sign_input(self, tx: Transaction, input_index: int, script_pubkey: Script) -> Transaction:
        """Fills script_sig of one input spending an output locked by script_pubkey

        Raises:
            MissingKeyError: not enough keys for that script
            WalletError: redeem script is neither p2pkh, p2pk nor multisig

        Returns:
            Transaction: copy of tx with the input signed
        """
        signing = self._signing_keys(script_pubkey)
        if signing is None:
            raise MissingKeyError(input_index, f"can't sign {classify_script(script_pubkey)} script")
        required, key_pairs = signing
        if len(key_pairs) < required:
            raise MissingKeyError(input_index, f"{required} signatures needed, wallet holds {len(key_pairs)} keys")

        digest = ExecContext(tx, input_index).digest
        key_pairs = key_pairs[:required]
        signatures = [sign(key_pair.secret_key, digest) for key_pair in key_pairs]
        if classify_script(script_pubkey) == "p2sh":
            redeem = self._redeem_scripts[script_pubkey[2:22]]
            script_sig = _unlocking_script(redeem, signatures, key_pairs) + push_data(redeem)
        else:
            script_sig = _unlocking_script(script_pubkey, signatures, key_pairs)
        return tx.with_script_sig(input_index, script_sig)

    def sign_all(
        self,
        tx: Transaction,
        state: ChainState,
        extra_outputs: dict[OutPoint, TxOutput] | None = None,
    ) -> Transaction:
        """Signs every input

        Args:
            tx (Transaction): transaction to sign
            state (ChainState): UTXO set holding the spent outputs
            extra_outputs (dict[OutPoint, TxOutput] | None, optional): spent outputs not yet confirmed

        Raises:
            MissingKeyError: with the index of the first input the wallet can't sign

        Returns:
            Transaction: signed transaction
        """
        extra_outputs = extra_outputs or {}
        for index, input_ in enumerate(tx.inputs):
            if input_.prevout in extra_outputs:
                script_pubkey = extra_outputs[input_.prevout].script_pubkey
            elif input_.prevout in state.utxos:
                script_pubkey = state.utxos[input_.prevout].output.script_pubkey
            else:
                raise MissingKeyError(index, f"spent output {input_.prevout} is unknown")
            tx = self.sign_input(tx, index, script_pubkey)
        return tx
