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
from dataclasses import dataclass

from minichain.chain_model import Block, OutPoint, Transaction
from minichain.consensus import ChainState, RejectReason, TxValidationError, check_tx
from minichain.crypto import Digest32

# Arrival sequence numbers kept for transactions that left the pool, reorgs put them back in order
SEEN_LIMIT = 100_000


@dataclass(frozen=True)
class MempoolEntry:
    tx: Transaction
    fee: int


class Mempool:
    def __init__(self) -> None:
        """Valid, final, non-conflicting unconfirmed transactions in arrival order (first seen wins)"""
        self._entries: OrderedDict[Digest32, MempoolEntry] = OrderedDict()
        self._spent: dict[OutPoint, Digest32] = {}
        self._seen: OrderedDict[Digest32, int] = OrderedDict()
        self._sequence = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, txid: Digest32) -> bool:
        return txid in self._entries

    def transactions(self) -> list[Transaction]:
        """
        Returns:
            list[Transaction]: oldest first
        """
        return [entry.tx for entry in self._entries.values()]

    def entries(self) -> list[MempoolEntry]:
        return list(self._entries.values())

    def conflicts_with(self, tx: Transaction) -> Digest32 | None:
        """
        Returns:
            Digest32 | None: txid of a pooled transaction spending one of tx's inputs
        """
        for input_ in tx.inputs:
            if input_.prevout in self._spent:
                return self._spent[input_.prevout]
        return None

    def accept(self, tx: Transaction, state: ChainState, now: int) -> int:
        """Validates tx against the active chain and the pool, then adds it

        Args:
            tx (Transaction): unconfirmed transaction
            state (ChainState): active chain
            now (int): current simulated time (lock_time must have passed)

        Raises:
            TxValidationError: invalid, duplicate or conflicting

        Returns:
            int: fee
        """
        if tx.txid in self._entries:
            raise TxValidationError(RejectReason.DUPLICATE, f"tx {tx.txid.hex()} already in mempool")
        if tx.is_coinbase:
            raise TxValidationError(RejectReason.BAD_COINBASE, "coinbase can't be relayed")
        conflict = self.conflicts_with(tx)
        if conflict is not None:
            raise TxValidationError(RejectReason.DOUBLE_SPEND, f"conflicts with mempool tx {conflict.hex()}")

        fee = check_tx(state, tx, state.height + 1, now)
        if tx.txid not in self._seen:
            self._seen[tx.txid] = self._sequence
            self._sequence += 1
            if len(self._seen) > SEEN_LIMIT:
                self._seen.popitem(last=False)
        self._add(MempoolEntry(tx, fee))
        return fee

    def _add(self, entry: MempoolEntry) -> None:
        self._entries[entry.tx.txid] = entry
        for input_ in entry.tx.inputs:
            self._spent[input_.prevout] = entry.tx.txid

    def remove(self, txid: Digest32) -> None:
        entry = self._entries.pop(txid, None)
        if entry is None:
            return
        for input_ in entry.tx.inputs:
            if self._spent.get(input_.prevout) == txid:
                del self._spent[input_.prevout]

    def select(self, max_count: int | None = None) -> list[MempoolEntry]:
        """Oldest-first selection for a block template"""
        entries = list(self._entries.values())
        return entries if max_count is None else entries[:max_count]

    def reconcile(self, state: ChainState, now: int, disconnected: list[Block], connected: list[Block]) -> None:
        """Brings pool in line with the active chain after blocks were connected or disconnected

        Transactions from disconnected blocks come back (if still valid), confirmed ones leave,
        and transactions that lost their inputs to a confirmed conflict are evicted

        Args:
            state (ChainState): active chain after the change
            now (int): current simulated time
            disconnected (list[Block]): blocks removed from the active chain
            connected (list[Block]): blocks added to the active chain
        """
        confirmed = {tx.txid for block in connected for tx in block.transactions}

        # Chain only grew: scripts stay valid, drop confirmed and conflicted transactions
        if not disconnected:
            for entry in self.entries():
                txid = entry.tx.txid
                if txid in confirmed or any(input_.prevout not in state.utxos for input_ in entry.tx.inputs):
                    logging.debug(f"Removing tx {txid.hex()} from mempool")
                    self.remove(txid)
            return

        candidates = sorted(self._arrival_keys(disconnected).items(), key=lambda item: item[1])

        self._entries.clear()
        self._spent.clear()
        for tx, _ in candidates:
            if tx.txid in confirmed or tx.txid in self._entries:
                continue
            try:
                self.accept(tx, state, now)
            except TxValidationError as e:
                logging.debug(f"Evicting tx {tx.txid.hex()} from mempool: {e}")

    def _arrival_keys(self, disconnected: list[Block]) -> dict[Transaction, tuple[int, int]]:
        """Sort keys in first-seen order for pooled transactions and those of disconnected blocks.
        A block transaction this pool never saw sorts right after the one before it in the chain
        """
        keys: dict[Transaction, tuple[int, int]] = {}
        anchor = -1
        for block in reversed(disconnected):
            for tx in block.transactions:
                if tx.is_coinbase:
                    continue
                sequence = self._seen.get(tx.txid)
                if sequence is None:
                    keys[tx] = (anchor, len(keys) + 1)
                else:
                    anchor = sequence
                    keys[tx] = (sequence, 0)
        for entry in self._entries.values():
            keys.setdefault(entry.tx, (self._seen.get(entry.tx.txid, self._sequence), 0))
        return keys
