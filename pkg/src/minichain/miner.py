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

from minichain.chain_model import (
    Block,
    BlockHeader,
    OutPoint,
    Script,
    Transaction,
    bits_to_target,
    make_coinbase,
    solve_header,
    tx_commitment,
)
from minichain.consensus import ChainState, TxValidationError, UtxoEntry, UtxoView, block_subsidy, check_tx, next_bits


def select_transactions(state: ChainState, candidates: list[Transaction], block_time: int) -> tuple[list[Transaction], int]:
    """Keeps candidates (oldest first) that are valid one after another in the next block

    Returns:
        tuple[list[Transaction], int]: (included transactions, total fee)
    """
    height = state.height + 1
    view = UtxoView(state.utxos)
    included = []
    fees = 0
    for tx in candidates:
        try:
            fee = check_tx(state, tx, height, block_time, view)
        except TxValidationError as e:
            logging.debug(f"Leaving tx {tx.txid.hex()} out of block template: {e}")
            continue
        for input_ in tx.inputs:
            view.spent.add(input_.prevout)
            view.created.pop(input_.prevout, None)
        for index, output in enumerate(tx.outputs):
            view.created[OutPoint(tx.txid, index)] = UtxoEntry(output, height, False)
        included.append(tx)
        fees += fee
    return included, fees


def build_block(
    state: ChainState,
    candidates: list[Transaction],
    script_pubkey: Script,
    block_time: int,
    extra: bytes = b"",
    start_nonce: int = 0,
) -> Block:
    """Builds and solves the next block: coinbase paying subsidy + fees, then candidates that validate

    Args:
        state (ChainState): active chain the block extends
        candidates (list[Transaction]): transactions to include, oldest first
        script_pubkey (Script): coinbase output lock
        block_time (int): header time (raised to the tip's time if below it)
        extra (bytes, optional): extra coinbase data. Defaults to b""
        start_nonce (int, optional): first nonce tried. Defaults to 0

    Returns:
        Block: block with a nonce satisfying the required target
    """
    height = state.height + 1
    block_time = max(block_time, state.tip.time)
    transactions, fees = select_transactions(state, candidates, block_time)
    coinbase = make_coinbase(height, script_pubkey, block_subsidy(height, state.params) + fees, extra)
    transactions.insert(0, coinbase)

    bits = next_bits(state)
    header = BlockHeader(
        prev_hash=state.tip_hash,
        tx_commitment=tx_commitment(transactions),
        time=block_time,
        bits=bits,
    )
    header = solve_header(header, bits_to_target(bits), start_nonce)
    logging.debug(f"Built block {header.hash.hex()} at height {height} with {len(transactions)} txs")
    return Block(header=header, transactions=tuple(transactions))
