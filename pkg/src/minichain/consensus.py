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
import struct
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from minichain.chain_model import (
    Block,
    BlockHeader,
    ChainParams,
    OutPoint,
    Transaction,
    TxOutput,
    bits_to_target,
    target_to_bits,
    tx_commitment,
)
from minichain.crypto import Digest32, hash256
from minichain.errors import ValidationError
from minichain.script_engine import ExecContext, eval_script, is_final

# Halving epochs after which every schedule has reached zero
MAX_HALVINGS = 64


class RejectReason(Enum):
    BAD_POW = "bad-pow"
    BAD_BITS = "bad-bits"
    BAD_LINK = "bad-link"
    BAD_COMMITMENT = "bad-commitment"
    BAD_TIME = "bad-time"
    BAD_COINBASE = "bad-coinbase"
    BAD_TX = "bad-tx"
    DOUBLE_SPEND = "double-spend"
    MISSING_UTXO = "missing-utxo"
    IMMATURE_COINBASE = "immature-coinbase"
    SCRIPT_REJECT = "script-reject"
    NON_FINAL = "non-final"
    BAD_SUBSIDY = "bad-subsidy"
    VALUE_OVERFLOW = "value-overflow"
    DUPLICATE = "duplicate"
    ORPHAN = "orphan"


class ConsensusError(ValidationError):
    def __init__(self, reason: RejectReason, message: str = "") -> None:
        super().__init__(f"{reason.value}: {message}" if message else reason.value)
        self.reason = reason


class TxValidationError(ConsensusError):
    """Transaction breaks a consensus rule"""


class BlockValidationError(ConsensusError):
    """Block breaks a consensus rule"""


def block_subsidy(height: int, params: ChainParams) -> int:
    """
    Returns:
        int: initial_subsidy halved (floor) once per halving_interval blocks
    """
    halvings = height // params.halving_interval
    if halvings >= MAX_HALVINGS:
        return 0
    return params.initial_subsidy >> halvings


def cumulative_supply(height: int, params: ChainParams) -> int:
    """Sum of block_subsidy() over heights 0..height (inclusive)"""
    total = 0
    epoch = 0
    while epoch < MAX_HALVINGS:
        epoch_start = epoch * params.halving_interval
        if epoch_start > height:
            break
        subsidy = params.initial_subsidy >> epoch
        if subsidy == 0:
            break
        blocks = min(height - epoch_start + 1, params.halving_interval)
        total += subsidy * blocks
        epoch += 1
    return total


def supply_cap(params: ChainParams) -> int:
    """
    Returns:
        int: limit of cumulative_supply() over all heights
    """
    return sum((params.initial_subsidy >> epoch) * params.halving_interval for epoch in range(MAX_HALVINGS))


def supply_schedule(params: ChainParams) -> list[dict]:
    """One row per halving epoch with non-zero subsidy

    Returns:
        list[dict]: [{"epoch", "first_height", "last_height", "subsidy", "epoch_total", "running_total"}, ...]
    """
    rows = []
    running_total = 0
    for epoch in range(MAX_HALVINGS):
        subsidy = params.initial_subsidy >> epoch
        if subsidy == 0:
            break
        epoch_total = subsidy * params.halving_interval
        running_total += epoch_total
        rows.append(
            {
                "epoch": epoch,
                "first_height": epoch * params.halving_interval,
                "last_height": (epoch + 1) * params.halving_interval - 1,
                "subsidy": subsidy,
                "epoch_total": epoch_total,
                "running_total": running_total,
            }
        )
    return rows


def check_pow(header: BlockHeader, params: ChainParams) -> bool:
    """hash (big-endian integer) <= target of header.bits, and that target <= params.max_target"""
    target = bits_to_target(header.bits)
    if target == 0 or target > params.max_target:
        return False
    return int.from_bytes(header.hash, "big") <= target


def retarget(old_target: int, actual_timespan: int, params: ChainParams) -> int:
    """old * clamp(actual / expected, 1 / clamp_factor, clamp_factor), clipped to max_target

    Raises:
        ValidationError: non-positive timespan
    """
    if actual_timespan <= 0:
        raise ValidationError(f"Timespan must be positive, got {actual_timespan}")
    ratio = Fraction(actual_timespan, params.expected_timespan)
    ratio = max(Fraction(1, params.clamp_factor), min(Fraction(params.clamp_factor), ratio))
    new_target = old_target * ratio.numerator // ratio.denominator
    return max(1, min(new_target, params.max_target))


def chain_work(target: int) -> int:
    """
    Raises:
        ValidationError: target < 1

    Returns:
        int: floor(2^256 / (target + 1))
    """
    if target < 1:
        raise ValidationError("Target must be at least 1")
    return (1 << 256) // (target + 1)


def header_work(header: BlockHeader) -> int:
    return chain_work(max(bits_to_target(header.bits), 1))


@dataclass(frozen=True)
class UtxoEntry:
    output: TxOutput
    height: int
    is_coinbase: bool


@dataclass
class UndoRecord:
    block_hash: Digest32
    spent: list[tuple[OutPoint, UtxoEntry]] = field(default_factory=list)
    created: list[OutPoint] = field(default_factory=list)


class UtxoView:
    """Overlay over the UTXO set for outputs created and spent inside one block"""

    def __init__(self, utxos: dict[OutPoint, UtxoEntry]) -> None:
        self._utxos = utxos
        self.created: dict[OutPoint, UtxoEntry] = {}
        self.spent: set[OutPoint] = set()

    def get(self, outpoint: OutPoint) -> UtxoEntry | None:
        if outpoint in self.spent:
            return None
        return self.created.get(outpoint) or self._utxos.get(outpoint)


class ChainState:
    def __init__(self, params: ChainParams, genesis: Block) -> None:
        """Validated ledger: active chain headers, cumulative work, UTXO set and undo records

        Args:
            params (ChainParams): chain parameters
            genesis (Block): block #0 (trusted, connected without validation)
        """
        self._params = params
        self._headers: list[BlockHeader] = [genesis.header]
        self._undo: list[UndoRecord] = []
        self._cumulative_work = header_work(genesis.header)
        self.utxos: dict[OutPoint, UtxoEntry] = {}
        for tx in genesis.transactions:
            for index, output in enumerate(tx.outputs):
                self.utxos[OutPoint(tx.txid, index)] = UtxoEntry(output, 0, tx.is_coinbase)

    @property
    def params(self) -> ChainParams:
        return self._params

    @property
    def height(self) -> int:
        return len(self._headers) - 1

    @property
    def tip(self) -> BlockHeader:
        return self._headers[-1]

    @property
    def tip_hash(self) -> Digest32:
        return self._headers[-1].hash

    @property
    def genesis_hash(self) -> Digest32:
        return self._headers[0].hash

    @property
    def cumulative_work(self) -> int:
        return self._cumulative_work

    def header_at(self, height: int) -> BlockHeader:
        return self._headers[height]

    def hash_at(self, height: int) -> Digest32:
        return self._headers[height].hash

    def contains(self, block_hash: Digest32, height: int) -> bool:
        """
        Returns:
            bool: True if block_hash is the active block at height
        """
        return 0 <= height <= self.height and self._headers[height].hash == block_hash

    def snapshot(self) -> bytes:
        """Canonical bytes of tip, work and UTXO set (sorted by outpoint)"""
        parts = [self.tip_hash, self._cumulative_work.to_bytes(33, "big")]
        for outpoint in sorted(self.utxos):
            entry = self.utxos[outpoint]
            parts.append(outpoint.txid + struct.pack("<IQQ?", outpoint.index, entry.output.amount, entry.height, entry.is_coinbase))
            parts.append(struct.pack("<I", len(entry.output.script_pubkey)) + entry.output.script_pubkey)
        return b"".join(parts)

    def utxo_digest(self) -> Digest32:
        return hash256(self.snapshot())

    def utxo_total(self) -> int:
        return sum(entry.output.amount for entry in self.utxos.values())

    def _push(self, header: BlockHeader, undo: UndoRecord) -> None:
        self._headers.append(header)
        self._undo.append(undo)
        self._cumulative_work += header_work(header)

    def _pop(self) -> tuple[BlockHeader, UndoRecord]:
        header = self._headers.pop()
        undo = self._undo.pop()
        self._cumulative_work -= header_work(header)
        return header, undo


def next_bits(state: ChainState) -> int:
    """Compact target required for the block after state's tip"""
    params = state.params
    new_height = state.height + 1
    if new_height % params.retarget_interval != 0:
        return state.tip.bits

    # Window runs from the block before it to the parent
    first_height = max(new_height - params.retarget_interval - 1, 0)
    actual_timespan = state.tip.time - state.header_at(first_height).time
    new_target = retarget(bits_to_target(state.tip.bits), max(actual_timespan, 1), params)
    logging.debug(f"Retarget at height {new_height}: timespan {actual_timespan}s, new target {new_target:064x}")
    return target_to_bits(new_target)


def check_tx(
    state: ChainState,
    tx: Transaction,
    height: int,
    block_time: int,
    view: UtxoView | None = None,
) -> int:
    """Validates non-coinbase transaction against the UTXO set

    Args:
        state (ChainState): ledger to spend from
        tx (Transaction): transaction to check
        height (int): height of the block that would include tx
        block_time (int): time of that block (for lock_time)
        view (UtxoView | None, optional): in-block overlay. Defaults to a fresh one

    Raises:
        TxValidationError: with the failed rule

    Returns:
        int: fee (inputs - outputs)
    """
    params = state.params
    if view is None:
        view = UtxoView(state.utxos)
    if not tx.inputs or not tx.outputs:
        raise TxValidationError(RejectReason.BAD_TX, "transaction without inputs or outputs")
    if any(input_.prevout.is_null for input_ in tx.inputs):
        raise TxValidationError(RejectReason.BAD_COINBASE, "coinbase marker in a regular transaction")
    if any(output.amount > params.max_money for output in tx.outputs) or tx.total_out > params.max_money:
        raise TxValidationError(RejectReason.VALUE_OVERFLOW, "output value above max_money")
    if not is_final(tx, block_time):
        raise TxValidationError(RejectReason.NON_FINAL, f"lock_time {tx.lock_time} > block time {block_time}")
    if len({input_.prevout for input_ in tx.inputs}) != len(tx.inputs):
        raise TxValidationError(RejectReason.DOUBLE_SPEND, "transaction spends one output twice")

    total_in = 0
    for index, input_ in enumerate(tx.inputs):
        prevout = input_.prevout
        if prevout in view.spent:
            raise TxValidationError(RejectReason.DOUBLE_SPEND, f"{prevout} already spent in this block")

        entry = view.get(prevout)
        if entry is None:
            raise TxValidationError(RejectReason.MISSING_UTXO, f"{prevout} is not an unspent output")
        if entry.is_coinbase and height < entry.height + params.coinbase_maturity:
            raise TxValidationError(
                RejectReason.IMMATURE_COINBASE, f"{prevout} matures at height {entry.height + params.coinbase_maturity}"
            )

        result = eval_script(input_.script_sig, entry.output.script_pubkey, ExecContext(tx, index))
        if not result.accepted:
            raise TxValidationError(RejectReason.SCRIPT_REJECT, f"input {index}: {result.failure_reason.value}")
        total_in += entry.output.amount

    if total_in > params.max_money:
        raise TxValidationError(RejectReason.VALUE_OVERFLOW, "input value above max_money")
    if tx.total_out > total_in:
        raise TxValidationError(RejectReason.VALUE_OVERFLOW, f"outputs {tx.total_out} exceed inputs {total_in}")
    return total_in - tx.total_out


def _check_header(state: ChainState, block: Block, now: int) -> None:
    params = state.params
    header = block.header
    if not check_pow(header, params):
        raise BlockValidationError(RejectReason.BAD_POW, "hash above target")
    if header.prev_hash != state.tip_hash:
        raise BlockValidationError(RejectReason.BAD_LINK, "prev_hash doesn't match the tip")
    required_bits = next_bits(state)
    if header.bits != required_bits:
        raise BlockValidationError(RejectReason.BAD_BITS, f"bits {header.bits:08x}, required {required_bits:08x}")
    if not block.transactions or header.tx_commitment != tx_commitment(block.transactions):
        raise BlockValidationError(RejectReason.BAD_COMMITMENT, "transaction commitment mismatch")
    if header.time < state.tip.time or header.time > now + params.max_future_time:
        raise BlockValidationError(RejectReason.BAD_TIME, f"time {header.time} out of range")


def validate_and_connect(state: ChainState, block: Block, now: int) -> UndoRecord:
    """Validates block extending the tip and applies it. State is untouched on rejection

    Args:
        state (ChainState): ledger (mutated on success)
        block (Block): block whose parent is the tip
        now (int): current simulated time (for the future-time limit)

    Raises:
        BlockValidationError: with the failed rule

    Returns:
        UndoRecord: record stored for disconnect_tip()
    """
    params = state.params
    _check_header(state, block, now)
    height = state.height + 1

    coinbase = block.transactions[0]
    if not coinbase.is_coinbase or any(tx.is_coinbase for tx in block.transactions[1:]):
        raise BlockValidationError(RejectReason.BAD_COINBASE, "block needs exactly one coinbase, first")
    if coinbase.inputs[0].script_sig[:4] != struct.pack("<I", height):
        raise BlockValidationError(RejectReason.BAD_COINBASE, "coinbase doesn't carry block height")
    if len({tx.txid for tx in block.transactions}) != len(block.transactions):
        raise BlockValidationError(RejectReason.BAD_TX, "duplicate transaction in block")
    if any(output.amount > params.max_money for output in coinbase.outputs) or coinbase.total_out > params.max_money:
        raise BlockValidationError(RejectReason.VALUE_OVERFLOW, "coinbase value above max_money")

    view = UtxoView(state.utxos)
    fees = 0
    for tx in block.transactions[1:]:
        try:
            fees += check_tx(state, tx, height, block.header.time, view)
        except TxValidationError as e:
            raise BlockValidationError(e.reason, f"tx {tx.txid.hex()}: {e}") from e
        for input_ in tx.inputs:
            view.spent.add(input_.prevout)
            view.created.pop(input_.prevout, None)
        for index, output in enumerate(tx.outputs):
            view.created[OutPoint(tx.txid, index)] = UtxoEntry(output, height, False)

    allowed = block_subsidy(height, params) + fees
    if coinbase.total_out > allowed:
        raise BlockValidationError(RejectReason.BAD_SUBSIDY, f"coinbase pays {coinbase.total_out}, allowed {allowed}")

    # Everything checked, apply
    undo = UndoRecord(block_hash=block.hash)
    created_here: set[OutPoint] = set()
    for tx in block.transactions:
        if not tx.is_coinbase:
            for input_ in tx.inputs:
                entry = state.utxos.pop(input_.prevout)
                if input_.prevout in created_here:
                    # Created and spent inside this block
                    created_here.discard(input_.prevout)
                    undo.created.remove(input_.prevout)
                else:
                    undo.spent.append((input_.prevout, entry))
        for index, output in enumerate(tx.outputs):
            outpoint = OutPoint(tx.txid, index)
            state.utxos[outpoint] = UtxoEntry(output, height, tx.is_coinbase)
            undo.created.append(outpoint)
            created_here.add(outpoint)
    state._push(block.header, undo)
    logging.debug(f"Connected block {block.hash.hex()} at height {height} ({len(block.transactions)} txs)")
    return undo


def disconnect_tip(state: ChainState) -> BlockHeader:
    """Exact inverse of validate_and_connect() for the tip block

    Raises:
        ValidationError: at genesis or without an undo record

    Returns:
        BlockHeader: disconnected header
    """
    if state.height == 0:
        raise ValidationError("Can't disconnect genesis block")
    if not state._undo or state._undo[-1].block_hash != state.tip_hash:
        raise ValidationError(f"No undo record for block {state.tip_hash.hex()}")

    header, undo = state._pop()
    for outpoint in reversed(undo.created):
        state.utxos.pop(outpoint, None)
    for outpoint, entry in reversed(undo.spent):
        state.utxos[outpoint] = entry
    logging.debug(f"Disconnected block {header.hash.hex()}")
    return header
