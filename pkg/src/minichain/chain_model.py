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

import struct
from dataclasses import dataclass, field, replace
from functools import cached_property

from minichain._version import PROTOCOL_VERSION
from minichain.crypto import Digest32, hash256
from minichain.errors import ValidationError

# Base units per coin
COIN = 100_000_000

# Hard supply ceiling in base units
MAX_MONEY = 21_000_000 * COIN

# Coinbase input marker: (32 zero bytes, 0xFFFFFFFF)
NULL_TXID = bytes(32)
NULL_INDEX = 0xFFFFFFFF

# Canonical header length: version u32, prev 32B, commitment 32B, time u64, bits u32, nonce u64.
# The field widths are normative, they add up to 88 bytes
HEADER_SIZE = 4 + 32 + 32 + 8 + 4 + 8

# Longest script accepted by the deserializer
MAX_SCRIPT_SIZE = 10_000

# Largest input / output / transaction count accepted by the deserializer
MAX_ITEMS = 100_000

# Genesis coinbase message limit
MAX_GENESIS_MESSAGE = 1000

# Message embedded into the default genesis block
GENESIS_MESSAGE_DEFAULT = "The Times 03/Jan/2009 Chancellor on brink of second bailout for banks"

# 2009-01-03T18:15:05Z
GENESIS_TIME_DEFAULT = 1231006505

# Amounts are serialized as u64
MAX_AMOUNT_FIELD = (1 << 64) - 1

# Only sighash type there is (ALL)
SIGHASH_ALL = 1

# Script is plain bytes (opcode-encoded program)
Script = bytes


class DeserializeError(ValidationError):
    """Malformed canonical bytes"""


class TruncatedError(DeserializeError):
    """Data ended in the middle of a field"""


class TrailingBytesError(DeserializeError):
    """Bytes left over after a complete value"""


class CountOverflowError(DeserializeError):
    """Item count or script length exceeds the allowed maximum"""


def bits_to_target(bits: int) -> int:
    """Expands compact target: mantissa * 256^(exponent - 3)

    Args:
        bits (int): 1-byte exponent, 3-byte mantissa

    Returns:
        int: 256-bit target or 0 if bits encode a negative or zero value
    """
    exponent = bits >> 24
    mantissa = bits & 0x007FFFFF
    if bits & 0x00800000 or mantissa == 0:
        return 0
    if exponent <= 3:
        return mantissa >> (8 * (3 - exponent))
    return mantissa << (8 * (exponent - 3))


def target_to_bits(target: int) -> int:
    """Compacts target, losing everything below the 3 most significant bytes

    Args:
        target (int): positive 256-bit target

    Returns:
        int: compact bits
    """
    if target <= 0:
        raise ValidationError(f"Target must be positive, got {target}")
    size = (target.bit_length() + 7) // 8
    if size <= 3:
        mantissa = target << (8 * (3 - size))
    else:
        mantissa = target >> (8 * (size - 3))

    # Keep the sign bit clear
    if mantissa & 0x00800000:
        mantissa >>= 8
        size += 1
    return (size << 24) | mantissa


@dataclass(frozen=True)
class ChainParams:
    initial_subsidy: int
    halving_interval: int
    retarget_interval: int
    target_spacing: int
    max_target: int
    clamp_factor: int
    coinbase_maturity: int
    network_magic: bytes
    max_future_time: int = 7200
    max_money: int = MAX_MONEY

    def __post_init__(self) -> None:
        for name in (
            "initial_subsidy",
            "halving_interval",
            "retarget_interval",
            "target_spacing",
            "max_target",
            "clamp_factor",
            "coinbase_maturity",
            "max_future_time",
            "max_money",
        ):
            if getattr(self, name) <= 0:
                raise ValidationError(f"Chain parameter {name} must be positive")
        if len(self.network_magic) != 4:
            raise ValidationError("network_magic must be 4 bytes")
        if self.max_target >= 1 << 256:
            raise ValidationError("max_target must fit into 256 bits")

        # Geometric sum of all halving epochs
        if self.initial_subsidy * self.halving_interval * 2 > self.max_money:
            raise ValidationError("Subsidy schedule exceeds max_money")

    @property
    def max_bits(self) -> int:
        """
        Returns:
            int: compact encoding of max_target
        """
        return target_to_bits(self.max_target)

    @property
    def expected_timespan(self) -> int:
        """
        Returns:
            int: retarget_interval * target_spacing in seconds
        """
        return self.retarget_interval * self.target_spacing


# Desk-scale parameters used everywhere by default
SIMNET_PARAMS = ChainParams(
    initial_subsidy=50 * COIN,
    halving_interval=150,
    retarget_interval=32,
    target_spacing=1,
    max_target=0xFFFF << 240,
    clamp_factor=4,
    coinbase_maturity=10,
    network_magic=b"MINI",
)

# Bitcoin-like schedule, used for supply reports
MAINNET_LIKE_PARAMS = ChainParams(
    initial_subsidy=50 * COIN,
    halving_interval=210_000,
    retarget_interval=2016,
    target_spacing=600,
    max_target=0xFFFF << 208,
    clamp_factor=4,
    coinbase_maturity=100,
    network_magic=b"MINI",
)

PARAMS_PRESETS = {"simnet": SIMNET_PARAMS, "mainnet-like": MAINNET_LIKE_PARAMS}


def params_by_name(name: str) -> ChainParams:
    """
    Args:
        name (str): "simnet" or "mainnet-like"

    Returns:
        ChainParams: preset parameters
    """
    if name not in PARAMS_PRESETS:
        raise ValidationError(f"Unknown params preset {name!r}. Available: {', '.join(PARAMS_PRESETS)}")
    return PARAMS_PRESETS[name]


@dataclass(frozen=True, order=True)
class OutPoint:
    txid: Digest32
    index: int

    @property
    def is_null(self) -> bool:
        """
        Returns:
            bool: True for the coinbase marker
        """
        return self.txid == NULL_TXID and self.index == NULL_INDEX

    def __str__(self) -> str:
        return f"{self.txid.hex()}:{self.index}"


COINBASE_OUTPOINT = OutPoint(NULL_TXID, NULL_INDEX)


@dataclass(frozen=True)
class TxOutput:
    amount: int
    script_pubkey: Script

    def __post_init__(self) -> None:
        if not 0 <= self.amount <= MAX_AMOUNT_FIELD:
            raise ValidationError(f"Output amount {self.amount} doesn't fit into u64")


@dataclass(frozen=True)
class TxInput:
    prevout: OutPoint
    script_sig: Script = b""


@dataclass(frozen=True)
class Transaction:
    inputs: tuple[TxInput, ...]
    outputs: tuple[TxOutput, ...]
    version: int = PROTOCOL_VERSION
    lock_time: int = 0

    @property
    def is_coinbase(self) -> bool:
        return len(self.inputs) == 1 and self.inputs[0].prevout.is_null

    @cached_property
    def txid(self) -> Digest32:
        return hash256(serialize_tx(self))

    @property
    def total_out(self) -> int:
        return sum(output.amount for output in self.outputs)

    def with_script_sig(self, index: int, script_sig: Script) -> "Transaction":
        """
        Returns:
            Transaction: copy with inputs[index].script_sig replaced
        """
        inputs = list(self.inputs)
        inputs[index] = replace(inputs[index], script_sig=script_sig)
        return replace(self, inputs=tuple(inputs))


@dataclass(frozen=True)
class BlockHeader:
    prev_hash: Digest32
    tx_commitment: Digest32
    time: int
    bits: int
    nonce: int = 0
    version: int = PROTOCOL_VERSION

    @cached_property
    def hash(self) -> Digest32:
        return hash256(serialize_header(self))


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: tuple[Transaction, ...] = field(default_factory=tuple)

    @property
    def hash(self) -> Digest32:
        return self.header.hash


class _Reader:
    """Sequential little-endian reader raising TruncatedError on short data"""

    def __init__(self, data: bytes) -> None:
        self._data = data
        self._position = 0

    @property
    def remaining(self) -> int:
        return len(self._data) - self._position

    def read(self, length: int) -> bytes:
        if length > self.remaining:
            raise TruncatedError(
                f"Need {length} bytes at offset {self._position}, only {self.remaining} left"
            )
        chunk = self._data[self._position : self._position + length]
        self._position += length
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.read(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.read(8))[0]

    def count(self, what: str, limit: int = MAX_ITEMS) -> int:
        value = self.u32()
        if value > limit:
            raise CountOverflowError(f"{what} count {value} exceeds {limit}")
        return value

    def finish(self) -> None:
        if self.remaining:
            raise TrailingBytesError(f"{self.remaining} trailing bytes")


def _write_script(script: Script) -> bytes:
    return struct.pack("<I", len(script)) + script


def serialize_tx(tx: Transaction) -> bytes:
    """Canonical layout: version u32, lock_time u64, n_in u32, inputs, n_out u32, outputs"""
    parts = [struct.pack("<IQI", tx.version, tx.lock_time, len(tx.inputs))]
    for input_ in tx.inputs:
        parts.append(input_.prevout.txid + struct.pack("<I", input_.prevout.index))
        parts.append(_write_script(input_.script_sig))
    parts.append(struct.pack("<I", len(tx.outputs)))
    for output in tx.outputs:
        parts.append(struct.pack("<Q", output.amount))
        parts.append(_write_script(output.script_pubkey))
    return b"".join(parts)


def _read_tx(reader: _Reader) -> Transaction:
    version = reader.u32()
    lock_time = reader.u64()
    inputs = []
    for _ in range(reader.count("Input")):
        prevout = OutPoint(reader.read(32), reader.u32())
        script_sig = reader.read(reader.count("Script length", MAX_SCRIPT_SIZE))
        inputs.append(TxInput(prevout, script_sig))
    outputs = []
    for _ in range(reader.count("Output")):
        amount = reader.u64()
        script_pubkey = reader.read(reader.count("Script length", MAX_SCRIPT_SIZE))
        outputs.append(TxOutput(amount, script_pubkey))
    return Transaction(inputs=tuple(inputs), outputs=tuple(outputs), version=version, lock_time=lock_time)


def deserialize_tx(data: bytes) -> Transaction:
    """
    Raises:
        TruncatedError: data ended too early
        TrailingBytesError: extra bytes after the transaction
        CountOverflowError: count or script length above limits

    Returns:
        Transaction: parsed transaction
    """
    reader = _Reader(data)
    tx = _read_tx(reader)
    reader.finish()
    return tx


def serialize_header(header: BlockHeader) -> bytes:
    return (
        struct.pack("<I", header.version)
        + header.prev_hash
        + header.tx_commitment
        + struct.pack("<QIQ", header.time, header.bits, header.nonce)
    )


def _read_header(reader: _Reader) -> BlockHeader:
    version = reader.u32()
    prev_hash = reader.read(32)
    tx_commitment = reader.read(32)
    time_ = reader.u64()
    bits = reader.u32()
    nonce = reader.u64()
    return BlockHeader(
        prev_hash=prev_hash, tx_commitment=tx_commitment, time=time_, bits=bits, nonce=nonce, version=version
    )


def deserialize_header(data: bytes) -> BlockHeader:
    reader = _Reader(data)
    header = _read_header(reader)
    reader.finish()
    return header


def serialize_block(block: Block) -> bytes:
    """header, n_tx u32, transactions"""
    parts = [serialize_header(block.header), struct.pack("<I", len(block.transactions))]
    parts.extend(serialize_tx(tx) for tx in block.transactions)
    return b"".join(parts)


def deserialize_block(data: bytes) -> Block:
    reader = _Reader(data)
    header = _read_header(reader)
    transactions = tuple(_read_tx(reader) for _ in range(reader.count("Transaction")))
    reader.finish()
    return Block(header=header, transactions=transactions)


def txid(tx: Transaction) -> Digest32:
    return tx.txid


def block_hash(header: BlockHeader) -> Digest32:
    """hash256 of the 88-byte header. Transactions are bound only through tx_commitment"""
    return header.hash


def tx_commitment(transactions: tuple[Transaction, ...] | list[Transaction]) -> Digest32:
    """Flat commitment: hash256 of concatenated txids in block order

    Raises:
        ValidationError: empty list
    """
    if not transactions:
        raise ValidationError("Can't commit to an empty transaction list")
    return hash256(b"".join(tx.txid for tx in transactions))


def sighash(tx: Transaction, input_index: int) -> Digest32:
    """Digest signed by input_index: tx with every script_sig cleared, then index u32 and SIGHASH_ALL u32

    Raises:
        ValidationError: input_index out of range
    """
    if not 0 <= input_index < len(tx.inputs):
        raise ValidationError(f"Input index {input_index} out of range (tx has {len(tx.inputs)} inputs)")
    stripped = replace(tx, inputs=tuple(replace(input_, script_sig=b"") for input_ in tx.inputs))
    return hash256(serialize_tx(stripped) + struct.pack("<II", input_index, SIGHASH_ALL))


def make_coinbase(height: int, script_pubkey: Script, amount: int, extra: bytes = b"") -> Transaction:
    """Builds coinbase transaction. Height in the input script keeps coinbase txids unique

    Args:
        height (int): height of the block this coinbase belongs to
        script_pubkey (Script): output lock script
        amount (int): subsidy + fees
        extra (bytes, optional): extra coinbase data. Defaults to b""

    Returns:
        Transaction: coinbase transaction
    """
    return Transaction(
        inputs=(TxInput(COINBASE_OUTPOINT, struct.pack("<I", height) + extra),),
        outputs=(TxOutput(amount, script_pubkey),),
    )


def solve_header(header: BlockHeader, target: int, start_nonce: int = 0) -> BlockHeader:
    """Searches nonces from start_nonce until block hash <= target

    Returns:
        BlockHeader: header with a valid nonce
    """
    nonce = start_nonce
    while True:
        candidate = replace(header, nonce=nonce)
        if int.from_bytes(candidate.hash, "big") <= target:
            return candidate
        nonce = (nonce + 1) & 0xFFFFFFFFFFFFFFFF


def make_genesis(
    params: ChainParams,
    message: str = GENESIS_MESSAGE_DEFAULT,
    timestamp: int = GENESIS_TIME_DEFAULT,
    script_pubkey: Script = b"",
) -> Block:
    """Builds block #0. Its coinbase input script carries the UTF-8 message

    Args:
        params (ChainParams): chain parameters (initial_subsidy and max_target are used)
        message (str, optional): embedded message. Defaults to GENESIS_MESSAGE_DEFAULT
        timestamp (int, optional): block time. Defaults to GENESIS_TIME_DEFAULT
        script_pubkey (Script, optional): genesis output lock. Defaults to empty (unspendable)

    Raises:
        ValidationError: empty or oversize message

    Returns:
        Block: genesis block satisfying PoW at params.max_target
    """
    message_bytes = message.encode("utf-8")
    if not message_bytes:
        raise ValidationError("Genesis message must not be empty")
    if len(message_bytes) > MAX_GENESIS_MESSAGE:
        raise ValidationError(f"Genesis message is {len(message_bytes)} bytes, limit is {MAX_GENESIS_MESSAGE}")

    coinbase = Transaction(
        inputs=(TxInput(COINBASE_OUTPOINT, message_bytes),),
        outputs=(TxOutput(params.initial_subsidy, script_pubkey),),
    )
    bits = params.max_bits
    header = BlockHeader(
        prev_hash=bytes(32),
        tx_commitment=tx_commitment([coinbase]),
        time=timestamp,
        bits=bits,
    )
    return Block(header=solve_header(header, bits_to_target(bits)), transactions=(coinbase,))


def genesis_message(genesis: Block) -> str:
    """
    Returns:
        str: message embedded into genesis coinbase
    """
    return genesis.transactions[0].inputs[0].script_sig.decode("utf-8", errors="replace")
