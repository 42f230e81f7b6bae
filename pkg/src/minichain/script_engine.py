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

import hashlib
import logging
import struct
from dataclasses import dataclass, field
from enum import Enum, IntEnum

from minichain.chain_model import Script, Transaction, sighash
from minichain.crypto import (
    ADDRESS_VERSION_P2SH,
    Address,
    Digest20,
    Digest32,
    encode_address,
    hash20,
    verify,
)
from minichain.errors import ValidationError

# Total opcodes (pushes included) one eval() may execute
OPCODE_BUDGET = 1000

# Largest redeem script a P2SH output may commit to
MAX_REDEEM_SCRIPT_SIZE = 520

# Largest N for M-of-N
MAX_MULTISIG_KEYS = 16

# Direct push opcodes carry their own length
MAX_DIRECT_PUSH = 0x4B


class Op(IntEnum):
    OP_0 = 0x00
    OP_PUSHDATA1 = 0x4C
    OP_PUSHDATA2 = 0x4D
    OP_1 = 0x51
    OP_16 = 0x60
    OP_VERIFY = 0x69
    OP_RETURN = 0x6A
    OP_DROP = 0x75
    OP_DUP = 0x76
    OP_EQUAL = 0x87
    OP_EQUALVERIFY = 0x88
    OP_SHA256 = 0xA8
    OP_HASH20 = 0xA9
    OP_CHECKSIG = 0xAC
    OP_CHECKSIGVERIFY = 0xAD
    OP_CHECKMULTISIG = 0xAE
    OP_CHECKMULTISIGVERIFY = 0xAF


class FailureReason(Enum):
    NONE = ""
    EMPTY_STACK = "empty-stack"
    FALSE_TOP = "false-top"
    BAD_OPCODE = "bad-opcode"
    PUSH_OVERFLOW = "push-overflow"
    SIG_FAIL = "sig-fail"
    REDEEM_MISMATCH = "redeem-mismatch"
    OP_LIMIT = "op-limit"
    VERIFY_FAIL = "verify-fail"
    RETURN = "return"


@dataclass(frozen=True)
class EvalResult:
    accepted: bool
    failure_reason: FailureReason = FailureReason.NONE

    def __bool__(self) -> bool:
        return self.accepted


@dataclass
class ExecContext:
    tx: Transaction
    input_index: int
    _digest: Digest32 | None = field(default=None, init=False, repr=False)

    def __post_init__(self) -> None:
        if not 0 <= self.input_index < len(self.tx.inputs):
            raise ValidationError(f"Input index {self.input_index} out of range")

    @property
    def digest(self) -> Digest32:
        """
        Returns:
            Digest32: sighash(tx, input_index), computed once
        """
        if self._digest is None:
            self._digest = sighash(self.tx, self.input_index)
        return self._digest


class _ScriptFailure(Exception):
    def __init__(self, reason: FailureReason) -> None:
        super().__init__(reason.value)
        self.reason = reason


def push_data(data: bytes) -> bytes:
    """Encodes the shortest push of data (OP_0 for empty, direct push up to 75 bytes, then OP_PUSHDATA1/2)

    Raises:
        ValidationError: data longer than MAX_REDEEM_SCRIPT_SIZE
    """
    if not data:
        return bytes([Op.OP_0])
    if len(data) <= MAX_DIRECT_PUSH:
        return bytes([len(data)]) + data
    if len(data) <= 0xFF:
        return bytes([Op.OP_PUSHDATA1, len(data)]) + data
    if len(data) > MAX_REDEEM_SCRIPT_SIZE:
        raise ValidationError(f"Can't push {len(data)} bytes, limit is {MAX_REDEEM_SCRIPT_SIZE}")
    return bytes([Op.OP_PUSHDATA2]) + struct.pack("<H", len(data)) + data


def push_int(value: int) -> bytes:
    """OP_0 / OP_1..OP_16 for a small integer"""
    if value == 0:
        return bytes([Op.OP_0])
    if not 1 <= value <= 16:
        raise ValidationError(f"Small integer out of range: {value}")
    return bytes([Op.OP_1 + value - 1])


def parse_script(script: Script) -> list[tuple[int, bytes | None]]:
    """Splits script into (opcode, pushed data) pairs

    Raises:
        _ScriptFailure: push runs past the end of script

    Returns:
        list[tuple[int, bytes | None]]: data is None for non-push opcodes
    """
    ops = []
    position = 0
    while position < len(script):
        opcode = script[position]
        position += 1
        if 0x01 <= opcode <= MAX_DIRECT_PUSH:
            if position + opcode > len(script):
                raise _ScriptFailure(FailureReason.PUSH_OVERFLOW)
            ops.append((opcode, script[position : position + opcode]))
            position += opcode
        elif opcode in (Op.OP_PUSHDATA1, Op.OP_PUSHDATA2):
            size_length = 1 if opcode == Op.OP_PUSHDATA1 else 2
            if position + size_length > len(script):
                raise _ScriptFailure(FailureReason.PUSH_OVERFLOW)
            length = int.from_bytes(script[position : position + size_length], "little")
            position += size_length
            if position + length > len(script):
                raise _ScriptFailure(FailureReason.PUSH_OVERFLOW)
            ops.append((opcode, script[position : position + length]))
            position += length
        elif opcode == Op.OP_0:
            ops.append((opcode, b""))
        elif Op.OP_1 <= opcode <= Op.OP_16:
            ops.append((opcode, bytes([opcode - Op.OP_1 + 1])))
        else:
            ops.append((opcode, None))
    return ops


def is_push_only(script: Script) -> bool:
    try:
        return all(data is not None for _, data in parse_script(script))
    except _ScriptFailure:
        return False


def is_true(element: bytes) -> bool:
    """Empty and all-zero byte strings are false"""
    return any(element)


def _small_int(element: bytes) -> int:
    if len(element) > 1:
        raise _ScriptFailure(FailureReason.BAD_OPCODE)
    return element[0] if element else 0


class _Interpreter:
    def __init__(self, ctx: ExecContext) -> None:
        self._ctx = ctx
        self.ops_executed = 0
        self.sig_failed = False

    def run(self, script: Script, stack: list[bytes]) -> None:
        for opcode, data in parse_script(script):
            self.ops_executed += 1
            if self.ops_executed > OPCODE_BUDGET:
                raise _ScriptFailure(FailureReason.OP_LIMIT)
            if data is not None:
                stack.append(data)
            else:
                self._execute(opcode, stack)

    @staticmethod
    def _pop(stack: list[bytes]) -> bytes:
        if not stack:
            raise _ScriptFailure(FailureReason.EMPTY_STACK)
        return stack.pop()

    def _execute(self, opcode: int, stack: list[bytes]) -> None:
        if opcode == Op.OP_DUP:
            if not stack:
                raise _ScriptFailure(FailureReason.EMPTY_STACK)
            stack.append(stack[-1])
        elif opcode == Op.OP_DROP:
            self._pop(stack)
        elif opcode == Op.OP_HASH20:
            stack.append(hash20(self._pop(stack)))
        elif opcode == Op.OP_SHA256:
            stack.append(hashlib.sha256(self._pop(stack)).digest())
        elif opcode in (Op.OP_EQUAL, Op.OP_EQUALVERIFY):
            equal = self._pop(stack) == self._pop(stack)
            if opcode == Op.OP_EQUALVERIFY:
                if not equal:
                    raise _ScriptFailure(FailureReason.VERIFY_FAIL)
            else:
                stack.append(b"\x01" if equal else b"")
        elif opcode == Op.OP_VERIFY:
            if not is_true(self._pop(stack)):
                raise _ScriptFailure(FailureReason.VERIFY_FAIL)
        elif opcode == Op.OP_RETURN:
            raise _ScriptFailure(FailureReason.RETURN)
        elif opcode in (Op.OP_CHECKSIG, Op.OP_CHECKSIGVERIFY):
            public_key = self._pop(stack)
            signature = self._pop(stack)
            valid = verify(public_key, self._ctx.digest, signature)
            if not valid:
                self.sig_failed = True
            if opcode == Op.OP_CHECKSIGVERIFY:
                if not valid:
                    raise _ScriptFailure(FailureReason.SIG_FAIL)
            else:
                stack.append(b"\x01" if valid else b"")
        elif opcode in (Op.OP_CHECKMULTISIG, Op.OP_CHECKMULTISIGVERIFY):
            valid = self._check_multisig(stack)
            if not valid:
                self.sig_failed = True
            if opcode == Op.OP_CHECKMULTISIGVERIFY:
                if not valid:
                    raise _ScriptFailure(FailureReason.SIG_FAIL)
            else:
                stack.append(b"\x01" if valid else b"")
        else:
            raise _ScriptFailure(FailureReason.BAD_OPCODE)

    def _check_multisig(self, stack: list[bytes]) -> bool:
        """Pops N, N keys, M, M signatures. Signatures must match keys in key order, each key used once"""
        keys_count = _small_int(self._pop(stack))
        if not 0 <= keys_count <= MAX_MULTISIG_KEYS:
            raise _ScriptFailure(FailureReason.BAD_OPCODE)
        keys = [self._pop(stack) for _ in range(keys_count)][::-1]
        sigs_count = _small_int(self._pop(stack))
        if not 0 <= sigs_count <= keys_count:
            raise _ScriptFailure(FailureReason.BAD_OPCODE)
        signatures = [self._pop(stack) for _ in range(sigs_count)][::-1]

        key_position = 0
        for signature in signatures:
            while key_position < len(keys):
                key = keys[key_position]
                key_position += 1
                if verify(key, self._ctx.digest, signature):
                    break
            else:
                return False
        return True


def is_p2sh(script_pubkey: Script) -> bool:
    """OP_HASH20 <20 bytes> OP_EQUAL"""
    return (
        len(script_pubkey) == 23
        and script_pubkey[0] == Op.OP_HASH20
        and script_pubkey[1] == 20
        and script_pubkey[22] == Op.OP_EQUAL
    )


def eval_script(script_sig: Script, script_pubkey: Script, ctx: ExecContext) -> EvalResult:
    """Runs script_sig then script_pubkey on a shared stack (plus redeem script for P2SH)

    Args:
        script_sig (Script): unlocking script
        script_pubkey (Script): locking script
        ctx (ExecContext): spending transaction and input index

    Returns:
        EvalResult: accepted or the first failure reason. Never raises for malformed scripts
    """
    interpreter = _Interpreter(ctx)
    stack: list[bytes] = []
    p2sh = is_p2sh(script_pubkey)
    try:
        if p2sh and not is_push_only(script_sig):
            raise _ScriptFailure(FailureReason.BAD_OPCODE)

        interpreter.run(script_sig, stack)
        stack_after_sig = list(stack)
        interpreter.run(script_pubkey, stack)

        if p2sh:
            if not stack or not is_true(stack[-1]):
                raise _ScriptFailure(FailureReason.REDEEM_MISMATCH)
            if not stack_after_sig:
                raise _ScriptFailure(FailureReason.EMPTY_STACK)
            redeem_script = stack_after_sig.pop()
            stack = stack_after_sig
            interpreter.run(redeem_script, stack)

        if not stack:
            raise _ScriptFailure(FailureReason.EMPTY_STACK)
        if not is_true(stack[-1]):
            raise _ScriptFailure(FailureReason.SIG_FAIL if interpreter.sig_failed else FailureReason.FALSE_TOP)

    except _ScriptFailure as e:
        logging.debug(f"Script rejected for input {ctx.input_index}: {e.reason.value}")
        return EvalResult(False, e.reason)

    return EvalResult(True)


def make_p2pkh(pubkey_hash: Digest20) -> Script:
    """OP_DUP OP_HASH20 <h> OP_EQUALVERIFY OP_CHECKSIG"""
    if len(pubkey_hash) != 20:
        raise ValidationError("Public key hash must be 20 bytes")
    return bytes([Op.OP_DUP, Op.OP_HASH20]) + push_data(pubkey_hash) + bytes([Op.OP_EQUALVERIFY, Op.OP_CHECKSIG])


def make_p2pk(pubkey: bytes) -> Script:
    """<pubkey> OP_CHECKSIG"""
    return push_data(pubkey) + bytes([Op.OP_CHECKSIG])


def make_multisig(m: int, pubkeys: list[bytes]) -> Script:
    """OP_m <pk1> ... <pkN> OP_N OP_CHECKMULTISIG

    Raises:
        ValidationError: unless 1 <= m <= N <= 16
    """
    if not 1 <= m <= len(pubkeys) <= MAX_MULTISIG_KEYS:
        raise ValidationError(f"Invalid multisig bounds: {m}-of-{len(pubkeys)}")
    return (
        push_int(m)
        + b"".join(push_data(pubkey) for pubkey in pubkeys)
        + push_int(len(pubkeys))
        + bytes([Op.OP_CHECKMULTISIG])
    )


def make_p2sh(script_hash: Digest20) -> Script:
    """OP_HASH20 <script_hash> OP_EQUAL"""
    if len(script_hash) != 20:
        raise ValidationError("Script hash must be 20 bytes")
    return bytes([Op.OP_HASH20]) + push_data(script_hash) + bytes([Op.OP_EQUAL])


def check_redeem_script(redeem: Script) -> None:
    if len(redeem) > MAX_REDEEM_SCRIPT_SIZE:
        raise ValidationError(f"Redeem script is {len(redeem)} bytes, limit is {MAX_REDEEM_SCRIPT_SIZE}")


def p2sh_address(redeem: Script) -> Address:
    """
    Raises:
        ValidationError: redeem script over MAX_REDEEM_SCRIPT_SIZE

    Returns:
        Address: version 0x05 address of hash20(redeem)
    """
    check_redeem_script(redeem)
    return encode_address(ADDRESS_VERSION_P2SH, hash20(redeem))


def multisig_params(script: Script) -> tuple[int, list[bytes]] | None:
    """
    Returns:
        tuple[int, list[bytes]] | None: (m, pubkeys) if script is a standard multisig template
    """
    try:
        ops = parse_script(script)
    except _ScriptFailure:
        return None
    if len(ops) < 4 or ops[-1][0] != Op.OP_CHECKMULTISIG:
        return None
    m_op, n_op = ops[0][0], ops[-2][0]
    if not (Op.OP_1 <= m_op <= Op.OP_16 and Op.OP_1 <= n_op <= Op.OP_16):
        return None
    pubkeys = [data for _, data in ops[1:-2]]
    if any(data is None for data in pubkeys) or len(pubkeys) != n_op - Op.OP_1 + 1:
        return None
    m = m_op - Op.OP_1 + 1
    if m > len(pubkeys):
        return None
    return m, pubkeys


def classify_script(script_pubkey: Script) -> str:
    """
    Returns:
        str: "p2pkh", "p2pk", "p2sh", "multisig" or "nonstandard"
    """
    if (
        len(script_pubkey) == 25
        and script_pubkey[:3] == bytes([Op.OP_DUP, Op.OP_HASH20, 20])
        and script_pubkey[23:] == bytes([Op.OP_EQUALVERIFY, Op.OP_CHECKSIG])
    ):
        return "p2pkh"
    if is_p2sh(script_pubkey):
        return "p2sh"
    if len(script_pubkey) in (35, 67) and script_pubkey[-1] == Op.OP_CHECKSIG and script_pubkey[0] == len(script_pubkey) - 2:
        return "p2pk"
    if multisig_params(script_pubkey) is not None:
        return "multisig"
    return "nonstandard"


def is_final(tx: Transaction, block_time: int) -> bool:
    """lock_time 0 is always final, otherwise final from block_time >= lock_time (inclusive)"""
    return tx.lock_time == 0 or block_time >= tx.lock_time
