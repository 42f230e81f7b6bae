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
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from enum import Enum

from minichain.chain_model import (
    OutPoint,
    Script,
    Transaction,
    TxInput,
    TxOutput,
    deserialize_tx,
    serialize_tx,
)
from minichain.consensus import ChainState
from minichain.crypto import Signature, hash20, verify
from minichain.errors import ValidationError
from minichain.script_engine import (
    ExecContext,
    eval_script,
    make_multisig,
    make_p2pkh,
    make_p2sh,
    p2sh_address,
    push_data,
)
from minichain.wallet import Wallet

# Payee side asked to countersign the refund transaction (input 0). None means refusal
RefundSigner = Callable[[Transaction], Signature | None]


class ChannelError(ValidationError):
    pass


class ChannelState(Enum):
    # Funding built and refund countersigned, funding not confirmed yet
    PENDING = "pending"
    OPEN = "open"
    CLOSED = "closed"
    REFUNDED = "refunded"


def _multisig_script_sig(redeem: Script, funder_signature: Signature, payee_signature: Signature) -> Script:
    # Signature order follows key order in the redeem script (funder first)
    return push_data(funder_signature) + push_data(payee_signature) + push_data(redeem)


@dataclass
class Channel:
    """Unidirectional payment channel: funder pays payee through replace-by-newer commitments
    spending one 2-of-2 P2SH funding output. A refund locked until refund_time returns
    everything to the funder if the payee never closes"""

    funder_pubkey: bytes
    payee_pubkey: bytes
    capacity: int
    fee: int
    refund_time: int
    funding_tx: Transaction

    # Fully signed, lock_time = refund_time
    refund_tx: Transaction
    state: ChannelState = ChannelState.PENDING
    commitment_index: int = 0
    payee_amount: int = 0

    # Latest commitment with its funder signature (payee signs on close)
    commitment_tx: Transaction | None = None
    funder_signature: Signature | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.capacity <= self.fee or self.fee < 0:
            raise ChannelError(f"Capacity {self.capacity} must exceed fee {self.fee}")
        if not self.funding_tx.outputs or self.funding_tx.outputs[0].script_pubkey != make_p2sh(hash20(self.redeem_script)):
            raise ChannelError("Funding output 0 doesn't pay the channel's 2-of-2 script")
        if self.funding_tx.outputs[0].amount != self.capacity:
            raise ChannelError("Funding output doesn't carry the channel capacity")

        # Funding is never usable without a refund both parties signed
        refund = self.refund_tx
        if refund.lock_time != self.refund_time or len(refund.inputs) != 1 or refund.inputs[0].prevout != self.funding_outpoint:
            raise ChannelError("Refund transaction doesn't spend the funding output with the channel lock_time")
        result = eval_script(refund.inputs[0].script_sig, self.funding_output.script_pubkey, ExecContext(refund, 0))
        if not result.accepted:
            raise ChannelError(f"Refund transaction isn't signed by both parties: {result.failure_reason.value}")

    @property
    def redeem_script(self) -> Script:
        return make_multisig(2, [self.funder_pubkey, self.payee_pubkey])

    @property
    def funding_outpoint(self) -> OutPoint:
        return OutPoint(self.funding_tx.txid, 0)

    @property
    def funding_output(self) -> TxOutput:
        return self.funding_tx.outputs[0]

    @property
    def funder_amount(self) -> int:
        """
        Returns:
            int: capacity - fee - payee_amount
        """
        return self.capacity - self.fee - self.payee_amount

    def to_dict(self) -> dict:
        return {
            "funder_pubkey": self.funder_pubkey.hex(),
            "payee_pubkey": self.payee_pubkey.hex(),
            "capacity": self.capacity,
            "fee": self.fee,
            "refund_time": self.refund_time,
            "funding_tx": serialize_tx(self.funding_tx).hex(),
            "refund_tx": serialize_tx(self.refund_tx).hex(),
            "state": self.state.value,
            "commitment_index": self.commitment_index,
            "payee_amount": self.payee_amount,
            "commitment_tx": serialize_tx(self.commitment_tx).hex() if self.commitment_tx else None,
            "funder_signature": self.funder_signature.hex() if self.funder_signature else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Channel":
        """
        Raises:
            ChannelError: missing or malformed field
        """
        try:
            return cls(
                funder_pubkey=bytes.fromhex(data["funder_pubkey"]),
                payee_pubkey=bytes.fromhex(data["payee_pubkey"]),
                capacity=int(data["capacity"]),
                fee=int(data["fee"]),
                refund_time=int(data["refund_time"]),
                funding_tx=deserialize_tx(bytes.fromhex(data["funding_tx"])),
                refund_tx=deserialize_tx(bytes.fromhex(data["refund_tx"])),
                state=ChannelState(data["state"]),
                commitment_index=int(data["commitment_index"]),
                payee_amount=int(data["payee_amount"]),
                commitment_tx=deserialize_tx(bytes.fromhex(data["commitment_tx"])) if data.get("commitment_tx") else None,
                funder_signature=bytes.fromhex(data["funder_signature"]) if data.get("funder_signature") else None,
            )
        except (KeyError, ValueError, TypeError) as e:
            raise ChannelError(f"Malformed channel record: {e}") from e


def channel_open(
    funder: Wallet,
    funder_label: str,
    payee_pubkey: bytes,
    capacity: int,
    refund_time: int,
    fee: int,
    state: ChainState,
    now: int,
    refund_signer: RefundSigner,
    exclude: set[OutPoint] | frozenset = frozenset(),
) -> Channel:
    """Builds funding and refund transactions. The payee countersigns the refund before the
    funding transaction exists anywhere but here

    Args:
        funder (Wallet): funder's wallet
        funder_label (str): funder key (also receives change and the refund)
        payee_pubkey (bytes): payee public key
        capacity (int): amount locked into the channel
        refund_time (int): refund lock_time, strictly after now
        fee (int): fee paid by every channel transaction
        state (ChainState): active chain
        now (int): current time
        refund_signer (RefundSigner): payee side, signs the refund or returns None
        exclude (set[OutPoint], optional): outpoints the funding must not spend

    Raises:
        ChannelError: refund time not in the future, or payee refused to sign
        InsufficientFundsError: funder can't cover capacity + fee

    Returns:
        Channel: pending channel. Broadcast channel.funding_tx, then channel_confirm()
    """
    if refund_time <= now:
        raise ChannelError(f"Refund time {refund_time} must be after {now}")
    if capacity <= fee:
        raise ChannelError(f"Capacity {capacity} must exceed fee {fee}")
    funder_pubkey = funder.public_key(funder_label)
    redeem = make_multisig(2, [funder_pubkey, payee_pubkey])
    funder.watch_redeem(redeem)

    funding_unsigned = funder.build_payment(state, p2sh_address(redeem), capacity, fee, funder_label, exclude)
    funding_tx = funder.sign_all(funding_unsigned, state)

    refund_tx = Transaction(
        inputs=(TxInput(OutPoint(funding_tx.txid, 0)),),
        outputs=(TxOutput(capacity - fee, make_p2pkh(hash20(funder_pubkey))),),
        lock_time=refund_time,
    )
    payee_signature = refund_signer(refund_tx)
    if payee_signature is None:
        raise ChannelError("Payee refused to sign the refund, funding not broadcast")
    if not verify(payee_pubkey, ExecContext(refund_tx, 0).digest, payee_signature):
        raise ChannelError("Payee's refund signature is invalid, funding not broadcast")
    funder_signature = funder.signature(refund_tx, 0, funder_pubkey)
    refund_tx = refund_tx.with_script_sig(0, _multisig_script_sig(redeem, funder_signature, payee_signature))

    channel = Channel(
        funder_pubkey=funder_pubkey,
        payee_pubkey=payee_pubkey,
        capacity=capacity,
        fee=fee,
        refund_time=refund_time,
        funding_tx=funding_tx,
        refund_tx=refund_tx,
    )
    logging.info(f"Channel funding {funding_tx.txid.hex()} built, capacity {capacity}, refund at {refund_time}")
    return channel


def channel_confirm(channel: Channel, state: ChainState) -> Channel:
    """Pending channel becomes open once its funding output is in the UTXO set"""
    if channel.state == ChannelState.PENDING and channel.funding_outpoint in state.utxos:
        logging.info(f"Channel funding {channel.funding_tx.txid.hex()} confirmed")
        return replace(channel, state=ChannelState.OPEN)
    return channel


def channel_pay(channel: Channel, increment: int, funder: Wallet) -> Channel:
    """Funder signs a new commitment moving increment more to the payee

    Raises:
        ChannelError: channel not open, increment not positive or over capacity - fee

    Returns:
        Channel: channel with commitment_index + 1
    """
    if channel.state != ChannelState.OPEN:
        raise ChannelError(f"Channel is {channel.state.value}, not open")
    if increment <= 0:
        raise ChannelError("Increment must be positive")
    payee_amount = channel.payee_amount + increment
    if payee_amount > channel.capacity - channel.fee:
        raise ChannelError(f"Payee amount {payee_amount} would exceed {channel.capacity - channel.fee}")

    funder_amount = channel.capacity - channel.fee - payee_amount
    outputs = []
    if funder_amount > 0:
        outputs.append(TxOutput(funder_amount, make_p2pkh(hash20(channel.funder_pubkey))))
    outputs.append(TxOutput(payee_amount, make_p2pkh(hash20(channel.payee_pubkey))))
    commitment = Transaction(inputs=(TxInput(channel.funding_outpoint),), outputs=tuple(outputs))

    funder_signature = funder.signature(commitment, 0, channel.funder_pubkey)

    # Payee side: keep the commitment only with a valid funder signature
    if not verify(channel.funder_pubkey, ExecContext(commitment, 0).digest, funder_signature):
        raise ChannelError("Funder's commitment signature is invalid")

    logging.debug(f"Channel commitment {channel.commitment_index + 1}: funder {funder_amount}, payee {payee_amount}")
    return replace(
        channel,
        commitment_index=channel.commitment_index + 1,
        payee_amount=payee_amount,
        commitment_tx=commitment,
        funder_signature=funder_signature,
    )


def channel_close(
    channel: Channel, payee: Wallet, state: ChainState | None = None, now: int | None = None
) -> tuple[Channel, Transaction]:
    """Payee countersigns the latest commitment. Only safe before refund_time, after it the
    funder's refund can confirm first

    Args:
        channel (Channel): open channel with at least one commitment
        payee (Wallet): payee's wallet
        state (ChainState | None, optional): if given, funding output must still be unspent
        now (int | None, optional): if given, must be before refund_time

    Raises:
        ChannelError: not open, no commitment yet, funding already spent or refund time reached

    Returns:
        tuple[Channel, Transaction]: closed channel and the fully signed commitment to broadcast
    """
    if channel.state != ChannelState.OPEN:
        raise ChannelError(f"Channel is {channel.state.value}, not open")
    if channel.commitment_tx is None or channel.funder_signature is None:
        raise ChannelError("Channel has no commitment to close with")
    if state is not None and channel.funding_outpoint not in state.utxos:
        raise ChannelError("Funding output is already spent")
    if now is not None and now >= channel.refund_time:
        raise ChannelError(f"Refund time {channel.refund_time} reached at {now}, the channel can only be refunded")

    payee_signature = payee.signature(channel.commitment_tx, 0, channel.payee_pubkey)
    close_tx = channel.commitment_tx.with_script_sig(
        0, _multisig_script_sig(channel.redeem_script, channel.funder_signature, payee_signature)
    )
    logging.info(f"Channel closed with commitment {channel.commitment_index}, payee gets {channel.payee_amount}")
    return replace(channel, state=ChannelState.CLOSED), close_tx


def channel_refund(channel: Channel) -> tuple[Channel, Transaction]:
    """Funder takes everything back with the stored refund

    Raises:
        ChannelError: channel already closed or refunded

    Returns:
        tuple[Channel, Transaction]: refunded channel and the refund transaction (final from refund_time)
    """
    if channel.state in (ChannelState.CLOSED, ChannelState.REFUNDED):
        raise ChannelError(f"Channel is already {channel.state.value}")
    logging.info(f"Channel refund {channel.refund_tx.txid.hex()}, valid from time {channel.refund_time}")
    return replace(channel, state=ChannelState.REFUNDED), channel.refund_tx
