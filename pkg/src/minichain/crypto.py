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
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Protocol

import base58
from ecdsa import SECP256k1, SigningKey, VerifyingKey
from ecdsa.util import sigdecode_der, sigencode_der_canonize

from minichain.errors import ValidationError

# 32-byte SHA-256 output
Digest32 = bytes

# 20-byte truncated double SHA-256
Digest20 = bytes

# DER-encoded signature bytes
Signature = bytes

# Address version bytes (same numbering as Bitcoin's, so P2SH addresses start with '3')
ADDRESS_VERSION_P2PKH = 0x00
ADDRESS_VERSION_P2SH = 0x05

# Base58 alphabet as text, used to tell bad characters from bad checksums
BASE58_ALPHABET = base58.BITCOIN_ALPHABET.decode("ascii")

# version (1) + payload (20) + checksum (4)
ADDRESS_RAW_LENGTH = 25


class AddressError(ValidationError):
    """Address text can't be decoded"""


class InvalidCharacterError(AddressError):
    """Address text contains a character outside of the Base58 alphabet"""


class ChecksumError(AddressError):
    """Address checksum doesn't match its version and payload"""


def sha256(data: bytes) -> Digest32:
    """
    Args:
        data (bytes): any bytes (empty allowed)

    Returns:
        Digest32: standard SHA-256 digest
    """
    return hashlib.sha256(data).digest()


def hash256(data: bytes) -> Digest32:
    """Double SHA-256, used for block hashes, txids and checksums"""
    return sha256(sha256(data))


def hash20(data: bytes) -> Digest20:
    """First 20 bytes of hash256(), used as public key hash and script hash"""
    return hash256(data)[:20]


@dataclass(frozen=True)
class KeyPair:
    # Never serialized into chain data
    secret_key: int = field(repr=False)

    # 33-byte compressed curve point
    public_key: bytes


class SignatureScheme(Protocol):
    """Signature scheme used by sign(), verify() and keypair_generate()"""

    def derive_public_key(self, secret_key: int) -> bytes: ...

    def sign(self, secret_key: int, digest: Digest32) -> Signature: ...

    def verify(self, public_key: bytes, digest: Digest32, signature: Signature) -> bool: ...

    @property
    def order(self) -> int: ...


class EcdsaScheme:
    """ECDSA over secp256k1 with deterministic (RFC 6979) nonces and low-S DER signatures"""

    @property
    def order(self) -> int:
        """
        Returns:
            int: curve group order
        """
        return SECP256k1.order

    def derive_public_key(self, secret_key: int) -> bytes:
        signing_key = SigningKey.from_secret_exponent(secret_key, curve=SECP256k1, hashfunc=hashlib.sha256)
        return signing_key.get_verifying_key().to_string("compressed")

    def sign(self, secret_key: int, digest: Digest32) -> Signature:
        signing_key = SigningKey.from_secret_exponent(secret_key, curve=SECP256k1, hashfunc=hashlib.sha256)
        return signing_key.sign_digest_deterministic(
            digest, hashfunc=hashlib.sha256, sigencode=sigencode_der_canonize
        )

    def verify(self, public_key: bytes, digest: Digest32, signature: Signature) -> bool:
        if not signature or len(digest) != 32:
            return False
        try:
            verifying_key = VerifyingKey.from_string(public_key, curve=SECP256k1, hashfunc=hashlib.sha256)
            return verifying_key.verify_digest(signature, digest, sigdecode=sigdecode_der)

        # Malformed keys and signatures raise many different errors inside ecdsa
        except Exception as e:
            logging.debug(f"Signature rejected: {e.__class__.__name__}: {e}")
            return False


_scheme: SignatureScheme = EcdsaScheme()

# Verification results by (public key, digest, signature). Nodes in one simulation check the same signatures
SIGNATURE_CACHE_SIZE = 100_000
_signature_cache: OrderedDict[tuple[bytes, bytes, bytes], bool] = OrderedDict()


def set_signature_scheme(scheme: SignatureScheme) -> SignatureScheme:
    """Replaces process-wide signature scheme

    Args:
        scheme (SignatureScheme): new scheme

    Returns:
        SignatureScheme: previous scheme (to restore it later)
    """
    global _scheme
    previous = _scheme
    _scheme = scheme
    _signature_cache.clear()
    return previous


def keypair_generate(seed: bytes) -> KeyPair:
    """Deterministically derives a key pair from seed

    Args:
        seed (bytes): non-empty seed (ex.: b"alice")

    Raises:
        ValidationError: empty seed

    Returns:
        KeyPair: the same key pair for the same seed
    """
    if not seed:
        raise ValidationError("Key seed must not be empty")
    secret_key = int.from_bytes(hash256(seed), "big") % (_scheme.order - 1) + 1
    return KeyPair(secret_key=secret_key, public_key=_scheme.derive_public_key(secret_key))


def sign(secret_key: int, digest: Digest32) -> Signature:
    return _scheme.sign(secret_key, digest)


def verify(public_key: bytes, digest: Digest32, signature: Signature) -> bool:
    """Checks signature. Never raises on malformed input

    Returns:
        bool: True only if signature was made by public_key's secret key over digest
    """
    cache_key = (bytes(public_key), bytes(digest), bytes(signature))
    cached = _signature_cache.get(cache_key)
    if cached is not None:
        return cached
    valid = _scheme.verify(public_key, digest, signature)
    _signature_cache[cache_key] = valid
    if len(_signature_cache) > SIGNATURE_CACHE_SIZE:
        _signature_cache.popitem(last=False)
    return valid


@dataclass(frozen=True)
class Address:
    text: str
    version: int
    payload: Digest20

    def __str__(self) -> str:
        return self.text


def encode_address(version: int, payload: Digest20) -> Address:
    """Base58Check encoding of version + payload

    Args:
        version (int): 0-255
        payload (Digest20): 20-byte hash

    Returns:
        Address: encoded address
    """
    if not 0 <= version <= 0xFF:
        raise ValidationError(f"Address version out of range: {version}")
    if len(payload) != 20:
        raise ValidationError(f"Address payload must be 20 bytes, got {len(payload)}")
    text = base58.b58encode_check(bytes([version]) + payload).decode("ascii")
    return Address(text=text, version=version, payload=bytes(payload))


def decode_address(text: str) -> tuple[int, Digest20]:
    """Decodes and verifies Base58Check address

    Args:
        text (str): address text

    Raises:
        InvalidCharacterError: character outside Base58 alphabet
        ChecksumError: checksum mismatch
        AddressError: wrong decoded length

    Returns:
        tuple[int, Digest20]: (version, payload)
    """
    for position, char in enumerate(text):
        if char not in BASE58_ALPHABET:
            raise InvalidCharacterError(f"Invalid character {char!r} at position {position} in address {text!r}")
    if not text:
        raise AddressError("Empty address")

    try:
        raw = base58.b58decode_check(text)
    except ValueError as e:
        raise ChecksumError(f"Bad checksum in address {text!r}") from e

    if len(raw) != ADDRESS_RAW_LENGTH - 4:
        raise AddressError(f"Address {text!r} decodes to {len(raw)} bytes instead of {ADDRESS_RAW_LENGTH - 4}")
    return raw[0], raw[1:]


def parse_address(text: str) -> Address:
    """decode_address() wrapped into Address"""
    version, payload = decode_address(text)
    return Address(text=text, version=version, payload=payload)


def address_for_pubkey(public_key: bytes) -> Address:
    """
    Returns:
        Address: P2PKH address (version 0x00) of hash20(public_key)
    """
    return encode_address(ADDRESS_VERSION_P2PKH, hash20(public_key))
