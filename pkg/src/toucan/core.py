"""Secured Data field: 40-bit payload + 24-bit truncated tag, encrypted as one 64-bit block.

Sender side::

    tag   = truncate(MAC(mac_key, payload bytes), 24)
    field = payload << 24 | tag
    wire  = field XOR AES-CTR keystream(enc_key, identifier)

The receiver reverses the steps and accepts only if the recomputed tag matches.
With the default profile there is no freshness value, so identical inputs give
identical wire bits; a recorded frame replays successfully. That is a property
of the profile, not something this module tries to fix.
"""

from __future__ import annotations

import hmac
import math
from dataclasses import dataclass

from . import chaskey
from .block_cipher import CtrContext, decrypt_data_field, encrypt_data_field
from .can_frame import CanFrame
from .keystore import KeyRecord, KeyStore

DATA_FIELD_BITS = 64

CHASKEY_AES = "Chaskey + AES-128-CTR"
CMAC_AES = "CMAC/AES-128"
ALGORITHMS = {"chaskey": CHASKEY_AES, "cmac": CMAC_AES}


class NoKeyError(LookupError):
    """No key record covers the frame identifier."""


@dataclass(frozen=True)
class SecOcProfile:
    """AUTOSAR SecOC profile parameters (freshness and MAC lengths in bits)."""

    algorithm: str = CHASKEY_AES
    freshness_len: int = 0
    freshness_tx_len: int = 0
    mac_tx_len: int = 24
    chaskey_rounds: int = 8
    bind_id: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS.values():
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not 0 <= self.freshness_tx_len <= self.freshness_len:
            raise ValueError("freshness_tx_len must be between 0 and freshness_len")
        if self.freshness_tx_len or self.freshness_len:
            raise ValueError("freshness values are not supported; both lengths must be 0")
        if self.mac_tx_len not in chaskey.TRUNCATION_WIDTHS or self.mac_tx_len >= DATA_FIELD_BITS:
            raise ValueError(f"unsupported truncated MAC length {self.mac_tx_len}")
        if self.chaskey_rounds not in chaskey.SUPPORTED_ROUNDS:
            raise ValueError(f"unsupported Chaskey round count {self.chaskey_rounds}")

    @property
    def payload_len(self) -> int:
        return DATA_FIELD_BITS - self.mac_tx_len - self.freshness_tx_len

    @property
    def payload_bytes(self) -> int:
        return (self.payload_len + 7) // 8

    @classmethod
    def named(cls, name: str = "chaskey", **overrides) -> SecOcProfile:
        """Build a profile from a short name: ``chaskey`` or ``cmac``."""
        try:
            algorithm = ALGORITHMS[name]
        except KeyError:
            raise ValueError(f"unknown profile {name!r}; choose from {sorted(ALGORITHMS)}") from None
        return cls(algorithm=algorithm, **overrides)


TOUCAN_PROFILE = SecOcProfile()


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    payload: int | None = None
    reason: str | None = None

    @classmethod
    def accept(cls, payload: int) -> Verdict:
        return cls(True, payload)

    @classmethod
    def reject(cls, reason: str) -> Verdict:
        return cls(False, None, reason)

    def __str__(self):
        return f"accept({self.payload:010x})" if self.accepted else f"reject({self.reason})"


def pack_data_field(payload: int, tag: int, tag_bits: int = 24) -> int:
    payload_bits = DATA_FIELD_BITS - tag_bits
    if not 0 <= payload < 1 << payload_bits:
        raise ValueError(f"payload does not fit in {payload_bits} bits")
    if not 0 <= tag < 1 << tag_bits:
        raise ValueError(f"tag does not fit in {tag_bits} bits")
    return (payload << tag_bits) | tag


def unpack_data_field(field: int, tag_bits: int = 24) -> tuple[int, int]:
    if not 0 <= field < 1 << DATA_FIELD_BITS:
        raise ValueError("data field must be a 64-bit value")
    return field >> tag_bits, field & ((1 << tag_bits) - 1)


def payload_from_bytes(data: bytes, profile: SecOcProfile = TOUCAN_PROFILE) -> int:
    """Left-align up to ``payload_bytes`` bytes in the payload, zero-filling the rest."""
    if len(data) > profile.payload_bytes:
        raise ValueError(f"payload of {len(data)} bytes exceeds {profile.payload_bytes}")
    value = int.from_bytes(data.ljust(profile.payload_bytes, b"\0"), "big")
    spare = profile.payload_bytes * 8 - profile.payload_len
    if value & ((1 << spare) - 1):
        raise ValueError(f"payload sets bits beyond the {profile.payload_len}-bit payload")
    return value >> spare


def _resolve(keys, identifier) -> KeyRecord:
    record = keys.lookup(identifier) if isinstance(keys, KeyStore) else keys
    if record is None or not record.covers(identifier):
        raise NoKeyError(f"no key for identifier {identifier:#05x}")
    return record


def mac_input(payload: int, identifier: int, profile: SecOcProfile) -> bytes:
    data = payload.to_bytes(profile.payload_bytes, "big")
    if profile.bind_id:
        data = identifier.to_bytes(2, "big") + data
    return data


def compute_tag(payload: int, identifier: int, record: KeyRecord, profile: SecOcProfile = TOUCAN_PROFILE) -> int:
    """Truncated tag over the payload (and identifier when ``bind_id`` is set)."""
    message = mac_input(payload, identifier, profile)
    if profile.algorithm == CMAC_AES:
        from cryptography.hazmat.primitives import cmac
        from cryptography.hazmat.primitives.ciphers import algorithms

        c = cmac.CMAC(algorithms.AES(record.mac_key))
        c.update(message)
        full = c.finalize()
    else:
        full = chaskey.mac(record.chaskey_key, message, profile.chaskey_rounds)
    return chaskey.truncate_tag(full, profile.mac_tx_len)


def counter_context(identifier: int, record: KeyRecord) -> CtrContext:
    return CtrContext.for_identifier(identifier, record.session_nonce)


def secure_send(payload: int, identifier: int, keys: KeyStore | KeyRecord,
                profile: SecOcProfile = TOUCAN_PROFILE) -> CanFrame:
    """Produce the single secured frame carrying ``payload``."""
    if not 0 <= payload < 1 << profile.payload_len:
        raise ValueError(f"payload does not fit in {profile.payload_len} bits")
    record = _resolve(keys, identifier)
    tag = compute_tag(payload, identifier, record, profile)
    field = pack_data_field(payload, tag, profile.mac_tx_len)
    wire = encrypt_data_field(record.aes_enc_key, counter_context(identifier, record), field)
    return CanFrame(identifier, wire.to_bytes(8, "big"))


def secure_receive(frame: CanFrame, keys: KeyStore | KeyRecord,
                   profile: SecOcProfile = TOUCAN_PROFILE) -> Verdict:
    if frame.rtr or frame.dlc != 8:
        return Verdict.reject("bad_dlc")
    try:
        record = _resolve(keys, frame.identifier)
    except NoKeyError:
        return Verdict.reject("no_key")
    field = decrypt_data_field(record.aes_enc_key, counter_context(frame.identifier, record),
                               int.from_bytes(frame.data, "big"))
    payload, tag = unpack_data_field(field, profile.mac_tx_len)
    expected = compute_tag(payload, frame.identifier, record, profile)
    nbytes = (profile.mac_tx_len + 7) // 8
    if not hmac.compare_digest(tag.to_bytes(nbytes, "big"), expected.to_bytes(nbytes, "big")):
        return Verdict.reject("bad_tag")
    return Verdict.accept(payload)


def forgery_probability(mac_tx_len: int) -> float:
    """Chance that one uniformly guessed truncated tag verifies."""
    if not 0 < mac_tx_len <= 128:
        raise ValueError("mac_tx_len must be in 1..128")
    return 2.0 ** -mac_tx_len


def collision_bound(mac_tx_len: int) -> int:
    """Birthday bound: number of tags after which a collision becomes likely."""
    if not 0 < mac_tx_len <= 128:
        raise ValueError("mac_tx_len must be in 1..128")
    return math.isqrt(1 << mac_tx_len)
