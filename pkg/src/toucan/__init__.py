"""Secured CAN 2.0A frames: Chaskey-tagged, AES-CTR-encrypted 64-bit Data fields."""

from .block_cipher import Aes128Key, CtrContext, decrypt_data_field, encrypt_data_field
from .can_frame import CanFrame, decode_frame, encode_frame
from .chaskey import ChaskeyKey, mac, truncate_tag
from .core import (
    TOUCAN_PROFILE,
    SecOcProfile,
    Verdict,
    collision_bound,
    forgery_probability,
    pack_data_field,
    secure_receive,
    secure_send,
    unpack_data_field,
)
from .keystore import KeyRecord, KeyStore, load_keystore

__version__ = "0.1.0"

__all__ = [
    "Aes128Key", "CanFrame", "ChaskeyKey", "CtrContext", "KeyRecord", "KeyStore",
    "SecOcProfile", "TOUCAN_PROFILE", "Verdict", "collision_bound", "decode_frame",
    "decrypt_data_field", "encode_frame", "encrypt_data_field", "forgery_probability",
    "load_keystore", "mac", "pack_data_field", "secure_receive", "secure_send",
    "truncate_tag", "unpack_data_field",
]
