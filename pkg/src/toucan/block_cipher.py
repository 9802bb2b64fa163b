"""AES-128 and the counter-mode encryption of a 64-bit CAN Data field.

The key schedule and a table-free reference cipher live here; block
encryption on the hot path goes through OpenSSL (``cryptography``) when it is
installed. Both backends take the same :class:`Aes128Key`.

Counter blocks are 16 bytes: 8 bytes of nonce followed by an 8-byte big-endian
block counter. By default the nonce is the 11-bit CAN identifier, zero-padded,
so every identifier has its own fixed keystream and nothing travels on the
wire besides the ciphertext.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

try:
    from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
except ImportError:  # pragma: no cover - declared dependency
    Cipher = None

MASK64 = (1 << 64) - 1


def _build_sbox():
    sbox = [0] * 256
    p = q = 1
    # walk the multiplicative group with generator 3, tracking the inverse
    while True:
        p ^= ((p << 1) ^ (0x1B if p & 0x80 else 0)) & 0xFF
        q ^= q << 1
        q ^= q << 2
        q ^= q << 4
        q &= 0xFF
        if q & 0x80:
            q ^= 0x09
        x = q ^ _rotl8(q, 1) ^ _rotl8(q, 2) ^ _rotl8(q, 3) ^ _rotl8(q, 4)
        sbox[p] = x ^ 0x63
        if p == 1:
            break
    sbox[0] = 0x63
    return bytes(sbox)


def _rotl8(x, n):
    return ((x << n) | (x >> (8 - n))) & 0xFF


SBOX = _build_sbox()
_RCON = (0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36)


def _xtime(a):
    return ((a << 1) ^ 0x1B) & 0xFF if a & 0x80 else a << 1


def expand_key(key: bytes) -> tuple[bytes, ...]:
    """FIPS-197 key expansion: 11 round keys of 16 bytes each."""
    if len(key) != 16:
        raise ValueError(f"AES-128 key must be 16 bytes, got {len(key)}")
    words = [list(key[i : i + 4]) for i in range(0, 16, 4)]
    for i in range(4, 44):
        t = list(words[i - 1])
        if i % 4 == 0:
            t = t[1:] + t[:1]
            t = [SBOX[b] for b in t]
            t[0] ^= _RCON[i // 4 - 1]
        words.append([a ^ b for a, b in zip(words[i - 4], t)])
    return tuple(bytes(sum(words[4 * r : 4 * r + 4], [])) for r in range(11))


def _encrypt_block_python(round_keys, block):
    s = [b ^ k for b, k in zip(block, round_keys[0])]
    for rnd in range(1, 11):
        s = [SBOX[b] for b in s]
        # ShiftRows on the column-major state
        s = [s[(i + 4 * (i % 4)) % 16] for i in range(16)]
        if rnd != 10:
            mixed = []
            for c in range(4):
                a0, a1, a2, a3 = s[4 * c : 4 * c + 4]
                x = a0 ^ a1 ^ a2 ^ a3
                mixed += [
                    a0 ^ x ^ _xtime(a0 ^ a1),
                    a1 ^ x ^ _xtime(a1 ^ a2),
                    a2 ^ x ^ _xtime(a2 ^ a3),
                    a3 ^ x ^ _xtime(a3 ^ a0),
                ]
            s = mixed
        s = [b ^ k for b, k in zip(s, round_keys[rnd])]
    return bytes(s)


class Aes128Key:
    """An AES-128 key with its expanded schedule.

    ``backend`` is ``"openssl"`` (default when available) or ``"python"``.
    """

    def __init__(self, key: bytes, backend: str | None = None):
        self.key = bytes(key)
        self.round_keys = expand_key(self.key)
        if backend is None:
            backend = "openssl" if Cipher is not None else "python"
        if backend not in ("openssl", "python"):
            raise ValueError(f"unknown AES backend {backend!r}")
        if backend == "openssl" and Cipher is None:
            raise ValueError("openssl backend requires the 'cryptography' package")
        self.backend = backend
        self._cipher = Cipher(algorithms.AES(self.key), modes.ECB()) if backend == "openssl" else None
        self._local = threading.local()

    def encrypt_block(self, block: bytes) -> bytes:
        if len(block) != 16:
            raise ValueError(f"AES block must be 16 bytes, got {len(block)}")
        if self._cipher is None:
            return _encrypt_block_python(self.round_keys, block)
        # ECB contexts are stateless between blocks but not thread-safe
        try:
            enc = self._local.enc
        except AttributeError:
            enc = self._local.enc = self._cipher.encryptor()
        return enc.update(block)

    def __eq__(self, other):
        return isinstance(other, Aes128Key) and other.key == self.key

    def __hash__(self):
        return hash(("aes128", self.key))

    def __repr__(self):
        return f"Aes128Key(<redacted>, backend={self.backend!r})"


def aes128_encrypt_block(key: Aes128Key | bytes, block: bytes) -> bytes:
    if not isinstance(key, Aes128Key):
        key = Aes128Key(key)
    return key.encrypt_block(block)


@dataclass(frozen=True)
class CtrContext:
    """Initial counter block plus the block index used for a Data field."""

    nonce_block: bytes
    counter: int = 0

    def __post_init__(self):
        if len(self.nonce_block) != 16:
            raise ValueError("nonce_block must be 16 bytes")
        if not 0 <= self.counter <= MASK64:
            raise ValueError("counter must fit in 64 bits")
        object.__setattr__(self, "_block", self.counter_block(self.counter))

    @classmethod
    def for_identifier(cls, identifier: int, session_nonce: int | None = None) -> CtrContext:
        """Counter context bound to a CAN identifier.

        Without a session nonce the high half is just the identifier; with one
        it is ``session_nonce XOR identifier`` so identifiers still differ.
        """
        nonce = identifier if session_nonce is None else (session_nonce ^ identifier) & MASK64
        return cls(nonce.to_bytes(8, "big") + bytes(8), 0)

    def counter_block(self, index: int) -> bytes:
        if not 0 <= index <= MASK64:
            raise ValueError("counter overflow")
        return self.nonce_block[:8] + index.to_bytes(8, "big")


def keystream64(key: Aes128Key, ctx: CtrContext) -> int:
    """First 64 keystream bits of block ``ctx.counter``, as a big-endian integer."""
    return int.from_bytes(key.encrypt_block(ctx._block)[:8], "big")


def encrypt_data_field(key: Aes128Key, ctx: CtrContext, field: int) -> int:
    if not 0 <= field <= MASK64:
        raise ValueError("data field must be a 64-bit value")
    return field ^ keystream64(key, ctx)


def decrypt_data_field(key: Aes128Key, ctx: CtrContext, cipher: int) -> int:
    # counter mode: decryption is the same XOR
    return encrypt_data_field(key, ctx, cipher)
