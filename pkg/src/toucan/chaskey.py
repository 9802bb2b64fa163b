"""Chaskey: permutation-based MAC built on a 128-bit ARX permutation.

Words are little-endian 32-bit values throughout; the 16-byte key ``00 11 .. ff``
becomes ``(0x33221100, 0x77665544, 0xbbaa9988, 0xffeeddcc)``.

The permutation and block absorption exist twice from one source: a plain
Python version and, when numba is importable, a JIT-compiled copy used on the
hot path. Set ``TOUCAN_DISABLE_JIT=1`` to force the Python version.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

MASK32 = 0xFFFFFFFF
SUPPORTED_ROUNDS = (8, 12)
TRUNCATION_WIDTHS = (8, 12, 16, 24, 32, 64, 128)

_WORDS = struct.Struct("<4I")


class ChaskeyError(ValueError):
    """Raised for unsupported round counts, key sizes or truncation widths."""


def _permute_words(v0, v1, v2, v3, rounds):
    for _ in range(rounds):
        v0 = (v0 + v1) & MASK32
        v1 = (((v1 << 5) | (v1 >> 27)) & MASK32) ^ v0
        v0 = ((v0 << 16) | (v0 >> 16)) & MASK32
        v2 = (v2 + v3) & MASK32
        v3 = (((v3 << 8) | (v3 >> 24)) & MASK32) ^ v2
        v0 = (v0 + v3) & MASK32
        v3 = (((v3 << 13) | (v3 >> 19)) & MASK32) ^ v0
        v2 = (v2 + v1) & MASK32
        v1 = (((v1 << 7) | (v1 >> 25)) & MASK32) ^ v2
        v2 = ((v2 << 16) | (v2 >> 16)) & MASK32
    return v0, v1, v2, v3


def _make_mac_words(permute):
    def mac_words(k, k1, k2, m, rounds):
        v0, v1, v2, v3 = k
        n = len(m)
        off = 0
        # every block except the last goes through unmodified
        while n - off > 16:
            v0 ^= m[off] | (m[off + 1] << 8) | (m[off + 2] << 16) | (m[off + 3] << 24)
            v1 ^= m[off + 4] | (m[off + 5] << 8) | (m[off + 6] << 16) | (m[off + 7] << 24)
            v2 ^= m[off + 8] | (m[off + 9] << 8) | (m[off + 10] << 16) | (m[off + 11] << 24)
            v3 ^= m[off + 12] | (m[off + 13] << 8) | (m[off + 14] << 16) | (m[off + 15] << 24)
            v0, v1, v2, v3 = permute(v0, v1, v2, v3, rounds)
            off += 16

        rest = n - off
        if n != 0 and rest == 16:
            l0, l1, l2, l3 = k1
        else:
            l0, l1, l2, l3 = k2
        w = [0, 0, 0, 0]
        for i in range(rest):
            w[i >> 2] |= m[off + i] << (8 * (i & 3))
        if rest < 16:
            w[rest >> 2] |= 1 << (8 * (rest & 3))

        v0 ^= w[0] ^ l0
        v1 ^= w[1] ^ l1
        v2 ^= w[2] ^ l2
        v3 ^= w[3] ^ l3
        v0, v1, v2, v3 = permute(v0, v1, v2, v3, rounds)
        return v0 ^ l0, v1 ^ l1, v2 ^ l2, v3 ^ l3

    return mac_words


_mac_words_py = _make_mac_words(_permute_words)
_permute_impl = _permute_words
_mac_words_impl = _mac_words_py
JIT_ENABLED = False

if not os.environ.get("TOUCAN_DISABLE_JIT"):
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        njit = None
    if njit is not None:
        _permute_impl = njit(cache=True)(_permute_words)
        _mac_words_impl = njit(cache=True)(_make_mac_words(_permute_impl))
        JIT_ENABLED = True


def _double(words):
    """Multiply a 128-bit value by x in GF(2^128) mod x^128 + x^7 + x^2 + x + 1."""
    w0, w1, w2, w3 = words
    return (
        ((w0 << 1) & MASK32) ^ (0x87 if w3 >> 31 else 0),
        ((w1 << 1) | (w0 >> 31)) & MASK32,
        ((w2 << 1) | (w1 >> 31)) & MASK32,
        ((w3 << 1) | (w2 >> 31)) & MASK32,
    )


def derive_subkeys(key: bytes) -> tuple[bytes, bytes]:
    """Return ``(k1, k2)`` for a 16-byte master key, both serialized like the key."""
    k = _key_words(key)
    k1 = _double(k)
    return _WORDS.pack(*k1), _WORDS.pack(*_double(k1))


def _key_words(key: bytes) -> tuple[int, int, int, int]:
    if len(key) != 16:
        raise ChaskeyError(f"Chaskey key must be 16 bytes, got {len(key)}")
    return _WORDS.unpack(key)


@dataclass(frozen=True)
class ChaskeyKey:
    """Master key ``k`` with its precomputed subkeys, all as 32-bit word tuples."""

    k: tuple[int, int, int, int]
    k1: tuple[int, int, int, int] = field(init=False)
    k2: tuple[int, int, int, int] = field(init=False)

    def __post_init__(self):
        if len(self.k) != 4 or any(not 0 <= w <= MASK32 for w in self.k):
            raise ChaskeyError("Chaskey key must be four 32-bit words")
        k1 = _double(tuple(self.k))
        object.__setattr__(self, "k", tuple(self.k))
        object.__setattr__(self, "k1", k1)
        object.__setattr__(self, "k2", _double(k1))

    @classmethod
    def from_bytes(cls, key: bytes) -> ChaskeyKey:
        return cls(_key_words(key))

    def to_bytes(self) -> bytes:
        return _WORDS.pack(*self.k)

    def __repr__(self):
        return "ChaskeyKey(<redacted>)"


def _check_rounds(rounds):
    if rounds not in SUPPORTED_ROUNDS:
        raise ChaskeyError(f"unsupported Chaskey round count {rounds}; use 8 or 12")


def permute(state: tuple[int, int, int, int], rounds: int = 8) -> tuple[int, int, int, int]:
    """Apply ``rounds`` Chaskey rounds to a 4-word state."""
    _check_rounds(rounds)
    if len(state) != 4 or any(not 0 <= w <= MASK32 for w in state):
        raise ChaskeyError("state must be four 32-bit words")
    return tuple(_permute_impl(state[0], state[1], state[2], state[3], rounds))


def mac(key: ChaskeyKey | bytes, message: bytes, rounds: int = 8) -> bytes:
    """Compute the full 16-byte Chaskey tag of ``message``.

    ``key`` may be a :class:`ChaskeyKey` (preferred on hot paths, since the
    subkeys are cached) or raw 16 key bytes.
    """
    if not isinstance(key, ChaskeyKey):
        key = ChaskeyKey.from_bytes(key)
    _check_rounds(rounds)
    if type(message) is not bytes:
        message = bytes(message)
    return _WORDS.pack(*_mac_words_impl(key.k, key.k1, key.k2, message, rounds))


def mac_python(key: ChaskeyKey | bytes, message: bytes, rounds: int = 8) -> bytes:
    """Same as :func:`mac` but always on the interpreted code path."""
    if not isinstance(key, ChaskeyKey):
        key = ChaskeyKey.from_bytes(key)
    _check_rounds(rounds)
    return _WORDS.pack(*_mac_words_py(key.k, key.k1, key.k2, bytes(message), rounds))


def truncate_tag(tag: bytes, width: int) -> int:
    """Keep the leading ``width`` bits of a serialized tag, as an integer.

    The first ``ceil(width / 8)`` bytes are read big-endian and the surplus low
    bits dropped, so narrower truncations are bit prefixes of wider ones.
    """
    if width not in TRUNCATION_WIDTHS:
        raise ChaskeyError(f"truncation width {width} not in {TRUNCATION_WIDTHS}")
    if len(tag) * 8 < width:
        raise ChaskeyError(f"tag of {len(tag)} bytes is shorter than {width} bits")
    nbytes = (width + 7) // 8
    return int.from_bytes(tag[:nbytes], "big") >> (nbytes * 8 - width)
