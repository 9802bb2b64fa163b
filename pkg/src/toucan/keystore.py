"""Pre-shared key material, provisioned per CAN identifier range.

File format, one record per line, ``#`` starts a comment::

    ID_LO-ID_HI MACKEYHEX ENCKEYHEX [NONCEHEX]

Identifiers are hex (``0x`` prefix optional), keys are 32 hex digits and the
optional session nonce is 16 hex digits. A single identifier may be written
without the ``-ID_HI`` part.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from pathlib import Path

from .block_cipher import Aes128Key
from .can_frame import MAX_IDENTIFIER
from .chaskey import ChaskeyKey


class KeyStoreError(ValueError):
    def __init__(self, message, lineno=None):
        super().__init__(f"line {lineno}: {message}" if lineno is not None else message)
        self.lineno = lineno


@dataclass(frozen=True)
class KeyRecord:
    id_lo: int
    id_hi: int
    mac_key: bytes
    enc_key: bytes
    session_nonce: int | None = None
    lineno: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if not 0 <= self.id_lo <= self.id_hi <= MAX_IDENTIFIER:
            raise KeyStoreError(f"bad identifier range {self.id_lo:#x}-{self.id_hi:#x}", self.lineno)
        for name in ("mac_key", "enc_key"):
            if len(getattr(self, name)) != 16:
                raise KeyStoreError(f"{name} must be 16 bytes", self.lineno)
        if self.session_nonce is not None and not 0 <= self.session_nonce < 1 << 64:
            raise KeyStoreError("session nonce must fit in 64 bits", self.lineno)
        # expanded forms are cached; they are derived, not part of equality
        object.__setattr__(self, "_chaskey", ChaskeyKey.from_bytes(self.mac_key))
        object.__setattr__(self, "_aes_enc", Aes128Key(self.enc_key))

    @property
    def chaskey_key(self) -> ChaskeyKey:
        return self._chaskey

    @property
    def aes_enc_key(self) -> Aes128Key:
        return self._aes_enc

    def covers(self, identifier: int) -> bool:
        return self.id_lo <= identifier <= self.id_hi

    def to_line(self) -> str:
        ids = f"{self.id_lo:03X}-{self.id_hi:03X}"
        parts = [ids, self.mac_key.hex(), self.enc_key.hex()]
        if self.session_nonce is not None:
            parts.append(f"{self.session_nonce:016x}")
        return " ".join(parts)


class KeyStore:
    """Immutable, range-indexed collection of :class:`KeyRecord`."""

    def __init__(self, records=()):
        records = sorted(records, key=lambda r: r.id_lo)
        for prev, cur in zip(records, records[1:]):
            if cur.id_lo <= prev.id_hi:
                where = [r.lineno for r in (prev, cur)]
                raise KeyStoreError(
                    f"overlapping identifier ranges {prev.id_lo:#x}-{prev.id_hi:#x} "
                    f"(line {where[0]}) and {cur.id_lo:#x}-{cur.id_hi:#x} (line {where[1]})",
                    cur.lineno,
                )
        self._records = tuple(records)
        self._starts = [r.id_lo for r in self._records]

    @property
    def records(self) -> tuple[KeyRecord, ...]:
        return self._records

    def __len__(self):
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def lookup(self, identifier: int) -> KeyRecord | None:
        i = bisect.bisect_right(self._starts, identifier) - 1
        if i >= 0 and self._records[i].covers(identifier):
            return self._records[i]
        return None

    def dumps(self) -> str:
        return "".join(r.to_line() + "\n" for r in self._records)


def lookup(store: KeyStore, identifier: int) -> KeyRecord | None:
    return store.lookup(identifier)


def _hex_bytes(text, size, what, lineno):
    try:
        value = bytes.fromhex(text)
    except ValueError:
        raise KeyStoreError(f"malformed hex in {what}: {text!r}", lineno) from None
    if len(value) != size:
        raise KeyStoreError(f"{what} must be {size} bytes, got {len(value)}", lineno)
    return value


def _ident(text, lineno):
    try:
        return int(text, 16)
    except ValueError:
        raise KeyStoreError(f"malformed identifier {text!r}", lineno) from None


def parse_keystore(text: str) -> KeyStore:
    records = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (3, 4):
            raise KeyStoreError(f"expected 3 or 4 fields, got {len(parts)}", lineno)
        lo, _, hi = parts[0].partition("-")
        id_lo = _ident(lo, lineno)
        id_hi = _ident(hi, lineno) if hi else id_lo
        mac_key = _hex_bytes(parts[1], 16, "MAC key", lineno)
        enc_key = _hex_bytes(parts[2], 16, "encryption key", lineno)
        nonce = int.from_bytes(_hex_bytes(parts[3], 8, "session nonce", lineno), "big") if len(parts) == 4 else None
        records.append(KeyRecord(id_lo, id_hi, mac_key, enc_key, nonce, lineno))
    return KeyStore(records)


def load_keystore(path) -> KeyStore:
    return parse_keystore(Path(path).read_text())
