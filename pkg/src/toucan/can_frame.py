"""CAN 2.0A (11-bit identifier) frames and their bit-level wire encoding.

Bits are ints, 0 = dominant and 1 = recessive. A frame on the wire is

    SOF | ID(11) RTR | IDE r0 DLC(4) | DATA(0..64) | CRC(15) | CRC-del
    | ACK slot | ACK-del | EOF(7)

with bit stuffing applied from SOF through the last CRC bit: after five equal
bits the transmitter inserts one bit of opposite polarity.
"""

from __future__ import annotations

from dataclasses import dataclass

CRC15_POLY = 0x4599
MAX_IDENTIFIER = 0x7FF
STUFF_RUN = 5
EOF_BITS = 7

BitString = tuple[int, ...]


class FrameError(ValueError):
    """Base class for frame encode/decode failures."""


class StuffError(FrameError):
    """Six equal consecutive bits inside the stuffed region."""


class CrcError(FrameError):
    """CRC recomputed at the receiver does not match the transmitted one."""


class TruncatedFrameError(FrameError):
    """Bit stream ended before the frame was complete."""


class FormError(FrameError):
    """A fixed-form bit (delimiter, EOF) has the wrong value."""


class ArbitrationError(ValueError):
    """Two contenders presented the same identifier."""


def crc15(bits) -> int:
    """CAN CRC-15 of a bit sequence (polynomial 0x4599, initial value 0)."""
    crc = 0
    for bit in bits:
        feedback = bit ^ (crc >> 14)
        crc = (crc << 1) & 0x7FFF
        if feedback:
            crc ^= CRC15_POLY
    return crc


def _int_bits(value, width):
    return [(value >> i) & 1 for i in range(width - 1, -1, -1)]


def _bits_int(bits):
    value = 0
    for b in bits:
        value = (value << 1) | b
    return value


@dataclass(frozen=True)
class CanFrame:
    identifier: int
    data: bytes = b""
    rtr: int = 0
    ide: int = 0
    r0: int = 0
    dlc: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "data", bytes(self.data))
        if self.dlc is None:
            object.__setattr__(self, "dlc", len(self.data))
        if not 0 <= self.identifier <= MAX_IDENTIFIER:
            raise FrameError(f"identifier {self.identifier:#x} does not fit in 11 bits")
        for name in ("rtr", "ide", "r0"):
            if getattr(self, name) not in (0, 1):
                raise FrameError(f"{name} must be a single bit")
        if self.ide != 0:
            raise FrameError("extended (29-bit) frames are not supported")
        if not 0 <= self.dlc <= 8:
            raise FrameError(f"dlc {self.dlc} out of range 0..8")
        if self.rtr:
            # remote frames request dlc bytes but carry none
            if self.data:
                raise FrameError("remote frame cannot carry data")
        elif len(self.data) != self.dlc:
            raise FrameError(f"dlc {self.dlc} does not match {len(self.data)} data bytes")

    def header_bits(self) -> list[int]:
        """SOF through the end of the Data field, unstuffed."""
        bits = [0]
        bits += _int_bits(self.identifier, 11)
        bits += [self.rtr, self.ide, self.r0]
        bits += _int_bits(self.dlc, 4)
        for byte in self.data:
            bits += _int_bits(byte, 8)
        return bits

    @property
    def crc(self) -> int:
        return crc15(self.header_bits())

    def with_data(self, data: bytes) -> CanFrame:
        return CanFrame(self.identifier, data, self.rtr, self.ide, self.r0)

    def __str__(self):
        return f"{self.identifier:03X}#{'R' if self.rtr else self.data.hex().upper()}"


def stuff(bits) -> list[int]:
    out = []
    run_bit, run = None, 0
    for b in bits:
        out.append(b)
        if b == run_bit:
            run += 1
        else:
            run_bit, run = b, 1
        if run == STUFF_RUN:
            out.append(1 - b)
            run_bit, run = 1 - b, 1
    return out


def encode_frame(frame: CanFrame) -> BitString:
    body = frame.header_bits()
    body += _int_bits(crc15(body), 15)
    tail = [1, 1, 1] + [1] * EOF_BITS  # CRC delimiter, ACK slot, ACK delimiter, EOF
    return tuple(stuff(body) + tail)


class _Destuffer:
    def __init__(self, bits):
        self.bits = bits
        self.pos = 0
        self.run_bit = None
        self.run = 0

    def _raw(self):
        if self.pos >= len(self.bits):
            raise TruncatedFrameError(f"bit stream ended at position {self.pos}")
        b = self.bits[self.pos]
        if b not in (0, 1):
            raise FrameError(f"invalid bit value {b!r} at position {self.pos}")
        self.pos += 1
        return b

    def take(self, n):
        out = []
        for _ in range(n):
            b = self._raw()
            if b == self.run_bit:
                self.run += 1
            else:
                self.run_bit, self.run = b, 1
            out.append(b)
            if self.run == STUFF_RUN:
                self._consume_stuff_bit()
        return out

    def _consume_stuff_bit(self):
        at = self.pos
        b = self._raw()
        if b == self.run_bit:
            raise StuffError(f"stuff violation: six equal bits ending at position {at}")
        self.run_bit, self.run = b, 1


def decode_frame(bits) -> CanFrame:
    """Parse a wire bit string back into a frame, checking stuffing, CRC and form.

    The ACK slot may be either level (it is the receivers' bit to drive).
    """
    bits = tuple(bits)
    d = _Destuffer(bits)
    if d.take(1) != [0]:
        raise FormError("start of frame must be dominant")
    identifier = _bits_int(d.take(11))
    rtr, ide, r0 = d.take(3)
    if ide != 0:
        raise FrameError("extended (29-bit) frames are not supported")
    dlc = _bits_int(d.take(4))
    if dlc > 8:
        # ISO 11898 treats 9..15 as 8 bytes; this codec never emits them
        raise FormError(f"dlc {dlc} out of range 0..8")
    nbytes = 0 if rtr else dlc
    data_bits = d.take(8 * nbytes)
    received_crc = _bits_int(d.take(15))

    data = bytes(_bits_int(data_bits[i : i + 8]) for i in range(0, len(data_bits), 8))
    frame = CanFrame(identifier, data, rtr, ide, r0, dlc)
    if frame.crc != received_crc:
        raise CrcError(f"crc mismatch: computed {frame.crc:#06x}, received {received_crc:#06x}")

    pos = d.pos
    tail = bits[pos : pos + 3 + EOF_BITS]
    if len(tail) < 3 + EOF_BITS:
        raise TruncatedFrameError("bit stream ended inside the frame trailer")
    if tail[0] != 1:
        raise FormError("CRC delimiter must be recessive")
    if tail[2] != 1:
        raise FormError("ACK delimiter must be recessive")
    if any(b != 1 for b in tail[3:]):
        raise FormError("end of frame must be seven recessive bits")
    return frame


def stuffed_region_length(bits) -> int:
    """Number of wire bits from SOF through the last CRC bit (or stuff bit)."""
    return len(bits) - 3 - EOF_BITS


def longest_run(bits) -> int:
    best = run = 0
    prev = None
    for b in bits:
        run = run + 1 if b == prev else 1
        prev = b
        best = max(best, run)
    return best


def wins_arbitration(a: int, b: int) -> int:
    """Identifier that wins bus contention between ``a`` and ``b`` (lower wins)."""
    for ident in (a, b):
        if not 0 <= ident <= MAX_IDENTIFIER:
            raise FrameError(f"identifier {ident:#x} does not fit in 11 bits")
    if a == b:
        raise ArbitrationError(f"identifier {a:#x} contended by two nodes")
    return min(a, b)
