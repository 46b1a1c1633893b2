"""Message framing for the power talk bit-pipe.

Byte layout of every message (big-endian)::

    offset 0   kind        1 byte   MessageKind value
    offset 1   length      2 bytes  total length, always DECLARED_LEN[kind]
    offset 3   body        kind-specific fields (see BODY_FIELDS)
    ...        padding     zeros up to DECLARED_LEN[kind]

Bits go out MSB first, one bit per power talk slot.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import LengthMismatch, UnknownKind


class MessageKind(enum.IntEnum):
    ASSOC_REQUEST = 1
    ASSOC_RESPONSE = 2
    H1 = 3
    H2 = 4
    H3 = 5
    H4 = 6
    ACK = 7


DECLARED_LEN = {
    MessageKind.ASSOC_REQUEST: 114,
    MessageKind.ASSOC_RESPONSE: 93,
    MessageKind.H1: 177,
    MessageKind.H2: 177,
    MessageKind.H3: 211,
    MessageKind.H4: 155,
    MessageKind.ACK: 32,
}

HEADER_LEN = 3
HEADER_BITS = 8 * HEADER_LEN

# (name, size) in wire order after the header
BODY_FIELDS: dict[MessageKind, tuple[tuple[str, int], ...]] = {
    MessageKind.ASSOC_REQUEST: (("src", 6), ("dst", 6)),
    MessageKind.ASSOC_RESPONSE: (("src", 6), ("dst", 6), ("status", 1)),
    MessageKind.H1: (("src", 6), ("dst", 6), ("replay", 8), ("nonce", 32), ("pmkid", 16)),
    MessageKind.H2: (("src", 6), ("dst", 6), ("replay", 8), ("nonce", 32), ("mic", 16)),
    MessageKind.H3: (("src", 6), ("dst", 6), ("replay", 8), ("nonce", 32), ("gtk_wrapped", 32), ("mic", 16)),
    MessageKind.H4: (("src", 6), ("dst", 6), ("replay", 8), ("mic", 16)),
    MessageKind.ACK: (("src", 6), ("dst", 6), ("acked", 1), ("status", 1)),
}

# Which field carries the confirmation material an attacker would tamper with.
TAG_FIELD = {
    MessageKind.H1: "pmkid",
    MessageKind.H2: "mic",
    MessageKind.H3: "mic",
    MessageKind.H4: "mic",
}

ACK_ACCEPTED = 0
ACK_REJECTED = 1


def field_slices(kind: MessageKind) -> dict[str, slice]:
    out, pos = {}, HEADER_LEN
    for name, size in BODY_FIELDS[kind]:
        out[name] = slice(pos, pos + size)
        pos += size
    return out


@dataclass(frozen=True)
class ProtocolMessage:
    kind: MessageKind
    payload: bytes

    def __post_init__(self):
        object.__setattr__(self, "kind", MessageKind(self.kind))
        if len(self.payload) != self.declared_len:
            raise LengthMismatch(f"{self.kind.name}: payload is {len(self.payload)} bytes, declared {self.declared_len}")

    @property
    def declared_len(self) -> int:
        return DECLARED_LEN[self.kind]

    @property
    def n_bits(self) -> int:
        return 8 * self.declared_len

    def field(self, name: str) -> bytes:
        return self.payload[field_slices(self.kind)[name]]

    def with_field(self, name: str, value: bytes) -> "ProtocolMessage":
        sl = field_slices(self.kind)[name]
        if len(value) != sl.stop - sl.start:
            raise LengthMismatch(f"field {name} needs {sl.stop - sl.start} bytes")
        buf = bytearray(self.payload)
        buf[sl] = value
        return ProtocolMessage(self.kind, bytes(buf))

    @property
    def fields(self) -> dict[str, bytes]:
        return {name: self.payload[sl] for name, sl in field_slices(self.kind).items()}


def build_message(kind: MessageKind, **fields: bytes) -> ProtocolMessage:
    kind = MessageKind(kind)
    total = DECLARED_LEN[kind]
    buf = bytearray(total)
    struct.pack_into(">BH", buf, 0, int(kind), total)
    slices = field_slices(kind)
    unknown = set(fields) - set(slices)
    if unknown:
        raise KeyError(f"{kind.name} has no fields {sorted(unknown)}")
    for name, sl in slices.items():
        value = fields.get(name, bytes(sl.stop - sl.start))
        if len(value) != sl.stop - sl.start:
            raise LengthMismatch(f"{kind.name}.{name} needs {sl.stop - sl.start} bytes, got {len(value)}")
        buf[sl] = value
    return ProtocolMessage(kind, bytes(buf))


def parse_header(header: bytes) -> tuple[MessageKind, int]:
    """Kind and total length from the first three bytes; validates both."""
    if len(header) < HEADER_LEN:
        raise LengthMismatch("truncated header")
    raw_kind, length = struct.unpack_from(">BH", header, 0)
    try:
        kind = MessageKind(raw_kind)
    except ValueError:
        raise UnknownKind(f"unknown message kind {raw_kind}") from None
    if length != DECLARED_LEN[kind]:
        raise LengthMismatch(f"{kind.name} header declares {length} bytes, expected {DECLARED_LEN[kind]}")
    return kind, length


def frame_bits(msg: ProtocolMessage) -> np.ndarray:
    return np.unpackbits(np.frombuffer(msg.payload, dtype=np.uint8))


def unframe_bits(bits) -> ProtocolMessage:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size < HEADER_BITS or bits.size % 8:
        raise LengthMismatch(f"bit stream of {bits.size} bits is not a whole message")
    data = np.packbits(bits).tobytes()
    kind, length = parse_header(data)
    if len(data) != length:
        raise LengthMismatch(f"{kind.name}: got {len(data)} bytes, header declares {length}")
    return ProtocolMessage(kind, data)


def handshake_bits() -> int:
    """Slots for the whole exchange at 1 bit/slot: six messages, each acknowledged."""
    msgs = (
        MessageKind.ASSOC_REQUEST,
        MessageKind.ASSOC_RESPONSE,
        MessageKind.H1,
        MessageKind.H2,
        MessageKind.H3,
        MessageKind.H4,
    )
    return sum(8 * (DECLARED_LEN[k] + DECLARED_LEN[MessageKind.ACK]) for k in msgs)


def association_bits() -> int:
    return 8 * (DECLARED_LEN[MessageKind.ASSOC_REQUEST] + DECLARED_LEN[MessageKind.ASSOC_RESPONSE] + 2 * DECLARED_LEN[MessageKind.ACK])
