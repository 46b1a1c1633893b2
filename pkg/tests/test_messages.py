import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from powertalk.errors import LengthMismatch, UnknownKind
from powertalk.protocol.messages import (
    BODY_FIELDS,
    DECLARED_LEN,
    HEADER_LEN,
    MessageKind,
    association_bits,
    build_message,
    frame_bits,
    handshake_bits,
    parse_header,
    unframe_bits,
)

LENGTHS = {"ASSOC_REQUEST": 114, "ASSOC_RESPONSE": 93, "H1": 177, "H2": 177, "H3": 211, "H4": 155, "ACK": 32}


def test_declared_lengths():
    assert {k.name: v for k, v in DECLARED_LEN.items()} == LENGTHS


def test_bit_accounting():
    # six messages, each followed by a 32-byte Ack
    total = 8 * (114 + 32 + 93 + 32 + 177 + 32 + 177 + 32 + 211 + 32 + 155 + 32)
    assert total == 8952
    assert handshake_bits() == 8952
    assert association_bits() == 8 * (114 + 93 + 2 * 32)


def test_fields_fit():
    for kind, fields in BODY_FIELDS.items():
        assert HEADER_LEN + sum(n for _, n in fields) <= DECLARED_LEN[kind]


def test_ack_is_256_bits():
    assert frame_bits(build_message(MessageKind.ACK)).size == 256


def test_golden_ack_layout():
    msg = build_message(MessageKind.ACK, src=bytes.fromhex("020000000006"), dst=bytes.fromhex("020000000000"), acked=b"\x03", status=b"\x00")
    expected = bytes.fromhex("070020" "020000000006" "020000000000" "03" "00") + bytes(32 - 17)
    assert msg.payload == expected


def test_golden_h2_header_and_offsets():
    nonce = bytes(range(32))
    msg = build_message(MessageKind.H2, nonce=nonce, replay=(1).to_bytes(8, "big"), mic=b"\xaa" * 16)
    p = msg.payload
    assert p[:3] == bytes.fromhex("0400b1")
    assert p[15:23] == (1).to_bytes(8, "big")
    assert p[23:55] == nonce
    assert p[55:71] == b"\xaa" * 16
    assert p[71:] == bytes(177 - 71)


def test_msb_first():
    bits = frame_bits(build_message(MessageKind.ACK))
    # kind 7 = 0b00000111
    assert list(bits[:8]) == [0, 0, 0, 0, 0, 1, 1, 1]


kinds = st.sampled_from(list(MessageKind))


@st.composite
def messages(draw):
    kind = draw(kinds)
    fields = {name: draw(st.binary(min_size=n, max_size=n)) for name, n in BODY_FIELDS[kind]}
    return build_message(kind, **fields)


@given(messages())
def test_round_trip(msg):
    back = unframe_bits(frame_bits(msg))
    assert back == msg
    assert back.fields == msg.fields


@given(messages(), st.integers(1, 64))
def test_truncation_detected(msg, cut):
    bits = frame_bits(msg)
    with pytest.raises(LengthMismatch):
        unframe_bits(bits[: bits.size - 8 * cut])


def test_bad_headers():
    with pytest.raises(UnknownKind):
        parse_header(bytes([9, 0, 32]))
    with pytest.raises(LengthMismatch):
        parse_header(bytes([7, 0, 33]))
    with pytest.raises(LengthMismatch):
        unframe_bits(np.zeros(7, dtype=np.uint8))
    with pytest.raises(LengthMismatch):
        build_message(MessageKind.ACK, src=b"\x00")
