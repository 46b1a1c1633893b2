"""Association + four-way handshake state machines for the STA (incoming DER) and the CC.

Each step consumes at most one received message and returns the messages to
send next, in order.  Every received non-Ack message is acknowledged first.
An Ack carries a status byte: a message that fails verification is still
acknowledged (receipt), but with ``ACK_REJECTED``, and the receiving side
moves to FAILED.  The peer fails as soon as it reads the rejecting Ack, so
neither side installs keys after a tampered exchange.
"""

from __future__ import annotations

import enum
import hmac
from dataclasses import dataclass, field

from .crypto import Ptk, derive_ptk, mic, pmkid, unwrap_gtk, wrap_gtk
from .messages import (
    ACK_ACCEPTED,
    ACK_REJECTED,
    TAG_FIELD,
    MessageKind,
    ProtocolMessage,
    build_message,
)

K = MessageKind


class Role(str, enum.Enum):
    STA = "STA"
    CC = "CC"


class State(str, enum.Enum):
    IDLE = "Idle"
    ASSOC_SENT = "AssocSent"
    ASSOC_DONE = "AssocDone"
    H1_SENT = "H1Sent"
    H2_SENT = "H2Sent"
    H3_SENT = "H3Sent"
    H4_SENT = "H4Sent"
    COMPLETE = "Complete"
    FAILED = "Failed"


TERMINAL = (State.COMPLETE, State.FAILED)


@dataclass
class HandshakeSession:
    role: Role
    pmk: bytes
    sta_mac: bytes
    cc_mac: bytes
    nonce: bytes  # own nonce: ANonce for the CC, SNonce for the STA
    gtk: bytes | None = None  # CC: group key to hand out; STA: filled on success
    hash_name: str = "sha1"
    anonce: bytes | None = None
    snonce: bytes | None = None
    ptk: Ptk | None = None
    state: State = State.IDLE
    replay: int = 0
    awaiting_ack: MessageKind | None = None
    installed: bool = False
    failure: str | None = None
    bit_cursor: int = 0
    anomalies: list[str] = field(default_factory=list)
    _pending_gtk: bytes | None = None

    def __post_init__(self):
        self.role = Role(self.role)
        if self.role is Role.CC:
            self.anonce = self.nonce
        else:
            self.snonce = self.nonce

    @property
    def done(self) -> bool:
        return self.state in TERMINAL

    @property
    def own_mac(self) -> bytes:
        return self.sta_mac if self.role is Role.STA else self.cc_mac

    @property
    def peer_mac(self) -> bytes:
        return self.cc_mac if self.role is Role.STA else self.sta_mac

    def _fail(self, reason: str) -> None:
        self.state = State.FAILED
        self.failure = reason
        self.ptk = None
        self._pending_gtk = None
        if self.role is Role.STA:
            self.gtk = None
        self.installed = False

    def _ack(self, kind: MessageKind, status: int) -> ProtocolMessage:
        return build_message(
            K.ACK, src=self.own_mac, dst=self.peer_mac, acked=bytes([int(kind)]), status=bytes([status])
        )

    def _send(self, msg: ProtocolMessage) -> ProtocolMessage:
        self.awaiting_ack = msg.kind
        return msg


def _with_mic(msg: ProtocolMessage, kck: bytes, hash_name: str) -> ProtocolMessage:
    blank = msg.with_field("mic", bytes(16))
    return blank.with_field("mic", mic(kck, blank.payload, hash_name))


def _mic_ok(msg: ProtocolMessage, kck: bytes, hash_name: str) -> bool:
    expected = mic(kck, msg.with_field("mic", bytes(16)).payload, hash_name)
    return hmac.compare_digest(expected, msg.field("mic"))


def _replay(n: int) -> bytes:
    return n.to_bytes(8, "big")


def _handle_ack(s: HandshakeSession, msg: ProtocolMessage) -> bool:
    """Consume an Ack; returns True if it matched the message we were waiting on."""
    acked = msg.field("acked")[0]
    if s.awaiting_ack is None or acked != int(s.awaiting_ack):
        s.anomalies.append(f"UnexpectedMessage: Ack for kind {acked} while awaiting {s.awaiting_ack}")
        return False
    s.awaiting_ack = None
    if msg.field("status")[0] == ACK_REJECTED:
        s._fail(f"peer rejected {K(acked).name}")
    return True


def sta_step(s: HandshakeSession, incoming: ProtocolMessage | None = None) -> tuple[HandshakeSession, list[ProtocolMessage]]:
    if s.role is not Role.STA:
        raise ValueError("sta_step needs an STA session")
    if s.done:
        if incoming is not None:
            s.anomalies.append(f"UnexpectedMessage: {incoming.kind.name} after {s.state.value}")
        return s, []

    if incoming is None:
        if s.state is State.IDLE:
            s.state = State.ASSOC_SENT
            return s, [s._send(build_message(K.ASSOC_REQUEST, src=s.sta_mac, dst=s.cc_mac))]
        return s, []

    kind = incoming.kind
    if kind is K.ACK:
        if _handle_ack(s, incoming) and s.state is State.H4_SENT and not s.done:
            s.gtk = s._pending_gtk
            s._pending_gtk = None
            s.installed = True
            s.state = State.COMPLETE
        return s, []

    if s.awaiting_ack is not None:
        s.anomalies.append(f"UnexpectedMessage: {kind.name} while awaiting Ack for {s.awaiting_ack.name}")
        return s, []

    if kind is K.ASSOC_RESPONSE and s.state is State.ASSOC_SENT:
        if incoming.field("status")[0] != 0:
            s._fail("association refused")
            return s, [s._ack(kind, ACK_ACCEPTED)]
        s.state = State.ASSOC_DONE
        return s, [s._ack(kind, ACK_ACCEPTED)]

    if kind is K.H1 and s.state is State.ASSOC_DONE:
        if not hmac.compare_digest(incoming.field("pmkid"), pmkid(s.pmk, s.cc_mac, s.sta_mac, s.hash_name)):
            s._fail("InvalidTag: H1 PMKID does not match local PMK")
            return s, [s._ack(kind, ACK_REJECTED)]
        s.anonce = incoming.field("nonce")
        s.replay = int.from_bytes(incoming.field("replay"), "big")
        s.ptk = derive_ptk(s.pmk, s.anonce, s.snonce, s.sta_mac, s.cc_mac, s.hash_name)
        h2 = build_message(K.H2, src=s.sta_mac, dst=s.cc_mac, replay=_replay(s.replay), nonce=s.snonce)
        h2 = _with_mic(h2, s.ptk.kck, s.hash_name)
        s.state = State.H2_SENT
        return s, [s._ack(kind, ACK_ACCEPTED), s._send(h2)]

    if kind is K.H3 and s.state is State.H2_SENT:
        replay = int.from_bytes(incoming.field("replay"), "big")
        if incoming.field("nonce") != s.anonce:
            s._fail("InvalidTag: H3 ANonce differs from H1")
            return s, [s._ack(kind, ACK_REJECTED)]
        if replay <= s.replay or not _mic_ok(incoming, s.ptk.kck, s.hash_name):
            s._fail("InvalidTag: H3 MIC or replay counter check failed")
            return s, [s._ack(kind, ACK_REJECTED)]
        s.replay = replay
        s._pending_gtk = unwrap_gtk(s.ptk.kek, incoming.field("gtk_wrapped"), s.hash_name)
        h4 = _with_mic(build_message(K.H4, src=s.sta_mac, dst=s.cc_mac, replay=_replay(replay)), s.ptk.kck, s.hash_name)
        s.state = State.H4_SENT
        return s, [s._ack(kind, ACK_ACCEPTED), s._send(h4)]

    s.anomalies.append(f"UnexpectedMessage: {kind.name} in state {s.state.value}")
    return s, []


def cc_step(s: HandshakeSession, incoming: ProtocolMessage | None = None) -> tuple[HandshakeSession, list[ProtocolMessage]]:
    if s.role is not Role.CC:
        raise ValueError("cc_step needs a CC session")
    if incoming is None or s.done:
        if incoming is not None:
            s.anomalies.append(f"UnexpectedMessage: {incoming.kind.name} after {s.state.value}")
        return s, []

    kind = incoming.kind
    if kind is K.ACK:
        if not _handle_ack(s, incoming) or s.done:
            return s, []
        if s.state is State.ASSOC_SENT:
            # Ack of the association response: handshake channel is granted, send h1.
            s.state = State.ASSOC_DONE
            s.replay += 1
            h1 = build_message(
                K.H1,
                src=s.cc_mac,
                dst=s.sta_mac,
                replay=_replay(s.replay),
                nonce=s.anonce,
                pmkid=pmkid(s.pmk, s.cc_mac, s.sta_mac, s.hash_name),
            )
            s.state = State.H1_SENT
            return s, [s._send(h1)]
        return s, []

    if s.awaiting_ack is not None:
        s.anomalies.append(f"UnexpectedMessage: {kind.name} while awaiting Ack for {s.awaiting_ack.name}")
        return s, []

    if kind is K.ASSOC_REQUEST and s.state is State.IDLE:
        if incoming.field("dst") != s.cc_mac:
            s.anomalies.append("UnexpectedMessage: association request for another CC")
            return s, []
        s.sta_mac = incoming.field("src")
        s.state = State.ASSOC_SENT
        resp = build_message(K.ASSOC_RESPONSE, src=s.cc_mac, dst=s.sta_mac, status=b"\x00")
        return s, [s._ack(kind, ACK_ACCEPTED), s._send(resp)]

    if kind is K.H2 and s.state is State.H1_SENT:
        s.snonce = incoming.field("nonce")
        ptk = derive_ptk(s.pmk, s.anonce, s.snonce, s.sta_mac, s.cc_mac, s.hash_name)
        if int.from_bytes(incoming.field("replay"), "big") != s.replay or not _mic_ok(incoming, ptk.kck, s.hash_name):
            s._fail("InvalidTag: H2 MIC check failed")
            return s, [s._ack(kind, ACK_REJECTED)]
        s.ptk = ptk
        s.replay += 1
        h3 = build_message(
            K.H3,
            src=s.cc_mac,
            dst=s.sta_mac,
            replay=_replay(s.replay),
            nonce=s.anonce,
            gtk_wrapped=wrap_gtk(ptk.kek, s.gtk, s.hash_name),
        )
        h3 = _with_mic(h3, ptk.kck, s.hash_name)
        s.state = State.H3_SENT
        return s, [s._ack(kind, ACK_ACCEPTED), s._send(h3)]

    if kind is K.H4 and s.state is State.H3_SENT:
        if int.from_bytes(incoming.field("replay"), "big") != s.replay or not _mic_ok(incoming, s.ptk.kck, s.hash_name):
            s._fail("InvalidTag: H4 MIC check failed")
            return s, [s._ack(kind, ACK_REJECTED)]
        s.installed = True
        s.state = State.COMPLETE
        return s, [s._ack(kind, ACK_ACCEPTED)]

    s.anomalies.append(f"UnexpectedMessage: {kind.name} in state {s.state.value}")
    return s, []


def step(s: HandshakeSession, incoming: ProtocolMessage | None = None):
    return sta_step(s, incoming) if s.role is Role.STA else cc_step(s, incoming)


def tamper(msg: ProtocolMessage, mode: str) -> ProtocolMessage:
    """Attacker rewrite of one message.

    ``corrupt_tag`` flips every bit of the confirmation field (PMKID for h1,
    MIC for h2..h4; for an Ack, only the padding, which carries nothing).
    ``replace_nonce`` swaps in a different nonce (h1..h3 only).
    """
    if mode == "corrupt_tag":
        name = TAG_FIELD.get(msg.kind)
        if name is None:
            if msg.kind is K.ACK:
                buf = bytearray(msg.payload)
                buf[-1] ^= 0xFF
                return ProtocolMessage(msg.kind, bytes(buf))
            raise ValueError(f"{msg.kind.name} carries no confirmation tag")
        return msg.with_field(name, bytes(b ^ 0xFF for b in msg.field(name)))
    if mode == "replace_nonce":
        if msg.kind not in (K.H1, K.H2, K.H3):
            raise ValueError(f"{msg.kind.name} carries no nonce")
        return msg.with_field("nonce", bytes(b ^ 0x5A for b in msg.field("nonce")))
    raise ValueError(f"unknown tamper mode {mode!r}")


def run_exchange(sta: HandshakeSession, cc: HandshakeSession, max_messages: int = 64):
    """Message-level driver with a perfect channel; returns the transcript.

    Useful for protocol tests that do not need the power talk physics.
    """
    transcript: list[tuple[Role, ProtocolMessage]] = []
    queue = [(Role.STA, m) for m in sta_step(sta)[1]]
    while queue and len(transcript) < max_messages:
        sender, msg = queue.pop(0)
        transcript.append((sender, msg))
        receiver = cc if sender is Role.STA else sta
        _, out = step(receiver, msg)
        queue.extend((receiver.role, m) for m in out)
    return transcript
