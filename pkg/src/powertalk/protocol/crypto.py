"""Keyed-hash primitives for the handshake (802.11i-style PRF over HMAC).

Not interoperable with real WPA2 frames; only the derivation structure is kept.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass

PTK_LABEL = b"Pairwise key expansion"
KCK_LEN = 16
KEK_LEN = 16
TK_LEN = 16
MIC_LEN = 16


def prf(key: bytes, label: bytes, data: bytes, n_bytes: int, hash_name: str = "sha1") -> bytes:
    out = b""
    i = 0
    while len(out) < n_bytes:
        out += hmac.new(key, label + b"\x00" + data + bytes([i]), hash_name).digest()
        i += 1
    return out[:n_bytes]


def derive_pmk(passphrase: str, ssid: str) -> bytes:
    return hashlib.pbkdf2_hmac("sha1", passphrase.encode(), ssid.encode(), 4096, 32)


@dataclass(frozen=True)
class Ptk:
    kck: bytes
    kek: bytes
    tk: bytes

    @property
    def raw(self) -> bytes:
        return self.kck + self.kek + self.tk


def derive_ptk(pmk: bytes, anonce: bytes, snonce: bytes, sta_mac: bytes, cc_mac: bytes, hash_name: str = "sha1") -> Ptk:
    data = min(sta_mac, cc_mac) + max(sta_mac, cc_mac) + min(anonce, snonce) + max(anonce, snonce)
    raw = prf(pmk, PTK_LABEL, data, KCK_LEN + KEK_LEN + TK_LEN, hash_name)
    return Ptk(raw[:KCK_LEN], raw[KCK_LEN : KCK_LEN + KEK_LEN], raw[KCK_LEN + KEK_LEN :])


def pmkid(pmk: bytes, cc_mac: bytes, sta_mac: bytes, hash_name: str = "sha1") -> bytes:
    return hmac.new(pmk, b"PMK Name" + cc_mac + sta_mac, hash_name).digest()[:16]


def mic(kck: bytes, data: bytes, hash_name: str = "sha1") -> bytes:
    return hmac.new(kck, data, hash_name).digest()[:MIC_LEN]


def _keystream(kek: bytes, n: int, hash_name: str) -> bytes:
    return prf(kek, b"GTK wrap", b"", n, hash_name)


def wrap_gtk(kek: bytes, gtk: bytes, hash_name: str = "sha1") -> bytes:
    ks = _keystream(kek, len(gtk), hash_name)
    return bytes(a ^ b for a, b in zip(gtk, ks))


unwrap_gtk = wrap_gtk
