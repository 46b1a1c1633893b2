"""Slot clock for the association channel (PTARCh) and the handshake channel (PTHaCh).

Time is counted in power talk slots; a secondary period is S slots.  The
PTARCh opens every ``period_slots`` = T^tc/L (in slots) starting at
``offset_slots`` and lasts D secondary periods.  Once the association
exchange is acknowledged, the remaining PTARCh is replaced by a PTHaCh of
R secondary periods that starts on the next slot.  Blank-slot recalibration
extends whichever window is active by whole secondary periods.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from ..errors import ConfigError
from .messages import association_bits, handshake_bits


class WindowKind(str, enum.Enum):
    PTARCH = "PTARCh"
    PTHACH = "PTHaCh"
    SECONDARY_ON = "SecondaryOn"


@dataclass(frozen=True)
class ScheduleConfig:
    D: int
    R: int
    L: int
    S: int
    tertiary_slots: int
    offset_slots: int = 0
    bits_per_symbol_slots: int = 1  # 3 with the repetition code

    @property
    def period_slots(self) -> int:
        return self.tertiary_slots // self.L

    def validate(self) -> None:
        for name in ("D", "R", "L", "S"):
            if getattr(self, name) < 1:
                raise ConfigError(f"must be >= 1, got {getattr(self, name)}", field=f"protocol.{name}")
        if self.tertiary_slots % self.L:
            raise ConfigError("T^tc/L must be a whole number of slots", field="protocol.L")
        if self.period_slots % self.S:
            raise ConfigError("PTARCh period must be a whole number of secondary periods", field="protocol.L")
        if self.offset_slots % self.S:
            raise ConfigError("first PTARCh must start on a secondary period boundary", field="protocol.ptarch_offset")
        assoc = association_bits() * self.bits_per_symbol_slots
        if self.D * self.S < assoc:
            raise ConfigError(
                f"PTARCh of D*S = {self.D * self.S} slots cannot carry the {assoc}-slot association exchange",
                field="protocol.D",
            )
        rest = (handshake_bits() - association_bits()) * self.bits_per_symbol_slots
        if self.R * self.S < rest:
            raise ConfigError(
                f"PTHaCh of R*S = {self.R * self.S} slots cannot carry the {rest}-slot four-way handshake",
                field="protocol.R",
            )
        if self.period_slots < (self.D + self.R) * self.S:
            raise ConfigError("PTARCh period is shorter than D+R secondary periods", field="protocol.L")


@dataclass(frozen=True)
class ScheduleWindow:
    kind: WindowKind
    start_slot: int
    length_slots: int
    D: int
    R: int
    L: int

    @property
    def end_slot(self) -> int:
        return self.start_slot + self.length_slots

    @property
    def secondary_off(self) -> bool:
        return self.kind is not WindowKind.SECONDARY_ON


def ptarch_start(now: int, config: ScheduleConfig) -> int | None:
    """Start of the PTARCh occurrence covering ``now``, if any."""
    if now < config.offset_slots:
        return None
    k = (now - config.offset_slots) // config.period_slots
    start = config.offset_slots + k * config.period_slots
    return start if now < start + config.D * config.S else None


def next_ptarch(now: int, config: ScheduleConfig) -> int:
    """First PTARCh start at or after ``now``."""
    if now <= config.offset_slots:
        return config.offset_slots
    k = math.ceil((now - config.offset_slots) / config.period_slots)
    return config.offset_slots + k * config.period_slots


def schedule_slots(now: int, config: ScheduleConfig, pthach: tuple[int, int] | None = None) -> ScheduleWindow:
    """Window active at slot ``now`` when nothing closes early.

    ``pthach`` is the (start, length) of an allocated handshake channel; it
    takes precedence over (and truncates) the PTARCh it grew out of.
    """
    c = config
    if pthach is not None and pthach[0] <= now < pthach[0] + pthach[1]:
        return ScheduleWindow(WindowKind.PTHACH, pthach[0], pthach[1], c.D, c.R, c.L)
    p = ptarch_start(now, c)
    if p is not None:
        length = c.D * c.S
        if pthach is not None and p < pthach[0] < p + length:
            length = pthach[0] - p
        if now < p + length:
            return ScheduleWindow(WindowKind.PTARCH, p, length, c.D, c.R, c.L)
    nxt = next_ptarch(now + 1, c)
    if pthach is not None and now < pthach[0] < nxt:
        nxt = pthach[0]
    return ScheduleWindow(WindowKind.SECONDARY_ON, now, nxt - now, c.D, c.R, c.L)


class Scheduler:
    """Window bookkeeping for the engine: periodic PTARCh, on-demand PTHaCh, early close."""

    def __init__(self, config: ScheduleConfig):
        config.validate()
        self.config = config
        self.current: ScheduleWindow | None = None
        self.extensions = 0

    def tick(self, now: int) -> ScheduleWindow:
        """Window for slot ``now``; opens a PTARCh on its start slot, drops expired windows."""
        c = self.config
        if self.current is not None and now >= self.current.end_slot:
            self.current = None
        if self.current is None and ptarch_start(now, c) == now:
            self.current = ScheduleWindow(WindowKind.PTARCH, now, c.D * c.S, c.D, c.R, c.L)
        if self.current is not None:
            return self.current
        return ScheduleWindow(WindowKind.SECONDARY_ON, now, next_ptarch(now + 1, c) - now, c.D, c.R, c.L)

    def expires_after(self, now: int) -> bool:
        return self.current is not None and now + 1 >= self.current.end_slot

    def open_pthach(self, start: int) -> ScheduleWindow:
        c = self.config
        self.current = ScheduleWindow(WindowKind.PTHACH, start, c.R * c.S, c.D, c.R, c.L)
        return self.current

    def extend(self, slots: int) -> int:
        """Grow the active window by whole secondary periods covering ``slots``; returns periods added."""
        if self.current is None:
            return 0
        periods = -(-slots // self.config.S)
        w = self.current
        self.current = ScheduleWindow(w.kind, w.start_slot, w.length_slots + periods * self.config.S, w.D, w.R, w.L)
        self.extensions += periods
        return periods

    def close(self, now: int) -> None:
        """End the current window after slot ``now``."""
        if self.current is not None:
            w = self.current
            self.current = ScheduleWindow(w.kind, w.start_slot, now + 1 - w.start_slot, w.D, w.R, w.L)
