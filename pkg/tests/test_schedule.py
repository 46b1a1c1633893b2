import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from powertalk.errors import ConfigError
from powertalk.protocol.schedule import (
    ScheduleConfig,
    Scheduler,
    WindowKind,
    next_ptarch,
    ptarch_start,
    schedule_slots,
)

CFG = ScheduleConfig(D=1084, R=3392, L=1, S=2, tertiary_slots=120000, offset_slots=1200)


def test_one_ptarch_per_tertiary_period():
    starts = {ptarch_start(n, CFG) for n in range(0, 3 * 120000, 97)} - {None}
    assert sorted(starts) == [1200, 121200, 241200]


def test_l_divides_period():
    c = ScheduleConfig(D=1084, R=3392, L=2, S=2, tertiary_slots=240000)
    assert next_ptarch(1, c) == 120000


def test_schedule_windows():
    assert schedule_slots(0, CFG).kind is WindowKind.SECONDARY_ON
    w = schedule_slots(1200, CFG)
    assert (w.kind, w.start_slot, w.length_slots) == (WindowKind.PTARCH, 1200, 2168)
    assert w.secondary_off
    assert schedule_slots(1200 + 2168, CFG).kind is WindowKind.SECONDARY_ON
    w = schedule_slots(3400, CFG, pthach=(3368, 6784))
    assert (w.kind, w.end_slot) == (WindowKind.PTHACH, 3368 + 6784)
    w = schedule_slots(3000, CFG, pthach=(3100, 6784))
    assert w.kind is WindowKind.PTARCH and w.end_slot == 3100


def test_validation():
    with pytest.raises(ConfigError):
        ScheduleConfig(D=1000, R=3392, L=1, S=2, tertiary_slots=120000).validate()
    with pytest.raises(ConfigError):
        ScheduleConfig(D=1084, R=3000, L=1, S=2, tertiary_slots=120000).validate()
    with pytest.raises(ConfigError):
        ScheduleConfig(D=1084, R=3392, L=1, S=2, tertiary_slots=8000).validate()
    with pytest.raises(ConfigError):
        ScheduleConfig(D=1084, R=3392, L=7, S=2, tertiary_slots=120000).validate()


def test_scheduler_lifecycle():
    s = Scheduler(CFG)
    assert s.tick(0).kind is WindowKind.SECONDARY_ON
    w = s.tick(1200)
    assert w.kind is WindowKind.PTARCH
    s.open_pthach(3000)
    assert s.tick(3000).kind is WindowKind.PTHACH
    assert s.current.end_slot == 3000 + 6784
    assert s.extend(4) == 2
    assert s.current.end_slot == 3000 + 6784 + 4
    assert s.extend(5) == 3  # partial periods round up
    s.close(5000)
    assert s.expires_after(5000)
    assert s.tick(5001).kind is WindowKind.SECONDARY_ON


def test_void_ptarch_closes_on_time():
    s = Scheduler(CFG)
    for n in range(1200, 1200 + 2168):
        assert s.tick(n).kind is WindowKind.PTARCH
    assert s.expires_after(1200 + 2167)
    assert s.tick(1200 + 2168).kind is WindowKind.SECONDARY_ON


@settings(max_examples=100)
@given(st.integers(0, 10**6))
def test_next_ptarch_is_aligned(now):
    n = next_ptarch(now, CFG)
    assert n >= now and (n - CFG.offset_slots) % CFG.period_slots == 0
    assert n - now <= CFG.period_slots
    assert ptarch_start(n, CFG) == n
