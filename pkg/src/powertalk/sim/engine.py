"""Slot-granular co-simulation of grid, secondary control, power talk PHY and handshake.

Per slot, in order:

1. scheduled and Poisson load events,
2. window bookkeeping (PTARCh / PTHaCh / secondary on),
3. a secondary control step on secondary-period boundaries when no power
   talk window is active,
4. the steady state for this slot's reference deviations,
5. noisy observations at the two power talk units, load-change checks,
   bit detection or blank-slot recalibration,
6. protocol steps when a message finishes.

Continuous dynamics are collapsed to one steady state per slot; the settling
interval only enters through the sample count of the slot average.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from ..control import (
    SecondaryGains,
    SecondaryReport,
    SecondaryState,
    TertiaryStub,
    mode_switch,
    secondary_step,
    tertiary_exchange,
)
from ..grid import LoadModel, Mode, kcl_residual, observed_voltage, solve_steady_state
from ..phy import DetectorState, SlotObservation, detect, detect_load_change, modulate, recalibrate
from ..protocol.crypto import derive_pmk
from ..protocol.messages import MessageKind, frame_bits, unframe_bits
from ..protocol.schedule import Scheduler, WindowKind
from ..protocol.session import HandshakeSession, Role, State, step, tamper
from .config import ScenarioConfig, attack_kind, mac_bytes
from .eventlog import EventLog

INVARIANT_RTOL = 1e-9
LOAD_BLOCK = 4096


def poisson_count(u: float, lam: float) -> int:
    """Poisson(lam) variate by inverse CDF of one uniform.

    For a fixed ``u`` the count is non-decreasing in ``lam``, so runs that
    share a seed see nested load-event sets as the rate grows.
    """
    k = 0
    p = math.exp(-lam)
    cdf = p
    while u >= cdf and k < 1000:
        k += 1
        p *= lam / k
        cdf += p
    return k


@dataclass
class RunMetrics:
    handshake_completed: bool = False
    completion_time: float | None = None
    access_slot: int | None = None
    completion_slot: int | None = None
    bit_errors: int = 0
    bits_sent: int = 0
    load_changes: int = 0
    load_change_detections: int = 0
    recalibrations: int = 0
    attempts: int = 0
    failure: str | None = None
    invariant_violations: int = 0
    keys_installed: bool = False
    trace_time: list[float] = field(default_factory=list)
    voltage_trace: list[float] = field(default_factory=list)
    current_traces: dict[int, list[float]] = field(default_factory=dict)

    def summary(self) -> str:
        rows = [
            ("handshake_completed", self.handshake_completed),
            ("completion_time", self.completion_time),
            ("access_slot", self.access_slot),
            ("completion_slot", self.completion_slot),
            ("attempts", self.attempts),
            ("failure", self.failure),
            ("keys_installed", self.keys_installed),
            ("bits_sent", self.bits_sent),
            ("bit_errors", self.bit_errors),
            ("load_changes", self.load_changes),
            ("load_change_detections", self.load_change_detections),
            ("recalibrations", self.recalibrations),
            ("invariant_violations", self.invariant_violations),
        ]
        if self.voltage_trace:
            rows.append(("final_v_bus", self.voltage_trace[-1]))
            finals = [tr[-1] for tr in self.current_traces.values()]
            rows.append(("final_current_spread", max(finals) - min(finals)))
        return "".join(f"{k}: {'null' if v is None else (repr(v) if isinstance(v, float) else v)}\n" for k, v in rows)

    def trace_csv(self) -> str:
        ids = sorted(self.current_traces)
        head = "time,v_bus," + ",".join(f"i_{u}" for u in ids)
        out = [head]
        for k, t in enumerate(self.trace_time):
            row = [repr(t), repr(self.voltage_trace[k])] + [repr(self.current_traces[u][k]) for u in ids]
            out.append(",".join(row))
        return "\n".join(out) + "\n"


@dataclass
class _Link:
    """Half-duplex bit pipe between the CC and the incoming DER."""

    queue: deque = field(default_factory=deque)
    sender: int | None = None
    receiver: int | None = None
    msg: object = None
    bits: np.ndarray | None = None
    pos: int = 0
    rx_bits: list = field(default_factory=list)
    votes: list = field(default_factory=list)
    blank_left: int = 0
    blank_obs: dict = field(default_factory=dict)

    @property
    def busy(self) -> bool:
        return self.bits is not None


class Engine:
    def __init__(self, config: ScenarioConfig):
        config.validate()
        self.cfg = config
        self.phy = config.phy.to_phy()
        self.S = self.phy.s_slots
        self.units = {u.id: u for u in config.units()}
        self.order = [u.id for u in config.units()]
        self.load = LoadModel(config.grid.r_load)
        self.gains = SecondaryGains(config.control.kp_v, config.control.ki_v, config.control.kp_c, config.control.ki_c)
        self.secondary = SecondaryState(enabled=config.control.secondary)
        self.authenticated = {u.id for u in config.grid.units if u.mode == "VSC"}
        self.log = EventLog()
        self.metrics = RunMetrics()
        self.cc_id = config.protocol.cc_id
        self.incoming_id = config.incoming.unit.id if config.incoming else None
        self.keystore: dict[bytes, tuple[bytes, bytes]] = {}
        self.tertiary = TertiaryStub(config.control.t_tc)
        self.tertiary_slots = config.slots(config.control.t_tc)

        ss = np.random.SeedSequence(config.seed)
        noise_ss, load_ss, proto_ss = ss.spawn(3)
        self.noise_rng = np.random.default_rng(noise_ss)
        load_main, load_extra = load_ss.spawn(2)
        self.load_rng = np.random.default_rng(load_main)
        self.load_extra_rng = np.random.default_rng(load_extra)
        self._load_u = None
        self.proto_rng = np.random.default_rng(proto_ss)

        self.steps = {}
        for st in config.load.steps:
            self.steps.setdefault(config.slots(st.time), []).append(st)

        self.scheduler = Scheduler(config.schedule()) if config.incoming else None
        self.rep = 3 if config.protocol.repetition else 1
        self.request_slot: int | None = None
        if config.incoming is not None and self.units[self.incoming_id].is_vsc:
            self.request_slot = config.slots(config.incoming.request_time)
        self.sta: HandshakeSession | None = None
        self.cc: HandshakeSession | None = None
        self.link = _Link()
        self.pt_units = [self.cc_id] + ([self.incoming_id] if self.incoming_id is not None else [])
        self.history = {u: deque(maxlen=max(self.phy.m_blank, 1)) for u in self.pt_units}
        self.thresholds: dict[int, float] = {}
        self.sent_counts: dict[MessageKind, int] = {}
        self.attacks = [(attack_kind(a), a.mode, a.occurrence) for a in config.attack]
        self.window_kind = WindowKind.SECONDARY_ON
        self._solve_cache: dict = {}
        self._dev_cache: dict = {}
        self._done = False

        pmk_net = derive_pmk(config.protocol.passphrase, config.protocol.ssid)
        sta_pass = config.incoming.passphrase if config.incoming and config.incoming.passphrase is not None else config.protocol.passphrase
        self.pmk_cc = pmk_net
        self.pmk_sta = derive_pmk(sta_pass, config.protocol.ssid)
        self.gtk = self.proto_rng.bytes(32)

    # -- grid helpers ------------------------------------------------------
    def offsets(self) -> dict[int, float]:
        return {u: self.secondary.offset(u) for u in self.authenticated if self.units[u].is_vsc}

    def _invalidate(self) -> None:
        self._solve_cache.clear()
        self._dev_cache.clear()

    def solve(self, tx: int | None = None, gamma: float = 0.0):
        key = (tx, gamma)
        st = self._solve_cache.get(key)
        if st is None:
            grid = [self.units[u].with_gamma(gamma) if u == tx else self.units[u] for u in self.order]
            st = solve_steady_state(grid, self.load, self.offsets())
            self._solve_cache[key] = st
        return st

    def separations(self, tx: int) -> dict[int, tuple[float, float]]:
        """(Δv(0), Δv(1)) seen by each power talk unit when ``tx`` transmits."""
        out = self._dev_cache.get(tx)
        if out is None:
            g = self.phy.gamma
            obs = self.phy.observe
            base, lo, hi = self.solve(), self.solve(tx, -g), self.solve(tx, g)
            out = {}
            for u in self.pt_units:
                v0 = observed_voltage(base, u, obs)
                out[u] = (abs(v0 - observed_voltage(lo, u, obs)), abs(observed_voltage(hi, u, obs) - v0))
            self._dev_cache[tx] = out
        return out

    # -- load process ------------------------------------------------------
    def _set_load(self, n: int, r_new: float, cause: str) -> None:
        old = self.load.r_load
        self.load = LoadModel(r_new)
        self._invalidate()
        self.metrics.load_changes += 1
        self.log.add(n, "load_change", cause=cause, r_old=old, r_new=r_new)

    def _load_events(self, n: int) -> None:
        for st in self.steps.get(n, ()):
            r = st.r_load if st.r_load is not None else self.load.r_load * st.factor
            self._set_load(n, r, "scheduled")
        lp = self.cfg.load
        if lp.poisson_rate > 0:
            k = n % LOAD_BLOCK
            if k == 0 or self._load_u is None:
                self._load_u = self.load_rng.random((LOAD_BLOCK, 2))
            u, uf = self._load_u[k]
            count = poisson_count(u, lp.poisson_rate)
            for j in range(count):
                # first factor comes from the per-slot draw, extras from their own stream
                w = uf if j == 0 else self.load_extra_rng.random()
                f = lp.factor_low + (lp.factor_high - lp.factor_low) * float(w)
                self._set_load(n, max(self.load.r_load * f, lp.r_load_floor), "poisson")

    # -- secondary / tertiary ----------------------------------------------
    def _secondary(self, n: int) -> None:
        off = self.window_kind is not WindowKind.SECONDARY_ON or not self.cfg.control.secondary
        if off == (not self.secondary.enabled):
            pass
        elif off:
            self.secondary = self.secondary.with_enabled(False)
            self.log.add(n, "secondary", state="off")
        else:
            self.secondary = self.secondary.with_enabled(True)
            self.log.add(n, "secondary", state="on")
        if n % self.S or not self.secondary.enabled:
            return
        st = self.solve()
        reports = []
        for u in sorted(self.authenticated):
            unit = self.units[u]
            if not unit.is_vsc:
                continue
            k = st.index(u)
            # the unit reports the bus-side voltage of its line (terminal minus line drop)
            reports.append(SecondaryReport(u, st.v[k] - unit.r_line * st.i[k], st.i[k]))
        if reports:
            self.secondary = secondary_step(self.secondary, reports, self.cfg.control.v_ref, self.gains)
            self._invalidate()

    def _snapshot(self, n: int) -> None:
        st = self.solve()
        resid = kcl_residual(st, self.load)
        if resid > INVARIANT_RTOL * max(abs(st.v_bus), 1.0):
            self.metrics.invariant_violations += 1
            self.log.add(n, "invariant_violation", what="kcl", residual=resid)
        t = n * self.phy.t_pt
        self.metrics.trace_time.append(t)
        self.metrics.voltage_trace.append(st.v_bus)
        for u in self.order:
            self.metrics.current_traces.setdefault(u, []).append(st.current(u))
        self.log.add(
            n,
            "snapshot",
            v_bus=st.v_bus,
            i=list(st.i),
            dxv=self.secondary.delta_x_v,
            dxc=[self.secondary.delta_x_c.get(u, 0.0) for u in self.order],
        )

    # -- sessions ----------------------------------------------------------
    def _maybe_switch_mode(self, n: int) -> None:
        inc = self.cfg.incoming
        if inc is None or inc.switch_low is None or n % self.S:
            return
        unit = self.units[self.incoming_id]
        new = mode_switch(unit, self.solve().v_bus, inc.switch_low)
        if new is not unit:
            self.units[self.incoming_id] = new
            self._invalidate()
            self.log.add(n, "mode_switch", unit=unit.id, mode=new.mode.value)
            if new.mode is Mode.VSC and self.request_slot is None:
                self.request_slot = n
                self.log.add(n, "assoc_request_queued", unit=unit.id)

    def _calibrate(self, n: int, unit: int) -> float:
        hist = self.history[unit]
        if not hist:
            st = self.solve()
            hist.append(self.noise_rng.normal(observed_voltage(st, unit, self.phy.observe), self.phy.sigma) if self.phy.eta else observed_voltage(st, unit, self.phy.observe))
        return math.fsum(hist) / len(hist)

    def _start_session(self, n: int) -> None:
        p = self.cfg.protocol
        cc_mac = mac_bytes(p.cc_mac)
        sta_mac = mac_bytes(self.cfg.incoming.mac)
        self.sta = HandshakeSession(Role.STA, self.pmk_sta, sta_mac, cc_mac, self.proto_rng.bytes(32), hash_name=p.hash_name)
        self.cc = HandshakeSession(Role.CC, self.pmk_cc, b"\x00" * 6, cc_mac, self.proto_rng.bytes(32), gtk=self.gtk, hash_name=p.hash_name)
        self.link = _Link()
        for u in self.pt_units:
            self.thresholds[u] = self._calibrate(n, u)
        self.metrics.attempts += 1
        if self.metrics.access_slot is None:
            self.metrics.access_slot = n
        self._session_access = n
        self.log.add(n, "session_start", attempt=self.metrics.attempts, thr_cc=self.thresholds[self.cc_id], thr_sta=self.thresholds[self.incoming_id])
        _, out = step(self.sta)
        self._enqueue(n, self.incoming_id, out)

    def _enqueue(self, n: int, sender: int, msgs) -> None:
        for m in msgs:
            count = self.sent_counts.get(m.kind, 0)
            self.sent_counts[m.kind] = count + 1
            for kind, mode, occ in self.attacks:
                if kind is m.kind and occ == count:
                    m = tamper(m, mode)
                    self.log.add(n, "attack", target=kind.name, mode=mode, occurrence=occ)
            self.link.queue.append((sender, m))

    def _session_of(self, unit: int) -> HandshakeSession:
        return self.cc if unit == self.cc_id else self.sta

    def _next_message(self, n: int) -> None:
        lk = self.link
        if lk.busy or not lk.queue:
            return
        sender, msg = lk.queue.popleft()
        lk.sender = sender
        lk.receiver = self.incoming_id if sender == self.cc_id else self.cc_id
        lk.msg = msg
        lk.bits = frame_bits(msg)
        lk.pos = 0
        lk.rx_bits = []
        lk.votes = []
        self.log.add(n, "msg_tx_start", sender=sender, kind=msg.kind.name, bytes=msg.declared_len)

    def _deliver(self, n: int) -> None:
        lk = self.link
        sent = lk.msg
        receiver = self._session_of(lk.receiver)
        rx = np.array(lk.rx_bits, dtype=np.uint8)
        errors = int(np.count_nonzero(rx != lk.bits))
        lk.bits = None
        try:
            msg = unframe_bits(rx)
        except ValueError as exc:
            receiver.state = State.FAILED
            receiver.failure = f"framing error: {exc}"
            self.log.add(n, "msg_rx", receiver=lk.receiver, kind="?", bit_errors=errors, ok=False)
            return
        self.log.add(n, "msg_rx", receiver=lk.receiver, kind=msg.kind.name, bit_errors=errors, ok=msg == sent)
        before = receiver.state
        _, out = step(receiver, msg)
        for note in receiver.anomalies:
            self.log.add(n, "protocol_anomaly", unit=lk.receiver, note=note)
        receiver.anomalies.clear()
        if receiver.state is not before:
            self.log.add(n, "state", unit=lk.receiver, role=receiver.role.value, old=before.value, new=receiver.state.value)
        if receiver is self.cc and before is State.ASSOC_SENT and receiver.state is State.H1_SENT:
            w = self.scheduler.open_pthach(n + 1)
            self.log.add(n, "window_open", kind=w.kind.value, start=w.start_slot, length=w.length_slots)
        self._enqueue(n, lk.receiver, out)

    def _power_talk_slot(self, n: int) -> None:
        """One slot of the active session: blank, data bit, or idle."""
        lk = self.link
        self._next_message(n)
        phy = self.phy
        if lk.blank_left > 0:
            st = self.solve()
            for u in self.pt_units:
                lk.blank_obs.setdefault(u, []).append(self._observe(st, u, n))
            lk.blank_left -= 1
            if lk.blank_left == 0:
                for u in self.pt_units:
                    self.thresholds[u] = recalibrate(lk.blank_obs[u], phy).threshold
                lk.blank_obs = {}
                self.metrics.recalibrations += 1
                self.log.add(n, "recalibration", thr_cc=self.thresholds[self.cc_id], thr_sta=self.thresholds[self.incoming_id])
            return
        if not lk.busy:
            st = self.solve()
            for u in self.pt_units:
                self._observe(st, u, n)
            return

        bit = int(lk.bits[lk.pos])
        tx, rx = lk.sender, lk.receiver
        st = self.solve(tx, modulate(bit, phy))
        obs_rx = self._observe(st, rx, n)
        obs_tx = self._observe(st, tx, n)
        seps = self.separations(tx)
        det_rx = DetectorState.from_threshold(self.thresholds[rx], *seps[rx])
        det_tx = DetectorState.from_threshold(self.thresholds[tx], *seps[tx])
        if detect_load_change(obs_rx, det_rx, phy) or detect_load_change(obs_tx, det_tx, phy):
            self.metrics.load_change_detections += 1
            lk.blank_left = phy.m_blank
            lk.blank_obs = {}
            lk.votes = []  # the symbol restarts after recalibration
            added = self.scheduler.extend(phy.m_blank + self.rep)
            self.log.add(n, "load_change_detected", blanks=phy.m_blank, extended_periods=added, v_rx=obs_rx.mean_v)
            return
        decided = detect(obs_rx, det_rx)
        lk.votes.append(decided)
        self.log.add(n, "bit", tx=tx, rx=rx, b=bit, d=decided)
        if len(lk.votes) < self.rep:
            return
        decided = 1 if 2 * sum(lk.votes) > len(lk.votes) else 0
        lk.votes = []
        self.metrics.bits_sent += 1
        if decided != bit:
            self.metrics.bit_errors += 1
        lk.rx_bits.append(decided)
        lk.pos += 1
        if lk.pos == len(lk.bits):
            self._deliver(n)

    def _observe(self, st, unit: int, n: int) -> SlotObservation:
        true_v = observed_voltage(st, unit, self.phy.observe)
        v = true_v + self.noise_rng.normal(0.0, self.phy.sigma) if self.phy.eta else true_v
        return SlotObservation(float(v), self.phy.n_samples, n)

    def _end_session(self, n: int, reason: str | None = None) -> None:
        sta, cc = self.sta, self.cc
        if reason is not None:
            for s in (sta, cc):
                if not s.done:
                    s.state = State.FAILED
                    s.failure = reason
        granted = sta.state is State.COMPLETE and cc.state is State.COMPLETE
        causes = [s.failure for s in (cc, sta) if s.failure]
        # the side that rejected a message is the origin; the other only saw the rejecting Ack
        causes.sort(key=lambda c: c.startswith("peer rejected"))
        reason = reason or (causes[0] if causes else None)
        self.log.add(n, "session_end", sta=sta.state.value, cc=cc.state.value, granted=granted, reason=reason or "")
        self.scheduler.close(n)
        self.log.add(n, "window_close", kind=self.scheduler.current.kind.value)
        if granted:
            self.authenticated.add(self.incoming_id)
            self.keystore[sta.sta_mac] = (cc.ptk.raw, cc.gtk)
            self.metrics.handshake_completed = True
            self.metrics.keys_installed = True
            self.metrics.completion_slot = n
            self.metrics.completion_time = (n + 1 - self._session_access) * self.phy.t_pt
            self.request_slot = None
            self._invalidate()
        else:
            self.metrics.failure = reason
            self.metrics.keys_installed = bool(self.keystore)
            if self.metrics.attempts >= self.cfg.protocol.max_attempts:
                self.request_slot = None
            else:
                self.request_slot = n + 1
        self.sta = self.cc = None
        if self.cfg.stop_after_handshake and self.request_slot is None:
            self._done = True

    # -- main loop ---------------------------------------------------------
    def run(self) -> tuple[EventLog, RunMetrics]:
        cfg = self.cfg
        self.log.add(0, "start", name=cfg.name, seed=cfg.seed, units=len(self.order), t_pt=self.phy.t_pt, S=self.S)
        for n in range(cfg.duration):
            self._load_events(n)
            if self.scheduler is not None:
                prev = self.window_kind
                w = self.scheduler.tick(n)
                self.window_kind = w.kind
                if w.kind is not prev and w.start_slot == n and w.kind is WindowKind.PTARCH:
                    self.log.add(n, "window_open", kind=w.kind.value, start=w.start_slot, length=w.length_slots)
                if (
                    w.kind is WindowKind.PTARCH
                    and w.start_slot == n
                    and self.sta is None
                    and self.request_slot is not None
                    and self.request_slot <= n
                ):
                    self._start_session(n)
            if self.tertiary_slots and n % self.tertiary_slots == 0:
                self.tertiary = tertiary_exchange(self.tertiary, {u: u.to_bytes(2, "big") for u in sorted(self.authenticated)})
                self.log.add(n, "tertiary", round=self.tertiary.rounds)
            self._secondary(n)
            self._maybe_switch_mode(n)
            if n % self.S == 0:
                self._snapshot(n)

            if self.sta is not None:
                self._power_talk_slot(n)
                lk = self.link
                if self.sta.done and self.cc.done and not lk.busy and not lk.queue and lk.blank_left == 0:
                    self._end_session(n)
                elif self.scheduler.expires_after(n):
                    self._end_session(n, "window expired")
            else:
                st = self.solve()
                for u in self.pt_units:
                    self.history[u].append(self._observe(st, u, n).mean_v)
                if self.scheduler is not None and self.window_kind is not WindowKind.SECONDARY_ON and self.scheduler.expires_after(n):
                    self.log.add(n, "window_close", kind=self.window_kind.value, void=True)
            if self._done:
                break
        self.log.add(n, "end", completed=self.metrics.handshake_completed)
        return self.log, self.metrics


def run(config: ScenarioConfig) -> tuple[EventLog, RunMetrics]:
    return Engine(config).run()
