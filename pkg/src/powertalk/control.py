"""Centralized secondary control, tertiary stub and VSC/CSC mode switching.

The secondary controller runs once per secondary period at the CC.  Both
loops are positional discrete PI controllers with gains expressed per
secondary period (no dt scaling):

    δx^v    = Kp_v·e_v + Σ Ki_v·e_v,     e_v = v_ref − mean(ṽ_u)
    δx_u^c  = Kp_c·e_u + Σ Ki_c·e_u,     e_u = mean(ĩ) − ĩ_u
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

from .errors import EmptyReports, NotEnabled
from .grid import DerUnit, Mode


@dataclass(frozen=True)
class SecondaryGains:
    kp_v: float = 0.05
    ki_v: float = 0.5
    kp_c: float = 0.02
    ki_c: float = 0.2


@dataclass(frozen=True)
class SecondaryReport:
    unit_id: int
    v_meas: float
    i_meas: float

    def __post_init__(self):
        if not (math.isfinite(self.v_meas) and math.isfinite(self.i_meas)):
            raise ValueError(f"non-finite report from unit {self.unit_id}")


@dataclass(frozen=True)
class SecondaryState:
    delta_x_v: float = 0.0
    delta_x_c: dict[int, float] = field(default_factory=dict)
    integ_v: float = 0.0
    integ_c: dict[int, float] = field(default_factory=dict)
    enabled: bool = True

    def offset(self, unit_id: int) -> float:
        """Total additive correction for one unit (δx^v + δx_u^c)."""
        return self.delta_x_v + self.delta_x_c.get(unit_id, 0.0)

    def with_enabled(self, enabled: bool) -> "SecondaryState":
        return replace(self, enabled=enabled)


def secondary_step(
    state: SecondaryState,
    reports: Sequence[SecondaryReport],
    v_ref: float,
    gains: SecondaryGains = SecondaryGains(),
) -> SecondaryState:
    if not state.enabled:
        raise NotEnabled("secondary control is switched off; offsets are frozen")
    if not reports:
        raise EmptyReports("secondary step needs at least one report")

    v_mean = math.fsum(r.v_meas for r in reports) / len(reports)
    i_mean = math.fsum(r.i_meas for r in reports) / len(reports)

    e_v = v_ref - v_mean
    integ_v = state.integ_v + gains.ki_v * e_v
    delta_v = gains.kp_v * e_v + integ_v

    integ_c = dict(state.integ_c)
    delta_c = dict(state.delta_x_c)
    for rep in reports:
        e_u = i_mean - rep.i_meas
        integ_c[rep.unit_id] = integ_c.get(rep.unit_id, 0.0) + gains.ki_c * e_u
        delta_c[rep.unit_id] = gains.kp_c * e_u + integ_c[rep.unit_id]
    return SecondaryState(delta_v, delta_c, integ_v, integ_c, True)


def apply_offsets(unit: DerUnit, state: SecondaryState, authenticated: bool = True) -> float:
    """Effective droop reference x_u + δx^v + δx_u^c.

    Units outside secondary control (unauthenticated, or CSC) keep x_u.
    """
    if not authenticated or not unit.is_vsc:
        return unit.x
    return unit.x + state.offset(unit.id)


def mode_switch(
    unit: DerUnit,
    v_bus: float,
    low: float,
    high: float | None = None,
    directive: bool = False,
    vsc_x: float | None = None,
    vsc_r: float | None = None,
) -> DerUnit:
    """Dual-mode rule.

    A CSC unit becomes a VSC when the bus voltage drops below ``low``; the new
    VSC takes ``vsc_x``/``vsc_r`` when given.  A VSC unit only returns to CSC
    on an explicit CC ``directive`` (optionally gated on ``v_bus > high``).
    """
    if unit.mode is Mode.CSC and v_bus < low:
        return replace(
            unit,
            mode=Mode.VSC,
            x=unit.x if vsc_x is None else vsc_x,
            r=unit.r if vsc_r is None else vsc_r,
            gamma_offset=0.0,
        )
    if unit.mode is Mode.VSC and directive and (high is None or v_bus > high):
        return replace(unit, mode=Mode.CSC, gamma_offset=0.0)
    return unit


@dataclass(frozen=True)
class TertiaryStub:
    """Opaque uplink/downlink payload exchange, one round per period."""

    period: float
    z: dict[int, bytes] = field(default_factory=dict)
    q: dict[int, bytes] = field(default_factory=dict)
    rounds: int = 0


def tertiary_exchange(stub: TertiaryStub, uplink: dict[int, bytes]) -> TertiaryStub:
    # The optimization itself is out of scope; the downlink is a digest of the uplink.
    q = {u: hashlib.sha256(z).digest()[:8] for u, z in uplink.items()}
    return TertiaryStub(stub.period, dict(uplink), q, stub.rounds + 1)
