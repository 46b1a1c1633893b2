"""Single-bus DC microgrid: converter units, resistive load, steady-state solvers.

Every unit hangs off the common bus through its own distribution line.  A VSC
unit is a Thevenin source (droop reference behind the virtual resistance), a
CSC unit is an ideal current injection.  The network is linear, so the steady
state has a closed form; ``solve_steady_state_dense`` builds the full modified
nodal system instead and exists as an independent cross-check.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import NonPositiveResistance, NoVoltageSource, SingularSystem

SOLVER_RTOL = 1e-9


class Mode(str, enum.Enum):
    VSC = "VSC"
    CSC = "CSC"


@dataclass(frozen=True)
class DerUnit:
    """One converter.

    ``x`` is the droop reference voltage, ``r`` the virtual resistance and
    ``r_line`` the line resistance to the bus.  ``gamma_offset`` is the power
    talk deviation currently applied on top of the reference (0 unless the
    unit is transmitting).  ``i_csc`` only matters in CSC mode.
    """

    id: int
    mode: Mode = Mode.VSC
    x: float = 48.0
    r: float = 0.2
    r_line: float = 0.2
    i_csc: float = 0.0
    gamma_offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if not self.x > 0:
            raise NonPositiveResistance(f"unit {self.id}: reference voltage must be > 0, got {self.x}")
        if self.r_line < 0:
            raise NonPositiveResistance(f"unit {self.id}: r_line must be >= 0, got {self.r_line}")
        if self.mode is Mode.VSC and not self.r > 0:
            raise NonPositiveResistance(f"unit {self.id}: virtual resistance must be > 0, got {self.r}")

    @property
    def is_vsc(self) -> bool:
        return self.mode is Mode.VSC

    def with_gamma(self, gamma_offset: float) -> "DerUnit":
        return replace(self, gamma_offset=gamma_offset)


@dataclass(frozen=True)
class LoadModel:
    """Aggregate resistive load; ``math.inf`` means open circuit."""

    r_load: float

    def __post_init__(self):
        if not self.r_load > 0:
            raise NonPositiveResistance(f"r_load must be > 0, got {self.r_load}")


@dataclass(frozen=True)
class GridSteadyState:
    v_bus: float
    ids: tuple[int, ...]
    v: tuple[float, ...]
    i: tuple[float, ...]

    def index(self, unit_id: int) -> int:
        return self.ids.index(unit_id)

    def voltage(self, unit_id: int) -> float:
        return self.v[self.ids.index(unit_id)]

    def current(self, unit_id: int) -> float:
        return self.i[self.ids.index(unit_id)]


def source_voltage(unit: DerUnit, offsets: Mapping[int, float] | None = None) -> float:
    """Effective droop reference: x + power talk deviation + secondary offsets."""
    extra = offsets.get(unit.id, 0.0) if offsets else 0.0
    return unit.x + unit.gamma_offset + extra


def _check(units: Sequence[DerUnit]) -> None:
    if not any(u.is_vsc for u in units):
        raise NoVoltageSource("bus voltage is undefined without at least one VSC unit")


def solve_steady_state(
    units: Sequence[DerUnit],
    load: LoadModel,
    offsets: Mapping[int, float] | None = None,
) -> GridSteadyState:
    """Closed-form steady state of the star network.

    Each VSC contributes conductance 1/(r + r_line) behind its effective
    reference; CSC units inject a fixed current.  ``offsets`` maps unit id to
    the additive secondary correction (δx^v + δx_u^c) for that unit.
    """
    _check(units)
    g_sum = 0.0
    inj = 0.0
    for u in units:
        if u.is_vsc:
            g = 1.0 / (u.r + u.r_line)
            g_sum += g
            inj += g * source_voltage(u, offsets)
        else:
            inj += u.i_csc
    v_bus = inj / (1.0 / load.r_load + g_sum)

    v, i = [], []
    for u in units:
        if u.is_vsc:
            cur = (source_voltage(u, offsets) - v_bus) / (u.r + u.r_line)
        else:
            cur = u.i_csc
        i.append(cur)
        v.append(v_bus + u.r_line * cur)
    return GridSteadyState(v_bus, tuple(u.id for u in units), tuple(v), tuple(i))


def solve_steady_state_dense(
    units: Sequence[DerUnit],
    load: LoadModel,
    offsets: Mapping[int, float] | None = None,
) -> GridSteadyState:
    """Modified nodal analysis of the same circuit, solved with a dense LU.

    Unknowns are ``[v_bus, v_term_0..v_term_{n-1}, i_line_0..i_line_{n-1}]``.
    Line currents are explicit unknowns so that ``r_line = 0`` stays regular.
    """
    _check(units)
    n = len(units)
    size = 1 + 2 * n
    a = np.zeros((size, size))
    b = np.zeros(size)
    bus = 0
    # KCL at the bus: sum of line currents leaves through the load.
    a[bus, bus] = -1.0 / load.r_load if math.isfinite(load.r_load) else 0.0
    for k, u in enumerate(units):
        term, cur = 1 + k, 1 + n + k
        a[bus, cur] += 1.0
        # line branch: v_term - v_bus - r_line * i = 0
        row = 1 + n + k
        a[row, term] = 1.0
        a[row, bus] = -1.0
        a[row, cur] = -u.r_line
        # KCL at the converter terminal
        if u.is_vsc:
            a[term, term] = 1.0 / u.r
            a[term, cur] = 1.0
            b[term] = source_voltage(u, offsets) / u.r
        else:
            a[term, cur] = 1.0
            b[term] = u.i_csc
    try:
        sol = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(sol)):
        raise SingularSystem("non-finite nodal solution")
    return GridSteadyState(
        float(sol[bus]),
        tuple(u.id for u in units),
        tuple(float(x) for x in sol[1 : 1 + n]),
        tuple(float(x) for x in sol[1 + n :]),
    )


def observed_voltage(state: GridSteadyState, unit_id: int, observe: str = "terminal") -> float:
    if observe == "terminal":
        return state.voltage(unit_id)
    if observe == "bus":
        return state.v_bus
    raise ValueError(f"observe must be 'terminal' or 'bus', got {observe!r}")


def voltage_deviation(
    units: Sequence[DerUnit],
    load: LoadModel,
    offsets: Mapping[int, float] | None,
    tx_id: int,
    bit: int,
    gamma: float,
    observe: str = "terminal",
) -> dict[int, float]:
    """|v_j(±γ at tx) − v_j(γ=0)| for every unit j other than the transmitter.

    Bit 1 applies +γ, bit 0 applies −γ.
    """
    tx = next((u for u in units if u.id == tx_id), None)
    if tx is None or not tx.is_vsc:
        raise ValueError(f"transmitter {tx_id} must be a VSC unit in the grid")
    quiet = [u.with_gamma(0.0) if u.id == tx_id else u for u in units]
    sign = 1.0 if bit else -1.0
    active = [u.with_gamma(sign * gamma) if u.id == tx_id else u for u in quiet]
    base = solve_steady_state(quiet, load, offsets)
    dev = solve_steady_state(active, load, offsets)
    return {
        u.id: abs(observed_voltage(dev, u.id, observe) - observed_voltage(base, u.id, observe))
        for u in units
        if u.id != tx_id
    }


def self_deviation(
    units: Sequence[DerUnit],
    load: LoadModel,
    offsets: Mapping[int, float] | None,
    tx_id: int,
    bit: int,
    gamma: float,
    observe: str = "terminal",
) -> float:
    """Deviation the transmitter sees at its own terminal for its own ±γ."""
    quiet = [u.with_gamma(0.0) if u.id == tx_id else u for u in units]
    sign = 1.0 if bit else -1.0
    active = [u.with_gamma(sign * gamma) if u.id == tx_id else u for u in quiet]
    base = solve_steady_state(quiet, load, offsets)
    dev = solve_steady_state(active, load, offsets)
    return abs(observed_voltage(dev, tx_id, observe) - observed_voltage(base, tx_id, observe))


def kcl_residual(state: GridSteadyState, load: LoadModel) -> float:
    drawn = 0.0 if math.isinf(load.r_load) else state.v_bus / load.r_load
    return abs(math.fsum(state.i) - drawn)
