"""Scenario configuration: dataclasses plus a YAML reader/writer.

Times in the file are in seconds except ``duration`` (slots).  The Poisson
load-change rate ``load.poisson_rate`` is per power talk slot.  See
``docs/config.md`` for the full grammar.
"""

from __future__ import annotations

import dataclasses
import math
import types
import typing
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from ..errors import ConfigError
from ..grid import DerUnit, Mode
from ..phy import PhyConfig
from ..protocol.messages import MessageKind
from ..protocol.schedule import ScheduleConfig

BUNDLED = ("paper_fig5", "paper_fig6", "paper_fig7", "paper_mu")
HANDSHAKE_KINDS = ("H1", "H2", "H3", "H4", "ACK", "ASSOC_REQUEST", "ASSOC_RESPONSE")


@dataclass
class UnitSpec:
    id: int
    mode: str = "VSC"
    x: float = 48.0
    r: float = 0.2
    r_line: float = 0.2
    i_csc: float = 0.0

    def to_unit(self) -> DerUnit:
        return DerUnit(self.id, Mode(self.mode), self.x, self.r, self.r_line, self.i_csc)


@dataclass
class GridSpec:
    r_load: float = 1.5
    units: list[UnitSpec] = field(default_factory=list)


@dataclass
class IncomingSpec:
    unit: UnitSpec
    request_time: float = 0.0
    passphrase: str | None = None  # None: the network passphrase (legitimate DER)
    mac: str = "02:00:00:00:00:06"
    switch_low: float | None = None  # CSC units switch to VSC below this bus voltage


@dataclass
class LoadStep:
    time: float
    r_load: float | None = None
    factor: float | None = None


@dataclass
class LoadProgram:
    steps: list[LoadStep] = field(default_factory=list)
    poisson_rate: float = 0.0
    factor_low: float = 0.7
    factor_high: float = 1.3
    r_load_floor: float = 0.2


@dataclass
class PhySpec:
    gamma: float = 0.01
    t_pt: float = 0.01
    tau: float = 2.35e-3
    nu: float = 50e6
    eta: float = 8.58e-2
    m_blank: int = 4
    s_slots: int = 5
    observe: str = "terminal"

    def to_phy(self) -> PhyConfig:
        return PhyConfig(**dataclasses.asdict(self))


@dataclass
class ProtocolSpec:
    D: int = 434
    R: int = 1357
    L: int = 1
    ptarch_offset: float = 0.0
    ssid: str = "dc-microgrid"
    passphrase: str = "power talk network key"
    cc_id: int = 0
    cc_mac: str = "02:00:00:00:00:00"
    max_attempts: int = 1
    repetition: bool = False
    hash_name: str = "sha1"


@dataclass
class ControlSpec:
    v_ref: float = 48.0
    kp_v: float = 0.05
    ki_v: float = 0.5
    kp_c: float = 0.02
    ki_c: float = 0.2
    t_tc: float = 300.0
    t_sc: float | None = None  # optional consistency check against S*T^pt
    secondary: bool = True


@dataclass
class AttackSpec:
    target: str
    mode: str = "corrupt_tag"
    occurrence: int = 0


@dataclass
class LinkSpec:
    tx: int = 1
    rx: int = 0


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    seed: int = 0
    duration: int = 1000
    grid: GridSpec = field(default_factory=GridSpec)
    incoming: IncomingSpec | None = None
    load: LoadProgram = field(default_factory=LoadProgram)
    phy: PhySpec = field(default_factory=PhySpec)
    protocol: ProtocolSpec = field(default_factory=ProtocolSpec)
    control: ControlSpec = field(default_factory=ControlSpec)
    attack: list[AttackSpec] = field(default_factory=list)
    link: LinkSpec | None = None
    stop_after_handshake: bool = False

    # derived quantities -------------------------------------------------
    @property
    def t_pt(self) -> float:
        return self.phy.t_pt

    def slots(self, seconds: float) -> int:
        return int(round(seconds / self.phy.t_pt))

    def units(self) -> list[DerUnit]:
        out = [u.to_unit() for u in self.grid.units]
        if self.incoming is not None:
            out.append(self.incoming.unit.to_unit())
        return out

    def schedule(self) -> ScheduleConfig:
        return ScheduleConfig(
            D=self.protocol.D,
            R=self.protocol.R,
            L=self.protocol.L,
            S=self.phy.s_slots,
            tertiary_slots=self.slots(self.control.t_tc),
            offset_slots=self.slots(self.protocol.ptarch_offset),
            bits_per_symbol_slots=3 if self.protocol.repetition else 1,
        )

    def link_pair(self) -> tuple[int, int]:
        if self.link is not None:
            return self.link.tx, self.link.rx
        if self.incoming is not None:
            return self.incoming.unit.id, self.protocol.cc_id
        return LinkSpec().tx, self.protocol.cc_id

    def validate(self, lines: dict[str, int] | None = None) -> None:
        _validate(self, lines or {})


# ---------------------------------------------------------------------------
# validation


def _err(msg, path, lines):
    raise ConfigError(msg, field=path, line=lines.get(path))


def _validate(c: ScenarioConfig, lines: dict[str, int]) -> None:
    if c.duration < 1:
        _err("must be >= 1 slot", "duration", lines)
    if not c.grid.units:
        _err("at least one unit is required", "grid.units", lines)
    if not c.grid.r_load > 0:
        _err("must be > 0", "grid.r_load", lines)
    try:
        phy = c.phy.to_phy()
    except ValueError as exc:
        _err(str(exc), "phy", lines)
    ids = []
    for k, u in enumerate(c.grid.units + ([c.incoming.unit] if c.incoming else [])):
        path = f"grid.units[{k}]" if k < len(c.grid.units) else "incoming.unit"
        if u.mode not in ("VSC", "CSC"):
            _err(f"mode must be VSC or CSC, got {u.mode!r}", f"{path}.mode", lines)
        try:
            unit = u.to_unit()
        except ValueError as exc:
            _err(str(exc), path, lines)
        if unit.is_vsc:
            try:
                phy.check_gamma(unit.x)
            except ValueError as exc:
                _err(str(exc), "phy.gamma", lines)
        ids.append(u.id)
    if len(set(ids)) != len(ids):
        _err(f"unit ids must be unique, got {ids}", "grid.units", lines)
    vsc = {u.id for u in c.grid.units if u.mode == "VSC"}
    if c.protocol.cc_id not in vsc:
        _err(f"CC unit {c.protocol.cc_id} must be a VSC unit of the grid", "protocol.cc_id", lines)
    if c.incoming is not None:
        if c.incoming.unit.mode == "CSC" and c.incoming.switch_low is None:
            _err("a CSC incoming unit needs switch_low to ever join", "incoming.switch_low", lines)
        if c.incoming.request_time < 0:
            _err("must be >= 0", "incoming.request_time", lines)
        _mac(c.incoming.mac, "incoming.mac", lines)
    _mac(c.protocol.cc_mac, "protocol.cc_mac", lines)
    if c.phy.m_blank < 1 and c.incoming is not None:
        _err("the engine needs at least one blank slot to recalibrate", "phy.m_blank", lines)
    lp = c.load
    if lp.poisson_rate < 0:
        _err("must be >= 0", "load.poisson_rate", lines)
    if not 0 < lp.factor_low <= lp.factor_high:
        _err("need 0 < factor_low <= factor_high", "load.factor_low", lines)
    if not lp.r_load_floor > 0:
        _err("must be > 0", "load.r_load_floor", lines)
    for k, st in enumerate(lp.steps):
        if (st.r_load is None) == (st.factor is None):
            _err("give exactly one of r_load or factor", f"load.steps[{k}]", lines)
        if st.r_load is not None and not st.r_load > 0:
            _err("must be > 0", f"load.steps[{k}].r_load", lines)
        if st.factor is not None and not st.factor > 0:
            _err("must be > 0", f"load.steps[{k}].factor", lines)
    ctl = c.control
    if ctl.t_sc is not None and not math.isclose(ctl.t_sc, phy.t_sc, rel_tol=1e-9):
        _err(f"T^sc={ctl.t_sc} must equal S*T^pt={phy.t_sc}", "control.t_sc", lines)
    if abs(ctl.t_tc / c.phy.t_pt - c.slots(ctl.t_tc)) > 1e-6:
        _err("must be a whole number of slots", "control.t_tc", lines)
    if c.protocol.max_attempts < 1:
        _err("must be >= 1", "protocol.max_attempts", lines)
    for k, a in enumerate(c.attack):
        if a.target.upper() not in HANDSHAKE_KINDS:
            _err(f"unknown message kind {a.target!r}", f"attack[{k}].target", lines)
        if a.mode not in ("corrupt_tag", "replace_nonce"):
            _err(f"unknown attack mode {a.mode!r}", f"attack[{k}].mode", lines)
        if a.mode == "replace_nonce" and a.target.upper() not in ("H1", "H2", "H3"):
            _err("replace_nonce needs a message carrying a nonce (H1..H3)", f"attack[{k}].mode", lines)
        if a.target.upper() in ("ASSOC_REQUEST", "ASSOC_RESPONSE") and a.mode == "corrupt_tag":
            _err("association frames carry no confirmation tag", f"attack[{k}].target", lines)
    if c.incoming is not None:
        try:
            c.schedule().validate()
        except ConfigError as exc:
            raise ConfigError(str(exc).split(": ", 1)[-1], field=exc.field, line=lines.get(exc.field)) from None
        period = c.schedule().period_slots
        if c.duration < period:
            _err(f"must cover one PTARCh period ({period} slots)", "duration", lines)


def _mac(text: str, path: str, lines) -> bytes:
    try:
        raw = bytes.fromhex(text.replace(":", ""))
    except ValueError:
        raw = b""
    if len(raw) != 6:
        _err(f"not a 6-byte MAC address: {text!r}", path, lines)
    return raw


def mac_bytes(text: str) -> bytes:
    return bytes.fromhex(text.replace(":", ""))


def attack_kind(a: AttackSpec) -> MessageKind:
    return MessageKind[a.target.upper()]


# ---------------------------------------------------------------------------
# dict <-> dataclass


def _strip_optional(tp):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        return args[0], True
    return tp, False


def _convert(tp, value, path, lines):
    tp, optional = _strip_optional(tp)
    if value is None:
        if optional:
            return None
        _err("must not be empty", path, lines)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            _err(f"expected a mapping, got {type(value).__name__}", path, lines)
        return _from_dict(tp, value, path, lines)
    origin = typing.get_origin(tp)
    if origin is list:
        if not isinstance(value, list):
            _err(f"expected a list, got {type(value).__name__}", path, lines)
        (item,) = typing.get_args(tp)
        return [_convert(item, v, f"{path}[{k}]", lines) for k, v in enumerate(value)]
    if tp is bool:
        if not isinstance(value, bool):
            _err(f"expected true/false, got {value!r}", path, lines)
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            _err(f"expected an integer, got {value!r}", path, lines)
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            _err(f"expected a number, got {value!r}", path, lines)
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            _err(f"expected a string, got {value!r}", path, lines)
        return value
    raise TypeError(f"unsupported config type {tp}")


def _from_dict(cls, data: dict, path: str, lines: dict[str, int]):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            sub = f"{path}.{key}" if path else str(key)
            _err(f"unknown field (expected one of {sorted(names)})", sub, lines)
    kwargs = {}
    for f in dataclasses.fields(cls):
        sub = f"{path}.{f.name}" if path else f.name
        if f.name in data:
            kwargs[f.name] = _convert(hints[f.name], data[f.name], sub, lines)
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            _err("required field is missing", sub, lines)
    return cls(**kwargs)


def to_dict(obj) -> Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, list):
        return [to_dict(v) for v in obj]
    return obj


def _line_map(node, path="", out=None) -> dict[str, int]:
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key, val in node.value:
            sub = f"{path}.{key.value}" if path else str(key.value)
            out[sub] = key.start_mark.line + 1
            _line_map(val, sub, out)
    elif isinstance(node, yaml.SequenceNode):
        for k, val in enumerate(node.value):
            sub = f"{path}[{k}]"
            out[sub] = val.start_mark.line + 1
            _line_map(val, sub, out)
    return out


def parse_yaml(text: str) -> tuple[dict, dict[str, int]]:
    """YAML mapping plus a map from dotted field path to source line."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", line=mark.line + 1 if mark else None) from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping")
    return data, _line_map(node)


def loads(text: str) -> ScenarioConfig:
    data, lines = parse_yaml(text)
    cfg = _from_dict(ScenarioConfig, data, "", lines)
    cfg.validate(lines)
    return cfg


def dumps(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=False, width=100)


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("powertalk") / "scenarios" / f"{name}.yaml"))


def load(path_or_name: str | Path) -> ScenarioConfig:
    """Read a scenario file, or a bundled scenario by name (``paper_fig5`` ...)."""
    p = Path(path_or_name)
    if not p.exists() and str(path_or_name) in BUNDLED:
        p = bundled_path(str(path_or_name))
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc.strerror}") from None
    return loads(text)
