"""Line-delimited event records.

One record per line::

    <slot>\t<kind>\t<key>=<value> <key>=<value> ...

Floats are written with ``repr`` so a log is byte-identical on replay.
Values never contain spaces (lists are comma-joined).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (bytes, bytearray)):
        return v.hex()
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return str(v).replace(" ", "_")


@dataclass
class EventLog:
    records: list[tuple[int, str, dict]] = field(default_factory=list)

    def add(self, slot: int, kind: str, /, **fields) -> None:
        if self.records and slot < self.records[-1][0]:
            raise ValueError(f"event at slot {slot} after slot {self.records[-1][0]}")
        self.records.append((slot, kind, fields))

    def __len__(self) -> int:
        return len(self.records)

    def of_kind(self, kind: str) -> list[tuple[int, dict]]:
        return [(s, f) for s, k, f in self.records if k == kind]

    def count(self, kind: str) -> int:
        return sum(1 for _, k, _ in self.records if k == kind)

    def lines(self):
        for slot, kind, fields in self.records:
            body = " ".join(f"{k}={_fmt(v)}" for k, v in fields.items())
            yield f"{slot}\t{kind}\t{body}" if body else f"{slot}\t{kind}"

    def dumps(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())


def parse_line(line: str) -> tuple[int, str, dict[str, str]]:
    parts = line.rstrip("\n").split("\t")
    fields = {}
    if len(parts) > 2 and parts[2]:
        for item in parts[2].split(" "):
            k, _, v = item.partition("=")
            fields[k] = v
    return int(parts[0]), parts[1], fields
