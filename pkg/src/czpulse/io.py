"""Text formats: pulse schedules, gate lists, matrix tables and noise configs.

Schedule file (CSV, version 1)::

    # czpulse-schedule v1
    # ion_count=5
    # meta.scheme=toffoli
    index,kind,ion,theta_over_pi,phi_over_pi,label,targets
    0,RSB,0,1,0,,
    1,CARRIER,4,1/2,-1/2,,
    5,TARGET_UNITARY,2,0,0,U3,3 4

Angles are written as exact fractions of pi whenever they are rational with
a denominator up to 1024 (otherwise as a float multiple of pi), and read back
as ``pi * num / den``, so rational angles survive a round trip bit-for-bit.

Gate file: one gate per line, ``<controls> <label> [<control ions> <target ions>]``
with comma-separated ion lists; ``#`` starts a comment. Labels resolve against
an optional JSON table ``{"label": [[re_or_complex_string, ...], ...]}`` and
then the builtin gates (I, X, Y, Z, H, Pauli strings).
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
from fractions import Fraction
from pathlib import Path
from typing import Mapping

import numpy as np

from .circuit import GateSequence, GateSpec, builtin_matrix
from .core import PulseKind, PulseOp, Schedule

SCHEDULE_HEADER = "# czpulse-schedule v1"
SCHEDULE_FIELDS = ["index", "kind", "ion", "theta_over_pi", "phi_over_pi", "label", "targets"]


class FormatError(ValueError):
    """Malformed input file; message carries the line number."""


def angle_to_text(x: float) -> str:
    frac = Fraction(x / math.pi).limit_denominator(1024)
    if math.pi * frac.numerator / frac.denominator == x:
        return str(frac)
    return repr(x / math.pi)


def text_to_angle(text: str) -> float:
    text = text.strip()
    if not text:
        return 0.0
    try:
        frac = Fraction(text)
    except ValueError:
        raise ValueError(f"bad angle {text!r}") from None
    if "." in text or "e" in text.lower():
        return float(text) * math.pi
    return math.pi * frac.numerator / frac.denominator


def dumps_schedule(s: Schedule) -> str:
    buf = _io.StringIO()
    buf.write(SCHEDULE_HEADER + "\n")
    buf.write(f"# ion_count={s.ion_count}\n")
    for k, v in sorted(s.metadata.items()):
        buf.write(f"# meta.{k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCHEDULE_FIELDS)
    for i, p in enumerate(s.pulses):
        w.writerow([i, p.kind.value, p.ion, angle_to_text(p.theta), angle_to_text(p.phi), p.label,
                    " ".join(map(str, p.targets))])
    return buf.getvalue()


def loads_schedule(text: str) -> Schedule:
    lines = text.splitlines()
    if not lines or lines[0].strip() != SCHEDULE_HEADER:
        raise FormatError("line 1: missing schedule header")
    ion_count = None
    meta: dict[str, str] = {}
    body_start = None
    for lineno, line in enumerate(lines, start=1):
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            if key == "ion_count":
                ion_count = int(value)
            elif key.startswith("meta."):
                meta[key[5:]] = value
            continue
        body_start = lineno
        break
    if ion_count is None:
        raise FormatError("missing '# ion_count=' line")
    pulses = []
    if body_start is not None:
        reader = csv.DictReader(lines[body_start - 1:])
        if reader.fieldnames != SCHEDULE_FIELDS:
            raise FormatError(f"line {body_start}: expected columns {','.join(SCHEDULE_FIELDS)}")
        for offset, row in enumerate(reader, start=body_start + 1):
            try:
                targets = tuple(int(t) for t in row["targets"].split())
                pulses.append(PulseOp(PulseKind(row["kind"]), int(row["ion"]),
                                      text_to_angle(row["theta_over_pi"]),
                                      text_to_angle(row["phi_over_pi"]), row["label"] or "", targets))
            except (ValueError, KeyError, TypeError) as exc:
                raise FormatError(f"line {offset}: {exc}") from None
    try:
        return Schedule(pulses, ion_count, meta)
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def write_schedule(s: Schedule, path: str | Path) -> None:
    Path(path).write_text(dumps_schedule(s))


def read_schedule(path: str | Path) -> Schedule:
    return loads_schedule(Path(path).read_text())


def _parse_entry(x) -> complex:
    if isinstance(x, str):
        return complex(x.replace(" ", ""))
    if isinstance(x, (list, tuple)) and len(x) == 2:
        return complex(x[0], x[1])
    return complex(x)


def load_matrix_table(path: str | Path | None) -> dict[str, np.ndarray]:
    if path is None:
        return {}
    raw = json.loads(Path(path).read_text())
    table = {}
    for label, rows in raw.items():
        table[label] = np.array([[_parse_entry(x) for x in row] for row in rows], dtype=complex)
    return table


def dump_matrix_table(table: Mapping[str, np.ndarray]) -> str:
    return json.dumps({k: [[repr(complex(x)) for x in row] for row in np.asarray(m)]
                       for k, m in table.items()}, indent=1)


def _ions(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(",") if t)


def loads_gates(text: str, table: Mapping[str, np.ndarray] | None = None) -> GateSequence:
    table = table or {}
    gates = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 4):
            raise FormatError(f"line {lineno}: expected '<controls> <label> [<ctrl ions> <target ions>]'")
        controls, label = parts[:2]
        try:
            matrix = table[label] if label in table else builtin_matrix(label)
        except KeyError:
            raise FormatError(f"line {lineno}: unknown target label {label!r}") from None
        placement = {}
        try:
            if len(parts) == 4:
                placement = {"control_qubits": _ions(parts[2]), "target_qubits": _ions(parts[3])}
            gates.append(GateSpec(controls, label, matrix, **placement))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    if not gates:
        raise FormatError("no gates")
    try:
        return GateSequence(tuple(gates))
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def read_gates(path: str | Path, table_path: str | Path | None = None) -> GateSequence:
    return loads_gates(Path(path).read_text(), load_matrix_table(table_path))


def dumps_gates(seq: GateSequence) -> str:
    return "".join(f"{g.controls} {g.target_label} {','.join(map(str, g.control_qubits))} "
                   f"{','.join(map(str, g.target_qubits))}\n" for g in seq)


def parse_key_values(text: str) -> dict[str, str]:
    """``key = value`` lines; blank lines and ``#`` comments ignored."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"line {lineno}: expected 'key = value'")
        out[key.strip()] = value.strip()
    return out
