"""Lowering of multi-controlled gates to red-sideband pulse schedules.

Two lowerings are provided:

* :func:`lower_toffoli` -- the Cirac-Zoller N-Toffoli: ``2N`` sideband pulses
  and two pi/2 carrier rotations on the target;
* :func:`lower_mc_gate` -- the ancilla-free N-controlled-U: ``2(N+1)``
  sideband pulses, two pi carrier rotations on the last control, an opaque
  controlled-U primitive and, when the encode and decode signs agree, a Z
  correction on the last control.

A gauge ``(s1, s2)`` picks the sign ``(-1)**s1`` of the encoding sideband
sequence and ``(-1)**s2`` of the decoding one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .circuit import GateSequence, GateSpec, cswap_decomposition, expand_zero_controls
from .core import (LOCAL_KINDS, SIDEBAND_KINDS, PulseKind, PulseOp, Schedule, carrier,
                   local_matrix, rsb)

# variant letter -> gauge (s1, s2)
VARIANTS = {"b": (0, 0), "c": (1, 1), "d": (0, 1), "e": (1, 0)}
STANDARD_GAUGE = (0, 0)
CANCELLING_GAUGE = (0, 1)


def _sign(bit: int) -> int:
    return -1 if bit else 1


def _gauge(variant) -> tuple[int, int]:
    if isinstance(variant, str):
        try:
            return VARIANTS[variant]
        except KeyError:
            raise ValueError(f"unknown variant {variant!r}; expected one of b, c, d, e") from None
    s1, s2 = variant
    return int(s1), int(s2)


def _encode(qubits: Sequence[int], sign: int) -> list[PulseOp]:
    return [rsb(q, sign, aux=i > 0) for i, q in enumerate(qubits)]


def _decode(qubits: Sequence[int], sign: int) -> list[PulseOp]:
    return list(reversed(_encode(qubits, sign)))


def lower_toffoli_gate(g: GateSpec, s1: int, s2: int) -> list[PulseOp]:
    """Toffoli lowering of an all-ones gate whose target is a single-qubit X."""
    if set(g.controls) != {"1"}:
        raise ValueError("expand zero-controls before lowering")
    if len(g.target_qubits) != 1 or not np.allclose(g.target_matrix, [[0, 1], [1, 0]]):
        raise ValueError("Toffoli lowering needs a single-qubit X target")
    t = g.target_qubits[0]
    # the s1 == s2 variants pick up -1 on the satisfied branch and need the
    # (-pi/2, +pi/2) order; opposite signs need the swapped order
    first = -math.pi / 2 if s1 == s2 else math.pi / 2
    return (_encode(g.control_qubits, _sign(s1))
            + [carrier(t, math.pi / 2, first),
               rsb(t, 1, aux=True), rsb(t, 1, aux=True),
               carrier(t, math.pi / 2, -first)]
            + _decode(g.control_qubits, _sign(s2)))


def lower_toffoli(n: int, variant="b") -> Schedule:
    """N-Toffoli (N-1 controls on ions 0..N-2, target on ion N-1)."""
    if n < 2:
        raise ValueError("an N-Toffoli needs N >= 2")
    s1, s2 = _gauge(variant)
    g = GateSpec("1" * (n - 1), "X", np.array([[0, 1], [1, 0]]))
    return Schedule(lower_toffoli_gate(g, s1, s2), n, {"lowering": "toffoli", "gauge": f"{s1}{s2}"})


def lower_mc_gate(g: GateSpec, s1: int | None = None, s2: int | None = None) -> Schedule:
    """Pulse schedule for an all-ones N-controlled gate in gauge (s1, s2)."""
    if s1 is None or s2 is None:
        if g.gauge is None:
            raise ValueError("gauge not assigned")
        s1, s2 = g.gauge
    return Schedule(_mc_pulses(g, s1, s2), 1 + max(g.qubits),
                    {"lowering": "mc", "gauge": f"{s1}{s2}"})


def _mc_pulses(g: GateSpec, s1: int, s2: int) -> list[PulseOp]:
    if set(g.controls) != {"1"}:
        raise ValueError("expand zero-controls before lowering")
    cq = g.control_qubits
    last = cq[-1]
    u = PulseOp(PulseKind.TARGET_UNITARY, last, label=g.target_label, targets=g.target_qubits)
    if len(cq) == 1:
        # The lone control is both the phonon source and the effective control:
        # a second pulse on it maps the phonon straight back to |e>, and the
        # carrier flips would drive |1>|e> out of the {0, 1} phonon manifold.
        return [rsb(last, _sign(s1)), rsb(last, _sign(s1)), u,
                rsb(last, _sign(s2)), rsb(last, _sign(s2))]
    ops = _encode(cq, _sign(s1))
    ops += [carrier(last, math.pi, s1 * math.pi), rsb(last, _sign(s1)), u,
            rsb(last, _sign(s2)), carrier(last, math.pi, s2 * math.pi)]
    ops += _decode(cq, _sign(s2))
    if s1 == s2:
        ops.append(PulseOp(PulseKind.ZGATE, last))
    return ops


@dataclass(frozen=True)
class GaugeAssignment:
    gauges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        for (_, s2), (s1_next, _) in zip(self.gauges, self.gauges[1:]):
            if s2 == s1_next:
                raise ValueError("adjacent gates must decode and encode with opposite signs")

    def __len__(self):
        return len(self.gauges)

    def __iter__(self):
        return iter(self.gauges)


def assign_gauges(seq: GateSequence | Sequence) -> GaugeAssignment:
    """Every gate gets (0, 1): encode +pi, decode -pi, so each boundary cancels."""
    return GaugeAssignment(tuple(CANCELLING_GAUGE for _ in seq))


def c_index(x: Sequence, y: Sequence) -> int:
    """1-based first position where two control strings differ; ``N + 2`` if equal."""
    if len(x) != len(y):
        raise ValueError(f"control strings differ in length: {len(x)} vs {len(y)}")
    for i, (a, b) in enumerate(zip(x, y), start=1):
        if a != b:
            return i
    return len(x) + 2


@dataclass(frozen=True)
class CountReport:
    baseline: int
    eliminated: int
    final: int
    c_values: tuple[int, ...] = ()

    def __post_init__(self):
        if self.final != self.baseline - self.eliminated:
            raise ValueError("final must equal baseline - eliminated")
        if self.c_values and self.eliminated != 2 * sum(c - 1 for c in self.c_values):
            raise ValueError("eliminated must equal 2 * sum(c_k - 1)")

    @property
    def ratio(self) -> float:
        return self.final / self.baseline if self.baseline else 1.0

    def as_dict(self) -> dict:
        return {"baseline": self.baseline, "eliminated": self.eliminated, "final": self.final,
                "c_values": list(self.c_values)}


def predicted_pulse_count(strings: Sequence[Sequence] | GateSequence) -> CountReport:
    """RSB count after boundary cancellation for M successive N-controlled gates.

    Accepts bit-strings, or a :class:`GateSequence` whose controls are then
    compared as (qubit, bit) pairs.
    """
    keys = [g.control_key for g in strings] if isinstance(strings, GateSequence) else list(strings)
    if not keys:
        raise ValueError("need at least one gate")
    n = len(keys[0])
    if any(len(k) != n for k in keys):
        raise ValueError("all control strings must have the same length")
    cs = tuple(c_index(a, b) for a, b in zip(keys, keys[1:]))
    baseline = 2 * len(keys) * (n + 1)
    eliminated = 2 * sum(c - 1 for c in cs)
    return CountReport(baseline, eliminated, baseline - eliminated, cs)


def _resources(op: PulseOp) -> frozenset:
    res = {("ion", q) for q in op.ions}
    if op.uses_mode:
        res.add("mode")
    return frozenset(res)


def _phase_equal(a: float, b: float) -> bool:
    d = (a - b) % (2 * math.pi)
    return min(d, 2 * math.pi - d) < 1e-12


def _cancels(a: PulseOp, b: PulseOp) -> bool:
    if a.ion != b.ion:
        return False
    if a.kind in SIDEBAND_KINDS:
        return (b.kind is a.kind and abs(a.theta + b.theta) < 1e-12
                and _phase_equal(a.phi, b.phi))
    if a.kind in LOCAL_KINDS and b.kind in LOCAL_KINDS:
        if a.kind is PulseKind.XGATE and b.kind is PulseKind.XGATE:
            # (-iX)^2 = -1 on {g, e}: a global phase on the computational space
            return True
        return np.allclose(local_matrix(b) @ local_matrix(a), np.eye(3), atol=1e-12, rtol=0)
    return False


def cancel_pulses(s: Schedule) -> Schedule:
    """Remove mutually inverse pulses that meet on the same ion until nothing changes.

    Two pulses meet when no pulse between them touches any of their
    resources (the ion, plus the shared mode for sideband pulses); pulses on
    disjoint resources commute. Scanning is leftmost-first.
    """
    ops = list(s.pulses)
    res = [_resources(p) for p in ops]
    i = 0
    while i < len(ops):
        ra = res[i]
        j = i + 1
        while j < len(ops) and not (res[j] & ra):
            j += 1
        if j < len(ops) and res[j] == ra and _cancels(ops[i], ops[j]):
            del ops[j], res[j], ops[i], res[i]
            # only ops whose next resource-sharing neighbour was i can gain a new partner
            back = i
            for r in ra:
                k = i - 1
                while k >= 0 and r not in res[k]:
                    k -= 1
                if k >= 0:
                    back = min(back, k)
            i = back
            continue
        i += 1
    return Schedule(ops, s.ion_count, s.metadata)


def _lower(g: GateSpec, s1: int, s2: int, scheme: str) -> list[PulseOp]:
    if scheme == "toffoli":
        return lower_toffoli_gate(g, s1, s2)
    if scheme == "mc":
        return _mc_pulses(g, s1, s2)
    raise ValueError(f"unknown lowering scheme {scheme!r}")


def compile_sequence(seq: GateSequence | Iterable[GateSpec], optimize: bool = True,
                     scheme: str = "mc") -> Schedule:
    """Expand zero-controls, gauge, lower, concatenate and (optionally) cancel.

    ``scheme`` is ``"mc"`` for the controlled-U construction or ``"toffoli"``
    for the N-Toffoli construction (X targets only).
    """
    if not isinstance(seq, GateSequence):
        seq = GateSequence(tuple(seq))
    if not len(seq):
        raise ValueError("no gates")
    gauges = assign_gauges(seq) if optimize else [STANDARD_GAUGE] * len(seq)
    ops: list[PulseOp] = []
    for g, (s1, s2) in zip(seq, gauges):
        pre, core, post = expand_zero_controls(g)
        ops += [PulseOp(PulseKind.XGATE, q) for q in pre]
        ops += _lower(core, s1, s2, scheme)
        ops += [PulseOp(PulseKind.XGATE, q) for q in post]
    sched = Schedule(ops, seq.qubit_count, {"scheme": scheme, "optimize": str(bool(optimize)).lower()})
    return cancel_pulses(sched) if optimize else sched


def target_table(seq: GateSequence | Iterable[GateSpec]) -> dict[str, np.ndarray]:
    """label -> matrix for the opaque controlled-U primitives of a sequence."""
    table: dict[str, np.ndarray] = {}
    for g in seq:
        prev = table.setdefault(g.target_label, g.target_matrix)
        if prev.shape != g.target_matrix.shape or not np.allclose(prev, g.target_matrix):
            raise ValueError(f"label {g.target_label!r} is bound to two different matrices")
    return table


def cswap_schedule(n: int, optimize: bool) -> Schedule:
    """N-CSWAP from three Toffoli lowerings: standard (b) or cancelled (d)."""
    return compile_sequence(cswap_decomposition(n), optimize=optimize, scheme="toffoli")
