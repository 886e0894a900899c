"""Physical primitives: ion levels, pulse records, schedules and timing.

Basis conventions used throughout the package:

* every ion is a qutrit with levels ``g`` (0), ``e`` (1) and ``f`` (2);
  ``{g, e}`` is the computational qubit, ``f`` the auxiliary shelving level;
* the shared motional mode is truncated to Fock states ``0..n_max``;
* joint states are ion-major with the mode index fastest, i.e. a state array
  has shape ``(3,) * ion_count + (n_max + 1,)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np


class Level(enum.IntEnum):
    g = 0
    e = 1
    f = 2


class PulseKind(str, enum.Enum):
    RSB = "RSB"
    RSB_AUX = "RSB_AUX"
    CARRIER = "CARRIER"
    ZGATE = "ZGATE"
    TARGET_UNITARY = "TARGET_UNITARY"
    XGATE = "XGATE"


SIDEBAND_KINDS = frozenset({PulseKind.RSB, PulseKind.RSB_AUX})
LOCAL_KINDS = frozenset({PulseKind.CARRIER, PulseKind.XGATE, PulseKind.ZGATE})


@dataclass(frozen=True)
class PhysParams:
    """Laser/trap parameters.

    ``rabi_frequency`` is the angular carrier Rabi frequency in rad/s.
    """

    rabi_frequency: float = 2 * math.pi * 0.2e6
    lamb_dicke: float = 0.1
    fock_cutoff: int = 10

    def __post_init__(self):
        if not self.rabi_frequency > 0:
            raise ValueError("rabi_frequency must be positive")
        if not 0 < self.lamb_dicke < 1:
            raise ValueError("lamb_dicke must lie in (0, 1)")
        if self.fock_cutoff < 1:
            raise ValueError("fock_cutoff must be >= 1")

    @property
    def sideband_rate(self) -> float:
        return self.rabi_frequency * self.lamb_dicke


@dataclass(frozen=True)
class PulseOp:
    """One timed primitive addressed to ``ion``.

    For ``TARGET_UNITARY`` the ``ion`` is the control ion (the unitary fires
    when it is in ``e``), ``label`` names the matrix and ``targets`` lists the
    ions of the target register.
    """

    kind: PulseKind
    ion: int
    theta: float = 0.0
    phi: float = 0.0
    label: str = ""
    targets: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", PulseKind(self.kind))
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if self.ion < 0:
            raise ValueError("ion index must be non-negative")
        if self.kind is PulseKind.TARGET_UNITARY and not self.targets:
            raise ValueError("TARGET_UNITARY needs at least one target ion")

    @property
    def ions(self) -> tuple[int, ...]:
        return (self.ion,) + self.targets

    @property
    def uses_mode(self) -> bool:
        return self.kind in SIDEBAND_KINDS

    def inverse(self) -> PulseOp:
        if self.kind in SIDEBAND_KINDS or self.kind is PulseKind.CARRIER:
            return PulseOp(self.kind, self.ion, -self.theta, self.phi, self.label, self.targets)
        if self.kind is PulseKind.ZGATE:
            return self
        if self.kind is PulseKind.XGATE:
            # R(pi, 0)^-1 = R(pi, pi)
            return PulseOp(PulseKind.CARRIER, self.ion, math.pi, math.pi)
        raise ValueError(f"no generic inverse for {self.kind.value}")


def rsb(ion: int, sign: int = 1, aux: bool = False, phi: float = 0.0) -> PulseOp:
    kind = PulseKind.RSB_AUX if aux else PulseKind.RSB
    return PulseOp(kind, ion, sign * math.pi, phi)


def carrier(ion: int, theta: float, phi: float) -> PulseOp:
    return PulseOp(PulseKind.CARRIER, ion, theta, phi)


@dataclass(frozen=True)
class Schedule:
    pulses: tuple[PulseOp, ...]
    ion_count: int
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(self.pulses))
        object.__setattr__(self, "metadata", dict(self.metadata))
        for p in self.pulses:
            bad = [i for i in p.ions if i >= self.ion_count]
            if bad:
                raise ValueError(f"pulse {p} addresses ion {bad[0]} >= ion_count {self.ion_count}")

    def __len__(self):
        return len(self.pulses)

    def __iter__(self):
        return iter(self.pulses)

    def __add__(self, other: Schedule) -> Schedule:
        return Schedule(self.pulses + other.pulses, max(self.ion_count, other.ion_count),
                        {**self.metadata, **other.metadata})

    def count(self, *kinds: PulseKind) -> int:
        return sum(1 for p in self.pulses if p.kind in kinds)

    @property
    def rsb_count(self) -> int:
        return self.count(PulseKind.RSB, PulseKind.RSB_AUX)

    def repeated(self, times: int) -> Schedule:
        return Schedule(self.pulses * times, self.ion_count, self.metadata)

    def inverse(self) -> Schedule:
        return Schedule(tuple(p.inverse() for p in reversed(self.pulses)), self.ion_count, self.metadata)


def rsb_pulse_duration(theta: float, p: PhysParams) -> float:
    return abs(theta) / p.sideband_rate


def carrier_pulse_duration(theta: float, p: PhysParams) -> float:
    return abs(theta) / p.rabi_frequency


@dataclass(frozen=True)
class TimingPolicy:
    """Durations for the primitives that are not plain rotations.

    ``target_durations`` maps a TARGET_UNITARY label to seconds; labels not
    listed fall back to ``default_target`` (``None`` makes them an error).
    ``zgate`` defaults to a virtual (zero-time) frame update.
    """

    zgate: float = 0.0
    xgate: float | None = None
    target_durations: Mapping[str, float] = field(default_factory=dict)
    default_target: float | None = None


def pulse_duration(op: PulseOp, p: PhysParams, policy: TimingPolicy | None = None) -> float:
    policy = policy or TimingPolicy()
    if op.kind in SIDEBAND_KINDS:
        return rsb_pulse_duration(op.theta, p)
    if op.kind is PulseKind.CARRIER:
        return carrier_pulse_duration(op.theta, p)
    if op.kind is PulseKind.XGATE:
        return carrier_pulse_duration(math.pi, p) if policy.xgate is None else policy.xgate
    if op.kind is PulseKind.ZGATE:
        return policy.zgate
    if op.label in policy.target_durations:
        return policy.target_durations[op.label]
    if policy.default_target is not None:
        return policy.default_target
    raise KeyError(f"no duration for target unitary {op.label!r}")


def schedule_duration(s: Schedule, p: PhysParams, policy: TimingPolicy | None = None) -> float:
    """Total time with pulses played back to back."""
    return float(sum(pulse_duration(op, p, policy) for op in s.pulses))


def carrier_matrix(theta: float, phi: float) -> np.ndarray:
    """R(theta, phi) on {g, e}."""
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * np.exp(-1j * phi) * s],
                     [-1j * np.exp(1j * phi) * s, c]], dtype=complex)


def local_matrix(op: PulseOp) -> np.ndarray:
    """3x3 action of a single-ion pulse on (g, e, f)."""
    u = np.eye(3, dtype=complex)
    if op.kind is PulseKind.CARRIER:
        u[:2, :2] = carrier_matrix(op.theta, op.phi)
    elif op.kind is PulseKind.XGATE:
        u[:2, :2] = carrier_matrix(math.pi, 0.0)
    elif op.kind is PulseKind.ZGATE:
        u[1, 1] = -1
    else:
        raise ValueError(f"{op.kind.value} is not a single-ion pulse")
    return u


def pulse_block_unitary(kind: PulseKind, theta: float, phi: float, n: int = 1) -> np.ndarray:
    """Exact 2x2 propagator of one pulse on its coupled block.

    For RSB / RSB_AUX the block basis is ``(|n>|g>, |n-1>|e or f>)`` and the
    coupling carries the ``sqrt(n)`` enhancement. ``n = 0`` has no partner and
    the identity is returned. CARRIER returns R(theta, phi) on ``{g, e}``.
    """
    kind = PulseKind(kind)
    if kind is PulseKind.CARRIER:
        return carrier_matrix(theta, phi)
    if kind is PulseKind.XGATE:
        return carrier_matrix(math.pi, 0.0)
    if kind not in SIDEBAND_KINDS:
        raise ValueError(f"{kind.value} has no block form")
    if n < 0:
        raise ValueError("Fock index must be non-negative")
    if n == 0:
        return np.eye(2, dtype=complex)
    half = math.sqrt(n) * theta / 2
    c, s = math.cos(half), math.sin(half)
    return np.array([[c, -1j * np.exp(-1j * phi) * s],
                     [-1j * np.exp(1j * phi) * s, c]], dtype=complex)


def sideband_generator(kind: PulseKind, phi: float, n_levels: int) -> np.ndarray:
    """Hermitian coupling ``a |x><g| e^{i phi} + h.c.`` on (ion qutrit) x (mode).

    ``x`` is ``e`` for RSB and ``f`` for RSB_AUX. Index = level * n_levels + n.
    """
    upper = Level.e if PulseKind(kind) is PulseKind.RSB else Level.f
    dim = 3 * n_levels
    h = np.zeros((dim, dim), dtype=complex)
    for n in range(1, n_levels):
        # <n-1, upper| a |x><g| |n, g> = sqrt(n)
        row = upper * n_levels + (n - 1)
        col = Level.g * n_levels + n
        h[row, col] = math.sqrt(n) * np.exp(1j * phi)
        h[col, row] = math.sqrt(n) * np.exp(-1j * phi)
    return h
