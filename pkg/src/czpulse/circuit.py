"""Logical multi-controlled gates and their ideal (dense) unitaries."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
BUILTIN_TARGETS = {**PAULI, "H": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)}


def builtin_matrix(label: str) -> np.ndarray:
    """Matrix for a builtin label: a single gate or a Pauli string like ``XZ``."""
    if label in BUILTIN_TARGETS:
        return BUILTIN_TARGETS[label]
    if label and all(ch in PAULI for ch in label):
        return reduce(np.kron, (PAULI[ch] for ch in label))
    raise KeyError(label)


def is_unitary(m: np.ndarray, atol: float = 1e-12) -> bool:
    m = np.asarray(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and np.allclose(
        m.conj().T @ m, np.eye(m.shape[0]), atol=atol, rtol=0)


def _num_qubits(dim: int) -> int:
    k = dim.bit_length() - 1
    if dim < 1 or 1 << k != dim:
        raise ValueError(f"target dimension {dim} is not a power of two")
    return k


@dataclass(frozen=True, eq=False)
class GateSpec:
    """A multi-controlled gate.

    ``controls`` is the control bit-string in pulse order (``'1'`` = fire on
    ``e``). ``control_qubits`` / ``target_qubits`` place the gate on physical
    qubits; by default controls sit on ``0..N-1`` and the target register
    right after them.
    """

    controls: str
    target_label: str
    target_matrix: np.ndarray
    gauge: tuple[int, int] | None = None
    control_qubits: tuple[int, ...] = ()
    target_qubits: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.controls or set(self.controls) - {"0", "1"}:
            raise ValueError(f"control string must be a non-empty bit-string, got {self.controls!r}")
        m = np.asarray(self.target_matrix, dtype=complex)
        if not is_unitary(m):
            raise ValueError(f"target {self.target_label!r} is not unitary")
        object.__setattr__(self, "target_matrix", m)
        n = len(self.controls)
        k = _num_qubits(m.shape[0])
        cq = tuple(self.control_qubits) or tuple(range(n))
        tq = tuple(self.target_qubits) or tuple(range(max(cq) + 1, max(cq) + 1 + k))
        if len(cq) != n or len(tq) != k:
            raise ValueError("qubit placement does not match control length / target size")
        if len(set(cq + tq)) != n + k:
            raise ValueError("control and target qubits must be distinct")
        object.__setattr__(self, "control_qubits", cq)
        object.__setattr__(self, "target_qubits", tq)
        if self.gauge is not None:
            s1, s2 = self.gauge
            if s1 not in (0, 1) or s2 not in (0, 1):
                raise ValueError("gauge bits must be 0 or 1")
            object.__setattr__(self, "gauge", (int(s1), int(s2)))

    @property
    def n_controls(self) -> int:
        return len(self.controls)

    @property
    def qubits(self) -> tuple[int, ...]:
        return self.control_qubits + self.target_qubits

    @property
    def control_key(self) -> tuple[tuple[int, str], ...]:
        """(qubit, bit) pairs in pulse order; what gate-boundary cancellation compares."""
        return tuple(zip(self.control_qubits, self.controls))

    def with_gauge(self, s1: int, s2: int) -> GateSpec:
        return replace(self, gauge=(s1, s2))

    def __repr__(self):
        return (f"GateSpec({self.controls!r}, {self.target_label!r}, gauge={self.gauge}, "
                f"controls@{self.control_qubits}, target@{self.target_qubits})")


@dataclass(frozen=True)
class GateSequence:
    gates: tuple[GateSpec, ...] = field(default_factory=tuple)

    def __post_init__(self):
        gates = tuple(self.gates)
        object.__setattr__(self, "gates", gates)
        if gates and len({g.n_controls for g in gates}) != 1:
            raise ValueError("all gates in a sequence must have the same number of controls")

    def __len__(self):
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def __getitem__(self, i):
        return self.gates[i]

    @property
    def qubit_count(self) -> int:
        return 1 + max(q for g in self.gates for q in g.qubits) if self.gates else 0

    @property
    def control_strings(self) -> list[str]:
        return [g.controls for g in self.gates]


def make_multi_controlled(controls: str, target: np.ndarray | str, label: str | None = None,
                          **placement) -> GateSpec:
    """Build a gate from a bit-string and either a matrix or a builtin label."""
    if isinstance(target, str):
        label = label or target
        target = builtin_matrix(target)
    return GateSpec(controls, label or "U", np.asarray(target, dtype=complex), **placement)


def expand_zero_controls(g: GateSpec) -> tuple[tuple[int, ...], GateSpec, tuple[int, ...]]:
    """Split a gate into X-conjugation qubits and an all-ones core."""
    flips = tuple(q for q, b in zip(g.control_qubits, g.controls) if b == "0")
    core = replace(g, controls="1" * g.n_controls)
    return flips, core, flips


def cswap_decomposition(n: int) -> GateSequence:
    """N-controlled SWAP as three (N+2)-Toffoli gates.

    Qubits ``0..N-1`` are the controls, ``N`` and ``N+1`` the swapped pair.
    """
    if n < 1:
        raise ValueError("CSWAP needs at least one control")
    c = tuple(range(n))
    a, b = n, n + 1
    x = BUILTIN_TARGETS["X"]
    outer = GateSpec("1" * (n + 1), "X", x, control_qubits=c + (a,), target_qubits=(b,))
    inner = GateSpec("1" * (n + 1), "X", x, control_qubits=c + (b,), target_qubits=(a,))
    return GateSequence((outer, inner, outer))


def _gate_unitary(g: GateSpec, total_qubits: int) -> np.ndarray:
    dim = 1 << total_qubits
    u = np.eye(dim, dtype=complex)
    shift = [total_qubits - 1 - q for q in range(total_qubits)]
    want = [int(b) for b in g.controls]
    tq = g.target_qubits
    k = len(tq)
    tmask = sum(1 << shift[q] for q in tq)
    for col in range(dim):
        if any((col >> shift[q]) & 1 != b for q, b in zip(g.control_qubits, want)):
            continue
        t_in = sum(((col >> shift[q]) & 1) << (k - 1 - i) for i, q in enumerate(tq))
        base = col & ~tmask
        u[:, col] = 0
        for t_out in range(1 << k):
            row = base
            for i, q in enumerate(tq):
                if (t_out >> (k - 1 - i)) & 1:
                    row |= 1 << shift[q]
            u[row, col] = g.target_matrix[t_out, t_in]
    return u


def ideal_unitary(g: GateSpec | GateSequence | Iterable[GateSpec], total_qubits: int | None = None) -> np.ndarray:
    """Exact controlled-unitary matrix (qubit 0 is the most significant bit)."""
    gates: Sequence[GateSpec] = [g] if isinstance(g, GateSpec) else list(g)
    needed = 1 + max(q for x in gates for q in x.qubits) if gates else 0
    if total_qubits is None:
        total_qubits = needed
    if needed > total_qubits:
        raise ValueError(f"gates address {needed} qubits but only {total_qubits} given")
    u = np.eye(1 << total_qubits, dtype=complex)
    for x in gates:
        u = _gate_unitary(x, total_qubits) @ u
    return u


def x_conjugated(g: GateSpec, total_qubits: int) -> np.ndarray:
    """Ideal unitary of ``X(flips) . core . X(flips)`` from :func:`expand_zero_controls`."""
    pre, core, post = expand_zero_controls(g)
    x = BUILTIN_TARGETS["X"]

    def flips(qs):
        return reduce(np.kron, [x if q in qs else np.eye(2) for q in range(total_qubits)])

    return flips(post) @ ideal_unitary(core, total_qubits) @ flips(pre)
