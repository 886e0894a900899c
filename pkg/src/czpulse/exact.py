"""Noise-free simulation on (qutrit)^ions x truncated Fock space.

State arrays are ion-major with the mode index fastest; a flat state of
``ion_count`` ions has length ``3**ion_count * (n_max + 1)``. Every function
also accepts a trailing batch axis, which is how :func:`schedule_unitary`
propagates all basis columns at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Mapping

import numpy as np

from .circuit import GateSpec, builtin_matrix
from .core import (LOCAL_KINDS, SIDEBAND_KINDS, Level, PhysParams, PulseKind, PulseOp,
                   Schedule, local_matrix, pulse_block_unitary)

MAX_MATRIX_DIM = 3 ** 7 * 4


def state_dim(ion_count: int, n_max: int) -> int:
    return 3 ** ion_count * (n_max + 1)


def basis_index(levels, n: int, n_max: int) -> int:
    """Flat index of ``|n>_b |levels>``; ``levels`` is a string like ``"geg"`` or ints."""
    idx = 0
    for lv in levels:
        idx = idx * 3 + (Level[lv] if isinstance(lv, str) else int(lv))
    return idx * (n_max + 1) + n


def basis_state(levels, n: int, n_max: int) -> np.ndarray:
    psi = np.zeros(state_dim(len(levels), n_max), dtype=complex)
    psi[basis_index(levels, n, n_max)] = 1
    return psi


def computational_indices(ion_count: int, n_max: int, n: int = 0) -> np.ndarray:
    """Indices of ``{g,e}^ions x |n>`` in qubit binary order (ion 0 most significant)."""
    out = []
    for k in range(1 << ion_count):
        bits = [(k >> (ion_count - 1 - i)) & 1 for i in range(ion_count)]
        out.append(basis_index(bits, n, n_max))
    return np.array(out)


def embed_qubit_state(qubit_state: np.ndarray, ion_count: int, n_max: int, n: int = 0) -> np.ndarray:
    psi = np.zeros(state_dim(ion_count, n_max), dtype=complex)
    psi[computational_indices(ion_count, n_max, n)] = qubit_state
    return psi


@lru_cache(maxsize=256)
def sideband_unitary(kind: PulseKind, theta: float, phi: float, n_levels: int) -> np.ndarray:
    """Exact propagator of a sideband pulse on (ion qutrit) x (mode), index level*n_levels + n."""
    upper = Level.e if kind is PulseKind.RSB else Level.f
    u = np.eye(3 * n_levels, dtype=complex)
    for n in range(1, n_levels):
        b = pulse_block_unitary(kind, theta, phi, n)
        idx = [Level.g * n_levels + n, upper * n_levels + n - 1]
        u[np.ix_(idx, idx)] = b
    return u


def apply_on_axes(arr: np.ndarray, u: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
    """Contract ``u`` (acting on the product of ``axes``, in order) into ``arr``."""
    dims = [arr.shape[a] for a in axes]
    u = u.reshape(dims + dims)
    k = len(axes)
    out = np.tensordot(u, arr, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def _resolve(label: str, unitaries: Mapping[str, np.ndarray] | None) -> np.ndarray:
    if unitaries and label in unitaries:
        return np.asarray(unitaries[label], dtype=complex)
    try:
        return builtin_matrix(label)
    except KeyError:
        raise KeyError(f"unknown target unitary label {label!r}") from None


def apply_controlled_target(arr: np.ndarray, op: PulseOp, u: np.ndarray, ion_count: int) -> np.ndarray:
    """Apply ``u`` on the {g,e} block of the target ions where the control ion is in e."""
    k = len(op.targets)
    if u.shape != (1 << k, 1 << k):
        raise ValueError(f"{op.label!r} is {u.shape[0]}-dimensional but addresses {k} ions")
    out = arr.copy()
    index = [slice(None)] * arr.ndim
    index[op.ion] = Level.e
    for t in op.targets:
        index[t] = slice(0, 2)
    index = tuple(index)
    sub = arr[index]
    # removing the control axis shifts later target axes down by one
    axes = tuple(t - (t > op.ion) for t in op.targets)
    out[index] = apply_on_axes(sub, u, axes)
    return out


def apply_pulse_array(arr: np.ndarray, op: PulseOp, ion_count: int,
                      unitaries: Mapping[str, np.ndarray] | None = None) -> np.ndarray:
    n_levels = arr.shape[ion_count]
    if op.kind in SIDEBAND_KINDS:
        u = sideband_unitary(op.kind, float(op.theta), float(op.phi), n_levels)
        return apply_on_axes(arr, u, (op.ion, ion_count))
    if op.kind in LOCAL_KINDS:
        return apply_on_axes(arr, local_matrix(op), (op.ion,))
    return apply_controlled_target(arr, op, _resolve(op.label, unitaries), ion_count)


def _infer_ions(dim: int, n_max: int) -> int:
    ions = round(math.log(dim // (n_max + 1), 3)) if dim >= n_max + 1 else -1
    if ions < 0 or state_dim(ions, n_max) != dim:
        raise ValueError(f"dimension {dim} does not factor as 3^ions x {n_max + 1}")
    return ions


def apply_pulse(psi: np.ndarray, op: PulseOp, p: PhysParams | None = None, n_max: int | None = None,
                unitaries: Mapping[str, np.ndarray] | None = None) -> np.ndarray:
    """Apply one pulse to a flat state (or a ``(dim, batch)`` stack of states)."""
    if n_max is None:
        n_max = (p or PhysParams()).fock_cutoff
    ions = _infer_ions(psi.shape[0], n_max)
    if any(i >= ions for i in op.ions):
        raise ValueError(f"pulse addresses ion {max(op.ions)} but state has {ions} ions")
    shape = (3,) * ions + (n_max + 1,) + psi.shape[1:]
    return apply_pulse_array(psi.reshape(shape), op, ions, unitaries).reshape(psi.shape)


def run_schedule(psi: np.ndarray, s: Schedule, n_max: int,
                 unitaries: Mapping[str, np.ndarray] | None = None,
                 callback: Callable[[int, np.ndarray], None] | None = None) -> np.ndarray:
    """Propagate a state through a schedule; ``callback(i, state)`` after pulse ``i``."""
    shape = (3,) * s.ion_count + (n_max + 1,) + psi.shape[1:]
    arr = psi.reshape(shape)
    for i, op in enumerate(s.pulses):
        arr = apply_pulse_array(arr, op, s.ion_count, unitaries)
        if callback is not None:
            callback(i, arr.reshape(psi.shape))
    return arr.reshape(psi.shape)


def schedule_unitary(s: Schedule, ions: int | None = None, n_max: int = 2,
                     unitaries: Mapping[str, np.ndarray] | None = None,
                     columns: np.ndarray | None = None) -> np.ndarray:
    """Dense propagator of a schedule, or only the listed ``columns`` of it."""
    ions = s.ion_count if ions is None else ions
    if ions < s.ion_count:
        raise ValueError("schedule addresses more ions than given")
    dim = state_dim(ions, n_max)
    if columns is None and dim > MAX_MATRIX_DIM:
        raise ValueError(f"dense propagator of dimension {dim} exceeds the desk-scale limit")
    cols = np.arange(dim) if columns is None else np.asarray(columns)
    start = np.zeros((dim, len(cols)), dtype=complex)
    start[cols, np.arange(len(cols))] = 1
    sched = Schedule(s.pulses, ions, s.metadata)
    return run_schedule(start, sched, n_max, unitaries)


def computational_block(s: Schedule, n_max: int = 2, unitaries=None) -> np.ndarray:
    """``P U P`` for P = computational subspace x |0>_b, in qubit order."""
    idx = computational_indices(s.ion_count, n_max)
    cols = schedule_unitary(s, n_max=n_max, unitaries=unitaries, columns=idx)
    return cols[idx, :]


def equiv_up_to_global_phase(u: np.ndarray, v: np.ndarray, subspace=None,
                             atol: float = 1e-10) -> tuple[bool, float]:
    """Is ``P u P == exp(i a) P v P``? Returns (verdict, a).

    ``subspace`` may be an index array or a projector matrix; ``None`` means
    the whole space. The phase reference is the largest entry of ``P v P``.
    """
    u, v = np.asarray(u), np.asarray(v)
    if u.shape != v.shape:
        raise ValueError("shape mismatch")
    if subspace is not None:
        sub = np.asarray(subspace)
        if sub.ndim == 2:
            u, v = sub @ u @ sub, sub @ v @ sub
        else:
            u, v = u[np.ix_(sub, sub)], v[np.ix_(sub, sub)]
    ref = np.unravel_index(np.argmax(np.abs(v)), v.shape)
    if abs(v[ref]) < atol:
        return bool(np.max(np.abs(u)) < atol), 0.0
    alpha = float(np.angle(u[ref] / v[ref]))
    ok = np.max(np.abs(u - np.exp(1j * alpha) * v)) < atol
    if abs(alpha + math.pi) < 1e-12:
        alpha = math.pi
    elif abs(alpha) < 1e-12:
        alpha = 0.0
    return bool(ok), alpha


def verify_schedule(s: Schedule, ideal: np.ndarray, n_max: int = 2, unitaries=None,
                    atol: float = 1e-10) -> tuple[bool, float]:
    """Check a schedule against an ideal qubit unitary on computational x |0>_b."""
    block = computational_block(s, n_max, unitaries)
    if block.shape != ideal.shape:
        raise ValueError(f"schedule acts on {block.shape[0]} states, ideal on {ideal.shape[0]}")
    return equiv_up_to_global_phase(block, ideal, atol=atol)


# --- Step-by-step tracing of the three-control construction -------------------

CASE_INPUTS = {1: "geg", 2: "gee", 3: "egg", 4: "ege", 5: "eeg", 6: "eee"}
TRACE_TARGET_STATE = np.array([0.6, 0.8j])
TRACE_TARGET_UNITARY = np.array([[math.cos(0.4), -1j * math.sin(0.4) * np.exp(-0.3j)],
                                 [-1j * math.sin(0.4) * np.exp(0.3j), math.cos(0.4)]])


def expected_case_states(case_id: int, s1: int, s2: int) -> list[tuple[complex, int, str, bool]]:
    """(amplitude, phonons, control levels, U applied) after Steps 1-4."""
    odd = (-1) ** (s1 + s2 + 1)
    phonon = -1j * (-1) ** s1
    table = {
        1: [(1, 0, "geg", False), (1, 0, "geg", False), (1, 0, "geg", False), (1, 0, "geg", False)],
        2: [(1, 0, "gee", False), (odd, 0, "gee", False), (odd, 0, "gee", False), (1, 0, "gee", False)],
        3: [(-1, 0, "gfg", False), (-1, 0, "gfg", False), (1, 0, "egg", False), (1, 0, "egg", False)],
        4: [(-1, 0, "gfe", False), ((-1) ** (s1 + s2), 0, "gfe", False), (odd, 0, "ege", False),
            (1, 0, "ege", False)],
        5: [(-1, 0, "gef", False), (-1, 0, "gef", False), (1, 0, "eeg", False), (1, 0, "eeg", False)],
        6: [(phonon, 1, "gee", False), (phonon, 1, "gee", True), (odd, 0, "eee", True),
            (1, 0, "eee", True)],
    }
    return table[case_id]


@dataclass(frozen=True)
class TraceRecord:
    step: int
    basis_label: str
    amplitude: complex
    expected: complex
    residual: float

    @property
    def ok(self) -> bool:
        return self.residual < 1e-10


def _step_boundaries(n: int, s1: int, s2: int) -> list[int]:
    # pulse counts: encode n, conditional block 5, decode n, optional Z
    ends = [n, n + 5, 2 * n + 5]
    ends.append(ends[-1] + (1 if s1 == s2 else 0))
    return ends


def trace_case(case_id: int, s1: int, s2: int, n_max: int = 2) -> list[TraceRecord]:
    """Run the representative input of a case through the 3-control gate.

    Records the state after each of Steps 1-4 and compares it to the closed
    form amplitude (with the target register in ``psi`` or ``U psi``).
    """
    from .compiler import lower_mc_gate

    if case_id not in CASE_INPUTS:
        raise ValueError("case_id must be 1..6")
    g = GateSpec("111", "Utrace", TRACE_TARGET_UNITARY)
    sched = lower_mc_gate(g, s1, s2)
    table = {"Utrace": TRACE_TARGET_UNITARY}
    nf = n_max + 1

    def product(levels: str, n: int, target: np.ndarray) -> np.ndarray:
        ctrl = basis_state(levels, 0, 0)  # control qutrits only
        tgt = np.zeros(3, dtype=complex)
        tgt[:2] = target
        mode = np.zeros(nf, dtype=complex)
        mode[n] = 1
        return np.kron(np.kron(ctrl, tgt), mode)

    psi = product(CASE_INPUTS[case_id], 0, TRACE_TARGET_STATE)
    snapshots = {}
    ends = _step_boundaries(3, s1, s2)
    run_schedule(psi, sched, n_max, table,
                 callback=lambda i, st: snapshots.__setitem__(i + 1, st.copy()))
    records = []
    for step, (amp, n, levels, applied) in enumerate(expected_case_states(case_id, s1, s2), start=1):
        state = snapshots[ends[step - 1]]
        tgt = TRACE_TARGET_UNITARY @ TRACE_TARGET_STATE if applied else TRACE_TARGET_STATE
        ref = product(levels, n, tgt)
        got = complex(np.vdot(ref, state))
        residual = float(np.linalg.norm(state - amp * ref))
        label = f"|{n}>_b|{levels}>" + ("U|psi>" if applied else "|psi>")
        records.append(TraceRecord(step, label, got, complex(amp), residual))
    return records


def format_trace(records: list[TraceRecord]) -> str:
    lines = ["step,basis_label,amplitude_re,amplitude_im"]
    for r in records:
        re, im = (round(x, 12) + 0.0 for x in (r.amplitude.real, r.amplitude.imag))
        lines.append(f"{r.step},{r.basis_label},{re:.12g},{im:.12g}")
    return "\n".join(lines) + "\n"
