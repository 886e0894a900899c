"""Select-operator planning for linear combinations of unitaries.

For ``A = sum_l a_l U_l`` the select operator ``sum_l |l><l| (x) U_l`` is a
sequence of ``L`` multi-controlled gates on ``N = ceil(log2 L)`` ancillas,
gate ``l`` firing on the binary string of ``l`` (most significant bit first).
Consecutive binary strings share long prefixes, which is what makes the
sideband cancellation pay off here.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from .circuit import GateSequence, GateSpec, builtin_matrix, ideal_unitary, is_unitary
from .compiler import CountReport, c_index, compile_sequence, predicted_pulse_count
from .core import PhysParams, TimingPolicy, rsb_pulse_duration, schedule_duration

MAX_TARGET_DIM = 64
MAX_L = 32


def ancilla_count(L: int) -> int:
    if L < 1:
        raise ValueError("L must be >= 1")
    return max(1, math.ceil(math.log2(L)))


@dataclass(frozen=True, eq=False)
class LCUSpec:
    coefficients: tuple[float, ...]
    unitaries: tuple[np.ndarray, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        coeffs = tuple(float(a) for a in self.coefficients)
        mats = tuple(np.asarray(u, dtype=complex) for u in self.unitaries)
        if not coeffs:
            raise ValueError("L must be >= 1")
        if len(coeffs) != len(mats):
            raise ValueError("one unitary per coefficient")
        if any(not a > 0 for a in coeffs):
            raise ValueError("coefficients must be positive")
        if any(not is_unitary(u) for u in mats):
            raise ValueError("every U_l must be unitary")
        if len({u.shape for u in mats}) != 1:
            raise ValueError("all U_l must act on the same space")
        labels = tuple(self.labels) or tuple(f"U{l}" for l in range(len(coeffs)))
        if len(labels) != len(coeffs):
            raise ValueError("one label per coefficient")
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "unitaries", mats)
        object.__setattr__(self, "labels", labels)

    @property
    def L(self) -> int:
        return len(self.coefficients)

    @property
    def N(self) -> int:
        return ancilla_count(self.L)

    @property
    def s(self) -> float:
        return float(sum(self.coefficients))

    @property
    def matrix(self) -> np.ndarray:
        return sum(a * u for a, u in zip(self.coefficients, self.unitaries))


def binary_strings(L: int) -> list[str]:
    n = ancilla_count(L)
    return [format(l, f"0{n}b") for l in range(L)]


def select_gate_sequence(spec: LCUSpec) -> GateSequence:
    n = spec.N
    return GateSequence(tuple(
        GateSpec(bits, label, u, control_qubits=tuple(range(n)))
        for bits, label, u in zip(binary_strings(spec.L), spec.labels, spec.unitaries)))


def c_sequence(n: int) -> tuple[int, ...]:
    """c-values between consecutive N-bit binary strings, built by prepending bits."""
    if n < 1:
        raise ValueError("N must be >= 1")
    c = (1,)
    for _ in range(n - 1):
        c = tuple(x + 1 for x in c) + (1,) + tuple(x + 1 for x in c)
    return c


def c_sequence_scan(n: int) -> tuple[int, ...]:
    strings = [format(l, f"0{n}b") for l in range(1 << n)]
    return tuple(c_index(a, b) for a, b in zip(strings, strings[1:]))


def s_closed_form(n: int) -> int:
    if n < 1:
        raise ValueError("N must be >= 1")
    return (n - 2) * 2 ** (n + 1) + 4


def s_recurrence(n: int) -> int:
    if n < 1:
        raise ValueError("N must be >= 1")
    s = 0
    for k in range(1, n):
        s = 2 * s + 2 ** (k + 2) - 4
    return s


def s_bruteforce(n: int) -> int:
    return 2 * sum(c - 1 for c in c_sequence_scan(n))


def select_pulse_count(L: int) -> CountReport:
    if L < 2:
        raise ValueError("L must be >= 2")
    return predicted_pulse_count(binary_strings(L))


SWEEP_FIELDS = ["L", "baseline", "final", "closed_form_6L_minus_4", "ratio"]


def pulse_count_sweep(Ls: Sequence[int]) -> list[dict]:
    rows = []
    for L in Ls:
        r = select_pulse_count(L)
        pow2 = L & (L - 1) == 0
        rows.append({"L": L, "baseline": r.baseline, "final": r.final,
                     "closed_form_6L_minus_4": 6 * L - 4 if pow2 else "", "ratio": r.ratio})
    return rows


def sweep_csv(rows: Sequence[Mapping]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, SWEEP_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({**row, "ratio": f"{row['ratio']:.6f}"})
    return buf.getvalue()


def householder_prep(amplitudes: np.ndarray) -> np.ndarray:
    """Real orthogonal matrix whose first column is ``amplitudes`` (unit norm)."""
    v = np.asarray(amplitudes, dtype=float)
    e0 = np.zeros_like(v)
    e0[0] = 1.0
    w = e0 - v
    nw = np.linalg.norm(w)
    if nw < 1e-15:
        return np.eye(v.size)
    w /= nw
    return np.eye(v.size) - 2 * np.outer(w, w)


def block_encoding_check(spec: LCUSpec) -> float:
    """Operator-norm distance between the top-left block of PREP^dag SEL PREP and A/s."""
    d = spec.unitaries[0].shape[0]
    if d > MAX_TARGET_DIM or spec.L > MAX_L:
        raise ValueError(f"block encoding check limited to L <= {MAX_L}, target dim <= {MAX_TARGET_DIM}")
    n = spec.N
    amps = np.zeros(1 << n)
    amps[:spec.L] = np.sqrt(np.array(spec.coefficients) / spec.s)
    prep = np.kron(householder_prep(amps), np.eye(d))
    sel = ideal_unitary(select_gate_sequence(spec))
    block = (prep.conj().T @ sel @ prep)[:d, :d]
    return float(np.linalg.norm(block - spec.matrix / spec.s, 2))


def random_lcu_spec(rng: np.random.Generator, L: int, target_qubits: int) -> LCUSpec:
    from scipy.stats import unitary_group

    d = 1 << target_qubits
    coeffs = rng.uniform(0.05, 1.0, size=L)
    mats = [unitary_group.rvs(d, random_state=rng) for _ in range(L)]
    return LCUSpec(tuple(coeffs), tuple(mats))


def loads_lcu(text: str, table: Mapping[str, np.ndarray] | None = None) -> LCUSpec:
    """``<coefficient> <label>`` per line; labels resolve via ``table`` then builtins."""
    table = table or {}
    coeffs, mats, labels = [], [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected '<coefficient> <label>'")
        try:
            a = float(parts[0])
            if not a > 0:
                raise ValueError("coefficients must be positive")
            coeffs.append(a)
            mats.append(table[parts[1]] if parts[1] in table else builtin_matrix(parts[1]))
        except (ValueError, KeyError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        labels.append(parts[1])
    if not coeffs:
        raise ValueError("no terms")
    # repeated labels are fine for the matrix but need distinct gate labels
    if len(set(labels)) != len(labels):
        labels = [f"{lab}#{l}" for l, lab in enumerate(labels)]
    return LCUSpec(tuple(coeffs), tuple(mats), tuple(labels))


# ---------------------------------------------------------------- gate times

def controlled_pauli_time(m: int, p: PhysParams) -> float:
    """A product of ``m`` controlled Paulis: ``(2m - 1)`` blocks of four sideband pi pulses."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return (2 * m - 1) * 4 * rsb_pulse_duration(math.pi, p)


def _timed_select(m_values: Sequence[int], p: PhysParams) -> tuple[GateSequence, TimingPolicy]:
    L = len(m_values)
    labels = [f"P{l}" for l in range(L)]
    spec = LCUSpec((1.0,) * L, (np.eye(2),) * L, tuple(labels))
    policy = TimingPolicy(target_durations={lab: controlled_pauli_time(m, p)
                                            for lab, m in zip(labels, m_values)})
    return select_gate_sequence(spec), policy


def select_gate_time(m_values: Sequence[int], p: PhysParams | None = None, optimize: bool = True,
                     scheme: str = "mc") -> float:
    """Duration (s) of the compiled select schedule; gate ``l`` carries ``m_values[l]`` Pauli factors."""
    p = p or PhysParams()
    if len(m_values) < 1:
        raise ValueError("need at least one gate")
    seq, policy = _timed_select(m_values, p)
    return schedule_duration(compile_sequence(seq, optimize=optimize, scheme=scheme), p, policy)


def rsb_saving(L: int, p: PhysParams | None = None) -> float:
    """Time (s) removed by sideband cancellation alone."""
    return select_pulse_count(L).eliminated * rsb_pulse_duration(math.pi, p or PhysParams())


def load_time_configs(path=None) -> dict[str, list[int]]:
    """name -> per-gate Pauli factor counts; defaults to the shipped configuration."""
    if path is None:
        text = resources.files("czpulse").joinpath("data/select_times.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    raw = json.loads(text)
    out = {}
    for name, entry in raw.items():
        m = [int(x) for x in entry["m"]]
        if any(x < 1 for x in m):
            raise ValueError(f"{name}: Pauli factor counts must be >= 1")
        out[name] = m
    return out
