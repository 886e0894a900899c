"""Monte Carlo wavefunction simulation of schedules under motional and Zeeman noise.

Three collapse channels act throughout every pulse:

* heating ``sqrt(gamma_h) a^dagger`` on the mode,
* motional dephasing ``sqrt(gamma_phi) a^dagger a``,
* Zeeman dephasing ``sqrt(gamma_z) |f><f|`` on each ion.

Rates are in 1/us. Every pulse is split into equal substeps no longer than
``dt``; the non-Hermitian no-jump propagator is exact within a substep. A
jump happens when the squared norm falls below the trajectory's uniform draw
(waiting-time unravelling): the crossing substep is found on the ``dt`` grid
and the jump time is refined by bisection inside it. The jump channel is
drawn in proportion to ``||L psi||^2``.

Before its first jump a trajectory depends only on the input state and the
sampled Fock number, so that prefix is computed once and shared.
"""

from __future__ import annotations

import csv
import io
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import expm

from .core import (SIDEBAND_KINDS, Level, PhysParams, PulseKind, PulseOp, Schedule, TimingPolicy,
                   local_matrix, pulse_duration, sideband_generator)
from .exact import _resolve, apply_controlled_target, apply_on_axes

THREADS_ENV = "CZPULSE_THREADS"
CONVERGENCE_PP = 0.1
REFINE_BITS = 8  # jump times resolved to dt / 2**8


@dataclass(frozen=True)
class NoiseParams:
    gamma_h: float = 1.3e-4
    gamma_phi: float = 5e-4
    gamma_z: float = 2e-3
    n_bar: float = 0.05
    n_max: int = 10
    n_traj: int = 1000
    seed: int = 2024
    dt: float = 0.1  # substep, us
    zeeman_ions: tuple[int, ...] | None = None  # None: every ion dephases

    def __post_init__(self):
        if min(self.gamma_h, self.gamma_phi, self.gamma_z) < 0:
            raise ValueError("rates must be non-negative")
        if self.n_bar < 0:
            raise ValueError("n_bar must be non-negative")
        if self.n_traj < 1:
            raise ValueError("n_traj must be >= 1")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.zeeman_ions is not None:
            object.__setattr__(self, "zeeman_ions", tuple(int(i) for i in self.zeeman_ions))

    def scaled(self, factor: float) -> NoiseParams:
        return replace(self, gamma_h=self.gamma_h * factor, gamma_phi=self.gamma_phi * factor,
                       gamma_z=self.gamma_z * factor)

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> NoiseParams:
        types = {"gamma_h": float, "gamma_phi": float, "gamma_z": float, "n_bar": float,
                 "n_max": int, "n_traj": int, "seed": int, "dt": float, "zeeman_ions": _ion_list}
        unknown = set(values) - set(types)
        if unknown:
            raise ValueError(f"unknown noise keys: {', '.join(sorted(unknown))}")
        return cls(**{k: types[k](v) for k, v in values.items()})


def _ion_list(text: str) -> tuple[int, ...] | None:
    text = text.strip().lower()
    if text in ("", "all"):
        return None
    return tuple(int(t) for t in text.replace(",", " ").split())


def thermal_distribution(n_bar: float, n_max: int) -> np.ndarray:
    """Geometric occupation p_n ~ n_bar^n / (1 + n_bar)^(n+1), renormalized on 0..n_max."""
    if n_bar < 0:
        raise ValueError("n_bar must be non-negative")
    n = np.arange(n_max + 1)
    p = n_bar ** n / (1 + n_bar) ** (n + 1)
    return p / p.sum()


def fidelity(u: np.ndarray, psi0: np.ndarray, rho: np.ndarray, mode_levels: int = 1) -> float:
    """``<psi0| U^dag rho U |psi0>`` with the ideal gate extended by the mode identity.

    ``rho`` lives on qubits (``mode_levels=1``) or on qubits x mode (mode index
    fastest). Slightly non-positive input from round-off is clamped with a warning.
    """
    target = np.asarray(u) @ np.asarray(psi0)
    d = target.size
    rho = np.asarray(rho)
    if rho.shape != (d * mode_levels, d * mode_levels):
        raise ValueError(f"rho has shape {rho.shape}, expected {(d * mode_levels,) * 2}")
    r = rho.reshape(d, mode_levels, d, mode_levels)
    f = float(np.real(np.einsum("i,inkn,k->", target.conj(), r, target)))
    if np.linalg.eigvalsh((rho + rho.conj().T) / 2)[0] < -1e-9:
        warnings.warn("rho_out is not positive semidefinite", RuntimeWarning, stacklevel=2)
    if not 0 <= f <= 1 + 1e-9:
        warnings.warn(f"fidelity {f} outside [0, 1]; clamped", RuntimeWarning, stacklevel=2)
    return min(max(f, 0.0), 1.0)


# ---------------------------------------------------------------- propagation

@dataclass
class _Segment:
    ion: int
    h_local: np.ndarray | None  # on (ion qutrit) x mode, rad/us; None means idle
    duration: float  # us
    instant: PulseOp | None = None  # applied exactly at the segment start


class _Model:
    def __init__(self, s: Schedule, p: PhysParams, noise: NoiseParams, policy: TimingPolicy | None,
                 unitaries: Mapping[str, np.ndarray] | None):
        self.ions = s.ion_count
        self.nl = noise.n_max + 1
        self.noise = noise
        self.unitaries = dict(unitaries or {})
        self.shape = (3,) * self.ions + (self.nl,)
        nl = self.nl
        n = np.arange(nl)
        self.heat_weight = np.where(n < noise.n_max, n + 1.0, 0.0)
        zi = range(self.ions) if noise.zeeman_ions is None else noise.zeeman_ions
        self.zeeman_ions = tuple(sorted(set(zi)))
        if any(not 0 <= k < self.ions for k in self.zeeman_ions):
            raise ValueError("zeeman_ions outside the register")
        mode_d = np.tile(noise.gamma_h * self.heat_weight + noise.gamma_phi * n ** 2, 3)
        f_mask = np.repeat(np.arange(3) == Level.f, nl).astype(float)
        self.d_local = [mode_d + (noise.gamma_z * f_mask if k in self.zeeman_ions else 0)
                        for k in range(self.ions)]
        f_counts = sum((self._axis_f(k) for k in self.zeeman_ions), np.zeros((3,) * self.ions + (1,)))
        self.f_others = [f_counts - (self._axis_f(k) if k in self.zeeman_ions else 0)
                         for k in range(self.ions)]
        self.segments = [self._segment(op, p, policy) for op in s.pulses]
        self._cache: dict = {}
        self._eig: dict = {}

    def _axis_f(self, k):
        idx = [np.newaxis] * (self.ions + 1)
        idx[k] = slice(None)
        return (np.arange(3) == Level.f).astype(float)[tuple(idx)]

    def _segment(self, op: PulseOp, p: PhysParams, policy: TimingPolicy | None) -> _Segment:
        om = p.rabi_frequency * 1e-6
        nl = self.nl
        try:
            t = pulse_duration(op, p, policy) * 1e6
        except KeyError:
            t = 0.0  # unlisted target unitaries are instantaneous
        if op.kind in SIDEBAND_KINDS:
            h = math.copysign(1, op.theta) * om * p.lamb_dicke / 2 * sideband_generator(op.kind, op.phi, nl)
            return _Segment(op.ion, h, t)
        if op.kind in (PulseKind.CARRIER, PulseKind.XGATE):
            theta, phi = (op.theta, op.phi) if op.kind is PulseKind.CARRIER else (math.pi, 0.0)
            g = np.zeros((3, 3), dtype=complex)
            g[Level.g, Level.e] = np.exp(-1j * phi)
            g[Level.e, Level.g] = np.exp(1j * phi)
            h = math.copysign(1, theta) * om / 2 * np.kron(g, np.eye(nl))
            return _Segment(op.ion, h, t)
        return _Segment(op.ion, None, t, instant=op)

    def steps(self, seg: _Segment) -> tuple[int, float]:
        m = max(1, math.ceil(seg.duration / self.noise.dt - 1e-9))
        return m, seg.duration / m

    def _generator(self, i: int):
        """-i H_eff of segment ``i`` with its eigendecomposition when well conditioned."""
        hit = self._eig.get(i)
        if hit is None:
            seg = self.segments[i]
            h = seg.h_local if seg.h_local is not None else np.zeros((3 * self.nl,) * 2, dtype=complex)
            gen = -1j * (h - 0.5j * np.diag(self.d_local[seg.ion]))
            lam, vec = np.linalg.eig(gen)
            eig = None
            if np.linalg.cond(vec) < 1e6:
                vinv = np.linalg.inv(vec)
                probe = expm(gen * seg.duration)
                if np.allclose((vec * np.exp(lam * seg.duration)) @ vinv, probe, atol=1e-12, rtol=0):
                    eig = (lam, vec, vinv)
            hit = self._eig[i] = (gen, eig)
        return hit

    def _kernel(self, i: int, tau: float) -> tuple[np.ndarray, np.ndarray]:
        gen, eig = self._generator(i)
        if eig is None:
            k = expm(gen * tau)
        else:
            lam, vec, vinv = eig
            k = (vec * np.exp(lam * tau)) @ vinv
        fac = np.exp(-0.5 * self.noise.gamma_z * tau * self.f_others[self.segments[i].ion])
        return k, fac

    def kernel(self, i: int, steps: int) -> tuple[np.ndarray, np.ndarray]:
        """Cached propagator over ``steps`` grid substeps of segment ``i``."""
        key = (i, steps)
        hit = self._cache.get(key)
        if hit is None:
            hit = self._cache[key] = self._kernel(i, steps * self.steps(self.segments[i])[1])
        return hit

    def _apply(self, arr: np.ndarray, i: int, kf) -> np.ndarray:
        k, fac = kf
        j = self.segments[i].ion
        a, b = 3 ** j, 3 ** (self.ions - 1 - j)
        # bring (ion j, mode) together, one matmul, and back
        flat = arr.reshape(a, 3, b, self.nl).transpose(0, 2, 1, 3).reshape(a * b, 3 * self.nl)
        out = (flat @ k.T).reshape(a, b, 3, self.nl).transpose(0, 2, 1, 3).reshape(self.shape)
        return out * fac

    def advance(self, arr: np.ndarray, i: int, steps: int) -> np.ndarray:
        """Propagate ``steps`` grid substeps using cached power-of-two kernels."""
        if steps == self.steps(self.segments[i])[0]:
            return self._apply(arr, i, self.kernel(i, steps))
        b = 1
        while steps:
            if steps & 1:
                arr = self._apply(arr, i, self.kernel(i, b))
            steps >>= 1
            b <<= 1
        return arr

    def advance_time(self, arr: np.ndarray, i: int, tau: float) -> np.ndarray:
        return arr if tau <= 0 else self._apply(arr, i, self._kernel(i, tau))

    def instant(self, arr: np.ndarray, op: PulseOp) -> np.ndarray:
        if op.kind is PulseKind.ZGATE:
            return apply_on_axes(arr, local_matrix(op), (op.ion,))
        return apply_controlled_target(arr, op, _resolve(op.label, self.unitaries), self.ions)

    def jump(self, arr: np.ndarray, u: float) -> np.ndarray:
        nz = self.noise
        pops_n = (np.abs(arr) ** 2).reshape(-1, self.nl).sum(axis=0)
        n = np.arange(self.nl)
        weights = [nz.gamma_h * float(pops_n @ self.heat_weight), nz.gamma_phi * float(pops_n @ n ** 2)]
        for k in self.zeeman_ions:
            weights.append(nz.gamma_z * float(np.sum(np.abs(np.take(arr, Level.f, axis=k)) ** 2)))
        w = np.cumsum(weights)
        c = int(np.searchsorted(w, u * w[-1], side="right"))
        c = min(c, len(weights) - 1)
        if c == 0:
            out = np.zeros_like(arr)
            out[..., 1:] = arr[..., :-1] * np.sqrt(n[1:])
        elif c == 1:
            out = arr * n
        else:
            out = np.zeros_like(arr)
            sl = [slice(None)] * arr.ndim
            sl[self.zeeman_ions[c - 2]] = Level.f
            out[tuple(sl)] = arr[tuple(sl)]
        return out / np.linalg.norm(out)


def _norm2(a: np.ndarray) -> float:
    return float(np.vdot(a, a).real)


def _continue(model: _Model, arr: np.ndarray, start: int, r: float, rng: np.random.Generator) -> np.ndarray:
    """Evolve from the beginning of segment ``start`` with jump threshold ``r``.

    The no-jump norm is monotone, so the crossing substep is found by binary
    descent on the dt grid and then refined by bisection inside it.
    """
    for i in range(start, len(model.segments)):
        seg = model.segments[i]
        if seg.instant is not None:
            arr = model.instant(arr, seg.instant)
        m, h = model.steps(seg)
        g = 0
        while g < m:
            cand = model.advance(arr, i, m - g)
            if _norm2(cand) > r:
                arr = cand
                break
            pos, cur = 0, arr
            b = 1 << ((m - g).bit_length() - 1)
            while b:
                if pos + b < m - g:
                    test = model.advance(cur, i, b)
                    if _norm2(test) > r:
                        pos, cur = pos + b, test
                b >>= 1
            lo, hi = 0.0, h
            for _ in range(REFINE_BITS):
                mid = (lo + hi) / 2
                if _norm2(model.advance_time(cur, i, mid)) > r:
                    lo = mid
                else:
                    hi = mid
            arr = model.jump(model.advance_time(cur, i, hi), rng.random())
            r = rng.random()
            # back onto the grid
            arr = model.advance_time(arr, i, h - hi)
            g += pos + 1
    return arr


@dataclass(frozen=True)
class _Prefix:
    states: list  # state before segment i (index len = final state)
    norms: np.ndarray  # squared norm after segment i


def _no_jump_prefix(model: _Model, arr: np.ndarray) -> _Prefix:
    states = [arr]
    norms = []
    for i, seg in enumerate(model.segments):
        if seg.instant is not None:
            arr = model.instant(arr, seg.instant)
        arr = model.advance(arr, i, model.steps(seg)[0])
        states.append(arr)
        norms.append(_norm2(arr))
    return _Prefix(states, np.array(norms))


def _overlap_fidelity(arr: np.ndarray, target: np.ndarray) -> float:
    flat = arr.reshape(-1, arr.shape[-1])
    amp = target.conj() @ flat
    return float(np.sum(np.abs(amp) ** 2) / _norm2(arr))


def trajectory_rng(seed: int, input_index: int, traj: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(input_index, traj)))


def _run_input(args) -> tuple[float, float]:
    model, input_index, bits, target_q = args
    nz = model.noise
    probs = np.cumsum(thermal_distribution(nz.n_bar, nz.n_max))
    target = np.zeros(3 ** model.ions, dtype=complex)
    comp = [int("".join(str(int(b)) for b in format(k, f"0{model.ions}b")), 3)
            for k in range(1 << model.ions)]
    target[comp] = target_q
    prefixes: dict[int, _Prefix] = {}
    total = 0.0
    edge = 0.0
    for t in range(nz.n_traj):
        rng = trajectory_rng(nz.seed, input_index, t)
        n0 = min(int(np.searchsorted(probs, rng.random() * probs[-1], side="right")), nz.n_max)
        r = rng.random()
        pre = prefixes.get(n0)
        if pre is None:
            arr = np.zeros(model.shape, dtype=complex)
            arr[tuple(bits) + (n0,)] = 1
            pre = prefixes[n0] = _no_jump_prefix(model, arr)
        if not pre.norms.size or pre.norms[-1] > r:
            final = pre.states[-1]
        else:
            first = int(np.argmax(pre.norms <= r))
            final = _continue(model, pre.states[first], first, r, rng)
        total += _overlap_fidelity(final, target)
        edge += float(np.sum(np.abs(final[..., -1]) ** 2) / _norm2(final))
    return total / nz.n_traj, edge / nz.n_traj


# ---------------------------------------------------------------- reporting

def state_label(bits: Sequence[int]) -> str:
    return "".join("ge"[b] for b in bits)


@dataclass(frozen=True)
class FidelityReport:
    states: tuple[str, ...]
    fidelities: tuple[float, ...]
    n_traj: int
    seed: int
    iterations: int = 1
    edge_population: float = 0.0  # mean population on the top Fock level
    converged: bool | None = None
    subgroup_prefix: str = ""
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.states) != len(self.fidelities):
            raise ValueError("one fidelity per state")
        if any(not 0 <= f <= 1 for f in self.fidelities):
            raise ValueError("fidelities must lie in [0, 1]")

    def _select(self, pred) -> np.ndarray:
        return np.array([f for s, f in zip(self.states, self.fidelities) if pred(s)])

    @property
    def overall(self) -> float:
        return float(np.mean(self.fidelities))

    def group(self, first: str) -> tuple[float, float]:
        v = self._select(lambda s: s.startswith(first))
        return float(v.mean()), float(v.std())

    def subgroups(self) -> tuple[tuple[float, float], tuple[float, float]]:
        """(prefix subgroup, remaining e-group) mean and std."""
        pre = self.subgroup_prefix
        a = self._select(lambda s: s.startswith(pre))
        b = self._select(lambda s: s.startswith("e") and not s.startswith(pre))
        return (float(a.mean()), float(a.std())), (float(b.mean()), float(b.std()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["input_state", "fidelity"])
        for s, f in zip(self.states, self.fidelities):
            w.writerow([s, f"{f:.10f}"])
        return buf.getvalue()

    def summary(self) -> str:
        g, e = self.group("g"), self.group("e")
        lines = [f"iterations: {self.iterations}  trajectories: {self.n_traj}  seed: {self.seed}",
                 f"{'group':<14}{'mean (%)':>10}{'std (%)':>10}",
                 f"{'|g' + 'x' * (len(self.states[0]) - 1) + '>':<14}{100 * g[0]:>10.2f}{100 * g[1]:>10.2f}",
                 f"{'|e' + 'x' * (len(self.states[0]) - 1) + '>':<14}{100 * e[0]:>10.2f}{100 * e[1]:>10.2f}"]
        if self.subgroup_prefix and len(self.subgroup_prefix) < len(self.states[0]):
            (sm, ss), (om, os_) = self.subgroups()
            tail = "x" * (len(self.states[0]) - len(self.subgroup_prefix))
            lines.append(f"{'|' + self.subgroup_prefix + tail + '>':<14}{100 * sm:>10.2f}{100 * ss:>10.2f}")
            lines.append(f"{'other |e..>':<14}{100 * om:>10.2f}{100 * os_:>10.2f}")
        lines.append(f"{'overall':<14}{100 * self.overall:>10.2f}")
        lines.append(f"top Fock level population: {self.edge_population:.3e}")
        if self.converged is not None:
            lines.append(f"substep convergence: {'ok' if self.converged else 'NOT CONVERGED'}")
        return "\n".join(lines) + "\n"


def _workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get(THREADS_ENV, "1") or 1)
    return max(1, workers)


def _simulate(s, p, noise, target_unitary, inputs, policy, unitaries, workers):
    model = _Model(s, p, noise, policy, unitaries)
    jobs = []
    for idx, bits in enumerate(inputs):
        psi0 = np.zeros(1 << s.ion_count, dtype=complex)
        psi0[int("".join(map(str, bits)), 2)] = 1
        jobs.append((model, idx, bits, target_unitary @ psi0))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(_run_input, jobs))
    return [_run_input(j) for j in jobs]


def run_trajectories(s: Schedule, target_unitary: np.ndarray, noise: NoiseParams,
                     p: PhysParams | None = None, inputs: Sequence[Sequence[int]] | None = None,
                     policy: TimingPolicy | None = None,
                     unitaries: Mapping[str, np.ndarray] | None = None,
                     iterations: int = 1, check_convergence: bool = False,
                     subgroup_prefix: str | None = None, workers: int | None = None) -> FidelityReport:
    """Per-input fidelities of ``s`` (repeated ``iterations`` times) against ``target_unitary``.

    ``target_unitary`` is the ideal gate for ONE pass; it is raised to the
    ``iterations`` power here. ``inputs`` defaults to every computational
    basis state, as bit tuples with ion 0 first.
    """
    p = p or PhysParams()
    d = 1 << s.ion_count
    u1 = np.asarray(target_unitary, dtype=complex)
    if u1.shape != (d, d):
        raise ValueError(f"target unitary must be {d}x{d} for {s.ion_count} ions")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    u = np.linalg.matrix_power(u1, iterations)
    sched = s.repeated(iterations)
    if inputs is None:
        inputs = [tuple((k >> (s.ion_count - 1 - i)) & 1 for i in range(s.ion_count)) for k in range(d)]
    inputs = [tuple(int(b) for b in x) for x in inputs]
    w = _workers(workers)
    res = _simulate(sched, p, noise, u, inputs, policy, unitaries, w)
    fids = tuple(min(max(f, 0.0), 1.0) for f, _ in res)
    converged = None
    if check_convergence:
        half = replace(noise, dt=noise.dt / 2)
        res2 = _simulate(sched, p, half, u, inputs, policy, unitaries, w)
        converged = all(abs(a - b[0]) * 100 <= CONVERGENCE_PP for a, b in zip(fids, res2))
        if not converged:
            warnings.warn("halving dt changed a fidelity by more than 0.1 pp", RuntimeWarning, stacklevel=2)
    if subgroup_prefix is None:
        subgroup_prefix = "e" * (s.ion_count - 2) if s.ion_count >= 4 else ""
    return FidelityReport(tuple(state_label(x) for x in inputs), fids, noise.n_traj, noise.seed,
                          iterations, float(np.mean([e for _, e in res])), converged, subgroup_prefix)
