"""Dense master-equation reference for small registers (tests only)."""

import math

import numpy as np
from scipy.linalg import expm

from czpulse.core import Level, PhysParams, PulseKind, pulse_duration
from czpulse.noisy import NoiseParams, thermal_distribution


def _embed(ion_op, k, ions, mode_op, nl):
    out = np.eye(1)
    for j in range(ions):
        out = np.kron(out, ion_op if j == k else np.eye(3))
    return np.kron(out, mode_op if mode_op is not None else np.eye(nl))


def _hamiltonian(op, ions, nl, p):
    om = p.rabi_frequency * 1e-6
    if op.kind in (PulseKind.RSB, PulseKind.RSB_AUX):
        upper = Level.e if op.kind is PulseKind.RSB else Level.f
        sig = np.zeros((3, 3))
        sig[upper, Level.g] = 1
        a = np.diag(np.sqrt(np.arange(1, nl)), 1)
        x = np.exp(1j * op.phi) * _embed(sig, op.ion, ions, a, nl)
        return math.copysign(1, op.theta) * om * p.lamb_dicke / 2 * (x + x.conj().T)
    theta, phi = (op.theta, op.phi) if op.kind is PulseKind.CARRIER else (math.pi, 0.0)
    g = np.zeros((3, 3), dtype=complex)
    g[0, 1], g[1, 0] = np.exp(-1j * phi), np.exp(1j * phi)
    return math.copysign(1, theta) * om / 2 * _embed(g, op.ion, ions, None, nl)


def lindblad_fidelities(s, target_unitary, noise: NoiseParams, p=None):
    """Exact F per computational input by exponentiating the Liouvillian pulse by pulse."""
    p = p or PhysParams()
    ions, nl = s.ion_count, noise.n_max + 1
    a_dag = np.diag(np.sqrt(np.arange(1, nl)), -1)
    f = np.diag([0.0, 0.0, 1.0])
    jumps = [math.sqrt(noise.gamma_h) * _embed(None, -1, ions, a_dag, nl),
             math.sqrt(noise.gamma_phi) * _embed(None, -1, ions, a_dag @ a_dag.T, nl)]
    jumps += [math.sqrt(noise.gamma_z) * _embed(f, k, ions, None, nl) for k in range(ions)]
    dim = 3 ** ions * nl
    eye = np.eye(dim)
    dissip = sum(np.kron(c, c.conj()) - 0.5 * np.kron(c.conj().T @ c, eye)
                 - 0.5 * np.kron(eye, (c.conj().T @ c).T) for c in jumps)
    props = []
    for op in s.pulses:
        h = _hamiltonian(op, ions, nl, p)
        liou = -1j * (np.kron(h, eye) - np.kron(eye, h.T)) + dissip
        props.append(expm(liou * pulse_duration(op, p) * 1e6))
    pn = thermal_distribution(noise.n_bar, noise.n_max)
    comp = [int(format(k, f"0{ions}b"), 3) for k in range(1 << ions)]
    out = []
    for k in range(1 << ions):
        rho = np.zeros((dim, dim), dtype=complex)
        for n, w in enumerate(pn):
            i = comp[k] * nl + n
            rho[i, i] = w
        v = rho.reshape(-1)
        for m in props:
            v = m @ v
        rho = v.reshape(dim, dim)
        tgt = np.zeros(3 ** ions, dtype=complex)
        tgt[comp] = target_unitary[:, k]
        proj = np.kron(np.outer(tgt, tgt.conj()), np.eye(nl))
        out.append(float(np.real(np.trace(proj @ rho))))
    return out
