import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from czpulse.circuit import GateSequence, ideal_unitary, make_multi_controlled
from czpulse.compiler import compile_sequence, cswap_schedule, lower_mc_gate, target_table
from czpulse.circuit import cswap_decomposition
from czpulse.core import PulseKind, Schedule, carrier, rsb
from czpulse.exact import (CASE_INPUTS, apply_pulse, basis_state, equiv_up_to_global_phase, format_trace,
                           run_schedule, schedule_unitary, state_dim, trace_case, verify_schedule)


def test_dimensions():
    assert state_dim(3, 2) == 27 * 3
    psi = basis_state("gef", 1, 2)
    assert psi.shape == (81,) and psi.sum() == 1


def test_rsb_pi_pulse_moves_excitation_into_mode():
    psi = basis_state("e", 0, 2)
    out = apply_pulse(psi, rsb(0), n_max=2)
    assert abs(abs(np.vdot(basis_state("g", 1, 2), out)) - 1) < 1e-12
    # no-op on |g,0>
    psi = basis_state("g", 0, 2)
    assert np.allclose(apply_pulse(psi, rsb(0), n_max=2), psi)


@pytest.mark.parametrize("case_id", sorted(CASE_INPUTS))
@pytest.mark.parametrize("gauge", [(0, 0), (0, 1), (1, 0), (1, 1)])
def test_trace_matches_closed_form(case_id, gauge):
    records = trace_case(case_id, *gauge)
    assert len(records) == 4
    assert all(r.ok for r in records), format_trace(records)


def test_trace_output_is_clean():
    text = format_trace(trace_case(6, 0, 1))
    assert text.startswith("step,basis_label,amplitude_re,amplitude_im\n")
    assert "e-1" not in text


@pytest.mark.parametrize("gauge", [(0, 0), (0, 1), (1, 0), (1, 1)])
def test_single_gate_all_gauges(gauge):
    g = make_multi_controlled("111", "H")
    ok, _ = verify_schedule(lower_mc_gate(g, *gauge), ideal_unitary(GateSequence((g,))), 2, target_table([g]))
    assert ok


def test_cswap_equivalence_and_phase():
    ok, phase = verify_schedule(cswap_schedule(2, True), ideal_unitary(cswap_decomposition(2)))
    assert ok
    assert min(abs(phase), abs(abs(phase) - math.pi)) < 1e-12


def test_perturbed_schedule_fails():
    seq = GateSequence((make_multi_controlled("11", "X"),))
    s = compile_sequence(seq)
    pulses = list(s.pulses)
    i = next(k for k, p in enumerate(pulses) if p.kind == PulseKind.CARRIER)
    pulses[i] = carrier(pulses[i].ion, pulses[i].theta * 1.001, pulses[i].phi)
    ok, _ = verify_schedule(Schedule(pulses, s.ion_count), ideal_unitary(seq), 2, target_table(seq))
    assert not ok


def test_global_phase_helper():
    u = np.diag([1, 1j])
    assert equiv_up_to_global_phase(-1j * u, u) == (True, pytest.approx(-math.pi / 2))
    assert not equiv_up_to_global_phase(np.diag([1, -1j]), u)[0]


@settings(max_examples=20, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.floats(-4, 4), st.floats(-4, 4)), min_size=1, max_size=6),
       st.integers(0, 2))
def test_pulses_preserve_norm(ops, n_max):
    pulses = []
    for ion, a, b in ops:
        pulses += [carrier(ion, a, b), rsb(ion, 1, False, b), rsb(ion, -1, True, a)]
    u = schedule_unitary(Schedule(pulses, 2), n_max=n_max)
    assert np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=1e-10)


def test_run_schedule_callback_order():
    seen = []
    s = Schedule([carrier(0, math.pi, 0), rsb(0)], 1)
    run_schedule(basis_state("g", 0, 1), s, 1, callback=lambda i, st: seen.append(i))
    assert seen == [0, 1]
