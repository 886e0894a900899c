import math

import numpy as np
import pytest

from czpulse.circuit import ideal_unitary
from czpulse.compiler import compile_sequence, target_table
from czpulse.core import PhysParams
from czpulse.exact import verify_schedule
from czpulse.lcu import (LCUSpec, ancilla_count, binary_strings, block_encoding_check, c_sequence,
                         c_sequence_scan, controlled_pauli_time, householder_prep, load_time_configs,
                         loads_lcu, pulse_count_sweep, random_lcu_spec, rsb_saving, s_bruteforce,
                         s_closed_form, s_recurrence, select_gate_sequence, select_gate_time,
                         select_pulse_count, sweep_csv)


def test_ancillas_and_strings():
    assert [ancilla_count(L) for L in (1, 2, 3, 4, 5, 16, 17)] == [1, 1, 2, 2, 3, 4, 5]
    assert binary_strings(5) == ["000", "001", "010", "011", "100"]


@pytest.mark.parametrize("n", range(1, 11))
def test_c_sequence_recurrence_matches_scan(n):
    assert c_sequence(n) == c_sequence_scan(n)


@pytest.mark.parametrize("n", range(1, 13))
def test_prefix_sum_three_ways(n):
    assert s_closed_form(n) == s_recurrence(n) == s_bruteforce(n)


@pytest.mark.parametrize("n", range(1, 11))
def test_power_of_two_select_count(n):
    L = 2 ** n
    assert select_pulse_count(L).final == 6 * L - 4


def test_l10_example():
    r = select_pulse_count(10)
    assert (r.baseline, r.final) == (100, 60)


def test_ratio_drops_between_powers_of_two():
    ratios = [select_pulse_count(2 ** n).ratio for n in range(1, 11)]
    assert all(b < a for a, b in zip(ratios, ratios[1:]))


def test_sweep_csv():
    text = sweep_csv(pulse_count_sweep([4, 5]))
    assert text.splitlines() == ["L,baseline,final,closed_form_6L_minus_4,ratio",
                                 "4,24,20,20,0.833333", "5,40,30,,0.750000"]


def test_householder_first_column():
    v = np.array([0.6, 0.0, 0.8, 0.0])
    h = householder_prep(v)
    assert np.allclose(h[:, 0], v)
    assert np.allclose(h @ h.T, np.eye(4))


def test_block_encoding_random():
    rng = np.random.default_rng(7)
    for L in (1, 2, 3, 7):
        assert block_encoding_check(random_lcu_spec(rng, L, 1)) < 1e-10


def test_single_term_lcu():
    spec = LCUSpec((0.3,), (np.eye(2),))
    assert spec.N == 1
    assert block_encoding_check(spec) < 1e-12


@pytest.mark.parametrize("L", [2, 3, 5, 8])
def test_compiled_select_is_exact(L):
    spec = random_lcu_spec(np.random.default_rng(L), L, 1)
    seq = select_gate_sequence(spec)
    ok, _ = verify_schedule(compile_sequence(seq), ideal_unitary(seq), 1, target_table(seq))
    assert ok


def test_lcu_text_format():
    spec = loads_lcu("0.5 I\n0.5 Z  # comment\n")
    assert np.allclose(spec.matrix, np.diag([1, 0]))
    assert loads_lcu("1 X\n1 X\n").labels == ("X#0", "X#1")
    with pytest.raises(ValueError, match="line 1"):
        loads_lcu("-1 X\n")
    with pytest.raises(ValueError, match="line 2"):
        loads_lcu("1 X\nfoo\n")


def test_spec_validation():
    with pytest.raises(ValueError):
        LCUSpec((1.0,), (np.ones((2, 2)),))
    with pytest.raises(ValueError):
        LCUSpec((), ())


def test_gate_time_building_blocks():
    p = PhysParams()
    assert controlled_pauli_time(1, p) == pytest.approx(100e-6)
    assert controlled_pauli_time(3, p) == pytest.approx(500e-6)
    assert math.isclose(rsb_saving(10), 40 * 25e-6)
    assert math.isclose(rsb_saving(32), 196 * 25e-6)


def test_shipped_time_config():
    cfg = load_time_configs()
    assert set(cfg) == {"L10", "L32"}
    std, opt = select_gate_time(cfg["L10"], optimize=False), select_gate_time(cfg["L10"])
    assert std > opt
    assert std - opt >= rsb_saving(10) - 1e-15


def test_time_config_validation(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"x": {"m": [0]}}')
    with pytest.raises(ValueError):
        load_time_configs(path)
