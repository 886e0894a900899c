"""Acceptance suite: one PASS/FAIL line per criterion in the terminal summary."""

import math

import numpy as np
import pytest

from czpulse.circuit import GateSequence, cswap_decomposition, ideal_unitary, make_multi_controlled
from czpulse.cli import main
from czpulse.compiler import (VARIANTS, compile_sequence, cswap_schedule, lower_mc_gate, lower_toffoli,
                              predicted_pulse_count, target_table)
from czpulse.core import PhysParams, schedule_duration
from czpulse.exact import CASE_INPUTS, computational_block, equiv_up_to_global_phase, trace_case
from czpulse.lcu import (block_encoding_check, load_time_configs, random_lcu_spec, rsb_saving,
                         s_bruteforce, s_closed_form, select_gate_time, select_pulse_count)
from czpulse.noisy import NoiseParams, run_trajectories
from test_compiler import gate_sequences
from hypothesis import HealthCheck, given, settings

GAUGES = [(0, 0), (0, 1), (1, 0), (1, 1)]
TABLE_I = {("standard", 1): 0.908, ("proposed", 1): 0.937,
           ("standard", 3): 0.786, ("proposed", 3): 0.865,
           ("standard", 5): 0.688, ("proposed", 5): 0.797}


def _deviation(s, ideal, table=None):
    block = computational_block(s, 2, table)
    ok, phase = equiv_up_to_global_phase(block, ideal)
    return float(np.max(np.abs(block - np.exp(1j * phase) * ideal)))


# 1 ---------------------------------------------------------------------------

@pytest.mark.parametrize("n", [2, 3, 4])
def test_c1_gauge_variants_exact(n, acceptance):
    rng = np.random.default_rng(n)
    from scipy.stats import unitary_group
    u = unitary_group.rvs(2, random_state=rng)
    worst = 0.0
    for v in sorted(VARIANTS):
        tof = make_multi_controlled("1" * (n - 1), "X")
        worst = max(worst, _deviation(lower_toffoli(n, v), ideal_unitary(tof)))
        g = make_multi_controlled("1" * n, u, "U")
        worst = max(worst, _deviation(lower_mc_gate(g, *VARIANTS[v]), ideal_unitary(g), {"U": u}))
    ok = worst < 1e-10
    acceptance(1, ok, f"N={n}: max deviation over variants b-e, both lowerings = {worst:.2e} (< 1e-10)")
    assert ok


# 2 ---------------------------------------------------------------------------

def test_c2_step_ledger(acceptance):
    worst, bad = 0.0, []
    for case in sorted(CASE_INPUTS):
        for gauge in GAUGES:
            for r in trace_case(case, *gauge):
                worst = max(worst, r.residual)
                if not r.ok:
                    bad.append((case, gauge, r.step))
    ok = not bad and worst < 1e-10
    acceptance(2, ok, f"6 cases x 4 gauges x 4 steps: max residual {worst:.2e}, mismatches {bad}")
    assert ok


# 3 ---------------------------------------------------------------------------

def test_c3_count_formula_random(acceptance):
    failures = []

    @settings(max_examples=200, deadline=None, derandomize=True,
              suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
    @given(gate_sequences(max_n=5, max_m=8))
    def check(seq):
        got = compile_sequence(seq).rsb_count
        want = predicted_pulse_count(seq).final
        if got != want:
            failures.append((seq, got, want))
        assert got == want

    try:
        check()
    finally:
        acceptance(3, not failures, f"200 random sequences (N<=5, M<=8): {len(failures)} count mismatches")


def test_c3_paper_instances(acceptance):
    two = GateSequence((make_multi_controlled("111", "X"), make_multi_controlled("110", "X")))
    got = [compile_sequence(two).rsb_count]
    want = [12]
    for n in range(1, 6):
        got += [cswap_schedule(n, False).rsb_count, cswap_schedule(n, True).rsb_count]
        want += [6 * n + 12, 2 * n + 12]
    r = select_pulse_count(10)
    got += [r.baseline, r.final]
    want += [100, 60]
    ok = got == want
    acceptance(3, ok, f"(111,110) -> {got[0]}; CSWAP N=1..5 {got[1:11]}; L=10 {got[11]} -> {got[12]}")
    assert ok


# 4 ---------------------------------------------------------------------------

def test_c4_closed_form(acceptance):
    s_ok = all(s_closed_form(n) == s_bruteforce(n) for n in range(1, 13))
    l_ok = all(select_pulse_count(2 ** n).final == 6 * 2 ** n - 4 for n in range(1, 11))
    acceptance(4, s_ok, "S_N closed form == brute-force prefix sum, N=1..12")
    acceptance(4, l_ok, "select count at L=2^N == 6L-4, N=1..10")
    assert s_ok and l_ok


# 5 ---------------------------------------------------------------------------

def test_c5_cswap_gate_time(acceptance):
    p = PhysParams()
    std = schedule_duration(cswap_schedule(3, False), p) * 1e6
    opt = schedule_duration(cswap_schedule(3, True), p) * 1e6
    red = 100 * (1 - opt / std)
    ok = math.isclose(std, 757.5, abs_tol=1e-9) and math.isclose(opt, 457.5, abs_tol=1e-9) \
        and abs(red - 39.6) <= 0.05
    acceptance(5, ok, f"3-CSWAP {std:.1f} us -> {opt:.1f} us, reduction {red:.3f}% (39.6 +- 0.05)")
    assert ok


# 6 ---------------------------------------------------------------------------

@pytest.mark.parametrize("name,L,std_ms,opt_ms,saving_ms",
                         [("L10", 10, 5.93, 4.90, 1.000), ("L32", 32, 32.66, 27.52, 4.900)])
def test_c6_select_gate_times(name, L, std_ms, opt_ms, saving_ms, acceptance):
    m = load_time_configs()[name]
    assert len(m) == L
    std = select_gate_time(m, optimize=False) * 1e3
    opt = select_gate_time(m) * 1e3
    saving = rsb_saving(L) * 1e3
    within = abs(std / std_ms - 1) <= 0.05 and abs(opt / opt_ms - 1) <= 0.05
    exact = math.isclose(saving, saving_ms, rel_tol=1e-12)
    acceptance(6, within, f"L={L}: standard {std:.3f} ms (ref {std_ms}), proposed {opt:.3f} ms "
                          f"(ref {opt_ms}), within 5%")
    acceptance(6, exact, f"L={L}: sideband-only saving {saving:.3f} ms (ref {saving_ms:.3f}, exact)")
    assert within and exact


# 7 ---------------------------------------------------------------------------

def test_c7_block_encoding(acceptance):
    rng = np.random.default_rng(20240601)
    worst = 0.0
    for _ in range(50):
        spec = random_lcu_spec(rng, int(rng.integers(1, 17)), int(rng.integers(1, 3)))
        worst = max(worst, block_encoding_check(spec))
    ok = worst < 1e-10
    acceptance(7, ok, f"50 random LCUs (L<=16, <=2 target qubits): max residual {worst:.2e}")
    assert ok


# 8 / 9 -----------------------------------------------------------------------

def _table(n_traj):
    seq = cswap_decomposition(3)
    ideal = ideal_unitary(seq)
    noise = NoiseParams(n_traj=n_traj)
    out = {}
    for approach in ("standard", "proposed"):
        sched = cswap_schedule(3, approach == "proposed")
        for k in (1, 3, 5):
            out[approach, k] = run_trajectories(sched, ideal, noise, iterations=k)
    return out


@pytest.fixture(scope="module")
def table_1000():
    return _table(1000)


@pytest.mark.slow
@pytest.mark.parametrize("key", list(TABLE_I))
def test_c8_table_means(key, table_1000, acceptance):
    rep = table_1000[key]
    ref = TABLE_I[key]
    ok = abs(rep.overall - ref) <= 0.02
    acceptance(8, ok, f"{key[0]:>8} x{key[1]}: overall {100 * rep.overall:.2f}% vs {100 * ref:.1f}% (+-2 pp)")
    assert ok


@pytest.mark.slow
def test_c8_table_orderings(table_1000, acceptance):
    t = table_1000
    better = all(t["proposed", k].overall > t["standard", k].overall for k in (1, 3, 5))
    groups = all(r.group("g")[0] > r.group("e")[0] for r in t.values())
    gaps = [t["proposed", k].overall - t["standard", k].overall for k in (1, 3, 5)]
    widening = gaps[0] < gaps[1] < gaps[2]
    acceptance(8, better, "proposed > standard at 1, 3, 5 iterations")
    acceptance(8, groups, "g-group mean > e-group mean in all six runs")
    acceptance(8, widening, "gap widens with depth: " + ", ".join(f"{100 * g:.2f} pp" for g in gaps))
    assert better and groups and widening


@pytest.mark.slow
def test_c8_smoke_200(acceptance):
    t = _table(200)
    dev = {k: abs(t[k].overall - v) for k, v in TABLE_I.items()}
    ok = max(dev.values()) <= 0.04
    acceptance(8, ok, "200-trajectory smoke run, max deviation "
                      f"{100 * max(dev.values()):.2f} pp (+-4 pp)")
    assert ok


@pytest.mark.slow
def test_c9_subgroup_ordering(table_1000, acceptance):
    rows = []
    for (approach, k), rep in sorted(table_1000.items()):
        (eee, _), (other, _) = rep.subgroups()
        rows.append((approach, k, eee, other))
    ok = all(eee < other for *_, eee, other in rows)
    acceptance(9, ok, "; ".join(f"{a} x{k}: eee {100 * e:.2f}% < other {100 * o:.2f}%" for a, k, e, o in rows))
    assert ok


# 10 --------------------------------------------------------------------------

def test_c10_determinism(tmp_path, acceptance):
    cfg = tmp_path / "noise.cfg"
    cfg.write_text("n_max = 6\nn_traj = 20\nseed = 77\n")
    prefix = tmp_path / "run"
    args = ["simulate", "--cswap", "2", "--noise", str(cfg), "--iterations", "2", "--out", str(prefix)]
    reports = []
    for _ in range(2):
        assert main(args) == 0
        reports.append((tmp_path / "run.csv").read_bytes() + (tmp_path / "run.summary.txt").read_bytes())
    ok = reports[0] == reports[1]
    acceptance(10, ok, "two consecutive CLI runs with seed 77 give byte-identical CSV and summary")
    assert ok
