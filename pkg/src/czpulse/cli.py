"""Command-line front end: ``czpulse {compile,verify,count,lcu,simulate,trace}``.

Exit codes: 0 success, 1 verification failure, 2 input error,
3 convergence warning under ``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import warnings
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

from . import io as fmt
from .circuit import GateSequence, cswap_decomposition, ideal_unitary
from .compiler import compile_sequence, predicted_pulse_count, target_table
from .core import PhysParams, Schedule, TimingPolicy, schedule_duration
from .exact import MAX_MATRIX_DIM, format_trace, state_dim, trace_case, verify_schedule
from .lcu import (block_encoding_check, load_time_configs, loads_lcu, pulse_count_sweep, rsb_saving,
                  select_gate_time, select_pulse_count, sweep_csv)
from .noisy import NoiseParams, run_trajectories

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_CONVERGENCE = 0, 1, 2, 3


class InputError(Exception):
    pass


@dataclass
class RunConfig:
    """Everything a run depends on; echoed into simulation summaries."""

    subcommand: str
    inputs: dict = field(default_factory=dict)
    output: str | None = None
    flags: dict = field(default_factory=dict)

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> RunConfig:
        d = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
        inputs = {k: d.pop(k) for k in list(d) if k in ("gates", "table", "schedule", "noise", "file")}
        return cls(args.command, inputs, d.pop("out", None), d)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, default=str)


def _emit(text: str, out: str | None = None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _rows(fmt_name: str, header: list[str], rows: list[list]) -> str:
    if fmt_name == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return buf.getvalue()
    width = max(len(h) for h in header)
    return "".join("".join(f"{h + ':':<{width + 2}}{v}\n" for h, v in zip(header, row)) for row in rows)


def _load_gates(args) -> GateSequence:
    if getattr(args, "cswap", None):
        return cswap_decomposition(args.cswap)
    if not args.gates:
        raise InputError("a gate file or --cswap N is required")
    try:
        return fmt.read_gates(args.gates, args.table)
    except OSError as exc:
        raise InputError(str(exc)) from None


def _scheme(args) -> str:
    return "toffoli" if getattr(args, "cswap", None) else args.scheme


def cmd_compile(args) -> int:
    seq = _load_gates(args)
    scheme = _scheme(args)
    p = PhysParams()
    base = compile_sequence(seq, optimize=False, scheme=scheme)
    sched = compile_sequence(seq, optimize=args.optimize, scheme=scheme) if args.optimize else base
    if args.out:
        fmt.write_schedule(sched, args.out)
    policy = TimingPolicy(default_target=args.target_time * 1e-6)
    row = [base.rsb_count, base.rsb_count - sched.rsb_count, sched.rsb_count,
           f"{schedule_duration(sched, p, policy) * 1e6:.3f}"]
    _emit(_rows(args.format, ["baseline", "eliminated", "final", "duration_us"], [row]))
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        sched = fmt.read_schedule(args.schedule)
    except OSError as exc:
        raise InputError(str(exc)) from None
    seq = _load_gates(args)
    ions = max(sched.ion_count, seq.qubit_count)
    if state_dim(ions, args.n_max) > MAX_MATRIX_DIM:
        raise InputError(f"{ions} ions with n_max={args.n_max} exceed the exact-simulation limit")
    sched = Schedule(sched.pulses, ions, sched.metadata)
    table = {**target_table(seq), **fmt.load_matrix_table(args.table)}
    ok, phase = verify_schedule(sched, ideal_unitary(seq, ions), args.n_max, table, args.tolerance)
    _emit(_rows(args.format, ["result", "phase"], [["pass" if ok else "fail", f"{phase:.12g}"]]))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_count(args) -> int:
    if args.strings:
        keys = [s.strip() for s in args.strings.split(",") if s.strip()]
        if not keys or any(set(k) - {"0", "1"} for k in keys):
            raise InputError("--strings takes comma-separated bit-strings")
        r = predicted_pulse_count(keys)
    else:
        r = predicted_pulse_count(_load_gates(args))
    row = [r.baseline, r.eliminated, r.final, " ".join(map(str, r.c_values))]
    _emit(_rows(args.format, ["baseline", "eliminated", "final", "c_values"], [row]))
    return EXIT_OK


def _parse_range(text: str) -> list[int]:
    lo, sep, hi = text.partition("..")
    try:
        return list(range(int(lo), int(hi) + 1)) if sep else [int(v) for v in text.split(",")]
    except ValueError:
        raise InputError(f"bad --sweep {text!r}; expected A..B or a comma list") from None


def cmd_lcu(args) -> int:
    if args.sweep:
        _emit(sweep_csv(pulse_count_sweep(_parse_range(args.sweep))), args.out)
        return EXIT_OK
    if args.times is not None:
        configs = load_time_configs(args.times or None)
        rows = [[name, len(m), f"{select_gate_time(m, optimize=False) * 1e3:.4f}",
                 f"{select_gate_time(m) * 1e3:.4f}", f"{rsb_saving(len(m)) * 1e3:.4f}"]
                for name, m in configs.items()]
        header = ["config", "L", "standard_ms", "proposed_ms", "rsb_saving_ms"]
        _emit(_rows(args.format, header, rows), args.out)
        return EXIT_OK
    if args.file:
        spec = loads_lcu(Path(args.file).read_text(), fmt.load_matrix_table(args.table))
        r = select_pulse_count(spec.L) if spec.L >= 2 else None
        res = block_encoding_check(spec)
        rows = [[spec.L, spec.N, r.baseline if r else 0, r.final if r else 0, f"{res:.3e}"]]
        _emit(_rows(args.format, ["L", "N", "baseline", "final", "residual"], rows), args.out)
        return EXIT_OK if res < 1e-10 else EXIT_FAIL
    if args.L is None:
        raise InputError("one of --L, --sweep, --times or an LCU file is required")
    r = select_pulse_count(args.L)
    if args.format == "csv":
        _emit(_rows("csv", ["L", "baseline", "final", "ratio"], [[args.L, r.baseline, r.final, f"{r.ratio:.6f}"]]),
              args.out)
    else:
        _emit(f"L={args.L}: {r.baseline} → {r.final} RSB pulses (ratio {r.ratio:.4f})\n", args.out)
    return EXIT_OK


def load_noise(path: str | None) -> NoiseParams:
    if path is None:
        text = resources.files("czpulse").joinpath("data/default_noise.cfg").read_text()
    else:
        text = Path(path).read_text()
    try:
        return NoiseParams.from_mapping(fmt.parse_key_values(text))
    except (ValueError, TypeError) as exc:
        raise InputError(f"noise config: {exc}") from None


def cmd_simulate(args) -> int:
    noise = load_noise(args.noise)
    overrides = {k: v for k, v in (("n_traj", args.traj), ("seed", args.seed)) if v is not None}
    noise = replace(noise, **overrides)
    if args.cswap:
        seq = cswap_decomposition(args.cswap)
        sched = compile_sequence(seq, optimize=args.approach == "proposed", scheme="toffoli")
    else:
        if not args.schedule or not args.gates:
            raise InputError("simulate needs SCHEDULE and --gates, or --cswap N")
        sched = fmt.read_schedule(args.schedule)
        seq = fmt.read_gates(args.gates, args.table)
    ions = max(sched.ion_count, seq.qubit_count)
    sched = Schedule(sched.pulses, ions, sched.metadata)
    table = {**target_table(seq), **fmt.load_matrix_table(args.table)}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = run_trajectories(sched, ideal_unitary(seq, ions), noise, iterations=args.iterations,
                                  unitaries=table, check_convergence=args.check_convergence)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    header = f"# run: {RunConfig.from_args(args).to_json()}\n"
    if args.out:
        Path(f"{args.out}.csv").write_text(report.to_csv())
        Path(f"{args.out}.summary.txt").write_text(header + report.summary())
    _emit(report.to_csv() if args.format == "csv" else report.summary())
    if report.converged is False and args.strict:
        return EXIT_CONVERGENCE
    return EXIT_OK


def cmd_trace(args) -> int:
    s1, s2 = (int(c) for c in args.gauge)
    records = trace_case(args.case, s1, s2)
    if args.format == "csv":
        _emit(format_trace(records))
    else:
        _emit("".join(f"step {r.step}: {r.basis_label} amplitude {r.amplitude:.6f} "
                      f"(expected {r.expected:.0f}) {'ok' if r.ok else 'MISMATCH'}\n" for r in records))
    return EXIT_OK if all(r.ok for r in records) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="czpulse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, gates=True):
        sp.add_argument("--format", choices=("text", "csv"), default="text")
        if gates:
            sp.add_argument("--table", help="JSON label -> matrix table for target unitaries")
            sp.add_argument("--cswap", type=int, metavar="N", help="use the built-in N-controlled SWAP")

    sp = sub.add_parser("compile", help="lower a gate file to a pulse schedule")
    sp.add_argument("gates", nargs="?")
    sp.add_argument("--optimize", action="store_true", help="assign cancelling gauges and cancel pulses")
    sp.add_argument("--scheme", choices=("mc", "toffoli"), default="mc")
    sp.add_argument("--out", help="schedule file to write")
    sp.add_argument("--target-time", type=float, default=0.0, metavar="US",
                    help="duration charged per controlled-U primitive (default 0)")
    common(sp)
    sp.set_defaults(func=cmd_compile)

    sp = sub.add_parser("verify", help="check a schedule against gates by exact simulation")
    sp.add_argument("schedule")
    sp.add_argument("gates", nargs="?")
    sp.add_argument("--n-max", type=int, default=2)
    sp.add_argument("--tolerance", type=float, default=1e-10)
    common(sp)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("count", help="predicted sideband pulse count")
    sp.add_argument("gates", nargs="?")
    sp.add_argument("--strings", help="comma-separated control strings instead of a gate file")
    common(sp)
    sp.set_defaults(func=cmd_count)

    sp = sub.add_parser("lcu", help="select-operator pulse counts, sweeps, gate times")
    sp.add_argument("file", nargs="?", help="LCU terms file ('<coefficient> <label>' lines)")
    sp.add_argument("--L", type=int)
    sp.add_argument("--sweep", help="A..B or a comma list of L values")
    sp.add_argument("--times", nargs="?", const="", help="gate times for a Pauli-factor config (default: shipped)")
    sp.add_argument("--table")
    sp.add_argument("--out")
    common(sp, gates=False)
    sp.set_defaults(func=cmd_lcu)

    sp = sub.add_parser("simulate", help="trajectory simulation of a schedule under noise")
    sp.add_argument("schedule", nargs="?")
    sp.add_argument("--gates", help="gate file giving the ideal operation")
    sp.add_argument("--approach", choices=("standard", "proposed"), default="proposed",
                    help="with --cswap: uncancelled or cancelled schedule")
    sp.add_argument("--noise", help="key = value noise config (default: shipped)")
    sp.add_argument("--iterations", type=int, default=1)
    sp.add_argument("--traj", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--check-convergence", action="store_true")
    sp.add_argument("--strict", action="store_true", help="exit 3 when the substep check fails")
    sp.add_argument("--out", help="prefix for <out>.csv and <out>.summary.txt")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("trace", help="step-by-step amplitudes of the three-control construction")
    sp.add_argument("--case", type=int, required=True, choices=range(1, 7))
    sp.add_argument("--gauge", choices=("00", "01", "10", "11"), default="00")
    sp.add_argument("--format", choices=("text", "csv"), default="csv")
    sp.set_defaults(func=cmd_trace)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, fmt.FormatError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
