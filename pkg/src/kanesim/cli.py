"""Command-line entry point: ``kanesim <command> ...``.

Commands
--------
free-evolution  Bloch-radius decay of a free nuclear spin (CSV).
gate            Error table of one calibrated gate at zero and chosen dephasing.
sweep           Gate error over a grid of dephasing rates (CSV, optional JSON summary).
calibrate       Calibrate a gate and write its pulse sequence (JSON).
params show     Print a parameter preset.

Exit status is 0 on success, 2 for bad arguments and 1 for runtime errors.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from . import __version__
from . import hamiltonian as hm
from . import lindblad as lb
from .errors import KaneSimError


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return v


def _rate(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be non-negative: {text!r}")
    return v


def _t2(text):
    """A dephasing time in seconds; ``inf`` disables the channel."""
    return None if text.strip().lower() in ("inf", "none") else _positive_float(text)


def _rates(args) -> lb.DephasingRates:
    ge = args.gamma_e if args.gamma_e is not None else lb.DephasingRates.from_t2(t2e=args.t2e).gamma_e
    gn = args.gamma_n if args.gamma_n is not None else lb.DephasingRates.from_t2(t2n=args.t2n).gamma_n
    return lb.DephasingRates(ge, gn)


def _add_rate_flags(p, t2e_default, t2n_default):
    p.add_argument("--t2e", type=_t2, default=t2e_default,
                   help=f"electron dephasing time in s, or inf (default {t2e_default})")
    p.add_argument("--t2n", type=_t2, default=t2n_default,
                   help=f"nuclear dephasing time in s, or inf (default {t2n_default})")
    p.add_argument("--gamma-e", type=_rate, help="electron dephasing rate in 1/s (overrides --t2e)")
    p.add_argument("--gamma-n", type=_rate, help="nuclear dephasing rate in 1/s (overrides --t2n)")


def cmd_free_evolution(args) -> int:
    from .sweep import run_free_evolution

    res = run_free_evolution(args.t2n, args.duration, args.samples, t2e=args.t2e, model=args.model)
    _emit(res.to_csv(), args.output)
    return 0


def cmd_gate(args) -> int:
    from .fidelity import format_table, gate_error_suite, records_to_csv
    from .pulses import PulseSequence, gate_sequence

    params = hm.preset(args.preset)
    seq = PulseSequence.load(args.sequence) if args.sequence else gate_sequence(args.name, params)
    rates = _rates(args)
    probes = args.probe or None
    systematic = gate_error_suite(seq, rates=lb.DephasingRates(), probes=probes)
    chosen = gate_error_suite(seq, rates=rates, probes=probes)
    title = (f"{seq.target_gate.label} gate error (duration {seq.total_duration * 1e6:.3f} us; "
             f"gamma_e = {rates.gamma_e:.6g} 1/s, gamma_n = {rates.gamma_n:.6g} 1/s)")
    print(format_table(systematic, chosen, title=title))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            records_to_csv(systematic + chosen, fh)
    return 0


def cmd_sweep(args) -> int:
    from .sweep import RunConfig, SweepGrid, run_sweep

    if args.config:
        config = RunConfig.load(args.config)
    else:
        config = RunConfig()
    gate = args.gate or config.grid.gate
    probes = tuple(args.probe) if args.probe else config.grid.probes
    if args.grid_log:
        lo, hi, n = args.grid_log
        if n != int(n):
            raise KaneSimError("--grid-log point count must be an integer")
        grid = SweepGrid.log(lo, hi, int(n), gate, probes)
    elif args.config:
        grid = SweepGrid(config.grid.gamma_e_values, config.grid.gamma_n_values, gate, probes)
    else:
        grid = SweepGrid.default(gate, probes)
    changes = {name: getattr(args, name) for name in ("output", "summary", "workers", "preset", "sequence_file")
               if getattr(args, name) is not None}
    config = dataclasses.replace(config, grid=grid, **changes)
    if config.output is None:
        config.output = f"sweep_{grid.gate.lower()}.csv"
    records = run_sweep(config)
    print(f"wrote {len(records)} rows to {config.output}", file=sys.stderr)
    return 0


def cmd_calibrate(args) -> int:
    from .pulses import fixture_path, gate_sequence

    params = hm.preset(args.preset)
    kwargs = {"seed": args.seed}
    if args.tol is not None:
        kwargs["tol"] = args.tol
    if args.starts is not None:
        kwargs["starts"] = args.starts
    seq = gate_sequence(args.gate, params, use_fixture=False, **kwargs)
    seq = seq.replace(preset=args.preset)
    out = args.output or (str(fixture_path(args.gate)) if args.install else None)
    text = seq.to_json() + "\n"
    _emit(text, out)
    info = seq.calibration
    print(f"{seq.target_gate.label}: duration {seq.total_duration * 1e6:.4f} us, "
          f"max probe error {info['max_error']:.3e}", file=sys.stderr)
    return 0


def cmd_params_show(args) -> int:
    params = hm.preset(args.preset)
    if args.json:
        print(params.to_json())
        return 0
    width = max(len(r[0]) for r in hm.TABLE1_ROWS)
    for desc, sym, value in hm.TABLE1_ROWS:
        print(f"{desc:<{width}}  {sym:<5} {value}")
    return 0


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kanesim", description="Dephasing simulator for Kane donor qubits.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("free-evolution", help="free precession of |down +> under dephasing")
    p.add_argument("--t2n", type=_t2, default=1.0, help="nuclear dephasing time in s (default 1)")
    p.add_argument("--t2e", type=_t2, default=None, help="electron dephasing time in s (default: none)")
    p.add_argument("--duration", type=_positive_float, default=4.0, help="total time in s (default 4)")
    p.add_argument("--samples", type=int, default=101, help="number of sample times (default 101)")
    p.add_argument("--model", choices=("nucleus", "hyperfine"), default="nucleus",
                   help="Zeeman-only nucleus or hyperfine-coupled donor (default nucleus)")
    p.add_argument("--output", "-o", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_free_evolution)

    p = sub.add_parser("gate", help="error table of a calibrated gate")
    p.add_argument("--name", required=True, help="z, x, cnot, swap or cz")
    _add_rate_flags(p, lb.TYPICAL_T2E, lb.TYPICAL_T2N)
    p.add_argument("--probe", action="append", help="restrict to this probe label (repeatable)")
    p.add_argument("--preset", default="table1")
    p.add_argument("--sequence", help="pulse-sequence JSON to use instead of the shipped one")
    p.add_argument("--csv", help="also write the records as CSV")
    p.set_defaults(func=cmd_gate)

    p = sub.add_parser("sweep", help="gate error over a dephasing-rate grid")
    p.add_argument("--gate", help="gate name (default CNOT or the config's gate)")
    p.add_argument("--probe", action="append", help="probe label (repeatable; default all probes)")
    p.add_argument("--grid-log", nargs=3, type=_positive_float, metavar=("LO", "HI", "N"),
                   help="N log-spaced rates from LO to HI on both axes")
    p.add_argument("--config", help="RunConfig JSON file")
    p.add_argument("--output", "-o", help="CSV path (default sweep_<gate>.csv)")
    p.add_argument("--summary", help="JSON summary path")
    p.add_argument("--workers", type=int, help="worker processes (default: KANESIM_WORKERS or all cores)")
    p.add_argument("--preset", help="parameter preset (default table1)")
    p.add_argument("--sequence", dest="sequence_file", help="pulse-sequence JSON to sweep")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="calibrate a gate and write its pulse sequence")
    p.add_argument("--gate", required=True, help="z, x, cnot, swap, cz or e.g. 'x(pi/2)'")
    p.add_argument("--preset", default="table1")
    p.add_argument("--seed", type=int, default=20240601)
    p.add_argument("--starts", type=int, help="maximum number of random restarts")
    p.add_argument("--tol", type=_positive_float, help="required maximum probe error")
    p.add_argument("--output", "-o", help="JSON path (default stdout)")
    p.add_argument("--install", action="store_true", help="write into the package's fixture directory")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("params", help="parameter presets")
    psub = p.add_subparsers(dest="params_command", required=True)
    q = psub.add_parser("show", help="print a preset")
    q.add_argument("--preset", default="table1")
    q.add_argument("--json", action="store_true", help="print every field as JSON")
    q.set_defaults(func=cmd_params_show)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return int(args.func(args))
    except (KaneSimError, OSError, json.JSONDecodeError) as exc:
        print(f"kanesim: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
