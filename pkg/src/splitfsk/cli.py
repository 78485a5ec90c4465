"""Command-line entry point: ``splitfsk <command> [--config C] [--seed S] [--out DIR]``."""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import experiments as ex
from .errors import SplitFSKError
from .transient import peak_tones, transition_run, write_waveforms_csv


def _analyze(cfg, args):
    report = ex.circuit_report(cfg)
    path = os.path.join(args.out, "analyze.json")
    os.makedirs(args.out, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(ex._jsonable(report), fh, indent=2, sort_keys=True)
    return {"written": [path], "peaks": ex._jsonable(report["peaks"])}


def _record(runner, stem=None):
    def run(cfg, args):
        rec = runner(cfg)
        paths = rec.write(args.out, stem)
        return {"written": list(paths), **{k: v for k, v in rec.metadata().items()
                                             if k in ("experiment", "config_hash", "runtime_s")}}
    return run


def _ber(cfg, args):
    if args.noise_sides:
        return _record(ex.run_noise_side_equivalence)(cfg, args)
    return _record(ex.run_ber_sweep)(cfg, args)


def _transient(cfg, args):
    p = cfg.params()
    f_minus, f_plus = peak_tones(p)
    pair = (f_plus, f_minus) if cfg.transition == "+-" else (f_minus, f_plus)
    kind = "FSK" if cfg.kind == "FSK" else "RFSK_BIPOLAR"
    os.makedirs(args.out, exist_ok=True)
    summary = {}
    for T in cfg.windows:
        run = transition_run(p, *pair, T, kind=kind)
        stem = f"transient_{cfg.transition.replace('+', 'p').replace('-', 'm')}_{T:g}"
        write_waveforms_csv(os.path.join(args.out, stem + ".csv"), run.result)
        summary[repr(T)] = {"eta_T": run.eta_T, "per_phase": run.per_phase.tolist()}
    path = os.path.join(args.out, "transient.json")
    meta = {"tones": [f_minus, f_plus], "transition": cfg.transition, "kind": kind,
            "window_alignment": "window starts at the tone switch; mean over switch phases",
            "windows": summary, "config_hash": cfg.config_hash()}
    with open(path, "w") as fh:
        json.dump(ex._jsonable(meta), fh, indent=2, sort_keys=True)
    return {"written": [path], "windows": ex._jsonable(summary)}


def _decode(cfg, args):
    if args.capture:
        cfg = cfg.replace(capture=args.capture)
    if args.reference:
        cfg = cfg.replace(reference_bits=args.reference)
    return _record(ex.decode_record)(cfg, args)


COMMANDS = {
    "analyze": (_analyze, "circuit report: coefficients, poles, peaks, efficiency"),
    "ber": (_ber, "BER sweep against Es/N0"),
    "mismatch": (_record(ex.run_mismatch_sweep), "BER with mis-estimated coupling"),
    "offpeak": (_record(ex.run_offpeak_cases), "weak coupling and heavy load cases"),
    "efficiency": (_record(ex.run_efficiency_report), "steady-state and transient efficiency"),
    "transient": (_transient, "waveforms and window efficiency after a tone switch"),
    "decode": (_decode, "noncoherent decoding of a capture file"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splitfsk", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default="reference",
                       help="built-in config name or JSON file (default: reference)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", default="results", help="output directory")
        if name == "ber":
            p.add_argument("--noise-sides", action="store_true",
                           help="compare primary-side and secondary-side noise")
        if name == "decode":
            p.add_argument("--capture", help="capture file (overrides the config)")
            p.add_argument("--reference", help="text file of expected bits")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ex.ExperimentConfig.load(args.config)
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        result = COMMANDS[args.command][0](cfg, args)
    except (SplitFSKError, OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    print(json.dumps(ex._jsonable(result), indent=2, sort_keys=True, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
