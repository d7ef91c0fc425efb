"""Command-line entry point ``nvpdmr``.

Exit codes: 0 success, 1 usage error, 2 invalid input, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from . import detector as det
from . import sensitivity as sens
from .config import ConfigError, config_digest, load_config, parse_config
from .experiments import KINDS, run_experiment
from .results import RunManifest, write_results
from .sequence import SequenceError, format_sequence, parse_sequence

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class OutputError(RuntimeError):
    pass


def _write(fn, *args):
    try:
        return fn(*args)
    except OSError as exc:
        raise OutputError(f"cannot write output: {exc}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser():
    parser = _Parser(prog="nvpdmr", description="Simulate and analyse photoelectric NV magnetic resonance.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(KINDS + ("sensitivity", "noise", "parse")) + "}",
                                parser_class=_Parser)
    sub.required = True

    def common(p, out_help):
        p.add_argument("--config", type=Path, help="YAML configuration file (defaults apply otherwise)")
        p.add_argument("--out", type=Path, help=out_help)
        p.add_argument("--seed", type=int, help="override the configured seed")

    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} sweep")
        common(p, "result table path (default: <kind>.csv)")
        p.add_argument("--workers", type=int, default=1, help="worker threads for sweep points")
    p = sub.add_parser("sensitivity", help="sensitivity estimates next to reference values")
    common(p, "optional JSON output")
    p.add_argument("--duty", type=float, default=0.25)
    p = sub.add_parser("noise", help="detector noise budget")
    common(p, "optional JSON output")
    p.add_argument("--current", type=float, default=75e-12, help="mean photocurrent in A")
    p.add_argument("--resistance", type=float, default=det.DEFAULT_RESISTANCE)
    p = sub.add_parser("parse", help="check a sequence file and print its canonical form")
    p.add_argument("sequence", type=Path)
    common(p, "write the canonical form here")
    return parser


def _config(args, kind=None):
    if args.config is None:
        cfg = parse_config("", kind)
    else:
        cfg = load_config(args.config, kind)
    if args.seed is not None:
        cfg = cfg.with_(seed=args.seed)
    return cfg


def _print_table(rows, out):
    width = max(len(r[0]) for r in rows)
    for label, value in rows:
        print(f"{label:<{width}}  {value}", file=out)


def _cmd_experiment(args, out):
    cfg = _config(args, args.command)
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    manifest = RunManifest(config_digest(cfg), cfg.seed).start()
    result = run_experiment(cfg, workers=args.workers)
    manifest.finish()
    path = args.out or Path(f"{args.command}.csv")
    written = _write(write_results, result, path, manifest)
    fit = result.fit
    print(f"{result.kind}: {len(result.sweep_values)} points, fit {fit.model} "
          f"{'converged' if fit.converged else 'did not converge'}", file=out)
    for name, value in fit.params.items():
        print(f"  {name} = {value:.6g} +- {fit.uncertainties[name]:.2g}", file=out)
    print("wrote " + ", ".join(str(p) for p in written), file=out)
    if not fit.converged:
        print(f"warning: {fit.message}", file=sys.stderr)
    return EXIT_OK


def _cmd_sensitivity(args, out):
    cfg = _config(args)
    rows = sens.comparison_table(cfg.nv.linewidth_fwhm, cfg.nv.contrast_cw, args.duty)
    table = [("quantity", "computed  reference  deviation")]
    for r in rows:
        table.append((r.label, f"{r.computed:.3e} T/rtHz  {r.reference:.3e}  {r.relative_deviation:+.1%}"))
    table.append(("carrier rate at 75 pA", f"{sens.carrier_rate_from_current(75e-12):.3e} /s"))
    table.append((f"PLSD penalty (duty {args.duty:g})", f"{sens.plsd_penalty(args.duty):.6f}"))
    _print_table(table, out)
    if args.out:
        _write(args.out.write_text, json.dumps([r.__dict__ for r in rows], indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _cmd_noise(args, out):
    cfg = _config(args)
    budget = det.noise_budget(args.current, args.resistance, cfg=cfg.ipcd)
    f = 1e15
    _print_table([
        ("current", f"{args.current * 1e12:.4g} pA"),
        ("shot", f"{budget.shot * f:.2f} fA/rtHz"),
        ("johnson", f"{budget.johnson * f:.2f} fA/rtHz ({args.resistance:.3g} ohm)"),
        ("quantization", f"{budget.quantization * f:.2f} fA/rtHz"),
        ("total", f"{budget.total * f:.2f} fA/rtHz"),
        ("dominant", budget.dominant()),
    ], out)
    if args.out:
        _write(args.out.write_text, json.dumps(budget.__dict__, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _cmd_parse(args, out):
    try:
        text = args.sequence.read_text(encoding="utf-8")
    except OSError as exc:
        raise FileNotFoundError(str(exc)) from None
    canon = format_sequence(parse_sequence(text))
    if args.out:
        _write(args.out.write_text, canon)
    else:
        out.write(canon)
    return EXIT_OK


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if not exc.code else EXIT_USAGE
    handler = {"sensitivity": _cmd_sensitivity, "noise": _cmd_noise, "parse": _cmd_parse}.get(
        args.command, _cmd_experiment)
    try:
        return handler(args, out)
    except UsageError as exc:
        print(f"nvpdmr: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OutputError as exc:
        print(f"nvpdmr: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ConfigError, SequenceError, FileNotFoundError, ValueError) as exc:
        print(f"nvpdmr: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"nvpdmr: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
