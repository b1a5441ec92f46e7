"""Command-line entry point: ``imddlink <command> [config] [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError
from .core import DEFAULT_FEC_LEDGER, ModulationFormat, net_rate, select_fec
from .harness import Dr8Settings, SweepSpec, WdmSettings, capture_eye, run_link, sweep
from .io import ConfigDocument, OutputError, dump_config, emit_results, load_config, write_eye

log = logging.getLogger("imddlink")

COMMANDS = ("run", "sweep", "wdm", "dr8", "eye", "fec", "validate")


class CliError(Exception):
    pass


def _add_config(p: argparse.ArgumentParser):
    p.add_argument("config_file", nargs="?", metavar="CONFIG", help="YAML config file")
    p.add_argument("--config", dest="config_flag", metavar="CONFIG", help="YAML config file (same as the positional)")


def _add_run_opts(p: argparse.ArgumentParser, jobs: bool = False):
    p.add_argument("--seed", type=int, help="override the base seed")
    p.add_argument("--out-dir", default=".", help="directory for result files (default: .)")
    p.add_argument("--format", choices=("tabular", "structured", "both"), default="both",
                   help="result file format (default: both)")
    if jobs:
        p.add_argument("--jobs", type=int, default=1, help="worker processes for sweep points")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imddlink", description="Desk-scale PAM IM/DD link simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("run", help="simulate one link")
    _add_config(p)
    _add_run_opts(p)

    p = sub.add_parser("sweep", help="run the config's sweep section")
    _add_config(p)
    _add_run_opts(p, jobs=True)

    p = sub.add_parser("wdm", help="run every channel of the WDM grid")
    _add_config(p)
    _add_run_opts(p, jobs=True)
    p.add_argument("--channels", help="comma-separated channel indices (default: all)")

    p = sub.add_parser("dr8", help="run every DR8 lane and report the aggregate rate")
    _add_config(p)
    _add_run_opts(p, jobs=True)

    p = sub.add_parser("eye", help="export an averaged, equalized eye histogram")
    _add_config(p)
    p.add_argument("--seed", type=int, help="override the base seed")
    p.add_argument("--out-dir", default=".", help="directory for eye.txt (default: .)")
    p.add_argument("--averages", type=int, default=10)
    p.add_argument("--no-bt", action="store_true", help="skip the Bessel-Thomson filter")

    p = sub.add_parser("fec", help="pick the FEC code and net rate for a BER (no simulation)")
    p.add_argument("--ber", type=float, required=True)
    p.add_argument("--baud", type=float, required=True, help="symbol rate in GBd")
    p.add_argument("--format", dest="modulation", required=True, help="pam4, pam6 or pam8")

    p = sub.add_parser("validate", help="check a config and echo the effective config")
    _add_config(p)
    return parser


def _load(args) -> ConfigDocument:
    path = args.config_flag or args.config_file
    if path is None:
        raise CliError("no config file given (positional CONFIG or --config)")
    if args.config_flag and args.config_file and args.config_flag != args.config_file:
        raise CliError("config given twice with different paths")
    p = Path(path)
    if not p.is_file():
        raise CliError(f"config file not found: {p}")
    doc = load_config(p)
    seed = getattr(args, "seed", None)
    if seed is not None:
        doc = replace(doc, link=doc.link.evolve(seed=seed))
        if doc.sweep is not None:
            doc = replace(doc, sweep=replace(doc.sweep, base=doc.link))
    return doc


def _emit(results, args, stem: str) -> list[Path]:
    formats = ("tabular", "structured") if args.format == "both" else (args.format,)
    written = []
    for fmt in formats:
        written += emit_results(results, args.out_dir, fmt, stem)
    return written


def _report(results) -> None:
    for r in results:
        label = r.info.get("value", "")
        prefix = f"{r.info.get('variable')}={label} " if label != "" else ""
        if not r.ok:
            print(f"{prefix}FAILED: {r.error}")
            continue
        parts = []
        for name, rep in r.reports.items():
            v = r.verdicts[name]
            fec = f"{v.code.overhead * 100:g}% OH" if v.code else "unrecoverable"
            parts.append(f"{name} BER {rep.ber:.3g} ({fec})")
        print(prefix + "; ".join(parts))


def _cmd_fec(args) -> int:
    try:
        fmt = ModulationFormat.from_name(args.modulation)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    if not 0 <= args.ber <= 1:
        raise CliError("--ber must lie in [0, 1]")
    if not args.baud > 0:
        raise CliError("--baud must be positive")
    code = select_fec(args.ber, DEFAULT_FEC_LEDGER)
    if code is None:
        print(f"unrecoverable: BER {args.ber:g} is above every threshold in the FEC ledger")
        return 0
    print(f"{code.overhead * 100:g}% OH, {net_rate(args.baud, fmt, code):.1f} Gbps")
    return 0


def _dispatch(args) -> int:
    if args.command == "fec":
        return _cmd_fec(args)
    doc = _load(args)
    if args.command == "validate":
        sys.stdout.write(dump_config(doc))
        return 0
    if args.command == "run":
        results = [run_link(doc.link)]
        stem = "run"
    elif args.command == "sweep":
        if doc.sweep is None:
            raise CliError("config has no sweep section")
        results = sweep(doc.sweep, args.jobs)
        stem = f"sweep_{doc.sweep.variable}"
    elif args.command == "wdm":
        wdm = doc.wdm or WdmSettings()
        values = tuple(range(1, wdm.count + 1))
        if args.channels:
            try:
                values = tuple(sorted(int(c) for c in args.channels.split(",")))
            except ValueError:
                raise CliError(f"bad --channels list {args.channels!r}") from None
            if not all(1 <= c <= wdm.count for c in values):
                raise CliError(f"channels must lie in 1..{wdm.count}")
        results = sweep(SweepSpec(doc.link, "wdm_channel", values, wdm=wdm), args.jobs)
        stem = "wdm"
    elif args.command == "dr8":
        dr8 = doc.dr8 or Dr8Settings()
        results = sweep(SweepSpec(doc.link, "dr8_lane", tuple(range(1, dr8.lanes + 1)), dr8=dr8), args.jobs)
        stem = "dr8"
    else:  # eye
        eye = capture_eye(doc.link, averages=args.averages, bt_filter=not args.no_bt)
        path = write_eye(eye, Path(args.out_dir) / "eye.txt")
        print(f"wrote {path}")
        return 0
    _report(results)
    for path in _emit(results, args, stem):
        print(f"wrote {path}")
    return 1 if any(not r.ok for r in results) else 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 with usage on unknown commands
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except CliError as exc:
        print(f"imddlink {args.command}: {exc}", file=sys.stderr)
    except ConfigError as exc:
        print(f"imddlink {args.command}: invalid config:", file=sys.stderr)
        for e in exc.errors:
            print(f"  {e}", file=sys.stderr)
    except OutputError as exc:
        print(f"imddlink {args.command}: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
