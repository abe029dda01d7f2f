"""Command-line front end.

Exit codes: 0 success, 1 audit mismatch or failed validation, 2 config
error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys

import numpy as np

from . import __version__
from .config import WEAK_COUPLING_LIMIT, load_config
from .errors import ConfigError, QmeError
from .experiments import run_check, run_evolve, run_ness, run_sweep

log = logging.getLogger("qmeaudit")

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
HEADER_KEYS = ("qmeaudit_version", "command", "config", "config_sha256", "seed", "tolerances",
               "quadrature", "data_sha256")


def _fmt(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def render_table(table):
    """CSV text with a ``#`` provenance header that includes a hash of the body."""
    body = io.StringIO()
    writer = csv.writer(body, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_fmt(v) for v in row])
    body = body.getvalue()
    meta = dict(table.meta)
    header = {"qmeaudit_version": __version__}
    header.update(meta)
    header["data_sha256"] = hashlib.sha256(body.encode()).hexdigest()
    lines = [f"# {k}: {json.dumps(v, sort_keys=True) if not isinstance(v, str) else v}"
             for k, v in header.items()]
    return "\n".join(lines) + "\n" + body


def validate_text(text):
    """Return a list of problems with a result file; empty when it round-trips."""
    header, body = {}, []
    for line in text.splitlines(keepends=True):
        if line.startswith("# ") and not body:
            key, _, value = line[2:].rstrip("\n").partition(": ")
            header[key] = value
        else:
            body.append(line)
    problems = [f"missing provenance field {k!r}" for k in HEADER_KEYS if k not in header]
    if "data_sha256" in header:
        digest = hashlib.sha256("".join(body).encode()).hexdigest()
        if digest != header["data_sha256"]:
            problems.append("data hash does not match the table body")
    if body:
        widths = {len(r) for r in csv.reader(io.StringIO("".join(body)))}
        if len(widths) > 1:
            problems.append("table is not rectangular")
    else:
        problems.append("empty table")
    return problems


def _emit(text, out):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _matrix_text(table, mismatches):
    rows = table.as_dicts()
    kinds = list(dict.fromkeys(r["qme"] for r in rows))
    conditions = list(dict.fromkeys(r["condition"] for r in rows))
    cell = {(r["condition"], r["qme"]): r for r in rows}
    width = max(len(c) for c in conditions) + 2
    lines = ["".ljust(width) + "".join(k.ljust(10) for k in kinds)]
    for cond in conditions:
        parts = []
        for k in kinds:
            r = cell.get((cond, k))
            text = "-" if r is None else r["observed"] + ("" if r["match"] else "!")
            parts.append(text.ljust(10))
        lines.append(cond.ljust(width) + "".join(parts))
    lines.append("OK" if not mismatches else f"MISMATCH {mismatches[0]}")
    return "\n".join(lines) + "\n"


def build_parser():
    parser = argparse.ArgumentParser(prog="qmeaudit", description="Weak-coupling master equation audits.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("ness", "steady state of each QME"), ("sweep", "parameter sweep"),
                       ("check", "QME condition matrix"), ("evolve", "time evolution")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="JSON experiment file")
        p.add_argument("--out", help="CSV output path (default stdout)")
        p.add_argument("--qme", help="comma-separated subset of re,lle,ele,ule")
        p.add_argument("--seed", type=int, help="seed for random state panels")
    p = sub.add_parser("validate", help="verify the provenance header of a result file")
    p.add_argument("path")
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)

    if args.command == "validate":
        try:
            with open(args.path) as fh:
                problems = validate_text(fh.read())
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        for p in problems:
            print(f"invalid: {p}", file=sys.stderr)
        return EXIT_MISMATCH if problems else EXIT_OK

    overrides = {"qme": args.qme.split(",") if args.qme else None, "seed": args.seed}
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.weak_coupling_warning:
        log.warning("epsilon >= %g: weak-coupling regime questionable", WEAK_COUPLING_LIMIT)

    try:
        if args.command == "ness":
            table, mismatches = run_ness(cfg), []
        elif args.command == "sweep":
            if cfg.sweep is None:
                print("config error: sweep: missing required block", file=sys.stderr)
                return EXIT_CONFIG
            table, mismatches = run_sweep(cfg), []
        elif args.command == "evolve":
            table, mismatches = run_evolve(cfg), []
        else:
            table, mismatches = run_check(cfg)
    except (QmeError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    _emit(render_table(table), args.out)
    if args.command == "check":
        sys.stderr.write(_matrix_text(table, mismatches))
        return EXIT_MISMATCH if mismatches else EXIT_OK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
