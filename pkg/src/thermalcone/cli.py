"""Command-line interface: run, suite, anchor, schema.

Exit codes: 0 all checks passed; 2 validation error; 3 numerical-accuracy
failure; 4 verdict mismatch with the scenario's expectations; 5 I/O error.
The cache directory comes from --cache-dir, the THERMALCONE_CACHE_DIR
environment variable, or ~/.cache/thermalcone, in that order.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from . import fields as fl
from . import harness
from . import microlocal as ml
from . import quadrature as quad
from .schema import schema_json


def _add_cache_args(p):
    p.add_argument("--cache-dir", type=Path, default=None, help="report cache directory")
    p.add_argument("--no-cache", action="store_true", help="bypass the report cache")


def _cache_dir(args):
    return args.cache_dir if args.cache_dir is not None else harness.default_cache_dir()


def build_parser():
    parser = argparse.ArgumentParser(
        prog="thermalcone",
        description="Thermal two-point functions and wave-front cone scans",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario config")
    p_run.add_argument("config", type=Path, help="scenario JSON (or a catalog name)")
    p_run.add_argument("--out", type=Path, default=None, help="report JSON path")
    p_run.add_argument("--csv-dir", type=Path, default=None, help="CSV output directory")
    _add_cache_args(p_run)

    p_suite = sub.add_parser("suite", help="run the scenario catalog")
    p_suite.add_argument("--filter", default="*", help="glob over scenario names")
    p_suite.add_argument("--jobs", type=int, default=1, help="parallel scenario workers")
    p_suite.add_argument("--out-dir", type=Path, default=None, help="emit reports here")
    _add_cache_args(p_suite)

    p_anchor = sub.add_parser(
        "anchor", help="run the vacuum scans and persist the slot convention"
    )
    _add_cache_args(p_anchor)

    sub.add_parser("schema", help="print the JSON report schema")
    return parser


def _cmd_run(args) -> int:
    try:
        if args.config.exists():
            cfg = harness.ScenarioConfig.from_dict(
                json.loads(args.config.read_text(encoding="utf-8"))
            )
        else:
            catalog = harness.load_catalog()
            name = str(args.config)
            if name not in catalog:
                print(f"no such config file or catalog scenario: {name}", file=sys.stderr)
                return harness.ExitCode.VALIDATION
            cfg = catalog[name]
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return harness.ExitCode.IO
    except fl.ValidationError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return harness.ExitCode.VALIDATION

    try:
        doc = harness.run_scenario(
            cfg, cache_dir=_cache_dir(args), use_cache=not args.no_cache
        )
    except (fl.ValidationError, harness.AnchorMissingError, ml.ConventionError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return harness.ExitCode.VALIDATION
    except (quad.QuadratureAccuracyError, quad.InsufficientSignalError, ml.InconclusiveScanError) as exc:
        print(f"numerical accuracy failure: {exc}", file=sys.stderr)
        return harness.ExitCode.ACCURACY
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return harness.ExitCode.IO

    try:
        out = args.out if args.out is not None else Path(f"{cfg.scenario}.json")
        written = harness.emit_report(doc, out, args.csv_dir)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return harness.ExitCode.IO
    for path in written:
        print(f"wrote {path}")
    for stage, seconds in sorted(doc.timings.items()):
        print(f"  {stage}: {seconds if isinstance(seconds, bool) else round(seconds, 2)}")
    met = doc.payload.get("expectations_met")
    if met is False:
        for f in doc.payload.get("expectation_failures", []):
            print(f"expectation failed: {f}", file=sys.stderr)
        return harness.ExitCode.VERDICT
    print(f"verdicts: {doc.payload['verdicts']}")
    return harness.ExitCode.OK


def _cmd_suite(args) -> int:
    try:
        code, _ = harness.run_suite(
            filter_glob=args.filter,
            jobs=args.jobs,
            cache_dir=_cache_dir(args),
            use_cache=not args.no_cache,
            out_dir=args.out_dir,
        )
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return harness.ExitCode.IO
    return code


def _cmd_anchor(args) -> int:
    catalog = harness.load_catalog()
    cache_dir = _cache_dir(args)
    signs = {}
    for name in ("vacuum-scalar", "vacuum-dirac"):
        try:
            doc = harness.run_scenario(
                catalog[name], cache_dir=cache_dir, use_cache=not args.no_cache
            )
        except ml.ConventionError as exc:
            print(f"anchor failed: {exc}", file=sys.stderr)
            return harness.ExitCode.ACCURACY
        signs[name] = doc.payload["conventions"]["slot_sign"]
        print(f"{name}: slot sign {signs[name]}")
    if len(set(signs.values())) != 1:
        print("anchor inconsistent between scalar and Dirac vacua", file=sys.stderr)
        return harness.ExitCode.ACCURACY
    anchor = harness.load_anchor(cache_dir)
    print(f"anchor persisted: slot sign {anchor.sign} (source {anchor.source})")
    return harness.ExitCode.OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        print(schema_json(), end="")
        return harness.ExitCode.OK
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "suite":
        return _cmd_suite(args)
    if args.command == "anchor":
        return _cmd_anchor(args)
    return harness.ExitCode.VALIDATION


if __name__ == "__main__":
    raise SystemExit(main())
