"""Command-line interface.

Payload (JSON lines, CSV, schema text) goes to stdout, diagnostics to stderr.
The catalog directory is ``--data-dir``, else ``$METAVAULT_DATA_DIR``, else
``./.metavault``. Commands that write take an exclusive advisory lock on the
directory; readers take a shared one.

Exit codes: 0 success, 2 usage error, 3 data error, 4 integrity error,
5 oracle mismatch.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import fcntl
import json
import logging
import os
import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

from . import __version__
from .catalog import LATEST, Catalog
from .vault import (
    KINDS,
    TEXT,
    HubDef,
    IntegrityError,
    SatelliteDef,
    SchemaError,
    VaultError,
    define_schema_tectoniq,
    dump_schema,
    evolve_add_hub,
    evolve_add_satellite,
    load_schema,
    parse_iso,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INTEGRITY = 4
EXIT_ORACLE = 5

ENV_DATA_DIR = "METAVAULT_DATA_DIR"
DEFAULT_DATA_DIR = ".metavault"
LOCK_FILE = ".lock"

log = logging.getLogger("metavault")


class UsageError(Exception):
    pass


def data_dir(args) -> Path:
    return Path(args.data_dir or os.environ.get(ENV_DATA_DIR) or DEFAULT_DATA_DIR)


@contextlib.contextmanager
def locked(directory: Path, exclusive: bool):
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / LOCK_FILE, "a+") as fh:
        try:
            fcntl.flock(fh, (fcntl.LOCK_EX if exclusive else fcntl.LOCK_SH) | fcntl.LOCK_NB)
        except BlockingIOError:
            raise VaultError(f"catalog {directory} is locked by another process") from None
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def _open(args) -> Catalog:
    return Catalog.open(data_dir(args))


def _parse_instant(text: str) -> datetime:
    try:
        return parse_iso(text if "T" in text else text + "T00:00:00Z")
    except ValueError:
        raise UsageError(f"invalid instant {text!r}: expected ISO 8601") from None


# schema

def cmd_schema_init(args, out) -> int:
    directory = data_dir(args)
    if args.schema_file:
        schema = load_schema(Path(args.schema_file).read_text(encoding="utf-8"))
    else:
        schema = define_schema_tectoniq()
    with locked(directory, exclusive=True):
        if (directory / "schema.txt").exists() and not args.force:
            raise VaultError(f"catalog already initialized at {directory} (use --force)")
        Catalog.in_memory(schema).save(directory)
    out.write(dump_schema(schema))
    log.info("initialized catalog at %s", directory)
    return EXIT_OK


def _attribute(spec: str) -> tuple:
    name, _, kind = spec.partition(":")
    kind = kind or TEXT
    if not name or kind not in KINDS:
        raise UsageError(f"bad --attr {spec!r}: expected NAME[:{'|'.join(KINDS)}]")
    return name, kind


def cmd_schema_evolve(args, out) -> int:
    directory = data_dir(args)
    with locked(directory, exclusive=True):
        catalog = _open(args)
        schema = catalog.schema
        if args.add_hub:
            schema = evolve_add_hub(schema, HubDef(args.add_hub, args.key_source or "natural"))
        if args.add_satellite:
            if not args.parent or not args.attr:
                raise UsageError("--add-satellite needs --parent and at least one --attr")
            sat = SatelliteDef(args.add_satellite, args.parent,
                               tuple(_attribute(a) for a in args.attr))
            schema = evolve_add_satellite(schema, sat, category=args.category)
        if schema is catalog.schema:
            raise UsageError("nothing to evolve: give --add-hub and/or --add-satellite")
        catalog.evolve(schema)
        catalog.save(directory)
    out.write(dump_schema(schema))
    return EXIT_OK


def cmd_schema_show(args, out) -> int:
    with locked(data_dir(args), exclusive=False):
        path = data_dir(args) / "schema.txt"
        if not path.exists():
            raise VaultError(f"no catalog at {data_dir(args)}")
        out.write(dump_schema(load_schema(path.read_text(encoding="utf-8"))))
    return EXIT_OK


# ingest / query / export / report

def _next_instant(catalog: Catalog) -> datetime:
    b = catalog.primary
    latest = None
    for name in b.entities:
        for rec in b.records(name):
            when = rec.datetime
            if latest is None or when > latest:
                latest = when
    if latest is None:
        return datetime(2020, 1, 1, tzinfo=timezone.utc)
    return latest + timedelta(milliseconds=1)


def cmd_ingest(args, out) -> int:
    from .etl import LoadClock, load_manifest, run_etl

    directory = data_dir(args)
    manifest = load_manifest(args.manifest)
    with locked(directory, exclusive=True):
        catalog = _open(args)
        start = _parse_instant(args.at) if args.at else _next_instant(catalog)
        report = run_etl(manifest, catalog, LoadClock(start), workers=args.workers)
        catalog.save(directory)
    body = report.to_dict()
    body.pop("elapsed_s")
    out.write(json.dumps(body, sort_keys=True) + "\n")
    for w in report.warnings:
        log.warning("%s", w)
    for uri, msg in report.failures:
        log.error("failed: %s", msg)
    log.info("ingested %d documents (%d instances) in %.3f s",
             report.documents, report.instances, report.elapsed)
    if report.integrity_failures:
        return EXIT_INTEGRITY
    return EXIT_DATA if report.failures else EXIT_OK


def cmd_query(args, out) -> int:
    from .query import QueryError, execute, parse_query, plan

    try:
        predicates = parse_query(args.expr)
    except QueryError as exc:
        raise UsageError(str(exc)) from None
    with locked(data_dir(args), exclusive=False):
        catalog = _open(args)
        as_of = _parse_instant(args.as_of) if args.as_of else LATEST
        try:
            p = plan(catalog.schema, predicates, two_phase=args.two_phase, as_of=as_of)
        except QueryError as exc:
            raise UsageError(str(exc)) from None
        result = execute(p, catalog.backend(args.backend))
    out.write(result.to_json_lines())
    log.info("%d rows (%s)", len(result), ", ".join(p.entities))
    return EXIT_OK


def cmd_export(args, out) -> int:
    with locked(data_dir(args), exclusive=False):
        catalog = _open(args)
        if not catalog.schema.has(args.entity):
            raise SchemaError(f"unknown entity {args.entity!r}")
        text = catalog.backend("document").export_documents(args.entity)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        log.info("wrote %s", args.output)
    else:
        out.write(text)
    return EXIT_OK


def cmd_report(args, out) -> int:
    from .bench import BenchConfig, BenchReport, storage_table

    with locked(data_dir(args), exclusive=False):
        catalog = _open(args)
        if args.backend:
            out.write(catalog.backend(args.backend).storage_report().to_csv())
            return EXIT_OK
        report = BenchReport(BenchConfig(repetitions=1))
        report.storage = {b.kind: b.storage_report() for b in catalog.backends}
    out.write(storage_table(report))
    return EXIT_OK


# bench / generate

def _bench_config(args):
    from .bench import BenchConfig

    fields = {}
    if args.config:
        try:
            fields = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read bench config {args.config}: {exc}") from None
        known = {f.name for f in dataclasses.fields(BenchConfig)}
        unknown = set(fields) - known
        if unknown:
            raise UsageError(f"unknown bench config keys: {', '.join(sorted(unknown))}")
    for name in ("repetitions", "warmups", "scale", "seed", "stress_readers"):
        value = getattr(args, name)
        if value is not None:
            fields[name] = value
    if args.queries:
        fields["queries"] = args.queries.split(",")
    if args.backends:
        fields["backends"] = args.backends.split(",")
    for name in ("queries", "backends"):
        if name in fields:
            fields[name] = tuple(fields[name])
    try:
        return BenchConfig(**fields)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad bench config: {exc}") from None


def cmd_bench(args, out) -> int:
    from .bench import build_fixture, emit_report, run_benchmark, stats_csv

    config = _bench_config(args)
    log.info("building scale-%d fixture", config.scale)
    fixture = build_fixture(config.scale, config.seed, config.backends)
    report = run_benchmark(config, fixture)
    paths = emit_report(report, args.output)
    for w in report.warnings:
        log.warning("%s", w)
    for p in paths:
        log.info("wrote %s", p)
    out.write(stats_csv(report))
    return EXIT_OK


def cmd_generate(args, out) -> int:
    from .corpus import generate_scaled_corpus, write_corpus

    if args.scale < 1:
        raise UsageError("--scale must be >= 1")
    corpus = generate_scaled_corpus(args.scale, args.seed)
    manifest = write_corpus(corpus, args.directory)
    out.write(json.dumps({"manifest": str(manifest), "documents": len(corpus.documents),
                          "instances": corpus.instances}, sort_keys=True) + "\n")
    return EXIT_OK


# parser

def build_parser() -> argparse.ArgumentParser:
    from .corpus import DEFAULT_SEED
    from .storage import BACKEND_KINDS

    ap = argparse.ArgumentParser(prog="metavault", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--data-dir", help=f"catalog directory (default ${ENV_DATA_DIR} or "
                                       f"./{DEFAULT_DATA_DIR})")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    schema = sub.add_parser("schema", help="create, evolve or print the vault schema")
    ssub = schema.add_subparsers(dest="schema_command", required=True, metavar="ACTION")
    p = ssub.add_parser("init", help="create an empty catalog")
    p.add_argument("--schema-file", help="schema text file (default: the built-in schema)")
    p.add_argument("--force", action="store_true", help="replace an existing catalog")
    p.set_defaults(func=cmd_schema_init)
    p = ssub.add_parser("evolve", help="add a hub and/or a satellite")
    p.add_argument("--add-hub", metavar="NAME")
    p.add_argument("--key-source", metavar="FIELD")
    p.add_argument("--add-satellite", metavar="NAME")
    p.add_argument("--parent", metavar="ENTITY")
    p.add_argument("--attr", action="append", metavar="NAME[:KIND]")
    p.add_argument("--category", metavar="LABEL", help="dispatch this category label to the "
                                                      "new satellite")
    p.set_defaults(func=cmd_schema_evolve)
    p = ssub.add_parser("show", help="print the current schema")
    p.set_defaults(func=cmd_schema_show)

    p = sub.add_parser("ingest", help="load a corpus manifest into the catalog")
    p.add_argument("manifest")
    p.add_argument("--workers", type=int, default=1, help="extraction threads")
    p.add_argument("--at", metavar="INSTANT", help="first load timestamp (default: after the "
                                                   "catalog's latest record)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("query", help="run a conjunctive query, JSON lines out")
    p.add_argument("expr")
    p.add_argument("--two-phase", action="store_true")
    p.add_argument("--backend", choices=BACKEND_KINDS, default=BACKEND_KINDS[0])
    p.add_argument("--as-of", metavar="INSTANT")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("export", help="document-backend JSON export of one entity")
    p.add_argument("entity")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("bench", help="latency benchmark on a generated corpus")
    p.add_argument("--config", help="JSON file with bench settings")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--warmups", type=int)
    p.add_argument("--scale", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--queries", help="comma-separated subset of Q1..Q5")
    p.add_argument("--backends", help=f"comma-separated subset of {','.join(BACKEND_KINDS)}")
    p.add_argument("--stress-readers", type=int, help="also run N concurrent checked readers")
    p.add_argument("-o", "--output", default="bench-report", help="report directory")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="storage report CSV")
    p.add_argument("--backend", choices=BACKEND_KINDS)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("generate", help="write a synthetic corpus and its manifest")
    p.add_argument("directory")
    p.add_argument("--scale", type=int, default=1)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_generate)
    return ap


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="metavault: %(levelname)s: %(message)s", stream=sys.stderr)
    from .bench import BenchmarkError

    try:
        return args.func(args, out)
    except UsageError as exc:
        print(f"metavault: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BenchmarkError as exc:
        print(f"metavault: oracle mismatch: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except IntegrityError as exc:
        print(f"metavault: integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (VaultError, OSError) as exc:
        print(f"metavault: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
