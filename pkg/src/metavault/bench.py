"""Latency and storage benchmark over the five reference queries.

Each backend runs ``warmups`` untimed rounds, then ``repetitions`` timed
rounds; a round executes the configured queries once each, in order. Every
timed result is checked against the oracle before its sample is kept.
Latencies come from ``time.perf_counter_ns`` and are reported in microseconds.
"""

from __future__ import annotations

import csv
import io
import json
import platform
import statistics
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from . import kernels
from .catalog import Catalog
from .corpus import DEFAULT_SEED, generate_scaled_corpus
from .etl import LoadClock
from .oracle import oracle_link_ids
from .query import QUERY_NAMES, execute, reference_queries, plan
from .storage import BACKEND_KINDS, RelationalBackend
from .vault import DocumentMetadata, TitleBlock, SourceRef, VaultError, define_schema_tectoniq

# Q5 must be slower than each of Q1-Q4 by at least this factor on a backend;
# 1.0 means "strictly slower". Violations are warnings, not failures.
Q5_MARGIN = 1.0
STATISTICS = ("mean", "min", "max", "stdev")


class BenchmarkError(VaultError):
    """A timed run returned a result different from the oracle's."""


@dataclass(frozen=True)
class BenchConfig:
    repetitions: int = 100
    queries: tuple = QUERY_NAMES
    backends: tuple = BACKEND_KINDS
    warmups: int = 3
    scale: int = 1
    seed: int = DEFAULT_SEED
    stress_readers: int = 0

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.scale < 1:
            raise ValueError("scale must be >= 1")
        if self.warmups < 0:
            raise ValueError("warmups must be >= 0")
        unknown = set(self.queries) - set(QUERY_NAMES)
        if unknown:
            raise ValueError(f"unknown queries: {', '.join(sorted(unknown))}")


@dataclass(frozen=True)
class QueryStats:
    backend: str
    query: str
    samples_us: tuple

    @property
    def mean(self) -> float:
        return statistics.fmean(self.samples_us)

    @property
    def min(self) -> float:
        return min(self.samples_us)

    @property
    def max(self) -> float:
        return max(self.samples_us)

    @property
    def stdev(self) -> float:
        return statistics.pstdev(self.samples_us)


@dataclass
class BenchReport:
    config: BenchConfig
    stats: dict = field(default_factory=dict)  # (backend, query) -> QueryStats
    storage: dict = field(default_factory=dict)  # backend -> StorageReport
    environment: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    stress: Optional[dict] = None

    def mean(self, backend: str, query: str) -> float:
        return self.stats[(backend, query)].mean


@dataclass
class Fixture:
    catalog: Catalog
    documents: list
    link_count: int


def build_fixture(scale: int = 1, seed: int = DEFAULT_SEED, kinds=BACKEND_KINDS) -> Fixture:
    corpus = generate_scaled_corpus(scale, seed)
    catalog = Catalog.in_memory(define_schema_tectoniq(), kinds)
    clock = LoadClock()
    for doc in corpus.documents:
        catalog.insert_document(doc, clock())
    return Fixture(catalog, corpus.documents, len(corpus.documents))


def environment_note() -> dict:
    return {
        "python": platform.python_version(),
        "implementation": platform.python_implementation(),
        "platform": platform.platform(),
        "codec": kernels.IMPLEMENTATION,
        "clock": "perf_counter_ns",
        "unit": "us",
        "generated": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def run_benchmark(config: BenchConfig, fixture: Optional[Fixture] = None) -> BenchReport:
    if fixture is None:
        fixture = build_fixture(config.scale, config.seed, config.backends)
    catalog = fixture.catalog
    schema = catalog.schema
    defs = reference_queries()
    plans = {q: plan(schema, *defs[q]) for q in config.queries}
    dispatch = dict(schema.dispatch)
    expected = {q: oracle_link_ids(fixture.documents, defs[q][0], dispatch, defs[q][1])
                for q in config.queries}
    report = BenchReport(config, environment=environment_note())
    report.environment.update(scale=config.scale, seed=config.seed, warmups=config.warmups,
                              repetitions=config.repetitions, links=fixture.link_count)
    clock = time.perf_counter_ns
    for kind in config.backends:
        backend = catalog.backend(kind)
        for _ in range(config.warmups):
            for q in config.queries:
                execute(plans[q], backend)
        samples = {q: [] for q in config.queries}
        for _ in range(config.repetitions):
            for q in config.queries:
                t0 = clock()
                result = execute(plans[q], backend)
                elapsed = clock() - t0
                if result.link_ids != expected[q]:
                    raise BenchmarkError(
                        f"{kind} {q}: {len(result)} rows, oracle expects {len(expected[q])}")
                samples[q].append(elapsed / 1000.0)
        for q in config.queries:
            report.stats[(kind, q)] = QueryStats(kind, q, tuple(samples[q]))
        report.storage[kind] = backend.storage_report()
    report.warnings.extend(q5_warnings(report))
    if config.stress_readers:
        report.stress = stress_readers(catalog, plans, expected, config.stress_readers)
    return report


def q5_warnings(report: BenchReport) -> list:
    out = []
    qs = report.config.queries
    if "Q5" not in qs:
        return out
    for kind in report.config.backends:
        q5 = report.mean(kind, "Q5")
        for q in qs:
            if q == "Q5":
                continue
            other = report.mean(kind, q)
            if not q5 > other * Q5_MARGIN:
                out.append(f"{kind}: Q5 mean {q5:.1f} us is not above {q} mean {other:.1f} us")
    return out


def stress_readers(catalog: Catalog, plans: dict, expected: dict, readers: int,
                   rounds: int = 20, noise: int = 50) -> dict:
    """Run ``readers`` query threads while one writer appends unrelated documents.

    The noise documents match none of the reference predicates, so every read
    must still equal the oracle. Returns counts only; timings are not kept.
    """
    errors, done = [], [0]
    lock = threading.Lock()

    def read():
        try:
            for _ in range(rounds):
                for q, p in plans.items():
                    for b in catalog.backends:
                        got = execute(p, b).link_ids
                        if got != expected[q]:
                            raise BenchmarkError(f"{b.kind} {q}: concurrent read diverged")
                        with lock:
                            done[0] += 1
        except Exception as exc:  # reported, then re-raised by the caller
            errors.append(exc)

    def write():
        clock = LoadClock(datetime(2030, 1, 1, tzinfo=timezone.utc))
        for i in range(noise):
            doc = DocumentMetadata(TitleBlock(f"stress record {i:05d}"), "inventory",
                                   SourceRef(f"stress/{i:05d}"))
            catalog.insert_document(doc, clock())

    threads = [threading.Thread(target=read) for _ in range(readers)]
    threads.append(threading.Thread(target=write))
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    return {"readers": readers, "checked_reads": done[0], "writes": noise}


# reporting

def stats_csv(report: BenchReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["backend", "query", "statistic", "value_us", "samples"])
    for (kind, q), s in report.stats.items():
        for stat in STATISTICS:
            w.writerow([kind, q, stat, f"{getattr(s, stat):.3f}", len(s.samples_us)])
    return buf.getvalue()


def plot_data(report: BenchReport) -> str:
    """Blank-line separated two-column series (repetition, latency_us)."""
    blocks = []
    for (kind, q), s in report.stats.items():
        lines = [f"# {kind} {q}"]
        lines.extend(f"{i} {v:.3f}" for i, v in enumerate(s.samples_us, start=1))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def storage_table(report: BenchReport) -> str:
    """Per-entity total bytes with one column per backend, then a Total row."""
    kinds = list(report.storage)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["entity", *kinds])
    if kinds:
        for e in report.storage[kinds[0]].entities:
            w.writerow([e.entity, *(report.storage[k].entity(e.entity).total_bytes for k in kinds)])
        w.writerow(["Total", *(report.storage[k].total_bytes for k in kinds)])
    return buf.getvalue()


def emit_report(report: BenchReport, directory, formats=("csv", "plot", "storage")) -> list:
    """Write report files under ``directory``; returns the paths written."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []

    def put(name, text):
        path = directory / name
        path.write_text(text, encoding="utf-8")
        out.append(path)

    if "csv" in formats:
        put("bench.csv", stats_csv(report))
    if "plot" in formats:
        put("bench_plot.dat", plot_data(report))
    if "storage" in formats:
        put("storage.csv", storage_table(report))
        for kind, rep in report.storage.items():
            put(f"storage_{kind}.csv", rep.to_csv())
    meta = {"environment": report.environment, "warnings": report.warnings,
            "stress": report.stress}
    put("environment.json", json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return out


# codec comparison

def compare_kernels(scale: int = 4, repetitions: int = 20, seed: int = DEFAULT_SEED) -> list:
    """Time full scans and Q1-Q5 on the relational backend with each codec.

    Returns rows ``(codec, operation, mean_us)``; both codecs must agree on
    every result.
    """
    corpus = generate_scaled_corpus(scale, seed)
    schema = define_schema_tectoniq()
    defs = reference_queries()
    rows, answers = [], {}
    for name in kernels.available():
        backend = RelationalBackend(kernels.load(name))
        catalog = Catalog(schema, backend)
        clock = LoadClock()
        t0 = time.perf_counter_ns()
        for doc in corpus.documents:
            catalog.insert_document(doc, clock())
        rows.append((name, "ingest", (time.perf_counter_ns() - t0) / 1000.0))
        ops = {f"scan {e}": (lambda e=e: backend.records(e)) for e in
               ("Sat_Title", "Link_Document")}
        ops.update({q: (lambda q=q: execute(plan(schema, *defs[q]), backend).link_ids)
                    for q in QUERY_NAMES})
        for op, fn in ops.items():
            result = fn()
            if answers.setdefault(op, result) != result:
                raise BenchmarkError(f"codec {name} disagrees on {op}")
            t0 = time.perf_counter_ns()
            for _ in range(repetitions):
                fn()
            rows.append((name, op, (time.perf_counter_ns() - t0) / 1000.0 / repetitions))
    return rows
