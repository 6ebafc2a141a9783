import csv
import io
import json

import pytest

from metavault import bench
from metavault.bench import (
    BenchConfig,
    BenchmarkError,
    BenchReport,
    QueryStats,
    emit_report,
    q5_warnings,
    run_benchmark,
    stats_csv,
)


def test_config_validation():
    for bad in ({"repetitions": 0}, {"scale": 0}, {"warmups": -1}, {"queries": ("Q9",)}):
        with pytest.raises(ValueError):
            BenchConfig(**bad)


def test_stats():
    s = QueryStats("relational", "Q1", (1.0, 2.0, 6.0))
    assert (s.min, s.mean, s.max) == (1.0, 3.0, 6.0)
    assert s.stdev == pytest.approx((14 / 3) ** 0.5)


def test_single_repetition(loaded1):
    rep = run_benchmark(BenchConfig(repetitions=1, warmups=0), loaded1)
    for s in rep.stats.values():
        assert s.min == s.mean == s.max
        assert s.stdev == 0


def test_sample_counts_and_order(loaded1):
    rep = run_benchmark(BenchConfig(repetitions=3, warmups=1), loaded1)
    assert len(rep.stats) == 10
    assert sum(len(s.samples_us) for s in rep.stats.values()) == 30
    for s in rep.stats.values():
        assert s.min <= s.mean <= s.max
    assert set(rep.storage) == {"relational", "document"}


def test_oracle_mismatch_aborts(loaded1, monkeypatch):
    monkeypatch.setattr(bench, "oracle_link_ids", lambda *a, **k: ["LD9999999"])
    with pytest.raises(BenchmarkError):
        run_benchmark(BenchConfig(repetitions=1, warmups=0, queries=("Q1",)), loaded1)


def test_q5_soft_check_reports_warning():
    rep = BenchReport(BenchConfig(repetitions=1, backends=("document",)))
    for q, v in zip(("Q1", "Q2", "Q3", "Q4", "Q5"), (1.0, 1.0, 9.0, 1.0, 5.0)):
        rep.stats[("document", q)] = QueryStats("document", q, (v,))
    warnings = q5_warnings(rep)
    assert len(warnings) == 1 and "Q3" in warnings[0]


def test_emit_report(loaded1, tmp_path):
    rep = run_benchmark(BenchConfig(repetitions=2, warmups=0), loaded1)
    paths = {p.name for p in emit_report(rep, tmp_path)}
    assert {"bench.csv", "bench_plot.dat", "storage.csv", "storage_relational.csv",
            "storage_document.csv", "environment.json"} <= paths
    table = list(csv.DictReader(io.StringIO((tmp_path / "bench.csv").read_text())))
    assert len(table) == 2 * 5 * 4
    groups = {(r["backend"], r["query"]) for r in table}
    assert len(groups) == 10
    storage = (tmp_path / "storage.csv").read_text().splitlines()
    assert storage[0] == "entity,relational,document"
    assert len(storage) == 1 + 12 + 1
    plot = (tmp_path / "bench_plot.dat").read_text().split("\n\n")
    assert len(plot) == 10
    assert all(len(b.strip().splitlines()) == 3 for b in plot)
    env = json.loads((tmp_path / "environment.json").read_text())
    assert env["environment"]["repetitions"] == 2


def test_empty_query_set_header_only(loaded1):
    rep = run_benchmark(BenchConfig(repetitions=1, warmups=0, queries=()), loaded1)
    assert stats_csv(rep).splitlines() == ["backend,query,statistic,value_us,samples"]


def test_stress_mode_checks_reads():
    fixture = bench.build_fixture(1)
    rep = run_benchmark(BenchConfig(repetitions=1, warmups=0, stress_readers=2), fixture)
    assert rep.stress["checked_reads"] > 0
    assert fixture.catalog.primary.count("Link_Document") == 245 + rep.stress["writes"]


def test_compare_kernels_agree():
    rows = bench.compare_kernels(scale=1, repetitions=1)
    assert {r[0] for r in rows} == set(bench.kernels.available())
    assert all(r[2] > 0 for r in rows)


@pytest.mark.slow
def test_scale_ten_report():
    fixture = bench.build_fixture(10)
    assert fixture.catalog.primary.count("Link_Document") == 2450
    rep = run_benchmark(BenchConfig(repetitions=1, warmups=0, scale=10), fixture)
    assert len(rep.stats) == 10
