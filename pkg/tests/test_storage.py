import json
import threading
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from metavault.catalog import Catalog
from metavault.predicates import ContainsWord, Equals, YearEquals
from metavault.storage import (
    PAGE_SIZE,
    RELATION_HEADER_BYTES,
    DocumentBackend,
    EntityFilter,
    RelationalBackend,
    export_documents,
    import_documents,
    make_backend,
)
from metavault.vault import (
    TEXT,
    HistoryError,
    HubRecord,
    IntegrityError,
    LinkRecord,
    SatelliteDef,
    SatelliteRecord,
    SchemaError,
    define_schema_tectoniq,
    evolve_add_satellite,
    make_business_key,
    identity,
)

T0 = datetime(2021, 3, 1, tzinfo=timezone.utc)
KINDS = ("relational", "document")


def fresh(kind):
    b = make_backend(kind)
    b.init_schema(define_schema_tectoniq())
    return b


def hub(schema, name, natural, at=T0):
    return HubRecord(name, make_business_key(schema.hub(name), natural).value, natural, at, "s")


def canonical(records):
    return sorted(repr(identity(r)) + repr(sorted(getattr(r, "attributes", {}).items()))
                  for r in records)


@pytest.mark.parametrize("kind", KINDS)
def test_init_creates_one_entity_each(kind):
    assert len(fresh(kind).entities) == 12


@pytest.mark.parametrize("kind", KINDS)
def test_reinit_with_evolution_keeps_rows(kind, schema):
    b = fresh(kind)
    b.put_record(hub(schema, "Hub_Title", "a"))
    newer = evolve_add_satellite(schema, SatelliteDef("Sat_New", "Hub_Category", (("X", TEXT),)))
    b.init_schema(newer)
    assert len(b.entities) == 13
    assert b.count("Hub_Title") == 1
    assert b.count("Sat_New") == 0


@pytest.mark.parametrize("kind", KINDS)
def test_non_additive_reinit_rejected(kind, schema):
    b = fresh(kind)
    newer = evolve_add_satellite(schema, SatelliteDef("Sat_New", "Hub_Category", (("X", TEXT),)))
    b.init_schema(newer)
    with pytest.raises(SchemaError):
        b.init_schema(schema)


@pytest.mark.parametrize("kind", KINDS)
def test_round_trip_and_absent(kind, schema):
    b = fresh(kind)
    h = hub(schema, "Hub_Location", "Tourcoing")
    s = SatelliteRecord("Sat_Location", h.key, T0, {"Address": "Tourcoing"}, "s")
    b.put_many([h, s])
    assert b.get_by_key("Hub_Location", h.key) == h
    assert b.get_by_key("Sat_Location", (h.key, T0)) == s
    assert b.get_by_key("Hub_Location", "0" * 16) is None
    assert b.get_by_key("Sat_Location", (h.key, T0 + timedelta(1))) is None


def integrity_cases(schema):
    t = hub(schema, "Hub_Title", "t")
    loc = hub(schema, "Hub_Location", "l")
    cat = hub(schema, "Hub_Category", "book:x")
    members = (("Hub_Title", t.key), ("Hub_Location", loc.key),
               ("Hub_Date", "f" * 16), ("Hub_Category", cat.key))
    sat = SatelliteRecord("Sat_Title", t.key, T0, {"Title": "t"}, "s")
    return {
        "link to absent hub": [t, loc, cat, LinkRecord("Link_Document", "L1", members, T0, "s")],
        "duplicate hub": [t, t],
        "orphan satellite": [sat],
        "duplicate satellite identity": [t, sat, sat],
        "backdated version": [t, sat, SatelliteRecord("Sat_Title", t.key, T0 - timedelta(1),
                                                     {"Title": "u"}, "s")],
        "unknown attribute": [t, SatelliteRecord("Sat_Title", t.key, T0, {"Nope": "x"}, "s")],
        "non-canonical value": [t, SatelliteRecord("Sat_Title", t.key, T0, {"Title": ""}, "s")],
        "wrong member order": [t, loc, cat, hub(schema, "Hub_Date", "d"),
                               LinkRecord("Link_Document", "L1", tuple(reversed(members)), T0,
                                          "s")],
    }


@pytest.mark.parametrize("case", list(integrity_cases(define_schema_tectoniq())))
def test_integrity_parity(case, schema):
    batch = integrity_cases(schema)[case]
    outcomes = []
    for kind in KINDS:
        b = fresh(kind)
        with pytest.raises((IntegrityError, SchemaError)) as info:
            for rec in batch:
                b.put_record(rec)
        outcomes.append(type(info.value))
    assert outcomes[0] is outcomes[1]


def test_backdated_version_is_history_error(schema):
    batch = integrity_cases(schema)["backdated version"]
    b = fresh("document")
    with pytest.raises(HistoryError):
        b.put_many(batch)


@pytest.mark.parametrize("kind", KINDS)
def test_rejected_batch_leaves_no_trace(kind, schema):
    b = fresh(kind)
    t = hub(schema, "Hub_Title", "t")
    with pytest.raises(IntegrityError):
        b.put_many([t, SatelliteRecord("Sat_Title", "0" * 16, T0, {"Title": "x"}, "s")])
    assert b.count("Hub_Title") == 0


@pytest.mark.parametrize("entity", ["Hub_Title", "Link_Document", "Sat_Title", "Sat_Date",
                                    "Sat_Location", "Sat_Book", "Sat_VoixDuNord"])
def test_backends_hold_equal_records(loaded1, entity):
    rel = loaded1.catalog.backend("relational").records(entity)
    doc = loaded1.catalog.backend("document").records(entity)
    assert canonical(rel) == canonical(doc)
    assert len(rel) == loaded1.catalog.primary.count(entity)


WORDS = ["factory", "filature", "tourcoing", "roubaix", "textile", "e", "zzz", "de"]
filters = st.one_of(
    st.builds(lambda w, a: EntityFilter("Sat_Title", (ContainsWord("Sat_Title", a, w),)),
              st.sampled_from(WORDS), st.sampled_from(["Title", "Authors", "Keywords",
                                                       "Description"])),
    st.builds(lambda v: EntityFilter("Sat_Location", (Equals("Sat_Location", "Address", v),)),
              st.sampled_from(["Tourcoing", "roubaix", "Lille", "nowhere"])),
    st.builds(lambda y, w: EntityFilter("Sat_Date", (YearEquals("Sat_Date", "DepositDate", y),
                                                     ContainsWord("Sat_Date", "Epoch", w))),
              st.integers(2003, 2017), st.sampled_from(["siecle", "xix", ""])),
    st.builds(lambda w: EntityFilter("Sat_Book", (ContainsWord("Sat_Book", "Publisher", w),)),
              st.sampled_from(["lille", "paris", "roubaix"])),
    st.just(EntityFilter("Link_Document")),
)


@settings(max_examples=60, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(flt=filters)
def test_scan_equivalence_and_oracle(loaded1, flt):
    rel = list(loaded1.catalog.backend("relational").scan(flt))
    doc = list(loaded1.catalog.backend("document").scan(flt))
    assert canonical(rel) == canonical(doc)
    everything = loaded1.catalog.backend("document").records(flt.entity)
    want = [r for r in everything
            if all(p.matches(r.attributes.get(p.attribute)) for p in flt.predicates)]
    assert canonical(rel) == canonical(want)


def test_scan_rejects_bad_filters(loaded1):
    b = loaded1.catalog.primary
    with pytest.raises(SchemaError):
        list(b.scan(EntityFilter("Sat_Nope")))
    with pytest.raises(SchemaError):
        list(b.scan(EntityFilter("Sat_Title", (ContainsWord("Sat_Title", "Nope", "x"),))))
    with pytest.raises(SchemaError):
        list(b.scan(EntityFilter("Sat_Title", (ContainsWord("Sat_Date", "Epoch", "x"),))))


def test_title_scan_matches_corpus(loaded1, corpus1):
    flt = EntityFilter("Sat_Title", (ContainsWord("Sat_Title", "Title", "factory"),))
    got = {r.attributes["Title"] for r in loaded1.catalog.primary.scan(flt)}
    want = {d.title.title for d in corpus1.documents if "factory" in d.title.title.casefold()}
    assert got == want


def test_relational_page_law(loaded1):
    rep = loaded1.catalog.backend("relational").storage_report()
    assert rep.page_size == PAGE_SIZE
    for e in rep.entities:
        assert e.data_bytes % PAGE_SIZE == 0
        assert e.data_bytes > 0
        assert e.index_bytes > RELATION_HEADER_BYTES
    assert rep.total_bytes == sum(e.total_bytes for e in rep.entities)


def test_empty_relational_entity_costs_header_only():
    rep = fresh("relational").storage_report()
    for e in rep.entities:
        assert (e.data_bytes, e.index_bytes) == (0, RELATION_HEADER_BYTES)


def test_document_size_is_compact_json(schema):
    b = fresh("document")
    h = hub(schema, "Hub_Title", "t")
    b.put_record(h)
    body = {h.key: {"Natural": "t", "Datetime": "2021-03-01T00:00:00.000Z", "Source": "s"}}
    want = len(json.dumps(body, separators=(",", ":")))
    assert b.storage_report().entity("Hub_Title").data_bytes == want


@pytest.mark.parametrize("kind", KINDS)
def test_sizes_never_shrink(kind, corpus1):
    from metavault.etl import LoadClock

    cat = Catalog(define_schema_tectoniq(), make_backend(kind))
    clock = LoadClock()
    prev = {e.entity: e.total_bytes for e in cat.primary.storage_report().entities}
    for doc in corpus1.documents[::5]:
        cat.insert_document(doc, clock())
        now = {e.entity: e.total_bytes for e in cat.primary.storage_report().entities}
        assert all(now[k] >= prev[k] for k in prev)
        prev = now


def test_report_csv(loaded1):
    text = loaded1.catalog.primary.storage_report().to_csv()
    lines = text.splitlines()
    assert lines[0] == "entity,data_bytes,index_bytes,total_bytes"
    assert len(lines) == 14
    assert lines[-1].startswith("Total,")


@pytest.mark.parametrize("kind", KINDS)
def test_snapshot_hides_later_writes(kind, schema):
    b = fresh(kind)
    b.put_record(hub(schema, "Hub_Title", "a"))
    snap = b.snapshot()
    b.put_record(hub(schema, "Hub_Title", "b"))
    assert len(list(b.scan(EntityFilter("Hub_Title"), snap))) == 1
    assert b.count("Hub_Title") == 2


@pytest.mark.parametrize("kind", KINDS)
def test_readers_never_see_half_a_batch(kind, schema):
    b = fresh(kind)
    stop = threading.Event()
    torn = []

    def reader():
        while not stop.is_set():
            snap = b.snapshot()
            n_hub = len(list(b.scan(EntityFilter("Hub_Title"), snap)))
            n_sat = len(list(b.scan(EntityFilter("Sat_Title"), snap)))
            if n_hub != n_sat:
                torn.append((n_hub, n_sat))

    threads = [threading.Thread(target=reader) for _ in range(3)]
    for t in threads:
        t.start()
    for i in range(200):
        h = hub(schema, "Hub_Title", f"doc {i}")
        b.put_many([h, SatelliteRecord("Sat_Title", h.key, T0, {"Title": f"doc {i}"}, "s")])
    stop.set()
    for t in threads:
        t.join()
    assert torn == []


@pytest.mark.parametrize("cls", [RelationalBackend, DocumentBackend])
def test_save_and_load(cls, loaded1, tmp_path):
    src = loaded1.catalog.backend(cls.kind)
    src.save(tmp_path)
    back = cls.load(tmp_path, loaded1.catalog.schema)
    for entity in src.entities:
        assert canonical(back.records(entity)) == canonical(src.records(entity))
    assert back.storage_report() == src.storage_report()


def test_relational_files_are_whole_pages(loaded1, tmp_path):
    loaded1.catalog.backend("relational").save(tmp_path)
    for f in tmp_path.glob("*.tbl"):
        assert f.stat().st_size % PAGE_SIZE == 0


def test_export_shape_and_round_trip(loaded1):
    doc = loaded1.catalog.backend("document")
    text = export_documents(doc, "Sat_Book")
    data = json.loads(text)
    assert list(data) == ["Sat_Book"]
    body = data["Sat_Book"]
    assert len(body) == doc.count("Sat_Book")
    for rid, fields in body.items():
        assert rid.rsplit("_", 1)[1].isdigit()
        assert list(fields)[-2:] == ["Datetime", "Source"]
    b = fresh("document")
    b.put_many(h for h in doc.records("Hub_Category"))
    assert import_documents(b, text) == len(body)
    assert canonical(b.records("Sat_Book")) == canonical(doc.records("Sat_Book"))
    assert export_documents(b, "Sat_Book") == text


def test_export_empty_and_unknown():
    b = fresh("document")
    assert json.loads(export_documents(b, "Sat_Book")) == {"Sat_Book": {}}
    with pytest.raises(SchemaError):
        export_documents(b, "Sat_Nope")
    with pytest.raises(TypeError):
        export_documents(fresh("relational"), "Sat_Book")
