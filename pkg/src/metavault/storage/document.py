"""Document-style backend: one collection of JSON documents per entity.

Collections serialize in the nested shape ``{collection: {record id: {fields}}}``.
Record ids are the hub key, the link id, or ``<parent key>_<nnn>`` for the
n-th version of a satellite parent. Field order is fixed by the schema, so
exports are byte-stable.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterator

from ..vault import (
    TIMESTAMP,
    HubDef,
    HubRecord,
    LinkDef,
    LinkRecord,
    SatelliteDef,
    SatelliteRecord,
    SchemaError,
    VaultSchema,
    iso,
    parse_iso,
)
from .base import DOCUMENT, Backend, EntityFilter, EntityUsage, StorageReport, member_field

DATETIME = "Datetime"
SOURCE = "Source"
NATURAL = "Natural"


def _compact(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def record_id(rec, version: int = 0) -> str:
    if isinstance(rec, HubRecord):
        return rec.key
    if isinstance(rec, LinkRecord):
        return rec.id
    return f"{rec.parent_key}_{version:03d}"


def to_fields(rec, d) -> dict:
    if isinstance(rec, HubRecord):
        return {NATURAL: rec.natural, DATETIME: iso(rec.datetime), SOURCE: rec.source}
    if isinstance(rec, LinkRecord):
        out = {member_field(h): k for h, k in rec.member_keys}
        out[DATETIME] = iso(rec.datetime)
        out[SOURCE] = rec.source
        return out
    out = {}
    for name, kind in d.attributes:
        v = rec.attributes.get(name)
        if v is None:
            continue
        if kind == TIMESTAMP:
            out[name] = iso(v)
        elif isinstance(v, tuple):
            out[name] = list(v)
        else:
            out[name] = v
    out[DATETIME] = iso(rec.datetime)
    out[SOURCE] = rec.source
    return out


def from_fields(d, doc_id: str, fields: dict):
    try:
        when = parse_iso(fields[DATETIME])
        source = fields[SOURCE]
        if isinstance(d, HubDef):
            return HubRecord(d.name, doc_id, fields[NATURAL], when, source)
        if isinstance(d, LinkDef):
            keys = tuple((h, fields[member_field(h)]) for h in d.member_hubs)
            return LinkRecord(d.name, doc_id, keys, when, source)
    except KeyError as exc:
        raise SchemaError(f"{d.name}/{doc_id}: missing field {exc.args[0]!r}") from None
    parent, sep, _ = doc_id.rpartition("_")
    if not sep:
        raise SchemaError(f"{d.name}/{doc_id}: satellite id lacks a version suffix")
    attrs = {}
    for name, value in fields.items():
        if name in (DATETIME, SOURCE):
            continue
        kind = d.kind_of(name)
        if kind == TIMESTAMP:
            value = parse_iso(value)
        elif isinstance(value, list):
            value = tuple(value)
        attrs[name] = value
    return SatelliteRecord(d.name, parent, when, attrs, source)


class _Collection:
    __slots__ = ("definition", "docs", "keys", "by_id", "by_parent", "bytes")

    def __init__(self, definition):
        self.definition = definition
        self.docs: list = []  # (id, key, fields)
        self.keys: list = []  # key column of docs, for keyed scans
        self.by_id: dict = {}
        self.by_parent: dict = {}
        self.bytes = 0


class DocumentBackend(Backend):
    kind = DOCUMENT

    def __init__(self):
        super().__init__()
        self._colls: dict = {}

    def _create_entity(self, definition) -> None:
        self._colls[definition.name] = _Collection(definition)

    def _append(self, rec) -> None:
        if isinstance(rec, HubRecord):
            c, key = self._colls[rec.hub], rec.key
        elif isinstance(rec, LinkRecord):
            c, key = self._colls[rec.link], rec.id
        else:
            c, key = self._colls[rec.satellite], rec.parent_key
        versions = c.by_parent.setdefault(key, [])
        doc_id = record_id(rec, len(versions) + 1)
        fields = to_fields(rec, c.definition)
        versions.append(len(c.docs))
        c.by_id[doc_id] = len(c.docs)
        c.docs.append((doc_id, key, fields))
        c.keys.append(key)
        c.bytes += len(_compact({doc_id: fields}).encode("utf-8"))

    def _has_key(self, entity: str, key: str) -> bool:
        c = self._colls.get(entity)
        return c is not None and key in c.by_parent

    def _positions(self, c: _Collection, key, limit: int):
        limit = min(limit, len(c.docs))
        if key is None:
            yield from range(limit)
            return
        keys, i = c.keys, 0
        while True:
            try:
                i = keys.index(key, i, limit)
            except ValueError:
                return
            yield i
            i += 1

    def _scan(self, d, flt: EntityFilter, limit: int) -> Iterator:
        c = self._colls[d.name]
        docs = c.docs
        checks = [(p, p.attribute, d.kind_of(p.attribute)) for p in flt.predicates]
        for i in self._positions(c, flt.key, limit):
            doc_id, _, fields = docs[i]
            ok = True
            for p, attr, kind in checks:
                v = fields.get(attr)
                if v is not None:
                    if kind == TIMESTAMP:
                        v = parse_iso(v)
                    elif isinstance(v, list):
                        v = tuple(v)
                if not p.matches(v):
                    ok = False
                    break
            if ok:
                yield from_fields(d, doc_id, fields)

    def _get(self, d, key, limit: int):
        c = self._colls[d.name]
        if isinstance(d, SatelliteDef):
            parent, when = key
            for rec in self._history(d, parent, limit):
                if rec.datetime == when:
                    return rec
            return None
        i = c.by_id.get(key)
        if i is None or i >= limit:
            return None
        doc_id, _, fields = c.docs[i]
        return from_fields(d, doc_id, fields)

    def _history(self, d: SatelliteDef, parent_key: str, limit: int) -> list:
        c = self._colls[d.name]
        out = []
        for i in c.by_parent.get(parent_key, ()):
            if i < limit:
                doc_id, _, fields = c.docs[i]
                out.append(from_fields(d, doc_id, fields))
        return out

    def storage_report(self) -> StorageReport:
        with self._lock:
            usage = tuple(EntityUsage(name, c.bytes, 0) for name, c in self._colls.items())
        return StorageReport(self.kind, usage)

    # export / import

    def export_documents(self, entity: str, snapshot=None) -> str:
        d = self._definition(entity)
        limit = (snapshot or self.snapshot()).limit(entity)
        c = self._colls[d.name]
        body = {doc_id: fields for doc_id, _, fields in c.docs[:limit]}
        return json.dumps({entity: body}, ensure_ascii=False, indent=1) + "\n"

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        snap = self.snapshot()
        for name in self._colls:
            tmp = directory / f"{name}.json.tmp"
            tmp.write_text(self.export_documents(name, snap), encoding="utf-8")
            os.replace(tmp, directory / f"{name}.json")

    @classmethod
    def load(cls, directory, schema: VaultSchema) -> "DocumentBackend":
        directory = Path(directory)
        backend = cls()
        backend.init_schema(schema)
        records = []
        for name in schema.entity_names:
            path = directory / f"{name}.json"
            if path.exists():
                records.extend(decode_documents(schema, path.read_text(encoding="utf-8")))
        backend.put_many(_integrity_order(records))
        return backend


def decode_documents(schema: VaultSchema, text: str) -> list:
    """Records from an export document; collections in file order."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid export: {exc}") from None
    if not isinstance(data, dict):
        raise SchemaError("export must be a JSON object keyed by collection")
    out = []
    for name, body in data.items():
        d = schema.entity(name)
        if not isinstance(body, dict):
            raise SchemaError(f"{name}: collection must be an object keyed by record id")
        for doc_id, fields in body.items():
            out.append(from_fields(d, doc_id, fields))
    return out


def _integrity_order(records: list) -> list:
    rank = {HubRecord: 0, LinkRecord: 1, SatelliteRecord: 2}
    return sorted(records, key=lambda r: rank[type(r)])


def import_documents(backend: Backend, text: str) -> int:
    """Insert every record of an export document; returns the count."""
    records = _integrity_order(decode_documents(backend.schema, text))
    backend.put_many(records)
    return len(records)
