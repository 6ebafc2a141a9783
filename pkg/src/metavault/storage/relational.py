"""Relational-style backend: one heap table per entity, stored as 8 KB pages.

Each table is a vector of fixed-size pages filled by the row codec in
:mod:`metavault.kernels`. A primary-key index (key -> row numbers) is kept in
memory and rebuilt on load; scans never use it. Sizes are reported the way a
paged heap occupies disk: whole pages, plus the index.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Iterator

from .. import kernels
from ..vault import (
    TIMESTAMP,
    HubDef,
    HubRecord,
    LinkDef,
    LinkRecord,
    SatelliteDef,
    SatelliteRecord,
    VaultSchema,
    from_millis,
    to_millis,
)
from .base import RELATIONAL, Backend, EntityFilter, EntityUsage, StorageReport

PAGE_SIZE = 8192
# Per-relation catalog entry, charged even when the table is empty.
RELATION_HEADER_BYTES = 512
# Per index entry: tuple header, line pointer and alignment.
INDEX_ENTRY_OVERHEAD = 16
TIMESTAMP_KEY_BYTES = 8


class _Table:
    __slots__ = ("definition", "pages", "page_start", "locations", "index", "index_bytes")

    def __init__(self, definition):
        self.definition = definition
        self.pages: list = []
        self.page_start: list = []  # row number of each page's first slot
        self.locations: list = []  # row number -> (page, slot)
        self.index: dict = {}  # key -> [row numbers]
        self.index_bytes = 0


class RelationalBackend(Backend):
    kind = RELATIONAL

    def __init__(self, codec=None):
        super().__init__()
        self.codec = codec or kernels.codec
        self._tables: dict = {}

    # row mapping

    def _to_row(self, rec) -> list:
        if isinstance(rec, HubRecord):
            return [rec.key, rec.natural, to_millis(rec.datetime), rec.source]
        if isinstance(rec, LinkRecord):
            return [rec.id, *(k for _, k in rec.member_keys), to_millis(rec.datetime), rec.source]
        d = self._tables[rec.satellite].definition
        row = [rec.parent_key, to_millis(rec.datetime), rec.source]
        for name, kind in d.attributes:
            v = rec.attributes.get(name)
            row.append(to_millis(v) if kind == TIMESTAMP and v is not None else v)
        return row

    def _from_row(self, d, row: list):
        if isinstance(d, HubDef):
            return HubRecord(d.name, row[0], row[1], from_millis(row[2]), row[3])
        if isinstance(d, LinkDef):
            n = len(d.member_hubs)
            return LinkRecord(d.name, row[0], tuple(zip(d.member_hubs, row[1:1 + n])),
                              from_millis(row[1 + n]), row[2 + n])
        attrs = {}
        for (name, kind), v in zip(d.attributes, row[3:]):
            if v is not None:
                attrs[name] = from_millis(v) if kind == TIMESTAMP else v
        return SatelliteRecord(d.name, row[0], from_millis(row[1]), attrs, row[2])

    @staticmethod
    def _index_key(rec) -> str:
        if isinstance(rec, HubRecord):
            return rec.key
        if isinstance(rec, LinkRecord):
            return rec.id
        return rec.parent_key

    # hooks

    def _create_entity(self, definition) -> None:
        self._tables[definition.name] = _Table(definition)

    def _append(self, rec) -> None:
        name = rec.hub if isinstance(rec, HubRecord) else (
            rec.link if isinstance(rec, LinkRecord) else rec.satellite)
        t = self._tables[name]
        self._place(t, self.codec.encode_row(self._to_row(rec)))
        key = self._index_key(rec)
        t.index.setdefault(key, []).append(len(t.locations) - 1)
        extra = TIMESTAMP_KEY_BYTES if isinstance(rec, SatelliteRecord) else 0
        t.index_bytes += len(key.encode("utf-8")) + extra + INDEX_ENTRY_OVERHEAD

    def _place(self, t: _Table, row: bytes) -> None:
        codec = self.codec
        slot = codec.page_insert(t.pages[-1], row) if t.pages else -1
        if slot < 0:
            page = codec.new_page()
            slot = codec.page_insert(page, row)
            t.page_start.append(len(t.locations))
            t.pages.append(page)
        t.locations.append((len(t.pages) - 1, slot))

    def _has_key(self, entity: str, key: str) -> bool:
        t = self._tables.get(entity)
        return t is not None and key in t.index

    def _rows(self, t: _Table, limit: int):
        """Decoded rows of the first ``limit`` records, page by page."""
        rows_page = self.codec.page_rows
        for i, page in enumerate(t.pages):
            start = t.page_start[i]
            if start >= limit:
                break
            yield from rows_page(page, limit - start)

    def _scan(self, d, flt: EntityFilter, limit: int) -> Iterator:
        t = self._tables[d.name]
        if flt.key is not None:
            key = flt.key.encode("utf-8")
            find, decode = self.codec.page_find_first, self.codec.decode_row
            rows = (decode(page, s)
                    for i, page in enumerate(t.pages) if t.page_start[i] < limit
                    for s in find(page, key, limit - t.page_start[i]))
        else:
            rows = self._rows(t, limit)
        checks = []
        if flt.predicates:
            cols = {n: (3 + i, k) for i, (n, k) in enumerate(d.attributes)}
            checks = [(p, *cols[p.attribute]) for p in flt.predicates]
        for row in rows:
            ok = True
            for p, col, kind in checks:
                v = row[col]
                if v is not None and kind == TIMESTAMP:
                    v = from_millis(v)
                if not p.matches(v):
                    ok = False
                    break
            if ok:
                yield self._from_row(d, row)

    def _fetch(self, t: _Table, rownum: int):
        page, slot = t.locations[rownum]
        return self._from_row(t.definition, self.codec.decode_row(t.pages[page], slot))

    def _get(self, d, key, limit: int):
        t = self._tables[d.name]
        if isinstance(d, SatelliteDef):
            parent, when = key
            for rec in self._history(d, parent, limit):
                if rec.datetime == when:
                    return rec
            return None
        for rownum in t.index.get(key, ()):
            if rownum < limit:
                return self._fetch(t, rownum)
        return None

    def _history(self, d: SatelliteDef, parent_key: str, limit: int) -> list:
        t = self._tables[d.name]
        return [self._fetch(t, r) for r in t.index.get(parent_key, ()) if r < limit]

    # reporting and persistence

    def storage_report(self) -> StorageReport:
        with self._lock:
            usage = tuple(
                EntityUsage(name, len(t.pages) * PAGE_SIZE, RELATION_HEADER_BYTES + t.index_bytes)
                for name, t in self._tables.items())
        return StorageReport(self.kind, usage, PAGE_SIZE)

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with self._lock:
            for name, t in self._tables.items():
                tmp = directory / f"{name}.tbl.tmp"
                tmp.write_bytes(b"".join(bytes(p) for p in t.pages))
                os.replace(tmp, directory / f"{name}.tbl")

    @classmethod
    def load(cls, directory, schema: VaultSchema, codec=None) -> "RelationalBackend":
        directory = Path(directory)
        backend = cls(codec)
        backend.init_schema(schema)
        c = backend.codec
        for name, t in backend._tables.items():
            path = directory / f"{name}.tbl"
            if not path.exists():
                continue
            raw = path.read_bytes()
            if len(raw) % PAGE_SIZE:
                raise ValueError(f"{path}: size is not a multiple of {PAGE_SIZE}")
            for off in range(0, len(raw), PAGE_SIZE):
                page = bytearray(raw[off:off + PAGE_SIZE])
                t.page_start.append(len(t.locations))
                t.pages.append(page)
                for slot, row in enumerate(c.page_rows(page)):
                    rec = backend._from_row(t.definition, row)
                    key = backend._index_key(rec)
                    t.index.setdefault(key, []).append(len(t.locations))
                    t.locations.append((len(t.pages) - 1, slot))
                    extra = TIMESTAMP_KEY_BYTES if isinstance(rec, SatelliteRecord) else 0
                    t.index_bytes += len(key.encode("utf-8")) + extra + INDEX_ENTRY_OVERHEAD
            backend._counts[name] = len(t.locations)
        return backend
