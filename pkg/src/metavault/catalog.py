"""The metadata catalog: a vault schema bound to one or more backends.

Every write goes to all attached backends in the same order, so they hold
identical record sets. Reads use the first backend unless told otherwise.
"""

from __future__ import annotations

import threading
from datetime import datetime
from pathlib import Path
from typing import Mapping, Optional, Union

from .storage import BACKEND_KINDS, Backend, load_backend, make_backend
from .vault import (
    HUB_CATEGORY,
    HUB_DATE,
    HUB_LOCATION,
    HUB_TITLE,
    LINK_DOCUMENT,
    UNKNOWN_NATURAL,
    DocumentMetadata,
    HistoryError,
    HubRecord,
    LinkRecord,
    MissingKeyError,
    SatelliteRecord,
    SchemaError,
    VaultError,
    VaultSchema,
    category_code,
    clean_attributes,
    dump_schema,
    load_schema,
    make_business_key,
    utc,
)

LATEST = "latest"
SCHEMA_FILE = "schema.txt"


def link_id(sequence: int) -> str:
    return f"LD{sequence:07d}"


class Catalog:
    def __init__(self, schema: VaultSchema, *backends: Backend):
        if not backends:
            raise ValueError("a catalog needs at least one backend")
        self.schema = schema
        self.backends = list(backends)
        self._write = threading.Lock()
        for b in self.backends:
            if b.schema is None or b.schema != schema:
                b.init_schema(schema)

    @classmethod
    def in_memory(cls, schema: VaultSchema, kinds=BACKEND_KINDS) -> "Catalog":
        return cls(schema, *(make_backend(k) for k in kinds))

    @property
    def primary(self) -> Backend:
        return self.backends[0]

    def backend(self, kind: str) -> Backend:
        for b in self.backends:
            if b.kind == kind:
                return b
        raise KeyError(f"no {kind} backend attached")

    def evolve(self, schema: VaultSchema) -> None:
        """Switch to an additive evolution of the current schema."""
        with self._write:
            if not schema.extends(self.schema):
                raise SchemaError("evolution must be additive")
            for b in self.backends:
                b.init_schema(schema)
            self.schema = schema

    def _put(self, records: list) -> None:
        for b in self.backends:
            b.put_many(records)

    # ingestion

    def insert_document(self, doc: DocumentMetadata, at: datetime) -> str:
        """Load one document's metadata; returns the new link id.

        Hubs are reused when their business key exists. A satellite version
        is written only when its attributes differ from the current version
        (unchanged content is not re-versioned). Location and date blocks
        without an address or a date/epoch fall back to the hub's unknown
        record and carry no satellite.
        """
        schema = self.schema
        at = utc(at)
        title = (doc.title.title or "").strip()
        if not title:
            raise MissingKeyError("missing title: the title is the document's anchor key")
        cat_sat = schema.dispatch_for(doc.category)
        if cat_sat is None and doc.category_attributes:
            raise SchemaError(f"category {doc.category!r} has no satellite for its attributes")
        source = doc.source.uri
        date_natural = doc.date.natural if doc.date else None
        address = doc.location.address if doc.location else None
        naturals = {
            HUB_TITLE: title,
            HUB_LOCATION: address or UNKNOWN_NATURAL,
            HUB_DATE: date_natural or UNKNOWN_NATURAL,
            HUB_CATEGORY: category_code(doc.category, source),
        }
        sat_blocks = [("Sat_Title", HUB_TITLE, doc.title_attributes())]
        if date_natural:
            sat_blocks.append(("Sat_Date", HUB_DATE, doc.date_attributes()))
        if address:
            sat_blocks.append(("Sat_Location", HUB_LOCATION, doc.location_attributes()))
        if cat_sat is not None:
            sat_blocks.append((cat_sat, HUB_CATEGORY, dict(doc.category_attributes)))

        with self._write:
            b = self.primary
            snap = b.snapshot()
            keys, records = {}, []
            for hub, natural in naturals.items():
                key = make_business_key(schema.hub(hub), natural).value
                keys[hub] = key
                if b.get_by_key(hub, key, snap) is None:
                    records.append(HubRecord(hub, key, natural, at, source))
            link = schema.link(LINK_DOCUMENT)
            lid = link_id(b.count(LINK_DOCUMENT, snap) + 1)
            records.append(LinkRecord(LINK_DOCUMENT, lid,
                                      tuple((h, keys[h]) for h in link.member_hubs), at, source))
            for sat, hub, values in sat_blocks:
                attrs = clean_attributes(schema.satellite(sat), values)
                if not attrs:
                    continue
                hist = b.history(sat, keys[hub], snap)
                if hist and dict(hist[-1].attributes) == attrs:
                    continue
                records.append(SatelliteRecord(sat, keys[hub], at, attrs, source))
            self._put(records)
        return lid

    # history

    def supersede_satellite(self, satellite: str, parent_key: str, attributes: Mapping,
                            at: datetime) -> SatelliteRecord:
        at = utc(at)
        with self._write:
            hist = self.primary.history(satellite, parent_key)
            if not hist:
                raise VaultError(f"no {satellite} version exists for {parent_key}")
            latest = hist[-1]
            if at <= latest.datetime:
                raise HistoryError(
                    f"supersede at {at.isoformat()} is not after {latest.datetime.isoformat()}")
            attrs = clean_attributes(self.schema.satellite(satellite), attributes)
            rec = SatelliteRecord(satellite, parent_key, at, attrs, latest.source)
            self._put([rec])
        return rec

    def history(self, satellite: str, parent_key: str, backend: Optional[Backend] = None) -> list:
        return (backend or self.primary).history(satellite, parent_key)

    def current_satellite(self, satellite: str, parent_key: str,
                          as_of: Union[datetime, str] = LATEST,
                          backend: Optional[Backend] = None) -> Optional[SatelliteRecord]:
        return current_of(self.history(satellite, parent_key, backend), as_of)

    # persistence

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / SCHEMA_FILE).write_text(dump_schema(self.schema), encoding="utf-8")
        for b in self.backends:
            b.save(directory / b.kind)

    @classmethod
    def open(cls, directory, kinds=BACKEND_KINDS) -> "Catalog":
        directory = Path(directory)
        path = directory / SCHEMA_FILE
        if not path.exists():
            raise VaultError(f"no catalog at {directory} (missing {SCHEMA_FILE})")
        schema = load_schema(path.read_text(encoding="utf-8"))
        return cls(schema, *(load_backend(k, directory / k, schema) for k in kinds))


def current_of(history: list, as_of: Union[datetime, str] = LATEST) -> Optional[SatelliteRecord]:
    """Version with the greatest datetime not after ``as_of``."""
    if not history:
        return None
    if as_of == LATEST:
        return history[-1]
    as_of = utc(as_of)
    best = None
    for rec in history:
        if rec.datetime <= as_of and (best is None or rec.datetime > best.datetime):
            best = rec
    return best
