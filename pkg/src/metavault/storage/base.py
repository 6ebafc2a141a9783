"""Backend contract shared by the relational and document stores."""

from __future__ import annotations

import abc
import csv
import io
import threading
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional

from ..predicates import AttributePredicate
from ..vault import (
    HistoryError,
    HubDef,
    HubRecord,
    IntegrityError,
    LinkDef,
    LinkRecord,
    SatelliteDef,
    SatelliteRecord,
    SchemaError,
    VaultSchema,
    normalize_value,
)

RELATIONAL = "relational"
DOCUMENT = "document"
BACKEND_KINDS = (RELATIONAL, DOCUMENT)


@dataclass(frozen=True)
class EntityFilter:
    """Records of ``entity`` satisfying every predicate.

    ``key`` restricts to one identity: a hub key, a link id, or a satellite
    parent key (all versions).
    """

    entity: str
    predicates: tuple = ()
    key: Optional[str] = None


@dataclass(frozen=True)
class Snapshot:
    """Per-entity record watermark; storage is append-only."""

    counts: Mapping

    def limit(self, entity: str) -> int:
        return self.counts.get(entity, 0)


@dataclass(frozen=True)
class EntityUsage:
    entity: str
    data_bytes: int
    index_bytes: int

    @property
    def total_bytes(self) -> int:
        return self.data_bytes + self.index_bytes


@dataclass(frozen=True)
class StorageReport:
    backend: str
    entities: tuple
    page_size: Optional[int] = None

    @property
    def total_bytes(self) -> int:
        return sum(e.total_bytes for e in self.entities)

    def entity(self, name: str) -> EntityUsage:
        for e in self.entities:
            if e.entity == name:
                return e
        raise KeyError(name)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["entity", "data_bytes", "index_bytes", "total_bytes"])
        for e in self.entities:
            w.writerow([e.entity, e.data_bytes, e.index_bytes, e.total_bytes])
        w.writerow(["Total", sum(e.data_bytes for e in self.entities),
                    sum(e.index_bytes for e in self.entities), self.total_bytes])
        return buf.getvalue()


@dataclass
class _Staging:
    """Identities added by the batch being validated."""

    hubs: set = field(default_factory=set)
    links: set = field(default_factory=set)
    latest: dict = field(default_factory=dict)  # (sat, parent) -> datetime


class Backend(abc.ABC):
    """One physical realization of a vault schema.

    Writes are serialized by an internal lock and applied batch-at-a-time;
    readers take a :class:`Snapshot` and never observe half of a batch.
    """

    kind: str = ""

    def __init__(self):
        self.schema: Optional[VaultSchema] = None
        self._lock = threading.RLock()
        self._counts: dict = {}

    # schema

    def init_schema(self, schema: VaultSchema) -> None:
        schema.validate()
        with self._lock:
            if self.schema is not None and not schema.extends(self.schema):
                raise SchemaError(
                    f"schema v{schema.version} is not an additive evolution of "
                    f"v{self.schema.version}")
            for name in schema.entity_names:
                if name not in self._counts:
                    self._create_entity(schema.entity(name))
                    self._counts[name] = 0
            self.schema = schema

    @property
    def entities(self) -> tuple:
        return self._require_schema().entity_names

    def _require_schema(self) -> VaultSchema:
        if self.schema is None:
            raise SchemaError("backend schema not initialized")
        return self.schema

    def _definition(self, entity: str):
        return self._require_schema().entity(entity)

    # writes

    def put_record(self, record) -> None:
        self.put_many([record])

    def put_many(self, records: Iterable) -> None:
        """Validate the whole batch, then apply it atomically."""
        records = list(records)
        with self._lock:
            stage = _Staging()
            for rec in records:
                self._validate(rec, stage)
            for rec in records:
                self._append(rec)
                name = _entity_of(rec)
                self._counts[name] += 1

    def _validate(self, rec, stage: _Staging) -> None:
        schema = self._require_schema()
        if isinstance(rec, HubRecord):
            d = schema.entity(rec.hub)
            if not isinstance(d, HubDef):
                raise IntegrityError(f"{rec.hub} is not a hub")
            ident = (rec.hub, rec.key)
            if ident in stage.hubs or self._has_key(rec.hub, rec.key):
                raise IntegrityError(f"duplicate hub key {rec.key} in {rec.hub}")
            stage.hubs.add(ident)
        elif isinstance(rec, LinkRecord):
            d = schema.entity(rec.link)
            if not isinstance(d, LinkDef):
                raise IntegrityError(f"{rec.link} is not a link")
            if tuple(h for h, _ in rec.member_keys) != d.member_hubs:
                raise IntegrityError(f"{rec.link} member keys must cover {d.member_hubs}")
            ident = (rec.link, rec.id)
            if ident in stage.links or self._has_key(rec.link, rec.id):
                raise IntegrityError(f"duplicate link id {rec.id} in {rec.link}")
            for hub, key in rec.member_keys:
                if (hub, key) not in stage.hubs and not self._has_key(hub, key):
                    raise IntegrityError(f"{rec.link} {rec.id}: {hub} key {key} does not exist")
            stage.links.add(ident)
        elif isinstance(rec, SatelliteRecord):
            d = schema.entity(rec.satellite)
            if not isinstance(d, SatelliteDef):
                raise IntegrityError(f"{rec.satellite} is not a satellite")
            for name, value in rec.attributes.items():
                kind = d.kind_of(name)
                if value is None or normalize_value(kind, value) != value:
                    raise IntegrityError(f"{rec.satellite}.{name}: non-canonical value")
            parent_set = stage.links if isinstance(schema.entity(d.parent), LinkDef) else stage.hubs
            if (d.parent, rec.parent_key) not in parent_set and not self._has_key(
                    d.parent, rec.parent_key):
                raise IntegrityError(
                    f"{rec.satellite}: parent {d.parent} key {rec.parent_key} does not exist")
            slot = (rec.satellite, rec.parent_key)
            latest = stage.latest.get(slot)
            if latest is None:
                hist = self.history(rec.satellite, rec.parent_key)
                latest = hist[-1].datetime if hist else None
            if latest is not None:
                if rec.datetime == latest:
                    raise IntegrityError(
                        f"duplicate satellite identity {rec.satellite} {rec.parent_key} "
                        f"{rec.datetime.isoformat()}")
                if rec.datetime < latest:
                    raise HistoryError(
                        f"{rec.satellite} {rec.parent_key}: {rec.datetime.isoformat()} "
                        f"precedes latest version {latest.isoformat()}")
            stage.latest[slot] = rec.datetime
        else:
            raise TypeError(f"not a vault record: {type(rec).__name__}")

    # reads

    def snapshot(self) -> Snapshot:
        with self._lock:
            return Snapshot(dict(self._counts))

    def count(self, entity: str, snapshot: Optional[Snapshot] = None) -> int:
        self._definition(entity)
        snap = snapshot or self.snapshot()
        return snap.limit(entity)

    def scan(self, flt: EntityFilter, snapshot: Optional[Snapshot] = None) -> Iterator:
        d = self._definition(flt.entity)
        for p in flt.predicates:
            if not isinstance(p, AttributePredicate):
                raise SchemaError(f"predicate {p} cannot filter an entity scan")
            if p.entity != flt.entity:
                raise SchemaError(f"predicate {p} does not apply to {flt.entity}")
            if not isinstance(d, SatelliteDef):
                raise SchemaError(f"{flt.entity} has no attribute {p.attribute!r}")
            d.kind_of(p.attribute)
        snap = snapshot or self.snapshot()
        return self._scan(d, flt, snap.limit(flt.entity))

    def get_by_key(self, entity: str, key, snapshot: Optional[Snapshot] = None):
        """Hub key, link id, or ``(parent_key, datetime)`` for satellites."""
        d = self._definition(entity)
        snap = snapshot or self.snapshot()
        return self._get(d, key, snap.limit(entity))

    def history(self, satellite: str, parent_key: str,
                snapshot: Optional[Snapshot] = None) -> list:
        """All versions for one parent key, oldest first."""
        d = self._definition(satellite)
        if not isinstance(d, SatelliteDef):
            raise SchemaError(f"{satellite!r} is not a satellite")
        snap = snapshot or self.snapshot()
        return self._history(d, parent_key, snap.limit(satellite))

    def records(self, entity: str, snapshot: Optional[Snapshot] = None) -> list:
        return list(self.scan(EntityFilter(entity), snapshot))

    # hooks

    @abc.abstractmethod
    def _create_entity(self, definition) -> None: ...

    @abc.abstractmethod
    def _append(self, record) -> None: ...

    @abc.abstractmethod
    def _has_key(self, entity: str, key: str) -> bool: ...

    @abc.abstractmethod
    def _scan(self, definition, flt: EntityFilter, limit: int) -> Iterator: ...

    @abc.abstractmethod
    def _get(self, definition, key, limit: int): ...

    @abc.abstractmethod
    def _history(self, definition: SatelliteDef, parent_key: str, limit: int) -> list: ...

    @abc.abstractmethod
    def storage_report(self) -> StorageReport: ...

    @abc.abstractmethod
    def save(self, directory) -> None: ...


def _entity_of(rec) -> str:
    if isinstance(rec, HubRecord):
        return rec.hub
    if isinstance(rec, LinkRecord):
        return rec.link
    return rec.satellite


def filter_matches(predicates: tuple, attributes: Mapping) -> bool:
    return all(p.matches(attributes.get(p.attribute)) for p in predicates)


def member_field(hub: str) -> str:
    """Link column/field name for a member hub: Hub_Title -> Title_id."""
    return (hub[4:] if hub.startswith("Hub_") else hub) + "_id"

