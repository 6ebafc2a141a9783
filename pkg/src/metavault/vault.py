"""Data-vault domain model: schema definitions, record kinds, business keys.

Nothing here knows about storage. A :class:`VaultSchema` is an immutable,
versioned registry of hub, link and satellite definitions plus the category
dispatch table; evolution only ever appends definitions.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from types import MappingProxyType
from typing import Mapping, Optional, Union

# Attribute kinds a satellite may declare.
TEXT = "text"
TEXT_LIST = "text-list"
TIMESTAMP = "timestamp"
KINDS = (TEXT, TEXT_LIST, TIMESTAMP)

UNKNOWN_NATURAL = "(unknown)"

AttributeValue = Union[str, tuple, datetime]


class VaultError(Exception):
    """Base class for catalog errors."""


class SchemaError(VaultError):
    pass


class MissingKeyError(VaultError):
    """A natural key attribute is empty."""


class IntegrityError(VaultError):
    """Referential or identity violation."""


class HistoryError(IntegrityError):
    """Non-monotonic satellite history."""


def utc(ts: datetime) -> datetime:
    """Coerce to an aware UTC instant truncated to millisecond precision."""
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    else:
        ts = ts.astimezone(timezone.utc)
    return ts.replace(microsecond=ts.microsecond // 1000 * 1000)


def to_millis(ts: datetime) -> int:
    ts = utc(ts)
    delta = ts - datetime(1970, 1, 1, tzinfo=timezone.utc)
    return (delta.days * 86400 + delta.seconds) * 1000 + delta.microseconds // 1000


def from_millis(ms: int) -> datetime:
    from datetime import timedelta

    return datetime(1970, 1, 1, tzinfo=timezone.utc) + timedelta(milliseconds=ms)


def iso(ts: datetime) -> str:
    ts = utc(ts)
    return ts.strftime("%Y-%m-%dT%H:%M:%S.") + f"{ts.microsecond // 1000:03d}Z"


def parse_iso(text: str) -> datetime:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return utc(datetime.fromisoformat(text))


def normalize_value(kind: str, value) -> Optional[AttributeValue]:
    """Normalize a raw attribute value to its canonical form, or None if absent."""
    if value is None:
        return None
    if kind == TEXT:
        if not isinstance(value, str):
            raise TypeError(f"expected text, got {type(value).__name__}")
        return value if value != "" else None
    if kind == TEXT_LIST:
        if isinstance(value, str):
            value = (value,)
        items = tuple(v for v in value if v is not None and v != "")
        if not all(isinstance(v, str) for v in items):
            raise TypeError("text-list elements must be text")
        return items or None
    if kind == TIMESTAMP:
        if not isinstance(value, datetime):
            raise TypeError(f"expected timestamp, got {type(value).__name__}")
        return utc(value)
    raise SchemaError(f"unknown attribute kind {kind!r}")


def normalize_natural(text: str) -> str:
    """Trim, collapse internal whitespace and case-fold."""
    return " ".join(text.split()).casefold()


@dataclass(frozen=True)
class HubDef:
    name: str
    key_source: str


@dataclass(frozen=True)
class LinkDef:
    name: str
    member_hubs: tuple

    def __post_init__(self):
        object.__setattr__(self, "member_hubs", tuple(self.member_hubs))


@dataclass(frozen=True)
class SatelliteDef:
    name: str
    parent: str
    attributes: tuple  # ((name, kind), ...)

    def __post_init__(self):
        attrs = tuple((str(n), str(k)) for n, k in self.attributes)
        object.__setattr__(self, "attributes", attrs)

    @property
    def attribute_names(self) -> tuple:
        return tuple(n for n, _ in self.attributes)

    def kind_of(self, attribute: str) -> str:
        for n, k in self.attributes:
            if n == attribute:
                return k
        raise SchemaError(f"{self.name} has no attribute {attribute!r}")


@dataclass(frozen=True)
class BusinessKey:
    value: str

    def __post_init__(self):
        if not self.value:
            raise MissingKeyError("business key must be non-empty")

    def __str__(self):
        return self.value


def make_business_key(hub: HubDef, natural_value: str) -> BusinessKey:
    """Derive the business key for ``natural_value`` within ``hub``.

    The natural value is normalized (see :func:`normalize_natural`), prefixed
    with the hub name and a unit separator, and hashed with BLAKE2b using an
    8-byte digest. The key is the 16-character lowercase hex digest.
    """
    norm = normalize_natural(natural_value or "")
    if not norm:
        raise MissingKeyError(f"missing key attribute {hub.key_source!r} for {hub.name}")
    digest = hashlib.blake2b(f"{hub.name}\x1f{norm}".encode("utf-8"), digest_size=8)
    return BusinessKey(digest.hexdigest())


@dataclass(frozen=True)
class SourceRef:
    uri: str

    def __post_init__(self):
        if not self.uri:
            raise VaultError("source reference must be non-empty")


@dataclass(frozen=True)
class HubRecord:
    hub: str
    key: str
    natural: str
    datetime: datetime
    source: str


@dataclass(frozen=True)
class LinkRecord:
    link: str
    id: str
    member_keys: tuple  # ((hub name, key), ...) in link member order
    datetime: datetime
    source: str

    def key_for(self, hub: str) -> str:
        for h, k in self.member_keys:
            if h == hub:
                return k
        raise KeyError(hub)


@dataclass(frozen=True)
class SatelliteRecord:
    satellite: str
    parent_key: str
    datetime: datetime
    attributes: Mapping
    source: str

    def __post_init__(self):
        if not isinstance(self.attributes, MappingProxyType):
            object.__setattr__(self, "attributes", MappingProxyType(dict(self.attributes)))

    def __hash__(self):
        return hash((self.satellite, self.parent_key, self.datetime))

    def __eq__(self, other):
        if not isinstance(other, SatelliteRecord):
            return NotImplemented
        return (
            self.satellite == other.satellite
            and self.parent_key == other.parent_key
            and self.datetime == other.datetime
            and dict(self.attributes) == dict(other.attributes)
            and self.source == other.source
        )


Record = Union[HubRecord, LinkRecord, SatelliteRecord]


def identity(record: Record) -> tuple:
    """Entity name plus identity within the entity."""
    if isinstance(record, HubRecord):
        return record.hub, record.key
    if isinstance(record, LinkRecord):
        return record.link, record.id
    return record.satellite, (record.parent_key, record.datetime)


@dataclass(frozen=True)
class VaultSchema:
    hubs: tuple = ()
    links: tuple = ()
    satellites: tuple = ()
    dispatch: tuple = ()  # ((category label, satellite name), ...)
    version: int = 1
    _index: Mapping = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        idx = {}
        for d in (*self.hubs, *self.links, *self.satellites):
            if d.name in idx:
                raise SchemaError(f"duplicate definition {d.name!r}")
            idx[d.name] = d
        object.__setattr__(self, "_index", MappingProxyType(idx))
        self.validate()

    # lookups
    def entity(self, name: str):
        try:
            return self._index[name]
        except KeyError:
            raise SchemaError(f"unknown entity {name!r}") from None

    def has(self, name: str) -> bool:
        return name in self._index

    def hub(self, name: str) -> HubDef:
        d = self.entity(name)
        if not isinstance(d, HubDef):
            raise SchemaError(f"{name!r} is not a hub")
        return d

    def link(self, name: str) -> LinkDef:
        d = self.entity(name)
        if not isinstance(d, LinkDef):
            raise SchemaError(f"{name!r} is not a link")
        return d

    def satellite(self, name: str) -> SatelliteDef:
        d = self.entity(name)
        if not isinstance(d, SatelliteDef):
            raise SchemaError(f"{name!r} is not a satellite")
        return d

    @property
    def entity_names(self) -> tuple:
        return tuple(self._index)

    def definitions(self) -> frozenset:
        return frozenset((*self.hubs, *self.links, *self.satellites, *self.dispatch))

    def satellites_of(self, parent: str) -> tuple:
        return tuple(s for s in self.satellites if s.parent == parent)

    def dispatch_for(self, label: str) -> Optional[str]:
        for lab, sat in self.dispatch:
            if lab == label:
                return sat
        return None

    def validate(self) -> None:
        """Check referential closure."""
        for ln in self.links:
            if len(ln.member_hubs) < 2:
                raise SchemaError(f"link {ln.name} needs at least two hubs")
            if len(set(ln.member_hubs)) != len(ln.member_hubs):
                raise SchemaError(f"link {ln.name} names a hub twice")
            for h in ln.member_hubs:
                if not isinstance(self._index.get(h), HubDef):
                    raise SchemaError(f"link {ln.name} references unknown hub {h!r}")
        for s in self.satellites:
            if not isinstance(self._index.get(s.parent), (HubDef, LinkDef)):
                raise SchemaError(f"satellite {s.name} has unknown parent {s.parent!r}")
            names = s.attribute_names
            if len(set(names)) != len(names):
                raise SchemaError(f"satellite {s.name} declares an attribute twice")
            for _, kind in s.attributes:
                if kind not in KINDS:
                    raise SchemaError(f"satellite {s.name}: unknown kind {kind!r}")
        labels = [lab for lab, _ in self.dispatch]
        if len(set(labels)) != len(labels):
            raise SchemaError("category dispatch label registered twice")
        for lab, sat in self.dispatch:
            if not isinstance(self._index.get(sat), SatelliteDef):
                raise SchemaError(f"dispatch {lab!r} -> unknown satellite {sat!r}")

    def extends(self, older: "VaultSchema") -> bool:
        """True if this schema is an additive evolution of ``older``."""
        return self.version >= older.version and older.definitions() <= self.definitions()


def _bump(schema: VaultSchema, **changes) -> VaultSchema:
    return replace(schema, version=schema.version + 1, _index=None, **changes)


def evolve_add_hub(schema: VaultSchema, hub: HubDef) -> VaultSchema:
    if schema.has(hub.name):
        raise SchemaError(f"{hub.name!r} already defined")
    return _bump(schema, hubs=schema.hubs + (hub,))


def evolve_add_link(schema: VaultSchema, link: LinkDef) -> VaultSchema:
    if schema.has(link.name):
        raise SchemaError(f"{link.name!r} already defined")
    return _bump(schema, links=schema.links + (link,))


def evolve_add_satellite(
    schema: VaultSchema, sat: SatelliteDef, category: Optional[str] = None
) -> VaultSchema:
    """Append ``sat``; with ``category``, also register it in the dispatch table."""
    if schema.has(sat.name):
        raise SchemaError(f"{sat.name!r} already defined")
    if not schema.has(sat.parent):
        raise SchemaError(f"unknown parent {sat.parent!r}")
    dispatch = schema.dispatch
    if category is not None:
        if schema.dispatch_for(category) is not None:
            raise SchemaError(f"category {category!r} already dispatched")
        dispatch = dispatch + ((category, sat.name),)
    return _bump(schema, satellites=schema.satellites + (sat,), dispatch=dispatch)


# The reference metadata vault.
HUB_TITLE = "Hub_Title"
HUB_DATE = "Hub_Date"
HUB_LOCATION = "Hub_Location"
HUB_CATEGORY = "Hub_Category"
LINK_DOCUMENT = "Link_Document"

CATEGORY_SATELLITES = {
    "irhis": "Sat_IRHIS",
    "voixdunord": "Sat_VoixDuNord",
    "inventory": "Sat_Inventory",
    "book": "Sat_Book",
}


def define_schema_tectoniq() -> VaultSchema:
    hubs = (
        HubDef(HUB_TITLE, "title"),
        HubDef(HUB_DATE, "deposit_date"),
        HubDef(HUB_LOCATION, "address"),
        HubDef(HUB_CATEGORY, "category_code"),
    )
    links = (LinkDef(LINK_DOCUMENT, (HUB_TITLE, HUB_LOCATION, HUB_DATE, HUB_CATEGORY)),)
    sats = (
        SatelliteDef("Sat_Title", HUB_TITLE, (
            ("Title", TEXT), ("Authors", TEXT_LIST), ("Description", TEXT), ("Keywords", TEXT_LIST))),
        SatelliteDef("Sat_Date", HUB_DATE, (
            ("Epoch", TEXT), ("DepositDate", TIMESTAMP), ("UpdateDate", TIMESTAMP))),
        SatelliteDef("Sat_Location", HUB_LOCATION, (
            ("Address", TEXT), ("AdditionalInfo", TEXT), ("Reference", TEXT))),
        SatelliteDef("Sat_IRHIS", HUB_CATEGORY, (("CodePhoto", TEXT), ("Provenance", TEXT))),
        SatelliteDef("Sat_VoixDuNord", HUB_CATEGORY, (("Language", TEXT), ("Note", TEXT_LIST))),
        SatelliteDef("Sat_Inventory", HUB_CATEGORY, (("Property", TEXT), ("Link", TEXT))),
        SatelliteDef("Sat_Book", HUB_CATEGORY, (("Rights", TEXT), ("Publisher", TEXT))),
    )
    return VaultSchema(hubs, links, sats, tuple(CATEGORY_SATELLITES.items()), version=1)


def category_code(label: str, source: str) -> str:
    """Natural key of a document's category instance."""
    return f"{label}:{source}"


def category_label(natural: str) -> str:
    return natural.split(":", 1)[0]


# Schema text format, see docs/formats.md.
SCHEMA_MAGIC = "metavault-schema/1"


def dump_schema(schema: VaultSchema) -> str:
    lines = [SCHEMA_MAGIC, f"version {schema.version}"]
    for h in schema.hubs:
        lines.append(f"hub {h.name} key={h.key_source}")
    for ln in schema.links:
        lines.append(f"link {ln.name} " + " ".join(ln.member_hubs))
    for s in schema.satellites:
        lines.append(f"satellite {s.name} parent={s.parent}")
        for n, k in s.attributes:
            lines.append(f"  attr {n} {k}")
    for lab, sat in schema.dispatch:
        lines.append(f"dispatch {lab} {sat}")
    return "\n".join(lines) + "\n"


def load_schema(text: str) -> VaultSchema:
    lines = text.splitlines()
    if not lines or lines[0].strip() != SCHEMA_MAGIC:
        raise SchemaError("not a metavault schema document (line 1)")
    version = None
    hubs, links, sats, dispatch = [], [], [], []
    current = None  # (name, parent, attrs) of satellite being read

    def close():
        nonlocal current
        if current is not None:
            sats.append(SatelliteDef(current[0], current[1], tuple(current[2])))
            current = None

    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            tag = parts[0]
            if tag == "attr":
                if current is None:
                    raise ValueError("attr outside satellite")
                current[2].append((parts[1], parts[2]))
                continue
            close()
            if tag == "version":
                version = int(parts[1])
            elif tag == "hub":
                hubs.append(HubDef(parts[1], parts[2].removeprefix("key=")))
            elif tag == "link":
                links.append(LinkDef(parts[1], tuple(parts[2:])))
            elif tag == "satellite":
                current = (parts[1], parts[2].removeprefix("parent="), [])
            elif tag == "dispatch":
                dispatch.append((parts[1], parts[2]))
            else:
                raise ValueError(f"unknown directive {tag!r}")
        except (IndexError, ValueError) as exc:
            raise SchemaError(f"line {lineno}: {exc or 'truncated directive'}") from None
    close()
    if version is None:
        raise SchemaError("missing version line")
    return VaultSchema(tuple(hubs), tuple(links), tuple(sats), tuple(dispatch), version)


# Document metadata produced by ETL.

@dataclass(frozen=True)
class TitleBlock:
    title: str
    authors: tuple = ()
    description: Optional[str] = None
    keywords: tuple = ()


@dataclass(frozen=True)
class DateBlock:
    epoch: Optional[str] = None
    deposit_date: Optional[datetime] = None
    update_date: Optional[datetime] = None

    @property
    def natural(self) -> Optional[str]:
        if self.deposit_date is not None:
            return utc(self.deposit_date).date().isoformat()
        return self.epoch or None


@dataclass(frozen=True)
class LocationBlock:
    address: Optional[str] = None
    additional_info: Optional[str] = None
    reference: Optional[str] = None


@dataclass(frozen=True)
class DocumentMetadata:
    title: TitleBlock
    category: str
    source: SourceRef
    date: Optional[DateBlock] = None
    location: Optional[LocationBlock] = None
    category_attributes: tuple = ()  # ((attribute, value), ...)

    def __post_init__(self):
        items = self.category_attributes
        if isinstance(items, Mapping):
            items = items.items()
        kept = []
        for name, value in items:
            if isinstance(value, list):
                value = tuple(value)
            if value is None or value == "" or value == ():
                continue
            kept.append((name, value))
        object.__setattr__(self, "category_attributes", tuple(sorted(kept)))

    def title_attributes(self) -> dict:
        t = self.title
        return {"Title": t.title, "Authors": t.authors, "Description": t.description,
                "Keywords": t.keywords}

    def date_attributes(self) -> dict:
        d = self.date or DateBlock()
        return {"Epoch": d.epoch, "DepositDate": d.deposit_date, "UpdateDate": d.update_date}

    def location_attributes(self) -> dict:
        loc = self.location or LocationBlock()
        return {"Address": loc.address, "AdditionalInfo": loc.additional_info,
                "Reference": loc.reference}


def clean_attributes(sat: SatelliteDef, values: Mapping) -> dict:
    """Validate names against ``sat`` and drop absent values."""
    out = {}
    for name, value in values.items():
        kind = sat.kind_of(name)
        v = normalize_value(kind, value)
        if v is not None:
            out[name] = v
    return out


def ordered(sat: SatelliteDef, attributes: Mapping) -> list:
    """Attribute values in declaration order, None for absent."""
    return [attributes.get(n) for n in sat.attribute_names]

