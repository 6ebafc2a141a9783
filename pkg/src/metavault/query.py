"""Conjunctive queries joined through the document link, plus two-phase dispatch.

A plan anchors on the title hub and adds one leg per member hub that a
predicate needs. Execution joins the link with each leg's hub and its current
satellite version, then filters. The two-phase form first resolves each
match's category, then looks the category satellite up document by document.

Textual form (terms joined by ``and``; values may be shell-quoted)::

    Sat_Title.Title contains factory and Sat_Location.Address = Tourcoing
    Sat_Date.DepositDate year 2010 and category is book
"""

from __future__ import annotations

import json
import shlex
from dataclasses import dataclass, field
from datetime import datetime
from typing import Optional, Union

from .catalog import LATEST, current_of
from .predicates import AttributePredicate, CategoryIs, ContainsWord, Equals, YearEquals
from .storage.base import Backend, EntityFilter, Snapshot
from .vault import (
    HUB_CATEGORY,
    LINK_DOCUMENT,
    TIMESTAMP,
    SatelliteDef,
    VaultError,
    VaultSchema,
    category_label,
    iso,
    normalize_natural,
)

UNRESOLVED = "unresolved category"


class QueryError(VaultError):
    pass


@dataclass(frozen=True)
class Leg:
    """A member hub of the link and the satellites joined to it."""

    hub: str
    satellites: tuple = ()  # (satellite, predicates) pairs
    labels: tuple = ()  # category_is labels, category hub only

    @property
    def entities(self) -> tuple:
        return (self.hub,) + tuple(s for s, _ in self.satellites)


@dataclass(frozen=True)
class QueryPlan:
    schema: VaultSchema
    link: str
    anchor: str
    legs: tuple
    predicates: tuple
    two_phase: bool = False
    as_of: Union[datetime, str] = LATEST

    @property
    def entities(self) -> tuple:
        """Entities the query reads, in join order.

        The link is listed only when it joins two or more hubs.
        """
        out = []
        for leg in self.legs:
            out.extend(leg.entities)
        if self.two_phase:
            cats = sorted(set(dict(self.schema.dispatch).values()))
            if HUB_CATEGORY not in out:
                out.append(HUB_CATEGORY)
            out.extend(s for s in cats if s not in out)
        if len(self.legs) > 1 or self.two_phase:
            out.append(self.link)
        return tuple(out)

    def leg(self, hub: str) -> Optional[Leg]:
        for leg in self.legs:
            if leg.hub == hub:
                return leg
        return None

    def describe(self) -> str:
        return " and ".join(str(p) for p in self.predicates) + (
            " [two-phase]" if self.two_phase else "")


def plan(schema: VaultSchema, predicates, two_phase: bool = False,
         as_of: Union[datetime, str] = LATEST, link: str = LINK_DOCUMENT) -> QueryPlan:
    predicates = tuple(predicates)
    if not predicates:
        raise QueryError("a query needs at least one predicate")
    link_def = schema.link(link)
    members = link_def.member_hubs
    anchor = members[0]
    sats: dict = {anchor: {}}
    labels: dict = {}
    for p in predicates:
        if isinstance(p, CategoryIs):
            if HUB_CATEGORY not in members:
                raise QueryError(f"{link} has no category hub")
            labels.setdefault(HUB_CATEGORY, []).append(p.label)
            sats.setdefault(HUB_CATEGORY, {})
            sat = schema.dispatch_for(p.label)
            if sat is not None:
                sats[HUB_CATEGORY].setdefault(sat, [])
            continue
        if not isinstance(p, AttributePredicate):
            raise QueryError(f"unsupported predicate {p!r}")
        if not schema.has(p.entity):
            raise QueryError(f"unknown entity {p.entity!r} in {p}")
        d = schema.entity(p.entity)
        if not isinstance(d, SatelliteDef):
            raise QueryError(f"{p.entity} is not a satellite")
        if p.attribute not in d.attribute_names:
            raise QueryError(f"unknown attribute {p.entity}.{p.attribute}")
        if d.parent not in members:
            raise QueryError(f"{p.entity} does not describe a member hub of {link}")
        sats.setdefault(d.parent, {}).setdefault(p.entity, []).append(p)
    sats[anchor].setdefault(_title_satellite(schema, anchor), [])
    legs = tuple(
        Leg(h, tuple((s, tuple(ps)) for s, ps in sats[h].items()), tuple(labels.get(h, ())))
        for h in members if h in sats)
    return QueryPlan(schema, link, anchor, legs, predicates, two_phase, as_of)


def _title_satellite(schema: VaultSchema, hub: str) -> str:
    for s in schema.satellites_of(hub):
        return s.name
    raise QueryError(f"{hub} has no satellite")


# results

def _jsonable(attrs, sat: SatelliteDef) -> dict:
    out = {}
    for name, kind in sat.attributes:
        v = attrs.get(name)
        if v is None:
            continue
        if kind == TIMESTAMP:
            v = iso(v)
        elif isinstance(v, tuple):
            v = list(v)
        out[name] = v
    return out


@dataclass
class ResultRow:
    link_id: str
    source: str
    satellites: dict  # satellite -> JSON-ready attribute map
    category: Optional[str] = None
    category_satellite: Optional[str] = None
    flag: Optional[str] = None

    def to_dict(self) -> dict:
        out = {"link_id": self.link_id, "source": self.source, "satellites": self.satellites}
        if self.category is not None:
            out["category"] = self.category
            out["category_satellite"] = self.category_satellite
            if self.flag:
                out["flag"] = self.flag
        return out


@dataclass
class ResultSet:
    rows: list = field(default_factory=list)

    def __post_init__(self):
        self.rows.sort(key=lambda r: r.link_id)
        ids = [r.link_id for r in self.rows]
        if len(ids) != len(set(ids)):
            raise QueryError("duplicate link ids in result")

    def __len__(self):
        return len(self.rows)

    @property
    def link_ids(self) -> list:
        return [r.link_id for r in self.rows]

    def to_json_lines(self) -> str:
        return "".join(
            json.dumps(r.to_dict(), ensure_ascii=False, sort_keys=False) + "\n" for r in self.rows)


# execution

class _Current:
    """Memoized current-version lookups for one execution."""

    def __init__(self, backend: Backend, snap: Snapshot, as_of):
        self.backend, self.snap, self.as_of = backend, snap, as_of
        self._seen = {}

    def __call__(self, sat: str, parent: str):
        k = (sat, parent)
        if k not in self._seen:
            self._seen[k] = current_of(self.backend.history(sat, parent, self.snap), self.as_of)
        return self._seen[k]


def _satisfying_parents(backend: Backend, sat: str, preds: tuple, snap: Snapshot,
                        current: _Current) -> set:
    """Parent keys whose current version of ``sat`` satisfies ``preds``."""
    out, checked = set(), set()
    for rec in backend.scan(EntityFilter(sat, preds), snap):
        parent = rec.parent_key
        if parent in checked:
            continue
        checked.add(parent)
        cur = current(sat, parent)
        if cur is not None and all(p.matches(cur.attributes.get(p.attribute)) for p in preds):
            out.add(parent)
    return out


def _label_keys(backend: Backend, hub: str, labels: tuple, snap: Snapshot) -> set:
    wanted = {normalize_natural(lb) for lb in labels}
    out = set()
    for rec in backend.scan(EntityFilter(hub), snap):
        label = normalize_natural(category_label(rec.natural))
        if all(label == w for w in wanted):
            out.add(rec.key)
    return out


def _matching_links(p: QueryPlan, backend: Backend, snap: Snapshot, current: _Current) -> list:
    """Link records passing every leg: filtered legs first, then inner-join checks."""
    allowed = {}
    for leg in p.legs:
        keys = None
        if leg.labels:
            keys = _label_keys(backend, leg.hub, leg.labels, snap)
        for sat, preds in leg.satellites:
            if preds:
                got = _satisfying_parents(backend, sat, preds, snap, current)
                keys = got if keys is None else keys & got
        if keys is not None:
            allowed[leg.hub] = keys
    joined = [(leg.hub, sat) for leg in p.legs for sat, preds in leg.satellites if not preds]
    out = []
    for rec in backend.scan(EntityFilter(p.link), snap):
        members = dict(rec.member_keys)
        if all(members[h] in keys for h, keys in allowed.items()) and all(
                current(sat, members[h]) is not None for h, sat in joined):
            out.append(rec)
    return out


def _leg_attributes(p: QueryPlan, link_rec, current: _Current) -> dict:
    schema = p.schema
    members = dict(link_rec.member_keys)
    out = {}
    for leg in p.legs:
        for sat, _ in leg.satellites:
            cur = current(sat, members[leg.hub])
            out[sat] = _jsonable(cur.attributes, schema.satellite(sat))
    return out


def execute(p: QueryPlan, backend: Backend, snapshot: Optional[Snapshot] = None) -> ResultSet:
    if p.two_phase:
        return execute_two_phase(p, backend, snapshot)
    _check_backend(p, backend)
    snap = snapshot or backend.snapshot()
    current = _Current(backend, snap, p.as_of)
    rows = [ResultRow(rec.id, rec.source, _leg_attributes(p, rec, current))
            for rec in _matching_links(p, backend, snap, current)]
    return ResultSet(rows)


def execute_two_phase(p, backend: Backend, snapshot: Optional[Snapshot] = None) -> ResultSet:
    """Phase 1 finds matching documents and reads each one's category label.

    Phase 2 runs one subquery per document joining the category hub with the
    satellite the dispatch table names for that label; both sides are full
    filtered scans, as an unindexed per-row subquery would be. Accepts a plan
    or a single title predicate.
    """
    if not isinstance(p, QueryPlan):
        p = plan(backend.schema, [p], two_phase=True)
    _check_backend(p, backend)
    schema = p.schema
    snap = snapshot or backend.snapshot()
    current = _Current(backend, snap, p.as_of)
    found = []
    for rec in _matching_links(p, backend, snap, current):
        cat_key = dict(rec.member_keys)[HUB_CATEGORY]
        label = category_label(backend.get_by_key(HUB_CATEGORY, cat_key, snap).natural)
        found.append((rec, cat_key, label))
    rows = []
    for rec, cat_key, label in found:
        attrs = _leg_attributes(p, rec, current)
        sat = schema.dispatch_for(label)
        if sat is None:
            rows.append(ResultRow(rec.id, rec.source, attrs, label, None, UNRESOLVED))
            continue
        hubs = list(backend.scan(EntityFilter(HUB_CATEGORY, key=cat_key), snap))
        versions = list(backend.scan(EntityFilter(sat, key=cat_key), snap)) if hubs else []
        cur = current_of(versions, p.as_of)
        attrs[sat] = _jsonable(cur.attributes, schema.satellite(sat)) if cur else {}
        rows.append(ResultRow(rec.id, rec.source, attrs, label, sat))
    return ResultSet(rows)


def _check_backend(p: QueryPlan, backend: Backend) -> None:
    schema = backend.schema
    if schema is None or schema.version < p.schema.version or not schema.extends(p.schema):
        raise QueryError("backend schema does not cover the plan's schema")


# the five reference queries

def reference_queries(word: str = "factory", address: str = "Tourcoing", year: int = 2010,
                  label: str = "book") -> dict:
    title = ContainsWord("Sat_Title", "Title", word)
    addr = Equals("Sat_Location", "Address", address)
    dep = YearEquals("Sat_Date", "DepositDate", year)
    return {
        "Q1": ((title,), False),
        "Q2": ((title, addr), False),
        "Q3": ((title, addr, dep), False),
        "Q4": ((title, addr, dep, CategoryIs(label)), False),
        "Q5": ((title,), True),
    }


QUERY_NAMES = ("Q1", "Q2", "Q3", "Q4", "Q5")


def plan_named(schema: VaultSchema, name: str, **params) -> QueryPlan:
    preds, two = reference_queries(**params)[name]
    return plan(schema, preds, two_phase=two)


# textual form

def parse_query(text: str) -> tuple:
    """Predicates from the textual form; raises QueryError with the bad term."""
    try:
        tokens = shlex.split(text)
    except ValueError as exc:
        raise QueryError(f"cannot tokenize query: {exc}") from None
    terms, cur = [], []
    for tok in tokens:
        if tok.lower() == "and":
            terms.append(cur)
            cur = []
        else:
            cur.append(tok)
    terms.append(cur)
    return tuple(_parse_term(t) for t in terms)


def _parse_term(t: list):
    shown = " ".join(t) or "(empty)"
    if len(t) == 3 and t[0].lower() == "category" and t[1].lower() == "is":
        return CategoryIs(t[2])
    if len(t) != 3:
        raise QueryError(f"bad term {shown!r}: expected 'Entity.Attribute OP value'")
    target, op, value = t
    entity, dot, attribute = target.partition(".")
    if not dot or not entity or not attribute:
        raise QueryError(f"bad term {shown!r}: expected Entity.Attribute")
    op = op.lower()
    if op == "contains":
        return ContainsWord(entity, attribute, value)
    if op in ("=", "=="):
        return Equals(entity, attribute, value)
    if op == "year":
        try:
            return YearEquals(entity, attribute, int(value))
        except ValueError:
            raise QueryError(f"bad term {shown!r}: year must be an integer") from None
    raise QueryError(f"bad term {shown!r}: unknown operator {op!r}")
