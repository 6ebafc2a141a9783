"""Brute-force reference answers computed from flat document metadata.

No backend, no plan: documents are replayed in insertion order, shared hubs
are grouped by their normalized natural key and the last document of a group
supplies that hub's satellite content. Predicates are re-implemented here so
the oracle does not share code paths with the engine it checks.
"""

from __future__ import annotations

from datetime import datetime, timezone

TITLE_ATTRS = ("Title", "Authors", "Description", "Keywords")
DATE_ATTRS = ("Epoch", "DepositDate", "UpdateDate")
LOCATION_ATTRS = ("Address", "AdditionalInfo", "Reference")
UNKNOWN = "(unknown)"


def _norm(text: str) -> str:
    return " ".join(text.split()).casefold()


def _ms(value: datetime) -> datetime:
    value = value.astimezone(timezone.utc)
    return value.replace(microsecond=value.microsecond // 1000 * 1000)


def _present(value) -> bool:
    return value is not None and value != "" and value != ()


def _clean(pairs) -> dict:
    out = {}
    for name, value in pairs:
        if isinstance(value, list):
            value = tuple(value)
        if isinstance(value, tuple):
            value = tuple(v for v in value if v not in (None, ""))
        if isinstance(value, datetime):
            value = _ms(value)
        if _present(value):
            out[name] = value
    return out


def _date_natural(doc):
    d = doc.date
    if d is None:
        return None
    if d.deposit_date is not None:
        return d.deposit_date.astimezone(timezone.utc).date().isoformat()
    return d.epoch or None


class FlatCatalog:
    """Documents in insertion order, numbered ``LD0000001``, ``LD0000002``, ..."""

    def __init__(self, documents, dispatch):
        self.documents = list(documents)
        self.dispatch = dict(dispatch)
        self._groups = {}
        for i, doc in enumerate(self.documents):
            for sat, group, attrs in self._blocks(doc):
                if attrs:
                    self._groups[(sat, group)] = attrs

    def link_id(self, i: int) -> str:
        return f"LD{i + 1:07d}"

    def _blocks(self, doc):
        t = doc.title
        yield "Sat_Title", _norm(t.title), _clean(zip(TITLE_ATTRS, (
            t.title, t.authors, t.description, t.keywords)))
        natural = _date_natural(doc)
        if natural:
            d = doc.date
            yield "Sat_Date", _norm(natural), _clean(zip(DATE_ATTRS, (
                d.epoch, d.deposit_date, d.update_date)))
        loc = doc.location
        if loc is not None and loc.address:
            yield "Sat_Location", _norm(loc.address), _clean(zip(LOCATION_ATTRS, (
                loc.address, loc.additional_info, loc.reference)))
        sat = self.dispatch.get(doc.category)
        if sat is not None:
            yield sat, self._category_group(doc), _clean(doc.category_attributes)

    def _category_group(self, doc) -> str:
        return _norm(f"{doc.category}:{doc.source.uri}")

    def group_of(self, doc, satellite: str):
        """The hub group whose satellite ``satellite`` this document joins."""
        if satellite == "Sat_Title":
            return _norm(doc.title.title)
        if satellite == "Sat_Date":
            n = _date_natural(doc)
            return _norm(n) if n else _norm(UNKNOWN)
        if satellite == "Sat_Location":
            a = doc.location.address if doc.location else None
            return _norm(a) if a else _norm(UNKNOWN)
        return self._category_group(doc)

    def current(self, doc, satellite: str):
        """Current content of ``satellite`` for the document's hub, or None."""
        if satellite not in ("Sat_Title", "Sat_Date", "Sat_Location"):
            if self.dispatch.get(doc.category) != satellite:
                return None
        return self._groups.get((satellite, self.group_of(doc, satellite)))


# predicate semantics, restated

def _contains(value, word: str) -> bool:
    needle = _norm(word)
    if isinstance(value, str):
        return needle in _norm(value)
    if isinstance(value, tuple):
        return any(needle in _norm(v) for v in value)
    return False


def _equals(value, want: str) -> bool:
    want = _norm(want)
    if isinstance(value, str):
        return _norm(value) == want
    if isinstance(value, tuple):
        return any(_norm(v) == want for v in value)
    if isinstance(value, datetime):
        stamp = value.strftime("%Y-%m-%dt%H:%M:%S.") + f"{value.microsecond // 1000:03d}z"
        return want in (stamp, value.date().isoformat())
    return False


def _year(value, year: int) -> bool:
    if isinstance(value, datetime):
        return value.year == year
    if isinstance(value, str):
        run = ""
        for ch in value + " ":
            if ch.isdecimal():
                run += ch
                continue
            if len(run) == 4:
                return int(run) == year
            run = ""
        return False
    return False


def _term(pred):
    """(satellite or None, test) for one predicate object."""
    kind = type(pred).__name__
    if kind == "CategoryIs":
        label = _norm(pred.label)
        return None, lambda doc, flat: _norm(doc.category) == label
    attr = pred.attribute
    if kind == "ContainsWord":
        test = lambda v: _contains(v, pred.word)  # noqa: E731
    elif kind == "Equals":
        test = lambda v: _equals(v, pred.value)  # noqa: E731
    elif kind == "YearEquals":
        test = lambda v: _year(v, pred.year)  # noqa: E731
    else:
        raise TypeError(f"oracle cannot evaluate {pred!r}")
    sat = pred.entity

    def check(doc, flat):
        cur = flat.current(doc, sat)
        return cur is not None and test(cur.get(attr))
    return sat, check


def _joined_satellites(predicates, dispatch) -> list:
    sats = ["Sat_Title"]
    for p in predicates:
        if type(p).__name__ == "CategoryIs":
            s = dispatch.get(p.label)
        else:
            s = p.entity
        if s is not None and s not in sats:
            sats.append(s)
    return sats


def _render(attrs: dict) -> dict:
    out = {}
    for k, v in attrs.items():
        if isinstance(v, datetime):
            v = v.strftime("%Y-%m-%dT%H:%M:%S.") + f"{v.microsecond // 1000:03d}Z"
        elif isinstance(v, tuple):
            v = list(v)
        out[k] = v
    return out


def oracle_scan(documents, predicates, dispatch, two_phase: bool = False) -> list:
    """Rows as dicts ``{link_id, source, satellites[, category, ...]}``, by link id.

    Every joined satellite must have current content for a document to match
    (inner-join semantics). ``satellites`` maps satellite names to attribute
    dicts with timestamps rendered as ISO strings.
    """
    flat = FlatCatalog(documents, dispatch)
    terms = [_term(p) for p in predicates]
    joined = _joined_satellites(predicates, flat.dispatch)
    rows = []
    for i, doc in enumerate(flat.documents):
        if not all(check(doc, flat) for _, check in terms):
            continue
        cur = {s: flat.current(doc, s) for s in joined}
        if any(v is None for v in cur.values()):
            continue
        row = {"link_id": flat.link_id(i), "source": doc.source.uri,
               "satellites": {s: _render(v) for s, v in cur.items()}}
        if two_phase:
            sat = flat.dispatch.get(doc.category)
            row["category"] = doc.category
            row["category_satellite"] = sat
            if sat is None:
                row["flag"] = "unresolved category"
            else:
                row["satellites"][sat] = _render(flat.current(doc, sat) or {})
        rows.append(row)
    return rows


def oracle_link_ids(documents, predicates, dispatch, two_phase: bool = False) -> list:
    return [r["link_id"] for r in oracle_scan(documents, predicates, dispatch, two_phase)]


def history_as_of(versions, instant: datetime):
    """Linear scan: the version with the latest datetime not after ``instant``."""
    best = None
    for v in versions:
        if v.datetime <= instant and (best is None or v.datetime >= best.datetime):
            best = v
    return best
