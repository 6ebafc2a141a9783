"""Corpus manifest loading, per-source metadata extractors and the ETL driver.

Four source kinds are understood:

``inventory``   one XML record per building (one instance per file)
``voixdunord``  one XML press file holding many ``<article>`` instances
``irhis``       JPEG pictures with an optional Dublin Core JSON sidecar
``book``        PDF books described by a Dublin Core JSON sidecar

Sidecars sit next to their file with the same stem and a ``.json`` suffix.
"""

from __future__ import annotations

import json
import logging
import re
import shlex
import time
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Callable, Optional

from .vault import (
    DateBlock,
    DocumentMetadata,
    IntegrityError,
    LocationBlock,
    SourceRef,
    TitleBlock,
    VaultError,
)

log = logging.getLogger(__name__)

SOURCE_KINDS = ("inventory", "voixdunord", "irhis", "book")
FILE_PATTERNS = {
    "inventory": ("*.xml",),
    "voixdunord": ("*.xml",),
    "irhis": ("*.jpg", "*.jpeg"),
    "book": ("*.pdf",),
}


class ManifestError(VaultError):
    pass


class ExtractionError(VaultError):
    pass


# manifest

@dataclass(frozen=True)
class ManifestEntry:
    kind: str
    path: Path
    expected_count: Optional[int] = None


@dataclass(frozen=True)
class CorpusManifest:
    root: Path
    entries: tuple = ()


def load_manifest(path) -> CorpusManifest:
    """Parse a manifest file.

    One entry per line: ``<kind> <path> [<expected instance count>]``.
    Blank lines and ``#`` comments are ignored; tokens follow shell quoting.
    Paths are relative to the manifest's directory.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"{path}: cannot read manifest: {exc.strerror}") from None
    root = path.resolve().parent
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        try:
            tokens = shlex.split(line, comments=True)
        except ValueError as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from None
        if not tokens:
            continue
        col = line.index(tokens[0]) + 1
        if len(tokens) not in (2, 3):
            raise ManifestError(
                f"{path}:{lineno}:{col}: expected '<kind> <path> [<count>]', got {len(tokens)} fields")
        kind = tokens[0]
        if kind not in SOURCE_KINDS:
            raise ManifestError(
                f"{path}:{lineno}:{col}: unknown source kind {kind!r} "
                f"(expected one of {', '.join(SOURCE_KINDS)})")
        expected = None
        if len(tokens) == 3:
            try:
                expected = int(tokens[2])
                if expected < 0:
                    raise ValueError
            except ValueError:
                c = line.rindex(tokens[2]) + 1
                raise ManifestError(
                    f"{path}:{lineno}:{c}: expected count must be a non-negative integer") from None
        target = (root / tokens[1]).resolve()
        if not target.exists():
            c = line.index(tokens[1]) + 1 if tokens[1] in line else col
            raise ManifestError(f"{path}:{lineno}:{c}: path does not exist: {tokens[1]}")
        entries.append(ManifestEntry(kind, target, expected))
    return CorpusManifest(root, tuple(entries))


# raw documents

@dataclass(frozen=True)
class RawDocument:
    kind: str
    path: Path
    uri: str
    size: int = 0
    modified: float = 0.0

    @property
    def name(self) -> str:
        return self.path.name

    def read_bytes(self) -> bytes:
        try:
            return self.path.read_bytes()
        except OSError as exc:
            raise ExtractionError(f"{self.uri}: unreadable: {exc.strerror}") from None

    def sidecar(self) -> Optional[dict]:
        """Parsed Dublin Core sidecar, or None when there is none."""
        side = self.path.with_suffix(".json")
        if not side.exists():
            return None
        try:
            obj = json.loads(side.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ExtractionError(f"{self.uri}: bad sidecar: {exc}") from None
        return parse_dc(obj)


def raw_documents(entry: ManifestEntry, root: Path) -> list:
    if entry.path.is_dir():
        files = sorted({p for pat in FILE_PATTERNS[entry.kind] for p in entry.path.glob(pat)})
    else:
        files = [entry.path]
    out = []
    for p in files:
        try:
            uri = p.relative_to(root).as_posix()
        except ValueError:
            uri = p.as_posix()
        st = p.stat()
        out.append(RawDocument(entry.kind, p, uri, st.st_size, st.st_mtime))
    return out


# Dublin Core records

_DC_KEY = re.compile(r"^[a-z]+:[a-z]+$")


def parse_dc(obj) -> dict:
    """Validate a Dublin Core record: prefix-qualified lowercase element names."""
    if not isinstance(obj, dict):
        raise ExtractionError("Dublin Core record must be a JSON object")
    out = {}
    for key, value in obj.items():
        if not _DC_KEY.match(key):
            raise ExtractionError(f"invalid Dublin Core element name {key!r}")
        if isinstance(value, list):
            value = tuple(str(v) for v in value if v not in (None, ""))
            if not value:
                continue
        elif value is None or value == "":
            continue
        else:
            value = str(value)
        out[key] = value
    return out


# value helpers

def clean_text(text: Optional[str]) -> Optional[str]:
    if text is None:
        return None
    text = " ".join(text.split())
    return text or None


_SPLIT = re.compile(r"[,;]|\.(?=\s|$)")


def split_keywords(text: Optional[str]) -> tuple:
    if not text:
        return ()
    return tuple(k for k in (clean_text(p) for p in _SPLIT.split(text)) if k)


_BRACKET_YEAR = re.compile(r"^\[(\d{4})\]$")
_BARE_YEAR = re.compile(r"^\d{4}$")


def parse_date(text: Optional[str]) -> Optional[datetime]:
    """ISO date or datetime, bare year, or bracketed year; None otherwise."""
    text = clean_text(text)
    if not text:
        return None
    m = _BRACKET_YEAR.match(text)
    if m or _BARE_YEAR.match(text):
        return datetime(int(m.group(1) if m else text), 1, 1, tzinfo=timezone.utc)
    try:
        if "T" in text or " " in text:
            value = datetime.fromisoformat(text.replace("Z", "+00:00"))
        else:
            value = datetime.fromisoformat(text + "T00:00:00")
    except ValueError:
        return None
    if value.tzinfo is None:
        value = value.replace(tzinfo=timezone.utc)
    return value.astimezone(timezone.utc)


def _as_tuple(value) -> tuple:
    if value is None:
        return ()
    if isinstance(value, str):
        return (clean_text(value),) if clean_text(value) else ()
    return tuple(c for c in (clean_text(v) for v in value) if c)


def _date_block(epoch=None, deposit=None, update=None) -> Optional[DateBlock]:
    block = DateBlock(clean_text(epoch), parse_date(deposit), parse_date(update))
    return block if block != DateBlock() else None


def _location_block(address=None, info=None, reference=None) -> Optional[LocationBlock]:
    block = LocationBlock(clean_text(address), clean_text(info), clean_text(reference))
    return block if block != LocationBlock() else None


def _parse_xml(raw: RawDocument) -> ET.Element:
    try:
        return ET.fromstring(raw.read_bytes())
    except ET.ParseError as exc:
        raise ExtractionError(f"{raw.uri}: malformed XML: {exc}") from None


def _child_text(el: ET.Element, tag: str) -> Optional[str]:
    child = el.find(tag)
    return clean_text("".join(child.itertext())) if child is not None else None


def _require_title(raw: RawDocument, title: Optional[str]) -> str:
    if not title:
        raise ExtractionError(f"{raw.uri}: missing title")
    return title


# extractors

def extract_inventory(raw: RawDocument) -> list:
    root = _parse_xml(raw)
    authors = tuple(clean_text("".join(a.itertext())) for a in root.iter("author"))
    dates = root.find("dates")
    loc = root.find("location")
    attrs = {"Property": _child_text(root, "property"), "Link": _child_text(root, "link")}
    doc = DocumentMetadata(
        TitleBlock(_require_title(raw, _child_text(root, "title")),
                   tuple(a for a in authors if a),
                   _child_text(root, "description"),
                   split_keywords(_child_text(root, "keywords"))),
        "inventory",
        SourceRef(raw.uri),
        _date_block(_child_text(dates, "epoch"), _child_text(dates, "deposit"),
                    _child_text(dates, "update")) if dates is not None else None,
        _location_block(_child_text(loc, "address"), _child_text(loc, "info"),
                        _child_text(loc, "reference")) if loc is not None else None,
        attrs,
    )
    return [doc]


def extract_press(raw: RawDocument) -> list:
    """One record per ``<article>``; source is ``<uri>#article-<n>``."""
    root = _parse_xml(raw)
    default_lang = root.get("lang")
    out = []
    for i, art in enumerate(root.iter("article"), start=1):
        n = art.get("n") or str(i)
        note = _child_text(art, "note")
        out.append(DocumentMetadata(
            TitleBlock(_require_title(raw, _child_text(art, "title")),
                       _as_tuple([a.text for a in art.iter("author")]),
                       _child_text(art, "summary"),
                       split_keywords(_child_text(art, "keywords"))),
            "voixdunord",
            SourceRef(f"{raw.uri}#article-{n}"),
            _date_block(deposit=_child_text(art, "date")),
            _location_block(_child_text(art, "place")),
            {"Language": clean_text(art.get("lang") or default_lang),
             "Note": (note,) if note else ()},
        ))
    return out


def press_document(raw: RawDocument, articles: Optional[list] = None) -> Optional[DocumentMetadata]:
    """Fold a press file and its articles into one document-level record.

    Title, description, date and place come from the ``<press>`` element;
    authors and keywords are the ordered union over articles; the category
    note lists the article titles.
    """
    root = _parse_xml(raw)
    if articles is None:
        articles = extract_press(raw)
    if not articles:
        return None
    authors, keywords = {}, {}
    for a in articles:
        authors.update(dict.fromkeys(a.title.authors))
        keywords.update(dict.fromkeys(a.title.keywords))
    return DocumentMetadata(
        TitleBlock(_require_title(raw, clean_text(root.get("title"))),
                   tuple(authors), _child_text(root, "description"), tuple(keywords)),
        "voixdunord",
        SourceRef(raw.uri),
        _date_block(deposit=root.get("date")),
        _location_block(root.get("place")),
        {"Language": clean_text(root.get("lang")),
         "Note": tuple(a.title.title for a in articles)},
    )


def extract_picture(raw: RawDocument) -> list:
    head = raw.read_bytes()[:3]
    if head[:2] != b"\xff\xd8":
        raise ExtractionError(f"{raw.uri}: not a JPEG file")
    dc = raw.sidecar() or {}
    title = clean_text(dc.get("dc:title")) or raw.path.stem
    return [DocumentMetadata(
        TitleBlock(title, _as_tuple(dc.get("dc:creator")), clean_text(dc.get("dc:description")),
                   split_keywords(dc.get("dc:subject"))),
        "irhis",
        SourceRef(raw.uri),
        _date_block(deposit=dc.get("dc:date")),
        _location_block(dc.get("dc:coverage")),
        {"CodePhoto": clean_text(dc.get("dc:identifier")),
         "Provenance": clean_text(dc.get("dc:source"))},
    )]


def extract_book(raw: RawDocument, dc: dict) -> DocumentMetadata:
    """Map a book's Dublin Core record onto the vault blocks."""
    title = clean_text(dc.get("dc:title"))
    if not title:
        raise ExtractionError(f"{raw.uri}: Dublin Core record lacks dc:title")
    notes = []
    if clean_text(dc.get("dc:description")):
        notes.append(clean_text(dc.get("dc:description")))
    for element, label in (("dc:language", "language"), ("dc:format", "format"),
                           ("dc:source", "source")):
        value = clean_text(dc.get(element))
        if value:
            notes.append(f"{label}: {value}")
    return DocumentMetadata(
        TitleBlock(title, _as_tuple(dc.get("dc:creator")), "; ".join(notes) or None,
                   split_keywords(dc.get("dc:subject"))),
        "book",
        SourceRef(raw.uri),
        _date_block(deposit=dc.get("dc:date")),
        _location_block(dc.get("dc:coverage")),
        {"Rights": clean_text(dc.get("dc:rights")),
         "Publisher": clean_text(dc.get("dc:publisher"))},
    )


def extract(raw: RawDocument) -> tuple:
    """(document-level records to insert, instance count, warnings) for one file."""
    if raw.kind == "inventory":
        docs = extract_inventory(raw)
        return docs, len(docs), []
    if raw.kind == "voixdunord":
        articles = extract_press(raw)
        if not articles:
            return [], 0, [f"{raw.uri}: no articles"]
        return [press_document(raw, articles)], len(articles), []
    if raw.kind == "irhis":
        docs = extract_picture(raw)
        return docs, len(docs), []
    if raw.kind == "book":
        raw.read_bytes()
        dc = raw.sidecar()
        if dc is None:
            raise ExtractionError(f"{raw.uri}: no Dublin Core sidecar")
        return [extract_book(raw, dc)], 1, []
    raise ExtractionError(f"unknown source kind {raw.kind!r}")


# driver

class LoadClock:
    """Deterministic load timestamps: ``start``, ``start + step``, ..."""

    def __init__(self, start: Optional[datetime] = None, step: timedelta = timedelta(milliseconds=1)):
        self.next = start or datetime(2020, 1, 1, tzinfo=timezone.utc)
        self.step = step

    def __call__(self) -> datetime:
        now = self.next
        self.next = now + self.step
        return now


@dataclass
class SourceCounts:
    documents: int = 0
    instances: int = 0
    failures: int = 0


@dataclass
class IngestReport:
    sources: dict = field(default_factory=dict)  # kind -> SourceCounts
    failures: list = field(default_factory=list)  # (uri, message)
    warnings: list = field(default_factory=list)
    link_ids: list = field(default_factory=list)
    integrity_failures: int = 0
    elapsed: float = 0.0

    def counts(self, kind: str) -> SourceCounts:
        return self.sources.setdefault(kind, SourceCounts())

    @property
    def documents(self) -> int:
        return sum(c.documents for c in self.sources.values())

    @property
    def instances(self) -> int:
        return sum(c.instances for c in self.sources.values())

    @property
    def failure_count(self) -> int:
        return sum(c.failures for c in self.sources.values())

    def to_dict(self) -> dict:
        return {
            "sources": {k: vars(c) for k, c in self.sources.items()},
            "documents": self.documents,
            "instances": self.instances,
            "failures": [{"uri": u, "error": m} for u, m in self.failures],
            "warnings": list(self.warnings),
            "elapsed_s": round(self.elapsed, 6),
        }


def _safe_extract(raw: RawDocument):
    try:
        return raw, extract(raw), None
    except ExtractionError as exc:
        return raw, None, str(exc)


def run_etl(manifest: CorpusManifest, catalog, clock: Optional[Callable] = None,
            workers: int = 1) -> IngestReport:
    """Extract every manifest entry and insert the documents into ``catalog``.

    Extraction may run on ``workers`` threads; insertion happens in manifest
    order on the calling thread. Per-file failures are recorded and skipped.
    """
    clock = clock or LoadClock()
    report = IngestReport()
    started = time.perf_counter()
    raws = []
    for entry in manifest.entries:
        report.counts(entry.kind)
        raws.extend((entry, r) for r in raw_documents(entry, manifest.root))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(_safe_extract, [r for _, r in raws]))
    else:
        results = [_safe_extract(r) for _, r in raws]
    for (entry, _), (raw, extracted, error) in zip(raws, results):
        counts = report.counts(entry.kind)
        if error is not None:
            counts.failures += 1
            report.failures.append((raw.uri, error))
            log.warning("skipping %s", error)
            continue
        docs, instances, warnings = extracted
        report.warnings.extend(warnings)
        try:
            for doc in docs:
                report.link_ids.append(catalog.insert_document(doc, clock()))
        except VaultError as exc:
            counts.failures += 1
            report.failures.append((raw.uri, str(exc)))
            if isinstance(exc, IntegrityError):
                report.integrity_failures += 1
            continue
        counts.documents += len(docs)
        counts.instances += instances
    expected = {}
    for entry in manifest.entries:
        if entry.expected_count is not None:
            expected[entry.kind] = expected.get(entry.kind, 0) + entry.expected_count
    for kind, want in expected.items():
        got = report.counts(kind).instances
        if got != want:
            report.warnings.append(f"{kind}: expected {want} instances, ingested {got}")
    report.elapsed = time.perf_counter() - started
    return report
