"""Deterministic synthetic corpus shaped like a textile-heritage data lake.

Per scale unit the corpus holds 49 inventory records, one press file with 30
articles, 30 pictures and 165 books: 245 source documents, 274 instances.
Content is synthetic. Scale unit 0 also holds one book with a fixed Dublin
Core record.

Predicate hit rates are fixed by :data:`HIT_RATES`; on top of them every
scale unit plants :data:`PLANTED_BOOK_HITS` books matching title "factory",
address "Tourcoing", deposit year 2010 and category "book".
"""

from __future__ import annotations

import json
import random
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .vault import DateBlock, DocumentMetadata, LocationBlock, SourceRef, TitleBlock

DEFAULT_SEED = 20170912
DOCUMENTS_PER_UNIT = {"inventory": 49, "voixdunord": 1, "irhis": 30, "book": 165}
ARTICLES_PER_PRESS = 30
SOURCE_DIRS = {"inventory": "inventory", "voixdunord": "voixdunord", "irhis": "irhis",
               "book": "books"}
PLANTED_BOOK_HITS = 3

# Probability that a generated document carries each feature, per source.
HIT_RATES = {
    # title contains "factory"
    "factory": {"inventory": 0.45, "irhis": 0.35, "book": 0.12, "voixdunord": 1.0},
    # a location block is present
    "located": {"inventory": 0.92, "irhis": 0.85, "book": 0.40},
    # the address is exactly Tourcoing, given a location
    "tourcoing": {"inventory": 0.30, "irhis": 0.30, "book": 0.30},
    # a deposit date is present
    "dated": {"inventory": 0.90, "irhis": 0.80, "book": 0.95},
    # the deposit year is 2010, given a date
    "y2010": {"inventory": 0.25, "irhis": 0.25, "book": 0.25},
}
PICTURE_SIDECAR_RATE = 0.9

SAMPLE_BOOK_STEM = "00000C842_001"
SAMPLE_BOOK_DC = {
    "dc:relation": "http://www.sudoc.fr/122661389",
    "dc:creator": [
        "Petit, Jules",
        "Chambre de commerce et d'industrie (Boulogne-sur-Mer, Pas-de-Calais).",
        "Commission du projet de chemin de fer direct de Calais a Marseille",
    ],
    "dc:subject": "Calais-Marseille, Chemin de fer (France).",
    "dc:publisher": "Villeneuve d'Ascq : SCD Lille 3",
    "dc:date": "[2008]",
    "dc:format": "application/pdf",
    "dc:language": "fre",
    "dc:rights": "domaine public",
    "dc:title": "Projet de chemin de fer de Calais a Marseille rapport \n"
                "    fait a la Chambre de commerce de Boulogne, le 25 novembre 1881",
    "dc:type": "text",
    "dc:source": "Bibliotheque Georges Lefebvre",
}

CITIES = ["Tourcoing", "Roubaix", "Lille", "Wattrelos", "Croix", "Halluin", "Comines",
          "Armentieres", "Villeneuve d'Ascq", "Marcq-en-Baroeul"]
STREETS = ["rue de Tourcoing", "boulevard de Roubaix", "rue du Fresnoy", "quai de Marquette",
           "rue de Lannoy", "avenue Jean Lebas"]
KINDS = ["Filature", "Tissage", "Peignage", "Teinturerie", "Retorderie", "Blanchisserie",
         "Manufacture", "Usine", "Entrepot", "Cite ouvriere", "Conditionnement"]
FAMILIES = ["Motte-Bossut", "Prouvost", "Lepoutre", "Masurel", "Tiberghien", "Dewavrin",
            "Pollet", "Desurmont", "Leclercq-Dupire", "Vanoutryve", "Delattre", "Screpel"]
FACTORY_PHRASES = ["textile factory", "former wool factory", "cotton factory", "Factory chimney",
                   "spinning factory", "factory complex"]
PLAIN_PHRASES = ["workers housing", "boiler house", "warehouse", "weaving shed", "office building",
                 "engine room"]
BOOK_TOPICS = ["Histoire de l'industrie textile", "Rapport sur la condition ouvriere",
               "Annuaire du commerce", "Memoire sur les canaux", "Notice sur les peignages",
               "Etude des chemins de fer", "Statistique industrielle"]
EPOCHS = ["XIXe siecle", "fin XIXe siecle", "debut XXe siecle", "entre-deux-guerres", "1850-1900"]
AUTHORS = ["Dupont, Marie", "Lefebvre, Georges", "Delcourt, Paul", "Martin, Louise",
           "Duhamel, Paul", "Vandenberghe, Anne", "Coulon, Henri", "Bernard, Claire"]
KEYWORDS = ["textile", "patrimoine industriel", "laine", "coton", "architecture", "brique",
            "cheminee", "ouvriers", "Nord", "commerce"]
PUBLISHERS = ["Villeneuve d'Ascq : SCD Lille 3", "Lille : Imprimerie Danel",
              "Roubaix : Bibliotheque municipale", "Paris : Guillaumin"]
PROPERTIES = ["propriete privee", "propriete de la commune", "propriete d'une societe privee"]

JPEG_STUB = (b"\xff\xd8\xff\xe0\x00\x10JFIF\x00\x01\x01\x00\x00\x01\x00\x01\x00\x00"
             b"\xff\xd9")
PDF_STUB = b"%PDF-1.4\n% synthetic placeholder\n%%EOF\n"


def _midnight(y: int, m: int, d: int) -> datetime:
    return datetime(y, m, d, tzinfo=timezone.utc)


@dataclass
class FixtureCorpus:
    """Expected document-level metadata in ingestion order, plus the raw layout."""

    scale: int
    seed: int
    documents: list = field(default_factory=list)
    instances: dict = field(default_factory=dict)  # kind -> count
    # kind -> list of (relative path, payload spec) used by write_corpus
    files: dict = field(default_factory=dict)
    articles: dict = field(default_factory=dict)  # press uri -> article records

    @property
    def document_counts(self) -> dict:
        out = {}
        for d in self.documents:
            out[d.category] = out.get(d.category, 0) + 1
        return out


class _Gen:
    def __init__(self, rng: random.Random):
        self.rng = rng

    def hit(self, feature: str, kind: str) -> bool:
        return self.rng.random() < HIT_RATES[feature][kind]

    def date(self, year_2010: bool) -> datetime:
        r = self.rng
        year = 2010 if year_2010 else r.choice([y for y in range(2004, 2017) if y != 2010])
        return _midnight(year, r.randint(1, 12), r.randint(1, 28))

    def address(self, tourcoing: bool) -> str:
        r = self.rng
        if tourcoing:
            return "Tourcoing"
        if r.random() < 0.15:
            return f"{r.randint(1, 180)} {r.choice(STREETS)}, {r.choice(CITIES[1:])}"
        return r.choice(CITIES[1:])

    def phrase(self, factory: bool) -> str:
        return self.rng.choice(FACTORY_PHRASES if factory else PLAIN_PHRASES)

    def authors(self, lo=0, hi=2) -> tuple:
        return tuple(self.rng.sample(AUTHORS, self.rng.randint(lo, hi)))

    def keywords(self) -> tuple:
        return tuple(self.rng.sample(KEYWORDS, self.rng.randint(1, 3)))


def generate_scaled_corpus(scale: int = 1, seed: int = DEFAULT_SEED) -> FixtureCorpus:
    if scale < 1:
        raise ValueError("scale must be >= 1")
    corpus = FixtureCorpus(scale, seed)
    per_kind = {k: [] for k in DOCUMENTS_PER_UNIT}
    for unit in range(scale):
        g = _Gen(random.Random(seed * 1000003 + unit))
        per_kind["inventory"].extend(_inventory(g, unit))
        per_kind["voixdunord"].append(_press(g, unit, corpus))
        per_kind["irhis"].extend(_pictures(g, unit))
        per_kind["book"].extend(_books(g, unit))
    for kind in DOCUMENTS_PER_UNIT:
        items = sorted(per_kind[kind], key=lambda item: item[0])
        corpus.files[kind] = items
        corpus.documents.extend(doc for _, doc, _ in items if doc is not None)
    corpus.instances = {
        "inventory": len(per_kind["inventory"]),
        "voixdunord": sum(len(v) for v in corpus.articles.values()),
        "irhis": len(per_kind["irhis"]),
        "book": len(per_kind["book"]),
    }
    return corpus


def _inventory(g: _Gen, unit: int) -> list:
    out = []
    for i in range(DOCUMENTS_PER_UNIT["inventory"]):
        serial = unit * DOCUMENTS_PER_UNIT["inventory"] + i + 1
        r = g.rng
        title = f"{r.choice(KINDS)} {r.choice(FAMILIES)}, {g.phrase(g.hit('factory', 'inventory'))} (INV-{serial:05d})"
        loc = None
        if g.hit("located", "inventory"):
            loc = LocationBlock(g.address(g.hit("tourcoing", "inventory")),
                                f"parcelle {r.randint(1, 900)}" if r.random() < 0.7 else None,
                                f"IA59{serial:06d}")
        date = None
        if g.hit("dated", "inventory"):
            update = g.date(False) if r.random() < 0.5 else None
            date = DateBlock(r.choice(EPOCHS), g.date(g.hit("y2010", "inventory")), update)
        doc = DocumentMetadata(
            TitleBlock(title, g.authors(0, 2), f"Dossier d'inventaire numero {serial}.",
                       g.keywords()),
            "inventory",
            SourceRef(f"inventory/INV{serial:05d}.xml"),
            date, loc,
            {"Property": r.choice(PROPERTIES),
             "Link": f"https://inventaire.example.org/dossier/IA59{serial:06d}"
             if r.random() < 0.8 else None},
        )
        pad = serial % 7 == 0
        out.append((doc.source.uri, doc, {"pad_title": pad}))
    return out


def _press(g: _Gen, unit: int, corpus: FixtureCorpus):
    r = g.rng
    n = unit + 1
    uri = f"voixdunord/LVDN{n:03d}.xml"
    articles = []
    for a in range(1, ARTICLES_PER_PRESS + 1):
        factory = r.random() < 0.3
        title = f"{r.choice(FAMILIES)} : {g.phrase(factory)} a {r.choice(CITIES)} ({n}-{a:02d})"
        articles.append(DocumentMetadata(
            TitleBlock(title, g.authors(1, 1), f"Article {a} du dossier de presse.", g.keywords()),
            "voixdunord",
            SourceRef(f"{uri}#article-{a}"),
            DateBlock(deposit_date=g.date(r.random() < 0.25)),
            LocationBlock(r.choice(CITIES)),
            {"Language": "fre", "Note": (f"page {r.randint(1, 24)}",)},
        ))
    corpus.articles[uri] = articles
    authors, keywords = {}, {}
    for a in articles:
        authors.update(dict.fromkeys(a.title.authors))
        keywords.update(dict.fromkeys(a.title.keywords))
    place = "Tourcoing" if n % 2 else "Roubaix"
    doc = DocumentMetadata(
        TitleBlock(f"La Voix du Nord : textile factory press file {n}", tuple(authors),
                   "Press articles related to the textile industry.", tuple(keywords)),
        "voixdunord",
        SourceRef(uri),
        DateBlock(deposit_date=_midnight(2010 if n % 2 else 2011, 5, 2)),
        LocationBlock(place),
        {"Language": "fre", "Note": tuple(a.title.title for a in articles)},
    )
    return (uri, doc, {"place": place})


def _pictures(g: _Gen, unit: int) -> list:
    out = []
    for i in range(DOCUMENTS_PER_UNIT["irhis"]):
        serial = unit * DOCUMENTS_PER_UNIT["irhis"] + i + 1
        r = g.rng
        stem = f"IRHIS{serial:05d}"
        uri = f"irhis/{stem}.jpg"
        if r.random() >= PICTURE_SIDECAR_RATE:
            doc = DocumentMetadata(TitleBlock(stem), "irhis", SourceRef(uri))
            out.append((uri, doc, {"sidecar": None}))
            continue
        title = f"Photo {r.choice(KINDS)} {r.choice(FAMILIES)}, {g.phrase(g.hit('factory', 'irhis'))} #{serial}"
        address = g.address(g.hit("tourcoing", "irhis")) if g.hit("located", "irhis") else None
        dated = g.date(g.hit("y2010", "irhis")) if g.hit("dated", "irhis") else None
        creators = g.authors(0, 1)
        dc = {"dc:title": title, "dc:identifier": f"IRHIS-PH-{serial:05d}",
              "dc:source": "Fonds IRHIS, Universite de Lille", "dc:format": "image/jpeg"}
        if creators:
            dc["dc:creator"] = list(creators)
        if address:
            dc["dc:coverage"] = address
        if dated:
            dc["dc:date"] = dated.date().isoformat()
        doc = DocumentMetadata(
            TitleBlock(title, creators), "irhis", SourceRef(uri),
            DateBlock(deposit_date=dated) if dated else None,
            LocationBlock(address) if address else None,
            {"CodePhoto": dc["dc:identifier"], "Provenance": dc["dc:source"]},
        )
        out.append((uri, doc, {"sidecar": dc}))
    return out


def _book_date_text(r: random.Random, d: datetime) -> str:
    style = r.random()
    if style < 0.4:
        return f"[{d.year}]"
    if style < 0.7:
        return str(d.year)
    return d.date().isoformat()


def _books(g: _Gen, unit: int) -> list:
    from .etl import extract_book, parse_dc, RawDocument

    out = []
    count = DOCUMENTS_PER_UNIT["book"]
    start = 0
    if unit == 0:
        uri = f"books/{SAMPLE_BOOK_STEM}.pdf"
        dc = parse_dc(SAMPLE_BOOK_DC)
        doc = extract_book(RawDocument("book", Path(uri), uri), dc)
        out.append((uri, doc, {"sidecar": SAMPLE_BOOK_DC}))
        start = 1
    for i in range(start, count):
        serial = unit * count + i + 1
        r = g.rng
        planted = i - start < PLANTED_BOOK_HITS
        stem = f"{serial:05d}C{r.randint(100, 999)}_001"
        uri = f"books/{stem}.pdf"
        factory = planted or g.hit("factory", "book")
        topic = r.choice(BOOK_TOPICS)
        title = f"{topic} : {g.phrase(factory)} ({serial})"
        dc = {
            "dc:title": title,
            "dc:creator": list(g.authors(1, 3)),
            "dc:subject": ", ".join(g.keywords()) + ".",
            "dc:publisher": r.choice(PUBLISHERS),
            "dc:rights": "domaine public",
            "dc:format": "application/pdf",
            "dc:language": "fre",
            "dc:type": "text",
            "dc:source": "Bibliotheque Georges Lefebvre",
            "dc:relation": f"http://www.sudoc.fr/{r.randint(10 ** 8, 10 ** 9 - 1)}",
        }
        if planted:
            dc["dc:coverage"] = "Tourcoing"
            dc["dc:date"] = "2010"
        else:
            if g.hit("located", "book"):
                dc["dc:coverage"] = g.address(g.hit("tourcoing", "book"))
            if g.hit("dated", "book"):
                dc["dc:date"] = _book_date_text(r, g.date(g.hit("y2010", "book")))
        doc = extract_book(RawDocument("book", Path(uri), uri), parse_dc(dc))
        out.append((uri, doc, {"sidecar": dc}))
    return out


# rendering

def _xml_bytes(root: ET.Element) -> bytes:
    ET.indent(root)
    return ET.tostring(root, encoding="utf-8", xml_declaration=True) + b"\n"


def _sub(parent: ET.Element, tag: str, text) -> None:
    if text is not None:
        ET.SubElement(parent, tag).text = text


def _render_inventory(doc: DocumentMetadata, opts: dict) -> bytes:
    root = ET.Element("building", id=Path(doc.source.uri).stem)
    t = doc.title
    _sub(root, "title", f"\n   {t.title}  \n" if opts.get("pad_title") else t.title)
    if t.authors:
        authors = ET.SubElement(root, "authors")
        for a in t.authors:
            _sub(authors, "author", a)
    _sub(root, "description", t.description)
    _sub(root, "keywords", ", ".join(t.keywords) if t.keywords else None)
    if doc.date:
        dates = ET.SubElement(root, "dates")
        _sub(dates, "epoch", doc.date.epoch)
        _sub(dates, "deposit", doc.date.deposit_date.date().isoformat()
             if doc.date.deposit_date else None)
        _sub(dates, "update", doc.date.update_date.date().isoformat()
             if doc.date.update_date else None)
    if doc.location:
        loc = ET.SubElement(root, "location")
        _sub(loc, "address", doc.location.address)
        _sub(loc, "info", doc.location.additional_info)
        _sub(loc, "reference", doc.location.reference)
    attrs = dict(doc.category_attributes)
    _sub(root, "property", attrs.get("Property"))
    _sub(root, "link", attrs.get("Link"))
    return _xml_bytes(root)


def _render_press(doc: DocumentMetadata, articles: list) -> bytes:
    root = ET.Element("press", {
        "title": doc.title.title, "lang": dict(doc.category_attributes)["Language"],
        "place": doc.location.address, "date": doc.date.deposit_date.date().isoformat()})
    _sub(root, "description", doc.title.description)
    for i, a in enumerate(articles, start=1):
        art = ET.SubElement(root, "article", n=str(i))
        _sub(art, "title", a.title.title)
        for au in a.title.authors:
            _sub(art, "author", au)
        _sub(art, "date", a.date.deposit_date.date().isoformat())
        _sub(art, "place", a.location.address)
        _sub(art, "keywords", ", ".join(a.title.keywords))
        _sub(art, "summary", a.title.description)
        _sub(art, "note", dict(a.category_attributes)["Note"][0])
    return _xml_bytes(root)


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, ensure_ascii=False, indent=1) + "\n").encode("utf-8")


MANIFEST_NAME = "manifest"


def write_corpus(corpus: FixtureCorpus, directory) -> Path:
    """Render the corpus files and a manifest under ``directory``; returns the manifest path."""
    directory = Path(directory)
    for kind, items in corpus.files.items():
        (directory / SOURCE_DIRS[kind]).mkdir(parents=True, exist_ok=True)
        for uri, doc, opts in items:
            path = directory / uri
            if kind == "inventory":
                path.write_bytes(_render_inventory(doc, opts))
            elif kind == "voixdunord":
                path.write_bytes(_render_press(doc, corpus.articles[uri]))
            elif kind == "irhis":
                path.write_bytes(JPEG_STUB)
                if opts["sidecar"] is not None:
                    path.with_suffix(".json").write_bytes(_json_bytes(opts["sidecar"]))
            else:
                path.write_bytes(PDF_STUB)
                path.with_suffix(".json").write_bytes(_json_bytes(opts["sidecar"]))
    lines = ["# kind        path          expected instances",
             f"# synthetic corpus, scale {corpus.scale}, seed {corpus.seed}"]
    for kind in DOCUMENTS_PER_UNIT:
        lines.append(f"{kind:<12}  {SOURCE_DIRS[kind] + '/':<12}  {corpus.instances[kind]}")
    manifest = directory / MANIFEST_NAME
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest
