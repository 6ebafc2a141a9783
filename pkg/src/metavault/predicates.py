"""Conjunctive predicate kinds understood by backends and the query engine."""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime
from typing import Optional

from .vault import iso, normalize_natural

_YEAR = re.compile(r"(?<!\d)(\d{4})(?!\d)")


def text_year(text: str) -> Optional[int]:
    m = _YEAR.search(text)
    return int(m.group(1)) if m else None


@dataclass(frozen=True)
class ContainsWord:
    """Case-insensitive substring match on normalized text.

    Text-lists match when any element matches. Timestamps never match.
    """

    entity: str
    attribute: str
    word: str

    def matches(self, value) -> bool:
        needle = normalize_natural(self.word)
        if isinstance(value, str):
            return needle in normalize_natural(value)
        if isinstance(value, tuple):
            return any(needle in normalize_natural(v) for v in value)
        return False

    def __str__(self):
        return f"{self.entity}.{self.attribute} contains {_quote(self.word)}"


@dataclass(frozen=True)
class Equals:
    """Equality after whitespace normalization and case-folding.

    A timestamp equals a value given either as its full ISO instant or as its
    calendar date (``YYYY-MM-DD``).
    """

    entity: str
    attribute: str
    value: str

    def matches(self, value) -> bool:
        want = normalize_natural(self.value)
        if isinstance(value, str):
            return normalize_natural(value) == want
        if isinstance(value, tuple):
            return any(normalize_natural(v) == want for v in value)
        if isinstance(value, datetime):
            return want in (iso(value).casefold(), value.date().isoformat())
        return False

    def __str__(self):
        return f"{self.entity}.{self.attribute} = {_quote(self.value)}"


@dataclass(frozen=True)
class YearEquals:
    """Calendar year of a timestamp; for text, the first four-digit run."""

    entity: str
    attribute: str
    year: int

    def matches(self, value) -> bool:
        if isinstance(value, datetime):
            return value.year == self.year
        if isinstance(value, str):
            return text_year(value) == self.year
        return False

    def __str__(self):
        return f"{self.entity}.{self.attribute} year {self.year}"


@dataclass(frozen=True)
class CategoryIs:
    """Document category label, resolved through the category hub."""

    label: str

    def __str__(self):
        return f"category is {_quote(self.label)}"


AttributePredicate = (ContainsWord, Equals, YearEquals)


def _quote(s: str) -> str:
    if s and all(c.isalnum() or c in "-_" for c in s):
        return s
    return "'" + s.replace("'", "'\"'\"'") + "'"
