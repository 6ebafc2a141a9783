"""Pure-Python row and page codec for the relational backend.

Reference implementation of the kernels in ``_rowcodec.pyx``. Both must
produce byte-identical pages; see docs/formats.md for the layout.

Page (8192 bytes)::

    header   24 B   u16 nslots | u16 lower | u16 upper | u16 version | 16 B reserved
    slots    4 B each, growing up from the header: u16 offset | u16 length
    tuples   growing down from the page end, each start aligned to 8 bytes

Tuple::

    header   24 B   u16 natts | u16 flags | u32 length | 16 B reserved
    fields   u8 tag, then per tag:
               0 absent     nothing
               1 text       u16 n, n bytes UTF-8
               2 text-list  u16 count, then count x (u16 n, n bytes)
               3 timestamp  i64 milliseconds since the epoch
"""

import struct

PAGE_SIZE = 8192
PAGE_HEADER = 24
SLOT_SIZE = 4
TUPLE_HEADER = 24
MAXALIGN = 8
PAGE_VERSION = 1

TAG_ABSENT = 0
TAG_TEXT = 1
TAG_LIST = 2
TAG_TIMESTAMP = 3

_page_hdr = struct.Struct("<HHHH16x")
_slot = struct.Struct("<HH")
_tup_hdr = struct.Struct("<HHI16x")
_u16 = struct.Struct("<H")
_i64 = struct.Struct("<q")

IMPLEMENTATION = "python"


class RowTooLarge(ValueError):
    pass


def _text(buf: list, s: str) -> None:
    b = s.encode("utf-8")
    if len(b) > 0xFFFF:
        raise RowTooLarge("text field exceeds 65535 bytes")
    buf.append(_u16.pack(len(b)))
    buf.append(b)


def encode_row(fields) -> bytes:
    """Encode a list of field values (None, str, list/tuple of str, int millis)."""
    parts = []
    for v in fields:
        if v is None:
            parts.append(b"\x00")
        elif isinstance(v, str):
            parts.append(b"\x01")
            _text(parts, v)
        elif isinstance(v, (list, tuple)):
            parts.append(b"\x02")
            parts.append(_u16.pack(len(v)))
            for item in v:
                _text(parts, item)
        elif isinstance(v, int):
            parts.append(b"\x03")
            parts.append(_i64.pack(v))
        else:
            raise TypeError(f"cannot encode {type(v).__name__}")
    body = b"".join(parts)
    length = TUPLE_HEADER + len(body)
    if length > PAGE_SIZE - PAGE_HEADER - SLOT_SIZE:
        raise RowTooLarge(f"row of {length} bytes does not fit a page")
    return _tup_hdr.pack(len(fields), 0, length) + body


def new_page() -> bytearray:
    page = bytearray(PAGE_SIZE)
    _page_hdr.pack_into(page, 0, 0, PAGE_HEADER, PAGE_SIZE, PAGE_VERSION)
    return page


def page_nslots(page) -> int:
    return _u16.unpack_from(page, 0)[0]


def page_free(page) -> int:
    _, lower, upper, _ = _page_hdr.unpack_from(page, 0)
    return upper - lower


def page_insert(page: bytearray, row: bytes) -> int:
    """Append ``row`` to ``page``; return its slot, or -1 if it does not fit."""
    nslots, lower, upper, version = _page_hdr.unpack_from(page, 0)
    start = (upper - len(row)) & ~(MAXALIGN - 1)
    if start < lower + SLOT_SIZE:
        return -1
    page[start:start + len(row)] = row
    _slot.pack_into(page, lower, start, len(row))
    _page_hdr.pack_into(page, 0, nslots + 1, lower + SLOT_SIZE, start, version)
    return nslots


def _decode_at(page, off: int) -> list:
    natts = _u16.unpack_from(page, off)[0]
    pos = off + TUPLE_HEADER
    out = []
    for _ in range(natts):
        tag = page[pos]
        pos += 1
        if tag == TAG_ABSENT:
            out.append(None)
        elif tag == TAG_TEXT:
            n = _u16.unpack_from(page, pos)[0]
            pos += 2
            out.append(bytes(page[pos:pos + n]).decode("utf-8"))
            pos += n
        elif tag == TAG_LIST:
            count = _u16.unpack_from(page, pos)[0]
            pos += 2
            items = []
            for _ in range(count):
                n = _u16.unpack_from(page, pos)[0]
                pos += 2
                items.append(bytes(page[pos:pos + n]).decode("utf-8"))
                pos += n
            out.append(tuple(items))
        elif tag == TAG_TIMESTAMP:
            out.append(_i64.unpack_from(page, pos)[0])
            pos += 8
        else:
            raise ValueError(f"corrupt tuple: tag {tag} at offset {pos - 1}")
    return out


def decode_row(page, slot: int) -> list:
    if slot < 0 or slot >= page_nslots(page):
        raise IndexError(slot)
    off, _ = _slot.unpack_from(page, PAGE_HEADER + SLOT_SIZE * slot)
    return _decode_at(page, off)


def page_rows(page, limit: int = -1) -> list:
    """Decode the first ``limit`` rows (all when negative)."""
    n = page_nslots(page)
    if 0 <= limit < n:
        n = limit
    return [_decode_at(page, _slot.unpack_from(page, PAGE_HEADER + SLOT_SIZE * i)[0])
            for i in range(n)]


def page_find_first(page, key: bytes, limit: int = -1) -> list:
    """Slots whose first field is text equal to ``key`` (UTF-8 bytes)."""
    n = page_nslots(page)
    if 0 <= limit < n:
        n = limit
    klen = len(key)
    hits = []
    for i in range(n):
        off = _slot.unpack_from(page, PAGE_HEADER + SLOT_SIZE * i)[0]
        pos = off + TUPLE_HEADER
        if page[pos] != TAG_TEXT:
            continue
        if _u16.unpack_from(page, pos + 1)[0] != klen:
            continue
        if page[pos + 3:pos + 3 + klen] == key:
            hits.append(i)
    return hits
