# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled row and page codec; mirrors ``_rowcodec_py`` byte for byte."""

from libc.string cimport memcpy, memcmp, memset
from cpython.bytes cimport PyBytes_FromStringAndSize, PyBytes_AS_STRING
from cpython.unicode cimport PyUnicode_DecodeUTF8
from libc.stdint cimport int64_t, uint16_t, uint32_t

DEF C_PAGE_SIZE = 8192
DEF C_PAGE_HEADER = 24
DEF C_SLOT_SIZE = 4
DEF C_TUPLE_HEADER = 24
DEF C_MAXALIGN = 8

PAGE_SIZE = C_PAGE_SIZE
PAGE_HEADER = C_PAGE_HEADER
SLOT_SIZE = C_SLOT_SIZE
TUPLE_HEADER = C_TUPLE_HEADER
MAXALIGN = C_MAXALIGN
PAGE_VERSION = 1

TAG_ABSENT = 0
TAG_TEXT = 1
TAG_LIST = 2
TAG_TIMESTAMP = 3

IMPLEMENTATION = "cython"


class RowTooLarge(ValueError):
    pass


cdef inline uint16_t rd16(const unsigned char* p) nogil:
    return <uint16_t>(p[0] | (p[1] << 8))


cdef inline void wr16(unsigned char* p, uint16_t v) nogil:
    p[0] = v & 0xFF
    p[1] = (v >> 8) & 0xFF


cdef inline void wr32(unsigned char* p, uint32_t v) nogil:
    p[0] = v & 0xFF
    p[1] = (v >> 8) & 0xFF
    p[2] = (v >> 16) & 0xFF
    p[3] = (v >> 24) & 0xFF


ctypedef unsigned long long uint64_t_


cdef inline int64_t rd64(const unsigned char* p) nogil:
    cdef uint64_t_ v = 0
    cdef int i
    for i in range(7, -1, -1):
        v = (v << 8) | p[i]
    return <int64_t>v


cdef inline void wr64(unsigned char* p, int64_t s) nogil:
    cdef uint64_t_ v = <uint64_t_>s
    cdef int i
    for i in range(8):
        p[i] = v & 0xFF
        v >>= 8


def encode_row(fields):
    cdef list encoded = []
    cdef Py_ssize_t size = C_TUPLE_HEADER
    cdef bytes b
    cdef object v, item
    for v in fields:
        if v is None:
            size += 1
        elif isinstance(v, str):
            b = (<str>v).encode("utf-8")
            if len(b) > 0xFFFF:
                raise RowTooLarge("text field exceeds 65535 bytes")
            encoded.append(b)
            size += 3 + len(b)
        elif isinstance(v, (list, tuple)):
            size += 3
            for item in v:
                b = (<str>item).encode("utf-8")
                if len(b) > 0xFFFF:
                    raise RowTooLarge("text field exceeds 65535 bytes")
                encoded.append(b)
                size += 2 + len(b)
        elif isinstance(v, int):
            size += 9
        else:
            raise TypeError(f"cannot encode {type(v).__name__}")
    if size > C_PAGE_SIZE - C_PAGE_HEADER - C_SLOT_SIZE:
        raise RowTooLarge(f"row of {size} bytes does not fit a page")

    cdef bytes out = PyBytes_FromStringAndSize(NULL, size)
    cdef unsigned char* p = <unsigned char*>PyBytes_AS_STRING(out)
    memset(p, 0, C_TUPLE_HEADER)
    wr16(p, <uint16_t>len(fields))
    wr32(p + 4, <uint32_t>size)
    cdef Py_ssize_t pos = C_TUPLE_HEADER
    cdef Py_ssize_t k = 0
    cdef Py_ssize_t n
    for v in fields:
        if v is None:
            p[pos] = 0
            pos += 1
        elif isinstance(v, str):
            b = encoded[k]
            k += 1
            n = len(b)
            p[pos] = 1
            wr16(p + pos + 1, <uint16_t>n)
            memcpy(p + pos + 3, PyBytes_AS_STRING(b), n)
            pos += 3 + n
        elif isinstance(v, (list, tuple)):
            p[pos] = 2
            wr16(p + pos + 1, <uint16_t>len(v))
            pos += 3
            for item in v:
                b = encoded[k]
                k += 1
                n = len(b)
                wr16(p + pos, <uint16_t>n)
                memcpy(p + pos + 2, PyBytes_AS_STRING(b), n)
                pos += 2 + n
        else:
            p[pos] = 3
            wr64(p + pos + 1, <int64_t>v)
            pos += 9
    return out


def new_page():
    page = bytearray(C_PAGE_SIZE)
    cdef unsigned char[::1] m = page
    wr16(&m[0], 0)
    wr16(&m[2], C_PAGE_HEADER)
    wr16(&m[4], C_PAGE_SIZE)
    wr16(&m[6], PAGE_VERSION)
    return page


cdef inline int _upper(const unsigned char* p) nogil:
    return rd16(p + 4)


def page_nslots(page):
    cdef const unsigned char[::1] m = page
    return rd16(&m[0])


def page_free(page):
    cdef const unsigned char[::1] m = page
    return _upper(&m[0]) - rd16(&m[2])


def page_insert(page, bytes row):
    cdef unsigned char[::1] m = page
    cdef unsigned char* p = &m[0]
    cdef int nslots = rd16(p)
    cdef int lower = rd16(p + 2)
    cdef int upper = _upper(p)
    cdef int n = len(row)
    cdef int start = (upper - n) & ~(C_MAXALIGN - 1)
    if start < lower + C_SLOT_SIZE:
        return -1
    memcpy(p + start, PyBytes_AS_STRING(row), n)
    wr16(p + lower, <uint16_t>start)
    wr16(p + lower + 2, <uint16_t>n)
    wr16(p, <uint16_t>(nslots + 1))
    wr16(p + 2, <uint16_t>(lower + C_SLOT_SIZE))
    wr16(p + 4, <uint16_t>start)
    return nslots


cdef list _decode_at(const unsigned char* p, int off):
    cdef int natts = rd16(p + off)
    cdef int pos = off + C_TUPLE_HEADER
    cdef list out = []
    cdef int i, j, n, count, tag
    cdef list items
    for i in range(natts):
        tag = p[pos]
        pos += 1
        if tag == 0:
            out.append(None)
        elif tag == 1:
            n = rd16(p + pos)
            out.append(PyUnicode_DecodeUTF8(<const char*>(p + pos + 2), n, NULL))
            pos += 2 + n
        elif tag == 2:
            count = rd16(p + pos)
            pos += 2
            items = []
            for j in range(count):
                n = rd16(p + pos)
                items.append(PyUnicode_DecodeUTF8(<const char*>(p + pos + 2), n, NULL))
                pos += 2 + n
            out.append(tuple(items))
        elif tag == 3:
            out.append(rd64(p + pos))
            pos += 8
        else:
            raise ValueError(f"corrupt tuple: tag {tag} at offset {pos - 1}")
    return out


def decode_row(page, int slot):
    cdef const unsigned char[::1] m = page
    cdef const unsigned char* p = &m[0]
    if slot < 0 or slot >= rd16(p):
        raise IndexError(slot)
    return _decode_at(p, rd16(p + C_PAGE_HEADER + C_SLOT_SIZE * slot))


def page_rows(page, int limit=-1):
    cdef const unsigned char[::1] m = page
    cdef const unsigned char* p = &m[0]
    cdef int n = rd16(p)
    cdef int i
    if 0 <= limit < n:
        n = limit
    return [_decode_at(p, rd16(p + C_PAGE_HEADER + C_SLOT_SIZE * i)) for i in range(n)]


def page_find_first(page, bytes key, int limit=-1):
    cdef const unsigned char[::1] m = page
    cdef const unsigned char* p = &m[0]
    cdef const char* k = PyBytes_AS_STRING(key)
    cdef int klen = len(key)
    cdef int n = rd16(p)
    cdef int i, pos
    cdef list hits = []
    if 0 <= limit < n:
        n = limit
    for i in range(n):
        pos = rd16(p + C_PAGE_HEADER + C_SLOT_SIZE * i) + C_TUPLE_HEADER
        if p[pos] != 1 or rd16(p + pos + 1) != klen:
            continue
        if memcmp(p + pos + 3, k, klen) == 0:
            hits.append(i)
    return hits
