import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metavault import kernels
from metavault import _rowcodec_py as pycodec

CODECS = [kernels.load(n) for n in kernels.available()]
needs_cython = pytest.mark.skipif("cython" not in kernels.available(),
                                  reason="compiled codec not built")

text = st.text(max_size=40)
field = st.one_of(
    st.none(),
    text,
    st.lists(text, max_size=5).map(tuple),
    st.integers(min_value=-(2 ** 63), max_value=2 ** 63 - 1),
)
rows = st.lists(field, min_size=1, max_size=12)


def test_default_selection():
    assert kernels.IMPLEMENTATION in kernels.available()
    assert kernels.codec.IMPLEMENTATION == kernels.IMPLEMENTATION


def test_unknown_codec():
    with pytest.raises(ValueError):
        kernels.load("fortran")


@pytest.mark.parametrize("codec", CODECS, ids=lambda c: c.IMPLEMENTATION)
@given(row=rows)
def test_round_trip(codec, row):
    page = codec.new_page()
    slot = codec.page_insert(page, codec.encode_row(row))
    assert slot == 0
    assert codec.decode_row(page, 0) == row


@pytest.mark.parametrize("codec", CODECS, ids=lambda c: c.IMPLEMENTATION)
def test_layout_by_hand(codec):
    row = codec.encode_row(["ab", None, ("x",), 5])
    # tuple header 24, then 1+2+2, 1, 1+2+2+1, 1+8
    assert len(row) == 24 + 5 + 1 + 6 + 9
    assert struct.unpack_from("<HHI", row) == (4, 0, len(row))
    page = codec.new_page()
    assert len(page) == 8192
    assert codec.page_free(page) == 8192 - 24
    codec.page_insert(page, row)
    nslots, lower, upper = struct.unpack_from("<HHH", page)
    assert (nslots, lower) == (1, 28)
    assert upper % 8 == 0 and upper == (8192 - len(row)) & ~7
    assert struct.unpack_from("<HH", page, 24) == (upper, len(row))


@pytest.mark.parametrize("codec", CODECS, ids=lambda c: c.IMPLEMENTATION)
def test_page_fills_then_refuses(codec):
    page = codec.new_page()
    row = codec.encode_row(["k" * 100])
    n = 0
    while codec.page_insert(page, row) >= 0:
        n += 1
    lower, upper, want = 24, 8192, 0
    while ((upper - len(row)) & ~7) >= lower + 4:
        upper = (upper - len(row)) & ~7
        lower += 4
        want += 1
    assert n == want
    assert codec.page_nslots(page) == n
    assert len(codec.page_rows(page)) == n
    assert len(codec.page_rows(page, 3)) == 3


@pytest.mark.parametrize("codec", CODECS, ids=lambda c: c.IMPLEMENTATION)
def test_oversized_row(codec):
    with pytest.raises(ValueError):
        codec.encode_row(["x" * 9000])


@pytest.mark.parametrize("codec", CODECS, ids=lambda c: c.IMPLEMENTATION)
def test_bad_slot(codec):
    with pytest.raises(IndexError):
        codec.decode_row(codec.new_page(), 0)


@needs_cython
@settings(max_examples=200)
@given(batch=st.lists(rows, min_size=1, max_size=40))
def test_compiled_matches_python(batch):
    cy = kernels.load("cython")
    pages = []
    for codec in (pycodec, cy):
        page = codec.new_page()
        slots = []
        for row in batch:
            enc = codec.encode_row(row)
            slots.append(codec.page_insert(page, enc))
        pages.append((bytes(page), slots, [codec.encode_row(r) for r in batch]))
    assert pages[0] == pages[1]
    page = bytearray(pages[0][0])
    assert cy.page_rows(page) == pycodec.page_rows(page)


@needs_cython
@given(keys=st.lists(st.sampled_from(["a", "bb", "ccc", "é"]), min_size=1, max_size=30),
       probe=st.sampled_from(["a", "bb", "ccc", "é", "zz"]), limit=st.integers(-1, 35))
def test_find_first_parity(keys, probe, limit):
    cy = kernels.load("cython")
    page = pycodec.new_page()
    for k in keys:
        pycodec.page_insert(page, pycodec.encode_row([k, 1]))
    want = [i for i, k in enumerate(keys) if k == probe and (limit < 0 or i < limit)]
    assert pycodec.page_find_first(page, probe.encode(), limit) == want
    assert cy.page_find_first(page, probe.encode(), limit) == want
