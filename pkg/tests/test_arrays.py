import random
import threading

import pytest
from hypothesis import given, settings, strategies as st

from dimflow.arrays import EntityArray, decode_value, encode_value, get_subarray, is_total, put_subarray
from dimflow.dims import closure, is_closed, is_convex, linear_extension
from dimflow.errors import ArityMismatch, DuplicateWrite, Incomplete, OrderNotExtension
from dimflow.expansion import import_nested
from dimflow.reference import sample_shape
from dimflow.shape import PartialShape, Resolution, coord, merge, total_coordinates

import gen
import oracles


def array(ty, frame, shape):
    return EntityArray(ty, frozenset(frame), shape)


@pytest.fixture
def fig():
    return sample_shape()


def fill_paragraphs(fig):
    arr = array("Paragraph", "psg", fig)
    for s in range(5):
        n = fig.length("g", coord(p=0, s=s))
        put_subarray(arr, coord(p=0, s=s), [f"{s}.{g}" for g in range(n)], ["g"])
    return arr


def test_encode_is_canonical():
    assert encode_value({"b": 1, "a": [1, 2]}) == b'{"a":[1,2],"b":1}'
    assert encode_value(b"\x00raw") == b"\x00raw"
    assert decode_value(encode_value({"x": "é"})) == {"x": "é"}


def test_scalar_put(fig):
    arr = array("Row", "pf", fig)
    assert put_subarray(arr, coord(p=0, f=1), "row") == [coord(p=0, f=1)]
    assert arr.get(coord(p=0, f=1)) == "row"


def test_list_put(fig):
    arr = array("Section", "ps", fig)
    keys = put_subarray(arr, coord(p=0), list("abcde"), ["s"])
    assert keys == [coord(p=0, s=i) for i in range(5)]


def test_empty_list_put(fig):
    arr = array("Paragraph", "psg", fig)
    assert put_subarray(arr, coord(p=0, s=3), [], ["g"]) == []
    assert is_total(arr, coord(p=0, s=3), {"g"})


def test_arity_errors(fig):
    arr = array("Section", "ps", fig)
    with pytest.raises(ArityMismatch):
        put_subarray(arr, coord(p=0), list("abc"), ["s"])
    with pytest.raises(ArityMismatch):
        put_subarray(arr, coord(p=0), "x", ["s"])
    with pytest.raises(ArityMismatch):
        put_subarray(arr, coord(p=0, s=0), "x", ["s"])
    with pytest.raises(ArityMismatch):
        put_subarray(arr, coord(p=0), ["x"], ["s", "p"])


def test_put_before_resolution():
    space = sample_shape().space
    sh = PartialShape.from_resolutions(space, [("p", coord(), 1)])
    arr = array("Section", "ps", sh)
    with pytest.raises(Incomplete):
        put_subarray(arr, coord(p=0), ["x"], ["s"])


def test_duplicate_write_is_atomic(fig):
    arr = array("Section", "ps", fig)
    put_subarray(arr, coord(p=0), list("abcde"), ["s"])
    before = dict(arr.cells)
    with pytest.raises(DuplicateWrite):
        put_subarray(arr, coord(p=0), list("vwxyz"), ["s"])
    assert arr.cells == before


def test_paragraph_view(fig):
    arr = fill_paragraphs(fig)
    nested = get_subarray(arr, coord(p=0), {"s", "g"}, ["s", "g"])
    assert [len(x) for x in nested] == [4, 3, 2, 0, 3]
    assert nested[1][2] == "1.2"


def test_scalar_view(fig):
    arr = fill_paragraphs(fig)
    assert get_subarray(arr, coord(p=0, s=0, g=1), set()) == "0.1"


def test_bad_order(fig):
    arr = fill_paragraphs(fig)
    with pytest.raises(OrderNotExtension):
        get_subarray(arr, coord(p=0), {"s", "g"}, ["g", "s"])
    with pytest.raises(OrderNotExtension):
        get_subarray(arr, coord(s=0, g=0), {"p"})


def test_missing_cell(fig):
    arr = array("Paragraph", "psg", fig)
    put_subarray(arr, coord(p=0, s=0), list("abcd"), ["g"])
    with pytest.raises(Incomplete):
        get_subarray(arr, coord(p=0), {"s", "g"})
    assert not is_total(arr, coord(p=0), {"s", "g"})
    assert is_total(arr, coord(p=0, s=0), {"g"})


def test_is_total_before_resolution():
    space = sample_shape().space
    sh = PartialShape.from_resolutions(space, [("p", coord(), 1)])
    arr = array("Section", "ps", sh)
    assert not is_total(arr, coord(p=0), {"s"})
    sh.add(Resolution("s", coord(p=0), 2))
    assert not is_total(arr, coord(p=0), {"s"})
    put_subarray(arr, coord(p=0), ["a", "b"], ["s"])
    assert is_total(arr, coord(p=0), {"s"})


def test_concurrent_writers_do_not_collide(fig):
    arr = array("Row", "pf", fig)
    errors = []

    def write():
        try:
            put_subarray(arr, coord(p=0, f=0), "x")
        except DuplicateWrite:
            errors.append(1)

    ts = [threading.Thread(target=write) for _ in range(8)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert len(errors) == 7 and len(arr) == 1


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31))
def test_round_trip_against_brute_force(seed):
    rng = random.Random(seed)
    space = gen.random_space(rng, 4)
    shape = gen.random_complete_shape(rng, space, 3)
    frame = closure(space, gen.random_subset(rng, space))
    arr = array("T", frame, shape)
    for c in total_coordinates(shape, frame):
        put_subarray(arr, c, repr(c))
    varying = frozenset(d for d in frame if rng.random() < 0.5)
    if not is_convex(space, varying) or not is_closed(space, frame - varying):
        with pytest.raises(OrderNotExtension):
            get_subarray(arr, (), varying)
        return
    fixeds = total_coordinates(shape, frame - varying)
    if not fixeds:
        return
    fixed = rng.choice(fixeds)
    nested = get_subarray(arr, fixed, varying)
    order = linear_extension(space.induced(varying))
    flat = import_nested(nested, order)
    want = oracles.subcoordinate_space(space, shape.entries, varying, dict(fixed))
    assert set(flat) == {c for c in want if len(c) == len(varying)}
    for c, v in flat.items():
        assert v == repr(merge(fixed, c))
    assert is_total(arr, fixed, varying)
