"""Entity arrays keyed by total coordinates, with nested subarray reads and writes."""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from typing import Any

from .dims import is_closed, is_convex, is_linear_extension, linear_extension
from .errors import ArityMismatch, DuplicateWrite, Incomplete, OrderNotExtension
from .shape import Coord, PartialShape, coord, domain, fmt_coord, merge, restrict


def encode_value(value: Any) -> bytes:
    """Canonical JSON payload. Raw bytes pass through untouched."""
    if isinstance(value, (bytes, bytearray)):
        return bytes(value)
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()


def decode_value(payload: bytes) -> Any:
    return json.loads(payload)


@dataclass
class EntityArray:
    """Cells of one entity type. `shape` is shared with the shape owner and only read here."""

    entity_type: str
    frame: frozenset
    shape: PartialShape
    cells: dict = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.cells)

    def get(self, c: Coord, default=None):
        payload = self.cells.get(c)
        return default if payload is None else decode_value(payload)


def put_subarray(arr: EntityArray, at: Coord, values, order: list[str] | tuple = ()) -> list[Coord]:
    """Install a job's output under `at`; `order` lists the output dimension, if any.

    Returns the keys written. The whole write fails before any cell is stored.
    """
    at = coord(at)
    out_dims = list(order)
    if len(out_dims) > 1:
        raise ArityMismatch(f"{arr.entity_type}: at most one output dimension, got {out_dims}")
    if domain(at) != arr.frame - set(out_dims):
        raise ArityMismatch(f"{arr.entity_type}: key {fmt_coord(at)} must bind {sorted(arr.frame - set(out_dims))}")
    if out_dims:
        (e,) = out_dims
        if not isinstance(values, (list, tuple)):
            raise ArityMismatch(f"{arr.entity_type}: expected a list of values along {e!r}")
        n = arr.shape.length(e, restrict(at, arr.shape.deps(e)))
        if n is None:
            raise Incomplete(f"{arr.entity_type}: length of {e!r} at {fmt_coord(at)} is not recorded")
        if n != len(values):
            raise ArityMismatch(f"{arr.entity_type}: {len(values)} values but {e!r} has length {n}")
        items = [(merge(at, ((e, i),)), encode_value(v)) for i, v in enumerate(values)]
    else:
        items = [(at, encode_value(values))]
    with arr._lock:
        for k, _ in items:
            if k in arr.cells:
                raise DuplicateWrite(f"{arr.entity_type}: cell {fmt_coord(k)} already written")
        for k, v in items:
            arr.cells[k] = v
    return [k for k, _ in items]


def _check_view(arr: EntityArray, fixed: Coord, varying: frozenset, order) -> list[str]:
    space = arr.shape.space
    varying = frozenset(varying)
    if not varying <= arr.frame:
        raise OrderNotExtension(f"{sorted(varying - arr.frame)} not in the frame of {arr.entity_type}")
    if not is_convex(space, varying) or not is_closed(space, arr.frame - varying):
        raise OrderNotExtension(f"cannot vary {sorted(varying)} inside {sorted(arr.frame)}")
    if domain(fixed) != arr.frame - varying:
        raise Incomplete(f"fixed coordinate {fmt_coord(fixed)} must bind {sorted(arr.frame - varying)}")
    if order is None:
        return linear_extension(space.induced(varying))
    order = list(order)
    if not is_linear_extension(space.induced(varying), order):
        raise OrderNotExtension(f"{order} is not a linear extension of the order on {sorted(varying)}")
    return order


def get_subarray(arr: EntityArray, fixed: Coord, varying=(), order=None, decode: bool = True):
    """Nested read of the cells under `fixed`, one list level per dim of `order`."""
    fixed = coord(fixed)
    order = _check_view(arr, fixed, varying, order)
    shape = arr.shape

    def rec(k: int, cur: Coord):
        if k == len(order):
            payload = arr.cells.get(cur)
            if payload is None:
                raise Incomplete(f"{arr.entity_type}: cell {fmt_coord(cur)} is missing")
            return decode_value(payload) if decode else payload
        d = order[k]
        n = shape.length(d, restrict(cur, shape.deps(d)))
        if n is None:
            raise Incomplete(f"{arr.entity_type}: length of {d!r} at {fmt_coord(cur)} is unknown")
        return [rec(k + 1, merge(cur, ((d, i),))) for i in range(n)]

    return rec(0, fixed)


def is_total(arr: EntityArray, fixed: Coord, varying=()) -> bool:
    try:
        get_subarray(arr, fixed, varying, None, decode=False)
    except Incomplete:
        return False
    return True
