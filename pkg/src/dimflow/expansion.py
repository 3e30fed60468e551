"""Canonical expansion of a shape onto a total order, and nested-list export of entity arrays."""

from __future__ import annotations

import json
import os
from typing import Any

from .arrays import EntityArray, decode_value
from .dims import DimensionSpace, is_linear_extension, linear_extension
from .errors import ArrayIncomplete, NotExtension, ShapeIncomplete
from .shape import PartialShape, is_complete, restrict, restrict_shape


def canonical_expand(shape: PartialShape, order) -> PartialShape:
    """Rewrite a complete shape over the chain `order`.

    Each dim is resolved at every in-bounds coordinate over the dims listed
    before it, with the length it had at that coordinate's restriction to its
    original dependencies.
    """
    order = list(order)
    space = shape.space
    if not is_linear_extension(space, order):
        raise NotExtension(f"{order} is not a linear extension of the dependency order")
    if not is_complete(shape):
        raise ShapeIncomplete("canonical expansion needs a complete shape")
    chain = space.linearized(order)
    out = PartialShape(chain)
    deps = {d: space.ancestors(d) for d in order}

    def rec(k: int, cur: tuple):
        if k == len(order):
            return
        d = order[k]
        n = shape.entries[(d, restrict(cur, deps[d]))]
        out.entries[(d, cur)] = n
        for i in range(n):
            rec(k + 1, tuple(sorted(cur + ((d, i),))))

    rec(0, ())
    return out


def _nest(shape_l: PartialShape, order: list, fetch) -> Any:
    def rec(k: int, cur: tuple):
        if k == len(order):
            return fetch(cur)
        d = order[k]
        n = shape_l.entries.get((d, cur))
        if n is None:
            raise ArrayIncomplete(f"no length for {d!r} at {dict(cur)}")
        return [rec(k + 1, tuple(sorted(cur + ((d, i),)))) for i in range(n)]

    return rec(0, ())


def export_nested(arr: EntityArray, shape: PartialShape, order=None, decode: bool = True) -> Any:
    """Nested lists of `arr`'s cells, one level per dim of `order` (defaults to a linear extension)."""
    space: DimensionSpace = shape.space
    frame = arr.frame
    if order is None:
        order = linear_extension(space.induced(frame))
    order = list(order)
    if set(order) != set(frame):
        raise NotExtension(f"{order} must list exactly {sorted(frame)}")
    local = restrict_shape(shape, frame, ())
    expanded = canonical_expand(local, order)

    def fetch(c):
        payload = arr.cells.get(c)
        if payload is None:
            raise ArrayIncomplete(f"{arr.entity_type}: cell {dict(c)} is missing")
        return decode_value(payload) if decode else payload

    return _nest(expanded, order, fetch)


def import_nested(doc: Any, order) -> dict:
    """Inverse of export: map each leaf back to its coordinate."""
    order = list(order)
    out: dict = {}

    def rec(k: int, node, cur: tuple):
        if k == len(order):
            out[cur] = node
            return
        if not isinstance(node, list):
            raise ValueError(f"expected a list at depth {k}")
        for i, child in enumerate(node):
            rec(k + 1, child, tuple(sorted(cur + ((order[k], i),))))

    rec(0, doc, ())
    return out


def export_order(frame, dim_order) -> list:
    """Declaration order restricted to one entity's dimensions."""
    return [d for d in dim_order if d in frame]


def dumps(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def export_all(arrays: dict, shape: PartialShape, dim_order) -> tuple[dict, dict]:
    """Every entity type as a nested document, plus the metadata side document."""
    docs = {}
    meta = {"linearization": list(dim_order), "sigma": {}}
    for ty in sorted(arrays):
        arr = arrays[ty]
        order = export_order(arr.frame, dim_order)
        docs[ty] = export_nested(arr, shape, order)
        meta["sigma"][ty] = order
    return docs, meta


def write_export(out_dir, arrays: dict, shape: PartialShape, dim_order) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    docs, meta = export_all(arrays, shape, dim_order)
    paths = []
    for ty, doc in docs.items():
        p = os.path.join(out_dir, f"{ty}.json")
        with open(p, "w", encoding="utf-8") as fh:
            fh.write(dumps(doc) + "\n")
        paths.append(p)
    p = os.path.join(out_dir, "metadata.json")
    with open(p, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    paths.append(p)
    return paths
