"""Ragged shapes by hand: build one paper's shape, walk its positions, grow it, expand it."""

from __future__ import annotations

from dimflow.dims import closure, dep, is_convex
from dimflow.expansion import canonical_expand
from dimflow.reference import caption_space, sample_shape
from dimflow.shape import (
    PartialShape,
    Resolution,
    coord,
    coordinate_space,
    explode,
    fmt_coord,
    restrict_shape,
    subcoordinate_space,
)

space = caption_space()
print("dims:", sorted(space.dims))
print("closure({g}) =", sorted(closure(space, {"g"})), " dep({g}) =", sorted(dep(space, {"g"})))
print("{p, g} convex?", is_convex(space, {"p", "g"}), " {s, g} convex?", is_convex(space, {"s", "g"}))

# one paper, three figures, five sections with 4, 3, 2, 0 and 3 paragraphs
shape = sample_shape()
print("\nshape:", shape)
view = coordinate_space(shape, {"p", "s", "g", "f"})
print("positions over {p, s, g, f}:", len(view.totals()))

# paragraphs of paper 0, seen as an array of its own
print("paragraph positions under p=0:", len(subcoordinate_space(shape, {"s", "g"}, coord(p=0))))
print("restricted shape:", restrict_shape(shape, {"s", "g"}, coord(p=0)))

# lengths arrive one at a time; unknown positions stay partial until then
grow = PartialShape.from_resolutions(shape.space, [("p", (), 1), ("s", coord(p=0), 2)])
v = coordinate_space(grow, {"p", "s", "g"})
print("\nbefore:", sorted(fmt_coord(c) for c in v.members))
v = explode(v, Resolution("g", coord(p=0, s=0), 2))
print("after g at s=0 has length 2:", sorted(fmt_coord(c) for c in v.members))

# nested-list layout along p, s, g, f
expanded = canonical_expand(shape, ["p", "s", "g", "f"])
print(f"\nexpanded along [p, s, g, f]: {len(expanded)} entries (from {len(shape)})")
