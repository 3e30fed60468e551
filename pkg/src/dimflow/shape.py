"""Coordinates, resolutions, partial shapes and coordinate spaces with unknowns.

A coordinate is a tuple of ``(dim, index)`` pairs sorted by dimension name, so it
hashes and compares canonically. A partial shape maps ``(dim, at)`` keys, where
``at`` is a coordinate total over the dependencies of ``dim``, to lengths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Iterator, Mapping

from .dims import DimensionSpace, dep, is_closed, is_convex, linear_extension
from .errors import (
    AnchorOutOfBounds,
    DimOutsideFrame,
    FrameNotClosed,
    IncompatibleResolution,
    InvalidShape,
    NotConvex,
)

Coord = tuple  # tuple[tuple[str, int], ...]


def coord(bindings: Mapping[str, int] | Iterable[tuple[str, int]] | None = None, **kw) -> Coord:
    items = dict(bindings or {})
    items.update(kw)
    for d, i in items.items():
        if not isinstance(i, int) or isinstance(i, bool) or i < 0:
            raise ValueError(f"index for {d!r} must be a non-negative int, got {i!r}")
    return tuple(sorted(items.items()))


def as_dict(c: Coord) -> dict:
    return dict(c)


def restrict(c: Coord, dims) -> Coord:
    return tuple(kv for kv in c if kv[0] in dims)


def merge(a: Coord, b: Coord) -> Coord:
    out = dict(a)
    for d, i in b:
        if out.get(d, i) != i:
            raise ValueError(f"coordinates disagree on {d!r}")
        out[d] = i
    return tuple(sorted(out.items()))


def domain(c: Coord) -> frozenset:
    return frozenset(d for d, _ in c)


def fmt_coord(c: Coord) -> str:
    return "{" + ", ".join(f"{d}:{i}" for d, i in c) + "}"


@dataclass(frozen=True)
class Resolution:
    dim: str
    at: Coord
    length: int

    def __post_init__(self):
        object.__setattr__(self, "at", coord(self.at))
        if not isinstance(self.length, int) or isinstance(self.length, bool) or self.length < 0:
            raise ValueError(f"length must be a non-negative int, got {self.length!r}")


class PartialShape:
    """A set of resolutions closed under the in-bounds law.

    ``extend`` returns a new shape; ``add`` mutates in place and is what the
    single-writer owners (builder, engine) use.
    """

    __slots__ = ("space", "entries", "_deps")

    def __init__(self, space: DimensionSpace, entries: dict | None = None):
        self.space = space
        self.entries: dict = dict(entries or {})
        self._deps = {d: space.ancestors(d) for d in space.dims}

    @classmethod
    def from_resolutions(cls, space: DimensionSpace, resolutions: Iterable) -> "PartialShape":
        shape = cls(space)
        for r in resolutions:
            if not isinstance(r, Resolution):
                r = Resolution(*r)
            key = (r.dim, r.at)
            if r.dim not in space.dims:
                raise InvalidShape(f"unknown dimension {r.dim!r}")
            if domain(r.at) != shape._deps[r.dim]:
                raise InvalidShape(f"resolution of {r.dim!r} must bind exactly {sorted(shape._deps[r.dim])}")
            if key in shape.entries:
                raise InvalidShape(f"two lengths for {r.dim!r} at {fmt_coord(r.at)}")
            shape.entries[key] = r.length
        for (d, at) in shape.entries:
            if not in_bounds(shape, at):
                raise InvalidShape(f"resolution of {d!r} at {fmt_coord(at)} is not in bounds")
        return shape

    def copy(self) -> "PartialShape":
        return PartialShape(self.space, self.entries)

    def deps(self, d: str) -> frozenset:
        return self._deps[d]

    def length(self, d: str, at: Coord):
        return self.entries.get((d, at))

    def __contains__(self, key) -> bool:
        return key in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, PartialShape) and self.space == other.space and self.entries == other.entries

    def __hash__(self):
        return hash(frozenset(self.entries.items()))

    def __repr__(self) -> str:
        body = ", ".join(f"({d}, {fmt_coord(at)}, {n})" for (d, at), n in self.sorted_entries())
        return f"PartialShape[{body}]"

    def sorted_entries(self):
        return sorted(self.entries.items())

    def resolutions(self) -> list[Resolution]:
        return [Resolution(d, at, n) for (d, at), n in self.sorted_entries()]

    def to_records(self) -> list:
        return [[d, dict(at), n] for (d, at), n in self.sorted_entries()]

    def check_compatible(self, dim: str, at: Coord) -> None:
        if dim not in self.space.dims:
            raise IncompatibleResolution(dim, at, "malformed")
        if domain(at) != self._deps[dim]:
            raise IncompatibleResolution(dim, at, "malformed")
        if (dim, at) in self.entries:
            raise IncompatibleResolution(dim, at, "duplicate")
        if not in_bounds(self, at):
            raise IncompatibleResolution(dim, at, "out-of-bounds")

    def add(self, r: Resolution) -> None:
        self.check_compatible(r.dim, r.at)
        self.entries[(r.dim, r.at)] = r.length


def in_bounds(shape: PartialShape, c: Coord) -> bool:
    dims = domain(c)
    deps = shape._deps
    for d, i in c:
        if d not in deps or not deps[d] <= dims:
            return False
    for d, i in c:
        n = shape.entries.get((d, restrict(c, deps[d])))
        if n is None or n <= i:
            return False
    return True


def is_compatible(shape: PartialShape, dim: str, at: Coord) -> bool:
    at = coord(at)
    return (
        dim in shape.space.dims
        and domain(at) == shape._deps[dim]
        and (dim, at) not in shape.entries
        and in_bounds(shape, at)
    )


def extend(shape: PartialShape, r: Resolution) -> PartialShape:
    out = shape.copy()
    out.add(r)
    return out


def _walk(shape: PartialShape, order: list[str], fixed: dict | None, require_total: bool) -> Iterator[dict]:
    """Depth-first enumeration of coordinates over the dims in `order`.

    `order` must be a closed set listed in a linear extension. A dim is bound
    exactly when its dependencies are bound and its resolution is known, so
    each branch satisfies both conditions of a coordinate with unknowns.
    `fixed` pins listed dims to a value, or to ``None`` meaning "must stay unbound".
    """
    deps = shape._deps
    entries = shape.entries
    cur: dict[str, int] = {}

    def rec(k: int):
        if k == len(order):
            yield dict(cur)
            return
        d = order[k]
        ds = deps[d]
        n = None
        if all(x in cur for x in ds):
            n = entries.get((d, tuple(sorted((x, cur[x]) for x in ds))))
        want = fixed.get(d, ...) if fixed is not None else ...
        if n is None:
            if require_total or (want is not ... and want is not None):
                return
            yield from rec(k + 1)
            return
        if want is None:
            return
        rng = range(n) if want is ... else ((want,) if want < n else ())
        for i in rng:
            cur[d] = i
            yield from rec(k + 1)
        cur.pop(d, None)

    yield from rec(0)


@lru_cache(maxsize=512)
def _default_order(space: DimensionSpace) -> tuple:
    return tuple(linear_extension(space))


def _frame_order(shape: PartialShape, frame) -> list[str]:
    return [d for d in _default_order(shape.space) if d in frame]


def total_coordinates(shape: PartialShape, frame) -> list[Coord]:
    """In-bounds coordinates total over the closed set `frame`, in lexicographic index order."""
    order = _frame_order(shape, frame)
    return [tuple(sorted(c.items())) for c in _walk(shape, order, None, True)]


def compatible_pairs(shape: PartialShape) -> Iterator[tuple[str, Coord]]:
    """Every (dim, at) that could extend the shape, dims in linear-extension order."""
    for d in _default_order(shape.space):
        ds = shape._deps[d]
        for at in total_coordinates(shape, ds):
            if (d, at) not in shape.entries:
                yield d, at


def is_complete(shape: PartialShape) -> bool:
    return next(compatible_pairs(shape), None) is None


@dataclass
class CoordinateSpaceView:
    space: DimensionSpace
    shape: PartialShape
    frame: frozenset
    members: set = field(default_factory=set)

    def totals(self) -> list[Coord]:
        return sorted(c for c in self.members if domain(c) == self.frame)

    def partials(self) -> list[Coord]:
        return sorted(c for c in self.members if domain(c) != self.frame)


def coordinate_space(shape: PartialShape, frame) -> CoordinateSpaceView:
    frame = shape.space.check_members(frame)
    if not is_closed(shape.space, frame):
        raise FrameNotClosed(f"frame {sorted(frame)} is not closed")
    order = _frame_order(shape, frame)
    members = {tuple(sorted(c.items())) for c in _walk(shape, order, None, False)}
    return CoordinateSpaceView(shape.space, shape, frame, members)


def validate_coordinate(shape: PartialShape, frame, c: Coord) -> bool:
    """Both coordinate conditions for `c` over the closed `frame`."""
    frame = frozenset(frame)
    if not domain(c) <= frame or not in_bounds(shape, c):
        return False
    bound = domain(c)
    for d in frame - bound:
        ds = shape._deps[d]
        if ds <= bound and (d, restrict(c, ds)) in shape.entries:
            return False
    return True


def explode_members(members: Iterable[Coord], dim: str, at: Coord, length: int, deps) -> set:
    """Replace members that match `at` on the dependencies of `dim` and leave `dim` unknown."""
    out = set()
    for m in members:
        if restrict(m, deps) == at and dim not in domain(m):
            for i in range(length):
                out.add(merge(m, ((dim, i),)))
        else:
            out.add(m)
    return out


def explode(view: CoordinateSpaceView, r: Resolution) -> CoordinateSpaceView:
    if r.dim not in view.frame:
        raise DimOutsideFrame(f"{r.dim!r} is not in frame {sorted(view.frame)}")
    shape = extend(view.shape, r)
    members = explode_members(view.members, r.dim, r.at, r.length, shape.deps(r.dim))
    return CoordinateSpaceView(view.space, shape, view.frame, members)


def _check_anchor(shape: PartialShape, e: frozenset, anchor: Coord, total: bool) -> frozenset:
    space = shape.space
    if not is_convex(space, e):
        raise NotConvex(f"{sorted(e)} is not convex")
    d = dep(space, e)
    if not domain(anchor) <= d:
        raise AnchorOutOfBounds(f"anchor {fmt_coord(anchor)} binds dims outside {sorted(d)}")
    if total and domain(anchor) != d:
        raise AnchorOutOfBounds(f"anchor {fmt_coord(anchor)} must bind all of {sorted(d)}")
    if not validate_coordinate(shape, d, anchor):
        raise AnchorOutOfBounds(f"anchor {fmt_coord(anchor)} is not a coordinate under this shape")
    return d


def subcoordinate_space(shape: PartialShape, e, anchor: Coord) -> set:
    e = shape.space.check_members(e)
    anchor = coord(anchor)
    d = _check_anchor(shape, e, anchor, total=False)
    fixed = {x: None for x in d}
    fixed.update(dict(anchor))
    order = _frame_order(shape, e | d)
    return {tuple(sorted((k, v) for k, v in c.items() if k in e)) for c in _walk(shape, order, fixed, False)}


def restrict_shape(shape: PartialShape, e, anchor: Coord) -> PartialShape:
    space = shape.space
    e = space.check_members(e)
    anchor = coord(anchor)
    d = _check_anchor(shape, e, anchor, total=True)
    sub = space.induced(e)
    out = PartialShape(sub)
    for (x, at), n in shape.entries.items():
        if x not in e:
            continue
        if restrict(at, d) == restrict(anchor, shape.deps(x)):
            out.entries[(x, restrict(at, e))] = n
    return out
