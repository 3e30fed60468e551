"""Dimension spaces: finite strict posets of named dimensions."""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field
from typing import Iterable

from .errors import CycleError, InvalidDimensionName, NotExtendable, UnknownDimension

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


@dataclass(frozen=True)
class DimensionSpace:
    """A set of dimensions plus a dependency order kept as its transitive closure.

    `order` holds pairs (ancestor, descendant). Build instances through
    `validate_space`; the constructor trusts its inputs.
    """

    dims: frozenset
    order: frozenset
    _below: dict = field(default=None, repr=False, compare=False, hash=False)
    _above: dict = field(default=None, repr=False, compare=False, hash=False)

    def __post_init__(self):
        below = {d: set() for d in self.dims}
        above = {d: set() for d in self.dims}
        for a, b in self.order:
            below[b].add(a)
            above[a].add(b)
        object.__setattr__(self, "_below", {d: frozenset(s) for d, s in below.items()})
        object.__setattr__(self, "_above", {d: frozenset(s) for d, s in above.items()})

    def __contains__(self, d) -> bool:
        return d in self.dims

    def __iter__(self):
        return iter(sorted(self.dims))

    def __len__(self) -> int:
        return len(self.dims)

    def precedes(self, a: str, b: str) -> bool:
        return (a, b) in self.order

    def ancestors(self, d: str) -> frozenset:
        """Strict ancestors of d; this is dep({d})."""
        try:
            return self._below[d]
        except KeyError:
            raise UnknownDimension(d) from None

    def descendants(self, d: str) -> frozenset:
        try:
            return self._above[d]
        except KeyError:
            raise UnknownDimension(d) from None

    def check_members(self, members: Iterable[str]) -> frozenset:
        members = frozenset(members)
        for d in members:
            if d not in self.dims:
                raise UnknownDimension(d)
        return members

    def induced(self, members: Iterable[str]) -> "DimensionSpace":
        """The subposet on `members` with the inherited order."""
        members = self.check_members(members)
        order = frozenset((a, b) for a, b in self.order if a in members and b in members)
        return DimensionSpace(members, order)

    def linearized(self, sequence: Iterable[str]) -> "DimensionSpace":
        """A total order (chain) over `sequence`, used for canonical expansions."""
        seq = list(sequence)
        return DimensionSpace(
            frozenset(seq),
            frozenset((seq[i], seq[j]) for i in range(len(seq)) for j in range(i + 1, len(seq))),
        )


def validate_space(dims: Iterable[str], order: Iterable[tuple[str, str]] = ()) -> DimensionSpace:
    dims = frozenset(dims)
    for d in dims:
        if not isinstance(d, str) or not _IDENT.match(d):
            raise InvalidDimensionName(f"invalid dimension identifier {d!r}")
    succ: dict[str, set] = {d: set() for d in dims}
    for a, b in order:
        if a not in dims:
            raise UnknownDimension(a)
        if b not in dims:
            raise UnknownDimension(b)
        succ[a].add(b)

    closed = set()
    for start in sorted(dims):
        seen = set()
        stack = list(succ[start])
        while stack:
            x = stack.pop()
            if x in seen:
                continue
            seen.add(x)
            stack.extend(succ[x])
        if start in seen:
            raise CycleError(start)
        closed.update((start, x) for x in seen)
    return DimensionSpace(dims, frozenset(closed))


def closure(space: DimensionSpace, e: Iterable[str]) -> frozenset:
    e = space.check_members(e)
    out = set(e)
    for d in e:
        out |= space.ancestors(d)
    return frozenset(out)


def dep(space: DimensionSpace, e: Iterable[str]) -> frozenset:
    e = space.check_members(e)
    return closure(space, e) - e


def is_closed(space: DimensionSpace, e: Iterable[str]) -> bool:
    e = space.check_members(e)
    return closure(space, e) == e


def is_convex(space: DimensionSpace, e: Iterable[str]) -> bool:
    return is_closed(space, dep(space, e))


def primaries(space: DimensionSpace) -> frozenset:
    return frozenset(d for d in space.dims if not space.ancestors(d))


def linear_extension(space: DimensionSpace, preferred: Iterable[str] = ()) -> list[str]:
    """Topological order of the space that honours `preferred` wherever the order allows.

    Among ready dimensions, the one whose earliest preferred descendant (itself
    included) comes first wins; unlisted dimensions follow, lexically.
    """
    preferred = list(preferred)
    rank: dict[str, int] = {}
    for i, d in enumerate(preferred):
        if d not in space.dims:
            raise UnknownDimension(d)
        rank.setdefault(d, i)
    for i, a in enumerate(preferred):
        for b in preferred[:i]:
            if space.precedes(a, b):
                raise NotExtendable(f"{a!r} is listed after {b!r} but {a!r} precedes {b!r}")

    big = len(preferred)

    def key(d: str):
        ranks = [rank[x] for x in space.descendants(d) | {d} if x in rank]
        own = rank.get(d, big)
        return (min(ranks) if ranks else big, own, d)

    indeg = {d: len(space.ancestors(d)) for d in space.dims}
    # only direct edges matter for Kahn; with a closed order, indegree counts all ancestors
    heap = [key(d) for d in space.dims if indeg[d] == 0]
    heapq.heapify(heap)
    out: list[str] = []
    while heap:
        *_, d = heapq.heappop(heap)
        out.append(d)
        for x in space.descendants(d):
            indeg[x] -= 1
            if indeg[x] == 0:
                heapq.heappush(heap, key(x))
    return out


def is_linear_extension(space: DimensionSpace, seq: list[str]) -> bool:
    if len(set(seq)) != len(seq) or set(seq) != set(space.dims):
        return False
    pos = {d: i for i, d in enumerate(seq)}
    return all(pos[a] < pos[b] for a, b in space.order)
