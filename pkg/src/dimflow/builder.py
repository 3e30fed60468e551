"""Incremental shape construction against a length oracle, sequentially or with a worker pool."""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

from .dims import DimensionSpace
from .errors import OracleFailure
from .shape import Coord, PartialShape, Resolution, compatible_pairs

LengthOracle = Callable[[str, Coord], int]


def _ask(oracle: LengthOracle, d: str, at: Coord, shape: PartialShape) -> Resolution:
    try:
        return Resolution(d, at, oracle(d, at))
    except Exception as exc:  # noqa: BLE001 - any oracle error aborts the build
        raise OracleFailure(d, at, shape.copy(), exc) from exc


def build_sequential(space: DimensionSpace, oracle: LengthOracle, trace: list | None = None) -> PartialShape:
    """Repeatedly extend by the first compatible pair until none is left.

    When `trace` is given, each applied resolution is appended to it.
    """
    shape = PartialShape(space)
    while True:
        pair = next(compatible_pairs(shape), None)
        if pair is None:
            return shape
        r = _ask(oracle, *pair, shape)
        shape.add(r)
        if trace is not None:
            trace.append(r)


def build_parallel(
    space: DimensionSpace,
    oracle: LengthOracle,
    workers: int = 4,
    trace: list | None = None,
) -> PartialShape:
    """Dispatch every compatible pair of each snapshot to a pool; wait for the shape to change.

    The coordinator owns the seen-set. Workers append to the shared shape under a
    lock and bump a version counter the coordinator waits on.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    shape = PartialShape(space)
    cond = threading.Condition()
    state = {"version": 0, "error": None}
    seen: set = set()

    def work(d: str, at: Coord):
        try:
            r = Resolution(d, at, oracle(d, at))
        except Exception as exc:  # noqa: BLE001
            with cond:
                if state["error"] is None:
                    state["error"] = (d, at, exc)
                state["version"] += 1
                cond.notify_all()
            return
        with cond:
            shape.add(r)
            if trace is not None:
                trace.append(r)
            state["version"] += 1
            cond.notify_all()

    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="shape-builder") as pool:
        while True:
            with cond:
                if state["error"] is not None:
                    d, at, exc = state["error"]
                    raise OracleFailure(d, at, shape.copy(), exc) from exc
                snapshot = shape.copy()
                version = state["version"]
            fresh = [p for p in compatible_pairs(snapshot) if p not in seen]
            if not fresh and len(seen) == len(snapshot):
                # every dispatched pair has landed and nothing is compatible: complete
                return shape
            for p in fresh:
                seen.add(p)
                pool.submit(work, *p)
            with cond:
                cond.wait_for(lambda: state["version"] != version)


def resolution_bound(space: DimensionSpace, max_length: int) -> int:
    """Upper bound on |R| for any oracle whose lengths never exceed `max_length`.

    A dimension is resolved at most once per total in-bounds coordinate over its
    dependencies, and there are at most max_length ** |dep(d)| of those.
    """
    return sum(max_length ** len(space.ancestors(d)) for d in space.dims)
