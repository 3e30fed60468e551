"""Execution engine: one ticket scheduler per task, peer events, bounded worker pools.

The engine's main loop is the single authority over the shape, the entity
arrays and the journal. Workers only run task functions; their results come
back on a queue and are applied by the main loop, which journals them first
and then posts peer events to the schedulers' inboxes. Each scheduler drains
its inbox in order and owns its ticket array exclusively.
"""

from __future__ import annotations

import heapq
import inspect
import itertools
import json
import os
import queue
import time
from collections import Counter, deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable

from .arrays import EntityArray, get_subarray, is_total, put_subarray
from .dims import dep, linear_extension
from .dsl import PipelineIR, TaskDef
from .errors import (
    ArityMismatch,
    Deadlock,
    EngineFailed,
    InvariantViolation,
    TaskError,
    UnboundFunction,
    VersionMismatch,
)
from .journal import JOURNAL_VERSION, Journal, encode_payload, recover, truncate
from .shape import Coord, PartialShape, Resolution, _walk, coordinate_space, domain, fmt_coord, is_complete, merge, restrict

WAITING, QUEUED, DONE = "Waiting", "Queued", "Done"


@dataclass
class EngineConfig:
    max_retries: int = 3
    backoff_ms: float = 100.0
    global_worker_cap: int = 4000
    check_invariants: bool = True
    fsync: bool = False

    @classmethod
    def from_json(cls, obj: dict) -> "EngineConfig":
        known = {k: obj[k] for k in ("max_retries", "backoff_ms", "global_worker_cap", "check_invariants", "fsync") if k in obj}
        return cls(**known)


@dataclass
class JobContext:
    """Passed as ``ctx=`` to task functions that declare a ``ctx`` parameter."""

    task: str
    at: dict
    attempt: int


@dataclass
class Ticket:
    at: Coord
    counts: list
    quota: int | None = None
    status: str = WAITING

    @property
    def count(self) -> int:
        return sum(self.counts)


# -- peer events ---------------------------------------------------------------


@dataclass(frozen=True)
class JobCompleted:
    task: str
    at: Coord
    seq: int = 0


@dataclass(frozen=True)
class ResolutionFound:
    dim: str
    at: Coord
    length: int
    sender: str = ""
    seq: int = 0


@dataclass(frozen=True)
class TicketExploded:
    task: str
    old_at: Coord
    new_count: int
    seq: int = 0


@dataclass
class _Input:
    """Static plan for one input of a task."""

    type_name: str
    producer: str
    agg: tuple  # aggregation dims in the declared nesting order
    residual: frozenset  # signature minus aggregation dims, fixed by the ticket
    anchor_dims: frozenset  # producer frame minus aggregation dims
    sub_dims: frozenset  # producer frame dims aggregated over
    sub_dep: frozenset
    walk_order: list


class TaskScheduler:
    """Ticket array and inbox of one task. Mutated only by the engine loop."""

    def __init__(self, engine: "Engine", task: TaskDef):
        self.engine = engine
        self.task = task
        self.id = task.task_id
        self.frame = frozenset(task.frame)
        self.frame_order = list(task.frame)
        space = engine.ir.space
        self.deps = {d: space.ancestors(d) for d in self.frame}
        self.inputs: list[_Input] = []
        lin = linear_extension(space)
        for ty, agg in task.inputs:
            prod = engine.ir.producer(ty)
            sig = engine.ir.sigma[ty]
            pframe = frozenset(prod.frame)
            sub = pframe & frozenset(agg)
            sub_dep = dep(space, sub)
            walk = [d for d in lin if d in sub | sub_dep]
            self.inputs.append(_Input(ty, prod.task_id, tuple(agg), sig - frozenset(agg), pframe - frozenset(agg), sub, sub_dep, walk))
        self.tickets: dict[Coord, Ticket] = {}
        self.waiting: dict[tuple, set] = {}
        self.by_anchor: list[dict] = [dict() for _ in self.inputs]
        self.pending: set = set()
        self.ready: list = []
        self.inbox: deque = deque()
        self.in_flight = 0
        self.seq = itertools.count(1)

    # -- ticket bookkeeping --

    def _frontier(self, c: Coord):
        bound = domain(c)
        for d in self.frame - bound:
            if self.deps[d] <= bound:
                yield (d, restrict(c, self.deps[d]))

    def add_ticket(self, t: Ticket) -> None:
        c = t.at
        self.tickets[c] = t
        for key in self._frontier(c):
            self.waiting.setdefault(key, set()).add(c)
        bound = domain(c)
        for i, inp in enumerate(self.inputs):
            if inp.anchor_dims <= bound:
                self.by_anchor[i].setdefault(restrict(c, inp.anchor_dims), set()).add(c)
        if t.status == WAITING and bound == self.frame:
            self.pending.add(c)

    def remove_ticket(self, c: Coord) -> Ticket:
        t = self.tickets.pop(c)
        for key in self._frontier(c):
            s = self.waiting.get(key)
            if s is not None:
                s.discard(c)
                if not s:
                    del self.waiting[key]
        bound = domain(c)
        for i, inp in enumerate(self.inputs):
            if inp.anchor_dims <= bound:
                self.by_anchor[i].get(restrict(c, inp.anchor_dims), set()).discard(c)
        self.pending.discard(c)
        return t

    def heap_key(self, c: Coord):
        d = dict(c)
        return tuple(d[x] for x in self.frame_order)

    def quota_of(self, c: Coord) -> list[int] | None:
        shape = self.engine.shape
        out = []
        for inp in self.inputs:
            if not inp.anchor_dims <= domain(c):
                return None
            if not inp.sub_dims:
                out.append(1)
                continue
            fixed = {x: None for x in inp.sub_dep}
            fixed.update({x: i for x, i in c if x in inp.sub_dep})
            out.append(sum(1 for _ in _walk(shape, inp.walk_order, fixed, False)))
        return out

    def check_ready(self, c: Coord) -> None:
        t = self.tickets.get(c)
        if t is None or t.status != WAITING or domain(c) != self.frame:
            return
        quotas = self.quota_of(c)
        if quotas is None:
            return
        t.quota = sum(quotas)
        if all(n == q for n, q in zip(t.counts, quotas)):
            t.status = QUEUED
            self.pending.discard(c)
            if self.engine.config.check_invariants:
                self.engine.verify_ready(self, c)
            heapq.heappush(self.ready, (self.heap_key(c), c))

    # -- event handling --

    def handle(self, ev) -> None:
        if isinstance(ev, JobCompleted):
            for i, inp in enumerate(self.inputs):
                if inp.producer != ev.task:
                    continue
                for c in list(self.by_anchor[i].get(restrict(ev.at, inp.anchor_dims), ())):
                    self.tickets[c].counts[i] += 1
                    self.check_ready(c)
        elif isinstance(ev, ResolutionFound):
            if ev.dim not in self.frame:
                return
            for c in sorted(self.waiting.get((ev.dim, ev.at), ())):
                old = self.remove_ticket(c)
                for k in range(ev.length):
                    child = Ticket(merge(c, ((ev.dim, k),)), list(old.counts))
                    self.add_ticket(child)
                    self.check_ready(child.at)
                self.engine.post_from(self, TicketExploded(self.id, c, ev.length, next(self.seq)))
        elif isinstance(ev, TicketExploded):
            for i, inp in enumerate(self.inputs):
                if inp.producer != ev.task:
                    continue
                probe = restrict(ev.old_at, inp.anchor_dims)
                dims = domain(probe)
                for c in list(self.pending):
                    if restrict(c, dims) == probe:
                        self.check_ready(c)


@dataclass
class RunReport:
    total_ms: float
    per_task: dict
    rows_over_time: list
    status: str = "complete"
    resumed: bool = False

    def to_json(self) -> dict:
        return {
            "total_ms": self.total_ms,
            "per_task": self.per_task,
            "rows_over_time": [list(r) for r in self.rows_over_time],
            "status": self.status,
            "resumed": self.resumed,
        }


def _takes_ctx(fn: Callable) -> bool:
    try:
        params = inspect.signature(fn).parameters
    except (TypeError, ValueError):
        return False
    return "ctx" in params or any(p.kind is inspect.Parameter.VAR_KEYWORD for p in params.values())


class Engine:
    """Runs a checked pipeline to its terminal state. Build with `init` or `Engine.resume`."""

    def __init__(self, ir: PipelineIR, registry: dict, journal: Journal | None = None,
                 config: EngineConfig | None = None, run_config: dict | None = None):
        self.ir = ir
        self.config = config or EngineConfig()
        self.registry = {}
        for t in ir.tasks:
            fn = registry.get(t.task_id, registry.get(t.fn_name))
            if fn is None:
                raise UnboundFunction(f"no function bound for task {t.task_id!r} ({t.fn_name})")
            self.registry[t.task_id] = (fn, _takes_ctx(fn))
        self.shape = PartialShape(ir.space)
        self.arrays = {ty: EntityArray(ty, frozenset(sig), self.shape) for ty, sig in ir.sigma.items()}
        self.done: dict = {}
        self.journal = journal
        self.run_config = run_config or {}
        self.schedulers = {t.task_id: TaskScheduler(self, t) for t in ir.tasks}
        self.consumers: dict[str, list] = {t.task_id: [] for t in ir.tasks}
        for s in self.schedulers.values():
            for inp in s.inputs:
                if s.id not in self.consumers[inp.producer]:
                    self.consumers[inp.producer].append(s.id)
        self.frame_holders: dict[str, list] = {}
        for s in self.schedulers.values():
            for d in s.frame:
                self.frame_holders.setdefault(d, []).append(s.id)
        self.terminal_types = [t.out_type for t in ir.tasks if not ir.consumers(t.out_type)]
        self.stats = {t.task_id: {"jobs": 0, "retries": 0, "busy_ms": 0.0} for t in ir.tasks}
        self.rows: list = []
        self.resumed = False
        self.status = "running"
        self._seq = itertools.count(1)
        self._t0 = None

    # -- state (re)construction --

    def rebuild(self) -> None:
        """Derive every ticket array from the shape and the set of finished jobs."""
        for s in self.schedulers.values():
            s.__init__(self, s.task)
        done_by_task: dict[str, list] = {}
        for (task, c) in self.done:
            done_by_task.setdefault(task, []).append(c)
        for s in self.schedulers.values():
            members = coordinate_space(self.shape, s.frame).members
            for c in sorted(members):
                status = DONE if (s.id, c) in self.done else WAITING
                s.add_ticket(Ticket(c, [0] * len(s.inputs), status=status))
            for i, inp in enumerate(s.inputs):
                for pc in done_by_task.get(inp.producer, ()):
                    for c in s.by_anchor[i].get(restrict(pc, inp.anchor_dims), ()):
                        s.tickets[c].counts[i] += 1
        for s in self.schedulers.values():
            for c in sorted(s.tickets):
                s.check_ready(c)

    # -- events --

    def post_from(self, sched: TaskScheduler, ev) -> None:
        if isinstance(ev, TicketExploded):
            for rid in self.consumers[sched.id]:
                self.schedulers[rid].inbox.append(ev)

    def _post_job_events(self, task: TaskDef, at: Coord, resolution: Resolution | None) -> None:
        # resolution first: receivers must explode before they count the completion
        if resolution is not None:
            ev = ResolutionFound(resolution.dim, resolution.at, resolution.length, task.task_id, next(self._seq))
            for rid in self.frame_holders.get(resolution.dim, ()):
                self.schedulers[rid].inbox.append(ev)
        ev = JobCompleted(task.task_id, at, next(self._seq))
        for rid in self.consumers[task.task_id]:
            self.schedulers[rid].inbox.append(ev)

    def drain_events(self) -> int:
        n = 0
        progressed = True
        while progressed:
            progressed = False
            for s in self.schedulers.values():
                while s.inbox:
                    s.handle(s.inbox.popleft())
                    n += 1
                    progressed = True
        return n

    # -- jobs --

    def materialize(self, task: TaskDef, at: Coord) -> list:
        sched = self.schedulers[task.task_id]
        out = []
        for inp in sched.inputs:
            arr = self.arrays[inp.type_name]
            out.append(get_subarray(arr, restrict(at, inp.residual), frozenset(inp.agg), list(inp.agg)))
        return out

    def verify_ready(self, sched: TaskScheduler, c: Coord) -> None:
        if domain(c) != sched.frame:
            raise InvariantViolation(f"{sched.id}: queued ticket {fmt_coord(c)} is not total")
        for inp in sched.inputs:
            if not is_total(self.arrays[inp.type_name], restrict(c, inp.residual), frozenset(inp.agg)):
                raise InvariantViolation(f"{sched.id}: queued ticket {fmt_coord(c)} but {inp.type_name} is not total")

    def call(self, task: TaskDef, at: Coord, inputs: list) -> tuple[Any, int, float]:
        """Invoke the bound function with retries. Returns (output, attempts, busy_ms)."""
        fn, takes_ctx = self.registry[task.task_id]
        attempt = 0
        busy = 0.0
        while True:
            attempt += 1
            t0 = time.perf_counter()
            try:
                if takes_ctx:
                    out = fn(*inputs, ctx=JobContext(task.task_id, dict(at), attempt))
                else:
                    out = fn(*inputs)
                busy += (time.perf_counter() - t0) * 1000
                return out, attempt, busy
            except ArityMismatch:
                raise
            except Exception as exc:  # noqa: BLE001 - task code may raise anything
                busy += (time.perf_counter() - t0) * 1000
                if attempt > self.config.max_retries:
                    raise TaskError(task.task_id, at, attempt, exc) from exc
                time.sleep(self.config.backoff_ms * (2 ** (attempt - 1)) / 1000)

    def apply(self, task: TaskDef, at: Coord, output, attempts: int, busy_ms: float) -> None:
        """Record a finished job: resolution, cells, journal, then events."""
        resolution = None
        if task.out_dim:
            if not isinstance(output, (list, tuple)):
                raise ArityMismatch(f"{task.task_id} must return a list along {task.out_dim!r}")
            d = task.out_dim
            resolution = Resolution(d, restrict(at, self.shape.deps(d)), len(output))
        arr = self.arrays[task.out_type]
        if resolution is not None:
            self.shape.add(resolution)
        try:
            keys = put_subarray(arr, at, output, task.out_dims)
        except Exception:
            if resolution is not None:
                del self.shape.entries[(resolution.dim, resolution.at)]
            raise
        if self.journal is not None:
            job = [task.task_id, dict(at)]
            batch = []
            if resolution is not None:
                batch.append(("Resolution", {"job": job, "dim": resolution.dim, "at": dict(resolution.at), "length": resolution.length}))
            for k in keys:
                batch.append(("Entity", {"job": job, "type": task.out_type, "at": dict(k), "payload": encode_payload(arr.cells[k])}))
            batch.append(("JobDone", {"job": job, "attempt": attempts}))
            self.journal.append_batch(batch)
        self.done[(task.task_id, at)] = attempts
        sched = self.schedulers[task.task_id]
        sched.tickets[at].status = DONE
        st = self.stats[task.task_id]
        st["jobs"] += 1
        st["retries"] += attempts - 1
        st["busy_ms"] += busy_ms
        if task.out_type in self.terminal_types and keys:
            self.rows.append((self._elapsed(), task.out_type, len(arr.cells)))
        self._post_job_events(task, at, resolution)

    def run_job(self, task_id: str, at: Coord) -> None:
        """Run one queued job synchronously in the calling thread."""
        sched = self.schedulers[task_id]
        t = sched.tickets[at]
        if t.status != QUEUED:
            raise InvariantViolation(f"{task_id} at {fmt_coord(at)} is {t.status}, not Queued")
        sched.ready = [e for e in sched.ready if e[1] != at]
        heapq.heapify(sched.ready)
        inputs = self.materialize(sched.task, at)
        out, attempts, busy = self.call(sched.task, at, inputs)
        self.apply(sched.task, at, out, attempts, busy)

    # -- main loop --

    def _elapsed(self) -> float:
        return (time.perf_counter() - self._t0) * 1000 if self._t0 is not None else 0.0

    def _journal_meta(self, body: dict) -> None:
        if self.journal is not None:
            self.journal.append("RunMeta", body)

    def start(self) -> None:
        """Write the opening journal record and build the initial ticket arrays."""
        if not self.resumed:
            self._journal_meta({
                "event": "start",
                "version": JOURNAL_VERSION,
                "pipeline_hash": self.ir.fingerprint(),
                "config": self.run_config,
            })
        self.rebuild()

    def run_to_completion(self) -> RunReport:
        if self._t0 is None:
            self._t0 = time.perf_counter()
        results: queue.Queue = queue.Queue()
        workers = max(1, min(self.config.global_worker_cap, sum(t.concurrency for t in self.ir.tasks) or 1))
        in_flight = 0
        failure: BaseException | None = None

        def work(task: TaskDef, at: Coord, inputs: list):
            try:
                out, attempts, busy = self.call(task, at, inputs)
                results.put((task, at, out, attempts, busy, None))
            except BaseException as exc:  # noqa: BLE001 - surfaced to the loop
                results.put((task, at, None, 0, 0.0, exc))

        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="dimflow-job") as pool:
            while True:
                self.drain_events()
                if failure is None:
                    for s in self.schedulers.values():
                        while s.ready and s.in_flight < s.task.concurrency and in_flight < workers:
                            _, c = heapq.heappop(s.ready)
                            inputs = self.materialize(s.task, c)
                            s.in_flight += 1
                            in_flight += 1
                            pool.submit(work, s.task, c, inputs)
                if in_flight == 0:
                    break
                task, at, out, attempts, busy, exc = results.get()
                in_flight -= 1
                self.schedulers[task.task_id].in_flight -= 1
                if exc is None:
                    try:
                        self.apply(task, at, out, attempts, busy)
                    except Exception as e:  # noqa: BLE001 - arity problems halt the run
                        exc = e
                if exc is not None and failure is None:
                    failure = exc

        if failure is not None:
            self.status = "failed"
            self._journal_meta({"event": "failed", "error": f"{type(failure).__name__}: {failure}"})
            raise EngineFailed(failure)
        self.check_terminal()
        self.status = "complete"
        self._journal_meta({"event": "complete"})
        return RunReport(round(self._elapsed(), 3), self.stats, self.rows, self.status, self.resumed)

    def check_terminal(self) -> None:
        stuck = [(s.id, c) for s in self.schedulers.values() for c, t in sorted(s.tickets.items()) if t.status != DONE]
        if stuck:
            raise Deadlock(stuck)
        if not is_complete(self.shape):
            raise Deadlock([("<shape>", ())])
        for ty, arr in self.arrays.items():
            view = coordinate_space(self.shape, arr.frame)
            if any(domain(c) != arr.frame or c not in arr.cells for c in view.members):
                raise Deadlock([(f"<entity {ty}>", ())])
        if self.config.check_invariants:
            # no lost updates: each count equals the finished producer jobs it depends on
            for s in self.schedulers.values():
                for i, inp in enumerate(s.inputs):
                    finished = Counter(restrict(pc, inp.anchor_dims) for (task, pc) in self.done if task == inp.producer)
                    for c, t in s.tickets.items():
                        if t.counts[i] != finished[restrict(c, inp.anchor_dims)]:
                            raise InvariantViolation(f"{s.id} at {fmt_coord(c)}: count {t.counts[i]} is stale")

    # -- queries --

    def compute_quota(self, task_id: str, at: Coord) -> int:
        q = self.schedulers[task_id].quota_of(at)
        return 0 if q is None else sum(q)

    def handle_event(self, scheduler_id: str, ev) -> None:
        self.schedulers[scheduler_id].handle(ev)

    def close(self) -> None:
        if self.journal is not None:
            self.journal.close()

    @classmethod
    def resume(cls, ir: PipelineIR, registry: dict, journal_path, config: EngineConfig | None = None,
               run_config: dict | None = None) -> "Engine":
        """Rebuild from a journal and continue appending to it."""
        config = config or EngineConfig()
        state = recover(journal_path, ir.space, ir.fingerprint())
        if state.meta is None:
            truncate(journal_path, 0)
            eng = cls(ir, registry, Journal(journal_path, config.fsync), config, run_config)
            eng.start()
            return eng
        truncate(journal_path, state.valid_bytes)
        eng = cls(ir, registry, Journal(journal_path, config.fsync, next_lsn=state.last_lsn + 1), config,
                  run_config or state.meta.get("config"))
        eng.resumed = True
        eng.shape.entries.update(state.shape.entries)
        for ty, cells in state.cells.items():
            if ty not in eng.arrays:
                raise VersionMismatch(f"journal has cells for unknown type {ty!r}")
            eng.arrays[ty].cells.update(cells)
        eng.done.update(state.done)
        eng._journal_meta({"event": "resume", "from_lsn": state.last_lsn})
        eng.start()
        return eng


def init(ir: PipelineIR, registry: dict, store=None, config: EngineConfig | None = None,
         run_config: dict | None = None) -> Engine:
    """Fresh engine. `store` is None (memory only), a Journal, or a path for a new journal."""
    config = config or EngineConfig()
    journal = store
    if store is not None and not isinstance(store, Journal):
        if os.path.exists(store) and os.path.getsize(store) > 0:
            raise FileExistsError(f"journal {store} already exists; resume it or remove it")
        journal = Journal(store, config.fsync)
    eng = Engine(ir, registry, journal, config, run_config)
    eng.start()
    return eng


def compute_quota(engine: Engine, task: str, at: Coord) -> int:
    return engine.compute_quota(task, at)


def handle_event(engine: Engine, scheduler_id: str, ev) -> None:
    engine.handle_event(scheduler_id, ev)


def run_job(engine: Engine, task: str, at: Coord) -> None:
    engine.run_job(task, at)


def run_to_completion(engine: Engine) -> RunReport:
    return engine.run_to_completion()


def report_json(report: RunReport) -> str:
    return json.dumps(report.to_json(), indent=2)
