import threading
import time

import pytest

from dimflow.dsl import load
from dimflow.errors import ArityMismatch, EngineFailed, TaskError, UnboundFunction
from dimflow.journal import recover
from dimflow.mock import mock_registry
from dimflow.scheduler import (
    DONE,
    QUEUED,
    WAITING,
    Engine,
    EngineConfig,
    JobContext,
    ResolutionFound,
    compute_quota,
    handle_event,
    init,
    report_json,
    run_job,
)
from dimflow.shape import coord

import runs

IR = runs.REFERENCE_IR


def sample_engine():
    cfg = runs.sample_config()
    return init(IR, mock_registry(IR, cfg))


def step(eng):
    """Run every queued job synchronously until nothing is queued."""
    n = 0
    while True:
        eng.drain_events()
        queued = [(s.id, c) for s in eng.schedulers.values() for c, t in sorted(s.tickets.items()) if t.status == QUEUED]
        if not queued:
            return n
        for tid, c in queued:
            run_job(eng, tid, c)
            n += 1


def test_initial_tickets():
    eng = sample_engine()
    assert len(eng.schedulers) == 9
    for s in eng.schedulers.values():
        assert list(s.tickets) == [()]
    assert eng.schedulers["get_paper_id"].tickets[()].status == QUEUED
    assert eng.schedulers["parse_paper"].tickets[()].status == WAITING


def test_empty_pipeline():
    eng = init(load(""), {})
    report = eng.run_to_completion()
    assert report.status == "complete" and report.per_task == {}


def test_unbound_function():
    with pytest.raises(UnboundFunction):
        init(load("A = f();"), {})


def test_single_task():
    eng = init(load("A = f();"), {"f": lambda: 7})
    report = eng.run_to_completion()
    assert report.per_task["f"]["jobs"] == 1
    assert eng.arrays["A"].get(()) == 7


def test_zero_input_quota():
    eng = sample_engine()
    assert compute_quota(eng, "get_paper_id", ()) == 0


def test_quotas_on_sample_shape():
    eng = sample_engine()
    step(eng)
    assert compute_quota(eng, "vlm_evaluate", coord(p=0, f=0, s=0, g=0)) == 2
    assert compute_quota(eng, "filter_aggregate", coord(p=0, f=0)) == 5 + 12


def test_resolution_outside_frame_is_ignored():
    eng = sample_engine()
    before = dict(eng.schedulers["get_paper_id"].tickets)
    handle_event(eng, "get_paper_id", ResolutionFound("s", coord(p=0), 5))
    assert eng.schedulers["get_paper_id"].tickets == before


def test_stepping_explodes_and_queues():
    eng = sample_engine()
    run_job(eng, "get_paper_id", ())
    eng.drain_events()
    pp = eng.schedulers["parse_paper"]
    assert list(pp.tickets) == [coord(p=0)] and pp.tickets[coord(p=0)].status == QUEUED
    vlm = eng.schedulers["vlm_evaluate"]
    assert list(vlm.tickets) == [coord(p=0)] and vlm.tickets[coord(p=0)].status == WAITING
    with pytest.raises(Exception):
        run_job(eng, "vlm_evaluate", coord(p=0))


def test_sections_job():
    eng = sample_engine()
    step(eng)
    assert eng.shape.length("s", coord(p=0)) == 5
    assert len(eng.arrays["Section"]) == 5
    assert eng.shape.length("g", coord(p=0, s=3)) == 0


def test_sample_run_to_completion():
    eng, report = runs.run(runs.sample_config())
    assert len(eng.arrays["Row"]) == 3
    assert len(eng.arrays["Relevance"]) == 36
    assert report.per_task["vlm_evaluate"]["jobs"] == 36
    assert all(t.status == DONE for s in eng.schedulers.values() for t in s.tickets.values())
    assert [ty for _, ty, _ in report.rows_over_time] == ["Row"] * 3
    doc = report.to_json()
    assert set(doc) >= {"total_ms", "per_task", "rows_over_time"}
    assert '"per_task"' in report_json(report)


def test_stepping_matches_threaded_run():
    eng = sample_engine()
    step(eng)
    eng.check_terminal()
    threaded, _ = runs.run(runs.sample_config())
    assert runs.terminal_state(eng) == runs.terminal_state(threaded)


@pytest.mark.parametrize("cap", [1, 2, 3, 16])
def test_worker_caps_give_same_state(cap):
    want = runs.terminal_state(runs.run(runs.sample_config())[0])
    assert runs.terminal_state(runs.run(runs.sample_config(), cap=cap)[0]) == want


def test_concurrency_limit_is_respected():
    ir = load("A<x> = seed(); B = work(A) for x @ 2;")
    live, peak, lock = [0], [0], threading.Lock()

    def work(a):
        with lock:
            live[0] += 1
            peak[0] = max(peak[0], live[0])
        time.sleep(0.01)
        with lock:
            live[0] -= 1
        return a

    eng = init(ir, {"seed": lambda: list(range(10)), "work": work})
    eng.run_to_completion()
    assert peak[0] <= 2 and len(eng.arrays["B"]) == 10


def test_empty_output_list():
    ir = load("A<x> = seed(); B = work(A) for x;")
    eng = init(ir, {"seed": lambda: [], "work": lambda a: a})
    report = eng.run_to_completion()
    assert eng.shape.entries == {("x", ()): 0}
    assert report.per_task["work"]["jobs"] == 0


def test_context_is_passed():
    ir = load("A<x> = seed(); B = work(A) for x;")
    seen = []

    def work(a, ctx):
        assert isinstance(ctx, JobContext)
        seen.append((ctx.task, ctx.at, ctx.attempt))
        return a

    init(ir, {"seed": lambda: [1, 2], "work": work}).run_to_completion()
    assert sorted(seen, key=lambda r: r[1]["x"]) == [("work", {"x": 0}, 1), ("work", {"x": 1}, 1)]


def test_aggregated_input_is_nested():
    ir = load("A<x> = seed(); B<y> = split(A) for x; C = total(B<x, y>);")
    got = []

    def total(b):
        got.append(b)
        return sum(len(r) for r in b)

    reg = {"seed": lambda: ["a", "b"], "split": lambda a, ctx: list(range(ctx.at["x"] + 1)), "total": total}
    eng = init(ir, reg)
    eng.run_to_completion()
    assert got == [[[0], [0, 1]]]
    assert eng.arrays["C"].get(()) == 3


def test_retries_then_success(tmp_path):
    ir = load("A = f();")
    calls = []

    def flaky():
        calls.append(1)
        if len(calls) < 3:
            raise RuntimeError("transient")
        return "ok"

    eng = init(ir, {"f": flaky}, None, EngineConfig(max_retries=3, backoff_ms=1))
    report = eng.run_to_completion()
    assert report.per_task["f"] == {"jobs": 1, "retries": 2, "busy_ms": report.per_task["f"]["busy_ms"]}


def test_failure_is_persisted_and_resumable(tmp_path):
    ir = load("A<x> = seed(); B = work(A) for x;")
    p = tmp_path / "j.jsonl"

    def broken(a, ctx):
        if ctx.at["x"] == 1:
            raise RuntimeError("always")
        return a

    eng = init(ir, {"seed": lambda: [1, 2, 3], "work": broken}, str(p), EngineConfig(max_retries=1, backoff_ms=1))
    with pytest.raises(EngineFailed) as err:
        eng.run_to_completion()
    eng.close()
    assert isinstance(err.value.cause, TaskError) and err.value.cause.attempts == 2
    st = recover(p, ir.space, ir.fingerprint())
    assert st.status == "failed"
    assert ("work", coord(x=1)) not in st.done
    eng = Engine.resume(ir, {"seed": lambda: [1, 2, 3], "work": lambda a: a}, str(p))
    eng.run_to_completion()
    eng.close()
    assert len(eng.arrays["B"]) == 3
    assert recover(p, ir.space).status == "complete"


def test_arity_mismatch_is_not_retried():
    ir = load("A<x> = seed();")
    calls = []

    def bad():
        calls.append(1)
        return "not a list"

    with pytest.raises(EngineFailed) as err:
        init(ir, {"seed": bad}, None, EngineConfig(backoff_ms=1)).run_to_completion()
    assert isinstance(err.value.cause, ArityMismatch) and len(calls) == 1


def test_resume_of_complete_run_runs_nothing(tmp_path):
    p = tmp_path / "j.jsonl"
    eng, _ = runs.run(runs.sample_config(), journal=str(p))
    again, report = runs.resume(runs.sample_config(), p)
    assert report.resumed
    assert all(v["jobs"] == 0 for v in report.per_task.values())
    assert runs.terminal_state(again) == runs.terminal_state(eng)


def test_init_refuses_existing_journal(tmp_path):
    p = tmp_path / "j.jsonl"
    runs.run(runs.sample_config(), journal=str(p))
    with pytest.raises(FileExistsError):
        runs.run(runs.sample_config(), journal=str(p))


def test_reference_run_small():
    eng, report = runs.run(runs.reference_config(2))
    assert len(eng.arrays["PaperId"]) == 2
    assert report.per_task["collect_row"]["jobs"] == len(eng.arrays["Row"])
