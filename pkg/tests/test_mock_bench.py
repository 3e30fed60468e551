import csv
import math

import pytest

from dimflow.bench import (
    BENCH_COLUMNS,
    bench,
    heavy_depth,
    job_counts,
    rows_linearity,
    scaled_config,
    theory_ms,
    write_bench_csv,
    write_rows_csv,
)
from dimflow.mock import MockConfig, MockTaskSpec, at_key, heavy_tasks, make_mock, root_tasks
from dimflow.scheduler import JobContext

import runs

IR = runs.REFERENCE_IR


def test_at_key():
    assert at_key({"s": 1, "p": 0}) == "p=0,s=1"
    assert at_key({}) == ""


def test_lengths_are_seeded():
    spec = MockTaskSpec("f", (0, 12))
    a = [spec.length(1, {"p": i}) for i in range(50)]
    assert a == [spec.length(1, {"p": i}) for i in range(50)]
    assert a != [spec.length(2, {"p": i}) for i in range(50)]
    assert all(0 <= n <= 12 for n in a)
    assert MockTaskSpec("f", 4).length(9, {}) == 4
    assert MockTaskSpec("f", 4, lengths={"p=3": 0}).length(9, {"p": 3}) == 0


def test_mock_outputs_depend_on_inputs():
    spec = MockTaskSpec("f", 2)
    fn = make_mock(spec, 5, True, sleep=lambda s: None)
    ctx = JobContext("f", {"p": 0}, 1)
    out = fn("x", ctx=ctx)
    assert len(out) == 2 and out == fn("x", ctx=ctx)
    assert out != fn("y", ctx=ctx)
    scalar = make_mock(spec, 5, False, sleep=lambda s: None)
    assert isinstance(scalar("x", ctx=ctx), str)


def test_mock_sleeps():
    slept = []
    fn = make_mock(MockTaskSpec("f", sleep_ms=250), 0, False, sleep=slept.append)
    fn(ctx=JobContext("f", {}, 1))
    assert slept == [0.25]


def test_config_json_round_trip():
    cfg = runs.reference_config()
    assert MockConfig.from_json(cfg.to_json()) == cfg


def test_overrides():
    cfg = runs.reference_config().with_overrides(seed=3, root_len={"get_paper_id": 9}, heavy_sleep_ms=7)
    assert cfg.seed == 3 and cfg.tasks["get_paper_id"].output_len == 9
    assert all(s.sleep_ms == 7 for s in cfg.tasks.values() if s.heavy)
    assert runs.reference_config().tasks["vlm_evaluate"].sleep_ms == 0


def test_reference_roles():
    cfg = runs.reference_config()
    assert sorted(heavy_tasks(IR, cfg)) == ["ocr_extract", "parse_paper", "vlm_evaluate"]
    assert root_tasks(IR) == ["get_paper_id"]
    assert heavy_depth(IR, heavy_tasks(IR, cfg)) == 2


def test_theory_formula():
    heavy = ["parse_paper", "vlm_evaluate", "ocr_extract"]
    assert theory_ms({"vlm_evaluate": 1142, "ocr_extract": 40}, IR, heavy, 3000) == 57000
    assert theory_ms({"vlm_evaluate": 3500}, IR, heavy, 1000) == 56000
    assert theory_ms({"vlm_evaluate": 3500}, IR, heavy, 0) == 0
    assert theory_ms({"vlm_evaluate": 64}, IR, heavy, 10) == 20


@pytest.mark.parametrize("n,sleep,want", [(5, 3000, 57000), (20, 1000, 56000), (5, 0, 0)])
def test_reference_theory(n, sleep, want):
    base = runs.reference_config()
    counts = job_counts(IR, scaled_config(base, n, 0, IR))
    assert theory_ms(counts, IR, heavy_tasks(IR, base), sleep) == want


def test_mock_determinism_across_trials():
    cfg = runs.reference_config(3)
    a, ra = runs.run(cfg)
    b, rb = runs.run(cfg, cap=5)
    assert runs.terminal_state(a) == runs.terminal_state(b)
    assert {k: v["jobs"] for k, v in ra.per_task.items()} == {k: v["jobs"] for k, v in rb.per_task.items()}


def test_bench_rows(tmp_path):
    rows = bench(IR, runs.reference_config(), [1], [0, 5], trials=2, label="x")
    assert len(rows) == 4
    assert [r["trial"] for r in rows] == [1, 2, 1, 2]
    assert rows[0]["theory_ms"] == 0 and rows[2]["theory_ms"] > 0
    p = tmp_path / "b.csv"
    write_bench_csv(p, rows)
    with open(p) as fh:
        got = list(csv.reader(fh))
    assert tuple(got[0]) == BENCH_COLUMNS and len(got) == 5


def test_rows_csv(tmp_path):
    p = tmp_path / "r.csv"
    write_rows_csv(p, [(1.5, "Row", 1), (2.0, "Row", 2)])
    assert p.read_text().splitlines() == ["t_ms,entity_type,cumulative_count", "1.500,Row,1", "2.000,Row,2"]


def test_linearity_of_a_straight_line():
    rows = [(float(t), "Row", t) for t in range(1, 101)]
    lin = rows_linearity(rows, "Row")
    assert lin.r2 == pytest.approx(1.0)
    assert lin.gap_ratio == pytest.approx(1.0)


def test_linearity_detects_a_burst():
    rows = [(float(t), "Row", t) for t in range(1, 50)] + [(float(t), "Row", t - 150) for t in range(200, 251)]
    lin = rows_linearity(rows, "Row")
    assert lin.gap_ratio > 3


def test_linearity_needs_points():
    lin = rows_linearity([(1.0, "Row", 1)], "Row")
    assert lin.points == 1 and math.isinf(lin.gap_ratio)
