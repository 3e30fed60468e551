"""Mock-workload runs, theoretical minimum times and rows-over-time analysis."""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass

import numpy as np

from .dsl import PipelineIR
from .mock import MockConfig, heavy_tasks, mock_registry, root_tasks
from .scheduler import Engine, EngineConfig, RunReport, init

BENCH_COLUMNS = ("system_label", "N", "t_sleep_ms", "trial", "total_ms", "theory_ms")
ROWS_COLUMNS = ("t_ms", "entity_type", "cumulative_count")


def run_mock(ir: PipelineIR, config: MockConfig, *, workers_cap: int | None = None, journal=None,
             engine_config: EngineConfig | None = None) -> tuple[Engine, RunReport]:
    ec = engine_config or EngineConfig()
    if workers_cap is not None:
        ec = EngineConfig(ec.max_retries, ec.backoff_ms, workers_cap, ec.check_invariants, ec.fsync)
    eng = init(ir, mock_registry(ir, config), journal, ec, run_config={"mocks": config.to_json()})
    try:
        report = eng.run_to_completion()
    finally:
        eng.close()
    return eng, report


def heavy_depth(ir: PipelineIR, heavy: list[str]) -> int:
    """Largest number of heavy tasks on one producer-to-consumer chain."""
    depth: dict[str, int] = {}
    for t in ir.tasks:  # declaration order is topological
        best = max((depth[ir.producer(ty).task_id] for ty, _ in t.inputs), default=0)
        depth[t.task_id] = best + (1 if t.task_id in heavy else 0)
    return max(depth.values(), default=0)


def theory_ms(job_counts: dict, ir: PipelineIR, heavy: list[str], t_sleep_ms: float,
              bottleneck: str | None = None) -> float:
    """(ceil(bottleneck jobs / its workers) + heavy chain depth - 1) * t_sleep.

    The bottleneck defaults to the heavy task with the most jobs.
    """
    if not heavy or t_sleep_ms == 0:
        return 0.0
    if bottleneck is None:
        bottleneck = max(heavy, key=lambda h: (job_counts.get(h, 0), h))
    conc = ir.task(bottleneck).concurrency
    rounds = math.ceil(job_counts.get(bottleneck, 0) / conc)
    return float((rounds + heavy_depth(ir, heavy) - 1) * t_sleep_ms)


def scaled_config(base: MockConfig, n: int | None, t_sleep_ms: float | None, ir: PipelineIR) -> MockConfig:
    roots = {name: n for name in root_tasks(ir)} if n is not None else None
    return base.with_overrides(root_len=roots, heavy_sleep_ms=t_sleep_ms)


def job_counts(ir: PipelineIR, config: MockConfig) -> dict:
    """Job counts of a zero-sleep run; the counts do not depend on timing."""
    dry = config.with_overrides(heavy_sleep_ms=0, light_sleep_ms=0)
    _, report = run_mock(ir, dry, engine_config=EngineConfig(check_invariants=False))
    return {k: v["jobs"] for k, v in report.per_task.items()}


def bench(ir: PipelineIR, base: MockConfig, grid_n, grid_sleep_ms, trials: int = 1, label: str = "dimflow",
          workers_cap: int | None = None, log=None) -> list[dict]:
    rows = []
    heavy = heavy_tasks(ir, base)
    for n in grid_n:
        counts = job_counts(ir, scaled_config(base, n, 0, ir))
        for t_sleep in grid_sleep_ms:
            cfg = scaled_config(base, n, t_sleep, ir)
            theory = theory_ms(counts, ir, heavy, t_sleep)
            for trial in range(1, trials + 1):
                _, report = run_mock(ir, cfg, workers_cap=workers_cap,
                                     engine_config=EngineConfig(check_invariants=False))
                row = {"system_label": label, "N": n, "t_sleep_ms": t_sleep, "trial": trial,
                       "total_ms": report.total_ms, "theory_ms": theory}
                rows.append(row)
                if log:
                    log(row)
    return rows


def write_bench_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in BENCH_COLUMNS})


def write_rows_csv(path, rows_over_time) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ROWS_COLUMNS)
        for t_ms, ty, count in rows_over_time:
            w.writerow([f"{t_ms:.3f}", ty, count])


@dataclass
class Linearity:
    r2: float
    max_gap_ms: float
    median_gap_ms: float
    points: int

    @property
    def gap_ratio(self) -> float:
        return self.max_gap_ms / self.median_gap_ms if self.median_gap_ms > 0 else math.inf


def rows_linearity(rows_over_time, entity_type: str, window=(0.1, 0.9)) -> Linearity:
    """Linear fit of the cumulative count against time inside the middle of the run.

    The run spans from time zero to the last arrival. Gaps are measured between
    consecutive arrivals inside the window.
    """
    pts = [(t, n) for t, ty, n in rows_over_time if ty == entity_type]
    if len(pts) < 3:
        return Linearity(0.0, math.inf, 0.0, len(pts))
    end = pts[-1][0]
    lo, hi = window[0] * end, window[1] * end
    sel = [(t, n) for t, n in pts if lo <= t <= hi]
    if len(sel) < 3:
        return Linearity(0.0, math.inf, 0.0, len(sel))
    x = np.array([t for t, _ in sel], dtype=float)
    y = np.array([n for _, n in sel], dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 0.0
    gaps = [b - a for a, b in zip(x[:-1], x[1:])]
    return Linearity(r2, max(gaps), statistics.median(gaps), len(sel))
