"""Command-line front end: validate, explain, run, bench and export pipelines."""

from __future__ import annotations

import argparse
import json
import sys

from . import bench as benchmod
from .dsl import diagnose, diagnostics_json, explain, parse
from .errors import Deadlock, EngineFailed, JournalError, PipelineSyntaxError
from .expansion import write_export
from .mock import MockConfig, mock_registry
from .reference import pipeline_source, reference_mocks
from .scheduler import Engine, EngineConfig, init, report_json

EXIT_OK, EXIT_REJECTED, EXIT_IO, EXIT_FAILED, EXIT_DEADLOCK = 0, 1, 2, 3, 4


def _read_pipeline(path: str | None) -> str:
    if path is None:
        return pipeline_source()
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _load_ir(path, out=None):
    """Returns (ir, exit_code). Prints diagnostics on rejection."""
    out = out or sys.stdout
    try:
        source = _read_pipeline(path)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None, EXIT_IO
    try:
        diags, ir = diagnose(parse(source))
    except PipelineSyntaxError as exc:
        doc = [{"task": "", "premise": "SyntaxError", "message": str(exc),
                "span": {"line": exc.line, "col": exc.col}, "expected": list(exc.expected)}]
        print(json.dumps(doc, indent=2), file=out)
        return None, EXIT_REJECTED
    if diags:
        print(diagnostics_json(diags), file=out)
        return None, EXIT_REJECTED
    return ir, EXIT_OK


def _load_mocks(path, seed):
    obj = reference_mocks() if path is None else json.load(open(path, encoding="utf-8"))
    cfg = MockConfig.from_json(obj)
    if seed is not None:
        cfg = cfg.with_overrides(seed=seed)
    return cfg


def cmd_validate(args) -> int:
    ir, code = _load_ir(args.pipeline)
    if code == EXIT_OK:
        print(json.dumps([]))
    return code


def cmd_explain(args) -> int:
    ir, code = _load_ir(args.pipeline)
    if code == EXIT_OK:
        order = args.order.split(",") if args.order else None
        sys.stdout.write(explain(ir, order))
    return code


def cmd_run(args) -> int:
    ir, code = _load_ir(args.pipeline)
    if code != EXIT_OK:
        return code
    try:
        cfg = _load_mocks(args.mocks, args.seed)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read mock config: {exc}", file=sys.stderr)
        return EXIT_IO
    cfg = benchmod.scaled_config(cfg, args.n, args.sleep_ms, ir)
    econf = EngineConfig(global_worker_cap=args.workers_cap or 4000, max_retries=args.max_retries,
                         backoff_ms=args.backoff_ms, fsync=args.fsync)
    registry = mock_registry(ir, cfg)
    try:
        if args.resume:
            if not args.journal:
                print("error: --resume needs --journal", file=sys.stderr)
                return EXIT_IO
            eng = Engine.resume(ir, registry, args.journal, econf, {"mocks": cfg.to_json()})
        else:
            eng = init(ir, registry, args.journal, econf, {"mocks": cfg.to_json()})
        try:
            report = eng.run_to_completion()
        finally:
            eng.close()
    except (OSError, JournalError, FileExistsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except EngineFailed as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except Deadlock as exc:
        print(f"deadlock: {exc}", file=sys.stderr)
        return EXIT_DEADLOCK
    text = report_json(report)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if args.rows_csv:
        benchmod.write_rows_csv(args.rows_csv, report.rows_over_time)
    if args.export:
        write_export(args.export, eng.arrays, eng.shape, ir.dim_order)
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def cmd_bench(args) -> int:
    ir, code = _load_ir(args.pipeline)
    if code != EXIT_OK:
        return code
    try:
        cfg = _load_mocks(args.mocks, args.seed)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read mock config: {exc}", file=sys.stderr)
        return EXIT_IO

    def log(row):
        print(",".join(str(row[k]) for k in benchmod.BENCH_COLUMNS), file=sys.stderr)

    rows = benchmod.bench(ir, cfg, _int_list(args.grid_n), _int_list(args.grid_sleep_ms), args.trials,
                          args.label, args.workers_cap, log)
    if args.report:
        benchmod.write_bench_csv(args.report, rows)
    else:
        benchmod.write_bench_csv("/dev/stdout", rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dimflow", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def pipeline_arg(sp):
        sp.add_argument("--pipeline", help="pipeline .rgf file (default: bundled reference pipeline)")

    sp = sub.add_parser("validate", help="check a pipeline; JSON diagnostics on stdout")
    pipeline_arg(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("explain", help="print the dimension matrix, entity dimensions and tasks")
    pipeline_arg(sp)
    sp.add_argument("--order", help="comma-separated dimension order for the matrix")
    sp.set_defaults(func=cmd_explain)

    sp = sub.add_parser("run", help="run a pipeline with mock tasks")
    pipeline_arg(sp)
    sp.add_argument("--mocks", help="mock config JSON (default: bundled reference mocks)")
    sp.add_argument("--journal", help="journal file for persistence")
    sp.add_argument("--resume", action="store_true", help="continue from --journal")
    sp.add_argument("--workers-cap", type=int, default=None, help="global worker cap (default 4000)")
    sp.add_argument("--seed", type=int, default=None, help="override the mock seed")
    sp.add_argument("--n", type=int, default=None, help="override the length of zero-input tasks")
    sp.add_argument("--sleep-ms", type=float, default=None, help="override the sleep of heavy tasks")
    sp.add_argument("--max-retries", type=int, default=3)
    sp.add_argument("--backoff-ms", type=float, default=100.0)
    sp.add_argument("--fsync", action="store_true", help="fsync the journal after every job")
    sp.add_argument("--report", help="write the run report JSON here instead of stdout")
    sp.add_argument("--rows-csv", help="write the rows-over-time CSV here")
    sp.add_argument("--export", help="directory for nested JSON exports of every entity type")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("bench", help="time mock runs over a grid and compare with the theoretical minimum")
    pipeline_arg(sp)
    sp.add_argument("--mocks")
    sp.add_argument("--grid-n", default="5", help="comma-separated N values")
    sp.add_argument("--grid-sleep-ms", default="0,1000", help="comma-separated heavy-task sleeps")
    sp.add_argument("--trials", type=int, default=3)
    sp.add_argument("--workers-cap", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--label", default="dimflow", help="system_label column value")
    sp.add_argument("--report", help="bench CSV path (default: stdout)")
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
