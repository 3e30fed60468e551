"""Check the bundled caption pipeline, run it on mock tasks, and export the result."""

from __future__ import annotations

import sys
import tempfile

from dimflow.dsl import explain, load
from dimflow.expansion import export_nested, export_order, write_export
from dimflow.mock import MockConfig, mock_registry
from dimflow.reference import pipeline_source, sample_mocks
from dimflow.scheduler import init

ir = load(pipeline_source())
sys.stdout.write(explain(ir, ["p", "f", "t", "r", "s", "g"]))

# one paper with the lengths of the hand-built shape in 01_shapes.py
cfg = MockConfig.from_json(sample_mocks())
engine = init(ir, mock_registry(ir, cfg))
report = engine.run_to_completion()

print("\njobs per task:", {k: v["jobs"] for k, v in report.per_task.items()})
print("rows written at (ms):", [round(t, 2) for t, _, _ in report.rows_over_time])

para = engine.arrays["Paragraph"]
nested = export_nested(para, engine.shape, export_order(para.frame, ir.dim_order))
print("paragraphs per section:", [len(x) for x in nested[0]])

out = tempfile.mkdtemp(prefix="dimflow-export-")
print("exported:", *write_export(out, engine.arrays, engine.shape, ir.dim_order), sep="\n  ")
