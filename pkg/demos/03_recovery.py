"""Kill a journaled run halfway, resume it, and compare with an uninterrupted run."""

from __future__ import annotations

import os
import tempfile

from dimflow.dsl import load
from dimflow.expansion import dumps, export_all
from dimflow.journal import recover, scan
from dimflow.mock import MockConfig, mock_registry
from dimflow.reference import pipeline_source, reference_mocks
from dimflow.scheduler import Engine, init

ir = load(pipeline_source())
cfg = MockConfig.from_json(reference_mocks()).with_overrides(root_len={"get_paper_id": 2})
path = os.path.join(tempfile.mkdtemp(prefix="dimflow-journal-"), "run.jsonl")


def snapshot(engine):
    docs, _ = export_all(engine.arrays, engine.shape, ir.dim_order)
    return dumps(docs)


eng = init(ir, mock_registry(ir, cfg), path)
eng.run_to_completion()
eng.close()
want = snapshot(eng)

records, _, size = scan(path)
print(f"journal: {len(records)} records, {size} bytes")

# simulate a crash: keep half the records plus a torn partial line
with open(path, "rb") as fh:
    data = fh.read()
cut = records[len(records) // 2].end
with open(path, "wb") as fh:
    fh.write(data[: cut + 20])

state = recover(path, ir.space, ir.fingerprint())
print(f"recovered: {len(state.done)} finished jobs, {len(state.shape)} lengths, "
      f"{state.dropped_bytes} torn bytes dropped, {state.uncommitted} uncommitted records")

eng = Engine.resume(ir, mock_registry(ir, cfg), path)
report = eng.run_to_completion()
eng.close()
print("jobs run after resume:", sum(v["jobs"] for v in report.per_task.values()))
print("identical to uninterrupted run:", snapshot(eng) == want)
