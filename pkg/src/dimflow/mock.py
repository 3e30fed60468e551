"""Mock task functions with seeded, reproducible output lengths and fixed sleeps."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field

from .dsl import PipelineIR


def at_key(at: dict) -> str:
    """Canonical text form of a coordinate, e.g. ``"p=0,s=1"``."""
    return ",".join(f"{d}={i}" for d, i in sorted(at.items()))


def _digest(*parts) -> bytes:
    return hashlib.sha256(json.dumps(parts, sort_keys=True, separators=(",", ":")).encode()).digest()


@dataclass
class MockTaskSpec:
    fn_name: str
    output_len: int | tuple | None = None  # fixed, or inclusive [lo, hi]
    sleep_ms: float = 0.0
    heavy: bool = False
    lengths: dict = field(default_factory=dict)  # at_key -> length overrides

    @classmethod
    def from_json(cls, name: str, obj: dict) -> "MockTaskSpec":
        out = obj.get("output_len")
        if isinstance(out, list):
            out = tuple(out)
        return cls(obj.get("fn_name", name), out, float(obj.get("sleep_ms", 0)), bool(obj.get("heavy", False)),
                   dict(obj.get("lengths", {})))

    def to_json(self) -> dict:
        out = list(self.output_len) if isinstance(self.output_len, tuple) else self.output_len
        body = {"fn_name": self.fn_name, "output_len": out, "sleep_ms": self.sleep_ms, "heavy": self.heavy}
        if self.lengths:
            body["lengths"] = dict(self.lengths)
        return body

    def length(self, seed: int, at: dict) -> int:
        key = at_key(at)
        if key in self.lengths:
            return int(self.lengths[key])
        if self.output_len is None:
            return 0
        if isinstance(self.output_len, int):
            return self.output_len
        lo, hi = self.output_len
        h = int.from_bytes(_digest(seed, self.fn_name, key)[:8], "big")
        return lo + h % (hi - lo + 1)


@dataclass
class MockConfig:
    seed: int
    tasks: dict  # fn_name -> MockTaskSpec

    @classmethod
    def from_json(cls, obj: dict) -> "MockConfig":
        return cls(int(obj.get("seed", 0)), {k: MockTaskSpec.from_json(k, v) for k, v in obj.get("tasks", {}).items()})

    @classmethod
    def load(cls, path) -> "MockConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def to_json(self) -> dict:
        return {"seed": self.seed, "tasks": {k: v.to_json() for k, v in sorted(self.tasks.items())}}

    def with_overrides(self, *, seed: int | None = None, root_len: dict | None = None,
                       heavy_sleep_ms: float | None = None, light_sleep_ms: float | None = None) -> "MockConfig":
        """Copy with a new seed, fixed lengths for named tasks, or new sleeps."""
        tasks = {}
        for k, v in self.tasks.items():
            spec = MockTaskSpec(v.fn_name, v.output_len, v.sleep_ms, v.heavy, dict(v.lengths))
            if root_len and k in root_len:
                spec.output_len = int(root_len[k])
            if heavy_sleep_ms is not None and spec.heavy:
                spec.sleep_ms = heavy_sleep_ms
            if light_sleep_ms is not None and not spec.heavy:
                spec.sleep_ms = light_sleep_ms
            tasks[k] = spec
        return MockConfig(self.seed if seed is None else seed, tasks)


def make_mock(spec: MockTaskSpec, seed: int, emits_dim: bool, sleep=time.sleep):
    """A task function returning deterministic values derived from (seed, fn, at, inputs)."""

    def fn(*inputs, ctx):
        if spec.sleep_ms > 0:
            sleep(spec.sleep_ms / 1000)
        key = at_key(ctx.at)
        tag = _digest(seed, spec.fn_name, key, inputs).hex()[:10]
        if emits_dim:
            return [f"{spec.fn_name}[{key}]#{i}:{tag}" for i in range(spec.length(seed, ctx.at))]
        return f"{spec.fn_name}[{key}]:{tag}"

    fn.__name__ = spec.fn_name
    return fn


def mock_registry(ir: PipelineIR, config: MockConfig, sleep=time.sleep) -> dict:
    reg = {}
    for t in ir.tasks:
        spec = config.tasks.get(t.fn_name) or MockTaskSpec(t.fn_name)
        reg[t.task_id] = make_mock(spec, config.seed, t.out_dim is not None, sleep)
    return reg


def heavy_tasks(ir: PipelineIR, config: MockConfig) -> list[str]:
    return [t.task_id for t in ir.tasks if t.fn_name in config.tasks and config.tasks[t.fn_name].heavy]


def root_tasks(ir: PipelineIR) -> list[str]:
    return [t.fn_name for t in ir.tasks if not t.inputs]
