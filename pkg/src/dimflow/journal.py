"""Append-only JSON-lines journal with per-record CRC32, and replay into engine state.

Line format::

    {"lsn": 7, "kind": "Entity", "body": {...}, "crc": 123456789}

The CRC covers the canonical JSON of ``body``. Recovery keeps the longest valid
prefix: the first line that fails to parse, fails its CRC or breaks the lsn
sequence is discarded together with everything after it.
"""

from __future__ import annotations

import base64
import json
import os
import zlib
from dataclasses import dataclass, field

from .errors import CorruptJournal, JournalIOError, VersionMismatch
from .shape import PartialShape, Resolution, coord

JOURNAL_VERSION = 1
KINDS = ("RunMeta", "Resolution", "Entity", "JobDone")


def canonical(body) -> str:
    return json.dumps(body, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def encode_record(lsn: int, kind: str, body) -> str:
    text = canonical(body)
    crc = zlib.crc32(text.encode())
    return f'{{"lsn":{lsn},"kind":{json.dumps(kind)},"body":{text},"crc":{crc}}}\n'


def encode_payload(payload: bytes) -> dict:
    try:
        return {"enc": "utf8", "data": payload.decode()}
    except UnicodeDecodeError:
        return {"enc": "b64", "data": base64.b64encode(payload).decode()}


def decode_payload(obj: dict) -> bytes:
    if obj["enc"] == "utf8":
        return obj["data"].encode()
    return base64.b64decode(obj["data"])


@dataclass
class Record:
    lsn: int
    kind: str
    body: dict
    end: int  # byte offset just past this record's line


def scan(path) -> tuple[list[Record], int, int]:
    """Parse the valid prefix of a journal.

    Returns (records, valid_bytes, total_bytes).
    """
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except FileNotFoundError:
        return [], 0, 0
    except OSError as exc:
        raise JournalIOError(f"cannot read journal {path}: {exc}") from exc
    records: list[Record] = []
    pos = 0
    while pos < len(data):
        nl = data.find(b"\n", pos)
        if nl < 0:
            break  # torn final line
        line = data[pos:nl]
        try:
            obj = json.loads(line)
            lsn, kind, body, crc = obj["lsn"], obj["kind"], obj["body"], obj["crc"]
            ok = (
                isinstance(lsn, int)
                and kind in KINDS
                and isinstance(body, dict)
                and zlib.crc32(canonical(body).encode()) == crc
                and lsn == (records[-1].lsn + 1 if records else 1)
            )
        except (ValueError, KeyError, TypeError):
            ok = False
        if not ok:
            break
        records.append(Record(lsn, kind, body, nl + 1))
        pos = nl + 1
    return records, pos, len(data)


class Journal:
    """Single-appender journal file. Each `append_batch` is one write call."""

    def __init__(self, path, fsync: bool = False, readonly: bool = False, next_lsn: int = 1):
        self.path = os.fspath(path)
        self.fsync = fsync
        self.readonly = readonly
        self.next_lsn = next_lsn
        self._fh = None
        if not readonly:
            try:
                self._fh = open(self.path, "ab")
            except OSError as exc:
                raise JournalIOError(f"cannot open journal {self.path}: {exc}") from exc

    def append(self, kind: str, body: dict) -> int:
        return self.append_batch([(kind, body)])[0]

    def append_batch(self, items) -> list[int]:
        if self.readonly or self._fh is None:
            raise JournalIOError(f"journal {self.path} is read-only")
        lines, lsns = [], []
        for kind, body in items:
            if kind not in KINDS:
                raise ValueError(f"unknown record kind {kind!r}")
            lines.append(encode_record(self.next_lsn, kind, body))
            lsns.append(self.next_lsn)
            self.next_lsn += 1
        try:
            self._fh.write("".join(lines).encode())
            self._fh.flush()
            if self.fsync:
                os.fsync(self._fh.fileno())
        except OSError as exc:
            raise JournalIOError(f"journal write failed: {exc}") from exc
        return lsns

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class RecoveredState:
    """Committed state rebuilt from a journal prefix."""

    meta: dict | None
    shape: PartialShape | None
    cells: dict = field(default_factory=dict)  # type -> {coord: payload bytes}
    done: dict = field(default_factory=dict)  # (task, coord) -> attempt
    status: str = "fresh"  # fresh | running | failed | complete
    last_lsn: int = 0
    valid_bytes: int = 0
    dropped_bytes: int = 0
    uncommitted: int = 0  # records of jobs without a JobDone


def recover(path, space=None, pipeline_hash: str | None = None) -> RecoveredState:
    """Replay committed jobs from the journal at `path`.

    Records of a job only take effect once that job's JobDone is read, so a job
    cut off mid-write simply runs again. Replay is idempotent.
    """
    records, valid, total = scan(path)
    if not records:
        if total and valid == 0 and _has_later_valid_line(path):
            raise CorruptJournal(f"{path}: first record is damaged but later records exist")
        return RecoveredState(None, PartialShape(space) if space is not None else None,
                              valid_bytes=0, dropped_bytes=total)
    first = records[0]
    if first.kind != "RunMeta" or first.body.get("event") != "start":
        raise CorruptJournal(f"{path}: journal must start with a RunMeta start record")
    meta = first.body
    if meta.get("version") != JOURNAL_VERSION:
        raise VersionMismatch(f"journal version {meta.get('version')} != {JOURNAL_VERSION}")
    if pipeline_hash is not None and meta.get("pipeline_hash") != pipeline_hash:
        raise VersionMismatch("journal was written for a different pipeline")
    state = RecoveredState(meta, PartialShape(space) if space is not None else None)
    state.status = "running"
    pending: dict = {}
    for rec in records[1:]:
        b = rec.body
        if rec.kind == "RunMeta":
            ev = b.get("event")
            if ev == "failed":
                state.status = "failed"
            elif ev == "complete":
                state.status = "complete"
            elif ev == "resume":
                state.status = "running"
            continue
        key = (b["job"][0], coord(b["job"][1]))
        if rec.kind == "JobDone":
            batch = pending.pop(key, [])
            if key in state.done:
                continue
            for kind, body in batch:
                _apply(state, kind, body)
            state.done[key] = b.get("attempt", 1)
        else:
            pending.setdefault(key, []).append((rec.kind, b))
    state.uncommitted = sum(len(v) for v in pending.values())
    state.last_lsn = records[-1].lsn
    state.valid_bytes = valid
    state.dropped_bytes = total - valid
    return state


def _apply(state: RecoveredState, kind: str, body: dict) -> None:
    if kind == "Resolution":
        if state.shape is None:
            return
        at = coord(body["at"])
        known = state.shape.length(body["dim"], at)
        if known is None:
            state.shape.add(Resolution(body["dim"], at, body["length"]))
        elif known != body["length"]:
            raise CorruptJournal(f"conflicting lengths for {body['dim']} at {dict(at)}")
    elif kind == "Entity":
        cells = state.cells.setdefault(body["type"], {})
        c = coord(body["at"])
        payload = decode_payload(body["payload"])
        if cells.setdefault(c, payload) != payload:
            raise CorruptJournal(f"conflicting values for {body['type']} at {dict(c)}")


def _has_later_valid_line(path) -> bool:
    with open(path, "rb") as fh:
        lines = fh.read().split(b"\n")[1:]
    for line in lines:
        try:
            obj = json.loads(line)
            if zlib.crc32(canonical(obj["body"]).encode()) == obj["crc"]:
                return True
        except (ValueError, KeyError, TypeError):
            continue
    return False


def truncate(path, valid_bytes: int) -> None:
    """Drop a damaged tail so new records append after the valid prefix."""
    try:
        with open(path, "r+b") as fh:
            fh.truncate(valid_bytes)
    except FileNotFoundError:
        pass
    except OSError as exc:
        raise JournalIOError(f"cannot truncate journal {path}: {exc}") from exc
