"""Pipeline language: tokenizer, parser, static checker, printer and explainer.

Surface form, one declaration per task::

    Out<d> = fn(In1<e1, e2>, In2) for d1, d2 @ 64;

The output dimension, the input aggregation lists, the ``for`` clause and the
``@ n`` concurrency suffix are optional. ``#`` starts a comment. The whole body
may be wrapped as ``name = { ... }``.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field

from .dims import DimensionSpace, is_closed, is_linear_extension, validate_space
from .errors import PipelineCheckError, PipelineSyntaxError

# -- tokens -------------------------------------------------------------------

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>#[^\n]*)"
    r"|(?P<int>[0-9]+)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<punct>[<>=(),;@{}])"
)


@dataclass(frozen=True)
class Token:
    kind: str  # "ident" | "int" | "kw" | punctuation literal | "eof"
    text: str
    line: int
    col: int


def tokenize(source: str) -> list[Token]:
    out = []
    line, col, pos = 1, 1, 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise PipelineSyntaxError(f"unexpected character {source[pos]!r}", line, col)
        kind = m.lastgroup
        text = m.group()
        if kind == "nl":
            line, col = line + 1, 1
        else:
            if kind == "ident" and text == "for":
                out.append(Token("kw", text, line, col))
            elif kind == "punct":
                out.append(Token(text, text, line, col))
            elif kind in ("ident", "int"):
                out.append(Token(kind, text, line, col))
            col += len(text)
        pos = m.end()
    out.append(Token("eof", "", line, col))
    return out


# -- declarations ---------------------------------------------------------------


@dataclass(frozen=True)
class InputDecl:
    type_name: str
    dims: tuple = ()
    span: tuple = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class TaskDecl:
    """One parsed declaration, before checking."""

    out_type: str
    out_dims: tuple
    fn_name: str
    inputs: tuple
    frame: tuple = ()
    concurrency: int = 1
    span: tuple = field(default=(0, 0), compare=False)


_DESCRIBE = {"ident": "identifier", "int": "integer", "kw": "'for'", "eof": "end of input"}


class _Parser:
    def __init__(self, source: str):
        self.toks = tokenize(source)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def fail(self, expected):
        t = self.tok
        got = _DESCRIBE.get(t.kind, repr(t.text)) if t.kind != "ident" else f"identifier {t.text!r}"
        raise PipelineSyntaxError(f"unexpected {got}", t.line, t.col, [_DESCRIBE.get(e, repr(e)) for e in expected])

    def expect(self, *kinds) -> Token:
        if self.tok.kind not in kinds:
            self.fail(kinds)
        t = self.tok
        self.i += 1
        return t

    def accept(self, kind) -> Token | None:
        if self.tok.kind == kind:
            t = self.tok
            self.i += 1
            return t
        return None

    def program(self) -> list[TaskDecl]:
        wrapped = self.tok.kind == "ident" and self.peek().kind == "=" and self.peek(2).kind == "{"
        if wrapped:
            self.i += 3
        decls = []
        end = "}" if wrapped else "eof"
        while self.tok.kind != end:
            decls.append(self.decl(end))
        self.expect(end)
        if wrapped:
            self.expect("eof")
        return decls

    def ident_list(self, closer: str | None = None) -> tuple:
        names = [self.expect("ident").text]
        while self.accept(","):
            names.append(self.expect("ident").text)
        if closer:
            self.expect(closer)
        return tuple(names)

    def decl(self, end: str) -> TaskDecl:
        start = self.expect("ident")
        out_dims: tuple = ()
        if self.accept("<"):
            out_dims = self.ident_list(">")
        self.expect("=")
        fn = self.expect("ident").text
        self.expect("(")
        inputs = []
        if self.tok.kind != ")":
            inputs.append(self.input())
            while self.accept(","):
                inputs.append(self.input())
        self.expect(")")
        expected = [";", "@", "kw"]
        frame: tuple = ()
        if self.accept("kw"):
            # a bare `for` spells out the empty frame
            frame = self.ident_list() if self.tok.kind == "ident" else ()
            expected = [";", "@", ","]
        concurrency = 1
        if self.accept("@"):
            n = self.expect("int")
            concurrency = int(n.text)
            if concurrency < 1:
                raise PipelineSyntaxError("concurrency must be at least 1", n.line, n.col)
            expected = [";"]
        # the last declaration may omit its terminator
        if not self.accept(";") and self.tok.kind != end:
            self.fail(expected)
        return TaskDecl(start.text, out_dims, fn, tuple(inputs), frame, concurrency, (start.line, start.col))

    def input(self) -> InputDecl:
        t = self.expect("ident")
        dims: tuple = ()
        if self.accept("<"):
            dims = self.ident_list(">")
        return InputDecl(t.text, dims, (t.line, t.col))


def parse(source: str) -> list[TaskDecl]:
    return _Parser(source).program()


# -- checking -------------------------------------------------------------------


@dataclass(frozen=True)
class TaskDef:
    """A checked task. `task_id` is the function name unless it is shared by several tasks."""

    task_id: str
    fn_name: str
    out_type: str
    out_dim: str | None
    inputs: tuple  # ((type_name, (dims...)), ...)
    frame: tuple
    concurrency: int = 1
    span: tuple = field(default=(0, 0), compare=False)

    @property
    def out_dims(self) -> tuple:
        return (self.out_dim,) if self.out_dim else ()


@dataclass(frozen=True)
class PipelineIR:
    tasks: tuple
    space: DimensionSpace
    sigma: dict = field(hash=False)
    dim_order: tuple = ()

    def task(self, task_id: str) -> TaskDef:
        for t in self.tasks:
            if t.task_id == task_id:
                return t
        raise KeyError(task_id)

    def producer(self, type_name: str) -> TaskDef:
        for t in self.tasks:
            if t.out_type == type_name:
                return t
        raise KeyError(type_name)

    def consumers(self, type_name: str) -> list[TaskDef]:
        return [t for t in self.tasks if any(ty == type_name for ty, _ in t.inputs)]

    def fingerprint(self) -> str:
        return hashlib.sha256(format_pipeline(self).encode()).hexdigest()


@dataclass(frozen=True)
class Diagnostic:
    task: str
    premise: str
    message: str
    span: tuple = (0, 0)

    def to_json(self) -> dict:
        return {"task": self.task, "premise": self.premise, "message": self.message,
                "span": {"line": self.span[0], "col": self.span[1]}}


PREMISES = (
    "FrameNotClosed",
    "UnknownInputType",
    "DuplicateOutputType",
    "DuplicateDimension",
    "AggregationNotInSignature",
    "ResidualNotInFrame",
    "ResidualNotClosed",
    "FrameNotCovered",
    # extra structural premises
    "OutputArity",
    "DuplicateInputType",
    "DuplicateListedDimension",
    "AggregationOrderNotExtension",
)


def diagnose(decls: list[TaskDecl]) -> tuple[list[Diagnostic], PipelineIR | None]:
    """Fold the typing rules over `decls`; return diagnostics and, if none, the IR."""
    dims: list[str] = []
    order: set = set()
    sigma: dict[str, frozenset] = {}
    diags: list[Diagnostic] = []
    tasks: list[TaskDef] = []
    fn_count: dict[str, int] = {}
    for t in decls:
        fn_count[t.fn_name] = fn_count.get(t.fn_name, 0) + 1

    for t in decls:
        name = t.fn_name if fn_count[t.fn_name] == 1 else f"{t.fn_name}->{t.out_type}"
        space = validate_space(dims, order)
        bad: list[Diagnostic] = []

        def say(premise: str, message: str, span=t.span):
            bad.append(Diagnostic(name, premise, message, span))

        if t.out_type in sigma:
            say("DuplicateOutputType", f"type {t.out_type!r} already has a producer")
        if len(t.out_dims) > 1:
            say("OutputArity", f"at most one output dimension is allowed, got {list(t.out_dims)}")
        for d in t.out_dims:
            if d in space.dims:
                say("DuplicateDimension", f"output dimension {d!r} is already declared")
        if len(set(t.frame)) != len(t.frame):
            say("DuplicateListedDimension", f"'for' clause repeats a dimension: {list(t.frame)}")

        seen_types = set()
        known_inputs = True
        covered: set = set()
        frame = frozenset(t.frame)
        for inp in t.inputs:
            if inp.type_name in seen_types:
                say("DuplicateInputType", f"input type {inp.type_name!r} appears twice", inp.span)
                continue
            seen_types.add(inp.type_name)
            if inp.type_name not in sigma:
                say("UnknownInputType", f"input type {inp.type_name!r} has no earlier producer", inp.span)
                known_inputs = False
                continue
            sig = sigma[inp.type_name]
            covered |= sig
            agg = frozenset(inp.dims)
            if len(agg) != len(inp.dims):
                say("DuplicateListedDimension", f"{inp.type_name}<...> repeats a dimension", inp.span)
                continue
            if not agg <= sig:
                say("AggregationNotInSignature",
                    f"{sorted(agg - sig)} not in the dimensions {sorted(sig)} of {inp.type_name!r}", inp.span)
                continue
            if not is_linear_extension(space.induced(agg), list(inp.dims)):
                say("AggregationOrderNotExtension",
                    f"{inp.type_name}<{', '.join(inp.dims)}> lists a dimension before one it depends on", inp.span)
            residual = sig - agg
            if not residual <= frame:
                say("ResidualNotInFrame",
                    f"{sorted(residual - frame)} of {inp.type_name!r} must be iterated in the 'for' clause", inp.span)
            elif not is_closed(space, residual):
                say("ResidualNotClosed",
                    f"residual {sorted(residual)} of {inp.type_name!r} is missing ancestors", inp.span)

        if known_inputs and not frame <= covered:
            say("FrameNotCovered", f"{sorted(frame - covered)} are not dimensions of any input")
        elif frame <= space.dims and not is_closed(space, frame):
            say("FrameNotClosed", f"frame {sorted(frame)} is missing ancestors")

        diags.extend(bad)
        # apply the rule even after errors so later tasks are judged on their own
        out_dim = t.out_dims[0] if len(t.out_dims) == 1 and t.out_dims[0] not in space.dims else None
        if out_dim:
            dims.append(out_dim)
            order |= {(f, out_dim) for f in frame if f in space.dims}
        if t.out_type not in sigma:
            sigma[t.out_type] = frozenset(f for f in frame if f in space.dims) | set(t.out_dims[:1] if out_dim else ())
        inputs = tuple((i.type_name, tuple(i.dims)) for i in t.inputs)
        tasks.append(TaskDef(name, t.fn_name, t.out_type, out_dim, inputs, tuple(t.frame), t.concurrency, t.span))

    if diags:
        return diags, None
    space = validate_space(dims, order)
    return [], PipelineIR(tuple(tasks), space, dict(sigma), tuple(dims))


def check(decls: list[TaskDecl]) -> PipelineIR:
    diags, ir = diagnose(decls)
    if diags:
        raise PipelineCheckError(diags)
    return ir


def load(source: str) -> PipelineIR:
    return check(parse(source))


def load_file(path) -> PipelineIR:
    with open(path, encoding="utf-8") as fh:
        return load(fh.read())


# -- printing -------------------------------------------------------------------


def _fmt_type(name: str, dims) -> str:
    return f"{name}<{', '.join(dims)}>" if dims else name


def format_decl(out_type, out_dims, fn_name, inputs, frame, concurrency) -> str:
    args = ", ".join(_fmt_type(ty, ds) for ty, ds in inputs)
    s = f"{_fmt_type(out_type, out_dims)} = {fn_name}({args})"
    if frame:
        s += " for " + ", ".join(frame)
    if concurrency != 1:
        s += f" @ {concurrency}"
    return s + ";"


def format_pipeline(ir: PipelineIR) -> str:
    lines = [format_decl(t.out_type, t.out_dims, t.fn_name, t.inputs, t.frame, t.concurrency) for t in ir.tasks]
    return "\n".join(lines) + "\n"


def ancestor_matrix(space: DimensionSpace, order) -> list[list[bool]]:
    """Row d, column e: True when d precedes e."""
    return [[space.precedes(d, e) for e in order] for d in order]


def explain(ir: PipelineIR, order=None) -> str:
    order = list(order or ir.dim_order)
    out = []
    if order:
        w = max(len(d) for d in order)
        out.append("dependency matrix (row precedes column)")
        out.append(" " * w + " | " + " ".join(d.rjust(w) for d in order))
        out.append("-" * (w + 3 + (w + 1) * len(order)))
        for d, row in zip(order, ancestor_matrix(ir.space, order)):
            out.append(d.rjust(w) + " | " + " ".join(("T" if v else "F").rjust(w) for v in row))
    else:
        out.append("no dimensions")
    out.append("")
    out.append("entity dimensions")
    pos = {d: i for i, d in enumerate(ir.dim_order)}
    for t in ir.tasks:
        sig = sorted(ir.sigma[t.out_type], key=pos.get)
        out.append(f"  {t.out_type}: {{{', '.join(sig)}}}")
    out.append("")
    out.append("tasks")
    for t in ir.tasks:
        ins = ", ".join(_fmt_type(ty, ds) for ty, ds in t.inputs) or "-"
        extra = f", emits {t.out_dim}" if t.out_dim else ""
        out.append(f"  {t.task_id}: reads {ins}; one job per {{{', '.join(t.frame)}}}{extra}; workers {t.concurrency}")
    return "\n".join(out) + "\n"


def diagnostics_json(diags: list[Diagnostic]) -> str:
    return json.dumps([d.to_json() for d in diags], indent=2)
