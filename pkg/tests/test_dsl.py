import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from dimflow.dims import is_closed, validate_space
from dimflow.dsl import (
    ancestor_matrix,
    diagnose,
    explain,
    format_pipeline,
    load,
    parse,
    tokenize,
)
from dimflow.errors import PipelineCheckError, PipelineSyntaxError
from dimflow.reference import pipeline_source

import oracles
from dsl_corpus import EXAMPLE_MATRIX, EXAMPLE_ORDER, GOLDEN, random_pipeline


def premises(source):
    diags, _ = diagnose(parse(source))
    return [d.premise for d in diags]


def test_reference_pipeline_parses_to_nine_tasks():
    assert len(parse(pipeline_source())) == 9


def test_reference_pipeline_is_accepted():
    ir = load(pipeline_source())
    assert ir.sigma["Relevance"] == {"p", "f", "s", "g"}
    assert ir.sigma["Row"] == {"p", "f"}
    assert ir.task("vlm_evaluate").concurrency == 64
    assert ir.task("collect_row").concurrency == 1


def test_example_matrix():
    ir = load(pipeline_source())
    got = ["".join("T" if v else "F" for v in row) for row in ancestor_matrix(ir.space, EXAMPLE_ORDER)]
    assert got == EXAMPLE_MATRIX


def test_minimal_pipeline():
    (d,) = parse("A<x> = seed();")
    assert d.frame == () and d.out_dims == ("x",) and d.concurrency == 1


def test_comments_and_wrapper():
    src = "# header\npipe = {\n  A<x> = seed();  # trailing\n  B = f(A) for x @ 3\n}\n"
    ir = load(src)
    assert [t.out_type for t in ir.tasks] == ["A", "B"]
    assert ir.tasks[1].concurrency == 3


@pytest.mark.parametrize(
    "src",
    [
        "A = f(B<> ) for;",
        "A = f(B) for x,;",
        "A = (B);",
        "A = f(B) @ 0;",
        "A = f(B) x;",
        "A = f(B)\nC = g();",
        "A = f($);",
    ],
)
def test_syntax_errors(src):
    with pytest.raises(PipelineSyntaxError) as err:
        parse(src)
    assert err.value.line >= 1 and err.value.col >= 1


def test_syntax_error_position_and_expected():
    with pytest.raises(PipelineSyntaxError) as err:
        parse("A = f(B)\n  for x y;")
    assert (err.value.line, err.value.col) == (2, 9)
    assert "';'" in err.value.expected


def test_keyword_is_not_an_identifier():
    with pytest.raises(PipelineSyntaxError):
        parse("for = f();")
    assert [t.kind for t in tokenize("for x")][:2] == ["kw", "ident"]


@pytest.mark.parametrize("premise", sorted(GOLDEN))
def test_golden_accept(premise):
    ok, _ = GOLDEN[premise]
    assert premises(ok) == []


@pytest.mark.parametrize("premise", sorted(GOLDEN))
def test_golden_reject(premise):
    _, bad = GOLDEN[premise]
    assert premises(bad) == [premise]


def test_check_error_carries_diagnostics():
    with pytest.raises(PipelineCheckError) as err:
        load("A = f(B);")
    (d,) = err.value.diagnostics
    assert d.task == "f" and d.span == (1, 7)
    assert json.loads(json.dumps(d.to_json()))["span"] == {"line": 1, "col": 7}


def test_extra_structural_premises():
    assert premises("A<x, y> = f();") == ["OutputArity"]
    assert premises("A = f(); B = g(A, A);") == ["DuplicateInputType"]
    assert premises("A<x> = s(); B = g(A) for x, x;") == ["DuplicateListedDimension"]
    assert premises("A<x> = s(); B<y> = t(A) for x; C = u(B<y, x>);") == ["AggregationOrderNotExtension"]


def test_later_tasks_still_checked_after_error():
    assert premises("A = f(); A = g(); B = h(Z);") == ["DuplicateOutputType", "UnknownInputType"]


def test_shared_function_names_get_distinct_ids():
    ir = load("A = f(); B = f();")
    assert [t.task_id for t in ir.tasks] == ["f->A", "f->B"]


def test_explain_single_task():
    text = explain(load("A<x> = seed();"))
    assert "x | F" in text


def test_explain_diamond():
    ir = load("A<x> = s(); B<y> = t(); C = u(A, B) for x, y;")
    assert ancestor_matrix(ir.space, ["x", "y"]) == [[False, False], [False, False]]
    assert "C: {x, y}" in explain(ir)


def test_reference_round_trip():
    ir = load(pipeline_source())
    again = load(format_pipeline(ir))
    assert again == ir
    assert again.fingerprint() == ir.fingerprint()


def well_formed(ir):
    validate_space(ir.space.dims, ir.space.order)
    for sig in ir.sigma.values():
        assert oracles.is_closed(ir.space, sig)
    for t in ir.tasks:
        assert oracles.is_closed(ir.space, set(t.frame))
        for ty, agg in t.inputs:
            assert oracles.is_closed(ir.space, ir.sigma[ty] - set(agg))
            assert is_closed(ir.space, ir.sigma[ty] - set(agg))


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 2**31))
def test_fuzzed_pipelines_are_well_formed(seed):
    src = random_pipeline(random.Random(seed))
    diags, ir = diagnose(parse(src))
    assert diags == [], (src, diags)
    well_formed(ir)
    assert load(format_pipeline(ir)) == ir


def mutate(rng, src):
    """Break one premise of an accepted pipeline; returns (premise, source)."""
    decls = [line for line in src.strip().splitlines()]
    kind = rng.choice(["DuplicateOutputType", "UnknownInputType", "DuplicateDimension", "ResidualNotInFrame"])
    if kind == "DuplicateOutputType":
        return kind, src + "T0 = again();\n"
    if kind == "UnknownInputType":
        return kind, src + "Zz = missing(Nope);\n"
    ir = load(src)
    if kind == "DuplicateDimension" and ir.dim_order:
        return kind, src + f"Zz<{ir.dim_order[0]}> = again();\n"
    wide = [ty for ty, sig in ir.sigma.items() if sig]
    if wide:
        return "ResidualNotInFrame", src + f"Zz = narrow({wide[0]});\n"
    return "DuplicateOutputType", "\n".join(decls + ["T0 = again();"])


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**31))
def test_single_mutation_flips_acceptance(seed):
    rng = random.Random(seed)
    src = random_pipeline(rng)
    premise, bad = mutate(rng, src)
    assert premises(bad) == [premise]
