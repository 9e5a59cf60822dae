import random

import pytest

from ctlrepair import frontend as fe
from ctlrepair import pure_logic as pl

from conftest import FIXTURES

PARSEABLE = sorted(
    p.name for p in FIXTURES.glob("*.imp") if p.name != "bad_syntax.imp"
)


@pytest.mark.parametrize("name", PARSEABLE)
def test_pretty_print_round_trip(name, fixture_text):
    ast = fe.parse(fixture_text(name))
    printed = fe.pretty_print(ast)
    assert fe.ast_equal(ast, fe.parse(printed))


def test_property_annotation(fixture_text):
    assert fe.property_annotation(fixture_text("overview.imp")) == "AF(y=5)"
    assert fe.property_annotation(fixture_text("no_property.imp")) is None


def test_bad_syntax_raises(fixture_text):
    with pytest.raises(fe.ImpSyntaxError):
        fe.parse(fixture_text("bad_syntax.imp"))


def test_undeclared_variable_rejected():
    with pytest.raises(fe.ImpSyntaxError):
        fe.parse("void main() { x = 1; }")


def test_duplicate_procedure_or_missing_brace():
    with pytest.raises(fe.ImpSyntaxError):
        fe.parse("void main() { int x = 1; ")


@pytest.mark.parametrize("name", PARSEABLE)
def test_cfg_well_formed(name, fixture_text):
    program = fe.build_cfg(fe.parse(fixture_text(name)))
    for proc in program.procedures.values():
        assert isinstance(proc.nodes[proc.entry], fe.Start)
        for nid, succs in proc.trans.items():
            assert nid in proc.nodes
            for s in succs:
                assert s in proc.nodes
        # every while loop records a body insertion offset
        for join, offset in proc.loop_insert.items():
            assert isinstance(proc.nodes[join], fe.Join)
            assert 0 <= offset <= len(program.ast.source)


def test_run_cfg_computes_store():
    src = """//@ ctl: AF(Exit(_))
void main(int n) {
  int total = 0;
  while (n > 0) {
    total = total + n;
    n = n - 1;
  }
  return;
}
"""
    program = fe.build_cfg(fe.parse(src))
    status, _, store = fe.run_cfg(program, "main", {"n": 4}, random.Random(0))
    assert status == "return"
    assert store["total"] == 10
    assert store["n"] == 0


def test_run_cfg_watch_join_counts_iterations():
    src = """//@ ctl: AF(Exit(_))
void main(int n) {
  while (n > 0) {
    n = n - 1;
  }
  return;
}
"""
    program = fe.build_cfg(fe.parse(src))
    proc = program.procedures["main"]
    (join,) = [n for n, node in proc.nodes.items() if isinstance(node, fe.Join)]
    _, visits, _ = fe.run_cfg(program, "main", {"n": 7}, random.Random(0), watch_join=join)
    assert visits == 8  # 7 iterations plus the exiting guard check


def test_run_cfg_calls_and_return_value():
    src = """//@ ctl: AF(Exit(_))
int double(int v) {
  int r = v + v;
  return r;
}

void main(int a) {
  int b = double(a);
  return;
}
"""
    program = fe.build_cfg(fe.parse(src))
    status, _, store = fe.run_cfg(program, "main", {"a": 21}, random.Random(0))
    assert status == "return"
    assert store["b"] == 42


def test_spans_cover_statements(fixture_text):
    program = fe.build_cfg(fe.parse(fixture_text("overview.imp")))
    proc = program.procedures["main"]
    source = program.ast.source
    for span, _role in proc.spans.values():
        assert 0 <= span.start <= span.end <= len(source)
