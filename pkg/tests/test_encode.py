from ctlrepair import ctl
from ctlrepair import encode as enc_mod
from ctlrepair import frontend as fe
from ctlrepair import gwre as gw
from ctlrepair.datalog_engine import Atom


def encode(source: str, prop: str) -> enc_mod.EncodeResult:
    gwre_result = gw.cfg_to_gwre(fe.build_cfg(fe.parse(source)))
    phi = ctl.desugar(ctl.parse_ctl(prop))
    return enc_mod.abstract_facts(gwre_result, ctl.pure_of_ctl(phi))


def test_overview_state_facts(fixture_text):
    enc = encode(fixture_text("overview.imp"), "AF(y=5)")
    states = {f.args[0] for f in enc.facts if f.predicate == "State"}
    assert states == set(range(1, 13))
    assert enc.entry_state == 1


def test_overview_tracked_facts(fixture_text):
    enc = encode(fixture_text("overview.imp"), "AF(y=5)")
    facts = set(enc.facts)
    assert Atom("Eq", ("y", 5, 11)) in facts  # y = 5 after the loop
    assert Atom("Gt", ("i", 10, 2)) in facts  # i = * case-split
    assert Atom("LtEq", ("i", 10, 2)) in facts
    assert Atom("EqVar", ("x", "y", 3)) in facts  # x = * case-split
    assert Atom("NeqVar", ("x", "y", 3)) in facts
    # y = 5 never holds inside the stuck loop
    assert not any(f == Atom("Eq", ("y", 5, 12)) for f in facts)


def test_every_fact_belongs_to_a_family(fixture_text):
    enc = encode(fixture_text("overview.imp"), "AF(y=5)")
    for f in enc.facts:
        if f.predicate in ("State", "flow"):
            continue
        key = enc.fact_family[f]
        assert f in enc.families[key].members


def test_complement_pairs_are_symmetric(fixture_text):
    enc = encode(fixture_text("overview.imp"), "AF(y=5)")
    assert enc.pair_of, "case-split families must be paired"
    for a, b in enc.pair_of.items():
        assert enc.pair_of[b] == a
        assert a != b


def test_guarded_flow_rules(fixture_text):
    enc = encode(fixture_text("overview.imp"), "AF(y=5)")
    rendered = {str(r) for r in enc.rules}
    assert 'flow(3, 4) :- Gt("i", 10, 3).' in rendered
    assert 'flow(3, 6) :- LtEq("i", 10, 3).' in rendered
    assert 'flow(5, 8) :- EqVar("x", "y", 5).' in rendered
    assert 'flow(5, 7) :- NeqVar("x", "y", 5).' in rendered


def test_unconditional_flow_facts(fixture_text):
    enc = encode(fixture_text("overview.imp"), "AF(y=5)")
    flows = {f.args for f in enc.facts if f.predicate == "flow"}
    assert flows == {
        (1, 2),
        (2, 3),
        (4, 5),
        (7, 11),
        (8, 12),
        (9, 11),
        (10, 12),
        (11, 11),  # final states self-loop: the transition relation is total
        (12, 12),
    }


def test_infeasible_branch_is_pruned():
    enc = encode(
        """//@ ctl: AF(y=1)
void main() {
  int x = 1;
  int y = 0;
  if (x < 0) { y = 1; }
  return;
}
""",
        "AF(y=1)",
    )
    # the store x=1 contradicts the branch guard x<0: no y=1 fact anywhere
    assert not any(f.predicate == "Eq" and f.args[:2] == ("y", 1) for f in enc.facts)
