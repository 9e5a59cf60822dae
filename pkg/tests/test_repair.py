import pytest

from ctlrepair import pure_logic as pl
from ctlrepair import repair as rp
from ctlrepair.datalog_engine import Atom


def test_verify_verdicts(fixture_text):
    assert rp.verify(fixture_text("overview.imp")) == "violated"
    assert rp.verify(fixture_text("overview_fixed.imp")) == "holds"
    assert rp.verify(fixture_text("unknown.imp")) == "unknown"


def test_property_flag_overrides_annotation(fixture_text):
    src = fixture_text("overview.imp")
    analysis = rp.analyze(src, "AF(y=1)")
    assert analysis.property_text == "AF(y=1)"
    assert analysis.holds  # y=1 is the very first statement


def test_property_missing(fixture_text):
    with pytest.raises(rp.PropertyMissing):
        rp.analyze(fixture_text("no_property.imp"))


def test_apply_edits_inserts_at_descending_offsets():
    source = "abcdef"
    edits = [
        rp.InsertAssign(var="x", value=1, after_state=0, offset=2, text="XX"),
        rp.InsertAssign(var="y", value=2, after_state=0, offset=4, text="YY"),
    ]
    assert rp.apply_edits(source, edits) == "abXXcdYYef"


def test_value_for_comparisons():
    assert rp._value_for(pl.Bop(pl.GTEQ, pl.Var("y"), pl.Const(1)), "y") == 1
    assert rp._value_for(pl.Bop(pl.LTEQ, pl.Var("y"), pl.Const(0)), "y") == 0
    assert rp._value_for(pl.Bop(pl.EQ, pl.Var("y"), pl.Const(5)), "y") == 5
    assert rp._value_for(pl.Bop(pl.GT, pl.Var("y"), pl.Const(3)), "y") == 4
    # the search prefers the smallest-magnitude satisfying value
    assert rp._value_for(pl.Bop(pl.LT, pl.Var("y"), pl.Const(3)), "y") == 0
    assert rp._value_for(pl.Bop(pl.EQ, pl.Var("y"), pl.Var("z")), "y") == "z"
    assert rp._value_for(pl.Bop(pl.GT, pl.Var("y"), pl.Var("z")), "y") is None


def test_rank_patches_orders_by_cost_then_latest_anchor():
    def patch(cost, anchor, tag):
        return rp.Patch(
            deltas=(rp.AddFact(Atom("Eq", ("y", 5, tag))),),
            edits=(),
            source="",
            cost=cost,
            iterations=1,
            anchor=anchor,
            template="add",
        )

    patches = [patch(2, 9, 1), patch(1, 3, 2), patch(1, 7, 3)]
    ranked = rp.rank_patches(patches)
    assert [p.cost for p in ranked] == [1, 1, 2]
    assert ranked[0].anchor == 7  # later anchors keep edits closest to the bug


def test_rank_patches_deterministic_under_input_order():
    def patch(cost, anchor, tag):
        return rp.Patch(
            deltas=(rp.AddFact(Atom("Eq", ("y", 5, tag))),),
            edits=(),
            source="",
            cost=cost,
            iterations=1,
            anchor=anchor,
            template="add",
        )

    patches = [patch(1, 4, i) for i in range(6)]
    a = rp.rank_patches(list(patches))
    b = rp.rank_patches(list(reversed(patches)))
    assert [p.to_json() for p in a] == [p.to_json() for p in b]


def test_repair_verified_program_short_circuits(fixture_text):
    result = rp.repair_loop(fixture_text("overview_fixed.imp"), rp.RepairConfig())
    assert result.verdict == "Verified"
    assert result.patches == []


def test_repair_unknown_program(fixture_text):
    result = rp.repair_loop(fixture_text("unknown.imp"), rp.RepairConfig())
    assert result.verdict == "Unknown"


def test_repair_unrepairable_program(fixture_text):
    result = rp.repair_loop(fixture_text("spin.imp"), rp.RepairConfig())
    assert result.verdict == "Unrepaired"
    assert result.patches == []


def test_every_patch_source_verifies(fixture_text):
    result = rp.repair_loop(fixture_text("overview.imp"), rp.RepairConfig())
    assert result.verdict == "Repaired"
    for patch in result.patches:
        assert rp.verify(patch.source, result.property_text) == "holds"


def test_patched_source_applies_reported_edits(fixture_text):
    src = fixture_text("overview.imp")
    result = rp.repair_loop(src, rp.RepairConfig())
    best = result.patches[0]
    assert rp.apply_edits(src, best.edits) == best.source


def test_template_order_restricts_search(fixture_text):
    result = rp.repair_loop(
        fixture_text("overview.imp"), rp.RepairConfig(template_order=("delete",))
    )
    for patch in result.patches:
        assert patch.template == "delete"
        assert all(isinstance(d, rp.DeleteFact) for d in patch.deltas)


def test_unknown_template_rejected(fixture_text):
    with pytest.raises(ValueError):
        rp.repair_loop(
            fixture_text("overview.imp"), rp.RepairConfig(template_order=("bogus",))
        )


def test_report_shape(fixture_text):
    result = rp.repair_loop(fixture_text("overview.imp"), rp.RepairConfig())
    report = result.to_json()
    assert set(report) == {"verdict", "property", "patches", "constraints", "timing"}
    for p in report["patches"]:
        assert set(p) == {"deltas", "source_edits", "cost", "iterations"}
    for template, runs in report["constraints"].items():
        assert template in rp.TEMPLATES
        for run in runs:
            for d in run["disjuncts"]:
                assert set(d) == {"alpha_bindings", "sign_true", "sign_false"}
