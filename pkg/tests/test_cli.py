import json
import shutil

import pytest

from ctlrepair import frontend as fe
from ctlrepair import repair as rp

from conftest import FIXTURES


def fix(name: str) -> str:
    return str(FIXTURES / name)


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def test_verify_holds_exit_zero(run_cli):
    code, out, _ = run_cli("verify", fix("overview_fixed.imp"))
    assert code == 0
    assert out.startswith("Verified")


def test_verify_violated_exit_one(run_cli):
    code, out, _ = run_cli("verify", fix("overview.imp"))
    assert code == 1
    assert out.startswith("Violated")


def test_verify_unknown_exit_two(run_cli):
    code, out, _ = run_cli("verify", fix("unknown.imp"))
    assert code == 2
    assert out.startswith("Unknown")


def test_verify_json_report(run_cli):
    code, out, _ = run_cli("verify", "--json", fix("overview.imp"))
    assert code == 1
    report = json.loads(out)
    assert report["verdict"] == "Violated"
    assert report["property"] == "AF(y=5)"


def test_verify_ctl_flag_overrides_annotation(run_cli):
    code, out, _ = run_cli("verify", "--ctl", "AF(y=1)", fix("overview.imp"))
    assert code == 0


def test_verify_bad_syntax_exit_three(run_cli):
    code, _, err = run_cli("verify", fix("bad_syntax.imp"))
    assert code == 3
    assert "error" in err.lower()


def test_verify_missing_property_exit_three(run_cli):
    code, _, err = run_cli("verify", fix("no_property.imp"))
    assert code == 3


def test_verify_missing_property_supplied_by_flag(run_cli):
    code, _, _ = run_cli("verify", "--ctl", "AF(Exit(_))", fix("no_property.imp"))
    assert code == 0


def test_verify_bad_property_exit_three(run_cli):
    code, _, _ = run_cli("verify", "--ctl", "AF(", fix("overview.imp"))
    assert code == 3


def test_missing_file_exit_three(run_cli):
    code, _, _ = run_cli("verify", "does-not-exist.imp")
    assert code == 3


def test_unknown_subcommand_exit_three(run_cli):
    code, _, _ = run_cli("frobnicate")
    assert code == 3


# ---------------------------------------------------------------------------
# repair
# ---------------------------------------------------------------------------


@pytest.fixture
def tmp_fixture(tmp_path):
    def copy(name: str) -> str:
        dest = tmp_path / name
        shutil.copy(FIXTURES / name, dest)
        return str(dest)

    return copy


def test_repair_writes_fixed_file(run_cli, tmp_fixture, tmp_path):
    target = tmp_fixture("overview.imp")
    code, out, _ = run_cli("repair", "--json", target)
    assert code == 0
    report = json.loads(out)
    assert report["verdict"] == "Repaired"
    fixed = tmp_path / "overview.fixed.imp"
    assert report["fixed_file"] == str(fixed)
    patched = fixed.read_text()
    fe.parse(patched)  # the patch is syntactically valid
    assert rp.verify(patched, report["property"]) == "holds"


def test_repair_verified_program_exits_zero_without_file(run_cli, tmp_fixture, tmp_path):
    code, out, _ = run_cli("repair", tmp_fixture("overview_fixed.imp"))
    assert code == 0
    assert out.startswith("Verified")
    assert not (tmp_path / "overview_fixed.fixed.imp").exists()


def test_repair_unrepaired_exit_one(run_cli, tmp_fixture):
    code, out, _ = run_cli("repair", tmp_fixture("spin.imp"))
    assert code == 1
    assert out.startswith("Unrepaired")


def test_repair_unknown_exit_two(run_cli, tmp_fixture):
    code, out, _ = run_cli("repair", tmp_fixture("unknown.imp"))
    assert code == 2


def test_repair_json_deterministic(run_cli, tmp_fixture):
    target = tmp_fixture("overview.imp")
    _, first, _ = run_cli("repair", "--json", "--seed", "0", target)
    _, second, _ = run_cli("repair", "--json", "--seed", "0", target)
    assert first == second  # byte-identical report for identical input + seed


def test_repair_rejects_bad_template_order(run_cli, tmp_fixture):
    code, _, err = run_cli(
        "repair", "--template-order", "bogus", tmp_fixture("overview.imp")
    )
    assert code == 3


def test_repair_depth_two_finds_multi_step_patch(run_cli, tmp_fixture):
    target = tmp_fixture("overview.imp")
    code, out, _ = run_cli("repair", "--json", "--depth", "2", target)
    assert code == 0
    report = json.loads(out)
    assert any(p["iterations"] > 1 for p in report["patches"])


# ---------------------------------------------------------------------------
# inspection commands
# ---------------------------------------------------------------------------


def test_dump_gwre(run_cli):
    code, out, _ = run_cli("dump-gwre", fix("overview.imp"))
    assert code == 0
    assert "(y=1)@1" in out
    assert "^w" in out


def test_dump_gwre_inconclusive_exit_two(run_cli):
    code, _, err = run_cli("dump-gwre", fix("unknown.imp"))
    assert code == 2
    assert "inconclusive" in err


def test_dump_datalog(run_cli):
    code, out, _ = run_cli("dump-datalog", fix("overview.imp"))
    assert code == 0
    assert 'flow(3, 4) :- Gt("i", 10, 3).' in out
    assert "State(1)." in out
    assert "AF_yEQ5" in out


def test_simulate(run_cli):
    code, out, _ = run_cli("simulate", "--seed", "1", "--fuel", "30", fix("overview.imp"))
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[-2].startswith("status: ")
    assert lines[-1].startswith("store: ")
    for line in lines[:-2]:
        state, _text = line.split("\t", 1)
        assert state.isdigit()


def test_simulate_deterministic(run_cli):
    _, a, _ = run_cli("simulate", "--seed", "7", fix("overview.imp"))
    _, b, _ = run_cli("simulate", "--seed", "7", fix("overview.imp"))
    assert a == b
