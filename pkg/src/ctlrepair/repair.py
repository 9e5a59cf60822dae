"""Find-and-fix loop: fact-level repair templates and source-level patches.

A violated property is repaired by searching, symbolically, for small
changes to the abstract fact base — deleting a fact family, adding a fresh
fact, or updating an assignment's facts — that make the property's top
predicate derivable again.  Each fact-level change is mapped back to a
source edit, and every patch is verified end to end by re-analyzing the
edited program.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

from . import ctl as ctl_mod
from . import encode as enc_mod
from . import frontend as fe
from . import gwre as gw
from . import pure_logic as pl
from . import sedl
from .datalog_engine import Atom, DatalogProgram, DVar, evaluate, _match

log = logging.getLogger(__name__)

TEMPLATES = ("delete", "update", "add")

# fact predicates that stand for comparisons (and thus map back to source)
_COMPARISON_PREDS = {op + suffix for op in pl._OP_SYMBOL for suffix in ("", "Var")}


@dataclass
class RepairConfig:
    template_order: tuple[str, ...] = TEMPLATES
    alpha_budget: int = 64
    xi_budget: int = 16
    max_add: int = 2
    max_delete: int = 2
    depth: int = 1
    strategy: str = "depth-first"
    seed: int = 0


def _count(stats: dict | None, key: str, n: int = 1) -> None:
    if stats is not None:
        stats[key] = stats.get(key, 0) + n


# ---------------------------------------------------------------------------
# Whole-program analysis
# ---------------------------------------------------------------------------


class PropertyMissing(ValueError):
    """No property given: neither a --ctl flag nor a //@ ctl: annotation."""


@dataclass
class Analysis:
    source: str
    property_text: str
    ast: fe.ProgramAst
    cfg: fe.Program
    gwre: gw.GwreResult | None
    enc: enc_mod.EncodeResult | None
    top: str
    rules: list
    holds: bool
    unknown: str | None
    idb: set


def analyze(source: str, ctl_text: str | None = None, stats: dict | None = None) -> Analysis:
    """Parse, summarize, encode, and evaluate one program end to end."""
    _count(stats, "analyses")
    ast = fe.parse(source)
    text = ctl_text or ast.ctl
    if text is None:
        raise PropertyMissing(
            "no property: pass --ctl or add a first-line //@ ctl: annotation"
        )
    phi = ctl_mod.desugar(ctl_mod.parse_ctl(text))
    cfg = fe.build_cfg(ast)
    try:
        gwre_result = gw.cfg_to_gwre(cfg)
    except gw.SummaryInconclusive as exc:
        return Analysis(source, text, ast, cfg, None, None, "", [], False, str(exc), set())
    enc = enc_mod.abstract_facts(gwre_result, ctl_mod.pure_of_ctl(phi))
    top, ctl_rules = ctl_mod.ctl_to_datalog(phi)
    rules = list(enc.rules) + list(ctl_rules)
    _count(stats, "evaluations")
    idb = evaluate(DatalogProgram(rules=rules, facts=list(enc.facts)))
    holds = Atom(top, (enc.entry_state,)) in idb
    return Analysis(source, text, ast, cfg, gwre_result, enc, top, rules, holds, None, idb)


def verify(source: str, ctl_text: str | None = None) -> str:
    """One of "holds", "violated", "unknown"."""
    analysis = analyze(source, ctl_text)
    if analysis.unknown:
        return "unknown"
    return "holds" if analysis.holds else "violated"


# ---------------------------------------------------------------------------
# Fact deltas and source edits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeleteFact:
    family: enc_mod.FamilyKey
    representative: Atom

    def to_json(self) -> dict:
        return {"op": "delete", "fact": str(self.representative)}


@dataclass(frozen=True)
class AddFact:
    atom: Atom

    def to_json(self) -> dict:
        return {"op": "add", "fact": str(self.atom)}


@dataclass(frozen=True)
class UpdateFact:
    old: Atom
    new: Atom
    family: enc_mod.FamilyKey

    def to_json(self) -> dict:
        return {"op": "update", "old": str(self.old), "new": str(self.new)}


@dataclass(frozen=True)
class InsertAssign:
    var: str
    value: object
    after_state: int
    offset: int
    text: str

    def to_json(self) -> dict:
        return {
            "kind": "insert-assign",
            "var": self.var,
            "value": self.value,
            "after_state": self.after_state,
            "offset": self.offset,
            "text": self.text,
        }

    def apply_range(self):
        return (self.offset, self.offset, self.text)


@dataclass(frozen=True)
class InsertEarlyExit:
    condition: str
    before_state: int
    offset: int
    text: str

    def to_json(self) -> dict:
        return {
            "kind": "insert-early-exit",
            "condition": self.condition,
            "before_state": self.before_state,
            "offset": self.offset,
            "text": self.text,
        }

    def apply_range(self):
        return (self.offset, self.offset, self.text)


@dataclass(frozen=True)
class ModifyAssign:
    state: int
    var: str
    value: object
    start: int
    end: int
    text: str

    def to_json(self) -> dict:
        return {
            "kind": "modify-assign",
            "state": self.state,
            "var": self.var,
            "value": self.value,
            "text": self.text,
        }

    def apply_range(self):
        return (self.start, self.end, self.text)


def apply_edits(source: str, edits) -> str:
    ranges = sorted((e.apply_range() for e in edits), key=lambda r: r[0], reverse=True)
    out = source
    for start, end, text in ranges:
        out = out[:start] + text + out[end:]
    return out


@dataclass
class Patch:
    deltas: tuple
    edits: tuple
    source: str  # fully patched source, end-to-end verified
    cost: int
    iterations: int
    anchor: int
    template: str

    def to_json(self) -> dict:
        return {
            "deltas": [d.to_json() for d in self.deltas],
            "source_edits": [e.to_json() for e in self.edits],
            "cost": self.cost,
            "iterations": self.iterations,
        }


def rank_patches(patches: list[Patch]) -> list[Patch]:
    """Cheapest first; ties prefer edits later in control flow, then a
    stable textual order."""
    return sorted(
        patches, key=lambda p: (p.cost, -p.anchor, str(p.to_json()))
    )


# ---------------------------------------------------------------------------
# Symbol injection
# ---------------------------------------------------------------------------


def _body_literals(rules) -> list[Atom]:
    return [lit.atom for r in rules for lit in r.body]


def _non_inert_families(enc: enc_mod.EncodeResult, rules) -> list[enc_mod.Family]:
    """Families whose facts some rule actually consults."""
    body = _body_literals(rules)
    out = []
    for fam in enc.families.values():
        hit = False
        for member in fam.members:
            for lit in body:
                if lit.predicate == member.predicate and len(lit.args) == len(member.args):
                    if _match(lit, member, {}) is not None:
                        hit = True
                        break
            if hit:
                break
        if hit:
            out.append(fam)
    return out


def _xi_families(enc, rules, template: str) -> list[enc_mod.Family]:
    fams = _non_inert_families(enc, rules)
    if template == "delete":
        # only facts modeling a nondeterministic value carry a sign: these
        # are exactly the families emitted as undecided closure pairs
        return [f for f in fams if f.key in enc.pair_of]
    if template == "update":
        return fams
    return []  # add: no signs on existing facts


def _alpha_shapes(enc, rules) -> list[tuple[str, int]]:
    """Injectable fact shapes: comparison predicates consulted by rules."""
    heads = {r.head.predicate for r in rules}
    shapes: list[tuple[str, int]] = []
    for lit in _body_literals(rules):
        p = lit.predicate
        if p in heads or p in ("flow", "State") or p not in _COMPARISON_PREDS:
            continue
        shape = (p, len(lit.args))
        if shape not in shapes:
            shapes.append(shape)
    return shapes


def inject_symbols(
    enc: enc_mod.EncodeResult,
    rules,
    template: str,
    shape: tuple[str, int] | None,
) -> tuple[sedl.SymbolicEdb, dict[str, enc_mod.Family]]:
    """Mark the template's facts with signs and inject one symbolic fact."""
    fams = _xi_families(enc, rules, template)
    xi_of_key = {fam.key: f"xi{i + 1}" for i, fam in enumerate(fams)}
    fam_of_xi = {f"xi{i + 1}": fam for i, fam in enumerate(fams)}
    facts = [
        sedl.SymbolicFact(f, xi_of_key.get(enc.fact_family.get(f)))
        for f in enc.facts
    ]
    if shape is not None:
        pred, arity = shape
        alpha_args = tuple(sedl.Alpha(f"alpha{i + 1}") for i in range(arity))
        facts.append(sedl.SymbolicFact(Atom(pred, alpha_args), "xiA"))
    return sedl.SymbolicEdb(facts), fam_of_xi


# ---------------------------------------------------------------------------
# Valuation and sign-world candidates
# ---------------------------------------------------------------------------


def _alpha_valuations(shape, analysis, budget: int) -> list[sedl.Valuation]:
    """Instantiations worth trying: unify the injected fact against every
    rule literal of its shape, filling variable positions from the constants
    known to interact there."""
    pred, arity = shape
    concrete = sedl.SymbolicEdb([sedl.SymbolicFact(f) for f in analysis.enc.facts])
    dep = sedl.compute_depend(analysis.rules, concrete)
    consts_at: dict[tuple[str, int], list] = {}
    for (p, i, c) in dep:
        if not sedl.is_placeholder(c):
            consts_at.setdefault((p, i), []).append(c)
    vals: list[sedl.Valuation] = []
    seen = set()

    def push(args: tuple) -> None:
        key = tuple(args)
        if key in seen or len(vals) >= budget:
            return
        seen.add(key)
        vals.append(
            sedl.Valuation(tuple((f"alpha{i + 1}", a) for i, a in enumerate(args)), ())
        )

    for lit in _body_literals(analysis.rules):
        if lit.predicate != pred or len(lit.args) != arity:
            continue
        domains = []
        for i, a in enumerate(lit.args):
            if isinstance(a, DVar):
                domains.append(sorted(set(consts_at.get((pred, i), [])), key=repr))
            else:
                domains.append([a])
        for combo in itertools.product(*domains):
            push(combo)
    push(tuple(sedl.placeholder(i + 1) for i in range(arity)))
    return vals


def _candidate_worlds(k_fams: int, has_alpha: bool, max_delete: int) -> list[int]:
    """Sign worlds honoring the edit budget: at most ``max_delete`` family
    signs false, the injected fact's sign free."""
    total = k_fams + (1 if has_alpha else 0)
    full = (1 << total) - 1
    worlds = set()
    for r in range(min(max_delete, k_fams) + 1):
        for false_set in itertools.combinations(range(k_fams), r):
            w = full
            for b in false_set:
                w &= ~(1 << b)
            if has_alpha:
                worlds.add(w & ~(1 << k_fams))
                worlds.add(w)
            else:
                worlds.add(w)
    return sorted(worlds)


# ---------------------------------------------------------------------------
# Patch generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Candidate:
    deletes: tuple  # Family objects
    adds: tuple  # Atom objects, already re-anchored where applicable
    template: str


def _fact_var(atom: Atom) -> str | None:
    return atom.args[0] if atom.args and isinstance(atom.args[0], str) else None


def _fam_representative(fam: enc_mod.Family) -> Atom:
    for m in fam.members:
        if m.args[-1] == fam.def_state:
            return m
    return fam.members[0]


def _pure_of_fact(atom: Atom) -> pl.Pure | None:
    pred = atom.predicate
    if pred.endswith("Var"):
        op = pred[:-3]
        if op not in pl._OP_SYMBOL:
            return None
        return pl.Bop(op, pl.Var(atom.args[0]), pl.Var(atom.args[1]))
    if pred not in pl._OP_SYMBOL:
        return None
    left = pl.Var(atom.args[0]) if isinstance(atom.args[0], str) else pl.Const(atom.args[0])
    right = pl.Var(atom.args[1]) if isinstance(atom.args[1], str) else pl.Const(atom.args[1])
    return pl.Bop(pred, left, right)


_VALUE_SEARCH = [0] + [s * i for i in range(1, 11) for s in (1, -1)]


def _value_for(pure: pl.Pure, var: str) -> object | None:
    """A small right-hand side making the comparison true."""
    names = pl.pure_vars(pure)
    others = names - {var}
    if others:
        # variable-to-variable comparison: only equality is expressible
        if isinstance(pure, pl.Bop) and pure.op == pl.EQ and len(others) == 1:
            return next(iter(others))
        return None
    for v in _VALUE_SEARCH:
        if pl.eval_pure(pure, {var: v}):
            return v
    return None


def run_template(analysis: Analysis, template: str, config: RepairConfig, stats=None):
    """All fact-level candidates one template proposes, plus its constraints."""
    enc = analysis.enc
    target = Atom(analysis.top, (enc.entry_state,))
    shapes = _alpha_shapes(enc, analysis.rules) if template in ("update", "add") else [None]
    candidates: list[_Candidate] = []
    run_reports = []
    for shape in shapes:
        edb, fam_of_xi = inject_symbols(enc, analysis.rules, template, shape)
        k_fams = len(fam_of_xi)
        worlds = _candidate_worlds(k_fams, shape is not None, config.max_delete)
        if shape is not None:
            valuations = _alpha_valuations(shape, analysis, config.alpha_budget)
        else:
            valuations = [sedl.Valuation((), ())]
        _count(stats, "sign_searches")
        try:
            psi = sedl.symbolic_execute(
                analysis.rules,
                edb,
                target,
                mode="enable",
                budget=config.xi_budget,
                valuations=valuations,
                candidate_worlds=worlds,
            )
        except sedl.SignBudgetExceeded as exc:
            log.warning("sign search skipped for template %s: %s", template, exc)
            continue
        report_disjuncts = []
        report_seen = set()
        for d in psi.disjuncts:
            cand = _disjunct_candidate(d, fam_of_xi, shape, enc, config, template)
            if cand is not None:
                candidates.append(cand)
            dj = d.to_json()
            if shape is not None and "xiA" in d.sign_false:
                dj["alpha_bindings"] = {}
            key = str(dj)
            if key not in report_seen and len(report_disjuncts) < 64:
                report_seen.add(key)
                report_disjuncts.append(dj)
        run_reports.append(
            {
                "shape": f"{shape[0]}/{shape[1]}" if shape else None,
                "xi": {
                    name: str(_fam_representative(fam))
                    for name, fam in fam_of_xi.items()
                },
                "disjuncts": report_disjuncts,
            }
        )
    return candidates, run_reports


def _disjunct_candidate(d, fam_of_xi, shape, enc, config, template) -> _Candidate | None:
    deletes = [fam_of_xi[n] for n in d.sign_false if n in fam_of_xi]
    if len(deletes) > config.max_delete:
        return None
    keys = {f.key for f in deletes}
    for f in deletes:
        if enc.pair_of.get(f.key) in keys:
            return None  # deleting both halves of a closure pair says nothing
    adds: list[Atom] = []
    if shape is not None and "xiA" in d.sign_true:
        args = []
        for i in range(shape[1]):
            v = d.alpha.get(f"alpha{i + 1}")
            if sedl.is_placeholder(v):
                v = d.bindings.get(v, v)
            args.append(v)
        if not any(sedl.is_placeholder(a) for a in args):
            adds.append(Atom(shape[0], tuple(args)))
    if len(adds) > config.max_add:
        return None
    # pair an added fact with a same-variable deletion: the addition then
    # describes the new fact of that assignment, anchored where the variable
    # is defined
    final_adds: list[Atom] = []
    for a in adds:
        var = _fact_var(a)
        fam = next((f for f in deletes if f.var == var and var), None)
        if fam is not None:
            final_adds.append(Atom(a.predicate, a.args[:-1] + (fam.def_state,)))
        else:
            final_adds.append(a)
    if not deletes and not final_adds:
        return None
    return _Candidate(tuple(deletes), tuple(final_adds), template)


# ---------------------------------------------------------------------------
# Source-edit synthesis
# ---------------------------------------------------------------------------


def _stmt_span(analysis: Analysis, state: int):
    origin = analysis.gwre.origins.get(state)
    if origin is None or origin.kind not in ("stmt", "return") or origin.node is None:
        return None
    proc = analysis.cfg.procedures.get(origin.proc)
    if proc is None or origin.node not in proc.spans:
        return None
    span, role = proc.spans[origin.node]
    return origin, proc, span, role


def _synthesize(analysis: Analysis, cand: _Candidate):
    """Source edits realizing a candidate, or None if inexpressible."""
    deltas: list = []
    edits: list = []
    anchor = 0
    add_list = list(cand.adds)
    plain_deletes: list[enc_mod.Family] = []
    for fam in cand.deletes:
        match = next((a for a in add_list if _fact_var(a) == fam.var and fam.var), None)
        if match is not None:
            add_list.remove(match)
            edit = _modify_assign(analysis, fam, match)
            if edit is None:
                return None
            edits.append(edit)
            deltas.append(UpdateFact(_fam_representative(fam), match, fam.key))
            anchor = max(anchor, fam.def_state)
        else:
            plain_deletes.append(fam)
    if plain_deletes:
        exit_edit, exit_anchor = _early_exit(analysis, plain_deletes) or (None, 0)
        if exit_edit is None:
            return None
        edits.append(exit_edit)
        deltas.extend(DeleteFact(f.key, _fam_representative(f)) for f in plain_deletes)
        anchor = max(anchor, exit_anchor)
    for a in add_list:
        edit = _insert_assign(analysis, a)
        if edit is None:
            return None
        edits.append(edit)
        deltas.append(AddFact(a))
        anchor = max(anchor, a.args[-1] if isinstance(a.args[-1], int) else 0)
    if not edits:
        return None
    return tuple(deltas), tuple(edits), anchor


def _modify_assign(analysis: Analysis, fam: enc_mod.Family, new_atom: Atom):
    info = _stmt_span(analysis, fam.def_state)
    if info is None:
        return None
    origin, proc, span, role = info
    node = proc.nodes.get(origin.node)
    var = fam.var
    if isinstance(node, fe.Assign):
        if node.x != var:
            return None
    elif isinstance(node, fe.Call):
        if node.r != var:
            return None
    else:
        return None
    pure = _pure_of_fact(new_atom)
    if pure is None:
        return None
    value = _value_for(pure, var)
    if value is None:
        return None
    stmt_text = analysis.source[span.start : span.end]
    prefix = "int " if stmt_text.lstrip().startswith("int ") else ""
    text = f"{prefix}{var} = {value};"
    return ModifyAssign(fam.def_state, var, value, span.start, span.end, text)


def _insert_assign(analysis: Analysis, atom: Atom):
    state = atom.args[-1]
    if not isinstance(state, int):
        return None
    var = _fact_var(atom)
    pure = _pure_of_fact(atom)
    if var is None or pure is None:
        return None
    value = _value_for(pure, var)
    if value is None:
        return None
    origin = analysis.gwre.origins.get(state)
    if origin is None:
        return None
    proc = analysis.cfg.procedures.get(origin.proc)
    if proc is None:
        return None
    if origin.kind == "return" and origin.node in proc.spans:
        span, _ = proc.spans[origin.node]
        return InsertAssign(var, value, state, span.start, f"{var} = {value}; ")
    if origin.kind in ("loop-event", "exit-event") and origin.join is not None:
        offset = proc.loop_insert.get(origin.join)
        if offset is None:
            return None
        return InsertAssign(var, value, state, offset, f"{var} = {value}; ")
    if origin.kind == "stmt" and origin.node in proc.spans:
        span, _ = proc.spans[origin.node]
        return InsertAssign(var, value, state, span.end, f" {var} = {value};")
    return None


def _early_exit(analysis: Analysis, fams: list[enc_mod.Family]):
    anchor_state = -1
    for fam in fams:
        for s in fam.key.def_states:
            anchor_state = max(anchor_state, s)
    info = _stmt_span(analysis, anchor_state)
    if info is None or info[0].kind != "stmt":
        return None
    origin, proc, span, role = info
    conds = []
    for fam in fams:
        cond = fe._pp_cond(fam.pure)
        if cond not in conds:
            conds.append(cond)
    condition = " || ".join(conds)
    text = f" if ({condition}) {{ return; }}"
    return InsertEarlyExit(condition, anchor_state, span.end, text), anchor_state


# ---------------------------------------------------------------------------
# Replay check and the repair loop
# ---------------------------------------------------------------------------


def _replay(analysis: Analysis, cand: _Candidate, stats=None) -> bool:
    del_keys = {f.key for f in cand.deletes}
    facts = [
        f
        for f in analysis.enc.facts
        if analysis.enc.fact_family.get(f) not in del_keys
    ]
    for a in cand.adds:
        if a not in facts:
            facts.append(a)
    _count(stats, "evaluations")
    idb = evaluate(DatalogProgram(rules=list(analysis.rules), facts=facts))
    return Atom(analysis.top, (analysis.enc.entry_state,)) in idb


@dataclass
class RepairResult:
    verdict: str  # Verified | Repaired | Unrepaired | Unknown
    property_text: str
    patches: list[Patch] = field(default_factory=list)
    constraints: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    analysis: Analysis | None = None

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "property": self.property_text,
            "patches": [p.to_json() for p in self.patches],
            "constraints": self.constraints,
            "timing": {k: self.stats[k] for k in sorted(self.stats)},
        }


_MAX_RECURSED = 6
_MAX_PATCHES = 10


def repair_loop(source: str, config: RepairConfig, ctl_text: str | None = None) -> RepairResult:
    stats: dict = {}
    analysis = analyze(source, ctl_text, stats)
    if analysis.unknown:
        return RepairResult("Unknown", analysis.property_text, stats=stats, analysis=analysis)
    if analysis.holds:
        return RepairResult("Verified", analysis.property_text, stats=stats, analysis=analysis)
    patches, constraints = _search(analysis, config, config.depth, stats, collect=True)
    verdict = "Repaired" if patches else "Unrepaired"
    return RepairResult(
        verdict,
        analysis.property_text,
        rank_patches(patches),
        constraints,
        stats,
        analysis,
    )


def _estimated_cost(cand: _Candidate) -> int:
    """Delta count after delete/add pairs merge into single updates."""
    adds = list(cand.adds)
    for fam in cand.deletes:
        match = next((a for a in adds if _fact_var(a) == fam.var and fam.var), None)
        if match is not None:
            adds.remove(match)
    return len(cand.deletes) + len(adds)


def _search(analysis: Analysis, config: RepairConfig, depth: int, stats, collect: bool):
    candidates: list[_Candidate] = []
    constraints: dict = {}
    seen = set()
    for template in config.template_order:
        if template not in TEMPLATES:
            raise ValueError(f"unknown template {template!r}")
        _count(stats, "templates")
        cands, reports = run_template(analysis, template, config, stats)
        if collect:
            constraints[template] = reports
        for c in cands:
            key = (frozenset(f.key for f in c.deletes), frozenset(c.adds))
            if key not in seen:
                seen.add(key)
                candidates.append(c)
    order = {t: i for i, t in enumerate(config.template_order)}
    candidates.sort(
        key=lambda c: (
            _estimated_cost(c),
            order[c.template],
            repr((tuple(str(f.key) for f in c.deletes), tuple(map(str, c.adds)))),
        )
    )
    patches: list[Patch] = []
    recursed = 0
    for cand in candidates:
        if len(patches) >= _MAX_PATCHES:
            break
        if not _replay(analysis, cand, stats):
            continue
        syn = _synthesize(analysis, cand)
        if syn is None:
            continue
        deltas, edits, anchor = syn
        new_source = apply_edits(analysis.source, edits)
        try:
            sub_analysis = analyze(new_source, analysis.property_text, stats)
        except (fe.ImpSyntaxError, gw.UnsupportedProgram):
            continue
        cost = len(deltas)
        if sub_analysis.unknown:
            continue
        if sub_analysis.holds:
            patches.append(
                Patch(deltas, edits, new_source, cost, 1, anchor, cand.template)
            )
        elif depth > 1 and recursed < _MAX_RECURSED:
            recursed += 1
            sub_patches, _ = _search(sub_analysis, config, depth - 1, stats, collect=False)
            if sub_patches:
                best = rank_patches(sub_patches)[0]
                patches.append(
                    Patch(
                        deltas + best.deltas,
                        edits + best.edits,
                        best.source,
                        cost + best.cost,
                        1 + best.iterations,
                        anchor,
                        cand.template,
                    )
                )
    return patches, constraints
