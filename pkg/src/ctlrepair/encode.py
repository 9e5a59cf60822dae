"""Encoding of guarded effects into Datalog facts and flow rules.

States of the effect become nodes of a transition relation ``flow``;
assignments drive a symbolic store whose entailed/undecided comparisons are
emitted as abstract facts at each state.  An undecided comparison emits both
itself and its complement (a closure pair), modeling the two futures of a
nondeterministic value.  Guards become conditional flow rules whose bodies
consult the facts of the predecessor state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import ctl as ctl_mod
from . import gwre as gw
from . import pure_logic as pl
from .datalog_engine import Atom, Literal, Rule


# ---------------------------------------------------------------------------
# Symbolic store
# ---------------------------------------------------------------------------


@dataclass
class SymStore:
    env: dict[str, pl.Term] = field(default_factory=dict)
    constraint: pl.Pure = pl.TRUE
    def_state: dict[str, int] = field(default_factory=dict)

    def copy(self) -> "SymStore":
        return SymStore(dict(self.env), self.constraint, dict(self.def_state))


def _atom_of(pi: pl.Pure, state) -> Atom | None:
    """The fact shape of one comparison, or None if not expressible."""
    try:
        return ctl_mod.pure_atom(pi, state)
    except (ValueError, ctl_mod.CtlSyntaxError):
        return None


@dataclass(frozen=True)
class FamilyKey:
    predicate: str
    args: tuple
    def_states: tuple[int, ...]


@dataclass
class Family:
    key: FamilyKey
    pure: pl.Pure  # the comparison this family abstracts
    var: str | None  # primary (left) variable, if any
    members: list[Atom] = field(default_factory=list)

    @property
    def def_state(self) -> int:
        return self.key.def_states[0] if self.key.def_states else -1


@dataclass
class EncodeResult:
    facts: list[Atom]
    rules: list[Rule]
    states: list[int]
    families: dict[FamilyKey, Family]
    fact_family: dict[Atom, FamilyKey]
    pair_of: dict[FamilyKey, FamilyKey]
    entry_state: int


class _Encoder:
    def __init__(self, atoms: list[pl.Pure]):
        self.atoms = atoms  # atomic comparisons worth tracking
        self.facts: list[Atom] = []
        self.fact_set: set[Atom] = set()
        self.rules: list[Rule] = []
        self.rule_set: set[Rule] = set()
        self.states: list[int] = []
        self.families: dict[FamilyKey, Family] = {}
        self.fact_family: dict[Atom, FamilyKey] = {}
        self.pair_of: dict[FamilyKey, FamilyKey] = {}
        self.sym_counter = [0]
        self.visited: set[tuple] = set()

    # -- bookkeeping ----------------------------------------------------------

    def note_state(self, s: int) -> None:
        if s not in self.states:
            self.states.append(s)

    def add_fact(self, fact: Atom) -> None:
        if fact not in self.fact_set:
            self.fact_set.add(fact)
            self.facts.append(fact)

    def add_rule(self, rule: Rule) -> None:
        if rule not in self.rule_set:
            self.rule_set.add(rule)
            self.rules.append(rule)

    def add_flow(self, a: int, b: int) -> None:
        self.add_fact(Atom("flow", (a, b)))

    def fresh_symbol(self) -> pl.Term:
        self.sym_counter[0] += 1
        return pl.Var(f"${self.sym_counter[0]}")

    # -- store transitions ------------------------------------------------------

    def apply_event(self, ev: gw.Ev, store: SymStore) -> SymStore:
        out = store.copy()
        for v, t in ev.assigns:
            rhs = pl.subst_term(t, out.env)
            rhs = self._dewildcard(rhs)
            out.env[v] = rhs
            out.def_state[v] = ev.s
        if not isinstance(ev.constraint, pl.TrueP):
            pi = pl.subst_pure(ev.constraint, out.env)
            out.constraint = pl.mk_and(out.constraint, pi)
        return out

    def apply_guard(self, g: gw.Guard, store: SymStore) -> SymStore:
        out = store.copy()
        known = {
            conj
            for conj in pl.conjuncts(g.pi)
            if pl.pure_vars(conj) <= set(out.env)
        }
        pi = pl.TRUE
        for conj in known:
            pi = pl.mk_and(pi, conj)
        out.constraint = pl.mk_and(out.constraint, pl.subst_pure(pi, out.env))
        return out

    def _dewildcard(self, t: pl.Term) -> pl.Term:
        if isinstance(t, pl.Wildcard):
            return self.fresh_symbol()
        if isinstance(t, pl.Add):
            return pl.Add(self._dewildcard(t.left), self._dewildcard(t.right))
        if isinstance(t, pl.Sub):
            return pl.Sub(self._dewildcard(t.left), self._dewildcard(t.right))
        if isinstance(t, pl.Neg):
            return pl.Neg(self._dewildcard(t.operand))
        return t

    # -- fact emission ----------------------------------------------------------

    def emit(self, s: int, store: SymStore, rels: tuple[pl.Rel, ...] = ()) -> None:
        self.note_state(s)
        if not pl.satisfiable(store.constraint):
            return
        for rel in rels:
            self.add_fact(Atom(rel.name, (s,)))
        for pi in self.atoms:
            if not pl.pure_vars(pi) <= set(store.env):
                continue
            atom = _atom_of(pi, s)
            if atom is None:
                continue
            grounded = pl.subst_pure(pi, store.env)
            if pl.entails(store.constraint, grounded):
                self.record(pi, atom, store, pair=None)
                continue
            try:
                neg = pl.negate(pi)
            except pl.NonNegatableGuard:
                continue
            if pl.entails(store.constraint, pl.subst_pure(neg, store.env)):
                continue
            neg_atom = _atom_of(neg, s)
            self.record(pi, atom, store, pair=None)
            if neg_atom is not None:
                self.record(neg, neg_atom, store, pair=pi)

    def record(self, pi: pl.Pure, atom: Atom, store: SymStore, pair: pl.Pure | None) -> None:
        self.add_fact(atom)
        key = self.family_key(atom, store)
        if key not in self.families:
            var = next((a for a in atom.args[:-1] if isinstance(a, str)), None)
            self.families[key] = Family(key, pi, var)
        fam = self.families[key]
        if atom not in fam.members:
            fam.members.append(atom)
        self.fact_family[atom] = key
        if pair is not None:
            pair_atom = _atom_of(pair, atom.args[-1])
            if pair_atom is not None:
                pair_key = self.family_key(pair_atom, store)
                if pair_key in self.families:
                    self.pair_of[key] = pair_key
                    self.pair_of[pair_key] = key

    def family_key(self, atom: Atom, store: SymStore) -> FamilyKey:
        var_args = [a for a in atom.args[:-1] if isinstance(a, str)]
        return FamilyKey(
            atom.predicate,
            atom.args[:-1],
            tuple(store.def_state.get(v, -1) for v in var_args),
        )

    # -- guard rules --------------------------------------------------------------

    def guard_rule(self, prev: int, s: int, pi: pl.Pure) -> None:
        if prev < 0:
            return
        body: list[Literal] = []
        for conj in pl.conjuncts(pi):
            atom = _atom_of(conj, prev)
            if atom is not None:
                body.append(Literal(atom))
        if not body:
            self.add_flow(prev, s)
        else:
            self.add_rule(Rule(Atom("flow", (prev, s)), tuple(body)))

    # -- traversal ----------------------------------------------------------------

    def walk(self, phi: gw.Re, prev: int, store: SymStore) -> None:
        key = (phi, prev, self._store_sig(store))
        if key in self.visited:
            return
        self.visited.add(key)
        if gw.nullable(phi) and prev >= 0:
            self.add_flow(prev, prev)
        for f in gw.first(phi):
            if isinstance(f, gw.Ev):
                store2 = self.apply_event(f, store)
                if prev >= 0:
                    self.add_flow(prev, f.s)
                self.emit(f.s, store2, f.rels)
                self.walk(gw.derivative(f, phi), f.s, store2)
            elif isinstance(f, gw.Guard):
                store2 = self.apply_guard(f, store)
                self.guard_rule(prev, f.s, f.pi)
                self.emit(f.s, store2)
                self.walk(gw.derivative(f, phi), f.s, store2)
            elif isinstance(f, gw.Omega):
                self.walk_omega(f.body, prev, store)
            else:
                raise TypeError(f"unexpected first segment: {f!r}")

    def walk_omega(self, body: gw.Re, prev: int, store: SymStore) -> None:
        terminals: list[int] = []

        def inner(phi: gw.Re, prev_s: int, st: SymStore) -> None:
            if gw.nullable(phi) and prev_s >= 0 and prev_s not in terminals:
                terminals.append(prev_s)
            for f in gw.first(phi):
                if isinstance(f, gw.Ev):
                    st2 = self.apply_event(f, st)
                    if prev_s >= 0:
                        self.add_flow(prev_s, f.s)
                    self.emit(f.s, st2, f.rels)
                    inner(gw.derivative(f, phi), f.s, st2)
                elif isinstance(f, gw.Guard):
                    st2 = self.apply_guard(f, st)
                    self.guard_rule(prev_s, f.s, f.pi)
                    self.emit(f.s, st2)
                    inner(gw.derivative(f, phi), f.s, st2)
                else:
                    raise TypeError("nested omega blocks are not supported")

        inner(body, prev, store)
        heads = gw.first(body)
        for t in terminals:
            for h in heads:
                if isinstance(h, gw.Ev):
                    self.add_flow(t, h.s)
                elif isinstance(h, gw.Guard):
                    self.guard_rule(t, h.s, h.pi)

    @staticmethod
    def _store_sig(store: SymStore):
        return (
            tuple(sorted((v, str(t)) for v, t in store.env.items())),
            str(store.constraint),
            tuple(sorted(store.def_state.items())),
        )


def abstract_facts(
    result: gw.GwreResult, ctl_pures: list[pl.Pure]
) -> EncodeResult:
    """Encode an effect into facts, flow rules, and fact families.

    ``ctl_pures`` are the property's atomic payloads; together with the
    effect's own guard/constraint atoms they form the tracked comparison set.
    """
    atoms: list[pl.Pure] = []
    for pi in gw.pure_of_gwre(result.phi):
        if pi not in atoms:
            atoms.append(pi)
    for pure in ctl_pures:
        for conj in pl.conjuncts(pure):
            if isinstance(conj, pl.Bop) and conj not in atoms:
                atoms.append(conj)
    enc = _Encoder(atoms)
    enc.walk(result.phi, -1, SymStore())
    for s in enc.states:
        enc.add_fact(Atom("State", (s,)))
    return EncodeResult(
        facts=enc.facts,
        rules=enc.rules,
        states=enc.states,
        families=enc.families,
        fact_family=enc.fact_family,
        pair_of=enc.pair_of,
        entry_state=result.entry_state,
    )
