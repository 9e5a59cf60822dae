"""Stratified Datalog with negation.

A deliberately small engine: tagged constants (strings and integers), no
arithmetic in rule bodies, no existential heads, no aggregation.  Programs
are stratified by SCC condensation of the predicate dependency graph
(recursion through negation is rejected), then evaluated stratum by stratum
with a semi-naive fixpoint.  Iteration is insertion-ordered throughout so
dumps and query results are deterministic.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence


# ---------------------------------------------------------------------------
# Syntax
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DVar:
    """A rule variable (atom arguments are DVar | str-constant | int)."""

    name: str

    def __str__(self) -> str:
        return self.name


Value = "DVar | str | int"


@dataclass(frozen=True)
class Atom:
    predicate: str
    args: tuple = ()

    def __str__(self) -> str:
        return f"{self.predicate}({', '.join(_arg_str(a) for a in self.args)})"

    def is_ground(self) -> bool:
        return not any(isinstance(a, DVar) for a in self.args)


@dataclass(frozen=True)
class Literal:
    atom: Atom
    positive: bool = True

    def __str__(self) -> str:
        return str(self.atom) if self.positive else f"!{self.atom}"


@dataclass(frozen=True)
class Rule:
    head: Atom
    body: tuple[Literal, ...]

    def __str__(self) -> str:
        if not self.body:
            return f"{self.head}."
        return f"{self.head} :- {', '.join(map(str, self.body))}."


def _arg_str(a) -> str:
    if isinstance(a, DVar):
        return a.name
    if isinstance(a, str):
        return f'"{a}"'
    return str(a)


class DatalogError(ValueError):
    pass


@dataclass
class DatalogProgram:
    rules: list[Rule] = field(default_factory=list)
    facts: list[Atom] = field(default_factory=list)

    def validate(self) -> None:
        """Enforce range restriction / safety and ground facts."""
        for fact in self.facts:
            if not fact.is_ground():
                raise DatalogError(f"non-ground fact: {fact}")
        for rule in self.rules:
            positive_vars: set[str] = set()
            for lit in rule.body:
                if lit.positive:
                    positive_vars |= {a.name for a in lit.atom.args if isinstance(a, DVar)}
            for a in rule.head.args:
                if isinstance(a, DVar) and a.name not in positive_vars:
                    raise DatalogError(f"unsafe head variable {a.name} in rule: {rule}")
            for lit in rule.body:
                if not lit.positive:
                    for a in lit.atom.args:
                        if isinstance(a, DVar) and a.name not in positive_vars:
                            raise DatalogError(
                                f"unsafe variable {a.name} in negative literal of: {rule}"
                            )

    def dump(self) -> str:
        """Text form: one clause per line, facts after rules."""
        lines = [str(r) for r in self.rules]
        lines += [f"{f}." for f in self.facts]
        return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r'\s*(:-|[(),.!]|"[^"]*"|-?\d+|[A-Za-z_][A-Za-z0-9_]*)')


def _tokenize(text: str) -> list[str]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        if text.startswith("%", pos):  # comment to end of line
            nl = text.find("\n", pos)
            pos = len(text) if nl < 0 else nl + 1
            continue
        m = _TOKEN.match(text, pos)
        if not m:
            raise DatalogError(f"bad character at offset {pos}: {text[pos]!r}")
        tokens.append(m.group(1))
        pos = m.end()
    return tokens


def parse_program(text: str) -> DatalogProgram:
    """Parse the engine's text dump format back into a program."""
    tokens = _tokenize(text)
    i = 0

    def peek() -> str:
        if i >= len(tokens):
            raise DatalogError("unexpected end of input")
        return tokens[i]

    def parse_atom():
        nonlocal i
        name = tokens[i]
        i += 1
        args = []
        if i < len(tokens) and tokens[i] == "(":
            i += 1
            while peek() != ")":
                tok = peek()
                if tok.startswith('"'):
                    args.append(tok[1:-1])
                elif re.fullmatch(r"-?\d+", tok):
                    args.append(int(tok))
                else:
                    args.append(DVar(tok))
                i += 1
                if peek() == ",":
                    i += 1
            i += 1
        return Atom(name, tuple(args))

    program = DatalogProgram()
    while i < len(tokens):
        head = parse_atom()
        if peek() == ".":
            i += 1
            if not head.is_ground():
                raise DatalogError(f"non-ground fact: {head}")
            program.facts.append(head)
            continue
        if peek() != ":-":
            raise DatalogError(f"expected ':-' or '.' after {head}")
        i += 1
        body = []
        while True:
            positive = True
            if peek() == "!":
                positive = False
                i += 1
            body.append(Literal(parse_atom(), positive))
            if peek() == ",":
                i += 1
                continue
            if peek() == ".":
                i += 1
                break
            raise DatalogError(f"expected ',' or '.' in rule body near token {peek()!r}")
        program.rules.append(Rule(head, tuple(body)))
    program.validate()
    return program


# ---------------------------------------------------------------------------
# Stratification
# ---------------------------------------------------------------------------


def stratify(program: DatalogProgram) -> list[list[str]]:
    """Order predicates into strata (lists of predicate names).

    Builds the predicate dependency graph, condenses SCCs, and rejects any
    SCC containing a negative edge (recursion through negation).
    """
    preds: list[str] = []
    seen: set[str] = set()

    def note(p: str) -> None:
        if p not in seen:
            seen.add(p)
            preds.append(p)

    edges: dict[str, list[tuple[str, bool]]] = {}
    for fact in program.facts:
        note(fact.predicate)
    for rule in program.rules:
        note(rule.head.predicate)
        for lit in rule.body:
            note(lit.atom.predicate)
            edges.setdefault(rule.head.predicate, []).append(
                (lit.atom.predicate, lit.positive)
            )

    # Tarjan SCC, iterative.
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: dict[str, bool] = {}
    stack: list[str] = []
    sccs: list[list[str]] = []
    counter = [0]

    def strongconnect(root: str) -> None:
        work = [(root, 0)]
        while work:
            node, ei = work.pop()
            if ei == 0:
                index[node] = low[node] = counter[0]
                counter[0] += 1
                stack.append(node)
                on_stack[node] = True
            deps = edges.get(node, [])
            advanced = False
            for j in range(ei, len(deps)):
                target = deps[j][0]
                if target not in index:
                    work.append((node, j + 1))
                    work.append((target, 0))
                    advanced = True
                    break
                if on_stack.get(target):
                    low[node] = min(low[node], index[target])
            if advanced:
                continue
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == node:
                        break
                sccs.append(comp)

    for p in preds:
        if p not in index:
            strongconnect(p)

    comp_of = {p: ci for ci, comp in enumerate(sccs) for p in comp}
    for rule in program.rules:
        for lit in rule.body:
            if not lit.positive and comp_of[lit.atom.predicate] == comp_of[rule.head.predicate]:
                raise DatalogError(
                    "not stratifiable: negation cycle through "
                    f"{rule.head.predicate} and {lit.atom.predicate}"
                )

    # Tarjan emits SCCs in reverse topological order (dependencies first).
    return [sorted(comp) for comp in sccs]


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _match(atom: Atom, fact: Atom, env: dict[str, object]) -> dict[str, object] | None:
    if atom.predicate != fact.predicate or len(atom.args) != len(fact.args):
        return None
    out = env
    for pat, val in zip(atom.args, fact.args):
        if isinstance(pat, DVar):
            bound = out.get(pat.name, _UNSET)
            if bound is _UNSET:
                if out is env:
                    out = dict(env)
                out[pat.name] = val
            elif bound != val or type(bound) is not type(val):
                return None
        elif pat != val or type(pat) is not type(val):
            return None
    return out


_UNSET = object()


def _instantiate(atom: Atom, env: dict[str, object]) -> Atom:
    return Atom(
        atom.predicate,
        tuple(env[a.name] if isinstance(a, DVar) else a for a in atom.args),
    )


class _Database:
    """Insertion-ordered fact storage grouped by predicate."""

    def __init__(self) -> None:
        self.by_pred: dict[str, list[Atom]] = {}
        self.all: set[Atom] = set()

    def add(self, fact: Atom) -> bool:
        if fact in self.all:
            return False
        self.all.add(fact)
        self.by_pred.setdefault(fact.predicate, []).append(fact)
        return True

    def facts(self, predicate: str) -> list[Atom]:
        return self.by_pred.get(predicate, [])


def _join(
    body: Sequence[Literal],
    db: _Database,
    env: dict[str, object],
    idx: int,
    delta_at: int,
    delta: set[Atom],
) -> Iterable[dict[str, object]]:
    """Enumerate environments satisfying body[idx:]; body[delta_at] must
    match a delta fact (semi-naive restriction); -1 disables it."""
    if idx == len(body):
        yield env
        return
    lit = body[idx]
    if lit.positive:
        for fact in db.facts(lit.atom.predicate):
            if idx == delta_at and fact not in delta:
                continue
            new_env = _match(lit.atom, fact, env)
            if new_env is not None:
                yield from _join(body, db, new_env, idx + 1, delta_at, delta)
    else:
        ground = _instantiate(lit.atom, env)
        if ground not in db.all:
            yield from _join(body, db, env, idx + 1, delta_at, delta)


def _ordered_body(body: tuple[Literal, ...]) -> tuple[Literal, ...]:
    """Positive literals first so negatives are ground when checked."""
    return tuple(l for l in body if l.positive) + tuple(l for l in body if not l.positive)


def evaluate(program: DatalogProgram) -> set[Atom]:
    """All ground atoms derivable from the program (EDB plus IDB)."""
    program.validate()
    strata = stratify(program)
    stratum_of = {p: i for i, comp in enumerate(strata) for p in comp}
    program = DatalogProgram(
        rules=[Rule(r.head, _ordered_body(r.body)) for r in program.rules],
        facts=program.facts,
    )

    db = _Database()
    for fact in program.facts:
        db.add(fact)

    for level, comp in enumerate(strata):
        rules = [r for r in program.rules if stratum_of[r.head.predicate] == level]
        if not rules:
            continue
        # Initial round: full join.
        delta = set()
        for rule in rules:
            for env in _join(rule.body, db, {}, 0, -1, delta):
                fact = _instantiate(rule.head, env)
                if db.add(fact):
                    delta.add(fact)
        # Semi-naive rounds: require one recursive literal to hit the delta.
        in_stratum = set(comp)
        while delta:
            new_delta: set[Atom] = set()
            for rule in rules:
                for pos in range(len(rule.body)):
                    lit = rule.body[pos]
                    if not lit.positive or lit.atom.predicate not in in_stratum:
                        continue
                    for env in _join(rule.body, db, {}, 0, pos, delta):
                        fact = _instantiate(rule.head, env)
                        if db.add(fact):
                            new_delta.add(fact)
            delta = new_delta
    return db.all


def query(program: DatalogProgram, goal: Atom, idb: set[Atom] | None = None) -> list[dict[str, object]]:
    """All substitutions grounding ``goal`` in the evaluated program."""
    if idb is None:
        idb = evaluate(program)
    results = []
    for fact in sorted(
        (f for f in idb if f.predicate == goal.predicate), key=lambda f: repr(f.args)
    ):
        env = _match(goal, fact, {})
        if env is not None:
            results.append(env)
    return results
