"""Branching-time property ASTs and their translation to Datalog queries.

The surface grammar supports AF/AG/EF/EG/AX/EX, AU(p)(q), EU(p)(q), `->`,
`&&`, `||`, `!`, arithmetic atoms such as `y=5` or `x>=y`, and relation
atoms such as `Exit()`.  Properties are desugared into an 8-construct core
(AP, Not, And, Or, EX, EF, AF, EU) which translates rule-by-rule into
stratified Datalog over a `flow` relation and abstract-state facts.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import pure_logic as pl
from .datalog_engine import Atom, DVar, Literal, Rule


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


class CtlFormula:
    __slots__ = ()


@dataclass(frozen=True)
class AP(CtlFormula):
    name: str
    pure: pl.Pure

    def __str__(self) -> str:
        return str(self.pure)


def _unary(symbol: str):
    @dataclass(frozen=True)
    class Node(CtlFormula):
        operand: CtlFormula

        def __str__(self) -> str:
            return f"{symbol}({self.operand})"

    Node.__name__ = Node.__qualname__ = symbol
    return Node


def _binary(symbol: str, infix: bool):
    @dataclass(frozen=True)
    class Node(CtlFormula):
        left: CtlFormula
        right: CtlFormula

        def __str__(self) -> str:
            if infix:
                return f"({self.left} {symbol} {self.right})"
            return f"{symbol}({self.left})({self.right})"

    Node.__name__ = Node.__qualname__ = symbol
    return Node


Not = _unary("!")
AX = _unary("AX")
EX = _unary("EX")
AF = _unary("AF")
EF = _unary("EF")
AG = _unary("AG")
EG = _unary("EG")
CAnd = _binary("&&", True)
COr = _binary("||", True)
Implies = _binary("->", True)
AU = _binary("AU", False)
EU = _binary("EU", False)

CORE = (AP, Not, CAnd, COr, EX, EF, AF, EU)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_CTL_TOKEN = re.compile(
    r"\s*(->|&&|\|\||>=|<=|!=|[!()=<>]|-?\d+|[A-Za-z_][A-Za-z0-9_]*)"
)

_OP_NAME = {"=": "EQ", ">": "GT", "<": "LT", ">=": "GTEQ", "<=": "LTEQ", "!=": "NEQ"}
_OP_PURE = {"=": pl.EQ, ">": pl.GT, "<": pl.LT, ">=": pl.GTEQ, "<=": pl.LTEQ, "!=": pl.NEQ}


class CtlSyntaxError(ValueError):
    pass


def ap_name(pi: pl.Pure) -> str:
    """Deterministic predicate name for an atomic proposition."""
    if isinstance(pi, pl.Rel):
        return pi.name
    if isinstance(pi, pl.Bop):
        op = {"Gt": "GT", "Lt": "LT", "GtEq": "GTEQ", "LtEq": "LTEQ", "Eq": "EQ", "Neq": "NEQ"}[pi.op]
        return f"{_name_part(pi.left)}{op}{_name_part(pi.right)}"
    if isinstance(pi, pl.And):
        return f"{ap_name(pi.left)}_AND_{ap_name(pi.right)}"
    raise CtlSyntaxError(f"cannot name atomic proposition {pi}")


def _name_part(t: pl.Term) -> str:
    if isinstance(t, pl.Var):
        return t.name
    if isinstance(t, pl.Const):
        return str(t.value) if t.value >= 0 else f"m{-t.value}"
    raise CtlSyntaxError(f"atomic propositions must compare variables/constants: {t}")


def parse_ctl(text: str) -> CtlFormula:
    """Parse a property; atoms are auto-named (e.g. yEQ5 for y=5)."""
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _CTL_TOKEN.match(text, pos)
        if not m:
            raise CtlSyntaxError(f"bad character in property at offset {pos}: {text[pos]!r}")
        tokens.append(m.group(1))
        pos = m.end()
    tokens.append("<eof>")
    i = [0]

    def peek() -> str:
        return tokens[i[0]]

    def take(expected: str | None = None) -> str:
        tok = tokens[i[0]]
        if expected is not None and tok != expected:
            raise CtlSyntaxError(f"expected {expected!r}, found {tok!r}")
        i[0] += 1
        return tok

    def parse_term() -> pl.Term:
        tok = take()
        if re.fullmatch(r"-?\d+", tok):
            return pl.Const(int(tok))
        if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", tok):
            return pl.Var(tok)
        raise CtlSyntaxError(f"expected a variable or constant, found {tok!r}")

    def parse_atom() -> CtlFormula:
        tok = peek()
        if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", tok) and tokens[i[0] + 1] == "(" and tok not in (
            "AF", "AG", "EF", "EG", "AX", "EX", "AU", "EU"
        ):
            # Relation atom such as Exit().
            name = take()
            take("(")
            # Wildcard arguments mean "any value" and are dropped: the
            # encoder emits relation events without value payloads.
            args: list[pl.Term] = []
            while peek() != ")":
                if peek() == "_":
                    take()
                else:
                    args.append(parse_term())
                if peek() == ",":
                    take()
            take(")")
            rel = pl.Rel(name, tuple(args))
            return AP(name, rel)
        left = parse_term()
        op = take()
        if op not in _OP_PURE:
            raise CtlSyntaxError(f"expected a comparison operator, found {op!r}")
        right = parse_term()
        pi = pl.Bop(_OP_PURE[op], left, right)
        return AP(ap_name(pi), pi)

    def parse_primary() -> CtlFormula:
        tok = peek()
        if tok == "(":
            take()
            out = parse_implies()
            take(")")
            return out
        if tok == "!":
            take()
            return Not(parse_primary())
        if tok in ("AF", "AG", "EF", "EG", "AX", "EX"):
            take()
            take("(")
            inner = parse_implies()
            take(")")
            ctor = {"AF": AF, "AG": AG, "EF": EF, "EG": EG, "AX": AX, "EX": EX}[tok]
            return ctor(inner)
        if tok in ("AU", "EU"):
            take()
            take("(")
            first = parse_implies()
            take(")")
            take("(")
            second = parse_implies()
            take(")")
            return (AU if tok == "AU" else EU)(first, second)
        return parse_atom()

    def parse_and() -> CtlFormula:
        out = parse_primary()
        while peek() == "&&":
            take()
            out = CAnd(out, parse_primary())
        return out

    def parse_or() -> CtlFormula:
        out = parse_and()
        while peek() == "||":
            take()
            out = COr(out, parse_and())
        return out

    def parse_implies() -> CtlFormula:
        out = parse_or()
        if peek() == "->":
            take()
            return Implies(out, parse_implies())
        return out

    result = parse_implies()
    if peek() != "<eof>":
        raise CtlSyntaxError(f"trailing tokens in property: {peek()!r}")
    return result


# ---------------------------------------------------------------------------
# Desugaring to the 8-construct core
# ---------------------------------------------------------------------------


def desugar(phi: CtlFormula) -> CtlFormula:
    """Rewrite into the core fragment: AP, Not, And, Or, EX, EF, AF, EU."""
    if isinstance(phi, AP):
        return phi
    if isinstance(phi, Not):
        return Not(desugar(phi.operand))
    if isinstance(phi, CAnd):
        return CAnd(desugar(phi.left), desugar(phi.right))
    if isinstance(phi, COr):
        return COr(desugar(phi.left), desugar(phi.right))
    if isinstance(phi, Implies):
        return COr(Not(desugar(phi.left)), desugar(phi.right))
    if isinstance(phi, (EX, EF, AF)):
        return type(phi)(desugar(phi.operand))
    if isinstance(phi, AX):
        return Not(EX(Not(desugar(phi.operand))))
    if isinstance(phi, EG):
        return Not(AF(Not(desugar(phi.operand))))
    if isinstance(phi, AG):
        return Not(EF(Not(desugar(phi.operand))))
    if isinstance(phi, EU):
        return EU(desugar(phi.left), desugar(phi.right))
    if isinstance(phi, AU):
        p = desugar(phi.left)
        q = desugar(phi.right)
        return CAnd(Not(EU(Not(q), CAnd(Not(p), Not(q)))), AF(q))
    raise TypeError(f"not a property AST node: {phi!r}")


def pure_of_ctl(phi: CtlFormula) -> list[pl.Pure]:
    """All atomic-proposition payloads, deduplicated, pre-order."""
    out: list[pl.Pure] = []

    def walk(node: CtlFormula) -> None:
        if isinstance(node, AP):
            if node.pure not in out:
                out.append(node.pure)
        elif isinstance(node, (Not, AX, EX, AF, EF, AG, EG)):
            walk(node.operand)
        else:
            walk(node.left)
            walk(node.right)

    walk(phi)
    return out


# ---------------------------------------------------------------------------
# Translation to Datalog
# ---------------------------------------------------------------------------

S = DVar("S")
S1 = DVar("S1")
S2 = DVar("S2")


def pure_to_body_atoms(pi: pl.Pure, state) -> list[Atom]:
    """Decompose a pure constraint into abstract-predicate body atoms.

    Conjunctions split into one atom per conjunct; each conjunct becomes the
    same fact shape the encoder emits (see encode module).
    """
    atoms: list[Atom] = []
    for conj in pl.conjuncts(pi):
        atoms.append(pure_atom(conj, state))
    return atoms


_OP_MIRROR = {
    pl.GT: pl.LT,
    pl.LT: pl.GT,
    pl.GTEQ: pl.LTEQ,
    pl.LTEQ: pl.GTEQ,
    pl.EQ: pl.EQ,
    pl.NEQ: pl.NEQ,
}


def _canonical_bop(pi: pl.Bop) -> pl.Bop:
    """Rewrite a comparison so a plain variable sits on the left.

    ``-y <= -5`` becomes ``y >= 5`` and ``5 < x`` becomes ``x > 5``.
    """
    left, right, op = pi.left, pi.right, pi.op
    if isinstance(left, pl.Neg) and isinstance(left.operand, pl.Var) and isinstance(right, pl.Const):
        left, right, op = left.operand, pl.Const(-right.value), _OP_MIRROR[op]
    elif isinstance(right, pl.Neg) and isinstance(right.operand, pl.Var) and isinstance(left, pl.Const):
        left, right, op = right.operand, pl.Const(-left.value), op
    if isinstance(left, pl.Const) and isinstance(right, pl.Var):
        left, right, op = right, left, _OP_MIRROR[op]
    return pl.Bop(op, left, right)


def pure_atom(pi: pl.Pure, state) -> Atom:
    """The Datalog atom standing for one comparison/relation at a state."""
    if isinstance(pi, pl.Rel):
        return Atom(pi.name, tuple(_value_of_term(a) for a in pi.args) + (state,))
    if isinstance(pi, pl.Bop):
        pi = _canonical_bop(pi)
        left = _value_of_term(pi.left)
        right = _value_of_term(pi.right)
        pred = pi.op
        if isinstance(pi.left, pl.Var) and isinstance(pi.right, pl.Var):
            pred += "Var"
        return Atom(pred, (left, right, state))
    raise ValueError(f"cannot encode constraint as a fact shape: {pi}")


def _value_of_term(t: pl.Term):
    if isinstance(t, pl.Var):
        return t.name
    if isinstance(t, pl.Const):
        return t.value
    raise ValueError(f"fact arguments must be variables or constants: {t}")


def ctl_to_datalog(phi: CtlFormula) -> tuple[str, list[Rule]]:
    """Translate a core-fragment property into stratified Datalog rules.

    Returns the top predicate name and the rule list.  Rules with a negative
    body literal carry the positive grounding atom State(S).
    """
    rules: list[Rule] = []
    names_used: set[str] = set()
    memo: dict[CtlFormula, str] = {}

    def fresh(base: str) -> str:
        name = base
        suffix = 2
        while name in names_used:
            name = f"{base}_{suffix}"
            suffix += 1
        names_used.add(name)
        return name

    def translate(node: CtlFormula) -> str:
        if node in memo:
            return memo[node]
        if isinstance(node, AP):
            name = fresh(node.name)
            body = tuple(Literal(a) for a in pure_to_body_atoms(node.pure, S))
            rules.append(Rule(Atom(name, (S,)), body))
        elif isinstance(node, Not):
            p = translate(node.operand)
            name = fresh(f"NOT_{p}")
            rules.append(
                Rule(
                    Atom(name, (S,)),
                    (Literal(Atom("State", (S,))), Literal(Atom(p, (S,)), positive=False)),
                )
            )
        elif isinstance(node, CAnd):
            p1, p2 = translate(node.left), translate(node.right)
            name = fresh(f"{p1}_AND_{p2}")
            rules.append(
                Rule(Atom(name, (S,)), (Literal(Atom(p1, (S,))), Literal(Atom(p2, (S,)))))
            )
        elif isinstance(node, COr):
            p1, p2 = translate(node.left), translate(node.right)
            name = fresh(f"{p1}_OR_{p2}")
            rules.append(Rule(Atom(name, (S,)), (Literal(Atom(p1, (S,))),)))
            rules.append(Rule(Atom(name, (S,)), (Literal(Atom(p2, (S,))),)))
        elif isinstance(node, EX):
            p = translate(node.operand)
            name = fresh(f"EX_{p}")
            rules.append(
                Rule(
                    Atom(name, (S,)),
                    (Literal(Atom("flow", (S, S1))), Literal(Atom(p, (S1,)))),
                )
            )
        elif isinstance(node, EF):
            p = translate(node.operand)
            name = fresh(f"EF_{p}")
            rules.append(Rule(Atom(name, (S,)), (Literal(Atom(p, (S,))),)))
            rules.append(
                Rule(
                    Atom(name, (S,)),
                    (Literal(Atom("flow", (S, S1))), Literal(Atom(name, (S1,)))),
                )
            )
        elif isinstance(node, AF):
            p = translate(node.operand)
            name = fresh(f"AF_{p}")
            aft = fresh(f"AFT_{p}")
            afs = fresh(f"AFS_{p}")
            # A lasso witness: a path avoiding p that closes a cycle, or
            # reaches such a cycle; its absence everywhere proves AF p.
            rules.append(
                Rule(
                    Atom(aft, (S, S1)),
                    (
                        Literal(Atom(p, (S,)), positive=False),
                        Literal(Atom("flow", (S, S1))),
                    ),
                )
            )
            rules.append(
                Rule(
                    Atom(aft, (S, S1)),
                    (
                        Literal(Atom(aft, (S, S2))),
                        Literal(Atom(p, (S2,)), positive=False),
                        Literal(Atom("flow", (S2, S1))),
                    ),
                )
            )
            rules.append(Rule(Atom(afs, (S,)), (Literal(Atom(aft, (S, S))),)))
            rules.append(
                Rule(
                    Atom(afs, (S,)),
                    (
                        Literal(Atom(p, (S,)), positive=False),
                        Literal(Atom("flow", (S, S1))),
                        Literal(Atom(afs, (S1,))),
                    ),
                )
            )
            rules.append(
                Rule(
                    Atom(name, (S,)),
                    (Literal(Atom("State", (S,))), Literal(Atom(afs, (S,)), positive=False)),
                )
            )
        elif isinstance(node, EU):
            p1, p2 = translate(node.left), translate(node.right)
            name = fresh(f"{p1}_EU_{p2}")
            rules.append(Rule(Atom(name, (S,)), (Literal(Atom(p2, (S,))),)))
            rules.append(
                Rule(
                    Atom(name, (S,)),
                    (
                        Literal(Atom(p1, (S,))),
                        Literal(Atom("flow", (S, S1))),
                        Literal(Atom(name, (S1,))),
                    ),
                )
            )
        else:
            raise TypeError(f"not in the core fragment: {node!r}")
        memo[node] = name
        return name

    top = translate(phi)
    return top, rules
