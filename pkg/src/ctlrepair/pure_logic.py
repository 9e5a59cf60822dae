"""Quantifier-free integer arithmetic: terms, pure constraints, entailment.

This module houses the constraint fragment shared by branch guards, atomic
propositions, and loop analysis:

* ``Term`` — linear integer terms with a nondeterministic wildcard;
* ``Pure`` — boolean combinations of comparisons and uninterpreted relations;
* ``negate`` / ``entails`` — guard complementation and a sound integer
  entailment check based on rational Fourier-Motzkin elimination with
  integer tightening of strict bounds;
* ``candidate_rfs`` — candidate ranking functions read off a loop guard;
* ``wp_delta`` — the per-iteration change of a ranking function across a
  loop body, split into a "strictly decreasing" and a "not decreasing"
  precondition.

Everything here is immutable and hash-based; integer semantics throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------


class Term:
    """Base class for integer terms."""

    __slots__ = ()


@dataclass(frozen=True)
class Var(Term):
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Const(Term):
    value: int

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class Wildcard(Term):
    """A nondeterministically chosen integer."""

    def __str__(self) -> str:
        return "*"


@dataclass(frozen=True)
class Add(Term):
    left: Term
    right: Term

    def __str__(self) -> str:
        return f"{self.left}+{self.right}"


@dataclass(frozen=True)
class Sub(Term):
    left: Term
    right: Term

    def __str__(self) -> str:
        r = str(self.right)
        if isinstance(self.right, (Add, Sub)):
            r = f"({r})"
        return f"{self.left}-{r}"


@dataclass(frozen=True)
class Neg(Term):
    operand: Term

    def __str__(self) -> str:
        s = str(self.operand)
        if isinstance(self.operand, (Add, Sub)):
            s = f"({s})"
        return f"-{s}"


def term_vars(t: Term) -> set[str]:
    """All variable names occurring in ``t``."""
    if isinstance(t, Var):
        return {t.name}
    if isinstance(t, (Const, Wildcard)):
        return set()
    if isinstance(t, (Add, Sub)):
        return term_vars(t.left) | term_vars(t.right)
    if isinstance(t, Neg):
        return term_vars(t.operand)
    raise TypeError(f"not a term: {t!r}")


def has_wildcard(t: Term) -> bool:
    if isinstance(t, Wildcard):
        return True
    if isinstance(t, (Add, Sub)):
        return has_wildcard(t.left) or has_wildcard(t.right)
    if isinstance(t, Neg):
        return has_wildcard(t.operand)
    return False


def subst_term(t: Term, env: dict[str, Term]) -> Term:
    """Simultaneously substitute variables in ``t`` by ``env``."""
    if isinstance(t, Var):
        return env.get(t.name, t)
    if isinstance(t, (Const, Wildcard)):
        return t
    if isinstance(t, Add):
        return Add(subst_term(t.left, env), subst_term(t.right, env))
    if isinstance(t, Sub):
        return Sub(subst_term(t.left, env), subst_term(t.right, env))
    if isinstance(t, Neg):
        return Neg(subst_term(t.operand, env))
    raise TypeError(f"not a term: {t!r}")


def eval_term(t: Term, store: dict[str, int]) -> int:
    """Evaluate a wildcard-free term under a concrete store."""
    if isinstance(t, Var):
        return store[t.name]
    if isinstance(t, Const):
        return t.value
    if isinstance(t, Add):
        return eval_term(t.left, store) + eval_term(t.right, store)
    if isinstance(t, Sub):
        return eval_term(t.left, store) - eval_term(t.right, store)
    if isinstance(t, Neg):
        return -eval_term(t.operand, store)
    raise ValueError(f"cannot evaluate {t!r}")


def linearize(t: Term) -> tuple[dict[str, int], int] | None:
    """Express ``t`` as a linear combination (coeffs, constant).

    Returns None if the term contains a wildcard.
    """
    if isinstance(t, Var):
        return {t.name: 1}, 0
    if isinstance(t, Const):
        return {}, t.value
    if isinstance(t, Wildcard):
        return None
    if isinstance(t, (Add, Sub)):
        lhs = linearize(t.left)
        rhs = linearize(t.right)
        if lhs is None or rhs is None:
            return None
        sign = 1 if isinstance(t, Add) else -1
        coeffs = dict(lhs[0])
        for v, c in rhs[0].items():
            coeffs[v] = coeffs.get(v, 0) + sign * c
            if coeffs[v] == 0:
                del coeffs[v]
        return coeffs, lhs[1] + sign * rhs[1]
    if isinstance(t, Neg):
        inner = linearize(t.operand)
        if inner is None:
            return None
        return {v: -c for v, c in inner[0].items()}, -inner[1]
    raise TypeError(f"not a term: {t!r}")


def term_of_linear(coeffs: dict[str, int], const: int) -> Term:
    """Rebuild a term from a linear form, in sorted-variable order."""
    t: Term | None = None

    def combine(acc: Term | None, piece: Term, negative: bool) -> Term:
        if acc is None:
            return Neg(piece) if negative else piece
        return Sub(acc, piece) if negative else Add(acc, piece)

    for v in sorted(coeffs):
        c = coeffs[v]
        piece: Term = Var(v)
        for _ in range(abs(c) - 1):
            piece = Add(piece, Var(v))
        t = combine(t, piece, c < 0)
    if const != 0 or t is None:
        t = combine(t, Const(abs(const)), const < 0)
    return t


# ---------------------------------------------------------------------------
# Pure constraints
# ---------------------------------------------------------------------------


GT, LT, GTEQ, LTEQ, EQ, NEQ = "Gt", "Lt", "GtEq", "LtEq", "Eq", "Neq"

_OP_SYMBOL = {GT: ">", LT: "<", GTEQ: ">=", LTEQ: "<=", EQ: "=", NEQ: "!="}
_OP_COMPLEMENT = {GT: LTEQ, LT: GTEQ, GTEQ: LT, LTEQ: GT, EQ: NEQ, NEQ: EQ}
_OP_EVAL = {
    GT: lambda a, b: a > b,
    LT: lambda a, b: a < b,
    GTEQ: lambda a, b: a >= b,
    LTEQ: lambda a, b: a <= b,
    EQ: lambda a, b: a == b,
    NEQ: lambda a, b: a != b,
}


class Pure:
    """Base class for pure constraints."""

    __slots__ = ()


@dataclass(frozen=True)
class TrueP(Pure):
    def __str__(self) -> str:
        return "T"


@dataclass(frozen=True)
class FalseP(Pure):
    def __str__(self) -> str:
        return "F"


@dataclass(frozen=True)
class Bop(Pure):
    op: str  # one of Gt/Lt/GtEq/LtEq/Eq/Neq
    left: Term
    right: Term

    def __str__(self) -> str:
        return f"{self.left}{_OP_SYMBOL[self.op]}{self.right}"


@dataclass(frozen=True)
class Rel(Pure):
    """An uninterpreted relation such as Exit() or a call event."""

    name: str
    args: tuple[Term, ...] = ()

    def __str__(self) -> str:
        return f"{self.name}({', '.join(map(str, self.args))})"


@dataclass(frozen=True)
class And(Pure):
    left: Pure
    right: Pure

    def __str__(self) -> str:
        return f"{self.left} /\\ {self.right}"


@dataclass(frozen=True)
class Or(Pure):
    left: Pure
    right: Pure

    def __str__(self) -> str:
        return f"({self.left} \\/ {self.right})"


TRUE = TrueP()
FALSE = FalseP()


def mk_and(a: Pure, b: Pure) -> Pure:
    if isinstance(a, FalseP) or isinstance(b, FalseP):
        return FALSE
    if isinstance(a, TrueP):
        return b
    if isinstance(b, TrueP):
        return a
    return And(a, b)


def mk_or(a: Pure, b: Pure) -> Pure:
    if isinstance(a, TrueP) or isinstance(b, TrueP):
        return TRUE
    if isinstance(a, FalseP):
        return b
    if isinstance(b, FalseP):
        return a
    return Or(a, b)


def conjuncts(pi: Pure) -> list[Pure]:
    """Flatten nested conjunctions into a list (T disappears)."""
    if isinstance(pi, And):
        return conjuncts(pi.left) + conjuncts(pi.right)
    if isinstance(pi, TrueP):
        return []
    return [pi]


def pure_vars(pi: Pure) -> set[str]:
    if isinstance(pi, (TrueP, FalseP)):
        return set()
    if isinstance(pi, Bop):
        return term_vars(pi.left) | term_vars(pi.right)
    if isinstance(pi, Rel):
        out: set[str] = set()
        for a in pi.args:
            out |= term_vars(a)
        return out
    if isinstance(pi, (And, Or)):
        return pure_vars(pi.left) | pure_vars(pi.right)
    raise TypeError(f"not a pure constraint: {pi!r}")


def pure_has_wildcard(pi: Pure) -> bool:
    if isinstance(pi, Bop):
        return has_wildcard(pi.left) or has_wildcard(pi.right)
    if isinstance(pi, Rel):
        return any(has_wildcard(a) for a in pi.args)
    if isinstance(pi, (And, Or)):
        return pure_has_wildcard(pi.left) or pure_has_wildcard(pi.right)
    return False


def subst_pure(pi: Pure, env: dict[str, Term]) -> Pure:
    if isinstance(pi, (TrueP, FalseP)):
        return pi
    if isinstance(pi, Bop):
        return Bop(pi.op, subst_term(pi.left, env), subst_term(pi.right, env))
    if isinstance(pi, Rel):
        return Rel(pi.name, tuple(subst_term(a, env) for a in pi.args))
    if isinstance(pi, And):
        return mk_and(subst_pure(pi.left, env), subst_pure(pi.right, env))
    if isinstance(pi, Or):
        return mk_or(subst_pure(pi.left, env), subst_pure(pi.right, env))
    raise TypeError(f"not a pure constraint: {pi!r}")


def eval_pure(pi: Pure, store: dict[str, int]) -> bool:
    """Evaluate a relation-free, wildcard-free constraint concretely."""
    if isinstance(pi, TrueP):
        return True
    if isinstance(pi, FalseP):
        return False
    if isinstance(pi, Bop):
        return _OP_EVAL[pi.op](eval_term(pi.left, store), eval_term(pi.right, store))
    if isinstance(pi, And):
        return eval_pure(pi.left, store) and eval_pure(pi.right, store)
    if isinstance(pi, Or):
        return eval_pure(pi.left, store) or eval_pure(pi.right, store)
    raise ValueError(f"cannot evaluate {pi!r} concretely")


class NonNegatableGuard(ValueError):
    """Raised when asked to complement an uninterpreted relation."""


def negate(pi: Pure) -> Pure:
    """Complement a relation-free constraint.

    Comparison operators flip to their integer complements; And/Or obey
    De Morgan.  Uninterpreted relations have no complement here.
    """
    if isinstance(pi, TrueP):
        return FALSE
    if isinstance(pi, FalseP):
        return TRUE
    if isinstance(pi, Bop):
        return Bop(_OP_COMPLEMENT[pi.op], pi.left, pi.right)
    if isinstance(pi, Rel):
        raise NonNegatableGuard(f"non-negatable guard: {pi}")
    if isinstance(pi, And):
        return mk_or(negate(pi.left), negate(pi.right))
    if isinstance(pi, Or):
        return mk_and(negate(pi.left), negate(pi.right))
    raise TypeError(f"not a pure constraint: {pi!r}")


def simplify(pi: Pure) -> Pure:
    """Constant-fold a constraint (variable-free comparisons become T/F)."""
    if isinstance(pi, Bop):
        lin_l = linearize(pi.left)
        lin_r = linearize(pi.right)
        if lin_l is not None and lin_r is not None:
            coeffs = dict(lin_l[0])
            for v, c in lin_r[0].items():
                coeffs[v] = coeffs.get(v, 0) - c
                if coeffs[v] == 0:
                    del coeffs[v]
            if not coeffs:
                return TRUE if _OP_EVAL[pi.op](lin_l[1], lin_r[1]) else FALSE
        return pi
    if isinstance(pi, And):
        return mk_and(simplify(pi.left), simplify(pi.right))
    if isinstance(pi, Or):
        return mk_or(simplify(pi.left), simplify(pi.right))
    return pi


# ---------------------------------------------------------------------------
# Entailment via Fourier-Motzkin
# ---------------------------------------------------------------------------

# A "row" is a linear inequality  sum(coeffs) + const >= 0  with Fraction
# coefficients; a "literal" during unsatisfiability checking is either a
# row-producing comparison or a signed uninterpreted relation.

_ROW_LIMIT = 5000


def _nnf(pi: Pure, positive: bool) -> Pure | tuple[str, Rel]:
    """Negation normal form allowing signed Rel leaves for entailment."""
    if isinstance(pi, TrueP):
        return TRUE if positive else FALSE
    if isinstance(pi, FalseP):
        return FALSE if positive else TRUE
    if isinstance(pi, Bop):
        return pi if positive else Bop(_OP_COMPLEMENT[pi.op], pi.left, pi.right)
    if isinstance(pi, Rel):
        return ("+", pi) if positive else ("-", pi)
    if isinstance(pi, And):
        l, r = _nnf(pi.left, positive), _nnf(pi.right, positive)
        return _mk_node(And if positive else Or, l, r)
    if isinstance(pi, Or):
        l, r = _nnf(pi.left, positive), _nnf(pi.right, positive)
        return _mk_node(Or if positive else And, l, r)
    raise TypeError(f"not a pure constraint: {pi!r}")


def _mk_node(ctor, l, r):
    # And/Or over possibly signed-Rel leaves: wrap leaves in a marker list.
    return (ctor, l, r)


def _dnf(node) -> list[list]:
    """DNF as a list of conjunctions of literals (Bop or signed Rel).

    Neq atoms split into strict < / > disjuncts.
    """
    if isinstance(node, tuple) and len(node) == 3 and node[0] in (And, Or):
        ctor, l, r = node
        ld, rd = _dnf(l), _dnf(r)
        if ctor is Or:
            return ld + rd
        return [a + b for a in ld for b in rd]
    if isinstance(node, TrueP):
        return [[]]
    if isinstance(node, FalseP):
        return []
    if isinstance(node, Bop) and node.op == NEQ:
        return [[Bop(LT, node.left, node.right)], [Bop(GT, node.left, node.right)]]
    return [[node]]


def _rows_of_bop(atom: Bop, wcounter: list[int]) -> list[tuple[dict[str, Fraction], Fraction]] | None:
    """Comparison -> rows of form coeffs·x + const >= 0 (integer tightened)."""

    def lin(t: Term) -> tuple[dict[str, int], int]:
        # Each wildcard occurrence becomes a fresh unconstrained variable.
        if isinstance(t, Wildcard):
            wcounter[0] += 1
            return {f"__w{wcounter[0]}": 1}, 0
        if isinstance(t, (Add, Sub)):
            lc, lk = lin(t.left)
            rc, rk = lin(t.right)
            sign = 1 if isinstance(t, Add) else -1
            out = dict(lc)
            for v, c in rc.items():
                out[v] = out.get(v, 0) + sign * c
            return out, lk + sign * rk
        if isinstance(t, Neg):
            c, k = lin(t.operand)
            return {v: -x for v, x in c.items()}, -k
        if isinstance(t, Var):
            return {t.name: 1}, 0
        if isinstance(t, Const):
            return {}, t.value
        raise TypeError(f"not a term: {t!r}")

    lc, lk = lin(atom.left)
    rc, rk = lin(atom.right)

    def diff(sign: int, tighten: int):
        coeffs = {}
        for v in set(lc) | set(rc):
            c = sign * (lc.get(v, 0) - rc.get(v, 0))
            if c:
                coeffs[v] = Fraction(c)
        return coeffs, Fraction(sign * (lk - rk) - tighten)

    if atom.op == GTEQ:
        return [diff(1, 0)]
    if atom.op == LTEQ:
        return [diff(-1, 0)]
    if atom.op == GT:
        return [diff(1, 1)]
    if atom.op == LT:
        return [diff(-1, 1)]
    if atom.op == EQ:
        return [diff(1, 0), diff(-1, 0)]
    raise ValueError(f"unexpected operator in row conversion: {atom.op}")


def _fm_unsat(rows: list[tuple[dict[str, Fraction], Fraction]]) -> bool:
    """Rational Fourier-Motzkin: True iff the row system has no solution."""
    rows = [r for r in rows]
    while True:
        pending = [r for r in rows if r[0]]
        if not pending:
            return any(const < 0 for _, const in rows)
        if any(not coeffs and const < 0 for coeffs, const in rows):
            return True
        var = sorted(pending[0][0])[0]
        pos = [r for r in rows if r[0].get(var, 0) > 0]
        neg = [r for r in rows if r[0].get(var, 0) < 0]
        rest = [r for r in rows if var not in r[0]]
        new_rows = list(rest)
        for pc, pk in pos:
            for nc, nk in neg:
                a = pc[var]
                b = -nc[var]
                coeffs: dict[str, Fraction] = {}
                for v in set(pc) | set(nc):
                    if v == var:
                        continue
                    c = b * pc.get(v, Fraction(0)) + a * nc.get(v, Fraction(0))
                    if c:
                        coeffs[v] = c
                new_rows.append((coeffs, b * pk + a * nk))
                if len(new_rows) > _ROW_LIMIT:
                    return False  # give up conservatively: treat as satisfiable
        rows = new_rows


def _conj_unsat(literals: list) -> bool:
    """Unsatisfiability of a conjunction of Bop atoms and signed Rels."""
    pos_rels = {lit[1] for lit in literals if isinstance(lit, tuple) and lit[0] == "+"}
    neg_rels = {lit[1] for lit in literals if isinstance(lit, tuple) and lit[0] == "-"}
    if pos_rels & neg_rels:
        return True
    rows: list[tuple[dict[str, Fraction], Fraction]] = []
    wcounter = [0]
    for lit in literals:
        if isinstance(lit, Bop):
            converted = _rows_of_bop(lit, wcounter)
            if converted is None:
                return False
            rows.extend(converted)
    return _fm_unsat(rows)


def satisfiable(pi: Pure) -> bool:
    """Sound-for-unsat satisfiability: False only if truly unsatisfiable."""
    for disjunct in _dnf(_nnf(pi, True)):
        if not _conj_unsat(disjunct):
            return True
    return False


def entails(state: Pure, goal: Pure) -> bool:
    """Sound integer entailment: True only if every model of state meets goal.

    Decided by checking that state conjoined with the complement of goal is
    rationally unsatisfiable (strict bounds tightened for integers before
    elimination).  Uninterpreted relations are matched syntactically.
    """
    state_d = _dnf(_nnf(state, True))
    goal_neg_d = _dnf(_nnf(goal, False))
    for sd in state_d:
        for gd in goal_neg_d:
            if not _conj_unsat(sd + gd):
                return False
    return True


# ---------------------------------------------------------------------------
# Candidate ranking functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RankingCandidate:
    """A candidate ranking function: a linear, wildcard-free term."""

    rf: Term

    def __str__(self) -> str:
        return str(self.rf)


def _normalized(t: Term) -> Term | None:
    lin = linearize(t)
    if lin is None:
        return None
    return term_of_linear(lin[0], lin[1])


def candidate_rfs(guard: Pure) -> list[RankingCandidate]:
    """Candidate ranking functions read off a guard's comparison atoms.

    Every candidate is nonnegative whenever the guard holds.  Deduplicated
    after linear normalization; iteration order follows the guard's atoms.
    """
    out: list[RankingCandidate] = []
    seen: set[Term] = set()

    def add(t: Term) -> None:
        norm = _normalized(t)
        if norm is not None and norm not in seen:
            seen.add(norm)
            out.append(RankingCandidate(norm))

    def walk(pi: Pure) -> None:
        if isinstance(pi, Bop):
            a, b = pi.left, pi.right
            if pi.op == GTEQ:
                add(Sub(a, b))
            elif pi.op == LTEQ:
                add(Sub(b, a))
            elif pi.op == GT:
                add(Sub(Sub(a, b), Const(1)))
            elif pi.op == LT:
                add(Sub(Sub(b, a), Const(1)))
            elif pi.op == EQ:
                add(Sub(a, b))
                add(Sub(b, a))
            elif pi.op == NEQ:
                add(Sub(Sub(a, b), Const(1)))
                add(Sub(Sub(b, a), Const(1)))
        elif isinstance(pi, And):
            walk(pi.left)
            walk(pi.right)
        # T, F, Rel, Or contribute nothing.

    walk(guard)
    return out


# ---------------------------------------------------------------------------
# Weakest-precondition delta of a ranking function across a cycle body
# ---------------------------------------------------------------------------


def branch_substitution(assignments: list[tuple[str, Term]]) -> dict[str, Term]:
    """Compose a sequence of assignments into one parallel substitution."""
    env: dict[str, Term] = {}
    for var, rhs in assignments:
        env = dict(env)
        env[var] = subst_term(rhs, env)
    return env


def scale_term(t: Term, k: int) -> Term | None:
    """``k * t`` for a linear wildcard-free term, or None if not linear."""
    lin = linearize(t)
    if lin is None:
        return None
    return term_of_linear({v: k * c for v, c in lin[0].items()}, k * lin[1])


def _delta_of_branch(rf: Term, assignments: list[tuple[str, Term]]):
    """Linear form of rf - rf' across one branch, or None if wildcarded."""
    env = branch_substitution(assignments)
    rf_after = subst_term(rf, env)
    before = linearize(rf)
    after = linearize(rf_after)
    if before is None or after is None:
        return None
    coeffs = dict(before[0])
    for v, c in after[0].items():
        coeffs[v] = coeffs.get(v, 0) - c
        if coeffs[v] == 0:
            del coeffs[v]
    return coeffs, before[1] - after[1]


def _linear_ge(coeffs: dict[str, int], const: int, bound: int) -> Pure:
    """The constraint  coeffs·x + const >= bound,  simplified."""
    if not coeffs:
        return TRUE if const >= bound else FALSE
    return Bop(GTEQ, term_of_linear(coeffs, 0), Const(bound - const))


def _linear_le(coeffs: dict[str, int], const: int, bound: int) -> Pure:
    if not coeffs:
        return TRUE if const <= bound else FALSE
    return Bop(LTEQ, term_of_linear(coeffs, 0), Const(bound - const))


def _implies(premise: Pure, conclusion: Pure) -> Pure:
    if isinstance(premise, TrueP):
        return conclusion
    if isinstance(premise, FalseP) or isinstance(conclusion, TrueP):
        return TRUE
    return mk_or(negate(premise), conclusion)


def wp_delta(
    rf: RankingCandidate,
    branches: Iterable[tuple[Pure, list[tuple[str, Term]]]],
) -> tuple[Pure, Pure]:
    """Split the change of ``rf`` across a cycle body into two preconditions.

    ``branches`` is the list of (branch guard, assignment sequence) pairs of
    the body's disjunctive branches, with the guard already expressed over
    the cycle-entry store.  Returns (pi_T, pi_NT) where pi_T guarantees the
    value of rf drops by at least 1 on every enabled branch, and pi_NT
    guarantees it fails to drop on every enabled branch while at least one
    branch is enabled.  If an enabled branch's change depends on a
    nondeterministic value, both results are F — the analysis is
    inconclusive for this candidate.
    """
    pi_t: Pure = TRUE
    pi_nt: Pure = TRUE
    any_enabled: Pure = FALSE
    for guard, assignments in branches:
        any_enabled = mk_or(any_enabled, guard)
        delta = _delta_of_branch(rf.rf, assignments)
        if delta is None:
            return FALSE, FALSE
        coeffs, const = delta
        pi_t = mk_and(pi_t, _implies(guard, _linear_ge(coeffs, const, 1)))
        pi_nt = mk_and(pi_nt, _implies(guard, _linear_le(coeffs, const, 0)))
    return pi_t, mk_and(pi_nt, any_enabled)


def models(pi: Pure, names: list[str], lo: int, hi: int) -> Iterator[dict[str, int]]:
    """Brute-force integer models of a relation-free constraint (test oracle)."""
    import itertools

    for values in itertools.product(range(lo, hi + 1), repeat=len(names)):
        store = dict(zip(names, values))
        if eval_pure(pi, store):
            yield store
