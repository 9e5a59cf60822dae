"""Guarded omega-regular effects: symbolic execution summaries of CFGs.

A program's behavior is abstracted as a guarded regular expression over
events (assignments / relation emissions) and guards (path conditions),
extended with an omega operator for infinite repetition.  Loops are
replaced by disjunctive summaries computed through ranking-function
analysis of the cycle body; inconclusive loops raise
``SummaryInconclusive`` so callers can report an unknown verdict.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace

from . import frontend as fe
from . import pure_logic as pl


class SummaryInconclusive(Exception):
    """A loop admitted no conclusive termination argument."""


class UnsupportedProgram(Exception):
    """Program shape outside the analyzable fragment (e.g. recursion)."""


# ---------------------------------------------------------------------------
# The effect language
# ---------------------------------------------------------------------------


class Re:
    __slots__ = ()


@dataclass(frozen=True)
class Bot(Re):
    def __str__(self) -> str:
        return "_|_"


@dataclass(frozen=True)
class Eps(Re):
    def __str__(self) -> str:
        return "e"


@dataclass(frozen=True)
class ContinueMark(Re):
    """Internal marker: the cycle body returned to its loop head."""

    def __str__(self) -> str:
        return "<loop>"


@dataclass(frozen=True)
class Ev(Re):
    """An event: sequential assignments, then a constraint, then relations."""

    s: int
    assigns: tuple[tuple[str, pl.Term], ...] = ()
    constraint: pl.Pure = pl.TRUE
    rels: tuple[pl.Rel, ...] = ()

    def __str__(self) -> str:
        parts = [f"{v}={t}" for v, t in self.assigns]
        if not isinstance(self.constraint, pl.TrueP):
            parts.append(str(self.constraint))
        parts.extend(str(r) for r in self.rels)
        return f"({', '.join(parts) if parts else 'T'})@{self.s}"


@dataclass(frozen=True)
class Guard(Re):
    pi: pl.Pure
    s: int

    def __str__(self) -> str:
        return f"[{self.pi}]@{self.s}"


@dataclass(frozen=True)
class Seq(Re):
    left: Re
    right: Re

    def __str__(self) -> str:
        return f"{_paren(self.left)}·{_paren(self.right)}"


@dataclass(frozen=True)
class OrRe(Re):
    left: Re
    right: Re

    def __str__(self) -> str:
        return f"{self.left} \\/ {self.right}"


@dataclass(frozen=True)
class Omega(Re):
    body: Re

    def __post_init__(self) -> None:
        if nullable(self.body):
            raise ValueError("omega body must not accept the empty trace")

    def __str__(self) -> str:
        return f"({self.body})^w"


BOT = Bot()
EPS = Eps()
CONTINUE = ContinueMark()


def _paren(re: Re) -> str:
    return f"({re})" if isinstance(re, OrRe) else str(re)


def seq(a: Re, b: Re) -> Re:
    if isinstance(a, Bot) or isinstance(b, Bot):
        return BOT
    if isinstance(a, Eps):
        return b
    if isinstance(b, Eps):
        return a
    return Seq(a, b)


def seq_list(items: list[Re]) -> Re:
    out: Re = EPS
    for item in reversed(items):
        out = seq(item, out)
    return out


def or_(a: Re, b: Re) -> Re:
    if isinstance(a, Bot):
        return b
    if isinstance(b, Bot):
        return a
    return OrRe(a, b)


def or_list(items: list[Re]) -> Re:
    out: Re = BOT
    for item in items:
        out = or_(out, item)
    return out


def dump_gwre(re: Re) -> str:
    return str(re)


# ---------------------------------------------------------------------------
# nullable / first / derivative
# ---------------------------------------------------------------------------


def nullable(re: Re) -> bool:
    if isinstance(re, (Eps, ContinueMark)):
        return True
    if isinstance(re, (Bot, Ev, Guard, Omega)):
        return False
    if isinstance(re, Seq):
        return nullable(re.left) and nullable(re.right)
    if isinstance(re, OrRe):
        return nullable(re.left) or nullable(re.right)
    raise TypeError(f"not an effect: {re!r}")


def first(re: Re) -> list[Re]:
    """Leading segments (events, guards, or omega blocks), deduplicated."""
    out: list[Re] = []

    def add(seg: Re) -> None:
        if seg not in out:
            out.append(seg)

    def walk(node: Re) -> None:
        if isinstance(node, (Bot, Eps, ContinueMark)):
            return
        if isinstance(node, (Ev, Guard, Omega)):
            add(node)
            return
        if isinstance(node, Seq):
            walk(node.left)
            if nullable(node.left):
                walk(node.right)
            return
        if isinstance(node, OrRe):
            walk(node.left)
            walk(node.right)
            return
        raise TypeError(f"not an effect: {node!r}")

    walk(re)
    return out


def derivative(seg: Re, re: Re) -> Re:
    """What remains of ``re`` after consuming the leading segment ``seg``."""
    if isinstance(re, (Bot, Eps, ContinueMark)):
        return BOT
    if isinstance(re, (Ev, Guard)):
        return EPS if re == seg else BOT
    if isinstance(re, Omega):
        return BOT  # an omega block, once entered, is never left
    if isinstance(re, Seq):
        out = seq(derivative(seg, re.left), re.right)
        if nullable(re.left):
            out = or_(out, derivative(seg, re.right))
        return out
    if isinstance(re, OrRe):
        return or_(derivative(seg, re.left), derivative(seg, re.right))
    raise TypeError(f"not an effect: {re!r}")


def states_of(re: Re) -> list[int]:
    """All state ids, in syntactic left-to-right order, deduplicated."""
    out: list[int] = []

    def walk(node: Re) -> None:
        if isinstance(node, (Ev, Guard)):
            if node.s not in out:
                out.append(node.s)
        elif isinstance(node, (Seq, OrRe)):
            walk(node.left)
            walk(node.right)
        elif isinstance(node, Omega):
            walk(node.body)

    walk(re)
    return out


def pure_of_gwre(re: Re) -> list[pl.Pure]:
    """Guard payloads and event constraints, flattened to atomic conjuncts."""
    out: list[pl.Pure] = []

    def add(pi: pl.Pure) -> None:
        for conj in pl.conjuncts(pi):
            if isinstance(conj, pl.Bop) and conj not in out:
                out.append(conj)

    def walk(node: Re) -> None:
        if isinstance(node, Guard):
            add(node.pi)
        elif isinstance(node, Ev):
            add(node.constraint)
        elif isinstance(node, (Seq, OrRe)):
            walk(node.left)
            walk(node.right)
        elif isinstance(node, Omega):
            walk(node.body)

    walk(re)
    return out


def _map_states(re: Re, mapping: dict[int, int]) -> Re:
    if isinstance(re, Ev):
        return replace(re, s=mapping.get(re.s, re.s))
    if isinstance(re, Guard):
        return replace(re, s=mapping.get(re.s, re.s))
    if isinstance(re, Seq):
        return Seq(_map_states(re.left, mapping), _map_states(re.right, mapping))
    if isinstance(re, OrRe):
        return OrRe(_map_states(re.left, mapping), _map_states(re.right, mapping))
    if isinstance(re, Omega):
        return Omega(_map_states(re.body, mapping))
    return re


def _subst_re(re: Re, env: dict[str, pl.Term], rename: dict[str, str]) -> Re:
    """Rename assigned variables and substitute into read positions."""
    if isinstance(re, Ev):
        assigns = tuple(
            (rename.get(v, v), pl.subst_term(t, env)) for v, t in re.assigns
        )
        rels = tuple(
            pl.Rel(r.name, tuple(pl.subst_term(a, env) for a in r.args)) for r in re.rels
        )
        return replace(re, assigns=assigns, constraint=pl.subst_pure(re.constraint, env), rels=rels)
    if isinstance(re, Guard):
        return replace(re, pi=pl.subst_pure(re.pi, env))
    if isinstance(re, Seq):
        return Seq(_subst_re(re.left, env, rename), _subst_re(re.right, env, rename))
    if isinstance(re, OrRe):
        return OrRe(_subst_re(re.left, env, rename), _subst_re(re.right, env, rename))
    if isinstance(re, Omega):
        return Omega(_subst_re(re.body, env, rename))
    return re


# ---------------------------------------------------------------------------
# State renumbering
# ---------------------------------------------------------------------------


def _chains(re: Re) -> list[list[Re]]:
    """Flatten into alternative chains of segments / Or / Omega markers."""
    # A chain is a list whose items are Ev, Guard, Omega, OrRe, or marker nodes.
    if isinstance(re, Bot):
        return []
    if isinstance(re, Eps):
        return [[]]
    if isinstance(re, ContinueMark):
        return [[CONTINUE]]
    if isinstance(re, (Ev, Guard, Omega, OrRe)):
        return [[re]]
    if isinstance(re, Seq):
        left = _chains(re.left)
        right = _chains(re.right)
        return [a + b for a in left for b in right]
    raise TypeError(f"not an effect: {re!r}")


def _paths(re: Re) -> list[list[Re]]:
    """Fully distribute disjunction: every alternative as a segment list."""
    if isinstance(re, Bot):
        return []
    if isinstance(re, Eps):
        return [[]]
    if isinstance(re, ContinueMark):
        return [[CONTINUE]]
    if isinstance(re, (Ev, Guard, Omega)):
        return [[re]]
    if isinstance(re, Seq):
        return [a + b for a in _paths(re.left) for b in _paths(re.right)]
    if isinstance(re, OrRe):
        return _paths(re.left) + _paths(re.right)
    raise TypeError(f"not an effect: {re!r}")


def renumber(re: Re) -> tuple[Re, dict[int, int]]:
    """Assign consecutive state ids in a breadth-first, sharing-aware order.

    Chains are walked left to right; alternatives of a disjunction are
    queued breadth-first.  A state occurring on several alternatives defers
    the remainder of the current chain until the level is exhausted, so
    shared continuations are numbered after the branch-specific states.
    """
    counts: dict[int, int] = {}

    def count(node: Re) -> None:
        if isinstance(node, (Ev, Guard)):
            counts[node.s] = counts.get(node.s, 0) + 1
        elif isinstance(node, (Seq, OrRe)):
            count(node.left)
            count(node.right)
        elif isinstance(node, Omega):
            count(node.body)

    count(re)
    mapping: dict[int, int] = {}
    next_id = [1]
    queue: list[list[Re]] = [c for c in _chains(re)]
    deferred: list[list[Re]] = []

    def assign(s: int) -> None:
        if s not in mapping:
            mapping[s] = next_id[0]
            next_id[0] += 1

    def process(chain: list[Re], assigning_shared: bool) -> None:
        i = 0
        while i < len(chain):
            item = chain[i]
            if isinstance(item, (Ev, Guard)):
                if (
                    not assigning_shared
                    and counts.get(item.s, 0) > 1
                    and item.s not in mapping
                ):
                    rest = chain[i:]
                    if rest not in deferred:
                        deferred.append(rest)
                    return
                assign(item.s)
                i += 1
                continue
            if isinstance(item, OrRe):
                tail = chain[i + 1 :]
                for sub in _chains(item.left) + _chains(item.right):
                    queue.append(sub + tail)
                return
            if isinstance(item, Omega):
                body_first = first(item.body)
                if (
                    not assigning_shared
                    and body_first
                    and counts.get(body_first[0].s, 0) > 1
                    and body_first[0].s not in mapping
                ):
                    rest = chain[i:]
                    if rest not in deferred:
                        deferred.append(rest)
                    return
                for sub in _chains(item.body):
                    queue.append(sub)
                i += 1
                continue
            i += 1

    assigning_shared = False
    while queue or deferred:
        if not queue:
            queue.extend(deferred)
            deferred.clear()
            assigning_shared = True
        chain = queue.pop(0)
        process(chain, assigning_shared)

    return _map_states(re, mapping), mapping


# ---------------------------------------------------------------------------
# Loop summaries
# ---------------------------------------------------------------------------


@dataclass
class PhaseInfo:
    rf: pl.Term
    pi_t: pl.Pure
    pi_nt: pl.Pure


@dataclass
class SummaryInfo:
    join: int
    guard: pl.Pure
    rf: pl.Term | None
    pi_t: pl.Pure
    pi_nt: pl.Pure
    phases: list[PhaseInfo]
    always_terminates: bool
    has_omega: bool
    omega_condition: pl.Pure  # entry condition of the non-terminating disjunct


@dataclass(frozen=True)
class Origin:
    kind: str  # stmt | guard | summary-guard | exit-event | loop-event | return | entry
    node: int | None = None
    join: int | None = None
    proc: str = ""


@dataclass
class GwreResult:
    phi: Re
    origins: dict[int, Origin]
    summaries: list[SummaryInfo]
    entry_state: int
    state_map: dict[int, int]  # pre-renumbering id -> final id


def _prune_disjuncts(pi: pl.Pure) -> pl.Pure:
    """Drop disjuncts subsumed by another one (e.g. two spellings of the
    same comparison), so guards stay encodable as single comparisons."""

    def flat(p: pl.Pure) -> list[pl.Pure]:
        if isinstance(p, pl.Or):
            return flat(p.left) + flat(p.right)
        return [p]

    ds = flat(pi)
    if len(ds) == 1:
        return pi
    kept: list[pl.Pure] = []
    for i, d in enumerate(ds):
        redundant = False
        for j, other in enumerate(ds):
            if i == j:
                continue
            try:
                if pl.entails(d, other) and (other in kept or j > i):
                    redundant = True
                    break
            except Exception:
                continue
        if not redundant:
            kept.append(d)
    out = pl.FALSE
    for d in kept:
        out = pl.mk_or(out, d)
    return out


def prune_conjuncts(pi: pl.Pure) -> pl.Pure:
    """Drop conjuncts entailed by the remaining ones (guard cosmetics)."""
    cs = [_prune_disjuncts(c) for c in pl.conjuncts(pl.simplify(pi))]
    if isinstance(pl.simplify(pi), pl.FalseP):
        return pl.FALSE
    changed = True
    while changed and len(cs) > 1:
        changed = False
        for i, c in enumerate(cs):
            rest = cs[:i] + cs[i + 1 :]
            others = pl.TRUE
            for r in rest:
                others = pl.mk_and(others, r)
            try:
                if pl.entails(others, c):
                    cs = rest
                    changed = True
                    break
            except Exception:
                continue
    out = pl.TRUE
    for c in cs:
        out = pl.mk_and(out, c)
    return out


def _branch_guard_assigns(segs: list[Re]) -> tuple[pl.Pure, list[tuple[str, pl.Term]]]:
    """A branch's entry-store guard and its sequential assignment list."""
    env: dict[str, pl.Term] = {}
    guard: pl.Pure = pl.TRUE
    assigns: list[tuple[str, pl.Term]] = []
    for seg in segs:
        if isinstance(seg, ContinueMark):
            continue
        if isinstance(seg, Guard):
            guard = pl.mk_and(guard, pl.subst_pure(seg.pi, env))
        elif isinstance(seg, Ev):
            for v, t in seg.assigns:
                env[v] = pl.subst_term(t, env)
                assigns.append((v, t))
            if not isinstance(seg.constraint, pl.TrueP):
                guard = pl.mk_and(guard, pl.subst_pure(seg.constraint, env))
        else:
            raise TypeError(f"unexpected segment in clean branch: {seg!r}")
    return guard, assigns


def _assigned_vars(re: Re) -> set[str]:
    out: set[str] = set()

    def walk(node: Re) -> None:
        if isinstance(node, Ev):
            out.update(v for v, _ in node.assigns)
        elif isinstance(node, (Seq, OrRe)):
            walk(node.left)
            walk(node.right)
        elif isinstance(node, Omega):
            walk(node.body)

    walk(re)
    return out


def _reads_of_ev(ev: Ev) -> set[str]:
    out: set[str] = set()
    for _, t in ev.assigns:
        out |= pl.term_vars(t)
    out |= pl.pure_vars(ev.constraint)
    for r in ev.rels:
        for a in r.args:
            out |= pl.term_vars(a)
    return out


def pretty_nonneg(rf: pl.Term) -> pl.Pure:
    """``rf >= 0`` rendered with variables split across the comparison."""
    lin = pl.linearize(rf)
    if lin is None:
        return pl.Bop(pl.GTEQ, rf, pl.Const(0))
    coeffs, const = lin
    pos = {v: c for v, c in coeffs.items() if c > 0}
    neg = {v: -c for v, c in coeffs.items() if c < 0}
    if pos and neg:
        if const == 0:
            return pl.Bop(pl.GTEQ, pl.term_of_linear(pos, 0), pl.term_of_linear(neg, 0))
        if const == -1:
            return pl.Bop(pl.GT, pl.term_of_linear(pos, 0), pl.term_of_linear(neg, 0))
    return pl.Bop(pl.GTEQ, pl.term_of_linear(coeffs, const), pl.Const(0))


_PHASE_BOUND = 4


class _Builder:
    def __init__(self, program: fe.Program):
        self.program = program
        top = max(
            (nid for proc in program.procedures.values() for nid in proc.nodes),
            default=0,
        )
        self.counter = [top + 1]
        self.origins: dict[int, Origin] = {}
        self.summaries: list[SummaryInfo] = []
        self.event_cache: dict[tuple[int, str], int] = {}
        self.inline_stack: list[str] = []

    def fresh(self, origin: Origin) -> int:
        sid = self.counter[0]
        self.counter[0] += 1
        self.origins[sid] = origin
        return sid

    def cached_event(self, join: int, kind: str, proc: str) -> int:
        key = (join, kind)
        if key not in self.event_cache:
            self.event_cache[key] = self.fresh(Origin(kind, join=join, proc=proc))
        return self.event_cache[key]

    # -- CFG traversal ------------------------------------------------------

    def walk(self, proc: fe.Procedure, nid: int, stop: int | None) -> Re:
        if nid == stop:
            return CONTINUE
        node = proc.nodes[nid]
        succs = proc.trans[nid]
        if isinstance(node, fe.ExitNode):
            return EPS
        if isinstance(node, fe.Return):
            self.origins[nid] = Origin("return", node=nid, proc=proc.name)
            args = (node.x,) if node.x is not None else ()
            return Omega(Ev(s=nid, rels=(pl.Rel("Exit", args),)))
        if isinstance(node, fe.Start):
            return self.walk(proc, succs[0], stop) if succs else EPS
        if isinstance(node, fe.Assign):
            self.origins[nid] = Origin("stmt", node=nid, proc=proc.name)
            eff: Re = Ev(s=nid, assigns=((node.x, node.t),))
            rest = self.walk(proc, succs[0], stop) if succs else EPS
            return seq(eff, rest)
        if isinstance(node, fe.Call):
            eff = self.inline_call(proc, node)
            rest = self.walk(proc, succs[0], stop) if succs else EPS
            return seq(eff, rest)
        if isinstance(node, fe.Prune):
            self.origins[nid] = Origin("guard", node=nid, proc=proc.name)
            rest = self.walk(proc, succs[0], stop) if succs else EPS
            return seq(Guard(node.pi, nid), rest)
        if isinstance(node, fe.Join):
            if self.is_loop(proc, nid, stop):
                return self.summarize(proc, nid, stop)
            branches = [self.walk(proc, s, stop) for s in succs]
            if not branches:
                return EPS
            return or_list(branches)
        raise TypeError(f"unknown CFG node: {node!r}")

    def is_loop(self, proc: fe.Procedure, join: int, stop: int | None = None) -> bool:
        return any(self._reaches(proc, s, join, stop) for s in proc.trans[join])

    def _reaches(
        self, proc: fe.Procedure, start: int, goal: int, stop: int | None = None
    ) -> bool:
        """Reachability that does not travel through ``stop`` (the join of an
        enclosing loop): a nested loop's exit must not count as cyclic just
        because the outer loop leads back around."""
        seen = set()
        work = [start]
        while work:
            n = work.pop()
            if n == goal:
                return True
            if n in seen or n == stop:
                continue
            seen.add(n)
            work.extend(proc.trans[n])
        return False

    # -- interprocedural inlining -------------------------------------------

    def inline_call(self, proc: fe.Procedure, node: fe.Call) -> Re:
        self.origins[node.s] = Origin("stmt", node=node.s, proc=proc.name)
        callee = self.program.procedures.get(node.p)
        if callee is None:
            havoc = self.fresh(Origin("stmt", node=node.s, proc=proc.name))
            return seq(
                Ev(s=node.s, rels=(pl.Rel(node.p, node.args),)),
                Ev(s=havoc, assigns=((node.r, pl.Wildcard()),)),
            )
        if node.p in self.inline_stack or node.p == proc.name:
            raise UnsupportedProgram(f"recursive call to {node.p!r} is not supported")
        self.inline_stack.append(node.p)
        try:
            body = self.walk(callee, callee.entry, None)
        finally:
            self.inline_stack.pop()
        # Freshen the callee's local names and states per call site.
        rename = {
            v: f"{v}__{node.s}"
            for v in (_assigned_vars(body) | set(callee.params))
        }
        env = {v: pl.Var(n) for v, n in rename.items()}
        body = _subst_re(body, env, rename)
        remap = {
            s: self.fresh(Origin("stmt", node=node.s, proc=proc.name))
            for s in states_of(body)
        }
        body = _map_states(body, remap)
        body = self._replace_exit(body, node.r)
        prefix: list[Re] = []
        for formal, actual in zip(callee.params, node.args):
            sid = self.fresh(Origin("stmt", node=node.s, proc=proc.name))
            prefix.append(Ev(s=sid, assigns=((rename[formal], actual),)))
        inlined = seq(seq_list(prefix), body)
        return self._peephole_chain(inlined)

    def _replace_exit(self, re: Re, result_var: str) -> Re:
        if isinstance(re, Omega):
            body = re.body
            if isinstance(body, Ev) and body.rels and body.rels[0].name == "Exit":
                value = body.rels[0].args[0] if body.rels[0].args else pl.Wildcard()
                return Ev(s=body.s, assigns=((result_var, value),))
            return re
        if isinstance(re, Seq):
            return Seq(self._replace_exit(re.left, result_var), self._replace_exit(re.right, result_var))
        if isinstance(re, OrRe):
            return OrRe(self._replace_exit(re.left, result_var), self._replace_exit(re.right, result_var))
        return re

    def _peephole_chain(self, re: Re) -> Re:
        """Simplify a straight-line inlined chain of plain assignments."""
        chains = _chains(re)
        if len(chains) != 1:
            return re
        chain = chains[0]
        if not all(isinstance(seg, Ev) and not seg.rels and isinstance(seg.constraint, pl.TrueP) and len(seg.assigns) == 1 for seg in chain):
            return re
        items: list[Ev] = list(chain)  # type: ignore[arg-type]
        # Fuse a trailing copy r := u by renaming u to r throughout.
        if items:
            last = items[-1]
            (r, t) = last.assigns[0]
            if isinstance(t, pl.Var) and t.name != r:
                u = t.name
                env = {u: pl.Var(r)}
                items = [
                    replace(
                        ev,
                        assigns=tuple((r if v == u else v, pl.subst_term(rhs, env)) for v, rhs in ev.assigns),
                    )
                    for ev in items
                ]
        # Drop identity copies and dead leading writes.
        items = [ev for ev in items if ev.assigns[0][1] != pl.Var(ev.assigns[0][0])]
        out: list[Ev] = []
        for i, ev in enumerate(items):
            v = ev.assigns[0][0]
            dead = False
            for later in items[i + 1 :]:
                if v in pl.term_vars(later.assigns[0][1]):
                    break
                if later.assigns[0][0] == v:
                    dead = True
                    break
            if not dead:
                out.append(ev)
        return seq_list(list(out))

    # -- loop summarization ---------------------------------------------------

    def summarize(self, proc: fe.Procedure, join: int, stop: int | None) -> Re:
        succs = proc.trans[join]
        cyclic = [s for s in succs if self._reaches(proc, s, join, stop)]
        exits = [s for s in succs if not self._reaches(proc, s, join, stop)]
        if len(cyclic) != 1 or len(succs) > 2:
            raise UnsupportedProgram(f"irreducible loop at node {join}")
        p_cycle = proc.nodes[cyclic[0]]
        assert isinstance(p_cycle, fe.Prune)
        nondet = p_cycle.nondet
        pi_g = pl.TRUE if nondet else p_cycle.pi

        if exits:
            p_exit = proc.nodes[exits[0]]
            assert isinstance(p_exit, fe.Prune)
            rest_start = proc.trans[exits[0]]
            phi_rest = self.walk(proc, rest_start[0], stop) if rest_start else EPS
        else:
            phi_rest = EPS

        phi_cycle = self.walk(proc, proc.trans[cyclic[0]][0], join)

        # Hoist per-iteration havoc events of loop-constant variables out of
        # the cycle: they behave as symbols fixed for the whole loop.
        hoisted, phi_cycle = self._hoist(phi_cycle)

        branches = _paths(phi_cycle)
        clean = [b[:-1] for b in branches if b and isinstance(b[-1], ContinueMark)]
        clean += [[] for b in branches if not b]
        leaks = [b for b in branches if b and not isinstance(b[-1], ContinueMark)]

        clean_ga = [_branch_guard_assigns(b) for b in clean]

        disjuncts: list[Re] = []
        info = SummaryInfo(
            join=join,
            guard=pi_g,
            rf=None,
            pi_t=pl.FALSE,
            pi_nt=pl.FALSE,
            phases=[],
            always_terminates=False,
            has_omega=False,
            omega_condition=pl.FALSE,
        )

        def guard_seg(pi: pl.Pure) -> Guard:
            return Guard(pi, self.fresh(Origin("summary-guard", join=join, proc=proc.name)))

        # D1: the loop guard fails on entry.
        not_g = pl.FALSE if nondet else pl.negate(pi_g)
        if nondet:
            disjuncts.append(seq(guard_seg(pl.TRUE), phi_rest))
        elif not isinstance(not_g, pl.FalseP):
            disjuncts.append(seq(guard_seg(not_g), phi_rest))

        chosen = None if nondet else self._find_ranking(pi_g, clean_ga, leaks)
        guard_is_true = isinstance(pi_g, pl.TrueP)

        if chosen is not None:
            rf, pi_t1, pi_nt1, phases, pi_res = chosen
            info.rf = rf.rf
            info.pi_t = pi_t1
            info.pi_nt = pi_nt1
            info.phases = phases
            info.always_terminates = isinstance(pi_res, pl.FalseP) or not pl.satisfiable(
                pl.mk_and(pi_g, pi_res)
            )
            # D2: the loop is entered and terminates through the guard.
            if not guard_is_true:
                if len(phases) == 1:
                    term_guard = pi_t1
                elif info.always_terminates:
                    term_guard = pl.TRUE
                else:
                    term_guard = prune_conjuncts(pl.negate(pi_res))
                d2_guard = prune_conjuncts(pl.mk_and(pi_g, term_guard))
                if not isinstance(d2_guard, pl.FalseP) and pl.satisfiable(d2_guard):
                    exit_ev = self._exit_event(join, proc, pi_g, rf, clean_ga, phases)
                    disjuncts.append(seq(guard_seg(d2_guard), seq(exit_ev, phi_rest)))
            # D3: the loop is entered and repeats forever.
            if not info.always_terminates:
                info.has_omega = True
                d3_guard = prune_conjuncts(pl.mk_and(pi_g, pi_res))
                info.omega_condition = d3_guard
                w = self.cached_event(join, "loop-event", proc.name)
                body = Ev(s=w, constraint=pretty_nonneg(rf.rf))
                disjuncts.append(seq(guard_seg(d3_guard), Omega(body)))
        else:
            if not (guard_is_true or nondet):
                raise SummaryInconclusive(
                    f"no conclusive termination argument for the loop at node {join}"
                )
            # Fallback for always-true guards: the clean body may repeat
            # forever; leaks below cover every way out.
            info.has_omega = True
            info.omega_condition = pi_g
            bodies = [seq_list(b) for b in clean]
            bodies = [b for b in bodies if not isinstance(b, (Eps, Bot))]
            if bodies:
                disjuncts.append(Omega(or_list(bodies)))
            else:
                w = self.cached_event(join, "loop-event", proc.name)
                disjuncts.append(Omega(Ev(s=w)))

        # D4: leaking branches (break / return / inner non-termination).
        for leak in leaks:
            content = seq_list(leak)
            if not guard_is_true:
                content = seq(guard_seg(pi_g), content)
            disjuncts.append(content)

        self.summaries.append(info)
        if not disjuncts:
            return BOT
        return seq(seq_list(hoisted), or_list(disjuncts))

    def _hoist(self, phi_cycle: Re) -> tuple[list[Re], Re]:
        """Pull leading one-shot havoc events of loop-constant vars out."""
        chains = _chains(phi_cycle)
        if not chains:
            return [], phi_cycle
        # The hoistable window is the common top-level prefix before any Or.
        def flat(re: Re) -> list[Re]:
            if isinstance(re, Seq):
                return flat(re.left) + flat(re.right)
            return [re]

        items = flat(phi_cycle)
        k = 0
        while k < len(items) and isinstance(items[k], (Ev, Guard)):
            k += 1
        chain_head = items[:k]
        remainder = seq_list(items[k:])
        assigned_later = _assigned_vars(remainder)
        hoisted: list[Re] = []
        kept: list[Re] = []
        read_so_far: set[str] = set()
        assigned_in_head = set()
        for seg in chain_head:
            if isinstance(seg, Ev):
                assigned_in_head |= {v for v, _ in seg.assigns}
        for i, seg in enumerate(chain_head):
            hoistable = (
                isinstance(seg, Ev)
                and len(seg.assigns) == 1
                and isinstance(seg.assigns[0][1], pl.Wildcard)
                and isinstance(seg.constraint, pl.TrueP)
                and not seg.rels
                and seg.assigns[0][0] not in read_so_far
                and seg.assigns[0][0] not in assigned_later
                and not any(
                    isinstance(o, Ev) and seg.assigns[0][0] in {v for v, _ in o.assigns}
                    for j, o in enumerate(chain_head)
                    if j != i
                )
            )
            if hoistable:
                hoisted.append(seg)
            else:
                kept.append(seg)
            if isinstance(seg, Ev):
                read_so_far |= _reads_of_ev(seg)
            elif isinstance(seg, Guard):
                read_so_far |= pl.pure_vars(seg.pi)
        if not hoisted:
            return [], phi_cycle
        return hoisted, seq(seq_list(kept), remainder)

    def _find_ranking(self, pi_g, clean_ga, leaks):
        """Choose a ranking candidate with a conclusive (multi-phase) split."""
        candidates = list(pl.candidate_rfs(pi_g))
        seen = {c.rf for c in candidates}

        def add(c: pl.RankingCandidate) -> None:
            if c.rf not in seen:
                seen.add(c.rf)
                candidates.append(c)

        for guard, _ in clean_ga:
            for c in pl.candidate_rfs(guard):
                add(c)
        for leak in leaks:
            guard, _ = _leak_guard(leak)
            for conj in pl.conjuncts(guard):
                if isinstance(conj, pl.Bop):
                    try:
                        neg = pl.negate(conj)
                    except pl.NonNegatableGuard:
                        continue
                    for c in pl.candidate_rfs(neg):
                        add(c)

        conclusive = []
        for rf in candidates:
            pi_t, pi_nt = pl.wp_delta(rf, clean_ga)
            if isinstance(pi_t, pl.FalseP) and isinstance(pi_nt, pl.FalseP):
                continue
            if not pl.entails(pi_g, pl.mk_or(pi_t, pi_nt)):
                continue
            chain = self._phase_chain(rf, pi_t, pi_nt, pi_g, clean_ga)
            if chain is None:
                continue
            phases, pi_res = chain
            useful = pl.satisfiable(pl.mk_and(pi_g, pi_t))
            conclusive.append((useful, rf, pi_t, pi_nt, phases, pi_res))
        for useful, rf, pi_t, pi_nt, phases, pi_res in conclusive:
            if useful:
                return rf, pi_t, pi_nt, phases, pi_res
        if conclusive:
            _, rf, pi_t, pi_nt, phases, pi_res = conclusive[0]
            return rf, pi_t, pi_nt, phases, pi_res
        return None

    def _phase_chain(self, rf, pi_t, pi_nt, pi_g, clean_ga):
        """Refine the non-decreasing precondition through successive phases."""
        phases = [PhaseInfo(rf.rf, pi_t, pi_nt)]
        pi_res = pi_nt
        last_nt = pi_nt
        for _ in range(_PHASE_BOUND):
            if not pl.satisfiable(pl.mk_and(pi_g, pi_res)):
                return phases, pl.FALSE
            if self._inductive(pi_res, pi_g, clean_ga):
                return phases, prune_conjuncts(pi_res)
            found = False
            for cand in pl.candidate_rfs(last_nt):
                t2, n2 = pl.wp_delta(cand, clean_ga)
                if isinstance(t2, pl.FalseP) and isinstance(n2, pl.FalseP):
                    continue
                if not pl.entails(pl.mk_and(pi_g, pi_res), pl.mk_or(t2, n2)):
                    continue
                if not pl.satisfiable(pl.mk_and(pl.mk_and(pi_g, pi_res), t2)):
                    continue
                phases.append(PhaseInfo(cand.rf, t2, n2))
                pi_res = pl.mk_and(pi_res, n2)
                last_nt = n2
                found = True
                break
            if not found:
                return None
        return None

    @staticmethod
    def _inductive(pi_res, pi_g, clean_ga) -> bool:
        if isinstance(pi_res, pl.TrueP):
            return True
        for guard, assigns in clean_ga:
            env = pl.branch_substitution(assigns)
            post = pl.subst_pure(pi_res, env)
            pre = pl.mk_and(pl.mk_and(pi_g, pi_res), guard)
            if not pl.entails(pre, post):
                return False
        return True

    def _exit_event(self, join, proc, pi_g, rf, clean_ga, phases) -> Ev:
        """The state change of running the loop to guard-exit."""
        sid = self.cached_event(join, "exit-event", proc.name)
        assigned: list[str] = []
        for _, assigns in clean_ga:
            for v, _t in assigns:
                if v not in assigned:
                    assigned.append(v)
        exact = self._exact_updates(rf, clean_ga, phases) if assigned else []
        if exact:
            ordered = _order_assignments(exact)
            return Ev(s=sid, assigns=tuple(ordered), constraint=pl.negate(pi_g))
        havoc = tuple((v, pl.Wildcard()) for v in assigned)
        return Ev(s=sid, assigns=havoc, constraint=pl.negate(pi_g))

    @staticmethod
    def _exact_updates(rf, clean_ga, phases):
        """v := v + c_v * (rf + 1) when every branch steps rf down by one."""
        if len(phases) != 1:
            return []
        incs: dict[str, int] = {}
        for guard, assigns in clean_ga:
            delta = pl._delta_of_branch(rf.rf, assigns)
            if delta is None or delta[0] or delta[1] != 1:
                return []
            env = pl.branch_substitution(assigns)
            for v in {a for a, _ in assigns}:
                lin = pl.linearize(env[v])
                if lin is None or lin[0] != {v: 1}:
                    return []
                c = lin[1]
                if v in incs and incs[v] != c:
                    return []
                incs[v] = c
        rf_lin = pl.linearize(rf.rf)
        if rf_lin is None:
            return []
        out = []
        for v, c in incs.items():
            coeffs = {v: 1}
            for u, k in rf_lin[0].items():
                coeffs[u] = coeffs.get(u, 0) + c * k
                if coeffs[u] == 0:
                    del coeffs[u]
            const = c * (rf_lin[1] + 1)
            out.append((v, pl.term_of_linear(coeffs, const)))
        return out


def _order_assignments(assigns: list[tuple[str, pl.Term]]):
    """Topologically order parallel updates so reads see entry values."""
    remaining = list(assigns)
    ordered: list[tuple[str, pl.Term]] = []
    while remaining:
        progressed = False
        # pick an assignment whose variable is not read by any other rhs
        for i, (v, t) in enumerate(remaining):
            read_by_others = any(
                v in pl.term_vars(t2) for u, t2 in remaining if u != v
            )
            if not read_by_others:
                ordered.append(remaining.pop(i))
                progressed = True
                break
        if not progressed:
            return [(v, pl.Wildcard()) for v, _ in assigns]  # cyclic: havoc
    return ordered


def _leak_guard(leak_segs: list[Re]) -> tuple[pl.Pure, list[tuple[str, pl.Term]]]:
    """Entry-store guard of a leaking branch (up to its first omega)."""
    env: dict[str, pl.Term] = {}
    guard: pl.Pure = pl.TRUE
    assigns: list[tuple[str, pl.Term]] = []
    for seg in leak_segs:
        if isinstance(seg, Guard):
            guard = pl.mk_and(guard, pl.subst_pure(seg.pi, env))
        elif isinstance(seg, Ev):
            for v, t in seg.assigns:
                env[v] = pl.subst_term(t, env)
                assigns.append((v, t))
        elif isinstance(seg, Omega):
            break
    return guard, assigns


# ---------------------------------------------------------------------------
# Top-level construction
# ---------------------------------------------------------------------------


def cfg_to_gwre(program: fe.Program, proc_name: str = "main") -> GwreResult:
    """Summarize a procedure into a guarded effect with renumbered states."""
    if proc_name not in program.procedures:
        raise UnsupportedProgram(f"no procedure named {proc_name!r}")
    builder = _Builder(program)
    proc = program.procedures[proc_name]
    phi = builder.walk(proc, proc.entry, None)
    firsts = first(phi)
    if len(firsts) != 1 or nullable(phi) or isinstance(firsts[0], Omega):
        entry = builder.fresh(Origin("entry", proc=proc_name))
        phi = seq(Ev(s=entry), phi)
    phi, mapping = renumber(phi)
    origins = {
        mapping[s]: builder.origins.get(s, Origin("stmt", node=s, proc=proc_name))
        for s in mapping
    }
    entry_state = first(phi)[0].s if first(phi) else 0
    return GwreResult(
        phi=phi,
        origins=origins,
        summaries=builder.summaries,
        entry_state=entry_state,
        state_map=mapping,
    )


# ---------------------------------------------------------------------------
# Trace simulation
# ---------------------------------------------------------------------------


@dataclass
class SimResult:
    trace: list[tuple[int, str]]
    status: str  # "end" | "stuck" | "fuel"
    store: dict[str, int]


def simulate(
    phi: Re,
    store: dict[str, int] | None = None,
    fuel: int = 50,
    rng: random.Random | None = None,
) -> SimResult:
    """Draw one concrete trace from an effect (wildcards via ``rng``)."""
    rng = rng or random.Random(0)
    store = dict(store or {})
    trace: list[tuple[int, str]] = []

    def draw() -> int:
        return rng.randint(-8, 8)

    def ev_value(t: pl.Term) -> int:
        if isinstance(t, pl.Wildcard):
            return draw()
        if isinstance(t, pl.Var):
            return store.setdefault(t.name, draw())
        if isinstance(t, pl.Const):
            return t.value
        if isinstance(t, pl.Add):
            return ev_value(t.left) + ev_value(t.right)
        if isinstance(t, pl.Sub):
            return ev_value(t.left) - ev_value(t.right)
        if isinstance(t, pl.Neg):
            return -ev_value(t.operand)
        raise TypeError(f"not a term: {t!r}")

    def constraint_holds(pi: pl.Pure) -> bool:
        if isinstance(pi, pl.TrueP):
            return True
        if isinstance(pi, pl.FalseP):
            return False
        if isinstance(pi, pl.Rel):
            return True
        if isinstance(pi, pl.Bop):
            return pl._OP_EVAL[pi.op](ev_value(pi.left), ev_value(pi.right))
        if isinstance(pi, pl.And):
            return constraint_holds(pi.left) and constraint_holds(pi.right)
        if isinstance(pi, pl.Or):
            return constraint_holds(pi.left) or constraint_holds(pi.right)
        raise TypeError(f"not a pure constraint: {pi!r}")

    current = phi
    for _ in range(fuel):
        firsts = first(current)
        options: list[Re] = []
        for f in firsts:
            if isinstance(f, Guard):
                if constraint_holds(f.pi):
                    options.append(f)
            else:
                options.append(f)
        if not options:
            if nullable(current):
                return SimResult(trace, "end", store)
            return SimResult(trace, "stuck", store)
        f = rng.choice(options)
        if isinstance(f, Omega):
            # unroll one copy of the body and stay inside forever
            current = seq(f.body, f)
            continue
        if isinstance(f, Ev):
            for v, t in f.assigns:
                store[v] = ev_value(t)
            if not constraint_holds(f.constraint):
                return SimResult(trace, "stuck", store)
            trace.append((f.s, str(f)))
        else:
            trace.append((f.s, str(f)))
        current = derivative(f, current)
    return SimResult(trace, "fuel", store)
