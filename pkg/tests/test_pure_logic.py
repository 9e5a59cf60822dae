import random

import pytest

from ctlrepair import pure_logic as pl


def _rand_term(rng, names, depth=2):
    pick = rng.randrange(4 if depth > 0 else 2)
    if pick == 0:
        return pl.Var(rng.choice(names))
    if pick == 1:
        return pl.Const(rng.randint(-3, 3))
    if pick == 2:
        return pl.Add(_rand_term(rng, names, depth - 1), _rand_term(rng, names, depth - 1))
    return pl.Sub(_rand_term(rng, names, depth - 1), _rand_term(rng, names, depth - 1))


def _rand_pure(rng, names, depth=2):
    if depth == 0 or rng.random() < 0.5:
        op = rng.choice([pl.GT, pl.LT, pl.GTEQ, pl.LTEQ, pl.EQ, pl.NEQ])
        return pl.Bop(op, _rand_term(rng, names, 1), _rand_term(rng, names, 1))
    ctor = pl.mk_and if rng.random() < 0.5 else pl.mk_or
    return ctor(_rand_pure(rng, names, depth - 1), _rand_pure(rng, names, depth - 1))


NAMES = ["x", "y"]


def _same_models(a, b, lo=-4, hi=4):
    return list(pl.models(a, NAMES, lo, hi)) == list(pl.models(b, NAMES, lo, hi))


def test_negate_involution_preserves_models():
    rng = random.Random(1)
    for _ in range(200):
        pi = _rand_pure(rng, NAMES)
        assert _same_models(pi, pl.negate(pl.negate(pi)))


def test_negate_flips_every_model():
    rng = random.Random(2)
    for _ in range(200):
        pi = _rand_pure(rng, NAMES)
        neg = pl.negate(pi)
        for store in pl.models(pl.TRUE, NAMES, -3, 3):
            assert pl.eval_pure(pi, store) != pl.eval_pure(neg, store)


def test_negate_rejects_relations():
    with pytest.raises(pl.NonNegatableGuard):
        pl.negate(pl.Rel("Exit", ()))


def test_simplify_preserves_models():
    rng = random.Random(3)
    for _ in range(200):
        pi = _rand_pure(rng, NAMES)
        assert _same_models(pi, pl.simplify(pi))


def test_satisfiable_matches_brute_force():
    rng = random.Random(4)
    for _ in range(300):
        pi = _rand_pure(rng, NAMES)
        brute = any(True for _ in pl.models(pi, NAMES, -6, 6))
        # satisfiable() decides over the rationals; it may be satisfiable
        # outside the sampled box but never the other way round
        if brute:
            assert pl.satisfiable(pi)


def test_satisfiable_exact_cases():
    x = pl.Var("x")
    assert not pl.satisfiable(pl.mk_and(pl.Bop(pl.GT, x, pl.Const(0)), pl.Bop(pl.LT, x, pl.Const(0))))
    assert not pl.satisfiable(pl.mk_and(pl.Bop(pl.GTEQ, x, pl.Const(1)), pl.Bop(pl.LTEQ, x, pl.Const(0))))
    assert pl.satisfiable(pl.Bop(pl.EQ, x, pl.Const(5)))
    assert not pl.satisfiable(pl.FALSE)
    assert pl.satisfiable(pl.TRUE)


def test_entails_sound_against_brute_force():
    rng = random.Random(5)
    checked = 0
    for _ in range(300):
        a = _rand_pure(rng, NAMES)
        b = _rand_pure(rng, NAMES)
        if pl.entails(a, b):
            checked += 1
            for store in pl.models(a, NAMES, -5, 5):
                assert pl.eval_pure(b, store)
    assert checked > 10  # the sample must actually exercise entailments


def test_linearize_round_trip():
    rng = random.Random(6)
    for _ in range(200):
        t = _rand_term(rng, NAMES)
        lin = pl.linearize(t)
        assert lin is not None
        back = pl.term_of_linear(*lin)
        for store in pl.models(pl.TRUE, NAMES, -3, 3):
            assert pl.eval_term(t, store) == pl.eval_term(back, store)


def test_linearize_rejects_wildcards():
    assert pl.linearize(pl.Add(pl.Var("x"), pl.Wildcard())) is None


def test_candidate_rfs_nonnegative_under_guard():
    # single-direction comparisons: every read-off candidate is nonnegative
    # wherever the guard holds (NEQ is excluded: its two candidates cover
    # the two disjunctive cases and are not individually nonnegative)
    rng = random.Random(7)
    for _ in range(200):
        op = rng.choice([pl.GT, pl.LT, pl.GTEQ, pl.LTEQ, pl.EQ])
        guard = pl.Bop(op, _rand_term(rng, NAMES, 1), _rand_term(rng, NAMES, 1))
        for cand in pl.candidate_rfs(guard):
            for store in pl.models(guard, NAMES, -4, 4):
                assert pl.eval_term(cand.rf, store) >= 0


def test_candidate_rfs_for_simple_guard():
    guard = pl.Bop(pl.GTEQ, pl.Var("x"), pl.Const(0))
    rfs = [str(c) for c in pl.candidate_rfs(guard)]
    assert rfs == ["x"]


def test_wp_delta_single_decreasing_branch():
    # while (...) { x = x - y }  with rf = x: decreases iff y >= 1
    rf = pl.candidate_rfs(pl.Bop(pl.GTEQ, pl.Var("x"), pl.Const(0)))[0]
    pi_t, pi_nt = pl.wp_delta(rf, [(pl.TRUE, [("x", pl.Sub(pl.Var("x"), pl.Var("y")))])])
    assert pl.entails(pi_t, pl.Bop(pl.GTEQ, pl.Var("y"), pl.Const(1)))
    assert pl.entails(pl.Bop(pl.GTEQ, pl.Var("y"), pl.Const(1)), pi_t)
    assert pl.entails(pi_nt, pl.Bop(pl.LTEQ, pl.Var("y"), pl.Const(0)))


def test_wp_delta_wildcard_is_inconclusive():
    rf = pl.RankingCandidate(pl.Var("x"))
    pi_t, pi_nt = pl.wp_delta(rf, [(pl.TRUE, [("x", pl.Wildcard())])])
    assert isinstance(pi_t, pl.FalseP)
    assert isinstance(pi_nt, pl.FalseP)


def test_branch_substitution_sequences_assignments():
    env = pl.branch_substitution(
        [("x", pl.Add(pl.Var("x"), pl.Const(1))), ("y", pl.Var("x"))]
    )
    # y reads the updated x
    store = {"x": 5, "y": 0}
    assert pl.eval_term(env["y"], store) == 6
