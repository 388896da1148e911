import random

import pytest

from flatcheck.expr import Expr
from flatcheck.jetgeom import (Distribution, MultiIndex, SpaceMismatch,
                               VectorField, ad_pow, is_vertical,
                               lie_bracket, unit_field)
from flatcheck.prolong import build_prolonged, delta_filtration, g_filtration

from conftest import oracle_bracket, random_field, random_system
from propsuites import suite_bracket_algebra


def test_multiindex_ops():
    a = MultiIndex([2, 0, 3])
    b = MultiIndex([1, 4, 3])
    assert a.cmin(b) == (1, 0, 3)
    assert a.cmax(b) == (2, 4, 3)
    assert a.cmin(1) == (1, 0, 1)
    assert a.total == 5
    srt, perm = a.sorted_permutation()
    assert srt == (0, 2, 3) and perm == (1, 0, 2)
    with pytest.raises(ValueError):
        MultiIndex([-1])


def test_chained_bracket_examples(chained):
    ps = build_prolonged(chained, [0, 0])
    g0, g1 = ps.g0, ps.gi[0]
    br = lie_bracket(g0, g1)
    want = VectorField(ps.space, {chained.state(3): -Expr.one(),
                                  chained.state(6): -Expr.var(chained.input(2))})
    assert br == want
    assert lie_bracket(g1, g1).is_zero()


def test_ad_pow_examples(chained):
    ps = build_prolonged(chained, [0, 0])
    g0, g1 = ps.g0, ps.gi[0]
    assert ad_pow(g0, g1, 0) == g1
    assert ad_pow(g0, g1, 2) == unit_field(ps.space, chained.state(2))
    assert ad_pow(g0, g1, 4).is_zero()
    with pytest.raises(ValueError):
        ad_pow(g0, g1, -1)


def test_bracket_matches_independent_oracle():
    rng = random.Random(606)
    for _ in range(100):
        sysdef = random_system(rng)
        ps = build_prolonged(sysdef, [0] * sysdef.m)
        v = random_field(rng, ps.space)
        w = random_field(rng, ps.space)
        assert lie_bracket(v, w) == oracle_bracket(v, w)


def test_space_mismatch(chained, driftless):
    s1 = build_prolonged(chained, [0, 0])
    s2 = build_prolonged(driftless, [0, 0])
    with pytest.raises(SpaceMismatch):
        lie_bracket(s1.g0, s2.g0)


def test_generic_rank_identity_distribution(chained):
    ps = build_prolonged(chained, [0, 0])
    gens = [unit_field(ps.space, chained.state(i)) for i in range(1, 7)]
    d = Distribution(ps.space, gens)
    assert d.rank == 6


def test_generic_rank_chained_g1(chained):
    ps = build_prolonged(chained, [0, 0])
    assert g_filtration(ps, 1).rank == 4


def test_generic_rank_constructed_dependency(chained):
    ps = build_prolonged(chained, [0, 0])
    rng = random.Random(3)
    a = random_field(rng, ps.space)
    b = random_field(rng, ps.space)
    d = Distribution(ps.space, [a, b, a + b])
    assert d.rank == Distribution(ps.space, [a, b]).rank


def test_contains(chained):
    ps = build_prolonged(chained, [0, 0])
    G1 = g_filtration(ps, 1)
    assert G1.contains(G1.generators[0])
    assert G1.contains(VectorField(ps.space, {}))
    bad = lie_bracket(ps.gi[1], lie_bracket(ps.g0, ps.gi[0]))
    assert bad == VectorField(ps.space, {chained.state(6): -Expr.one()})
    assert not G1.contains(bad)


def test_is_involutive_examples(chained, pendulum):
    ps = build_prolonged(chained, [0, 0])
    coord = Distribution(ps.space, [unit_field(ps.space, chained.state(i))
                                    for i in (1, 2, 3)])
    ok, wit = coord.is_involutive()
    assert ok and wit is None
    G1 = g_filtration(ps, 1)
    ok, wit = G1.is_involutive()
    assert not ok and wit is not None
    _, _, br = wit
    assert not G1.contains(br)
    # pendulum: Delta_2^(0,l2) is non-involutive for l2 in {1,2,3}
    for l2 in (1, 2, 3):
        pps = build_prolonged(pendulum, [0, l2])
        ok, wit = delta_filtration(pps, 2).is_involutive()
        assert not ok


def test_involutive_closure_examples(chained):
    ps = build_prolonged(chained, [0, 0])
    coord = Distribution(ps.space, [unit_field(ps.space, chained.state(i))
                                    for i in (1, 2)])
    assert coord.involutive_closure().rank == coord.rank
    G1 = g_filtration(ps, 1)
    assert G1.involutive_closure().rank == 5
    G2 = g_filtration(ps, 2)
    assert G2.involutive_closure().rank == 7


def test_involutive_closure_idempotent_monotone():
    rng = random.Random(11)
    for _ in range(20):
        sysdef = random_system(rng)
        ps = build_prolonged(sysdef, [0] * sysdef.m)
        d = Distribution(ps.space, [random_field(rng, ps.space)
                                    for _ in range(2)])
        cl = d.involutive_closure()
        assert cl.rank >= d.rank
        assert cl.involutive_closure().rank == cl.rank


def test_is_vertical(chained):
    ps = build_prolonged(chained, [4, 0])
    v = unit_field(ps.space, chained.state(1))
    assert is_vertical(v, MultiIndex([0, 0]))
    u = unit_field(ps.space, chained.input(1, 0))
    assert not is_vertical(u, MultiIndex([4, 0]))
    ad5 = ps.ad_top(1, 5)
    assert is_vertical(ad5, MultiIndex([4, 0]).cmin(0))


def test_rank_invariance_under_reorder_and_scaling():
    rng = random.Random(17)
    for _ in range(30):
        sysdef = random_system(rng)
        ps = build_prolonged(sysdef, [0] * sysdef.m)
        gens = [random_field(rng, ps.space) for _ in range(3)]
        base = Distribution(ps.space, gens).rank
        shuffled = list(gens)
        rng.shuffle(shuffled)
        assert Distribution(ps.space, shuffled).rank == base
        scale = Expr.var(rng.choice(ps.space.coords)) + Expr.rational(2)
        scaled = [gens[0].scale(scale)] + gens[1:]
        assert Distribution(ps.space, scaled).rank == base


def test_bracket_antisymmetry_jacobi_small():
    assert suite_bracket_algebra(40) == 40


def test_symbolic_and_sampled_ranks_agree_on_fixture_distributions(chained):
    ps = build_prolonged(chained, [4, 0])
    for k in range(0, 8):
        cert = g_filtration(ps, k).certificate
        assert cert.symbolic_rank is not None
        assert cert.symbolic_rank == cert.sampled_rank == cert.rank


def test_involutive_closure_budget(chained):
    from flatcheck.jetgeom import IterationBudgetExceeded
    ps = build_prolonged(chained, [0, 0])
    G1 = g_filtration(ps, 1)
    with pytest.raises(IterationBudgetExceeded):
        G1.involutive_closure(max_iter=0)
