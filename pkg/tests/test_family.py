from __future__ import annotations

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uvoter import catalog
from uvoter.family import (
    CRITICAL,
    SUBCRITICAL,
    SUPERCRITICAL,
    Arc,
    ArcSet,
    FamilyError,
    UpdateFamily,
    UpdateRule,
    classify,
    classify_1d,
    classify_2d,
    destabilizing_arc,
    diamond,
    embed_1d,
    from_diamond,
    grid_classify_oracle,
    has_disjoint_rules,
    is_stable,
    parse_family,
    primitive,
    spans_half_turn,
    stable_set,
    unstable_set,
)

FIG1 = "dim 2; rule (-1,0) (-1,1); rule (-1,0) (-1,-1)"

SMALL = sorted(
    {primitive((x, y)) for x in range(-8, 9) for y in range(-8, 9) if (x, y) != (0, 0)},
    key=diamond,
)


# -- parsing ----------------------------------------------------------------

def test_parse_fig1():
    f = parse_family(FIG1)
    assert f.dim == 2 and len(f) == 2 and f.range_sq == 2
    assert f.rules[0].offsets == ((-1, 0), (-1, 1))


def test_parse_multiline_with_comments():
    text = "# header\ndim 1\nrule (1)   # right\nrule (1) (2)\n"
    f = parse_family(text)
    assert f.dim == 1 and [r.offsets for r in f.rules] == [((1,),), ((1,), (2,))]


def test_duplicate_rules_and_offsets_collapse():
    f = parse_family("dim 2; rule (1,0) (1,0); rule (1,0)")
    assert len(f) == 1 and f.rules[0].offsets == ((1, 0),)


@pytest.mark.parametrize(
    "text, line",
    [
        ("dim 3\nrule (1,0)", 1),
        ("dim 2\nrule (0,0)", 2),
        ("dim 2\nrule (1,0)\nrule (1)", 3),
        ("dim 2\nrule", 2),
        ("dim 2\nrul (1,0)", 2),
        ("dim 2\nrule (1,x)", 2),
        ("dim 2\nrule (1,0) junk", 2),
    ],
)
def test_parse_errors_carry_line(text, line):
    with pytest.raises(FamilyError) as e:
        parse_family(text)
    assert e.value.line == line


def test_parse_without_rules():
    with pytest.raises(FamilyError):
        parse_family("dim 2\n")


def test_round_trip_text():
    for e in catalog.CATALOG.values():
        f = e.family
        assert parse_family(f.to_text()) == f


def test_disjoint_rules():
    assert has_disjoint_rules(parse_family(FIG1)) == (False, None)
    ok, pair = has_disjoint_rules(catalog.family("voter1d"))
    assert ok and not set(pair[0].offsets) & set(pair[1].offsets)


# -- directions ---------------------------------------------------------------

def test_diamond_is_monotone_and_inverse():
    angles = [diamond(v) for v in SMALL]
    assert angles == sorted(angles) and len(set(angles)) == len(angles)
    for v in SMALL:
        assert from_diamond(diamond(v)) == v
        assert (diamond((-v[0], -v[1])) - diamond(v)) % 4 == 2


def test_half_turn_predicate_against_angles():
    import math

    for s, e in itertools.product(SMALL[::7], SMALL[::5]):
        if s == e:
            continue
        measure = (math.atan2(e[1], e[0]) - math.atan2(s[1], s[0])) % (2 * math.pi)
        assert spans_half_turn(s, e) == (measure >= math.pi - 1e-12)


# -- arcs ---------------------------------------------------------------------

def test_rule_arc_example():
    arc = destabilizing_arc(UpdateRule(((-1, 0), (-1, 1))))
    assert arc.arcs == (Arc((0, -1), (1, 1), False, False),)


def test_single_offset_arc_is_open_semicircle():
    arc = destabilizing_arc(UpdateRule(((-1, 0),)))
    assert arc.arcs == (Arc((0, -1), (0, 1), False, False),)


@pytest.mark.parametrize("key", sorted(catalog.CATALOG))
def test_arc_sets_agree_with_direct_test(key):
    f = catalog.family(key)
    if f.dim == 1:
        f = embed_1d(f)
    st_, un = stable_set(f), unstable_set(f)
    for v in SMALL:
        assert st_.contains(v) == is_stable(f, v)
        assert un.contains(v) != st_.contains(v)


def test_rule_arcs_exhaustive_small_rules():
    offsets = [(x, y) for x in range(-2, 3) for y in range(-2, 3) if (x, y) != (0, 0)]
    for k in (1, 2):
        for rule in itertools.combinations(offsets, k):
            arc = destabilizing_arc(UpdateRule(rule))
            for v in SMALL[::3]:
                assert arc.contains(v) == all(x * v[0] + y * v[1] < 0 for x, y in rule)


def test_fig1_sets():
    f = parse_family(FIG1)
    assert unstable_set(f).arcs == (Arc((0, -1), (0, 1), False, False),)
    assert stable_set(f).arcs == (Arc((0, 1), (0, -1), True, True),)


def test_nn2d_stable_points():
    s = stable_set(catalog.family("nn2d-2"))
    assert sorted(s.points()) == sorted([(1, 0), (0, 1), (-1, 0), (0, -1)])
    assert not s.proper_arcs()


def test_cross_all_stable():
    f = catalog.family("cross-subcritical")
    assert unstable_set(f).is_empty() and stable_set(f).full


dirs = st.sampled_from(SMALL)


@st.composite
def arc_sets(draw):
    crit = draw(st.lists(dirs, min_size=0, max_size=5))
    bits = draw(st.lists(st.booleans(), min_size=64, max_size=64))
    table = {v: bits[i % 64] for i, v in enumerate(SMALL)}
    return ArcSet.from_predicate(crit, lambda v: table[v] if v in crit else bits[len(crit) % 64] ^ (diamond(v) > 2))


@settings(max_examples=150, deadline=None)
@given(arc_sets(), arc_sets())
def test_set_algebra(a, b):
    u, i = a.union(b), a.intersection(b)
    for v in SMALL[::2]:
        assert u.contains(v) == (a.contains(v) or b.contains(v))
        assert i.contains(v) == (a.contains(v) and b.contains(v))
        assert a.complement().contains(v) != a.contains(v)
    # normalization is canonical
    assert a.union(a) == a and u == b.union(a) and i == b.intersection(a)
    assert a.complement().complement() == a


# -- classification ----------------------------------------------------------

@pytest.mark.parametrize("key", sorted(catalog.CATALOG))
def test_catalog_self_test(key):
    e = catalog.get(key)
    c = classify(e.family)
    assert c.kind == e.kind and c.has_disjoint_rules == e.disjoint


def test_classification_examples():
    assert classify_2d(parse_family(FIG1)).kind == SUPERCRITICAL
    assert classify_2d(catalog.family("nn2d-2")).kind == CRITICAL
    assert classify_2d(catalog.family("cross-subcritical")).kind == SUBCRITICAL


@pytest.mark.parametrize("key", sorted(catalog.CATALOG))
def test_open_and_closed_readings_agree(key):
    f = catalog.family(key)
    f = embed_1d(f) if f.dim == 1 else f
    assert classify_2d(f, "open").kind == classify_2d(f, "closed").kind


def test_readings_agree_on_random_families():
    import numpy as np

    from uvoter.oracles import random_family

    rng = np.random.default_rng(5)
    for _ in range(150):
        f = random_family(rng, span=3, max_size=4)
        assert classify_2d(f, "open").kind == classify_2d(f, "closed").kind


def test_boundary_families_against_oracle():
    # stable set is a closed semicircle plus nothing else: gap of exactly pi
    f = UpdateFamily.of([(1, 0), (1, 1)], [(1, 0), (1, -1)])
    assert classify_2d(f).kind == SUPERCRITICAL
    g = UpdateFamily.of([(0, 1), (0, -1), (1, 0)])
    assert classify_2d(g).kind == grid_classify_oracle(g).kind


def test_one_dimensional_classes():
    assert classify_1d(catalog.family("voter1d")).kind == SUPERCRITICAL
    assert classify_1d(catalog.family("chain1d")).kind == SUPERCRITICAL
    assert classify_1d(catalog.family("both1d")).kind == SUBCRITICAL


def test_one_dimensional_sign_symmetry():
    import numpy as np

    rng = np.random.default_rng(2)
    for _ in range(100):
        rules = [
            sorted({int(v) for v in rng.choice([-3, -2, -1, 1, 2, 3], size=rng.integers(1, 4))})
            for _ in range(rng.integers(1, 4))
        ]
        f = UpdateFamily.of(*[[(v,) for v in r] for r in rules])
        g = UpdateFamily.of(*[[(-v,) for v in r] for r in rules])
        assert classify_1d(f).kind == classify_1d(g).kind
        assert classify_1d(f).supercritical == classify_2d(embed_1d(f)).supercritical
