from __future__ import annotations

import math

import numpy as np
import pytest

from uvoter import catalog
from uvoter.analysis import (
    BlockContext,
    BlockGrid,
    FrozenMarks,
    WellFixedReport,
    droplet_scan,
    droplet_stress_configuration,
    estimate_good_block_probability,
    flipper_stats,
    forced_flipper_sites,
    forcing_trace,
    good_block_check,
    good_droplet_check,
    non_fixed_components,
    reachability_oracle,
    well_fixed_certificate,
)
from uvoter.dynamics import (
    FROZEN_MINUS,
    FROZEN_PLUS,
    ISING,
    MINUS,
    PLUS,
    VOTER,
    Boundary,
    SimulationConfig,
    SpinConfiguration,
    ValidationError,
    make_rng,
    replay,
    run,
    sealed_window,
    simulate,
)
from uvoter.family import UpdateFamily
from uvoter.geometry import AXES, CornerRegion, Droplet, corner_sites, droplet_sites
from uvoter.oracles import certificate_suite
from uvoter.surd import Surd

FIG1 = catalog.family("fig1")
NN = catalog.family("nn2d-2")
V1 = catalog.family("voter1d")
LEFT = UpdateFamily.of([(1,)])


def segment(states, frozen=None, mark=PLUS, f=LEFT):
    """Sealed 1D window with the given interior states."""
    w = len(states)
    inside, interior, origin = sealed_window(w, 1, f.seal_width, mark, dim=1)
    seal = f.seal_width
    state = np.full(inside.shape, mark, dtype=np.int8)
    fz = np.full(inside.shape, mark, dtype=np.int8)
    state[seal : seal + w, 0] = states
    fz[seal : seal + w, 0] = frozen if frozen is not None else 0
    return SpinConfiguration(state, fz, Boundary("sealed", mark), inside, interior, origin, 1)


# -- certificate and reachability -----------------------------------------------------

def test_all_plus_is_certified():
    inside, interior, origin = sealed_window(6, 6, 1, PLUS)
    c = SpinConfiguration(np.full(inside.shape, PLUS), np.where(interior, 0, PLUS), Boundary("sealed", PLUS),
                          inside, interior, origin)
    rep = well_fixed_certificate(c, NN)
    assert rep.complete and rep.exact and len(rep.certified_plus) == 36


def test_single_minus_on_a_segment():
    states = [PLUS] * 10
    states[5] = MINUS
    rep = well_fixed_certificate(segment(states), LEFT)
    assert rep.certified_plus == frozenset((x,) for x in range(6, 10))
    assert rep.uncertified == frozenset((x,) for x in range(0, 6))


def test_static_boundary_certificate_is_not_exact():
    c = SpinConfiguration(np.full((4, 4), PLUS), np.zeros((4, 4)), Boundary("static", MINUS))
    rep = well_fixed_certificate(c, NN)
    assert not rep.exact and rep.uncertified == c.site_set()


def test_isolated_site_keeps_its_state():
    c = segment([MINUS, PLUS], frozen=[FROZEN_MINUS, 0], f=V1)
    # (1,) sees FROZEN_MINUS on its left and the + seal on its right; rule {1} is never all −
    assert reachability_oracle(c, LEFT) == frozenset({(0,)})


def test_forced_site_reaches_both_states():
    c = segment([MINUS, PLUS, PLUS], frozen=[FROZEN_MINUS, 0, FROZEN_PLUS], f=V1)
    assert forced_flipper_sites(c, V1) == [(1,)]
    reach = reachability_oracle(c, V1)
    assert (1,) in reach and reach - {(0,)} == frozenset({(1,)})


def test_oracle_refuses_large_windows():
    c = segment([PLUS] * 13)
    with pytest.raises(ValidationError):
        reachability_oracle(c, LEFT)


def test_certificate_matches_oracle_on_small_windows():
    assert certificate_suite(80, seed=4).passed


def test_certificate_survives_continued_runs():
    cfg = SimulationConfig(FIG1, width=24, height=24, rho_plus=0.15, rho_minus=0.0, horizon=20.0, seed=5)
    tr = run(cfg)
    rep = well_fixed_certificate(tr.final, FIG1, tr.horizon)
    assert len(rep.certified_plus) > 0
    for kind in (VOTER, ISING):
        more = simulate(tr.final, FIG1, kind, 50.0, make_rng(77))
        touched = {tuple(c) for c in more.site_coords().tolist()}
        assert not touched & rep.certified_plus


# -- good droplets and blocks -------------------------------------------------------

def test_droplet_scan_examples():
    assert droplet_scan(4, Surd(1)) == [8, 10, 12]
    got = droplet_scan(4, Surd.sqrt(2))
    assert got[0] == 8 and got[-1] == 12 and len(got) == 3


def test_good_droplet_saturation():
    m = np.full((21, 21), FROZEN_PLUS, dtype=np.int8)
    marks = FrozenMarks(m, (-10, -10))
    assert good_droplet_check(marks, (0, 0), 3, AXES, 1)
    m2 = m.copy()
    m2[10 - 3, 10 - 3] = 0  # the corner site (-3,-3)
    assert not good_droplet_check(FrozenMarks(m2, (-10, -10)), (0, 0), 3, AXES, 1)


def test_good_droplet_product_law():
    rho, trials = 0.85, 4000
    n_corner = sum(len(corner_sites(CornerRegion(i, 2, AXES), 1)) for i in range(1, 5))
    assert n_corner == 16
    rng = np.random.default_rng(3)
    hits = 0
    for _ in range(trials):
        m = np.where(rng.random((7, 7)) < rho, FROZEN_PLUS, 0).astype(np.int8)
        hits += good_droplet_check(FrozenMarks(m, (-3, -3)), (0, 0), 2, AXES, 1)
    p = rho**n_corner
    assert abs(hits / trials - p) <= 3 * math.sqrt(p * (1 - p) / trials)


@pytest.mark.parametrize("key,L", [("fig1", 3), ("nn2d-2", 2), ("cross-subcritical", 3)])
def test_good_block_saturation_and_one_minus(key, L):
    f = catalog.family(key)
    ctx = BlockContext.build(f, L)
    regions = ctx.regions()
    pts = np.concatenate(list(regions.values()))
    lo = pts.min(axis=0)
    shape = tuple((pts.max(axis=0) - lo + 1).tolist())
    m = np.full(shape, FROZEN_PLUS, dtype=np.int8)
    assert good_block_check(FrozenMarks(m, tuple(lo)), (0, 0), ctx)
    m[tuple(-lo)] = FROZEN_MINUS  # the block centre
    assert not good_block_check(FrozenMarks(m, tuple(lo)), (0, 0), ctx)


def test_block_scale_lower_bound():
    with pytest.raises(ValidationError):
        BlockContext.build(NN, 1)
    with pytest.raises(ValidationError):
        BlockContext.build(V1, 4)


@pytest.mark.parametrize("key,L", [("fig1", 3), ("nn2d-2", 2)])
def test_estimate_extremes(key, L):
    f = catalog.family(key)
    assert estimate_good_block_probability(f, 0.999999, 0.0, L, 5, 0)[0] == 1.0
    assert estimate_good_block_probability(f, 0.0, 0.0, L, 5, 0)[0] == 0.0


def test_estimate_rises_with_scale():
    a, _ = estimate_good_block_probability(FIG1, 0.6, 0.0, 4, 200, 1)
    b, _ = estimate_good_block_probability(FIG1, 0.6, 0.0, 8, 200, 1)
    assert a < b
    a, _ = estimate_good_block_probability(NN, 0.9, 0.0, 2, 200, 1)
    b, _ = estimate_good_block_probability(NN, 0.9, 0.0, 4, 200, 1)
    assert a < b


def test_droplet_stress_configuration_shape():
    a = 5
    c, D = droplet_stress_configuration(NN, AXES, a)
    assert D == droplet_sites(Droplet((0, 0), a, AXES))
    assert good_droplet_check(FrozenMarks.of(c), (0, 0), a, AXES, NN.range)
    assert all(c.value_at(x) == PLUS for x in D)


def test_supercritical_droplet_is_invaded():
    """A good axes droplet does not stop a − pair moving right under the fig1 rules."""
    a = 5
    D = droplet_sites(Droplet((0, 0), a, AXES))
    size, lo = 25, -12
    state = np.full((size, size), PLUS, dtype=np.int8)
    frozen = np.zeros((size, size), dtype=np.int8)
    for i in range(1, 5):
        for x, y in corner_sites(CornerRegion(i, a, AXES), FIG1.range):
            frozen[x - lo, y - lo] = FROZEN_PLUS
    state[-10 - lo, 0 - lo] = state[-10 - lo, 1 - lo] = MINUS
    c = SpinConfiguration(state, frozen, Boundary("static", PLUS), origin=(lo, lo))
    assert good_droplet_check(FrozenMarks.of(c), (0, 0), a, AXES, FIG1.range)
    for kind in (VOTER, ISING):
        tr = forcing_trace(c, FIG1, kind)
        final = replay(tr)
        assert final.same_as(tr.final)
        assert any(final.value_at(x) == MINUS for x in D)


@pytest.mark.parametrize("key", ["nn2d-2", "cross-subcritical"])
def test_good_droplet_holds_against_everything(key):
    from uvoter.bootstrap import minus_closure
    from uvoter.geometry import compute_constants, select_directions

    f = catalog.family(key)
    dirs = select_directions(f)
    a = math.ceil(float(compute_constants(dirs, f).a0_tilde)) + 1
    c, D = droplet_stress_configuration(f, dirs, a)
    assert not minus_closure(c, f) & D


# -- components -----------------------------------------------------------------

def rep(sites):
    return WellFixedReport(0.0, frozenset(), frozenset(sites))


def test_component_examples():
    g = BlockGrid(2)
    assert non_fixed_components(rep([]), g) == []
    assert non_fixed_components(rep([(0, 0)]), g) == [1]
    assert non_fixed_components(rep([(0, 0), (4, 4)]), g) == [2]
    assert non_fixed_components(rep([(0, 0), (8, 0)]), g) == [1, 1]
    assert non_fixed_components(rep([(2, 0)]), g) == [2]  # on a shared boundary
    assert non_fixed_components(rep([(0,), (12,)]), g) == [1, 1]


def test_block_membership():
    g = BlockGrid(3)
    assert g.blocks_of((0, 0)) == [(0, 0)]
    assert sorted(g.blocks_of((3, 3))) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    window = frozenset((x, y) for x in range(-3, 4) for y in range(-3, 4))
    assert not g.is_partial((0, 0), window) and g.is_partial((1, 0), window)


# -- flippers -----------------------------------------------------------------

def test_forced_flippers_need_disjoint_rules():
    c = SpinConfiguration(np.full((5, 5), PLUS), np.full((5, 5), FROZEN_PLUS), Boundary("static", PLUS))
    c.frozen[2, 2] = 0
    assert forced_flipper_sites(c, FIG1) == []


def test_forced_flipper_density():
    n, rp, rm = 1_000_000, 0.3, 0.2
    rng = np.random.default_rng(8)
    u = rng.random(n)
    frozen = np.where(u < rp, FROZEN_PLUS, np.where(u < rp + rm, FROZEN_MINUS, 0)).astype(np.int8)
    state = np.where(frozen != 0, frozen, PLUS).astype(np.int8)
    c = SpinConfiguration(state, frozen, Boundary("static", PLUS), dim=1)
    k = len(forced_flipper_sites(c, V1))
    # either neighbour order works, and the site itself must be unfrozen
    p = 2 * rp * rm * (1 - rp - rm)
    assert abs(k - n * p) <= 3 * math.sqrt(n * p * (1 - p))


def test_flipper_stats_of_empty_trace():
    c = segment([PLUS] * 4, f=V1)
    tr = simulate(c, V1, VOTER, 10.0, make_rng(0))
    st = flipper_stats(tr, buckets=5)
    assert len(tr) == 0 and st.counts.shape == (6, 5) and not st.counts.any() and not st.tail_flips.any()


def test_forced_flipper_keeps_flipping():
    # tail window 10; the site flips at rate 1/2 whatever its state
    c = segment([MINUS, PLUS, PLUS], frozen=[FROZEN_MINUS, 0, FROZEN_PLUS], f=V1)
    ok = 0
    for seed in range(50):
        tr = simulate(c, V1, VOTER, 50.0, make_rng(seed))
        st = flipper_stats(tr, 10, 0.2)
        ok += st.tail_flips_at([(1,)])[0] > 0
    # P(no tail flip) = e^-5 per seed
    assert ok >= 47


def test_certified_fixation_means_no_tail_flips():
    cfg = SimulationConfig(FIG1, width=20, height=20, rho_plus=0.1, horizon=40.0, seed=2,
                           boundary=Boundary("sealed", PLUS))
    tr = run(cfg)
    rep_ = well_fixed_certificate(tr.final, FIG1, tr.horizon)
    if rep_.complete:
        more = simulate(tr.final, FIG1, VOTER, 40.0, make_rng(1))
        assert len(more) == 0
    inside, interior, origin = sealed_window(20, 20, 1, PLUS)
    c = SpinConfiguration(np.full(inside.shape, PLUS), np.where(interior, 0, PLUS), Boundary("sealed", PLUS),
                          inside, interior, origin)
    assert well_fixed_certificate(c, FIG1).complete
    st = flipper_stats(simulate(c, FIG1, VOTER, 40.0, make_rng(0)))
    assert st.tail_flip_sites() == []


def test_flipper_stats_buckets():
    c = segment([MINUS, PLUS, PLUS], frozen=[FROZEN_MINUS, 0, FROZEN_PLUS], f=V1)
    tr = simulate(c, V1, VOTER, 20.0, make_rng(3))
    st = flipper_stats(tr, 4, 0.5)
    assert st.total().sum() == len(tr)
    assert st.forced_sites == [(1,)]
    with pytest.raises(ValueError):
        flipper_stats(tr, 4, 1.0)
