"""Fixation certificates, good droplets and blocks, block components and flipper statistics."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.stats import binomtest

from .bootstrap import closure, minus_closure
from .dynamics import (
    FROZEN_MINUS,
    FROZEN_PLUS,
    ISING,
    MINUS,
    PLUS,
    UNFROZEN,
    Boundary,
    FlipTrace,
    SpinConfiguration,
    ValidationError,
    _opposite,
    rule_table,
)
from .family import Classification, UpdateFamily, classify, has_disjoint_rules
from .geometry import (
    CornerRegion,
    DirectionSet,
    Droplet,
    GeometryConstants,
    compute_constants,
    corner_points,
    droplet_points,
    select_directions,
)
from .surd import Surd, SurdRoot

ORACLE_LIMIT = 12


# ---------------------------------------------------------------------------
# well-fixed sites

@dataclass(frozen=True)
class WellFixedReport:
    time: float
    certified_plus: frozenset
    uncertified: frozenset
    exact: bool = True  # False when the window is not sealed: the certificate is then only sound

    @property
    def complete(self) -> bool:
        return not self.uncertified


def well_fixed_certificate(config: SpinConfiguration, f: UpdateFamily, time: float = 0.0) -> WellFixedReport:
    """Interior + sites outside the ⊖-closure of the current − sites.

    Any future − flip is ⊖-infectable from the − sites present now, so the
    certificate is sound.  On a sealed window every closure step can also be
    realised by a suitable sequence of rings, so it is exact there.
    """
    interior = config.interior_sites()
    reach = minus_closure(config, f)
    plus = config.masked_sites(config.state == PLUS)
    certified = (interior & plus) - reach
    return WellFixedReport(time, frozenset(certified), frozenset(interior - certified), config.boundary.kind == "sealed")


def reachability_oracle(config: SpinConfiguration, f: UpdateFamily) -> frozenset:
    """Window sites that are − in some configuration reachable by legal single flips.

    Voter and Ising moves share the same flip condition, so one search covers both.
    """
    table = rule_table(config, f)
    n = table.n
    ix, iy = config.array_coords()
    state = config.state[ix, iy].astype(int)
    frozen = config.frozen[ix, iy]
    free = np.nonzero(frozen == UNFROZEN)[0]
    if free.size > ORACLE_LIMIT:
        raise ValidationError(f"oracle limited to {ORACLE_LIMIT} unfrozen sites")
    outside = config.boundary.outside if config.boundary.kind == "static" else 0
    pos = {int(s): b for b, s in enumerate(free)}
    rules = [
        [table.nbr[:, j] for j in range(start, start + length)]
        for start, length in zip(table.rstart.tolist(), table.rlen.tolist())
    ]

    def value(code, s):
        if s == n:
            return outside
        b = pos.get(s)
        if b is None:
            return state[s]
        return PLUS if code >> b & 1 else MINUS

    def can_flip(code, x):
        s = value(code, x)
        return any(all(value(code, int(col[x])) == -s for col in rule) for rule in rules)

    start = sum(1 << b for b, s in enumerate(free) if state[s] == PLUS)
    seen = {start}
    queue = deque([start])
    minus_ever = set(np.nonzero(state == MINUS)[0].tolist())
    while queue:
        code = queue.popleft()
        for b, x in enumerate(free.tolist()):
            if can_flip(code, x):
                nxt = code ^ (1 << b)
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
                    if not nxt >> b & 1:
                        minus_ever.add(x)
    coords = config.site_coords()
    return frozenset(tuple(coords[i].tolist()) for i in minus_ever)


# ---------------------------------------------------------------------------
# frozen marks on the whole plane

@dataclass(frozen=True)
class FrozenMarks:
    """Frozen marks on a rectangle of the lattice; sites off the rectangle are unfrozen."""

    marks: np.ndarray  # int8, shape (W, H)
    origin: tuple = (0, 0)

    @classmethod
    def of(cls, config: SpinConfiguration) -> "FrozenMarks":
        m = np.where(config.inside, config.frozen, UNFROZEN).astype(np.int8)
        return cls(m, tuple(config.origin[:2]) if config.dim == 2 else (config.origin[0], 0))

    def at(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.int64).reshape(-1, 2)
        x = pts[:, 0] - self.origin[0]
        y = pts[:, 1] - self.origin[1]
        W, H = self.marks.shape
        ok = (x >= 0) & (x < W) & (y >= 0) & (y < H)
        out = np.zeros(len(pts), dtype=np.int8)
        out[ok] = self.marks[x[ok], y[ok]]
        return out


def _shift(points: np.ndarray, x) -> np.ndarray:
    return points + np.asarray(x, dtype=np.int64)


def good_droplet_check(marks: FrozenMarks, center, a, dirs: DirectionSet, r) -> bool:
    """Whether every site of every enlarged corner of ``center + D(a)`` is frozen at +."""
    for i in range(1, dirs.m + 1):
        pts = corner_points(CornerRegion(i, a, dirs), r)
        if not np.all(marks.at(_shift(pts, center)) == FROZEN_PLUS):
            return False
    return True


def droplet_scan(L: int, r: Surd) -> list:
    """Scales 2L, 2L + (r+1), ... up to 3L, then 3L itself."""
    scales = []
    n = 0
    while True:
        a = Surd(2 * L) + (r + 1) * n
        if a > 3 * L:
            break
        scales.append(a)
        n += 1
    if not scales or scales[-1] != 3 * L:
        scales.append(Surd(3 * L))
    return scales


@dataclass(frozen=True)
class BlockContext:
    """Everything needed to test blocks of one family at one L."""

    family: UpdateFamily
    classification: Classification
    L: int
    dirs: Optional[DirectionSet] = None
    constants: Optional[GeometryConstants] = None

    @classmethod
    def build(cls, f: UpdateFamily, L: int) -> "BlockContext":
        cls_ = classify(f)
        if cls_.supercritical:
            if cls_.has_disjoint_rules:
                raise ValidationError("good blocks need a family without disjoint rules")
            return cls(f, cls_, L)
        dirs = select_directions(f, cls_)
        return cls(f, cls_, L, dirs, compute_constants(dirs, f, cls_))

    def __post_init__(self):
        if self.L < 1:
            raise ValidationError("L must be positive")
        if not self.classification.supercritical:
            c = self.constants
            need = max(Surd(c.a0), Surd(c.a0_tilde), self.family.range)
            if Surd(self.L) < need:
                raise ValidationError(f"L = {self.L} is below max(a0, a0~, r) ~ {float(need):.4f}")

    def regions(self) -> dict:
        """Lattice regions relative to the block centre."""
        L = self.L
        if self.classification.supercritical:
            rng = np.arange(-2 * L, 2 * L + 1)
            xs, ys = np.meshgrid(rng, rng, indexing="ij")
            outer = np.stack([xs.ravel(), ys.ravel()], axis=1)
            inner = outer[np.abs(outer).max(axis=1) <= L]
            return {"domain": outer, "seeds": outer, "target": inner, "no_minus": outer}
        M_sq = self.constants.M_sq
        scale = SurdRoot(1, M_sq * (16 * L * L))  # 4LM + 1
        return {
            "domain": droplet_points(Droplet((0, 0), scale, self.dirs, "Dprime")),
            "seeds": droplet_points(Droplet((0, 0), 4 * L, self.dirs)),
            "target": droplet_points(Droplet((0, 0), 3 * L, self.dirs)),
            "no_minus": droplet_points(Droplet((0, 0), scale, self.dirs, "Dprime")),
        }

    def corners(self) -> list:
        """For each scanned droplet scale, the union of its corner sites."""
        out = []
        for a in droplet_scan(self.L, self.family.range):
            pts = [corner_points(CornerRegion(i, a, self.dirs), self.family.range) for i in range(1, self.dirs.m + 1)]
            out.append(np.concatenate(pts))
        return out


def good_block_check(marks: FrozenMarks, x, ctx: BlockContext, regions: Optional[dict] = None,
                     corners: Optional[list] = None) -> bool:
    """Good-block test; the cheap conditions are checked before the closure."""
    regions = regions if regions is not None else ctx.regions()
    if np.any(marks.at(_shift(regions["no_minus"], x)) == FROZEN_MINUS):
        return False
    if not ctx.classification.supercritical:
        corners = corners if corners is not None else ctx.corners()
        if not any(np.all(marks.at(_shift(c, x)) == FROZEN_PLUS) for c in corners):
            return False
    seeds_pts = _shift(regions["seeds"], x)
    seeds = seeds_pts[marks.at(seeds_pts) == FROZEN_PLUS]
    target = _shift(regions["target"], x)
    if seeds.shape[0] == 0:
        return target.shape[0] == 0
    dom = set(map(tuple, _shift(regions["domain"], x).tolist()))
    closed, _ = closure(dom, map(tuple, seeds.tolist()), (), ctx.family)
    return all(tuple(p) in closed for p in target.tolist())


def estimate_good_block_probability(f: UpdateFamily, rho_plus: float, rho_minus: float, L: int,
                                    trials: int, seed: int) -> tuple[float, tuple[float, float]]:
    """Monte Carlo estimate of P(block at the origin is good) with a 95% Wilson interval."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    ctx = BlockContext.build(f, L)
    regions = ctx.regions()
    corners = None if ctx.classification.supercritical else ctx.corners()
    allpts = np.concatenate(list(regions.values()) + (corners or []))
    lo = allpts.min(axis=0)
    shape = tuple((allpts.max(axis=0) - lo + 1).tolist())
    good = 0
    for t in range(trials):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, t])))
        u = rng.random(shape)
        m = np.zeros(shape, dtype=np.int8)
        m[u < rho_plus] = FROZEN_PLUS
        m[(u >= rho_plus) & (u < rho_plus + rho_minus)] = FROZEN_MINUS
        good += good_block_check(FrozenMarks(m, tuple(lo.tolist())), (0, 0), ctx, regions, corners)
    ci = binomtest(good, trials).proportion_ci(confidence_level=0.95, method="wilson")
    return good / trials, (float(ci.low), float(ci.high))


# ---------------------------------------------------------------------------
# block components

@dataclass(frozen=True)
class BlockGrid:
    """Blocks ``2 L0 x + {-L0..L0}^d``; neighbouring blocks share their boundary sites."""

    L0: int

    def blocks_of(self, site) -> list:
        per_axis = []
        for c in site:
            q, rem = divmod(c + self.L0, 2 * self.L0)
            per_axis.append([q, q - 1] if rem == 0 else [q])
        out = [()]
        for opts in per_axis:
            out = [b + (q,) for b in out for q in opts]
        return out

    def is_partial(self, block, window: frozenset) -> bool:
        """Whether part of the block lies outside ``window``."""
        ranges = [range(2 * self.L0 * b - self.L0, 2 * self.L0 * b + self.L0 + 1) for b in block]
        grid = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, len(block))
        return not all(tuple(p) in window for p in grid.tolist())


def non_fixed_components(report: WellFixedReport, grid: BlockGrid) -> list[int]:
    """Sorted sizes of connected clusters (sup-norm adjacency) of blocks holding an uncertified site."""
    marked = {b for s in report.uncertified for b in grid.blocks_of(s)}
    if not marked:
        return []
    pts = np.array(sorted(marked))
    lo = pts.min(axis=0)
    arr = np.zeros(tuple((pts.max(axis=0) - lo + 1).tolist()), dtype=bool)
    arr[tuple((pts - lo).T)] = True
    labels, k = ndimage.label(arr, structure=np.ones((3,) * arr.ndim, dtype=bool))
    sizes = np.bincount(labels.ravel())[1:]
    return sorted(sizes.tolist())


# ---------------------------------------------------------------------------
# flippers

def forced_flipper_sites(config: SpinConfiguration, f: UpdateFamily) -> list:
    """Unfrozen sites with one rule all frozen + and a disjoint rule all frozen −."""
    disjoint, _ = has_disjoint_rules(f)
    if not disjoint:
        return []
    table = rule_table(config, f)
    n = table.n
    ix, iy = config.array_coords()
    marks = np.zeros(n + 1, dtype=np.int8)
    marks[:n] = config.frozen[ix, iy]
    rules = list(zip(table.rstart.tolist(), table.rlen.tolist()))
    all_plus = [np.all(marks[table.nbr[:, s : s + k]] == FROZEN_PLUS, axis=1) for s, k in rules]
    all_minus = [np.all(marks[table.nbr[:, s : s + k]] == FROZEN_MINUS, axis=1) for s, k in rules]
    hit = np.zeros(n, dtype=bool)
    for a, ra in enumerate(f.rules):
        for b, rb in enumerate(f.rules):
            if a != b and not set(ra.offsets) & set(rb.offsets):
                hit |= all_plus[a] & all_minus[b]
    hit &= marks[:n] == UNFROZEN
    coords = config.site_coords()
    return [tuple(c) for c in coords[hit].tolist()]


@dataclass(frozen=True)
class FlipperStats:
    sites: list  # window sites, in window order
    counts: np.ndarray  # (n_sites, buckets)
    tail_flips: np.ndarray  # (n_sites,)
    forced_sites: list

    def total(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def tail_flip_sites(self) -> list:
        return [s for s, k in zip(self.sites, self.tail_flips.tolist()) if k > 0]

    def tail_flips_at(self, sites) -> list[int]:
        index = {s: i for i, s in enumerate(self.sites)}
        return [int(self.tail_flips[index[s]]) for s in sites]


def flipper_stats(trace: FlipTrace, buckets: int = 10, tail_fraction: float = 0.2) -> FlipperStats:
    if not 0 < tail_fraction < 1:
        raise ValueError("tail_fraction must lie in (0, 1)")
    if buckets < 1:
        raise ValueError("need at least one bucket")
    sites = trace.initial.sites()
    n = len(sites)
    T = trace.horizon
    b = np.minimum((trace.times / T * buckets).astype(np.int64), buckets - 1)
    counts = np.zeros((n, buckets), dtype=np.int64)
    np.add.at(counts, (trace.sites, b), 1)
    tail = np.zeros(n, dtype=np.int64)
    late = trace.times > (1 - tail_fraction) * T
    np.add.at(tail, trace.sites[late], 1)
    return FlipperStats(sites, counts, tail, forced_flipper_sites(trace.initial, trace.family))


def droplet_stress_configuration(f: UpdateFamily, dirs: DirectionSet, a) -> tuple[SpinConfiguration, frozenset]:
    """Adversarial set-up around ``D(a)``: corners frozen +, the rest of ``D(a)`` at +,
    every other window site frozen − and the outside − as well.

    Returns the configuration and the sites of ``D(a)``.
    """
    inside_pts = droplet_points(Droplet((0, 0), a, dirs))
    corner = np.concatenate([corner_points(CornerRegion(i, a, dirs), f.range) for i in range(1, dirs.m + 1)])
    margin = 2 * f.seal_width
    lo = inside_pts.min(axis=0) - margin
    hi = inside_pts.max(axis=0) + margin
    shape = tuple((hi - lo + 1).tolist())
    state = np.full(shape, MINUS, dtype=np.int8)
    frozen = np.full(shape, FROZEN_MINUS, dtype=np.int8)
    ii = tuple((inside_pts - lo).T)
    state[ii] = PLUS
    frozen[ii] = UNFROZEN
    cc = tuple((corner - lo).T)
    frozen[cc] = FROZEN_PLUS
    config = SpinConfiguration(state, frozen, Boundary("static", MINUS), origin=tuple(lo.tolist()))
    return config, frozenset(map(tuple, inside_pts.tolist()))


# ---------------------------------------------------------------------------
# explicit schedules

def forcing_trace(config: SpinConfiguration, f: UpdateFamily, kind: str, sign: int = MINUS) -> FlipTrace:
    """Flip sites to ``sign`` one per time unit, in the order the bootstrap closure infects them.

    Each record names the rule the closure used (voter) or the first satisfied rule
    (Ising), so the result replays as a legal trace.
    """
    dom, seeds, immune, period = config.closure_problem(sign, f)
    _, witness = closure(dom, seeds, immune, f, period)
    index = {s: i for i, s in enumerate(config.sites())}
    cur = config.copy()
    times, idx, to, rules = [], [], [], []
    for x, k in witness.steps:
        if x not in index:
            continue
        if kind == ISING:
            k = next(j for j, rule in enumerate(f.rules) if _opposite(cur, x, rule, -sign))
        cur.set_state(x, sign)
        times.append(float(len(times) + 1))
        idx.append(index[x])
        to.append(sign)
        rules.append(k)
    return FlipTrace(
        initial=config.copy(),
        times=np.array(times, dtype=float),
        sites=np.array(idx, dtype=np.int64),
        to_states=np.array(to, dtype=np.int8),
        rules=np.array(rules, dtype=np.int64),
        final=cur,
        family=f,
        kind=kind,
        horizon=float(len(times) + 1),
        seed=0,
        end_time=float(len(times)),
    )


__all__ = [
    "BlockContext",
    "BlockGrid",
    "FlipperStats",
    "FrozenMarks",
    "WellFixedReport",
    "droplet_scan",
    "droplet_stress_configuration",
    "estimate_good_block_probability",
    "flipper_stats",
    "forced_flipper_sites",
    "forcing_trace",
    "good_block_check",
    "good_droplet_check",
    "non_fixed_components",
    "reachability_oracle",
    "well_fixed_certificate",
]
