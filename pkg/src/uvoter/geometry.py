"""Droplets, enlarged corners and the constants that go with them.

Directions ``u_i`` are unit vectors ``v_i / |v_i|`` with primitive integer ``v_i``.
A half-plane ``<x, u> <= a`` with integer ``x`` is decided through the integer
``<x, v>`` against the exact threshold ``a * |v|``, so every rasterization is a
set of integer inequalities computed once per region.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .family import (
    Classification,
    UpdateFamily,
    Vec,
    classify_2d,
    cross,
    diamond,
    dot,
    primitive,
    stable_set,
)
from .surd import Surd, SurdRoot

GRID = 1 << 16  # denominators of computed scale constants


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class DirectionSet:
    dirs: tuple[Vec, ...]

    def __post_init__(self):
        dirs = tuple(primitive(d) for d in self.dirs)
        if len(dirs) not in (3, 4):
            raise GeometryError("need 3 or 4 directions")
        if list(dirs) != sorted(dirs, key=diamond):
            # accept any rotation of the counterclockwise order
            k = min(range(len(dirs)), key=lambda i: diamond(dirs[i]))
            rotated = dirs[k:] + dirs[:k]
            if list(rotated) != sorted(dirs, key=diamond):
                raise GeometryError("directions must be in counterclockwise order")
        if not surrounds_origin(dirs):
            raise GeometryError("origin is not strictly inside the convex hull")
        object.__setattr__(self, "dirs", dirs)

    @property
    def m(self) -> int:
        return len(self.dirs)

    def norm_sq(self, i: int) -> int:
        v = self.dirs[i % self.m]
        return dot(v, v)

    def __getitem__(self, i):
        return self.dirs[i % self.m]


def surrounds_origin(dirs: Sequence[Vec]) -> bool:
    """0 is interior to conv(dirs) iff every ccw gap between consecutive ones is < pi."""
    ds = sorted(dirs, key=diamond)
    return len(set(ds)) == len(ds) and all(
        cross(ds[i], ds[(i + 1) % len(ds)]) > 0 for i in range(len(ds))
    )


AXES = DirectionSet(((1, 0), (0, 1), (-1, 0), (0, -1)))


def _candidate_pool(stable) -> list[Vec]:
    pool = set(stable.points())
    for a in stable.proper_arcs():
        pool |= {a.start, a.end}
    for x in range(-2, 3):
        for y in range(-2, 3):
            if (x, y) != (0, 0) and math.gcd(x, y) == 1 and stable.contains((x, y)):
                pool.add((x, y))
    return sorted(pool, key=lambda v: (dot(v, v), diamond(v)))


def _cost(combo) -> tuple:
    ds = sorted(combo, key=diamond)
    return (sum(dot(v, v) for v in ds), tuple(diamond(v) for v in ds)), tuple(ds)


def select_directions(f: UpdateFamily, classification: Optional[Classification] = None) -> DirectionSet:
    """Canonical stable directions with the origin strictly inside their hull.

    Candidates are isolated stable directions, ends of stable arcs and primitive
    stable vectors with coordinates in ``{-2..2}``; triples of the form
    ``(b, c, -(b+c))`` are also tried.  Triples are preferred to quadruples, and
    among valid sets the one with the smallest total squared norm wins, ties broken
    by the sorted diamond angles.
    """
    cls = classification or classify_2d(f)
    if cls.supercritical:
        raise GeometryError("supercritical families have no droplet directions")
    stable = stable_set(f)
    pool = _candidate_pool(stable)
    triples = [c for c in combinations(pool, 3) if surrounds_origin(c)]
    for b, c in combinations(pool, 2):
        s = (-(b[0] + c[0]), -(b[1] + c[1]))
        if s != (0, 0):
            s = primitive(s)
            if stable.contains(s) and surrounds_origin((b, c, s)):
                triples.append((b, c, s))
    if triples:
        return DirectionSet(min(_cost(t) for t in triples)[1])
    quads = [c for c in combinations(pool, 4) if surrounds_origin(c)]
    if quads:
        return DirectionSet(min(_cost(q) for q in quads)[1])
    raise GeometryError("no stable directions surround the origin")


# ---------------------------------------------------------------------------
# half-planes and rasterization

def _scale(a) -> SurdRoot:
    if isinstance(a, float):
        raise TypeError("scales must be exact (int, Fraction, Surd or SurdRoot)")
    return SurdRoot.coerce(a)


def _max_int(norm_sq: int, scale: SurdRoot, closed: bool) -> int:
    """Largest integer s with ``s / sqrt(norm_sq)`` <= scale (or < when open)."""
    root = Surd.sqrt(norm_sq) / norm_sq
    s = math.floor(float(scale) * math.sqrt(norm_sq))

    def ok(k):
        c = scale.compare(root * k)
        return c <= 0 if closed else c < 0

    while not ok(s):
        s -= 1
    while ok(s + 1):
        s += 1
    return s


# a lattice region is a list of integer constraints <x, w> <= t
Constraint = tuple[Vec, int]


def droplet_constraints(dirs: DirectionSet, a, kind: str = "D", center=(0, 0)) -> list[Constraint]:
    a = _scale(a)
    out = []
    for i, v in enumerate(dirs.dirs):
        n = dirs.norm_sq(i)
        if kind == "D":
            w = (-v[0], -v[1])
            t = _max_int(n, a, closed=True)
        elif kind == "Dprime":
            w = v
            t = _max_int(n, a, closed=False)
        else:
            raise ValueError(f"unknown droplet kind {kind!r}")
        out.append((w, t + dot(w, center)))
    return out


def strip_constraints(dirs: DirectionSet, i: int, a, r, center=(0, 0)) -> list[Constraint]:
    """``a - r <= <x - center, -u_i> <= a`` as two integer constraints."""
    a, r = Surd.coerce(a), Surd.coerce(r)
    v = dirs[i]
    n = dirs.norm_sq(i)
    upper = ((-v[0], -v[1]), _max_int(n, SurdRoot(a), closed=True))
    # <x,-u> >= a - r  <=>  <x,u> <= r - a
    lower = (v, _max_int(n, SurdRoot(r - a), closed=True))
    return [(w, t + dot(w, center)) for w, t in (upper, lower)]


def corner_constraints(dirs: DirectionSet, i: int, a, r, center=(0, 0)) -> list[Constraint]:
    return strip_constraints(dirs, i, a, r, center) + strip_constraints(dirs, i + 1, a, r, center)


def lattice_points(constraints: Sequence[Constraint]) -> np.ndarray:
    """All integer points satisfying every constraint, as an (k, 2) array sorted lexicographically."""
    verts = []
    for (w1, t1), (w2, t2) in combinations(constraints, 2):
        det = cross(w1, w2)
        if det == 0:
            continue
        x = (t1 * w2[1] - t2 * w1[1]) / det
        y = (w1[0] * t2 - w2[0] * t1) / det
        if all(w[0] * x + w[1] * y <= t + 1e-7 * (1 + abs(t)) for w, t in constraints):
            verts.append((x, y))
    if not verts:
        return np.zeros((0, 2), dtype=np.int64)
    vs = np.array(verts)
    lo = np.floor(vs.min(axis=0)).astype(int) - 1
    hi = np.ceil(vs.max(axis=0)).astype(int) + 1
    xs, ys = np.meshgrid(np.arange(lo[0], hi[0] + 1), np.arange(lo[1], hi[1] + 1), indexing="ij")
    mask = np.ones(xs.shape, dtype=bool)
    for w, t in constraints:
        mask &= w[0] * xs + w[1] * ys <= t
    return np.stack([xs[mask], ys[mask]], axis=1).astype(np.int64)


def _as_set(points: np.ndarray) -> frozenset:
    return frozenset(map(tuple, points.tolist()))


@dataclass(frozen=True)
class Droplet:
    center: Vec
    a: object  # exact positive scale
    dirs: DirectionSet
    kind: str = "D"  # "D" or "Dprime"


@dataclass(frozen=True)
class CornerRegion:
    """Enlarged corner between the i-th and (i+1)-th directions, counting from 1 and mod m."""

    i: int
    a: object
    dirs: DirectionSet
    center: Vec = (0, 0)


def droplet_points(d: Droplet) -> np.ndarray:
    if SurdRoot.coerce(d.a).compare(0) >= 0:
        raise GeometryError("droplet scale must be positive")
    return lattice_points(droplet_constraints(d.dirs, d.a, d.kind, d.center))


def droplet_sites(d: Droplet) -> frozenset:
    return _as_set(droplet_points(d))


def corner_points(c: CornerRegion, r) -> np.ndarray:
    a, rr = _scale(c.a), SurdRoot.coerce(r)
    if a.radicand.sign() != 0:
        raise TypeError("corner scales must be surds")
    if rr.compare(0) >= 0:
        raise GeometryError("range must be positive")
    if a.compare(rr.base) > 0:
        raise GeometryError("corner scale must be at least the range")
    return lattice_points(corner_constraints(c.dirs, c.i - 1, a.base, rr.base, c.center))


def corner_sites(c: CornerRegion, r) -> frozenset:
    return _as_set(corner_points(c, r))


def all_corner_sites(dirs: DirectionSet, a, r, center=(0, 0)) -> frozenset:
    out = set()
    for i in range(1, dirs.m + 1):
        out |= corner_sites(CornerRegion(i, a, dirs, center), r)
    return frozenset(out)


# ---------------------------------------------------------------------------
# exact real polygons (for the separation constant)

def _feasible(halfplanes: list[tuple[Vec, Surd]]) -> bool:
    """Whether a bounded intersection of closed half-planes ``<x,w> <= b`` is nonempty."""
    for (w1, b1), (w2, b2) in combinations(halfplanes, 2):
        det = cross(w1, w2)
        if det == 0:
            continue
        x = (b1 * w2[1] - b2 * w1[1]) / det
        y = (b2 * w1[0] - b1 * w2[0]) / det
        if all((x * w[0] + y * w[1] - b).sign() <= 0 for w, b in halfplanes):
            return True
    return False


def strips_disjoint(dirs: DirectionSet, a, r, i: int) -> bool:
    """Whether ``D(a)`` meets the strips of width r along sides i and i+2 in disjoint sets.

    Sides are counted from 1, as for corners.
    """
    if dirs.m != 4:
        raise GeometryError("opposite strips need m = 4")
    a = Surd.coerce(a if not isinstance(a, float) else Fraction(a))
    r = Surd.coerce(r)
    hp = []
    for j, v in enumerate(dirs.dirs):
        hp.append(((-v[0], -v[1]), a * Surd.sqrt(dirs.norm_sq(j))))
    for j in (i - 1, i + 1):
        v = dirs[j]
        hp.append((v, (r - a) * Surd.sqrt(dirs.norm_sq(j))))
    return not _feasible(hp)


def separation_constant(dirs: DirectionSet, r) -> Fraction:
    """Smallest multiple of 2^-16 at which both pairs of opposite strips are disjoint."""
    if dirs.m == 3:
        return Fraction(0)

    def ok(k):
        a = Fraction(k, GRID)
        return strips_disjoint(dirs, a, r, 1) and strips_disjoint(dirs, a, r, 2)

    hi = GRID
    while not ok(hi):
        hi *= 2
    lo = 0  # ok(0) is taken as false
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return Fraction(hi, GRID)


def _line_meet(v1, b1: Surd, v2, b2: Surd) -> tuple[Surd, Surd]:
    """Solve ``<x, v1> = b1, <x, v2> = b2``."""
    det = cross(v1, v2)
    if det == 0:
        raise GeometryError("parallel sides")
    return (b1 * v2[1] - b2 * v1[1]) / det, (b2 * v1[0] - b1 * v2[0]) / det


def vertex(dirs: DirectionSet, i: int, t_i=1, t_j=1) -> tuple[Surd, Surd]:
    """Point with ``<x, -u_i> = t_i`` and ``<x, -u_{i+1}> = t_j``."""
    v1, v2 = dirs[i], dirs[i + 1]
    n1, n2 = dirs.norm_sq(i), dirs.norm_sq(i + 1)
    return _line_meet(
        (-v1[0], -v1[1]), Surd.coerce(t_i) * Surd.sqrt(n1),
        (-v2[0], -v2[1]), Surd.coerce(t_j) * Surd.sqrt(n2),
    )


def _ceil_grid(x: float) -> Fraction:
    return Fraction(math.ceil(x * GRID + 1e-6), GRID)


@dataclass(frozen=True)
class GeometryConstants:
    K: int
    dirs: Optional[DirectionSet] = None
    M: Optional[float] = None
    Mprime: Optional[float] = None
    M_sq: Optional[Surd] = None
    a0: Optional[Fraction] = None
    a0_tilde: Optional[Fraction] = None
    a0_tilde_value: Optional[float] = None

    @property
    def M_root(self) -> SurdRoot:
        """M as an exact number."""
        return SurdRoot(0, self.M_sq)


def compute_constants(
    dirs: Optional[DirectionSet], f: UpdateFamily, classification: Optional[Classification] = None
) -> GeometryConstants:
    cls = classification or classify_2d(f)
    if cls.supercritical:
        return GeometryConstants(K=25)
    if dirs is None:
        raise GeometryError("non-supercritical families need directions")
    m = dirs.m
    r = f.range
    # vertices of D(1); strictly inside every other side or the polygon is degenerate
    corners = [vertex(dirs, i) for i in range(m)]
    for i, c in enumerate(corners):
        for j in range(m):
            if j % m in (i % m, (i + 1) % m):
                continue
            v = dirs[j]
            if (c[0] * -v[0] + c[1] * -v[1] - Surd.sqrt(dirs.norm_sq(j))).sign() >= 0:
                raise GeometryError("degenerate droplet: fewer than m sides")
    norms = [c[0] * c[0] + c[1] * c[1] for c in corners]
    M_sq = max(norms)
    M = math.sqrt(float(M_sq))
    # D'(1) is the reflection of the interior of D(1), so its vertex norms agree
    Mprime = M
    K = (2 * SurdRoot(4 * M_sq, M_sq).ceil() + 1) ** 2
    # corner diameters and the containment constant
    best = 0.0
    for i in range(m):
        pts = [vertex(dirs, i, ti, tj) for ti in (1, 1 - r) for tj in (1, 1 - r)]
        d = math.sqrt(max(
            float((p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]))
            for p, q in combinations(pts, 2)
        ))
        c = corners[i]
        for j in range(m):
            if j % m in (i % m, (i + 1) % m):
                continue
            v = dirs[j]
            t = (c[0] * -v[0] + c[1] * -v[1]) * Surd.sqrt(dirs.norm_sq(j)) / dirs.norm_sq(j)
            best = max(best, d, d / (1 - float(t)))
    return GeometryConstants(
        K=K,
        dirs=dirs,
        M=M,
        Mprime=Mprime,
        M_sq=M_sq,
        a0=separation_constant(dirs, r),
        a0_tilde=_ceil_grid(best),
        a0_tilde_value=best,
    )
