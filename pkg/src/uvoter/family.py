"""Update families: parsing, disjoint rules, stable directions and classification.

Directions on the circle are primitive integer vectors.  Angular order uses the
*diamond angle*, an exact rational in ``[0, 4)`` that is strictly monotone in the
true angle and maps antipodes to a shift by 2, so every order or measure question
about arcs is settled with integer arithmetic.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Callable, Iterable, Optional, Sequence

from .surd import Surd

Site = tuple  # tuple[int] in 1D, tuple[int, int] in 2D
Vec = tuple[int, int]


class FamilyError(ValueError):
    """Malformed family text or an invalid rule."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class UpdateRule:
    offsets: tuple  # sorted tuple of distinct nonzero offsets, all of one dimension

    def __post_init__(self):
        if not self.offsets:
            raise FamilyError("empty rule")
        dims = {len(o) for o in self.offsets}
        if len(dims) != 1:
            raise FamilyError("rule mixes dimensions")
        if any(all(c == 0 for c in o) for o in self.offsets):
            raise FamilyError("zero offset")
        object.__setattr__(self, "offsets", tuple(sorted(set(map(tuple, self.offsets)))))

    @property
    def dim(self) -> int:
        return len(self.offsets[0])

    def __len__(self):
        return len(self.offsets)

    def __iter__(self):
        return iter(self.offsets)

    def to_text(self) -> str:
        return "rule " + " ".join("(" + ",".join(map(str, o)) + ")" for o in self.offsets)


@dataclass(frozen=True)
class UpdateFamily:
    rules: tuple[UpdateRule, ...]
    dim: int = field(init=False)
    range_sq: int = field(init=False)

    def __post_init__(self):
        if not self.rules:
            raise FamilyError("family has no rules")
        rules = []
        for r in self.rules:
            r = r if isinstance(r, UpdateRule) else UpdateRule(tuple(r))
            if r not in rules:
                rules.append(r)
        dims = {r.dim for r in rules}
        if len(dims) != 1:
            raise FamilyError("rules of different dimensions")
        object.__setattr__(self, "rules", tuple(rules))
        object.__setattr__(self, "dim", dims.pop())
        object.__setattr__(
            self, "range_sq", max(sum(c * c for c in o) for r in rules for o in r)
        )

    @classmethod
    def of(cls, *rules) -> "UpdateFamily":
        """Build from plain offset collections, e.g. ``UpdateFamily.of([(1,)], [(-1,)])``."""
        return cls(tuple(UpdateRule(tuple(map(tuple, r))) for r in rules))

    @property
    def range(self) -> Surd:
        return Surd.sqrt(self.range_sq)

    @property
    def seal_width(self) -> int:
        """Smallest integer >= r."""
        k = math.isqrt(self.range_sq)
        return k if k * k == self.range_sq else k + 1

    def __len__(self):
        return len(self.rules)

    def to_text(self) -> str:
        return "; ".join([f"dim {self.dim}"] + [r.to_text() for r in self.rules])


_TUPLE = re.compile(r"\(([^()]*)\)")


def parse_family(text: str) -> UpdateFamily:
    """Parse the line-oriented family format.

    ``#`` starts a comment; ``;`` may stand in for a newline so that a whole family
    fits on one line (``dim 2; rule (-1,0) (-1,1); rule (-1,0) (-1,-1)``).
    """
    dim = None
    rules = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        for stmt in raw.split("#", 1)[0].split(";"):
            stmt = stmt.strip()
            if not stmt:
                continue
            head, _, rest = stmt.partition(" ")
            if dim is None:
                if head != "dim" or rest.strip() not in ("1", "2"):
                    raise FamilyError("expected 'dim 1' or 'dim 2'", lineno)
                dim = int(rest)
                continue
            if head != "rule":
                raise FamilyError(f"unexpected statement {stmt!r}", lineno)
            leftover = _TUPLE.sub("", rest).strip()
            if leftover:
                raise FamilyError(f"syntax error near {leftover!r}", lineno)
            offsets = []
            for m in _TUPLE.finditer(rest):
                try:
                    coords = tuple(int(c) for c in m.group(1).split(","))
                except ValueError:
                    raise FamilyError(f"bad offset ({m.group(1)})", lineno) from None
                if len(coords) != dim:
                    raise FamilyError(f"offset {coords} does not have dimension {dim}", lineno)
                if all(c == 0 for c in coords):
                    raise FamilyError("zero offset", lineno)
                offsets.append(coords)
            if not offsets:
                raise FamilyError("empty rule", lineno)
            rules.append(UpdateRule(tuple(offsets)))
    if dim is None:
        raise FamilyError("missing 'dim' line")
    if not rules:
        raise FamilyError("family has no rules")
    return UpdateFamily(tuple(rules))


def has_disjoint_rules(f: UpdateFamily) -> tuple[bool, Optional[tuple[UpdateRule, UpdateRule]]]:
    for a, b in combinations(f.rules, 2):
        if not set(a.offsets) & set(b.offsets):
            return True, (a, b)
    return False, None


# ---------------------------------------------------------------------------
# directions

def primitive(v: Sequence[int]) -> Vec:
    g = math.gcd(abs(v[0]), abs(v[1]))
    if g == 0:
        raise ValueError("zero vector has no direction")
    return (v[0] // g, v[1] // g)


def dot(a, b) -> int:
    return a[0] * b[0] + a[1] * b[1]


def cross(a, b) -> int:
    return a[0] * b[1] - a[1] * b[0]


def rot90(v) -> Vec:
    return (-v[1], v[0])


def diamond(v) -> Fraction:
    """Exact pseudo-angle in [0, 4), monotone in the angle of ``v``."""
    x, y = v
    if y >= 0 and x > 0:
        return Fraction(y, x + y)
    if x <= 0 and y > 0:
        return 1 + Fraction(-x, y - x)
    if y <= 0 and x < 0:
        return 2 + Fraction(-y, -x - y)
    return 3 + Fraction(x, x - y)


def from_diamond(p: Fraction) -> Vec:
    """Primitive direction with diamond angle ``p`` (inverse of :func:`diamond`)."""
    p = Fraction(p) % 4
    q, t = divmod(p, 1)
    # each quadrant is the segment between two consecutive axis vectors
    a, b = [((1, 0), (0, 1)), ((0, 1), (-1, 0)), ((-1, 0), (0, -1)), ((0, -1), (1, 0))][int(q)]
    x = (1 - t) * a[0] + t * b[0]
    y = (1 - t) * a[1] + t * b[1]
    den = math.lcm(x.denominator, y.denominator)
    return primitive((int(x * den), int(y * den)))


def spans_half_turn(s: Vec, e: Vec) -> bool:
    """Whether the counterclockwise arc from ``s`` to ``e`` has measure >= pi.

    With ``s != e`` the measure is in (0, 2*pi); it is below pi exactly when ``e``
    lies strictly left of ``s`` (cross > 0), is pi when ``e == -s`` (cross == 0),
    and exceeds pi when cross < 0.  ``s == e`` denotes a full turn.
    """
    return s == e or cross(s, e) <= 0


def _offset_from(s: Vec, v: Vec) -> Fraction:
    return (diamond(v) - diamond(s)) % 4


# ---------------------------------------------------------------------------
# arcs

@dataclass(frozen=True)
class Arc:
    """Counterclockwise arc from ``start`` to ``end``.

    ``start == end`` with both ends closed is a single point; with both ends open it
    is the circle minus that point.
    """

    start: Vec
    end: Vec
    start_closed: bool
    end_closed: bool

    @property
    def is_point(self) -> bool:
        return self.start == self.end and self.start_closed

    def contains(self, v: Vec) -> bool:
        if v == self.start:
            return self.start_closed
        if v == self.end:
            return self.end_closed
        if self.start == self.end:
            return not self.start_closed
        return _offset_from(self.start, v) < _offset_from(self.start, self.end)

    def at_least_half_turn(self) -> bool:
        return not self.is_point and spans_half_turn(self.start, self.end)

    def describe(self) -> str:
        if self.is_point:
            return f"{{{self.start}}}"
        lb = "[" if self.start_closed else "("
        rb = "]" if self.end_closed else ")"
        return f"{lb}{self.start} -> {self.end}{rb}"


@dataclass(frozen=True)
class ArcSet:
    """A finite union of arcs, kept in a canonical normalized form."""

    arcs: tuple[Arc, ...] = ()
    full: bool = False

    @classmethod
    def empty(cls) -> "ArcSet":
        return cls()

    @classmethod
    def circle(cls) -> "ArcSet":
        return cls((), True)

    def contains(self, v: Sequence[int]) -> bool:
        v = primitive(v)
        return self.full or any(a.contains(v) for a in self.arcs)

    def critical_directions(self) -> set[Vec]:
        return {d for a in self.arcs for d in (a.start, a.end)}

    def is_empty(self) -> bool:
        return not self.full and not self.arcs

    def points(self) -> list[Vec]:
        return [a.start for a in self.arcs if a.is_point]

    def proper_arcs(self) -> list[Arc]:
        return [a for a in self.arcs if not a.is_point]

    @classmethod
    def from_predicate(cls, criticals: Iterable[Vec], member: Callable[[Vec], bool]) -> "ArcSet":
        """Build the set whose membership is constant between consecutive criticals.

        ``member`` is evaluated on every critical direction and on one direction
        strictly inside each gap between consecutive criticals.
        """
        dirs = sorted({primitive(d) for d in criticals}, key=diamond)
        if not dirs:
            return cls.circle() if member((1, 0)) else cls.empty()
        angles = [diamond(d) for d in dirs]
        k = len(dirs)
        pts = [member(d) for d in dirs]
        gaps = []
        for i in range(k):
            lo, hi = angles[i], angles[(i + 1) % k]
            if hi <= lo:
                hi += 4
            gaps.append(member(from_diamond((lo + hi) / 2)))
        return cls._normalize(dirs, pts, gaps)

    @classmethod
    def _normalize(cls, dirs, pts, gaps) -> "ArcSet":
        # drop criticals where membership does not change
        keep = [i for i in range(len(dirs)) if not (pts[i] == gaps[i - 1] == gaps[i])]
        if not keep:
            return cls.circle() if pts[0] else cls.empty()
        d = [dirs[i] for i in keep]
        p = [pts[i] for i in keep]
        # gap after kept critical j runs to the next kept critical; membership is
        # constant across dropped criticals, so it equals the first gap's value
        g = [gaps[i] for i in keep]
        k = len(d)
        atoms = []  # cyclic sequence (kind, index, member), kind 0 = point, 1 = gap
        for j in range(k):
            atoms.append((0, j, p[j]))
            atoms.append((1, j, g[j]))
        first_false = next(i for i, a in enumerate(atoms) if not a[2])
        atoms = atoms[first_false + 1:] + atoms[: first_false + 1]
        arcs = []
        run: list = []
        for atom in atoms + [(None, None, False)]:
            if atom[2]:
                run.append(atom)
                continue
            if run:
                (k0, j0, _), (k1, j1, _) = run[0], run[-1]
                start = d[j0]
                end = d[j1] if k1 == 0 else d[(j1 + 1) % k]
                arcs.append(Arc(start, end, k0 == 0, k1 == 0))
                run = []
        arcs.sort(key=lambda a: diamond(a.start))
        return cls(tuple(arcs))

    def _combine(self, other: "ArcSet", op) -> "ArcSet":
        crit = self.critical_directions() | other.critical_directions()
        return ArcSet.from_predicate(crit, lambda v: op(self.contains(v), other.contains(v)))

    def union(self, other: "ArcSet") -> "ArcSet":
        return self._combine(other, lambda a, b: a or b)

    def intersection(self, other: "ArcSet") -> "ArcSet":
        return self._combine(other, lambda a, b: a and b)

    def complement(self) -> "ArcSet":
        return ArcSet.from_predicate(self.critical_directions(), lambda v: not self.contains(v))

    def describe(self) -> str:
        if self.full:
            return "full circle"
        if not self.arcs:
            return "empty"
        return " U ".join(a.describe() for a in self.arcs)


def semicircle(v: Vec, closed: bool) -> ArcSet:
    v = primitive(v)
    w = (-v[0], -v[1])
    return ArcSet.from_predicate([v, w], lambda u: (u in (v, w) and closed) or cross(v, u) > 0)


# ---------------------------------------------------------------------------
# stable directions and classification

def _require_2d(f_or_rule):
    if f_or_rule.dim != 2:
        raise ValueError("stable directions are only defined here in dimension 2")


def destabilizing_arc(rule: UpdateRule) -> ArcSet:
    """Directions ``u`` with ``<x, u> < 0`` for every offset ``x`` of the rule."""
    _require_2d(rule)
    crit = []
    for x in rule:
        p = primitive(rot90(x))
        crit += [p, (-p[0], -p[1])]
    return ArcSet.from_predicate(crit, lambda u: all(dot(x, u) < 0 for x in rule))


def unstable_set(f: UpdateFamily) -> ArcSet:
    _require_2d(f)
    out = ArcSet.empty()
    for r in f.rules:
        out = out.union(destabilizing_arc(r))
    return out


def stable_set(f: UpdateFamily) -> ArcSet:
    return unstable_set(f).complement()


def is_stable(f: UpdateFamily, u: Sequence[int]) -> bool:
    """Direct test: no rule fits in the open half-plane ``{x : <x,u> < 0}``."""
    return not any(all(dot(x, u) < 0 for x in r) for r in f.rules)


SUPERCRITICAL = "Supercritical"
CRITICAL = "Critical"
SUBCRITICAL = "Subcritical"


@dataclass(frozen=True)
class Classification:
    kind: str
    has_disjoint_rules: bool
    witness: Optional[tuple[UpdateRule, UpdateRule]] = None

    @property
    def supercritical(self) -> bool:
        return self.kind == SUPERCRITICAL


def _has_finite_semicircle(stable: ArcSet, closed: bool) -> bool:
    """Whether some semicircle meets ``stable`` in finitely many directions.

    Checked by intersecting candidate semicircles with the stable set; a
    qualifying semicircle can be rotated until one of its ends hits an end of a
    positive-length stable arc, so those ends and their antipodes suffice.
    """
    arcs = stable.proper_arcs()
    if stable.full:
        return False
    if not arcs:
        return True
    cands = set()
    for a in arcs:
        for d in (a.start, a.end):
            cands |= {d, (-d[0], -d[1])}
    for v in sorted(cands, key=diamond):
        if not semicircle(v, closed).intersection(stable).proper_arcs():
            return True
    return False


def classify_2d(f: UpdateFamily, semicircle_reading: str = "closed") -> Classification:
    _require_2d(f)
    disjoint, witness = has_disjoint_rules(f)
    unstable = unstable_set(f)
    if unstable.full or any(a.at_least_half_turn() for a in unstable.arcs):
        return Classification(SUPERCRITICAL, disjoint, witness)
    stable = unstable.complement()
    if semicircle_reading == "closed":
        arcs = stable.proper_arcs()
        if stable.full:
            critical = False
        elif not arcs:
            critical = True
        else:
            # gaps between consecutive positive-length stable arcs
            critical = any(
                spans_half_turn(a.end, arcs[(i + 1) % len(arcs)].start) for i, a in enumerate(arcs)
            )
    elif semicircle_reading == "open":
        critical = _has_finite_semicircle(stable, closed=False)
    else:
        raise ValueError(f"unknown semicircle reading {semicircle_reading!r}")
    return Classification(CRITICAL if critical else SUBCRITICAL, disjoint, witness)


def classify_1d(f: UpdateFamily) -> Classification:
    if f.dim != 1:
        raise ValueError("classify_1d needs a one-dimensional family")
    disjoint, witness = has_disjoint_rules(f)
    one_sided = any(all(o[0] > 0 for o in r) or all(o[0] < 0 for o in r) for r in f.rules)
    return Classification(SUPERCRITICAL if one_sided else SUBCRITICAL, disjoint, witness)


def classify(f: UpdateFamily) -> Classification:
    return classify_1d(f) if f.dim == 1 else classify_2d(f)


def embed_1d(f: UpdateFamily) -> UpdateFamily:
    """The 2D family obtained by placing a 1D family on the horizontal axis."""
    if f.dim != 1:
        raise ValueError("not a one-dimensional family")
    return UpdateFamily.of(*[[(o[0], 0) for o in r] for r in f.rules])


def grid_directions(n: int) -> list[Vec]:
    """Rational directions on the boundary of the square ``[-m, m]^2``, ccw from (m, 0).

    ``m`` is ``n // 8`` rounded down to a multiple of 60 when that is possible, so
    every direction with coordinates up to 6 in absolute value is sampled exactly.
    """
    if n < 64:
        raise ValueError("grid size must be at least 64")
    m = n // 8
    if m >= 60:
        m -= m % 60
    pts = []
    pts += [(m, j) for j in range(0, m)]
    pts += [(m - j, m) for j in range(0, 2 * m)]
    pts += [(-m, m - j) for j in range(0, 2 * m)]
    pts += [(-m + j, -m) for j in range(0, 2 * m)]
    pts += [(m, -m + j) for j in range(0, m)]
    return pts


def grid_classify_oracle(f: UpdateFamily, n: int = 4096) -> Classification:
    """Approximate classification by brute force over a dense direction grid.

    Independent of the arc machinery: each sample direction is tested by direct
    dot-product signs and the class definitions are applied to the sampled runs.
    """
    _require_2d(f)
    disjoint, witness = has_disjoint_rules(f)
    dirs = grid_directions(n)
    k = len(dirs)
    half = k // 2
    stable = [is_stable(f, u) for u in dirs]
    # unstable open semicircle: some antipodal pair with only unstable samples between
    doubled = stable + stable
    for i in range(k):
        if not any(doubled[i + 1: i + half]):
            return Classification(SUPERCRITICAL, disjoint, witness)
    # closed semicircle without two adjacent stable samples
    for i in range(k):
        window = doubled[i: i + half + 1]
        if not any(a and b for a, b in zip(window, window[1:])):
            return Classification(CRITICAL, disjoint, witness)
    return Classification(SUBCRITICAL, disjoint, witness)
