"""U-voter and U-Ising dynamics with frozen vertices on finite windows.

Configurations are stored on a rectangular array; a boolean ``inside`` mask picks
the window out of it.  Window sites are indexed in lexicographic order, and one
extra virtual index stands for everything outside the window.

The clock is simulated by Gillespie sampling: with N unfrozen sites, rings arrive
at rate N and hit a uniform unfrozen site.  This has the same law as independent
rate-1 Poisson clocks.  Each ring consumes three uniforms in the order
(time, site, rule) from a Philox stream; the rule draw is made for Ising runs too,
so both kinds read the stream identically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numba
import numpy as np

from .family import UpdateFamily

PLUS, MINUS = 1, -1
UNFROZEN, FROZEN_PLUS, FROZEN_MINUS = 0, 1, -1
VOTER, ISING = "voter", "ising"

CHUNK = 1 << 15  # rings per batch of uniforms


class ValidationError(ValueError):
    pass


class ReplayError(ValidationError):
    def __init__(self, index: int, msg: str = ""):
        super().__init__(f"record {index}: {msg or 'flip condition does not hold'}")
        self.index = index


@dataclass(frozen=True)
class Boundary:
    kind: str = "sealed"  # sealed | static | torus
    outside: int = PLUS  # seal mark, or the state of every outside site

    def __post_init__(self):
        if self.kind not in ("sealed", "static", "torus"):
            raise ValueError(f"unknown boundary {self.kind!r}")
        if self.outside not in (PLUS, MINUS):
            raise ValueError("outside state must be +1 or -1")

    @classmethod
    def parse(cls, text: str) -> "Boundary":
        if text == "torus":
            return cls("torus")
        try:
            kind, sign = text.split("-")
            return cls(kind, {"plus": PLUS, "minus": MINUS}[sign])
        except (ValueError, KeyError):
            raise ValueError(f"bad boundary {text!r}") from None

    @property
    def name(self) -> str:
        if self.kind == "torus":
            return "torus"
        return f"{self.kind}-{'plus' if self.outside == PLUS else 'minus'}"

    def flipped(self) -> "Boundary":
        return Boundary(self.kind, -self.outside)


def embed(offset) -> tuple[int, int]:
    return (offset[0], 0) if len(offset) == 1 else (offset[0], offset[1])


@dataclass
class SpinConfiguration:
    state: np.ndarray  # int8, +1 / -1 (0 outside the window)
    frozen: np.ndarray  # int8, UNFROZEN / FROZEN_PLUS / FROZEN_MINUS
    boundary: Boundary = field(default_factory=Boundary)
    inside: Optional[np.ndarray] = None
    interior: Optional[np.ndarray] = None  # window minus the seal
    origin: tuple = (0, 0)
    dim: int = 2

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=np.int8)
        self.frozen = np.asarray(self.frozen, dtype=np.int8)
        if self.state.ndim == 1:
            self.state = self.state[:, None]
            self.frozen = self.frozen.reshape(self.state.shape)
        if self.inside is None:
            self.inside = np.ones(self.state.shape, dtype=bool)
        if self.interior is None:
            self.interior = self.inside.copy()
        self.inside = np.asarray(self.inside, dtype=bool).reshape(self.state.shape)
        self.interior = np.asarray(self.interior, dtype=bool).reshape(self.state.shape) & self.inside
        if self.state.shape != self.frozen.shape:
            raise ValidationError("state and frozen shapes differ")
        if self.boundary.kind == "torus" and not self.inside.all():
            raise ValidationError("a torus window must be the full rectangle")
        w = self.inside
        if np.any(np.abs(self.state[w]) != 1):
            raise ValidationError("window states must be +1 or -1")
        fz = self.frozen[w]
        if np.any((fz != 0) & (fz != self.state[w])):
            raise ValidationError("frozen sites must hold their frozen state")

    # -- sites

    @property
    def shape(self):
        return self.state.shape

    def array_coords(self) -> tuple[np.ndarray, np.ndarray]:
        return np.nonzero(self.inside)

    def site_coords(self) -> np.ndarray:
        """(n, dim) array of window sites in index order."""
        ix, iy = self.array_coords()
        pts = np.stack([ix + self.origin[0], iy + self.origin[1]], axis=1)
        return pts[:, : self.dim].astype(np.int64)

    def sites(self) -> list:
        return [tuple(p) for p in self.site_coords().tolist()]

    def site_set(self) -> frozenset:
        return frozenset(self.sites())

    def _array_index(self, site):
        x = site[0] - self.origin[0]
        y = (site[1] - self.origin[1]) if self.dim == 2 else 0
        return x, y

    def contains(self, site) -> bool:
        x, y = self._array_index(site)
        W, H = self.shape
        return 0 <= x < W and 0 <= y < H and bool(self.inside[x, y])

    def value_at(self, site) -> int:
        """State of any site, resolving the boundary policy."""
        x, y = self._array_index(site)
        W, H = self.shape
        if self.boundary.kind == "torus":
            return int(self.state[x % W, y % H])
        if self.contains(site):
            return int(self.state[x, y])
        if self.boundary.kind == "static":
            return self.boundary.outside
        raise ValidationError(f"sealed window read outside at {site}")

    def frozen_at(self, site) -> int:
        x, y = self._array_index(site)
        return int(self.frozen[x, y])

    def set_state(self, site, s: int):
        x, y = self._array_index(site)
        self.state[x, y] = s

    def masked_sites(self, mask: np.ndarray) -> frozenset:
        ix, iy = np.nonzero(mask & self.inside)
        pts = np.stack([ix + self.origin[0], iy + self.origin[1]], axis=1)[:, : self.dim]
        return frozenset(map(tuple, pts.tolist()))

    def interior_sites(self) -> frozenset:
        return self.masked_sites(self.interior)

    # -- copies

    def copy(self) -> "SpinConfiguration":
        return replace(
            self,
            state=self.state.copy(),
            frozen=self.frozen.copy(),
            inside=self.inside.copy(),
            interior=self.interior.copy(),
        )

    def flipped(self) -> "SpinConfiguration":
        return replace(
            self,
            state=-self.state,
            frozen=-self.frozen,
            boundary=self.boundary.flipped() if self.boundary.kind != "torus" else self.boundary,
            inside=self.inside.copy(),
            interior=self.interior.copy(),
        )

    def same_as(self, other: "SpinConfiguration") -> bool:
        return (
            self.shape == other.shape
            and np.array_equal(self.state * self.inside, other.state * other.inside)
            and np.array_equal(self.frozen * self.inside, other.frozen * other.inside)
            and np.array_equal(self.inside, other.inside)
        )

    # -- bootstrap hook

    def closure_problem(self, sign: int, f: UpdateFamily):
        """Domain, seeds, immune set and period for the closure seeded by ``sign``."""
        dom = set(self.sites())
        seeds = self.masked_sites(self.state == sign)
        immune = self.masked_sites(self.frozen == -sign)
        period = None
        if self.boundary.kind == "torus":
            if tuple(self.origin) != (0, 0):
                raise ValidationError("torus closures need origin 0")
            period = self.shape[: self.dim]
        elif self.boundary.kind == "static" and self.boundary.outside == sign:
            # outside sites are permanently infected: add a ring of seeds
            w = f.seal_width
            W, H = self.shape
            ring = set()
            ys = range(-w, H + w) if self.dim == 2 else [0]
            for x in range(-w, W + w):
                for y in ys:
                    inw = 0 <= x < W and 0 <= y < H and self.inside[x, y]
                    if not inw:
                        s = (x + self.origin[0], y + self.origin[1])[: self.dim]
                        ring.add(s)
            dom |= ring
            seeds = seeds | ring
        return dom, seeds, immune, period


def sealed_window(width: int, height: int, seal: int, mark: int = PLUS, dim: int = 2):
    """Masks for an interior of ``width x height`` wrapped in a frozen annulus."""
    if dim == 1:
        W, H = width + 2 * seal, 1
    else:
        W, H = width + 2 * seal, height + 2 * seal
    inside = np.ones((W, H), dtype=bool)
    interior = np.zeros((W, H), dtype=bool)
    if dim == 1:
        interior[seal : seal + width, 0] = True
    else:
        interior[seal : seal + width, seal : seal + height] = True
    origin = (-seal, -seal if dim == 2 else 0)
    return inside, interior, origin


# ---------------------------------------------------------------------------
# neighbour tables

@dataclass(frozen=True)
class RuleTable:
    nbr: np.ndarray  # (n, T) int64, n = outside
    rstart: np.ndarray
    rlen: np.ndarray
    n: int


def rule_table(config: SpinConfiguration, f: UpdateFamily) -> RuleTable:
    if f.dim != config.dim:
        raise ValidationError("family and configuration dimensions differ")
    ix, iy = config.array_coords()
    n = ix.size
    W, H = config.shape
    idx = np.full((W, H), n, dtype=np.int64)
    idx[ix, iy] = np.arange(n)
    offsets = [embed(o) for r in f.rules for o in r.offsets]
    rlen = np.array([len(r.offsets) for r in f.rules], dtype=np.int64)
    rstart = np.concatenate([[0], np.cumsum(rlen)[:-1]]).astype(np.int64)
    nbr = np.empty((n, len(offsets)), dtype=np.int64)
    torus = config.boundary.kind == "torus"
    for j, (dx, dy) in enumerate(offsets):
        X, Y = ix + dx, iy + dy
        if torus:
            nbr[:, j] = idx[X % W, Y % H]
        else:
            ok = (X >= 0) & (X < W) & (Y >= 0) & (Y < H)
            col = np.full(n, n, dtype=np.int64)
            col[ok] = idx[X[ok], Y[ok]]
            nbr[:, j] = col
    if config.boundary.kind == "sealed":
        unfrozen = config.frozen[ix, iy] == UNFROZEN
        if np.any(nbr[unfrozen] == n):
            raise ValidationError("seal is thinner than the range of the family")
    return RuleTable(nbr, rstart, rlen, n)


def _flat_state(config: SpinConfiguration, n: int) -> np.ndarray:
    ix, iy = config.array_coords()
    s = np.empty(n + 1, dtype=np.int8)
    s[:n] = config.state[ix, iy]
    # a sealed window never reads the virtual site; 0 matches no state
    s[n] = config.boundary.outside if config.boundary.kind == "static" else 0
    return s


# ---------------------------------------------------------------------------
# single attempts (reference implementation on site tuples)

@dataclass(frozen=True)
class FlipRecord:
    time: float
    site: tuple
    from_state: int
    to_state: int
    rule_index: int


def _opposite(config, x, rule, s) -> bool:
    return all(config.value_at(tuple(a + b for a, b in zip(x, o))) == -s for o in rule.offsets)


def voter_attempt(config: SpinConfiguration, x, rule, rule_index: int = 0, time: float = 0.0):
    if config.frozen_at(x) != UNFROZEN:
        raise ValidationError(f"{x} is frozen")
    s = config.value_at(x)
    if _opposite(config, x, rule, s):
        config.set_state(x, -s)
        return FlipRecord(time, tuple(x), s, -s, rule_index)
    return None


def ising_attempt(config: SpinConfiguration, x, f: UpdateFamily, time: float = 0.0):
    if config.frozen_at(x) != UNFROZEN:
        raise ValidationError(f"{x} is frozen")
    s = config.value_at(x)
    for k, rule in enumerate(f.rules):
        if _opposite(config, x, rule, s):
            config.set_state(x, -s)
            return FlipRecord(time, tuple(x), s, -s, k)
    return None


# ---------------------------------------------------------------------------
# kernels

@numba.njit(cache=True)
def _all_opposite(state, nbr, x, start, length, s):
    for j in range(start, start + length):
        if state[nbr[x, j]] != -s:
            return False
    return True


@numba.njit(cache=True)
def _advance(state, unfrozen, nbr, rstart, rlen, ising, t, horizon, u, rec_t, rec_x, rec_k):
    N = unfrozen.shape[0]
    R = rstart.shape[0]
    m = u.shape[0] // 3
    nrec = 0
    i = 0
    done = False
    while i < m:
        tn = t - math.log1p(-u[3 * i]) / N
        if tn <= t:
            tn = t + abs(t) * 2.220446049250313e-16 + 5e-324
        if tn > horizon:
            done = True
            break
        t = tn
        x = unfrozen[min(int(u[3 * i + 1] * N), N - 1)]
        k = min(int(u[3 * i + 2] * R), R - 1)
        s = state[x]
        hit = -1
        if ising:
            for kk in range(R):
                if _all_opposite(state, nbr, x, rstart[kk], rlen[kk], s):
                    hit = kk
                    break
        elif _all_opposite(state, nbr, x, rstart[k], rlen[k], s):
            hit = k
        if hit >= 0:
            state[x] = -s
            rec_t[nrec] = t
            rec_x[nrec] = x
            rec_k[nrec] = hit
            nrec += 1
        i += 1
    return t, i, nrec, done


@numba.njit(cache=True)
def _replay(state, frozen, nbr, rstart, rlen, ising, xs, tos, ks):
    R = rstart.shape[0]
    for i in range(xs.shape[0]):
        x = xs[i]
        s = state[x]
        if frozen[x] != 0 or tos[i] != -s or ks[i] < 0 or ks[i] >= R:
            return i
        if not _all_opposite(state, nbr, x, rstart[ks[i]], rlen[ks[i]], s):
            return i
        if ising:
            # the recorded rule must be the first satisfied one
            for kk in range(ks[i]):
                if _all_opposite(state, nbr, x, rstart[kk], rlen[kk], s):
                    return i
        state[x] = -s
    return -1


@numba.njit(cache=True)
def _shield(n, nbr, rstart, rlen, xs, tos, ks, rev):
    T = nbr.shape[1]
    pend = np.full(n, -1, dtype=np.int64)
    psign = np.zeros(n, dtype=np.int8)
    bad = np.zeros(xs.shape[0], dtype=np.bool_)
    rule_of = np.empty(T, dtype=np.int64)
    for k in range(rstart.shape[0]):
        for j in range(rstart[k], rstart[k] + rlen[k]):
            rule_of[j] = k
    for i in range(xs.shape[0]):
        y = xs[i]
        s = tos[i]
        if pend[y] >= 0:
            bad[i] = True
        for j in range(T):
            z = rev[y, j]
            if z >= 0 and pend[z] == rule_of[j] and psign[z] != s:
                pend[z] = -1
        pend[y] = ks[i]
        psign[y] = s
    return bad


# ---------------------------------------------------------------------------
# runs

@dataclass(frozen=True)
class Mu:
    kind: str = "bernoulli"  # bernoulli | all-minus | all-plus | explicit
    p: float = 0.5
    states: Optional[dict] = None  # explicit: site -> state

    @classmethod
    def parse(cls, text: str) -> "Mu":
        if text in ("all-minus", "all-plus"):
            return cls(text)
        if text.startswith("bernoulli:"):
            p = float(text.split(":", 1)[1])
            if not 0 <= p <= 1:
                raise ValueError("bernoulli parameter must lie in [0, 1]")
            return cls("bernoulli", p)
        raise ValueError(f"bad initial distribution {text!r}")

    @property
    def name(self) -> str:
        return f"bernoulli:{self.p}" if self.kind == "bernoulli" else self.kind


@dataclass(frozen=True)
class SimulationConfig:
    family: UpdateFamily
    kind: str = VOTER
    width: int = 32  # interior size; a sealed boundary adds its annulus outside
    height: int = 32
    boundary: Boundary = field(default_factory=Boundary)
    rho_plus: float = 0.0
    rho_minus: float = 0.0
    mu: Mu = field(default_factory=Mu)
    horizon: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (VOTER, ISING):
            raise ValueError(f"unknown dynamics {self.kind!r}")
        if not (0 <= self.rho_plus < 1 and 0 <= self.rho_minus < 1 and self.rho_plus + self.rho_minus < 1):
            raise ValueError("need rho_plus, rho_minus in [0,1) with sum < 1")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("window must be nonempty")

    def as_dict(self) -> dict:
        return {
            "family": self.family.to_text(),
            "kind": self.kind,
            "width": self.width,
            "height": self.height if self.family.dim == 2 else 1,
            "boundary": self.boundary.name,
            "rho_plus": self.rho_plus,
            "rho_minus": self.rho_minus,
            "mu": self.mu.name,
            "horizon": self.horizon,
            "seed": self.seed,
        }


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) % (1 << 64)))


def blank_configuration(cfg: SimulationConfig) -> SpinConfiguration:
    dim = cfg.family.dim
    height = cfg.height if dim == 2 else 1
    if cfg.boundary.kind == "sealed":
        inside, interior, origin = sealed_window(cfg.width, height, cfg.family.seal_width, cfg.boundary.outside, dim)
    else:
        inside = np.ones((cfg.width, height), dtype=bool)
        interior, origin = inside.copy(), (0, 0)
    state = np.where(inside, PLUS, 0).astype(np.int8)
    return SpinConfiguration(state, np.zeros_like(state), cfg.boundary, inside, interior, origin, dim)


def sample_frozen(cfg: SimulationConfig, rng, blank: Optional[SpinConfiguration] = None) -> np.ndarray:
    """One uniform per array cell: below rho+ is frozen +, the next rho- is frozen -."""
    blank = blank if blank is not None else blank_configuration(cfg)
    u = rng.random(blank.shape)
    marks = np.zeros(blank.shape, dtype=np.int8)
    marks[u < cfg.rho_plus] = FROZEN_PLUS
    marks[(u >= cfg.rho_plus) & (u < cfg.rho_plus + cfg.rho_minus)] = FROZEN_MINUS
    if cfg.boundary.kind == "sealed":
        marks[blank.inside & ~blank.interior] = cfg.boundary.outside
    marks[~blank.inside] = 0
    return marks


def sample_initial(mu: Mu, frozen: np.ndarray, rng, blank: SpinConfiguration) -> np.ndarray:
    u = rng.random(frozen.shape)
    if mu.kind == "bernoulli":
        state = np.where(u < mu.p, PLUS, MINUS)
    elif mu.kind == "all-plus":
        state = np.full(frozen.shape, PLUS)
    elif mu.kind == "all-minus":
        state = np.full(frozen.shape, MINUS)
    elif mu.kind == "explicit":
        state = np.zeros(frozen.shape, dtype=np.int8)
        ix, iy = np.nonzero(blank.inside & (frozen == 0))
        for x, y in zip(ix.tolist(), iy.tolist()):
            site = (x + blank.origin[0], y + blank.origin[1])[: blank.dim]
            if site not in mu.states:
                raise ValidationError(f"explicit initial state missing at {site}")
            state[x, y] = mu.states[site]
    else:
        raise ValueError(f"unknown initial distribution {mu.kind!r}")
    state = np.where(frozen != 0, frozen, state)
    return np.where(blank.inside, state, 0).astype(np.int8)


def initial_configuration(cfg: SimulationConfig, rng) -> SpinConfiguration:
    blank = blank_configuration(cfg)
    frozen = sample_frozen(cfg, rng, blank)
    state = sample_initial(cfg.mu, frozen, rng, blank)
    return replace(blank, state=state, frozen=frozen)


@dataclass
class FlipTrace:
    initial: SpinConfiguration
    times: np.ndarray
    sites: np.ndarray  # window indices
    to_states: np.ndarray
    rules: np.ndarray
    final: SpinConfiguration
    family: UpdateFamily
    kind: str
    horizon: float
    seed: int
    end_time: float = 0.0

    def __len__(self):
        return int(self.times.size)

    def site_coords(self) -> np.ndarray:
        return self.initial.site_coords()[self.sites]

    def records(self) -> list[FlipRecord]:
        coords = self.site_coords().tolist()
        return [
            FlipRecord(float(t), tuple(c), -int(s), int(s), int(k))
            for t, c, s, k in zip(self.times.tolist(), coords, self.to_states.tolist(), self.rules.tolist())
        ]


def simulate(
    config: SpinConfiguration, f: UpdateFamily, kind: str, horizon: float, rng, seed: int = 0
) -> FlipTrace:
    """Run the dynamics from ``config`` up to ``horizon``; the input is not modified."""
    if kind not in (VOTER, ISING):
        raise ValueError(f"unknown dynamics {kind!r}")
    table = rule_table(config, f)
    n = table.n
    state = _flat_state(config, n)
    ix, iy = config.array_coords()
    unfrozen = np.nonzero(config.frozen[ix, iy] == UNFROZEN)[0].astype(np.int64)
    times, sites, rules = [], [], []
    t = 0.0
    if unfrozen.size:
        done = False
        while not done:
            u = rng.random(3 * CHUNK)
            rt = np.empty(CHUNK)
            rx = np.empty(CHUNK, dtype=np.int64)
            rk = np.empty(CHUNK, dtype=np.int64)
            t, _, nrec, done = _advance(
                state, unfrozen, table.nbr, table.rstart, table.rlen, kind == ISING, t, float(horizon), u, rt, rx, rk
            )
            times.append(rt[:nrec])
            sites.append(rx[:nrec])
            rules.append(rk[:nrec])
    times = np.concatenate(times) if times else np.zeros(0)
    sites = np.concatenate(sites) if sites else np.zeros(0, dtype=np.int64)
    rules = np.concatenate(rules) if rules else np.zeros(0, dtype=np.int64)
    final = config.copy()
    final.state[ix, iy] = state[:n]
    return FlipTrace(
        initial=config.copy(),
        times=times,
        sites=sites,
        to_states=_to_states(config, ix, iy, sites),
        rules=rules,
        final=final,
        family=f,
        kind=kind,
        horizon=float(horizon),
        seed=seed,
        end_time=t,
    )


def _to_states(config, ix, iy, sites) -> np.ndarray:
    """Target state of each flip, recovered by toggling per site in order."""
    cur = config.state[ix, iy].astype(np.int8).copy()
    out = np.empty(sites.size, dtype=np.int8)
    _toggle(cur, sites, out)
    return out


@numba.njit(cache=True)
def _toggle(cur, sites, out):
    for i in range(sites.shape[0]):
        cur[sites[i]] = -cur[sites[i]]
        out[i] = cur[sites[i]]


def run(cfg: SimulationConfig) -> FlipTrace:
    """Sample frozen marks, then the initial state, then run the clock, all from one stream."""
    rng = make_rng(cfg.seed)
    config = initial_configuration(cfg, rng)
    return simulate(config, cfg.family, cfg.kind, cfg.horizon, rng, cfg.seed)


def replay(trace: FlipTrace) -> SpinConfiguration:
    """Re-apply every record, re-checking its flip condition; return the final snapshot."""
    config = trace.initial
    table = rule_table(config, trace.family)
    n = table.n
    state = _flat_state(config, n)
    ix, iy = config.array_coords()
    frozen = config.frozen[ix, iy].astype(np.int8)
    if np.any(np.diff(trace.times) <= 0):
        raise ReplayError(int(np.argmin(np.diff(trace.times) > 0)) + 1, "times not increasing")
    bad = _replay(
        state, frozen, table.nbr, table.rstart, table.rlen, trace.kind == ISING,
        trace.sites.astype(np.int64), trace.to_states.astype(np.int8), trace.rules.astype(np.int64),
    )
    if bad >= 0:
        raise ReplayError(int(bad))
    out = config.copy()
    out.state[ix, iy] = state[:n]
    return out


def shield_violations(trace: FlipTrace) -> list[int]:
    """Indices of flips that undo an earlier flip while its rule is still intact.

    After x flips to s via rule X, a later flip of x back to -s is a violation
    unless some site of x+X flipped to -s in between.
    """
    table = rule_table(trace.initial, trace.family)
    n = table.n
    T = table.nbr.shape[1]
    rev = np.full((n + 1, T), -1, dtype=np.int64)
    for j in range(T):
        col = table.nbr[:, j]
        ok = col < n
        rev[col[ok], j] = np.nonzero(ok)[0]
    bad = _shield(
        n, table.nbr, table.rstart, table.rlen,
        trace.sites.astype(np.int64), trace.to_states.astype(np.int8), trace.rules.astype(np.int64), rev,
    )
    return np.nonzero(bad)[0].tolist()
