"""Bootstrap percolation closures with immune sites and infection witnesses.

Sites outside the domain stay healthy.  The closure runs in synchronous rounds:
every candidate is tested against the infected set at the start of the round,
candidates are visited in lexicographic order, and each new site is credited
to the first rule (in family order) that is fully infected.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .family import UpdateFamily

Site = tuple


def _add(x, o):
    return tuple(a + b for a, b in zip(x, o))


def _sub(x, o):
    return tuple(a - b for a, b in zip(x, o))


def _wrapper(period):
    if period is None:
        return lambda x: x
    return lambda x: tuple(a % p for a, p in zip(x, period))


@dataclass(frozen=True)
class InfectionWitness:
    steps: tuple  # ((site, rule_index), ...)

    def sites(self) -> list:
        return [s for s, _ in self.steps]

    def replay(self, dom, seeds, immune, f: UpdateFamily, period=None) -> frozenset:
        """Re-apply the steps, checking each against the infected set; return the final set."""
        wrap = _wrapper(period)
        dom, immune = frozenset(dom), frozenset(immune)
        infected = set(seeds)
        for x, k in self.steps:
            if x not in dom or x in immune or x in infected:
                raise ValueError(f"illegal witness step at {x}")
            if not all(wrap(_add(x, o)) in infected for o in f.rules[k].offsets):
                raise ValueError(f"rule {k} not satisfied at {x}")
            infected.add(x)
        return frozenset(infected)


def _check_inputs(dom, seeds, immune):
    dom = frozenset(dom)
    seeds = frozenset(seeds)
    immune = frozenset(immune)
    if not seeds <= dom:
        raise ValueError("seed outside domain")
    if seeds & immune:
        raise ValueError("a seed cannot be immune")
    return dom, seeds, immune


def closure(dom: Iterable, seeds: Iterable, immune: Iterable, f: UpdateFamily, period=None):
    """Least infected set containing ``seeds`` that is stable under the rules of ``f``.

    Returns ``(closed_set, witness)``.  ``period`` makes coordinates wrap (torus);
    the domain must then use representatives in ``[0, period)``.
    """
    dom, seeds, immune = _check_inputs(dom, seeds, immune)
    wrap = _wrapper(period)
    rules = [r.offsets for r in f.rules]
    offsets = sorted({o for offs in rules for o in offs})
    infected = set(seeds)
    steps = []

    def first_rule(x) -> Optional[int]:
        for k, offs in enumerate(rules):
            if all(wrap(_add(x, o)) in infected for o in offs):
                return k
        return None

    candidates = dom - infected - immune
    while candidates:
        new = []
        for x in sorted(candidates):
            k = first_rule(x)
            if k is not None:
                new.append((x, k))
        if not new:
            break
        for x, k in new:
            infected.add(x)
        steps.extend(new)
        # only sites that see a newly infected site can change
        candidates = {wrap(_sub(z, o)) for z, _ in new for o in offsets}
        candidates = (candidates & dom) - infected - immune
    return frozenset(infected), InfectionWitness(tuple(steps))


def naive_closure(dom, seeds, immune, f: UpdateFamily, period=None) -> frozenset:
    """Global-sweep fixed point, kept deliberately simple as a reference."""
    dom, seeds, immune = _check_inputs(dom, seeds, immune)
    wrap = _wrapper(period)
    infected = set(seeds)
    changed = True
    while changed:
        changed = False
        for x in dom:
            if x in infected or x in immune:
                continue
            if any(all(wrap(_add(x, o)) in infected for o in r.offsets) for r in f.rules):
                infected.add(x)
                changed = True
    return frozenset(infected)


def infectable(dom, seeds, immune, f: UpdateFamily, target, period=None) -> bool:
    if target not in frozenset(dom):
        raise ValueError("target outside domain")
    return target in closure(dom, seeds, immune, f, period)[0]


# ---------------------------------------------------------------------------
# closures of spin configurations

def _signed_closure(config, f: UpdateFamily, sign: int) -> frozenset:
    """Closure seeded by sites at ``sign`` with sites frozen at ``-sign`` immune."""
    dom, seeds, immune, period = config.closure_problem(sign, f)
    closed, _ = closure(dom, seeds, immune, f, period)
    return closed & config.site_set()


def minus_closure(config, f: UpdateFamily) -> frozenset:
    """Window sites that the ⊖-bootstrap can reach from the current − sites."""
    return _signed_closure(config, f, -1)


def plus_closure(config, f: UpdateFamily) -> frozenset:
    return _signed_closure(config, f, +1)
