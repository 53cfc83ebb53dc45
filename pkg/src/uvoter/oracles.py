"""Random instances and the three oracle comparisons used by tests and ``oracle-check``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import catalog
from .analysis import reachability_oracle, well_fixed_certificate
from .bootstrap import closure, naive_closure
from .dynamics import (
    FROZEN_MINUS,
    FROZEN_PLUS,
    MINUS,
    PLUS,
    Boundary,
    SpinConfiguration,
    sealed_window,
)
from .family import UpdateFamily, classify, classify_2d, embed_1d, grid_classify_oracle

ORACLE_SITES = 12


def random_family(rng: np.random.Generator, max_rules: int = 4, span: int = 2, max_size: int = 3) -> UpdateFamily:
    offsets = [(x, y) for x in range(-span, span + 1) for y in range(-span, span + 1) if (x, y) != (0, 0)]
    rules = []
    for _ in range(int(rng.integers(1, max_rules + 1))):
        k = int(rng.integers(1, max_size + 1))
        pick = rng.choice(len(offsets), size=k, replace=False)
        rules.append([offsets[i] for i in sorted(pick.tolist())])
    return UpdateFamily.of(*rules)


def random_closure_instance(rng: np.random.Generator, size: int = 12):
    f = random_family(rng)
    dom = [(x, y) for x in range(size) for y in range(size)]
    roles = rng.random(len(dom))
    p_seed = rng.uniform(0.05, 0.5)
    p_imm = rng.uniform(0.0, 0.3)
    seeds = [s for s, u in zip(dom, roles) if u < p_seed]
    immune = [s for s, u in zip(dom, roles) if p_seed <= u < p_seed + p_imm]
    return dom, seeds, immune, f


def random_sealed_configuration(rng: np.random.Generator, f: UpdateFamily, limit: int = ORACLE_SITES) -> SpinConfiguration:
    """Small sealed window with at most ``limit`` unfrozen interior sites."""
    seal = f.seal_width
    mark = PLUS if rng.random() < 0.5 else MINUS
    while True:
        if f.dim == 1:
            w, h = int(rng.integers(1, 13)), 1
        else:
            w, h = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        inside, interior, origin = sealed_window(w, h, seal, mark, f.dim)
        u = rng.random(inside.shape)
        rho_p, rho_m = rng.uniform(0, 0.4), rng.uniform(0, 0.4)
        frozen = np.zeros(inside.shape, dtype=np.int8)
        frozen[u < rho_p] = FROZEN_PLUS
        frozen[(u >= rho_p) & (u < rho_p + rho_m)] = FROZEN_MINUS
        frozen[~interior] = mark
        if np.count_nonzero(interior & (frozen == 0)) <= limit:
            break
    state = np.where(rng.random(inside.shape) < 0.5, PLUS, MINUS).astype(np.int8)
    state = np.where(frozen != 0, frozen, state)
    return SpinConfiguration(state, frozen, Boundary("sealed", mark), inside, interior, origin, f.dim)


@dataclass
class SuiteResult:
    name: str
    trials: int
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.trials - len(self.failures)}/{self.trials} agree"


def closure_suite(trials: int, seed: int, fault: bool = False) -> SuiteResult:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 1])))
    res = SuiteResult("closure-vs-naive", trials)
    for t in range(trials):
        dom, seeds, immune, f = random_closure_instance(rng)
        fast, witness = closure(dom, seeds, immune, f)
        if fault and witness.steps:
            fast = fast - {witness.steps[-1][0]}
        slow = naive_closure(dom, seeds, immune, f)
        if fast != slow:
            res.failures.append(t)
    return res


def classifier_suite(trials: int, seed: int, fault: bool = False, n: int = 4096) -> SuiteResult:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 2])))
    families = [e.family for e in catalog.CATALOG.values()]
    families += [random_family(rng, span=3, max_size=4) for _ in range(trials)]
    res = SuiteResult("classifier-vs-grid", len(families))
    for t, f in enumerate(families):
        f2 = embed_1d(f) if f.dim == 1 else f
        got = classify_2d(f2).kind
        if fault:
            got = "Subcritical" if got != "Subcritical" else "Critical"
        if got != grid_classify_oracle(f2, n).kind:
            res.failures.append(t)
        elif f.dim == 1 and classify(f).supercritical != (got == "Supercritical"):
            res.failures.append(t)
    return res


def certificate_suite(trials: int, seed: int, fault: bool = False) -> SuiteResult:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 3])))
    keys = sorted(catalog.CATALOG)
    res = SuiteResult("certificate-vs-reachability", trials)
    for t in range(trials):
        f = catalog.family(keys[int(rng.integers(len(keys)))])
        config = random_sealed_configuration(rng, f)
        report = well_fixed_certificate(config, f)
        interior = config.interior_sites()
        uncertified = set(report.uncertified)
        if fault:
            uncertified ^= {min(interior)}
        if uncertified != reachability_oracle(config, f) & interior:
            res.failures.append(t)
    return res


SUITES = {
    "closure": closure_suite,
    "classifier": classifier_suite,
    "certificate": certificate_suite,
}
