"""Built-in update families with their expected classes."""
from __future__ import annotations

from dataclasses import dataclass

from .family import CRITICAL, SUBCRITICAL, SUPERCRITICAL, UpdateFamily, parse_family


@dataclass(frozen=True)
class CatalogEntry:
    key: str
    text: str
    kind: str
    disjoint: bool
    note: str = ""

    @property
    def family(self) -> UpdateFamily:
        return parse_family(self.text)


_ENTRIES = [
    CatalogEntry("fig1", "dim 2; rule (-1,0) (-1,1); rule (-1,0) (-1,-1)", SUPERCRITICAL, False,
                 "supercritical without disjoint rules"),
    CatalogEntry(
        "nn2d-2",
        "dim 2; rule (1,0) (0,1); rule (1,0) (-1,0); rule (1,0) (0,-1); "
        "rule (0,1) (-1,0); rule (0,1) (0,-1); rule (-1,0) (0,-1)",
        CRITICAL, True, "all pairs of nearest neighbours",
    ),
    CatalogEntry("voter1d", "dim 1; rule (1); rule (-1)", SUPERCRITICAL, True, "one-sided rules pointing both ways"),
    CatalogEntry("chain1d", "dim 1; rule (1); rule (1) (2)", SUPERCRITICAL, False, "right-looking rules sharing a site"),
    CatalogEntry("cross-subcritical", "dim 2; rule (1,0) (-1,0); rule (0,1) (0,-1)", SUBCRITICAL, True,
                 "every direction stable"),
    CatalogEntry("both1d", "dim 1; rule (-1) (1)", SUBCRITICAL, False, "one symmetric rule"),
]

# not part of the public catalog: the 2D counterpart of voter1d used by the flipper experiments
EXTRA = {
    "hvoter2d": CatalogEntry("hvoter2d", "dim 2; rule (1,0); rule (-1,0)", SUPERCRITICAL, True,
                             "horizontal voter rules in the plane"),
}

CATALOG = {e.key: e for e in _ENTRIES}


def get(key: str) -> CatalogEntry:
    if key in CATALOG:
        return CATALOG[key]
    if key in EXTRA:
        return EXTRA[key]
    raise KeyError(f"unknown catalog family {key!r}; known: {', '.join(sorted(CATALOG) + sorted(EXTRA))}")


def family(key: str) -> UpdateFamily:
    return get(key).family
