"""Plain-text snapshots and CSV traces.

A snapshot is a block of ``# key: value`` header lines followed by one text row per
lattice row, top row first, using ``+ - P M .`` (``P``/``M`` frozen, ``.`` outside).
A trace file repeats the snapshot header and grid as ``#`` lines, then holds the
CSV ``time,x,y,from,to,rule_index``.  Times are written with ``repr`` so they read
back exactly.
"""
from __future__ import annotations

import csv
import io as _io
import json
from typing import Optional

import numpy as np

from . import __version__
from .dynamics import (
    FROZEN_MINUS,
    FROZEN_PLUS,
    MINUS,
    PLUS,
    Boundary,
    FlipTrace,
    SpinConfiguration,
    ValidationError,
)
from .family import UpdateFamily, parse_family

TRACE_COLUMNS = ["time", "x", "y", "from", "to", "rule_index"]


def _char(state: int, frozen: int, inside: bool) -> str:
    if not inside:
        return "."
    if frozen == FROZEN_PLUS:
        return "P"
    if frozen == FROZEN_MINUS:
        return "M"
    return "+" if state == PLUS else "-"


def grid_rows(config: SpinConfiguration) -> list[str]:
    W, H = config.shape
    rows = []
    for y in range(H - 1, -1, -1):
        rows.append("".join(
            _char(int(config.state[x, y]), int(config.frozen[x, y]), bool(config.inside[x, y])) for x in range(W)
        ))
    return rows


def _interior_box(config: SpinConfiguration) -> Optional[list[int]]:
    ix, iy = np.nonzero(config.interior)
    if ix.size == 0:
        return None
    return [int(ix.min()), int(iy.min()), int(ix.max() - ix.min() + 1), int(iy.max() - iy.min() + 1)]


def snapshot_header(config: SpinConfiguration, family: Optional[UpdateFamily] = None,
                    time: Optional[float] = None, extra: Optional[dict] = None) -> list[str]:
    meta = {
        "version": __version__,
        "dim": config.dim,
        "boundary": config.boundary.name,
        "origin": " ".join(str(int(v)) for v in config.origin[:2]),
        "interior": " ".join(map(str, _interior_box(config) or [])),
    }
    if family is not None:
        meta["family"] = family.to_text()
    if time is not None:
        meta["time"] = repr(float(time))
    for k, v in (extra or {}).items():
        meta[k] = v if isinstance(v, str) else json.dumps(v, sort_keys=True)
    return [f"# {k}: {v}" for k, v in meta.items()]


def write_snapshot(config: SpinConfiguration, family: Optional[UpdateFamily] = None,
                   time: Optional[float] = None, extra: Optional[dict] = None) -> str:
    return "\n".join(snapshot_header(config, family, time, extra) + grid_rows(config)) + "\n"


def parse_header(lines) -> dict:
    """``# key: value`` lines as a dict."""
    meta = {}
    for line in lines:
        body = line[1:].strip()
        if ":" in body:
            k, v = body.split(":", 1)
            meta[k.strip()] = v.strip()
    return meta


def parse_snapshot(text: str) -> tuple[SpinConfiguration, dict]:
    """Read a snapshot; returns the configuration and the header fields."""
    lines = [ln.rstrip("\n") for ln in text.splitlines()]
    header = [ln for ln in lines if ln.startswith("#")]
    rows = [ln.strip() for ln in lines if ln.strip() and not ln.startswith("#")]
    meta = parse_header(header)
    if not rows:
        raise ValidationError("snapshot has no grid rows")
    W, H = len(rows[0]), len(rows)
    if any(len(r) != W for r in rows):
        raise ValidationError("grid rows differ in length")
    state = np.zeros((W, H), dtype=np.int8)
    frozen = np.zeros((W, H), dtype=np.int8)
    inside = np.ones((W, H), dtype=bool)
    codes = {"+": (PLUS, 0), "-": (MINUS, 0), "P": (PLUS, FROZEN_PLUS), "M": (MINUS, FROZEN_MINUS)}
    for j, row in enumerate(rows):
        y = H - 1 - j
        for x, ch in enumerate(row):
            if ch == ".":
                inside[x, y] = False
            elif ch in codes:
                state[x, y], frozen[x, y] = codes[ch]
            else:
                raise ValidationError(f"bad grid character {ch!r} in row {j + 1}")
    interior = inside.copy()
    box = meta.get("interior", "").split()
    if len(box) == 4:
        x0, y0, w, h = map(int, box)
        interior = np.zeros_like(inside)
        interior[x0 : x0 + w, y0 : y0 + h] = True
    origin = tuple(int(v) for v in meta.get("origin", "0 0").split())
    dim = int(meta.get("dim", "2"))
    boundary = Boundary.parse(meta.get("boundary", "sealed-plus"))
    return SpinConfiguration(state, frozen, boundary, inside, interior, origin, dim), meta


def write_trace(trace: FlipTrace, extra: Optional[dict] = None) -> str:
    buf = _io.StringIO()
    meta = {"kind": trace.kind, "horizon": repr(trace.horizon), "seed": str(trace.seed)}
    meta.update(extra or {})
    for line in snapshot_header(trace.initial, trace.family, 0.0, meta) + [f"# grid {r}" for r in grid_rows(trace.initial)]:
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    coords = trace.site_coords()
    for t, c, s, k in zip(trace.times.tolist(), coords.tolist(), trace.to_states.tolist(), trace.rules.tolist()):
        y = c[1] if len(c) > 1 else 0
        w.writerow([repr(t), c[0], y, _sym(-s), _sym(s), k])
    return buf.getvalue()


def _sym(s: int) -> str:
    return "+" if s == PLUS else "-"


def read_trace(text: str) -> FlipTrace:
    """Parse a trace file; the final snapshot is rebuilt by replaying the records."""
    from .dynamics import replay

    lines = text.splitlines()
    header = [ln for ln in lines if ln.startswith("#") and not ln.startswith("# grid ")]
    grid = [ln[len("# grid "):] for ln in lines if ln.startswith("# grid ")]
    body = [ln for ln in lines if not ln.startswith("#")]
    initial, meta = parse_snapshot("\n".join(header + grid))
    family = parse_family(meta["family"])
    index = {s: i for i, s in enumerate(initial.sites())}
    times, sites, to, rules = [], [], [], []
    reader = csv.DictReader(body)
    if reader.fieldnames != TRACE_COLUMNS:
        raise ValidationError(f"trace columns must be {','.join(TRACE_COLUMNS)}")
    for row in reader:
        site = (int(row["x"]), int(row["y"]))[: initial.dim]
        if site not in index:
            raise ValidationError(f"trace names a site outside the window: {site}")
        times.append(float(row["time"]))
        sites.append(index[site])
        to.append(PLUS if row["to"] == "+" else MINUS)
        rules.append(int(row["rule_index"]))
    trace = FlipTrace(
        initial=initial,
        times=np.array(times, dtype=float),
        sites=np.array(sites, dtype=np.int64),
        to_states=np.array(to, dtype=np.int8),
        rules=np.array(rules, dtype=np.int64),
        final=initial,
        family=family,
        kind=meta.get("kind", "voter"),
        horizon=float(meta.get("horizon", "0") or 0),
        seed=int(meta.get("seed", "0") or 0),
    )
    trace.final = replay(trace)
    return trace
