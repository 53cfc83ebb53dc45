"""Replicated experiments: spec files, seeding, parallel runs and deterministic outputs.

Replica ``r`` of an experiment with base seed ``s`` uses the 64-bit seed
``SeedSequence([s, r]).generate_state(1, uint64)[0]``.
"""
from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, catalog
from .analysis import BlockGrid, flipper_stats, non_fixed_components, well_fixed_certificate
from .dynamics import Boundary, Mu, SimulationConfig, run
from .family import UpdateFamily, parse_family
from .io import write_snapshot, write_trace

ANALYSES = ("fixation", "flippers", "components")


class SpecError(ValueError):
    pass


def parse_key_values(text: str) -> dict:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"line {n}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def load_family(ref: str, base: Optional[Path] = None) -> tuple[str, UpdateFamily]:
    """A catalog key, or a family file path (relative to ``base`` if given)."""
    try:
        return ref, catalog.family(ref)
    except KeyError:
        pass
    path = Path(ref)
    if base is not None and not path.is_absolute():
        path = base / path
    if not path.exists():
        raise SpecError(f"unknown family {ref!r}: not a catalog key or a file")
    return ref, parse_family(path.read_text())


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    family_ref: str
    family: UpdateFamily
    kind: str = "voter"
    width: int = 32
    height: int = 32
    boundary: str = "sealed-plus"
    rho_plus: float = 0.0
    rho_minus: float = 0.0
    mu: str = "bernoulli:0.5"
    horizon: float = 100.0
    seed: int = 0
    replicas: int = 1
    analyses: tuple = ANALYSES
    block_size: int = 4
    buckets: int = 10
    tail_fraction: float = 0.2
    write_traces: bool = True

    @classmethod
    def from_dict(cls, kv: dict, base: Optional[Path] = None) -> "ExperimentSpec":
        kv = dict(kv)
        if "family" not in kv:
            raise SpecError("spec needs a family")
        ref, fam = load_family(kv.pop("family"), base)
        conv = {
            "width": int, "height": int, "rho_plus": float, "rho_minus": float, "horizon": float,
            "seed": int, "replicas": int, "block_size": int, "buckets": int, "tail_fraction": float,
        }
        args = {"name": kv.pop("name", "experiment"), "family_ref": ref, "family": fam}
        try:
            for k, v in kv.items():
                if k in conv:
                    args[k] = conv[k](v)
                elif k in ("kind", "boundary", "mu"):
                    args[k] = v
                elif k == "analyses":
                    args[k] = tuple(a.strip() for a in v.split(",") if a.strip())
                elif k == "write_traces":
                    args[k] = v.lower() in ("1", "true", "yes")
                else:
                    raise SpecError(f"unknown spec key {k!r}")
        except ValueError as e:
            raise SpecError(str(e)) from None
        spec = cls(**args)
        spec.validate()
        return spec

    @classmethod
    def from_text(cls, text: str, base: Optional[Path] = None) -> "ExperimentSpec":
        return cls.from_dict(parse_key_values(text), base)

    def validate(self):
        if self.replicas < 1:
            raise SpecError("replicas must be at least 1")
        bad = set(self.analyses) - set(ANALYSES)
        if bad:
            raise SpecError(f"unknown analyses: {', '.join(sorted(bad))}")
        if self.block_size < 1:
            raise SpecError("block_size must be positive")
        try:
            self.config(0)
        except ValueError as e:
            raise SpecError(str(e)) from None

    def config(self, seed: int) -> SimulationConfig:
        return SimulationConfig(
            family=self.family,
            kind=self.kind,
            width=self.width,
            height=self.height,
            boundary=Boundary.parse(self.boundary),
            rho_plus=self.rho_plus,
            rho_minus=self.rho_minus,
            mu=Mu.parse(self.mu),
            horizon=self.horizon,
            seed=seed,
        )

    def as_dict(self) -> dict:
        d = asdict(self)
        d["family"] = self.family.to_text()
        d["analyses"] = list(self.analyses)
        return d


def replica_seed(base: int, r: int) -> int:
    return int(np.random.SeedSequence([base, r]).generate_state(1, np.uint64)[0])


@dataclass
class ReplicaResult:
    replica: int
    seed: int
    flips: int
    fields: dict = field(default_factory=dict)
    trace_text: Optional[str] = None
    final_text: Optional[str] = None


def run_replica(spec: ExperimentSpec, r: int) -> ReplicaResult:
    seed = replica_seed(spec.seed, r)
    cfg = spec.config(seed)
    trace = run(cfg)
    out = ReplicaResult(r, seed, len(trace))
    report = well_fixed_certificate(trace.final, spec.family, trace.horizon)
    if "fixation" in spec.analyses:
        out.fields["fixated"] = report.complete
        out.fields["uncertified"] = len(report.uncertified)
        out.fields["certificate_exact"] = report.exact
    if "flippers" in spec.analyses:
        st = flipper_stats(trace, spec.buckets, spec.tail_fraction)
        out.fields["tail_flip_sites"] = len(st.tail_flip_sites())
        out.fields["forced_sites"] = len(st.forced_sites)
        out.fields["forced_tail_flippers"] = sum(k > 0 for k in st.tail_flips_at(st.forced_sites))
    if "components" in spec.analyses:
        sizes = non_fixed_components(report, BlockGrid(spec.block_size))
        out.fields["components"] = len(sizes)
        out.fields["largest_component"] = max(sizes, default=0)
    meta = {"experiment": spec.name, "replica": r, "config": cfg.as_dict()}
    if spec.write_traces:
        out.trace_text = write_trace(trace, meta)
    out.final_text = write_snapshot(trace.final, spec.family, trace.horizon, meta)
    return out


def _worker(args):
    spec, r = args
    return run_replica(spec, r)


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> list[ReplicaResult]:
    tasks = [(spec, r) for r in range(spec.replicas)]
    if jobs > 1 and spec.replicas > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_worker, tasks))
    return [_worker(t) for t in tasks]


def summarize(spec: ExperimentSpec, results: list[ReplicaResult]) -> dict:
    summary = {
        "version": __version__,
        "spec": spec.as_dict(),
        "replicas": [{"replica": x.replica, "seed": x.seed, "flips": x.flips, **x.fields} for x in results],
        "mean_flips": float(np.mean([x.flips for x in results])),
    }
    if "fixation" in spec.analyses:
        summary["all_fixated_fraction"] = float(np.mean([x.fields["fixated"] for x in results]))
    if "flippers" in spec.analyses:
        summary["tail_flip_sites"] = [x.fields["tail_flip_sites"] for x in results]
        summary["replicas_with_forced_tail_flipper"] = sum(x.fields["forced_tail_flippers"] > 0 for x in results)
    if "components" in spec.analyses:
        summary["largest_component"] = [x.fields["largest_component"] for x in results]
    return summary


def replicas_csv(spec: ExperimentSpec, results: list[ReplicaResult]) -> str:
    buf = io.StringIO()
    buf.write(f"# version: {__version__}\n# spec: {json.dumps(spec.as_dict(), sort_keys=True)}\n")
    keys = sorted({k for x in results for k in x.fields})
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replica", "seed", "flips"] + keys)
    for x in results:
        w.writerow([x.replica, x.seed, x.flips] + [_cell(x.fields.get(k, "")) for k in keys])
    return buf.getvalue()


def _cell(v):
    return int(v) if isinstance(v, bool) else v


def write_outputs(spec: ExperimentSpec, results: list[ReplicaResult], outdir: Path) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, text):
        p = outdir / name
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
        written.append(p)

    put("summary.json", json.dumps(summarize(spec, results), sort_keys=True, indent=2) + "\n")
    put("replicas.csv", replicas_csv(spec, results))
    for x in results:
        if x.trace_text is not None:
            put(f"traces/replica_{x.replica:04d}.csv", x.trace_text)
        put(f"final/replica_{x.replica:04d}.txt", x.final_text)
    return written


def default_jobs() -> int:
    return max(1, min(4, os.cpu_count() or 1))
