"""Design-of-experiment layers: variator, chained spanning, swarm limits.

The variator turns a base script plus parameter perturbations into
database records with pending computes.  Spanning is the automaton that
claims not-yet-started jobs, optionally chains each one to the nearest
completed point under a user-defined non-isotropic distance, inserts
intermediate points when a jump exceeds the policy bound, executes the
pending compute against the kernel in a per-key subdirectory, and tags
the catalog with the observables.  Concurrency never exceeds the swarm
limit; crash recovery is clean() followed by a re-span.
"""

from __future__ import annotations

import math
import os
import threading
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

from . import model, orchestrate, store
from .diagnostics import DiagnosticError, error
from .notation import dumps_value
from .registry import UNDEFINED
from .rules import get_or_deft

_FILE_CHECKER = "file_path"


@dataclass(frozen=True)
class DoEPoint:
    """One point of the experiment space with its derived script key."""

    key: str
    coords: tuple[tuple[str, Any], ...]

    @classmethod
    def make(cls, key: str, coords: Mapping[str, Any]) -> "DoEPoint":
        return cls(key, tuple(sorted(coords.items())))

    def as_dict(self) -> dict[str, Any]:
        return dict(self.coords)

    def numeric(self) -> dict[str, float]:
        return {k: float(v) for k, v in self.coords if isinstance(v, (int, float))}


@dataclass(frozen=True)
class ChainPolicy:
    """Non-isotropic restart selection policy.

    weights: positive per-parameter metric weights; max_jump: maximal
    weighted hop length; pairing_rules: (param, comparator, value)
    terms a candidate source point must satisfy.
    """

    weights: tuple[tuple[str, float], ...]
    max_jump: float
    pairing_rules: tuple[tuple, ...] = ()

    @classmethod
    def make(cls, weights: Mapping[str, float], max_jump: float,
             pairing_rules: Sequence[tuple] = ()) -> "ChainPolicy":
        if any(w <= 0 for w in weights.values()):
            raise DiagnosticError(error(
                "chain policy weights must be strictly positive",
                [dumps_value(dict(weights))], "fix the weights", code="bad-policy",
            ))
        if max_jump <= 0:
            raise DiagnosticError(error(
                "max_jump must be strictly positive", [], "fix the policy", code="bad-policy",
            ))
        return cls(tuple(sorted(weights.items())), float(max_jump), tuple(pairing_rules))

    def weight_map(self) -> dict[str, float]:
        return dict(self.weights)


@dataclass(frozen=True)
class SwarmSpec:
    """Load limit: an explicit job count or a fraction of the node."""

    max_jobs: Optional[int] = None
    node_fraction: Optional[float] = None

    def resolve(self) -> int:
        if self.max_jobs is not None:
            if self.max_jobs < 1:
                raise DiagnosticError(error("swarm limit must be at least 1", [],
                                            "use MaxJobs(1) or more", code="bad-swarm"))
            return self.max_jobs
        if self.node_fraction is not None:
            if not 0 < self.node_fraction <= 1:
                raise DiagnosticError(error(
                    "node fraction must satisfy 0 < f <= 1", [],
                    "use e.g. NodeFraction(0.5)", code="bad-swarm",
                ))
            return max(1, int(self.node_fraction * (os.cpu_count() or 1)))
        raise DiagnosticError(error("swarm limit is undefined", [],
                                    "give max_jobs or node_fraction", code="bad-swarm"))


def MaxJobs(count: int) -> SwarmSpec:
    return SwarmSpec(max_jobs=count)


def NodeFraction(fraction: float) -> SwarmSpec:
    return SwarmSpec(node_fraction=fraction)


def distance(p: DoEPoint | Mapping[str, float], q: DoEPoint | Mapping[str, float],
             weights: Mapping[str, float]) -> float:
    """Weighted Euclidean metric over the shared parameter names."""
    pd = p.numeric() if isinstance(p, DoEPoint) else dict(p)
    qd = q.numeric() if isinstance(q, DoEPoint) else dict(q)
    if set(pd) != set(qd) or not set(pd) <= set(weights):
        raise DiagnosticError(error(
            "dimension mismatch between points and weights",
            [f"p: {sorted(pd)}, q: {sorted(qd)}, weights: {sorted(weights)}"],
            "span points and weights over the same parameters", code="dimension-mismatch",
        ))
    return math.sqrt(sum(weights[k] * (pd[k] - qd[k]) ** 2 for k in pd))


def _pairing_ok(point: DoEPoint, rules: Sequence[tuple]) -> bool:
    coords = point.as_dict()
    for param, op, value in rules:
        if param not in coords:
            return False
        if not store._term_holds(coords[param], op, value):
            return False
    return True


def nearest_source(target: DoEPoint, completed: Sequence[DoEPoint],
                   policy: ChainPolicy) -> Optional[DoEPoint]:
    """Completed point minimizing the weighted distance to ``target``.

    Candidates failing the pairing rules are excluded; ties break on
    lexicographic key order; None with no eligible source (cold start).
    """
    weights = policy.weight_map()
    best: Optional[tuple[float, str, DoEPoint]] = None
    for candidate in completed:
        if candidate.key == target.key:
            continue
        if not _pairing_ok(candidate, policy.pairing_rules):
            continue
        d = distance(target, candidate, weights)
        entry = (d, candidate.key, candidate)
        if best is None or entry[:2] < best[:2]:
            best = entry
    return best[2] if best else None


def _coord_digest(coords: Mapping[str, Any]) -> str:
    import hashlib
    text = dumps_value({k: coords[k] for k in sorted(coords)})
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:10]


def linearize(src: DoEPoint, dst: DoEPoint, policy: ChainPolicy) -> tuple[DoEPoint, ...]:
    """Evenly spaced intermediate points keeping every hop <= max_jump.

    Intermediate keys hash the coordinates, so chains toward the same
    target share points regardless of the source they started from.
    """
    weights = policy.weight_map()
    d = distance(src, dst, weights)
    if d <= policy.max_jump or d == 0.0:
        return ()
    hops = math.ceil(d / policy.max_jump)
    src_coords, dst_coords = src.numeric(), dst.numeric()
    out = []
    for i in range(1, hops):
        t = i / hops
        coords = {k: src_coords[k] + t * (dst_coords[k] - src_coords[k]) for k in src_coords}
        out.append(DoEPoint.make(f"{dst.key}_h{_coord_digest(coords)}", coords))
    return tuple(out)


# -- variator -----------------------------------------------------------------


def _resolve_param_owner(study: model.Study, script: model.Script, param: str) -> model.Description:
    """The closure description owning a (possibly qualified) parameter."""
    class_name, _, attr = param.rpartition(".")
    for desc in model.closure(script):
        cdef = study.registry.classes[desc.class_name]
        if class_name and desc.class_name != class_name:
            continue
        if (attr or param) in cdef.attributes:
            return desc
    raise DiagnosticError(error(
        f"parameter {param!r} matches no attribute on the base script",
        [f"script: {script.ident}"],
        "fix the parameter path", code="bad-parameter",
    ))


def variator_build(base: model.Script, points: Sequence[Mapping[str, Any] | DoEPoint],
                   db: store.ScriptStore, base_dir: Optional[str] = None) -> list[str]:
    """Dump one script variation per point, pending computes preserved.

    Each variant re-creates the base from its canonical dump text in an
    isolated study, overrides the perturbed parameters (interface
    origin), and shifts file-path attribute values into the per-point
    subdirectory of ``base_dir``.
    """
    study = base.study
    base_dir = base_dir or db.root
    base_text = model.dump_context(base)
    for point in points:
        coords = point.as_dict() if isinstance(point, DoEPoint) else dict(point)
        for param in coords:
            _resolve_param_owner(study, base, param)

    keys = []
    for i, point in enumerate(points):
        if isinstance(point, DoEPoint):
            key, coords = point.key, point.as_dict()
        else:
            key, coords = f"{base.ident}_v{i:03d}", dict(point)
        variant_study = model.Study(study.registry, study.ruleset)
        variant = model.load_script_text(variant_study, base_text, ident=key)
        for param, value in coords.items():
            owner_ident = _resolve_param_owner(variant_study, variant, param).ident
            owner = variant_study.resolve(owner_ident)
            attr = param.rpartition(".")[2] or param
            owner.set(attr, value, model.Origin(model.OriginKind.INTERFACE, "variator"))
        _shift_file_paths(variant_study, variant, os.path.join(base_dir, key))
        keys.append(db.dump(variant))
    return keys


def _shift_file_paths(study: model.Study, script: model.Script, point_dir: str):
    for desc in model.closure(script):
        cdef = study.registry.classes[desc.class_name]
        for attr, binding in list(desc.bindings.items()):
            adef = cdef.attributes[attr]
            if adef.domain.checker == _FILE_CHECKER and isinstance(binding.value, str):
                shifted = os.path.join(point_dir, binding.value)
                desc.bindings[attr] = model.Binding(attr, shifted, binding.origin)


# -- spanning -----------------------------------------------------------------


@dataclass
class SpanResult:
    observables: dict[str, dict[str, float]] = field(default_factory=dict)
    restarted_from: dict[str, str] = field(default_factory=dict)
    inserted: list[str] = field(default_factory=list)
    failed: dict[str, int] = field(default_factory=dict)
    peak_concurrency: int = 0
    evaluations: int = 0


class _ConcurrencyGauge:
    def __init__(self):
        self._lock = threading.Lock()
        self.active = 0
        self.peak = 0

    def __enter__(self):
        with self._lock:
            self.active += 1
            self.peak = max(self.peak, self.active)
        return self

    def __exit__(self, *exc):
        with self._lock:
            self.active -= 1


def _point_from_catalog(key: str, entry: store.CatalogEntry) -> Optional[DoEPoint]:
    coords = {}
    for path, value in entry.values.items():
        if value is None or value is UNDEFINED:
            continue
        if isinstance(value, (int, float)):
            coords[path.rpartition(".")[2] or path] = value
    return DoEPoint.make(key, coords) if coords else None


def span(db: store.ScriptStore, swarm: SwarmSpec, kernel=None,
         policy: Optional[ChainPolicy] = None,
         workdir: Optional[str] = None) -> SpanResult:
    """Execute every claimable pending job; see the module docstring.

    Jobs that failed twice stay NYS and are reported, not retried.
    """
    limit = swarm.resolve()
    kernel = kernel or orchestrate.ToyKernel()
    workdir = workdir or os.path.join(db.root, "work")
    result = SpanResult()
    gauge = _ConcurrencyGauge()

    def run_job(key: str, restart_from: Optional[DoEPoint]):
        with gauge:
            job_dir = os.path.join(workdir, key)
            os.makedirs(job_dir, exist_ok=True)
            script = db.load(key)
            study = script.study
            study.kernel = kernel
            guess = None
            if restart_from is not None:
                source_entry = db.catalog().get(restart_from.key)
                if source_entry is not None:
                    guess = source_entry.tags.get("observables")
            study.variables["_restart_guess"] = guess
            outputs = orchestrate.run_pending(study)
            observables: dict[str, float] = {}
            for out in outputs:
                if isinstance(out, dict) and isinstance(out.get("observables"), dict):
                    observables.update(out["observables"])
            if not outputs:
                point = orchestrate.kernel_point(study)
                if point:
                    observables = kernel.evaluate(point, guess=guess)
            with open(os.path.join(job_dir, "observables.res"), "w", encoding="utf-8") as fh:
                fh.write(dumps_value(observables) + "\n")
            return observables

    executor = ThreadPoolExecutor(max_workers=limit, thread_name_prefix="span")
    futures: dict = {}

    def harvest(block: bool):
        if block and futures:
            wait(list(futures.values()), return_when=FIRST_COMPLETED)
        for key, fut in list(futures.items()):
            if not fut.done():
                continue
            del futures[key]
            try:
                observables = fut.result()
            except Exception:
                fails = db.record_failure(key)
                if fails >= 2:
                    result.failed[key] = fails
                continue
            restart_key = result.restarted_from.get(key)
            db.tag(key, {"observables": observables,
                         **({"restart_from": restart_key} if restart_key else {})})
            db.complete(key)
            result.observables[key] = observables
            result.evaluations += 1

    try:
        while True:
            harvest(block=False)
            jobs = db._read_jobs()
            claimable = []
            for key in sorted(jobs):
                state, fails = jobs[key]
                if state is not store.JobState.NYS or key in futures:
                    continue
                if fails >= 2:
                    result.failed[key] = fails
                    continue
                claimable.append(key)
            if not claimable and not futures:
                break
            if not claimable or len(futures) >= limit:
                harvest(block=True)
                continue

            # chaining decisions always see the current completed set;
            # unharvested futures hold capacity, so a pass never outruns
            # its own snapshot
            catalog = db.catalog()
            completed_points = [
                p for k, (s, _f) in jobs.items() if s is store.JobState.CMP
                for p in [_point_from_catalog(k, catalog[k])] if p is not None
            ]
            progressed = False
            for key in claimable:
                if len(futures) >= limit:
                    break
                source = None
                if policy is not None:
                    target = _point_from_catalog(key, catalog.get(key, store.CatalogEntry(key)))
                    if target is not None:
                        source = nearest_source(target, completed_points, policy)
                        if source is not None and \
                                distance(target, source, policy.weight_map()) > policy.max_jump:
                            # too far to restart from: fill the chain, then
                            # wait for it to march within jump distance
                            inters = linearize(source, target, policy)
                            missing = [p for p in inters if p.key not in jobs]
                            if missing:
                                inserted = variator_build(
                                    db.load(key), missing, db,
                                    base_dir=os.path.join(db.root, "chain"))
                                result.inserted.extend(inserted)
                                progressed = True
                                break  # re-read state; intermediates are new NYS jobs
                            continue
                if not db.claim(key):
                    continue
                if source is not None:
                    result.restarted_from[key] = source.key
                futures[key] = executor.submit(run_job, key, source)
                progressed = True
            if not progressed:
                if futures:
                    harvest(block=True)
                else:
                    time.sleep(0.005)  # transient: another process holds the work
    finally:
        executor.shutdown(wait=True, cancel_futures=True)
    result.peak_concurrency = gauge.peak
    return result


def swarm_provider(base: model.Script, db: store.ScriptStore, swarm: SwarmSpec,
                   kernel=None, observable: str = "f",
                   params: Sequence[str] = ("x", "y"),
                   policy: Optional[ChainPolicy] = None):
    """Observable provider backed by the spanning automaton.

    Each call turns one batch of points into script variations, spans
    them under the swarm limit, and returns the tagged observables in
    point order; an adaptive interpolation loop plugged on top of this
    steers the automaton level by level.
    """
    batch_counter = [0]

    def provider(points):
        batch = batch_counter[0]
        batch_counter[0] += 1
        doe_points = []
        for p in points:
            coords = dict(zip(params, p))
            key = f"{base.ident}_b{batch:03d}_{_coord_digest(coords)}"
            doe_points.append(DoEPoint.make(key, coords))
        keys = variator_build(base, doe_points, db)
        result = span(db, swarm, kernel=kernel, policy=policy)
        catalog = db.catalog()
        values = []
        for key in keys:
            observables = catalog[key].tags.get("observables", {})
            if observable not in observables:
                raise DiagnosticError(error(
                    f"job {key!r} produced no observable {observable!r}",
                    [f"tags: {dumps_value(catalog[key].tags)}",
                     f"failed jobs: {sorted(result.failed) or 'none'}"],
                    "check the kernel and the base script's pending compute",
                    code="missing-observable",
                ))
            values.append(observables[observable])
        return values

    return provider
