import math
import os
import random
import threading
import time

import pytest

import declsim
from declsim import doe, store
from declsim.diagnostics import DiagnosticError
from declsim.doe import ChainPolicy, DoEPoint, SwarmSpec, distance, linearize, nearest_source
from declsim.model import load_script_text

from conftest import make_db


def P(key, **coords):
    return DoEPoint.make(key, coords)


def test_distance_weighted_oracle():
    weights = {"a": 4.0, "b": 1.0}
    p, q = P("p", a=0.5, b=0.0), P("q", a=0.0, b=0.0)
    # oracle: explicit formula
    assert distance(p, q, weights) == pytest.approx(math.sqrt(4.0 * 0.25))
    with pytest.raises(DiagnosticError, match="dimension"):
        distance(P("p", a=1.0), P("q", a=1.0, b=2.0), weights)


def test_nearest_source_singleton():
    policy = ChainPolicy.make({"a": 1.0, "b": 1.0}, max_jump=1.0)
    src = nearest_source(P("t", a=1.0, b=1.0), [P("s", a=0.0, b=0.0)], policy)
    assert src.key == "s"


def test_nearest_source_weighted_example():
    """(4,1) weights pick (0, 0.5): d^2 = 0.25 beats 4*0.25 = 1.0."""
    policy = ChainPolicy.make({"a": 4.0, "b": 1.0}, max_jump=1.0)
    completed = [P("s1", a=0.5, b=0.0), P("s2", a=0.0, b=0.5)]
    # oracle: enumerate weighted distances
    target = P("t", a=0.0, b=0.0)
    oracle = min(completed, key=lambda s: (distance(target, s, policy.weight_map()), s.key))
    picked = nearest_source(target, completed, policy)
    assert picked.key == oracle.key == "s2"


def test_nearest_source_pairing_rules_cold_start():
    policy = ChainPolicy.make({"a": 1.0}, max_jump=1.0,
                              pairing_rules=[("a", ">", 10.0)])
    assert nearest_source(P("t", a=0.0), [P("s", a=1.0)], policy) is None


def test_nearest_source_tie_breaks_lexicographic():
    policy = ChainPolicy.make({"a": 1.0}, max_jump=1.0)
    completed = [P("zz", a=1.0), P("aa", a=-1.0)]
    assert nearest_source(P("t", a=0.0), completed, policy).key == "aa"


def test_linearize_exact_thirds():
    policy = ChainPolicy.make({"a": 1.0, "b": 1.0}, max_jump=0.4)
    inters = linearize(P("s", a=0.0, b=0.0), P("d", a=1.0, b=0.0), policy)
    coords = [p.as_dict() for p in inters]
    assert coords == [{"a": 1 / 3, "b": 0.0}, {"a": 2 / 3, "b": 0.0}]


def test_linearize_trivial_cases():
    policy = ChainPolicy.make({"a": 1.0}, max_jump=0.5)
    assert linearize(P("s", a=0.0), P("d", a=0.4), policy) == ()
    assert linearize(P("s", a=0.3), P("d", a=0.3), policy) == ()


def test_linearize_hop_bound_random():
    rng = random.Random(20260809)
    for _ in range(1000):
        dims = rng.randint(1, 4)
        names = [f"p{i}" for i in range(dims)]
        weights = {n: rng.uniform(0.1, 5.0) for n in names}
        max_jump = rng.uniform(0.05, 2.0)
        policy = ChainPolicy.make(weights, max_jump)
        src = P("s", **{n: rng.uniform(-3, 3) for n in names})
        dst = P("d", **{n: rng.uniform(-3, 3) for n in names})
        chain = [src, *linearize(src, dst, policy), dst]
        for a, b in zip(chain, chain[1:]):
            assert distance(a, b, weights) <= max_jump * (1 + 1e-12)


def test_metric_properties_random_triples():
    rng = random.Random(7)
    weights = {"a": 2.0, "b": 0.5}
    for _ in range(300):
        pts = [P(f"p{i}", a=rng.uniform(-2, 2), b=rng.uniform(-2, 2)) for i in range(3)]
        d01 = distance(pts[0], pts[1], weights)
        d10 = distance(pts[1], pts[0], weights)
        d02 = distance(pts[0], pts[2], weights)
        d12 = distance(pts[1], pts[2], weights)
        assert d01 == pytest.approx(d10)
        assert d02 <= d01 + d12 + 1e-12


def test_scale_equivariance_of_selection():
    rng = random.Random(99)
    for _ in range(200):
        completed = [P(f"s{i}", a=rng.uniform(-2, 2), b=rng.uniform(-2, 2))
                     for i in range(5)]
        target = P("t", a=rng.uniform(-2, 2), b=rng.uniform(-2, 2))
        weights = {"a": rng.uniform(0.1, 3.0), "b": rng.uniform(0.1, 3.0)}
        scale = rng.uniform(0.01, 100.0)
        p1 = nearest_source(target, completed, ChainPolicy.make(weights, 1.0))
        p2 = nearest_source(
            target, completed,
            ChainPolicy.make({k: scale * v for k, v in weights.items()}, 1.0))
        assert p1.key == p2.key


def base_script(study, ident="base"):
    text = (
        "cfd1 = cfdpb(name='cfd1')\n"
        "cfd1.set('mach', 0.5)\n"
        "cfd1.set('alpha', 1.0)\n"
        "cfd1.set('init_file', 'f.dat')\n"
        "compute()\n"
    )
    return load_script_text(study, text, ident=ident)


def test_variator_builds_and_catalogs(tmp_path, study):
    db = make_db(tmp_path, study, view=("cfdpb.mach",))
    base = base_script(study)
    keys = doe.variator_build(base, [{"mach": 0.7}, {"mach": 0.8}], db)
    assert len(keys) == 2
    catalog = db.catalog()
    assert catalog[keys[0]].values["cfdpb.mach"] == 0.7
    assert catalog[keys[1]].values["cfdpb.mach"] == 0.8
    loaded = db.load(keys[0])
    assert [op.op for op in loaded.pending_ops] == ["compute"]


def test_variator_empty_points(tmp_path, study):
    db = make_db(tmp_path, study, view=("cfdpb.mach",))
    assert doe.variator_build(base_script(study), [], db) == []


def test_variator_shifts_file_paths(tmp_path, study):
    db = make_db(tmp_path, study, view=("cfdpb.mach",))
    base = base_script(study)
    keys = doe.variator_build(base, [{"mach": 0.7}], db, base_dir=str(tmp_path / "run"))
    loaded = db.load(keys[0])
    cfd = loaded.study.resolve("cfd1")
    # oracle: the exact string transform
    assert cfd.get("init_file") == os.path.join(str(tmp_path / "run"), keys[0], "f.dat")


def test_variator_invalid_parameter_path(tmp_path, study):
    db = make_db(tmp_path, study, view=("cfdpb.mach",))
    with pytest.raises(DiagnosticError, match="no attribute"):
        doe.variator_build(base_script(study), [{"nonexistent": 1.0}], db)


def test_swarm_spec_resolution():
    assert SwarmSpec(max_jobs=3).resolve() == 3
    cores = os.cpu_count() or 1
    assert SwarmSpec(node_fraction=1.0).resolve() == cores
    assert SwarmSpec(node_fraction=1e-9).resolve() == 1
    with pytest.raises(DiagnosticError):
        SwarmSpec().resolve()


class SlowKernel:
    """ToyKernel plus a delay so concurrency is observable."""

    alpha_range = (0.0, 10.0)
    xy_range = (-1.0, 1.0)

    def __init__(self, delay=0.05):
        self.delay = delay
        self.calls = []
        self._lock = threading.Lock()

    def evaluate(self, point, guess=None):
        with self._lock:
            self.calls.append(dict(point))
        time.sleep(self.delay)
        from declsim.orchestrate import ToyKernel
        return ToyKernel().evaluate(point, guess)


def test_span_completes_all_with_limit(tmp_path, study):
    db = make_db(tmp_path, study, view=("cfdpb.alpha",))
    base = base_script(study)
    points = [{"alpha": 0.5 * i} for i in range(4)]
    keys = doe.variator_build(base, points, db)
    kernel = SlowKernel(delay=0.02)
    result = doe.span(db, SwarmSpec(max_jobs=2), kernel=kernel)
    states = db.job_states()
    assert all(states[k] is store.JobState.CMP for k in keys)
    assert result.peak_concurrency <= 2
    assert set(result.observables) == set(keys)
    for key in keys:
        entry = db.catalog()[key]
        assert "lift" in entry.tags["observables"]
        assert os.path.isfile(os.path.join(db.root, "work", key, "observables.res"))


def test_span_single_variant_cold(tmp_path, study):
    db = make_db(tmp_path, study, view=("cfdpb.alpha",))
    keys = doe.variator_build(base_script(study), [{"alpha": 2.0}], db)
    policy = ChainPolicy.make({"alpha": 1.0}, max_jump=10.0)
    result = doe.span(db, SwarmSpec(max_jobs=1), policy=policy)
    assert set(result.observables) == set(keys)
    assert result.restarted_from == {}  # no completed source existed


def test_span_chains_and_linearizes(tmp_path, study):
    db = make_db(tmp_path, study, view=("cfdpb.alpha",))
    base = base_script(study)
    keys = doe.variator_build(base, [{"alpha": 0.0}, {"alpha": 3.0}], db)
    policy = ChainPolicy.make({"alpha": 1.0}, max_jump=1.0)
    result = doe.span(db, SwarmSpec(max_jobs=1), policy=policy)
    assert result.inserted  # intermediates for the 0 -> 3 jump
    states = db.job_states()
    assert all(s is store.JobState.CMP for s in states.values())
    far = keys[1]
    assert far in result.restarted_from
    # every hop of the executed chain respects the jump bound
    chain_key = result.restarted_from[far]
    assert db.catalog()[chain_key].values["cfdpb.alpha"] == pytest.approx(2.0)


class FlakyKernel(SlowKernel):
    def __init__(self, fail_key_alpha, failures=1):
        super().__init__(delay=0.0)
        self.fail_key_alpha = fail_key_alpha
        self.failures = failures

    def evaluate(self, point, guess=None):
        if point.get("alpha") == self.fail_key_alpha and self.failures > 0:
            self.failures -= 1
            raise RuntimeError("injected kernel failure")
        return super().evaluate(point, guess)


def test_span_retries_failed_job_once(tmp_path, study):
    db = make_db(tmp_path, study, view=("cfdpb.alpha",))
    keys = doe.variator_build(base_script(study), [{"alpha": 1.0}, {"alpha": 2.0}], db)
    result = doe.span(db, SwarmSpec(max_jobs=1), kernel=FlakyKernel(2.0, failures=1))
    assert set(result.observables) == set(keys)  # retried and completed
    assert not result.failed


def test_span_gives_up_after_two_failures(tmp_path, study):
    db = make_db(tmp_path, study, view=("cfdpb.alpha",))
    keys = doe.variator_build(base_script(study), [{"alpha": 1.0}, {"alpha": 2.0}], db)
    result = doe.span(db, SwarmSpec(max_jobs=1), kernel=FlakyKernel(2.0, failures=5))
    bad = [k for k in keys if db.catalog()[k].values["cfdpb.alpha"] == 2.0][0]
    assert result.failed == {bad: 2}
    assert db.job_states()[bad] is store.JobState.NYS  # left NYS and reported
    good = [k for k in keys if k != bad][0]
    assert db.job_states()[good] is store.JobState.CMP
