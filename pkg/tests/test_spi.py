import math
import random

import numpy as np
import pytest

from declsim import spi
from declsim.diagnostics import DiagnosticError
from declsim.spi import DiscoverError, Surrogate, cc_nodes, discover, spi_eval


def toy_f(x, y):
    return math.exp(-x * x - y * y) + 0.3 * x * y


def probe_error(surrogate, f, n=21):
    grid = np.linspace(-1.0, 1.0, n)
    return max(abs(spi_eval(surrogate, (x, y)) - f(x, y)) for x in grid for y in grid)


def test_cc_level_counts_and_values():
    assert cc_nodes(0).tolist() == [0.0]
    assert cc_nodes(1).tolist() == [-1.0, 0.0, 1.0]
    level2 = cc_nodes(2)
    # oracle: direct cosine evaluation (midpoint snaps to exact zero)
    expected = sorted(math.cos(k * math.pi / 4) for k in range(5))
    assert level2.tolist() == pytest.approx(expected, abs=1e-15)
    assert level2.tolist() == [-1.0, -math.cos(math.pi / 4), 0.0, math.cos(math.pi / 4), 1.0]


def test_cc_nestedness_bitwise_through_level_six():
    for level in range(0, 6):
        coarse = set(cc_nodes(level).tolist())
        fine = set(cc_nodes(level + 1).tolist())
        assert coarse <= fine  # exact float containment, no tolerance


def test_cc_level_size():
    for level in range(1, 8):
        assert len(cc_nodes(level)) == 2 ** level + 1


def test_polynomial_reproduced_within_sample_budget():
    log = []

    def provider(points):
        log.append(list(points))
        return [x * x + y for x, y in points]

    surrogate, report = discover([(-1, 1), (-1, 1)], provider, tol=1e-10, budget=50)
    assert report.converged
    assert report.samples <= 30
    assert probe_error(surrogate, lambda x, y: x * x + y) <= 1e-10


def test_summits_sampled_first():
    log = []

    def provider(points):
        log.append(list(points))
        return [toy_f(x, y) for x, y in points]

    discover([(-1, 1), (-1, 1)], provider, tol=1e-4, budget=300)
    first_batch = log[0]
    corners = {(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)}
    assert set(map(tuple, first_batch[:4])) == corners


def test_toy_observable_to_tolerance():
    surrogate, report = discover(
        [(-1, 1), (-1, 1)], lambda pts: [toy_f(x, y) for x, y in pts],
        tol=1e-4, budget=400)
    assert report.converged
    assert probe_error(surrogate, toy_f) <= 1e-4


def test_constant_converges_immediately():
    surrogate, report = discover([(-1, 1), (-1, 1)],
                                 lambda pts: [3.5] * len(pts), tol=1e-12)
    assert report.converged
    assert len(report.steps) == 0  # nothing admitted beyond the start block
    assert spi_eval(surrogate, (0.0, 0.0)) == pytest.approx(3.5, abs=1e-13)
    assert spi_eval(surrogate, (0.123, -0.77)) == pytest.approx(3.5, abs=1e-13)


def test_interpolation_property_at_sampled_nodes():
    surrogate, _ = discover(
        [(-1, 1), (-1, 1)], lambda pts: [toy_f(x, y) for x, y in pts],
        tol=1e-4, budget=400)
    for point in surrogate.sample_points():
        assert abs(spi_eval(surrogate, point) - toy_f(*point)) <= 1e-12


def test_downward_closure_preserved():
    surrogate, _ = discover(
        [(-1, 1), (-1, 1)], lambda pts: [toy_f(x, y) for x, y in pts],
        tol=1e-6, budget=400)
    admitted = set(surrogate.indices)
    for index in admitted:
        for i, level in enumerate(index):
            if level > 0:
                lowered = list(index)
                lowered[i] -= 1
                assert tuple(lowered) in admitted


def test_polynomial_exactness_in_span():
    """Any polynomial in the admitted span reproduces near machine eps."""
    def f(x, y):
        return 2.0 + 0.5 * x - 1.5 * y + 0.25 * x * y + x * x

    surrogate, report = discover([(-1, 1), (-1, 1)],
                                 lambda pts: [f(x, y) for x, y in pts],
                                 tol=1e-12, budget=80)
    assert probe_error(surrogate, f) <= 1e-12


def test_general_bounds_mapping():
    def f(a, b):
        return a * b + a * a

    surrogate, report = discover([(2.0, 6.0), (-10.0, 0.0)],
                                 lambda pts: [f(a, b) for a, b in pts],
                                 tol=1e-9, budget=120)
    rng = random.Random(4)
    for _ in range(50):
        a = rng.uniform(2.0, 6.0)
        b = rng.uniform(-10.0, 0.0)
        assert spi_eval(surrogate, (a, b)) == pytest.approx(f(a, b), abs=1e-8)


def test_eval_out_of_bounds_rejected():
    surrogate, _ = discover([(-1, 1), (-1, 1)],
                            lambda pts: [1.0] * len(pts), tol=1e-9)
    with pytest.raises(DiagnosticError, match="outside"):
        spi_eval(surrogate, (1.5, 0.0))
    with pytest.raises(DiagnosticError, match="coordinates"):
        spi_eval(surrogate, (0.0,))


def test_budget_stops_refinement():
    surrogate, report = discover(
        [(-1, 1), (-1, 1)], lambda pts: [toy_f(x, y) for x, y in pts],
        tol=1e-14, budget=40)
    assert not report.converged
    assert report.samples <= 40


def test_provider_failure_retains_partial_surrogate():
    calls = {"n": 0}

    def flaky(points):
        calls["n"] += 1
        if calls["n"] > 2:
            raise RuntimeError("solver crashed")
        return [toy_f(x, y) for x, y in points]

    with pytest.raises(DiscoverError) as err:
        discover([(-1, 1), (-1, 1)], flaky, tol=1e-10, budget=500)
    partial = err.value.surrogate
    assert isinstance(partial, Surrogate)
    assert partial.entries  # the initialization block survived
    assert spi_eval(partial, (0.0, 0.0)) == pytest.approx(toy_f(0.0, 0.0), abs=1e-9)


def test_serialization_round_trip_exact():
    surrogate, _ = discover(
        [(-1, 1), (-1, 1)], lambda pts: [toy_f(x, y) for x, y in pts],
        tol=1e-5, budget=300)
    text = spi.to_text(surrogate)
    again = spi.from_text(text)
    rng = random.Random(11)
    for _ in range(25):
        p = (rng.uniform(-1, 1), rng.uniform(-1, 1))
        assert spi_eval(again, p) == spi_eval(surrogate, p)


def test_one_dimensional_discovery():
    surrogate, report = discover([(0.0, 10.0)],
                                 lambda pts: [0.11 * a for (a,) in pts], tol=1e-12)
    assert report.converged
    for a in np.linspace(0, 10, 33):
        assert spi_eval(surrogate, (a,)) == pytest.approx(0.11 * a, abs=1e-12)


def test_discovery_through_the_spanning_automaton(tmp_path):
    """SPI steering the swarm: each refinement level's new nodes become
    database jobs executed by span under the swarm limit."""
    import declsim
    from declsim import doe, store
    from declsim.model import load_script_text

    study = declsim.build_study()
    db = store.ScriptStore(str(tmp_path / "spidb"), registry=study.registry,
                           ruleset=study.ruleset)
    db.declare_view(["cfdpb.x", "cfdpb.y"])
    base = load_script_text(study, (
        "cfd1 = cfdpb(name='cfd1')\n"
        "cfd1.set('x', 0.0)\n"
        "cfd1.set('y', 0.0)\n"
        "compute()\n"
    ), ident="spibase")

    provider = doe.swarm_provider(base, db, doe.MaxJobs(3), observable="f")
    surrogate, report = discover([(-1, 1), (-1, 1)], provider, tol=5e-3, budget=120)
    assert report.converged

    from declsim.orchestrate import ToyKernel
    kernel = ToyKernel()
    grid = np.linspace(-1, 1, 11)
    err = max(abs(spi_eval(surrogate, (x, y)) - kernel.evaluate({"x": x, "y": y})["f"])
              for x in grid for y in grid)
    assert err <= 5e-3
    states = db.job_states()
    assert states and all(s is store.JobState.CMP for s in states.values())
    assert len(states) == report.samples  # one database job per sample
