"""Adaptive experiment-space discovery with sparse interpolation.

Sampling starts at the domain summits, then a greedy dimension-adaptive
loop admits the multi-index with the largest surplus indicator until
the tolerance or budget is reached.  The surrogate then answers at any
interior point for the cost of a polynomial evaluation.
"""

import math
import tempfile

import numpy as np

from declsim import spi
from declsim.orchestrate import ToyKernel

kernel = ToyKernel()


def provider(points):
    return [kernel.evaluate({"x": x, "y": y})["f"] for x, y in points]


surrogate, report = spi.discover(
    bounds=[(-1.0, 1.0), (-1.0, 1.0)],
    provider=provider,
    tol=1e-4,
    budget=400,
    observable="f",
)
print(report.render())

grid = np.linspace(-1, 1, 21)
true = lambda x, y: math.exp(-x * x - y * y) + 0.3 * x * y
err = max(abs(spi.spi_eval(surrogate, (x, y)) - true(x, y)) for x in grid for y in grid)
print(f"\nprobe-grid max error: {err:.3e} with {report.samples} kernel samples")
print(f"admitted multi-indices: {surrogate.indices}")

path = tempfile.mktemp(suffix=".res", prefix="declsim_surrogate_")
spi.save(surrogate, path)
again = spi.load(path)
print(f"\nsurrogate document written to {path}")
print("reloaded surrogate at (0.2, -0.4):", spi.spi_eval(again, (0.2, -0.4)))
print("analytic value              :", true(0.2, -0.4))

# The full pipeline: the interpolation loop steers the spanning
# automaton, so every sample is a database job with full traceability.
import declsim
from declsim import doe, store
from declsim.model import load_script_text

study = declsim.build_study()
db = store.ScriptStore(tempfile.mkdtemp(prefix="declsim_spidb_"),
                       registry=study.registry, ruleset=study.ruleset)
db.declare_view(["cfdpb.x", "cfdpb.y"])
base = load_script_text(study, """\
cfd1 = cfdpb(name='cfd1')
cfd1.set('x', 0.0)
cfd1.set('y', 0.0)
compute()
""", ident="spibase")

provider2 = doe.swarm_provider(base, db, doe.MaxJobs(4), observable="f")
surrogate2, report2 = spi.discover([(-1, 1), (-1, 1)], provider2,
                                   tol=1e-3, budget=200)
states = db.job_states()
print(f"\nswarm-backed discovery: {report2.samples} samples, "
      f"{len(states)} database jobs, all "
      f"{'CMP' if all(s is store.JobState.CMP for s in states.values()) else 'NOT DONE'}")
