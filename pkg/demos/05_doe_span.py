"""Parameter studies: variations, chained spanning, swarm limits.

The variator turns a base script plus perturbations into database
records with pending computes.  Spanning claims jobs, restarts each
from the nearest completed point under a weighted metric, inserts
intermediate points when a hop is too long, and runs under a
concurrency limit.
"""

import tempfile

import declsim
from declsim import doe, store
from declsim.model import load_script_text

study = declsim.build_study()
root_dir = tempfile.mkdtemp(prefix="declsim_doe_")
db = store.ScriptStore(root_dir, registry=study.registry, ruleset=study.ruleset)
db.declare_view(["cfdpb.alpha", "cfdpb.mach"])

base = load_script_text(study, """\
cfd1 = cfdpb(name='cfd1')
cfd1.set('mach', 0.5)
cfd1.set('alpha', 0.0)
cfd1.set('init_file', 'restart.dat')
compute()
""", ident="base")

points = [{"alpha": 0.0}, {"alpha": 1.0}, {"alpha": 4.0}, {"alpha": 5.0}]
keys = doe.variator_build(base, points, db)
print("variants:", keys)
print("file paths shifted per point, e.g.:",
      db.load(keys[0]).study.resolve("cfd1").get("init_file"))

policy = doe.ChainPolicy.make({"alpha": 1.0, "mach": 4.0}, max_jump=1.5)
result = doe.span(db, doe.SwarmSpec(max_jobs=2), policy=policy)

print(f"\nspanned {len(result.observables)} jobs "
      f"(peak concurrency {result.peak_concurrency})")
if result.inserted:
    print("linearization inserted:", result.inserted)
for key in sorted(result.observables):
    tags = db.catalog()[key].tags
    restart = tags.get("restart_from", "cold start")
    print(f"  {key}: lift={result.observables[key]['lift']:.4f}  restart: {restart}")

print("\njob states:", {k: s.value for k, s in sorted(db.job_states().items())})
