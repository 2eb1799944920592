"""Boot dispatch: the same script text runs different algorithms.

A description class declaring a compute entry point is bootable; the
instance holding the compute token is the boot object.  compute() on
the root dispatches to it, so coupling levels switch with zero
conditionals in the script.
"""

import declsim
from declsim import orchestrate
from declsim.model import load_script_text

PRELUDE = """\
cfd1 = cfdpb(name='cfd1')
cfd1.set('sfd', 'active')
cfd1.set('alpha', 2.0)
dmd1 = dmd(name='dmd1')
spr1 = sparse_poly(name='spr1')
spr1.set('tolerance', 0.001)
spr1.set('budget', 60)
"""

for label, tail in [
    ("implicit last-created bootable", "compute()\n"),
    ("explicit token passing", "set_boot_objt(dmd1)\ncompute()\n"),
    ("integer coupling level", "slvrs = {0: cfd1, 1: dmd1, 2: spr1}\n"
                               "slvr_lev = 0\n"
                               "slvrs[slvr_lev].compute()\n"),
]:
    study = declsim.build_study()
    load_script_text(study, PRELUDE + tail, ident="job")
    result = orchestrate.run_pending(study)[0]
    print(f"{label:32s} -> {result['procedure']}")

print("\n--- target lift: angles of attack for requested lift values ---")
study = declsim.build_study()
load_script_text(study, """\
tcl1 = target_lift(name='tcl1')
lift = extractor(name='lift')
lift.set('quantity', 'lift')
tcl1.attach(lift)
alphas = compute([0.05, 0.10, 0.15])
""", ident="tlift")
orchestrate.run_pending(study)
for target, alpha in zip((0.05, 0.10, 0.15), study.variables["alphas"]):
    print(f"lift {target:.2f} -> alpha {alpha:.6f} deg")

print("\n--- provide(): blind creation for shared slave objects ---")
first = orchestrate.provide(study, "numerics", "slave")
again = orchestrate.provide(study, "numerics", "slave")
print("same object both times:", first is again)
