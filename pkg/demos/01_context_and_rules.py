"""Build a simulation description and watch the rule engine complete it.

A study holds description objects (attribute containers) grouped under
a root script.  Static checks fire on every set(); contextual checks
run on demand and apply context-dependent defaults to fixpoint.
"""

import declsim
from declsim.rules import check, get_or_deft, show_origin, what_if

study = declsim.build_study()

# One physical-model description and one global-problem description.
mod1 = study.create_description("model", "mod1")
cfd1 = study.create_description("cfdpb", "cfd1")

mod1.set("phymod", "nslam")          # laminar Navier-Stokes
mod1.set("visclaw", "sutherland")    # triggers influence demands
mod1.set("mixture", "air")
cfd1.set("units", "si")

print("--- first check: the Sutherland influence rule demands values ---")
report = check(study.root)
print(report.render())

# Two of the demands are plain user inputs; the reference viscosity is
# covered by a contextual default (air + SI units).
mod1.set("suth_const", 110.4)
mod1.set("suth_tref", 288.15)

print("\n--- complete: suth_muref arrives through a context rule ---")
report = check(study.root)
print(report.render())

print("\n--- tracing the automatic value back to its rule ---")
origin, trace = show_origin(mod1, "suth_muref")
print(trace)

print("\n--- get_or_deft never mutates; it just answers best-effort ---")
mod2 = study.create_description("model", "mod2")
print("mod2.phymod ->", get_or_deft(mod2, "phymod"), "(static default)")
print("mod2 bindings:", dict(mod2.bindings))

print("\n--- what-if: switching to turbulent, without touching anything ---")
hypothetical = what_if(study.root, [(mod1, "phymod", "nstur")])
for entry in hypothetical.missing:
    print("would need:", entry.context, entry.attr)
print("real phymod still:", mod1.get("phymod"))

print("\n--- a meaningless value: warning first, prune on request ---")
mod1.set("phymod", "euler")
report = check(study.root)
print(report.diagnostics[0].headline)
report = check(study.root, prune=True)
print("pruned:", report.pruned)
print(study.root.view())
