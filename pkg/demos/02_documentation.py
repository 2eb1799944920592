"""Generated documentation: man pages, manual skeletons, coherency.

Everything renders straight from the resource files, so the text can
never drift from the engine's actual behavior.
"""

import declsim
from declsim.docgen import check_manual_coherency, gen_manual_skeleton, man

study = declsim.build_study()

print("--- man('phymod'): the six numbered sections ---")
print(man(study, "phymod"))

print("\n--- man on a function and on a method ---")
print(man(study, "check"))
print()
print(man(study, "model.view"))

print("\n--- manual maintenance ---")
# A user manual that documents only one attribute so far.
manual = """
manual = {
  'model': {
    'phymod': {'text': 'fluid model', 'values': ['euler', 'nslam', 'nstur']},
  },
}
"""
report = check_manual_coherency(study.registry, study.ruleset, manual)
print(f"attributes still undocumented: {len(report.missing_from_manual)}")

skeleton = gen_manual_skeleton(study.registry, study.ruleset, manual)
print("skeleton entries generated for, e.g.:")
for line in skeleton.splitlines()[:1]:
    print(" ", line[:100], "...")
