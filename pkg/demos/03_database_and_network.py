"""Script database: dump/load, views, job states, remote access.

Scripts serialize to canonical text records; a declared view drives the
catalog used by search(); jobs move through NYS -> RUN -> CMP with
clean() as the crash-recovery reset.  The same operations work over a
TCP connection when no shared filesystem is available.
"""

import tempfile

import declsim
from declsim import net, store
from declsim.model import load_script_text

study = declsim.build_study()
root_dir = tempfile.mkdtemp(prefix="declsim_db_")
db = store.ScriptStore(root_dir, registry=study.registry, ruleset=study.ruleset)
db.declare_view(["model.phymod", "cfdpb.alpha"])

for ident, phymod, alpha in (("caseA", "nslam", 1.0),
                             ("caseB", "euler", 2.0),
                             ("caseC", "nstur", 3.0)):
    source = declsim.build_study()
    text = (
        "m = model(name='m')\n"
        f"m.set('phymod', '{phymod}')\n"
        "c = cfdpb(name='c')\n"
        f"c.set('alpha', {alpha})\n"
        "compute()\n"
    )
    db.dump(load_script_text(source, text, ident=ident))

print("database at", root_dir)
print("catalog:")
for key, entry in db.catalog().items():
    print(" ", key, entry.values)

print("\nsearch phymod == 'nslam':", db.search([("model.phymod", "==", "nslam")]))
print("search alpha >= 2:", db.search([("cfdpb.alpha", ">=", 2.0)]))

print("\n--- the job automaton ---")
print("claim caseA:", db.claim("caseA"))
print("claim caseA again:", db.claim("caseA"), "(someone else already runs it)")
db.complete("caseA")
db.claim("caseB")
print("states:", {k: s.value for k, s in db.job_states().items()})
db.clean()  # crash recovery: every RUN goes back to NYS, CMP stays
print("after clean:", {k: s.value for k, s in db.job_states().items()})

print("\n--- the same store over TCP ---")
server = net.serve(db)
try:
    print("remote search:", net.remote_db_search(
        server.endpoint, [("model.phymod", "==", "nslam")]))
    script = net.remote_load(server.endpoint, "caseC", study.registry, study.ruleset)
    print("remote load caseC ->", [d.ident for d in script.descriptions()],
          "pending:", [op.op for op in script.pending_ops])
finally:
    server.shutdown()
