import pytest

import declsim
from declsim import orchestrate


def pytest_runtest_logreport(report):
    """One pass/fail line per acceptance criterion."""
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        outcome = "PASS" if report.passed else "FAIL"
        print(f"\nACCEPTANCE {name}: {outcome}")


@pytest.fixture
def study():
    """Full study: shipped definitions, rules, and products."""
    return declsim.build_study()


@pytest.fixture
def bare_study():
    """Study without products (core classes only)."""
    return declsim.build_study(products=())


@pytest.fixture
def sutherland_case(study):
    """Laminar Sutherland configuration shared across the rule tests."""
    mod1 = study.create_description("model", "mod1")
    cfd1 = study.create_description("cfdpb", "cfd1")
    mod1.set("phymod", "nslam")
    mod1.set("visclaw", "sutherland")
    mod1.set("mixture", "air")
    cfd1.set("units", "si")
    mod1.set("suth_const", 110.4)
    mod1.set("suth_tref", 288.15)
    return study, mod1, cfd1


def make_db(tmp_path, study, name="db", view=("model.phymod",)):
    from declsim import store
    db = store.ScriptStore(str(tmp_path / name), registry=study.registry,
                           ruleset=study.ruleset)
    db.declare_view(list(view))
    return db
