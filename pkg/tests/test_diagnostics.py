from declsim.diagnostics import (
    Diagnostic,
    DiagnosticLog,
    Severity,
    error,
    escalate_all,
    exit_status,
    format_diagnostic,
    warning,
)


def test_format_three_parts():
    d = error("required value missing: mod1.suth_const",
              ["demanded by influence:visclaw:'sutherland'"],
              "set(mod1, 'suth_const', <float>)")
    lines = format_diagnostic(d).splitlines()
    assert lines[0] == "ERROR: required value missing: mod1.suth_const"
    assert lines[-1] == "suggestion: set(mod1, 'suth_const', <float>)"
    assert len(lines) == 3


def test_empty_detail_two_lines():
    d = warning("short", [], "do the thing")
    lines = format_diagnostic(d).splitlines()
    assert len(lines) == 2
    assert lines[0].startswith("WARNING: ")
    assert lines[1].startswith("suggestion: ")


def test_escalation_changes_headline_severity_only():
    d = warning("meaningless value: mod1.visclaw", ["detail line"], "remove it")
    e = d.escalated()
    assert e.severity is Severity.ERROR
    assert format_diagnostic(e).splitlines()[0].startswith("ERROR: ")
    assert e.detail == d.detail and e.suggestion == d.suggestion
    # idempotent on errors
    assert e.escalated() is e


def test_escalate_all_multiset():
    ds = [warning("w1"), error("e1"), warning("w2")]
    out = escalate_all(ds)
    assert [d.severity for d in out] == [Severity.ERROR] * 3
    assert [d.headline for d in out] == ["w1", "e1", "w2"]


def test_exit_status_policy():
    assert exit_status([warning("w")]) == 0
    assert exit_status([warning("w"), error("e")]) == 1
    log = DiagnosticLog()
    assert log.exit_status() == 0
    log.add(error("boom"))
    assert log.exit_status() == 1


def test_suggestion_always_last_line():
    for d in (error("a", ["x", "y"], "fix"), warning("b", [], ""), error("c", ["z"], "go")):
        assert format_diagnostic(d).splitlines()[-1].startswith("suggestion: ")
