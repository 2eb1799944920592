import json
import urllib.error
import urllib.request

import pytest

import declsim
from declsim import service
from declsim.model import load_script_text, structure_signature


@pytest.fixture
def server():
    study = declsim.build_study()
    load_script_text(
        study,
        "mod1 = model(name='mod1')\n"
        "cfd1 = cfdpb(name='cfd1')\n"
        "mod1.set('phymod', 'nslam')\n",
        ident="session",
    )
    srv = service.serve_ui(study)
    yield srv
    srv.shutdown()


def get(server, path):
    with urllib.request.urlopen(f"http://{server.endpoint}{path}") as resp:
        body = resp.read().decode("utf-8")
        if resp.headers.get_content_type() == "application/json":
            return resp.status, json.loads(body)
        return resp.status, body


def post(server, path, payload):
    data = json.dumps(payload).encode("utf-8")
    req = urllib.request.Request(f"http://{server.endpoint}{path}", data=data,
                                 headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req) as resp:
        return resp.status, json.loads(resp.read().decode("utf-8"))


def test_contexts_enumeration(server):
    status, body = get(server, "/contexts")
    assert status == 200
    idents = {c["ident"] for c in body["contexts"]}
    assert {"root", "session", "mod1", "cfd1"} <= idents


def test_context_detail_embeds_schema(server):
    status, body = get(server, "/context/mod1")
    ctx = body["context"]
    assert ctx["class"] == "model"
    assert ctx["bindings"]["phymod"]["value"] == "nslam"
    schema = {item["name"]: item for item in ctx["schema"]}
    assert schema["phymod"]["domain"]["values"] == ["euler", "nslam", "nstur"]
    assert schema["phymod"]["required"] is True
    assert "conservative" in ctx["macros"]


def test_set_embeds_fresh_report_and_logs_line(server):
    status, body = post(server, "/context/mod1/set",
                        {"attr": "visclaw", "value": "sutherland"})
    assert status == 200
    assert body["context"]["bindings"]["visclaw"]["value"] == "sutherland"
    report = body["report"]
    missing_attrs = {m[1] for m in report["missing"]}
    assert "suth_const" in missing_attrs  # live check demands the new values
    status, log = get(server, "/log")
    assert "mod1.set('visclaw', 'sutherland')" in log


def test_set_invalid_value_three_part_diagnostic(server):
    with pytest.raises(urllib.error.HTTPError) as err:
        post(server, "/context/mod1/set", {"attr": "phymod", "value": "bogus"})
    body = json.loads(err.value.read().decode("utf-8"))
    assert body["severity"] == "ERROR"
    assert body["formatted"].splitlines()[-1].startswith("suggestion: ")


def test_what_if_leaves_state_unchanged(server):
    study = server.state.study
    before = structure_signature(study.root)
    status, body = post(server, "/check",
                        {"what_if": [["mod1", "phymod", "nstur"]]})
    assert status == 200
    missing = {m[1] for m in body["report"]["missing"]}
    assert "turbmod" in missing
    status, ctx = get(server, "/context/mod1")
    assert ctx["context"]["bindings"]["phymod"]["value"] == "nslam"
    assert structure_signature(study.root) == before


def test_prune_preview_then_apply(server):
    post(server, "/context/mod1/set", {"attr": "phymod", "value": "euler"})
    post(server, "/context/mod1/set", {"attr": "visclaw", "value": "sutherland"})
    status, body = post(server, "/check", {"prune": "preview"})
    assert body["preview"] is True
    assert body["report"]["pruned"] == [["mod1", "visclaw", "sutherland"]]
    # preview does not modify the study
    status, ctx = get(server, "/context/mod1")
    assert ctx["context"]["bindings"]["visclaw"]["value"] == "sutherland"
    status, body = post(server, "/check", {"prune": "apply"})
    status, ctx = get(server, "/context/mod1")
    assert "visclaw" not in ctx["context"]["bindings"]


def test_origin_endpoint(server):
    for line in (
        "mod1.set('mixture', 'air')",
        "cfd1.set('units', 'si')",
        "mod1.set('visclaw', 'sutherland')",
        "mod1.set('suth_const', 110.4)",
        "mod1.set('suth_tref', 288.15)",
        "check()",
    ):
        post(server, "/console", {"line": line})
    status, body = get(server, "/origin/mod1/suth_muref")
    assert "contextual rule" in body["origin"]
    assert "1.78938e-05" in body["trace"]


def test_man_endpoint(server):
    status, body = get(server, "/man/phymod")
    assert "1) Attribute name: phymod" in body["text"]


def test_console_exec_check_and_errors(server):
    status, body = post(server, "/console", {"line": "check()"})
    assert body["report"]["status"] in (True, False)
    with pytest.raises(urllib.error.HTTPError) as err:
        post(server, "/console", {"line": "mod1.set('phymod', 'bogus')"})
    body = json.loads(err.value.read().decode("utf-8"))
    assert "euler" in body["formatted"]


def test_dump_and_log_replay_reproduce_state(server):
    post(server, "/context/mod1/set", {"attr": "mixture", "value": "air"})
    post(server, "/console", {"line": "num1 = numerics(name='num1')"})
    post(server, "/console", {"line": "num1.set('cfl', 2.5)"})
    status, log = get(server, "/log")
    replay = declsim.build_study()
    for raw in log.splitlines():
        if raw.strip():
            replay.exec_statement(raw)
    live = server.state.study
    assert structure_signature(replay.root) == structure_signature(live.root)


def test_mutating_response_report_equals_fresh_check(server):
    status, body = post(server, "/context/mod1/set",
                        {"attr": "visclaw", "value": "sutherland"})
    from declsim import rules
    with server.state.lock:
        fresh = rules.check(server.state.study.root)
    assert body["report"]["status"] == fresh.status
    assert len(body["report"]["missing"]) == len(fresh.missing)


def test_unknown_endpoint_404ish(server):
    with pytest.raises(urllib.error.HTTPError):
        get(server, "/nope")


def test_meaningless_attrs_drive_auto_folding(server):
    # laminar: turbulence members are meaningless, so the editor can
    # auto-fold the turbulence macro group
    status, body = get(server, "/context/mod1")
    ctx = body["context"]
    assert ctx["bindings"]["phymod"]["value"] == "nslam"
    assert {"turbmod", "tur_inten"} <= set(ctx["meaningless"])
    post(server, "/context/mod1/set", {"attr": "phymod", "value": "nstur"})
    status, body = get(server, "/context/mod1")
    assert "turbmod" not in body["context"]["meaningless"]
    schema = {item["name"]: item for item in body["context"]["schema"]}
    assert schema["turbmod"]["depends"] == [
        {"source": "phymod", "allowed": ["nstur"]}]


def test_static_directory_serving(tmp_path):
    study = declsim.build_study()
    static = tmp_path / "web"
    static.mkdir()
    (static / "index.html").write_text("<!doctype html><title>editor</title>")
    (static / "app.js").write_text("console.log('ready')")
    srv = service.serve_ui(study, static_dir=str(static))
    try:
        status, body = get(srv, "/")
        assert status == 200 and "editor" in body
        status, body = get(srv, "/app.js")
        assert "ready" in body
        with pytest.raises(urllib.error.HTTPError):
            get(srv, "/../pyproject.toml")  # traversal guard
    finally:
        srv.shutdown()
