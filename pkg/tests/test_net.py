import socket
import struct
import threading
import time

import pytest

import declsim
from declsim import net, store
from declsim.model import load_script_text, structure_signature
from declsim.net import NetError

from conftest import make_db


@pytest.fixture
def served_db(tmp_path, study):
    db = make_db(tmp_path, study)
    for ident, phymod in (("s1", "nslam"), ("s2", "euler")):
        s = declsim.build_study()
        script = load_script_text(
            s, f"m = model(name='m')\nm.set('phymod', '{phymod}')\ncompute()\n", ident=ident)
        db.dump(script)
    server = net.serve(db)
    yield db, server
    server.shutdown()


def test_remote_search_equals_local(served_db):
    db, server = served_db
    predicate = [("model.phymod", "==", "nslam")]
    assert net.remote_db_search(server.endpoint, predicate) == db.search(predicate)
    # byte transparency: the wire body equals the server-side rendering
    assert net.remote_search_raw(server.endpoint, predicate) == \
        net.render_keys(db.search(predicate))


def test_remote_load_round_trip(served_db, study):
    db, server = served_db
    local = db.load("s1")
    remote = net.remote_load(server.endpoint, "s1", study.registry, study.ruleset)
    assert structure_signature(remote)[0] == structure_signature(local)[0]
    assert [op.op for op in remote.pending_ops] == ["compute"]
    # byte transparency on the record text
    assert net.remote_load_text(server.endpoint, "s1") == db.record_text("s1")


def test_remote_dump_then_load(served_db):
    db, server = served_db
    s = declsim.build_study()
    script = load_script_text(
        s, "m = model(name='m')\nm.set('phymod', 'nstur')\nm.set('turbmod', 'keps')\n",
        ident="s3")
    key = net.remote_dump(server.endpoint, script, db.view())
    assert key == "s3"
    loaded = db.load("s3")
    assert structure_signature(loaded)[0] == structure_signature(script)[0]
    assert db.catalog()["s3"].values["model.phymod"] == "nstur"


def test_remote_error_frame_relayed(served_db):
    db, server = served_db
    with pytest.raises(NetError) as err:
        net.remote_load_text(server.endpoint, "missing")
    assert "unknown key 'missing'" in str(err.value)
    # the relayed text equals the local diagnostic headline
    try:
        db.record_text("missing")
    except Exception as local_err:
        assert local_err.diagnostic.headline in str(err.value)


def test_malformed_frame_gets_error_response_server_survives(served_db):
    db, server = served_db
    host, port = server.host, server.port
    with socket.create_connection((host, port)) as conn:
        payload = b"GARBAGE without digest\n"
        conn.sendall(struct.pack("!I", len(payload)) + payload)
        frame = net.read_frame(conn)
    assert frame.decode("utf-8").startswith("ERR")
    # server still answers afterwards
    assert net.remote_db_search(server.endpoint, []) == db.search([])


def test_concurrent_remote_claims_one_winner(served_db):
    db, server = served_db
    results = []
    barrier = threading.Barrier(6)

    def worker():
        barrier.wait()
        results.append(net.remote_claim(server.endpoint, "s1"))

    threads = [threading.Thread(target=worker) for _ in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results.count(True) == 1
    assert db.job_states()["s1"] is store.JobState.RUN


def test_shutdown_drains_inflight_request(tmp_path, study):
    db = make_db(tmp_path, study, name="drain")
    s = declsim.build_study()
    db.dump(load_script_text(s, "m = model(name='m')\n", ident="k1"))

    slow_started = threading.Event()
    original = store.ScriptStore.record_text

    def slow_record_text(self, key):
        slow_started.set()
        time.sleep(0.4)
        return original(self, key)

    server = net.serve(db)
    answers = []
    try:
        store.ScriptStore.record_text = slow_record_text

        def client():
            answers.append(net.remote_load_text(server.endpoint, "k1"))

        t = threading.Thread(target=client)
        t.start()
        assert slow_started.wait(2.0)
        server.shutdown()  # must block until the in-flight request finished
        t.join(2.0)
        assert answers and answers[0].startswith("m = model")
    finally:
        store.ScriptStore.record_text = original


def test_bind_failure_reported(tmp_path, study):
    db = make_db(tmp_path, study, name="bindfail")
    server = net.serve(db)
    try:
        with pytest.raises(NetError, match="cannot bind"):
            net.serve(db, server.host, server.port)
    finally:
        server.shutdown()
