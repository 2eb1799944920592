"""Remote store access over TCP for hosts without a shared filesystem.

Frame format (bit-exact): a 4-byte big-endian length prefix, then the
UTF-8 payload::

    <VERB> [argument]\\n
    <body ...>
    digest: <sha256 of the body>\\n

Verbs: DUMP <key>, LOAD <key>, SEARCH, CLAIM <key>.  Responses use OK
or ERR in the verb position; error frames relay the server diagnostic
verbatim.  One request per connection.
"""

from __future__ import annotations

import hashlib
import socket
import socketserver
import struct
import threading
from typing import Any, Optional, Sequence

from . import model, store
from .diagnostics import DiagnosticError, error
from .notation import dumps_value, parse_value
from .registry import UNDEFINED


class NetError(DiagnosticError):
    pass


def _digest(body: str) -> str:
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


def encode_frame(verb: str, body: str) -> bytes:
    payload = f"{verb}\n{body}digest: {_digest(body)}\n".encode("utf-8")
    return struct.pack("!I", len(payload)) + payload


def decode_payload(payload: bytes) -> tuple[str, str]:
    """(verb line, body) from a framed payload; digest verified."""
    text = payload.decode("utf-8")
    verb_line, _, rest = text.partition("\n")
    body, _, digest_line = rest.rpartition("digest: ")
    if not digest_line:
        raise NetError(error("frame has no digest line", [verb_line],
                             "use the framed protocol", code="bad-frame"))
    if digest_line.strip() != _digest(body):
        raise NetError(error("frame digest mismatch", [verb_line],
                             "retransmit the request", code="bad-frame"))
    return verb_line, body


def _recv_exact(conn: socket.socket, count: int) -> bytes:
    chunks = []
    while count > 0:
        chunk = conn.recv(count)
        if not chunk:
            raise NetError(error("connection closed mid-frame", [],
                                 "retry the request", code="short-frame"))
        chunks.append(chunk)
        count -= len(chunk)
    return b"".join(chunks)


def read_frame(conn: socket.socket) -> bytes:
    header = _recv_exact(conn, 4)
    (length,) = struct.unpack("!I", header)
    if length > 64 * 1024 * 1024:
        raise NetError(error(f"frame length {length} exceeds the limit", [],
                             "split the payload", code="oversized-frame"))
    return _recv_exact(conn, length)


# -- serialization of search results and view values ---------------------


def render_keys(keys: Sequence[str]) -> str:
    return dumps_value(tuple(keys)) + "\n"


def render_view_values(values: dict) -> str:
    plain = {k: (None if v is UNDEFINED else v) for k, v in values.items()}
    return dumps_value(plain)


# -- server ---------------------------------------------------------------


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        db: store.ScriptStore = self.server.db  # type: ignore[attr-defined]
        try:
            payload = read_frame(self.request)
            verb_line, body = decode_payload(payload)
            response = _serve_request(db, verb_line, body)
        except DiagnosticError as exc:
            response = encode_frame("ERR", exc.diagnostic.headline + "\n")
        except Exception as exc:  # malformed input must not kill the server
            response = encode_frame("ERR", f"malformed request: {exc}\n")
        try:
            self.request.sendall(response)
        except OSError:
            pass


def _serve_request(db: store.ScriptStore, verb_line: str, body: str) -> bytes:
    verb, _, arg = verb_line.partition(" ")
    arg = arg.strip()
    if verb == "LOAD":
        text = db.record_text(arg)
        return encode_frame("OK", text)
    if verb == "SEARCH":
        predicate = [tuple(term) for term in parse_value(body.strip() or "[]")]
        keys = db.search(predicate)
        return encode_frame("OK", render_keys(keys))
    if verb == "DUMP":
        values_line, _, text = body.partition("\n")
        view_values = parse_value(values_line or "{}")
        key = db.store_text(arg, text, view_values)
        return encode_frame("OK", key + "\n")
    if verb == "CLAIM":
        won = db.claim(arg)
        return encode_frame("OK", ("True" if won else "False") + "\n")
    raise NetError(error(f"unknown verb {verb!r}", [verb_line],
                         "use DUMP, LOAD, SEARCH or CLAIM", code="unknown-verb"))


class NetServer:
    """Threaded one-request-per-connection server over a script store."""

    def __init__(self, db: store.ScriptStore, host: str = "127.0.0.1", port: int = 0):
        class _Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = False  # shutdown drains in-flight requests
            block_on_close = True

        self._server = _Server((host, port), _Handler)
        self._server.db = db  # type: ignore[attr-defined]
        self.host, self.port = self._server.server_address[:2]
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        name="declsim-net", daemon=True)
        self._thread.start()

    @property
    def endpoint(self) -> str:
        return f"{self.host}:{self.port}"

    def shutdown(self):
        self._server.shutdown()
        self._server.server_close()
        self._thread.join()


def serve(db: store.ScriptStore, host: str = "127.0.0.1", port: int = 0) -> NetServer:
    try:
        return NetServer(db, host, port)
    except OSError as exc:
        raise NetError(error(
            f"cannot bind {host}:{port}", [str(exc)],
            "pick a free port with --port", code="bind-failure",
        )) from exc


# -- client ---------------------------------------------------------------


def _parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, _, port = endpoint.rpartition(":")
    if not host or not port.isdigit():
        raise NetError(error(f"malformed endpoint {endpoint!r}", [],
                             "use host:port", code="bad-endpoint"))
    return host, int(port)


def call(endpoint: str, verb: str, body: str = "", timeout: float = 30.0) -> tuple[str, str]:
    """One framed request; returns (status-verb-line, body)."""
    host, port = _parse_endpoint(endpoint)
    try:
        with socket.create_connection((host, port), timeout=timeout) as conn:
            conn.sendall(encode_frame(verb, body))
            payload = read_frame(conn)
    except OSError as exc:
        raise NetError(error(
            f"transport failure talking to {endpoint}", [str(exc)],
            "check that the server is running", code="transport",
        )) from exc
    return decode_payload(payload)


def _expect_ok(verb_line: str, body: str, endpoint: str) -> str:
    if verb_line.split(" ")[0] != "OK":
        raise NetError(error(
            f"remote error from {endpoint}", [body.strip() or verb_line],
            "inspect the server log", code="remote-error",
        ))
    return body


def remote_dump(endpoint: str, script: model.Script, view: store.ViewSpec) -> str:
    """Serialize client-side, catalog with client-computed view values."""
    text = model.dump_context(script)
    tmp_store_values = _client_view_values(script, view)
    body = render_view_values(tmp_store_values) + "\n" + text
    verb_line, reply = call(endpoint, f"DUMP {script.ident}", body)
    return _expect_ok(verb_line, reply, endpoint).strip()


def _client_view_values(script: model.Script, view: store.ViewSpec) -> dict:
    from .rules import get_or_deft
    values: dict[str, Any] = {}
    descs = model.closure(script)
    for path in view.attrs:
        class_name, _, attr = path.partition(".")
        value: Any = UNDEFINED
        for desc in descs:
            if desc.class_name == class_name and attr in \
                    desc.study.registry.classes[class_name].attributes:
                value = get_or_deft(desc, attr)
                break
        values[path] = value
    return values


def remote_load(endpoint: str, key: str, registry, ruleset=None) -> model.Script:
    verb_line, body = call(endpoint, f"LOAD {key}")
    text = _expect_ok(verb_line, body, endpoint)
    study = model.Study(registry, ruleset)
    return model.load_script_text(study, text, ident=key)


def remote_load_text(endpoint: str, key: str) -> str:
    verb_line, body = call(endpoint, f"LOAD {key}")
    return _expect_ok(verb_line, body, endpoint)


def remote_db_search(endpoint: str, predicate: Sequence[tuple]) -> list[str]:
    body = dumps_value(tuple(tuple(t) for t in predicate)) + "\n"
    verb_line, reply = call(endpoint, "SEARCH", body)
    return list(parse_value(_expect_ok(verb_line, reply, endpoint).strip()))


def remote_search_raw(endpoint: str, predicate: Sequence[tuple]) -> str:
    """Raw response body, for byte-level transparency checks."""
    body = dumps_value(tuple(tuple(t) for t in predicate)) + "\n"
    verb_line, reply = call(endpoint, "SEARCH", body)
    return _expect_ok(verb_line, reply, endpoint)


def remote_claim(endpoint: str, key: str) -> bool:
    verb_line, reply = call(endpoint, f"CLAIM {key}")
    return _expect_ok(verb_line, reply, endpoint).strip() == "True"
