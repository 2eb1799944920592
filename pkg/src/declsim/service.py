"""HTTP facade for interactive editing: live checks, what-if, console.

JSON over HTTP, single study per server.  Mutations are serialized
through one lock and every mutating response embeds a fresh check
report, so a client can render missing-required markers (red) and
coherent folded macros (green) without extra round trips.  An
append-only command log of script statements supports full state
rebuild through the script loader.
"""

from __future__ import annotations

import json
import mimetypes
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Optional
from urllib.parse import unquote

from . import docgen, model, rules
from .diagnostics import DiagnosticError, Severity, error, format_diagnostic
from .model import Description, Script, Study
from .notation import Symbol, Tagged, dumps_value
from .registry import UNDEFINED, DefaultKind


def _jsonable(value: Any) -> Any:
    if value is UNDEFINED:
        return None
    if isinstance(value, (Symbol, Tagged)):
        return repr(value)
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    if isinstance(value, frozenset):
        return sorted(_jsonable(v) for v in value)
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    return value


def _report_json(report) -> dict:
    return _jsonable(report.to_document()) if report is not None else None


def _attribute_schema(study: Study, class_name: str) -> list[dict]:
    cdef = study.registry.class_def(class_name)
    ruleset = study.ruleset or rules.RuleSet()
    required = set(cdef.required) | set(ruleset.always_required.get(class_name, ()))
    macro_of: dict[str, str] = {}
    for macro in cdef.macros.values():
        for members in macro.versions.values():
            for member in members:
                macro_of.setdefault(member, macro.name)
    out = []
    for attr, adef in cdef.attributes.items():
        domain: dict[str, Any] = {}
        if adef.domain.values is not None:
            domain["values"] = list(adef.domain.values)
        if adef.domain.checker is not None:
            domain["checker"] = adef.domain.checker
        out.append({
            "name": attr,
            "doc": adef.doc,
            "kind": adef.iface_kind.name.lower(),
            "domain": domain,
            "required": attr in required,
            "interface_only": adef.restriction.name == "INTERFACE_ONLY",
            "has_default": adef.defaults[0].kind is not DefaultKind.NONE,
            "macro": macro_of.get(attr),
            "depends": [
                {"source": rule.source.render(), "allowed": _jsonable(rule.allowed)}
                for rule in ruleset.deps.get(attr, ())
            ],
        })
    return out


def _context_json(study: Study, ctx, deep: bool = False) -> dict:
    if isinstance(ctx, Description):
        body = {
            "ident": ctx.ident,
            "type": "description",
            "class": ctx.class_name,
            "bindings": {
                attr: {"value": _jsonable(b.value), "origin": str(b.origin)}
                for attr, b in ctx.bindings.items()
            },
            "attachments": list(ctx.attachments),
        }
        if deep:
            body["schema"] = _attribute_schema(study, ctx.class_name)
            body["macros"] = {
                name: {str(a): list(m) for a, m in macro.versions.items()}
                for name, macro in study.registry.class_def(ctx.class_name).macros.items()
            }
            body["meaningless"] = sorted(rules.meaningless_attrs(ctx))
        return body
    return {
        "ident": ctx.ident,
        "type": "script",
        "children": [child.ident for child in ctx.children],
        "pending_ops": [op.render() for op in ctx.pending_ops],
    }


class ServiceState:
    """The study plus its single-writer lock and console executor."""

    def __init__(self, study: Study):
        self.study = study
        self.lock = threading.Lock()

    def fresh_report(self):
        return rules.check(self.study.root)

    def console_exec(self, line: str) -> dict:
        import io
        out = io.StringIO()
        with self.lock:
            self.study.exec_statement(line, out=out)
            report = self.fresh_report()
        return {"output": out.getvalue(), "report": _report_json(report)}


class _Handler(BaseHTTPRequestHandler):
    state: ServiceState  # class attribute injected by serve_ui
    static_dir: Optional[str] = None

    # -- plumbing -------------------------------------------------------

    def log_message(self, *args):
        pass

    def _send(self, status: int, payload: Any, content_type: str = "application/json"):
        body = (json.dumps(payload, indent=1).encode("utf-8")
                if content_type == "application/json"
                else payload.encode("utf-8") if isinstance(payload, str) else payload)
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.end_headers()
        self.wfile.write(body)

    def _send_diagnostic(self, status: int, exc: DiagnosticError):
        d = exc.diagnostic
        self._send(status, {
            "severity": d.severity.value,
            "headline": d.headline,
            "detail": list(d.detail),
            "suggestion": d.suggestion,
            "code": d.code,
            "formatted": format_diagnostic(d),
        })

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if not length:
            return {}
        try:
            return json.loads(self.rfile.read(length).decode("utf-8"))
        except json.JSONDecodeError:
            raise DiagnosticError(error(
                "request body is not valid JSON", [], "send application/json",
                code="bad-json",
            )) from None

    def do_OPTIONS(self):
        self._send(204, "")

    # -- routing ----------------------------------------------------------

    def do_GET(self):
        try:
            self._route_get()
        except DiagnosticError as exc:
            self._send_diagnostic(404 if "unknown" in exc.diagnostic.code else 400, exc)
        except Exception as exc:  # pragma: no cover - last-resort guard
            self._send(500, {"error": str(exc)})

    def do_POST(self):
        try:
            self._route_post()
        except DiagnosticError as exc:
            self._send_diagnostic(400, exc)
        except Exception as exc:  # pragma: no cover - last-resort guard
            self._send(500, {"error": str(exc)})

    def _route_get(self):
        state = self.state
        study = state.study
        parts = [unquote(p) for p in self.path.split("?")[0].split("/") if p]
        if parts == ["contexts"]:
            with state.lock:
                payload = [
                    _context_json(study, ctx)
                    for ident, ctx in sorted(study.ident_index.items())
                ]
            self._send(200, {"contexts": payload, "report": _report_json(study.last_report)})
            return
        if len(parts) == 2 and parts[0] == "context":
            with state.lock:
                ctx = study.resolve(parts[1])
                payload = _context_json(study, ctx, deep=True)
            self._send(200, {"context": payload, "report": _report_json(study.last_report)})
            return
        if len(parts) == 3 and parts[0] == "origin":
            with state.lock:
                ctx = study.resolve(parts[1])
                if not isinstance(ctx, Description):
                    raise DiagnosticError(error(
                        f"{parts[1]!r} is not a description", [], "origins live on bindings",
                        code="bad-origin-target",
                    ))
                origin, trace = rules.show_origin(ctx, parts[2])
            self._send(200, {"origin": str(origin), "trace": trace})
            return
        if len(parts) == 2 and parts[0] == "man":
            with state.lock:
                text = docgen.man(study, parts[1])
            self._send(200, {"topic": parts[1], "text": text})
            return
        if parts == ["log"]:
            with state.lock:
                text = "\n".join(study.command_log) + ("\n" if study.command_log else "")
            self._send(200, text, content_type="text/plain; charset=utf-8")
            return
        if parts == ["schema"]:
            with state.lock:
                payload = {
                    name: _attribute_schema(study, name)
                    for name in sorted(study.registry.classes)
                }
                bootable = [n for n, c in study.registry.classes.items() if c.bootable]
            self._send(200, {"classes": payload, "bootable": sorted(bootable)})
            return
        self._serve_static(parts)

    def _route_post(self):
        state = self.state
        study = state.study
        parts = [unquote(p) for p in self.path.split("?")[0].split("/") if p]
        body = self._body()
        if len(parts) == 3 and parts[0] == "context" and parts[2] == "set":
            attr = body.get("attr")
            value = body.get("value")
            if not isinstance(attr, str):
                raise DiagnosticError(error(
                    "set needs an 'attr' field", [], "POST {'attr': ..., 'value': ...}",
                    code="bad-request",
                ))
            rendered = dumps_value(tuple(value) if isinstance(value, list) else value)
            line = f"{parts[1]}.set('{attr}', {rendered})"
            result = state.console_exec(line)
            with state.lock:
                ctx = study.resolve(parts[1])
                payload = _context_json(study, ctx, deep=True)
            self._send(200, {"context": payload, **result})
            return
        if parts == ["check"]:
            hypothetical = body.get("what_if") or []
            prune = body.get("prune")
            strict = body.get("strict")
            with state.lock:
                if hypothetical:
                    report = rules.what_if(
                        study.root, [(h[0], h[1], h[2]) for h in hypothetical])
                elif prune == "preview":
                    shadow = rules.clone_study(study)
                    report = rules.check(shadow.root, prune=True, strict=strict)
                    study.last_report = rules.check(study.root)  # state untouched
                elif prune == "apply":
                    study.command_log.append("check(prune=True)")
                    report = rules.check(study.root, prune=True, strict=strict)
                else:
                    report = rules.check(study.root, strict=strict)
            self._send(200, {"report": _report_json(report),
                             "preview": prune == "preview"})
            return
        if parts == ["console"]:
            line = body.get("line", "")
            result = state.console_exec(line)
            self._send(200, result)
            return
        if parts == ["dump"]:
            with state.lock:
                text = model.dump_context(study.root)
            self._send(200, {"text": text})
            return
        raise DiagnosticError(error(
            f"no endpoint {self.path!r}", [], "see the service documentation",
            code="unknown-endpoint",
        ))

    def _serve_static(self, parts: list[str]):
        if self.static_dir is None:
            raise DiagnosticError(error(
                f"no endpoint {self.path!r}", ["no static directory configured"],
                "GET /contexts, /context/<id>, /origin/<id>/<attr>, /man/<topic>, /log",
                code="unknown-endpoint",
            ))
        rel = "/".join(parts) or "index.html"
        path = os.path.normpath(os.path.join(self.static_dir, rel))
        if not path.startswith(os.path.abspath(self.static_dir)) or not os.path.isfile(path):
            raise DiagnosticError(error(
                f"no file {rel!r}", [], "check the static directory", code="unknown-file",
            ))
        ctype = mimetypes.guess_type(path)[0] or "application/octet-stream"
        with open(path, "rb") as fh:
            self._send(200, fh.read(), content_type=ctype)


class UIServer:
    def __init__(self, study: Study, host: str = "127.0.0.1", port: int = 0,
                 static_dir: Optional[str] = None):
        state = ServiceState(study)

        class BoundHandler(_Handler):
            pass

        BoundHandler.state = state
        BoundHandler.static_dir = os.path.abspath(static_dir) if static_dir else None
        self._server = ThreadingHTTPServer((host, port), BoundHandler)
        self.state = state
        self.host, self.port = self._server.server_address[:2]
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        name="declsim-ui", daemon=True)
        self._thread.start()

    @property
    def endpoint(self) -> str:
        return f"{self.host}:{self.port}"

    def shutdown(self):
        self._server.shutdown()
        self._server.server_close()
        self._thread.join()


def serve_ui(study: Study, host: str = "127.0.0.1", port: int = 0,
             static_dir: Optional[str] = None) -> UIServer:
    return UIServer(study, host, port, static_dir)
