"""Context tree: descriptions, scripts, bindings, and the script language.

A study is a shallow four-level tree: scripts (possibly nested) contain
descriptions, descriptions own attributes, attributes have values.
Scripts own no attribute bindings.  Descriptions reference each other
through attach edges; attach targets may be forward references resolved
lazily by identifier.

The script command language is one statement per line with ``#``
comments: description constructors, ``set``/``get``/``attach``,
``load``/``copy``/``check``/``view``/``dump``, boot-dispatch forms, and
``close``.  ``compute``/``extract`` statements are recorded as pending
operations; drivers decide when to execute them.
"""

from __future__ import annotations

import difflib
import enum
import io
import os
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Optional, Sequence, Union

from . import notation
from .diagnostics import DiagnosticError, DiagnosticLog, error, warning
from .notation import Symbol, Token, dumps_value, tokenize
from .registry import (
    UNDEFINED,
    AttributeDef,
    ClassRegistry,
    RegistryError,
    Restriction,
    ValueKind,
)


class OriginKind(enum.Enum):
    USER = "user"
    STATIC_DEFAULT = "static default"
    KERNEL_DEFAULT = "kernel default"
    CONTEXT_RULE = "contextual rule"
    INTERFACE = "interface"


@dataclass(frozen=True)
class Origin:
    kind: OriginKind
    detail: str = ""  # rule id for CONTEXT_RULE, component name for INTERFACE

    def __str__(self):
        if self.detail:
            return f"{self.kind.value}({self.detail})"
        return self.kind.value


USER_ORIGIN = Origin(OriginKind.USER)


@dataclass(frozen=True)
class Binding:
    attr: str
    value: Any
    origin: Origin


@dataclass
class PendingOp:
    op: str                      # 'compute' | 'extract'
    target: Optional[str] = None  # description ident, None = boot dispatch
    args: tuple = ()
    result_name: Optional[str] = None

    def render(self) -> str:
        call = f"{self.op}({', '.join(dumps_value(a) for a in self.args)})"
        if self.target:
            call = f"{self.target}.{call}"
        if self.result_name:
            return f"{self.result_name} = {call}"
        return call


class Description:
    """An attributes container: one facet of a simulation."""

    def __init__(self, study: "Study", class_name: str, ident: str, serial: int):
        self.study = study
        self.class_name = class_name
        self.ident = ident
        self.serial = serial
        self.bindings: dict[str, Binding] = {}
        self.attachments: list[str] = []  # target idents, possibly forward

    def __repr__(self):
        return f"<{self.class_name} {self.ident!r}>"

    # -- attribute access ------------------------------------------------

    def set(self, attr: str, value: Any, origin: Origin = USER_ORIGIN):
        set_value(self, attr, value, origin)

    def get(self, attr: str) -> Any:
        return get_value(self, attr)

    def attach(self, *others: Union["Description", str]):
        attach(self, *others)

    def copy(self, ident: str) -> "Description":
        return copy_context(self, ident)

    def check(self, prune: bool = False, strict: Optional[bool] = None):
        from . import rules
        return rules.check(self, prune=prune, strict=strict)

    def view(self) -> str:
        return render_view(self)

    def dump(self, sink=None) -> str:
        return dump_context(self, sink)


class Script:
    """A descriptions container; owns no attributes of its own."""

    def __init__(self, study: "Study", ident: str, serial: int):
        self.study = study
        self.ident = ident
        self.serial = serial
        self.children: list[Union[Description, "Script"]] = []
        self.pending_ops: list[PendingOp] = []

    def __repr__(self):
        return f"<script {self.ident!r}>"

    def copy(self, ident: str) -> "Script":
        return copy_context(self, ident)

    def check(self, prune: bool = False, strict: Optional[bool] = None):
        from . import rules
        return rules.check(self, prune=prune, strict=strict)

    def view(self) -> str:
        return render_view(self)

    def dump(self, sink=None) -> str:
        return dump_context(self, sink)

    def descriptions(self) -> list[Description]:
        """All descriptions reachable through nesting, in creation order."""
        out: list[Description] = []
        stack: list[Union[Description, Script]] = [self]
        while stack:
            node = stack.pop(0)
            if isinstance(node, Description):
                out.append(node)
            else:
                stack = list(node.children) + stack
        return sorted(out, key=lambda d: d.serial)


Context = Union[Description, Script]


@dataclass
class StudyOptions:
    strict: bool = False
    filter: bool = False
    allow_obsolete: bool = False
    unlock: bool = False


class Study:
    """Top-level holder: root script, registry, identifier index, options."""

    def __init__(self, registry: ClassRegistry, ruleset=None, options: Optional[StudyOptions] = None):
        if not registry.finalized:
            raise RegistryError("study needs a finalized registry")
        self.registry = registry
        self.ruleset = ruleset
        self.options = options or StudyOptions()
        self._serial = 0
        self.ident_index: dict[str, Context] = {}
        self.root = Script(self, "root", self._next_serial())
        self.ident_index["root"] = self.root
        self.variables: dict[str, Any] = {}
        self.diag_log = DiagnosticLog()
        self.last_report = None
        self.boot_order: list[str] = []   # idents of bootable descriptions
        self.boot_current: Optional[str] = None
        self.kernel = None
        self.compute_results: list[Any] = []
        self.command_log: list[str] = []
        self.closed = False
        self._loading_stack: list[str] = []

    def _next_serial(self) -> int:
        self._serial += 1
        return self._serial

    def _loading_script(self) -> Optional["Script"]:
        return getattr(self, "_current_script", None)

    def resolve(self, ref: Union[str, Context]) -> Context:
        if isinstance(ref, (Description, Script)):
            return ref
        ctx = self.ident_index.get(ref)
        if ctx is None:
            raise DiagnosticError(error(
                f"unresolvable identifier {ref!r}",
                [f"no context registered under {ref!r}"],
                _suggest(ref, self.ident_index, "create the context or fix the identifier"),
                code="unresolvable-identifier",
            ))
        return ctx

    def create_description(self, class_name: str, ident: str) -> Description:
        return create_description(self, class_name, ident)

    def load_script(self, path: str) -> Script:
        return load_script(self, path)

    def exec_statement(self, line: str, scope: Optional[Script] = None,
                       log: bool = True, out=None):
        return exec_statement(self, line, scope or self.root, log=log, out=out)

    def check(self, prune: bool = False, strict: Optional[bool] = None):
        from . import rules
        return rules.check(self.root, prune=prune, strict=strict)


def _suggest(name: str, candidates: Iterable[str], fallback: str) -> str:
    close = difflib.get_close_matches(name, list(candidates), n=1)
    if close:
        return f"did you mean {close[0]!r}?"
    return fallback


_IDENT_OK = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_@")


def _valid_ident(ident: str) -> bool:
    return (
        bool(ident)
        and (ident[0].isalpha() or ident[0] == "_")
        and all(c in _IDENT_OK for c in ident)
    )


def create_description(study: Study, class_name: str, ident: str) -> Description:
    """Create and register an empty description; explicit ident required."""
    if class_name not in study.registry.classes:
        raise DiagnosticError(error(
            f"unknown class {class_name!r}",
            [f"registered classes: {', '.join(sorted(study.registry.classes))}"],
            _suggest(class_name, study.registry.classes, "register the class through a product"),
            code="unknown-class",
        ))
    if not _valid_ident(ident):
        raise DiagnosticError(error(
            f"invalid identifier {ident!r}", [],
            "identifiers start with a letter and use letters, digits and '_'",
            code="invalid-identifier",
        ))
    if ident in study.ident_index:
        prior = study.ident_index[ident]
        raise DiagnosticError(error(
            f"duplicate identifier {ident!r}",
            [f"already names {prior!r}"],
            "pick a fresh identifier",
            code="duplicate-identifier",
        ))
    desc = Description(study, class_name, ident, study._next_serial())
    study.ident_index[ident] = desc
    current = study._loading_script() if study._loading_stack else None
    (current or study.root).children.append(desc)
    if study.registry.classes[class_name].bootable:
        study.boot_order.append(ident)
    return desc


def resolve_attr(study: Study, class_name: str, attr: str) -> AttributeDef:
    return study.registry.attribute(class_name, attr)


def set_value(desc: Description, attr: str, value: Any, origin: Origin = USER_ORIGIN):
    """Static checks (name, kind, domain, restrictions, metadata) + write.

    A macro-attribute name distributes a sequence value positionally
    over the version whose arity matches the sequence length.  ``None``
    clears the binding.
    """
    study = desc.study
    cdef = study.registry.class_def(desc.class_name)
    if attr in cdef.macros:
        versions = cdef.macros[attr].versions
        if not isinstance(value, (list, tuple)):
            raise DiagnosticError(error(
                f"macro {attr!r} of {desc.ident!r} needs a sequence value",
                [f"available arities: {sorted(versions)}"],
                f"set({desc.ident}, '{attr}', [...])",
                code="macro-needs-sequence",
            ))
        arity = len(value)
        if arity not in versions:
            raise DiagnosticError(error(
                f"sequence of {arity} values matches no version of macro {attr!r}",
                [f"available arities: {sorted(versions)}"],
                f"pass {min(versions, key=lambda a: abs(a - arity))} values",
                code="macro-arity",
            ))
        for member, item in zip(versions[arity], value):
            set_value(desc, member, item, origin)
        return
    if attr not in cdef.attributes:
        raise DiagnosticError(error(
            f"class {desc.class_name!r} has no attribute {attr!r}",
            [f"while setting on {desc.ident!r}"],
            _suggest(attr, list(cdef.attributes) + list(cdef.macros), "check the class attribute list"),
            code="unknown-attribute",
        ))
    adef = cdef.attributes[attr]

    if value is None or value is UNDEFINED:
        desc.bindings.pop(attr, None)
        return

    _check_metadata(desc, cdef, adef, attr, value, origin)
    if study.options.filter and (attr in cdef.filterable or (attr, value) in cdef.filterable):
        study.diag_log.add(warning(
            f"filtered out {desc.ident}.{attr}",
            [f"value {dumps_value(value)} dropped by the filter option"],
            "remove the assignment from the script",
            code="filtered",
        ))
        return

    value = adef.iface_kind.coerce(value)
    if not adef.iface_kind.conforms(value):
        raise DiagnosticError(error(
            f"value {dumps_value(value)} does not match the {adef.iface_kind.name.lower()} kind of {attr!r}",
            [f"attribute {desc.class_name}.{attr}: {adef.doc}"],
            f"set({desc.ident}, '{attr}', {adef.iface_kind.placeholder()})",
            code="kind-mismatch",
        ))
    if not adef.domain.admits(value, study.registry.checkers):
        raise DiagnosticError(error(
            f"value {dumps_value(value)} outside the domain of {attr!r}",
            [f"allowed: {adef.domain.describe(adef.iface_kind)}"],
            f"set({desc.ident}, '{attr}', <one of: {adef.domain.describe(adef.iface_kind)}>)",
            code="domain-violation",
        ))
    if adef.restriction is Restriction.INTERFACE_ONLY and origin.kind is OriginKind.USER:
        raise DiagnosticError(error(
            f"attribute {attr!r} is interface-only",
            [f"{desc.class_name}.{attr} may only be written by engine components"],
            "remove the assignment; the interface manages this value",
            code="restriction-violation",
        ))
    desc.bindings[attr] = Binding(attr, value, origin)


def _check_metadata(desc: Description, cdef, adef, attr: str, value: Any, origin: Origin):
    study = desc.study
    for key in (attr, (attr, value)):
        if key in cdef.obsolete:
            replacement = cdef.obsolete[key]
            detail = [f"{key!r} of class {desc.class_name!r} is obsolete"]
            if replacement is not None:
                sugg = f"use {replacement!r} instead"
            else:
                sugg = "drop the assignment; there is no replacement"
            if study.options.allow_obsolete:
                study.diag_log.add(warning(f"obsolete: {desc.ident}.{attr}", detail, sugg, code="obsolete"))
            else:
                raise DiagnosticError(error(
                    f"obsolete: {desc.ident}.{attr}", detail,
                    sugg + " (or run with --allow_obsolete)", code="obsolete",
                ))
    for key in (attr, (attr, value)):
        if key in cdef.undocumented and not study.options.unlock:
            raise DiagnosticError(error(
                f"{key!r} is not yet documented",
                [f"class {desc.class_name!r} marks it undocumented"],
                "run with --unlock to use undocumented items",
                code="undocumented",
            ))


def get_value(desc: Description, attr: str) -> Any:
    """Current value; never triggers defaults (see rules.get_or_deft)."""
    cdef = desc.study.registry.class_def(desc.class_name)
    if attr in cdef.macros:
        versions = cdef.macros[attr].versions
        for arity in sorted(versions, reverse=True):
            members = versions[arity]
            if all(m in desc.bindings for m in members):
                return tuple(desc.bindings[m].value for m in members)
        if len(versions) == 1:
            members = next(iter(versions.values()))
            return tuple(desc.bindings[m].value if m in desc.bindings else UNDEFINED for m in members)
        raise DiagnosticError(error(
            f"macro {attr!r} has no fully defined version",
            [f"available arities: {sorted(versions)}"],
            f"set({desc.ident}, '{attr}', [...]) first",
            code="macro-undefined",
        ))
    if attr not in cdef.attributes:
        raise DiagnosticError(error(
            f"class {desc.class_name!r} has no attribute {attr!r}",
            [f"while reading from {desc.ident!r}"],
            _suggest(attr, list(cdef.attributes) + list(cdef.macros), "check the class attribute list"),
            code="unknown-attribute",
        ))
    binding = desc.bindings.get(attr)
    return binding.value if binding is not None else UNDEFINED


def attach(desc: Description, *others: Union[Description, str]):
    """Record attachment edges in order; duplicates ignored."""
    for other in others:
        ident = other.ident if isinstance(other, (Description, Script)) else str(other)
        if ident == desc.ident:
            raise DiagnosticError(error(
                f"{desc.ident!r} cannot attach to itself", [],
                "attach a different context", code="self-attachment",
            ))
        if ident not in desc.attachments:
            desc.attachments.append(ident)


def closure(context: Context) -> list[Description]:
    """Transitive closure: nested scripts plus attached descriptions."""
    study = context.study
    seen: dict[str, Description] = {}
    queue: list[Context] = [context]
    visited_scripts: set[str] = set()
    while queue:
        node = queue.pop(0)
        if isinstance(node, Script):
            if node.ident in visited_scripts:
                continue
            visited_scripts.add(node.ident)
            queue.extend(node.children)
            continue
        if node.ident in seen:
            continue
        seen[node.ident] = node
        for ident in node.attachments:
            queue.append(study.resolve(ident))
    return sorted(seen.values(), key=lambda d: d.serial)


def copy_context(context: Context, ident: str) -> Context:
    """Deep copy with a fresh identifier.

    Attachment edges re-point to copied siblings when the target was
    copied too, and keep pointing at the original context otherwise.
    Script children get the copy identifier appended (``child@copy``).
    """
    study = context.study
    if ident in study.ident_index:
        raise DiagnosticError(error(
            f"duplicate identifier {ident!r}",
            [f"already names {study.ident_index[ident]!r}"],
            "pick a fresh identifier", code="duplicate-identifier",
        ))
    if isinstance(context, Description):
        clone = Description(study, context.class_name, ident, study._next_serial())
        clone.bindings = dict(context.bindings)
        clone.attachments = list(context.attachments)
        study.ident_index[ident] = clone
        study.root.children.append(clone)
        if study.registry.classes[context.class_name].bootable:
            study.boot_order.append(ident)
        return clone

    mapping: dict[str, str] = {context.ident: ident}

    def derived(old: str) -> str:
        return f"{old}@{ident}"

    def walk(script: Script) -> list[str]:
        idents = []
        for child in script.children:
            mapping[child.ident] = derived(child.ident)
            idents.append(child.ident)
            if isinstance(child, Script):
                idents.extend(walk(child))
        return idents

    for old in walk(context):
        if mapping[old] in study.ident_index:
            raise DiagnosticError(error(
                f"duplicate identifier {mapping[old]!r} produced by copy",
                [f"copying {context.ident!r} as {ident!r}"],
                "pick a different copy identifier", code="duplicate-identifier",
            ))

    def clone_node(node: Context) -> Context:
        new_ident = mapping[node.ident]
        if isinstance(node, Description):
            c = Description(study, node.class_name, new_ident, study._next_serial())
            c.bindings = dict(node.bindings)
            c.attachments = [mapping.get(t, t) for t in node.attachments]
            study.ident_index[new_ident] = c
            if study.registry.classes[node.class_name].bootable:
                study.boot_order.append(new_ident)
            return c
        s = Script(study, new_ident, study._next_serial())
        s.pending_ops = [replace(op, target=mapping.get(op.target, op.target)) for op in node.pending_ops]
        study.ident_index[new_ident] = s
        for child in node.children:
            s.children.append(clone_node(child))
        return s

    clone = clone_node(context)
    study.root.children.append(clone)
    return clone


# -- view --------------------------------------------------------------


def render_view(context: Context) -> str:
    """Compact listing; macros folded, non-coherent values masked.

    Masking and required-missing markers derive from the study's most
    recent check report, so re-viewing without a state change yields
    identical text.
    """
    study = context.study
    report = study.last_report
    masked: set[tuple[str, str]] = set(getattr(report, "incoherent", ()) or ())
    missing: set[tuple[str, str]] = set()
    for entry in getattr(report, "missing", ()) or ():
        ident, attr, *_rest = tuple(entry)
        missing.add((ident, attr))
    out = io.StringIO()

    def show_description(desc: Description, indent: str):
        out.write(f"{indent}{desc.class_name}(name='{desc.ident}')\n")
        cdef = study.registry.class_def(desc.class_name)
        folded: set[str] = set()
        for macro in cdef.macros.values():
            for arity in sorted(macro.versions, reverse=True):
                members = macro.versions[arity]
                if all(m in desc.bindings for m in members) and not any(
                    (desc.ident, m) in masked for m in members
                ):
                    values = [desc.bindings[m].value for m in members]
                    out.write(f"{indent}  {macro.name} = {dumps_value(tuple(values))}\n")
                    folded.update(members)
                    break
        for attr in cdef.attributes:
            if attr in folded:
                continue
            if (desc.ident, attr) in masked:
                out.write(f"{indent}  {attr} = <masked>\n")
            elif attr in desc.bindings:
                out.write(f"{indent}  {attr} = {dumps_value(desc.bindings[attr].value)}\n")
            elif (desc.ident, attr) in missing:
                out.write(f"{indent}  {attr} <required, missing>\n")
        if desc.attachments:
            out.write(f"{indent}  attached: {', '.join(desc.attachments)}\n")

    def show(node: Context, indent: str):
        if isinstance(node, Description):
            show_description(node, indent)
            return
        out.write(f"{indent}script(name='{node.ident}')\n")
        for child in node.children:
            show(child, indent + "  ")
        for op in node.pending_ops:
            out.write(f"{indent}  pending: {op.render()}\n")

    show(context, "")
    return out.getvalue()


# -- dump ---------------------------------------------------------------


def dump_context(context: Context, sink=None) -> str:
    """Flat canonical script reproducing the context on re-load.

    Creates come first in creation order, then user/interface sets in
    declaration order, then attach edges, then pending operations; no
    control structures are ever emitted.  Rule-created bindings are
    omitted (a later check recomputes them); user bindings carry an
    origin comment.
    """
    study = context.study
    descs = closure(context) if isinstance(context, Script) else [context]
    lines: list[str] = []
    for desc in descs:
        lines.append(f"{desc.ident} = {desc.class_name}(name='{desc.ident}')")
    for desc in descs:
        cdef = study.registry.class_def(desc.class_name)
        for attr in cdef.attributes:
            binding = desc.bindings.get(attr)
            if binding is None:
                continue
            if binding.origin.kind is OriginKind.USER:
                lines.append(f"{desc.ident}.set('{attr}', {dumps_value(binding.value)})  # origin: user")
            elif binding.origin.kind is OriginKind.INTERFACE:
                lines.append(f"{desc.ident}.set('{attr}', {dumps_value(binding.value)})")
    for desc in descs:
        if desc.attachments:
            lines.append(f"{desc.ident}.attach({', '.join(desc.attachments)})")
    if isinstance(context, Script):
        for op in _collect_pending(context):
            lines.append(op.render())
    text = "\n".join(lines) + "\n"
    if sink is not None:
        if hasattr(sink, "write"):
            sink.write(text)
        else:
            try:
                with open(sink, "w", encoding="utf-8") as fh:
                    fh.write(text)
            except OSError as exc:
                raise DiagnosticError(error(
                    f"cannot write dump to {sink!r}", [str(exc)],
                    "check the path and permissions", code="dump-sink",
                )) from exc
    return text


def _collect_pending(script: Script) -> list[PendingOp]:
    ops = list(script.pending_ops)
    for child in script.children:
        if isinstance(child, Script):
            ops.extend(_collect_pending(child))
    return ops


def structure_signature(context: Context):
    """Hashable structural view used for dump/load round-trip equality.

    Script nesting is transparent (dumps are flat); identity is the
    ident-indexed description set with bindings, attach edges, and the
    pending-operation sequence.
    """
    descs = closure(context) if isinstance(context, Script) else [context]
    body = tuple(
        (
            d.ident,
            d.class_name,
            tuple(sorted((a, b.value) for a, b in d.bindings.items())),
            tuple(d.attachments),
        )
        for d in sorted(descs, key=lambda d: d.ident)
    )
    ops = tuple(
        (op.op, op.target, op.args, op.result_name)
        for op in (_collect_pending(context) if isinstance(context, Script) else ())
    )
    return (body, ops)


def structural_equal(a: Context, b: Context) -> bool:
    return structure_signature(a) == structure_signature(b)


def origin_census(context: Context) -> dict[tuple[str, str], Origin]:
    descs = closure(context) if isinstance(context, Script) else [context]
    return {(d.ident, attr): binding.origin for d in descs for attr, binding in d.bindings.items()}


# -- script language ----------------------------------------------------


class ScriptError(DiagnosticError):
    pass


class _CloseSignal(Exception):
    pass


def _parse_error(msg: str, line_no: int, col: int, path: str = "<console>") -> ScriptError:
    return ScriptError(error(
        f"script parse error at {path}:{line_no}:{col}",
        [msg],
        "fix the statement; one statement per line",
        code="script-parse",
    ))


class _StmtParser:
    """One statement: assignment, method call, or function call."""

    def __init__(self, tokens: list[Token], line_no: int, path: str):
        self.tokens = tokens
        self.pos = 0
        self.line_no = line_no
        self.path = path

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.next()
        if tok.text != text:
            raise _parse_error(f"expected {text!r}, found {tok.text or 'end of line'!r}",
                               self.line_no, tok.column, self.path)
        return tok

    def at_end(self) -> bool:
        return self.peek().kind == "end"

    def value(self):
        tok = self.peek()
        if tok.kind == "ident" and tok.text not in ("None", "True", "False"):
            nxt = self.tokens[self.pos + 1] if self.pos + 1 < len(self.tokens) else None
            if nxt is not None and nxt.text == "(":
                raise _parse_error("nested calls are not part of the script language",
                                   self.line_no, tok.column, self.path)
            self.next()
            return Symbol(tok.text)
        if tok.text == "[":
            self.next()
            items = []
            while self.peek().text != "]":
                items.append(self.value())
                if self.peek().text == ",":
                    self.next()
            self.next()
            return tuple(items)
        if tok.text == "{":
            self.next()
            entries = {}
            while self.peek().text != "}":
                key = self.value()
                self.expect(":")
                entries[key] = self.value()
                if self.peek().text == ",":
                    self.next()
            self.next()
            return entries
        if tok.kind in ("string", "number"):
            self.next()
            return tok.value
        if tok.kind == "ident":
            self.next()
            return {"None": None, "True": True, "False": False}[tok.text]
        raise _parse_error(f"unexpected {tok.text or 'end of line'!r}", self.line_no, tok.column, self.path)

    def args(self) -> tuple[list, dict]:
        self.expect("(")
        positional, keywords = [], {}
        while self.peek().text != ")":
            tok = self.peek()
            nxt = self.tokens[self.pos + 1] if self.pos + 1 < len(self.tokens) else None
            if tok.kind == "ident" and nxt is not None and nxt.text == "=":
                self.next()
                self.next()
                keywords[tok.text] = self.value()
            else:
                positional.append(self.value())
            if self.peek().text == ",":
                self.next()
        self.next()
        return positional, keywords


@dataclass
class Statement:
    kind: str           # 'assign-call' | 'assign-value' | 'call'
    target: Optional[str] = None      # assignment name
    receiver: Optional[str] = None    # object of a method call
    subscript: Any = None             # subscript value on the receiver
    func: str = ""                    # function, method, or class name
    args: list = field(default_factory=list)
    kwargs: dict = field(default_factory=dict)
    value: Any = None                 # for assign-value
    text: str = ""


def parse_statement(line: str, line_no: int = 1, path: str = "<console>") -> Optional[Statement]:
    stripped = line.strip()
    if not stripped or stripped.startswith("#"):
        return None
    try:
        tokens = tokenize(stripped)
    except notation.NotationError as exc:
        raise _parse_error(str(exc), line_no, exc.column, path) from None
    p = _StmtParser(tokens, line_no, path)
    first = p.next()
    if first.kind != "ident":
        raise _parse_error(f"statement must start with a name, found {first.text!r}",
                           line_no, first.column, path)
    nxt = p.peek()
    if nxt.text == "=":
        p.next()
        rhs = p.peek()
        if rhs.kind == "ident" and p.tokens[p.pos + 1].text == "(":
            func = p.next().text
            args, kwargs = p.args()
            stmt = Statement("assign-call", target=first.text, func=func,
                             args=args, kwargs=kwargs, text=stripped)
        elif rhs.kind == "ident" and p.tokens[p.pos + 1].text == ".":
            receiver = p.next().text
            p.expect(".")
            method = p.next().text
            args, kwargs = p.args()
            stmt = Statement("assign-call", target=first.text, receiver=receiver,
                             func=method, args=args, kwargs=kwargs, text=stripped)
        else:
            stmt = Statement("assign-value", target=first.text, value=p.value(), text=stripped)
    elif nxt.text == ".":
        p.next()
        method = p.next()
        if method.kind != "ident":
            raise _parse_error("expected a method name after '.'", line_no, method.column, path)
        args, kwargs = p.args()
        stmt = Statement("call", receiver=first.text, func=method.text,
                         args=args, kwargs=kwargs, text=stripped)
    elif nxt.text == "[":
        p.next()
        sub = p.value()
        p.expect("]")
        p.expect(".")
        method = p.next()
        args, kwargs = p.args()
        stmt = Statement("call", receiver=first.text, subscript=sub, func=method.text,
                         args=args, kwargs=kwargs, text=stripped)
    elif nxt.text == "(":
        args, kwargs = p.args()
        stmt = Statement("call", func=first.text, args=args, kwargs=kwargs, text=stripped)
    else:
        raise _parse_error(f"unexpected {nxt.text or 'end of line'!r} after {first.text!r}",
                           line_no, nxt.column, path)
    if not p.at_end():
        bad = p.peek()
        raise _parse_error(f"trailing content {bad.text!r}", line_no, bad.column, path)
    return stmt


_FUNCTIONS = {"load", "provide", "compute", "extract", "check", "view",
              "dump", "close", "set_boot_objt", "man", "get_or_deft",
              "show_origin", "what_if"}


def exec_statement(study: Study, line: str, scope: Script, *, line_no: int = 1,
                   path: str = "<console>", log: bool = True, out=None) -> Any:
    """Execute one script statement inside ``scope``; returns a value for
    expression-like statements (get, view, dump)."""
    stmt = parse_statement(line, line_no, path)
    if stmt is None:
        return None
    if log:
        study.command_log.append(stmt.text)
    result = _run_statement(study, stmt, scope, out=out)
    return result


def _eval_operand(study: Study, value: Any, *, forward_ok: bool = False) -> Any:
    if isinstance(value, Symbol):
        name = value.name
        if name in study.ident_index:
            return study.ident_index[name]
        if name in study.variables:
            return study.variables[name]
        if forward_ok:
            return name
        raise DiagnosticError(error(
            f"undefined name {name!r}", [],
            _suggest(name, list(study.ident_index) + list(study.variables), "define it first"),
            code="undefined-name",
        ))
    if isinstance(value, tuple):
        return tuple(_eval_operand(study, v, forward_ok=forward_ok) for v in value)
    return value


def _expect_str_arg(stmt: Statement, index: int, what: str) -> str:
    if len(stmt.args) <= index or not isinstance(stmt.args[index], str):
        raise DiagnosticError(error(
            f"{stmt.func}() needs a quoted {what} argument",
            [stmt.text], f"{stmt.func}('<{what}>', ...)", code="bad-argument",
        ))
    return stmt.args[index]


def _run_statement(study: Study, stmt: Statement, scope: Script, out=None) -> Any:
    from . import rules  # late import; rules builds on this module

    def emit(text: str):
        if out is not None:
            out.write(text if text.endswith("\n") else text + "\n")

    if stmt.kind == "assign-value":
        study.variables[stmt.target] = stmt.value
        return stmt.value

    if stmt.kind == "assign-call" and stmt.receiver is None:
        func = stmt.func
        if func == "load":
            rel = _expect_str_arg(stmt, 0, "script path")
            return _load_nested(study, rel, scope, ident=stmt.target)
        if func == "provide":
            from . import orchestrate
            class_name = _expect_str_arg(stmt, 0, "class name")
            ident = stmt.kwargs.get("name")
            if not isinstance(ident, str):
                raise DiagnosticError(error(
                    "provide() needs an explicit name", [stmt.text],
                    "provide('<class>', name='<ident>')", code="missing-name",
                ))
            desc = orchestrate.provide(study, class_name, ident)
            if stmt.target != ident:
                study.variables[stmt.target] = desc
            return desc
        if func == "compute":
            op = PendingOp("compute", None, tuple(_eval_operand(study, a) for a in stmt.args),
                           result_name=stmt.target)
            scope.pending_ops.append(op)
            return op
        if func in study.registry.classes:
            ident = stmt.kwargs.get("name")
            if not isinstance(ident, str):
                raise DiagnosticError(error(
                    f"{func}(...) needs an explicit name", [stmt.text],
                    f"{stmt.target} = {func}(name='{stmt.target}')", code="missing-name",
                ))
            if ident != stmt.target:
                raise DiagnosticError(error(
                    f"assignment name {stmt.target!r} and name {ident!r} must agree",
                    [stmt.text], f"{ident} = {func}(name='{ident}')", code="name-mismatch",
                ))
            return create_description(study, func, ident)
        raise DiagnosticError(error(
            f"unknown function or class {func!r}", [stmt.text],
            _suggest(func, list(study.registry.classes) + sorted(_FUNCTIONS), "check the spelling"),
            code="unknown-function",
        ))

    if stmt.kind == "assign-call":
        receiver = study.resolve(stmt.receiver)
        if stmt.func == "copy":
            ident = stmt.kwargs.get("name", stmt.args[0] if stmt.args else None)
            if not isinstance(ident, str):
                raise DiagnosticError(error(
                    "copy() needs an explicit name", [stmt.text],
                    f"{stmt.target} = {stmt.receiver}.copy(name='<ident>')", code="missing-name",
                ))
            clone = copy_context(receiver, ident)
            if stmt.target != ident:
                study.variables[stmt.target] = clone
            return clone
        if stmt.func == "get":
            if not isinstance(receiver, Description):
                raise DiagnosticError(error("get() works on descriptions", [stmt.text],
                                            "call get on a description", code="bad-receiver"))
            value = get_value(receiver, _expect_str_arg(stmt, 0, "attribute"))
            study.variables[stmt.target] = value
            return value
        if stmt.func == "get_or_deft":
            value = rules.get_or_deft(receiver, _expect_str_arg(stmt, 0, "attribute"))
            study.variables[stmt.target] = value
            return value
        if stmt.func == "compute":
            op = PendingOp("compute", receiver.ident,
                           tuple(_eval_operand(study, a) for a in stmt.args), result_name=stmt.target)
            scope.pending_ops.append(op)
            return op
        raise DiagnosticError(error(
            f"cannot assign from {stmt.receiver}.{stmt.func}()", [stmt.text],
            "only copy/get/get_or_deft/compute return assignable values", code="bad-assignment",
        ))

    # plain calls
    if stmt.receiver is None:
        func = stmt.func
        if func == "close":
            raise _CloseSignal()
        if func == "check":
            report = rules.check(study.root)
            emit(report.render())
            return report
        if func == "view":
            text = render_view(study.root)
            emit(text)
            return text
        if func == "dump":
            sink = stmt.args[0] if stmt.args else None
            text = dump_context(study.root, sink)
            if sink is None:
                emit(text)
            return text
        if func in ("compute", "extract"):
            op = PendingOp(func, None, tuple(_eval_operand(study, a) for a in stmt.args))
            scope.pending_ops.append(op)
            return op
        if func == "set_boot_objt":
            from . import orchestrate
            target = _eval_operand(study, stmt.args[0]) if stmt.args else None
            if not isinstance(target, Description):
                raise DiagnosticError(error(
                    "set_boot_objt() needs a description", [stmt.text],
                    "set_boot_objt(<bootable description>)", code="bad-argument",
                ))
            orchestrate.set_boot_objt(study, target)
            return None
        if func == "provide":
            from . import orchestrate
            class_name = _expect_str_arg(stmt, 0, "class name")
            ident = stmt.kwargs.get("name")
            if not isinstance(ident, str):
                raise DiagnosticError(error("provide() needs an explicit name", [stmt.text],
                                            "provide('<class>', name='<ident>')", code="missing-name"))
            return orchestrate.provide(study, class_name, ident)
        if func == "man":
            from . import docgen
            topic = stmt.args[0] if stmt.args else ""
            if isinstance(topic, Symbol):
                topic = topic.name
            text = docgen.man(study, str(topic))
            emit(text)
            return text
        if func == "load":
            rel = _expect_str_arg(stmt, 0, "script path")
            return _load_nested(study, rel, scope, ident=None)
        raise DiagnosticError(error(
            f"unknown function {func!r}", [stmt.text],
            _suggest(func, sorted(_FUNCTIONS) + list(study.registry.classes), "check the spelling"),
            code="unknown-function",
        ))

    # method calls, possibly through a subscript dispatch map
    receiver: Any
    if stmt.subscript is not None:
        mapping = study.variables.get(stmt.receiver)
        if not isinstance(mapping, dict):
            raise DiagnosticError(error(
                f"{stmt.receiver!r} is not a dispatch map", [stmt.text],
                f"{stmt.receiver} = {{0: <desc>, 1: <desc>}}", code="bad-dispatch",
            ))
        key = _eval_operand(study, stmt.subscript)
        if key not in mapping:
            raise DiagnosticError(error(
                f"dispatch level {key!r} not in {stmt.receiver!r}",
                [f"available levels: {sorted(mapping, key=repr)}"],
                "pick a declared level", code="bad-dispatch",
            ))
        receiver = _eval_operand(study, mapping[key])
    else:
        receiver = study.resolve(stmt.receiver)

    func = stmt.func
    if func == "set":
        if not isinstance(receiver, Description):
            raise DiagnosticError(error("set() works on descriptions", [stmt.text],
                                        "scripts own no attributes", code="bad-receiver"))
        attr = _expect_str_arg(stmt, 0, "attribute")
        if len(stmt.args) < 2:
            raise DiagnosticError(error("set() needs a value", [stmt.text],
                                        f"set('{attr}', <value>)", code="bad-argument"))
        set_value(receiver, attr, stmt.args[1])
        return None
    if func == "get":
        if not isinstance(receiver, Description):
            raise DiagnosticError(error("get() works on descriptions", [stmt.text],
                                        "call get on a description", code="bad-receiver"))
        value = get_value(receiver, _expect_str_arg(stmt, 0, "attribute"))
        emit(dumps_value(value) if value is not UNDEFINED else "None")
        return value
    if func == "attach":
        if not isinstance(receiver, Description):
            raise DiagnosticError(error("attach() works on descriptions", [stmt.text],
                                        "scripts include by loading", code="bad-receiver"))
        targets = [_eval_operand(study, a, forward_ok=True) for a in stmt.args]
        attach(receiver, *[t if isinstance(t, (Description, Script, str)) else str(t) for t in targets])
        return None
    if func == "check":
        prune = bool(stmt.kwargs.get("prune", False))
        report = rules.check(receiver, prune=prune)
        emit(report.render())
        return report
    if func == "view":
        text = render_view(receiver)
        emit(text)
        return text
    if func == "dump":
        sink = stmt.args[0] if stmt.args else None
        text = dump_context(receiver, sink)
        if sink is None:
            emit(text)
        return text
    if func in ("compute", "extract"):
        op = PendingOp(func, receiver.ident, tuple(_eval_operand(study, a) for a in stmt.args))
        scope.pending_ops.append(op)
        return op
    if func == "show_origin":
        origin, trace = rules.show_origin(receiver, _expect_str_arg(stmt, 0, "attribute"))
        emit(trace)
        return origin
    raise DiagnosticError(error(
        f"unknown method {func!r}", [stmt.text],
        _suggest(func, ["set", "get", "attach", "check", "view", "dump", "copy",
                        "compute", "extract", "show_origin"], "check the spelling"),
        code="unknown-method",
    ))


def _load_nested(study: Study, rel_path: str, scope: Script, ident: Optional[str]) -> Script:
    base = os.path.dirname(study._loading_stack[-1]) if study._loading_stack else os.getcwd()
    path = os.path.abspath(os.path.join(base, rel_path))
    return _load_file(study, path, ident=ident)


def load_script(study: Study, path: str) -> Script:
    """Load a script file into the study's root scope."""
    return _load_file(study, os.path.abspath(path), ident=None)


def load_script_text(study: Study, text: str, ident: str) -> Script:
    """Load script statements from a string (database records, tests)."""
    return _load_lines(study, text.splitlines(), path=f"<{ident}>", ident=ident)


def _load_file(study: Study, path: str, ident: Optional[str]) -> Script:
    if path in study._loading_stack:
        chain = " -> ".join(os.path.basename(p) for p in study._loading_stack + [path])
        raise DiagnosticError(error(
            f"include cycle loading {os.path.basename(path)!r}",
            [chain], "break the load cycle", code="include-cycle",
        ))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise DiagnosticError(error(
            f"cannot read script {path!r}", [str(exc)],
            "check the path", code="script-io",
        )) from exc
    return _load_lines(study, lines, path=path,
                       ident=ident or os.path.splitext(os.path.basename(path))[0])


def _load_lines(study: Study, lines: Sequence[str], path: str, ident: str) -> Script:
    script_ident = ident
    if not _valid_ident(script_ident):
        raise DiagnosticError(error(
            f"invalid script identifier {script_ident!r}", [f"from {path!r}"],
            "rename the file or assign the load", code="invalid-identifier",
        ))
    if script_ident in study.ident_index:
        raise DiagnosticError(error(
            f"duplicate identifier {script_ident!r}",
            [f"already names {study.ident_index[script_ident]!r}"],
            "assign the load to a fresh name", code="duplicate-identifier",
        ))
    script = Script(study, script_ident, study._next_serial())
    study.ident_index[script_ident] = script
    parent = study._loading_script() if study._loading_stack else study.root
    (parent or study.root).children.append(script)

    if path in study._loading_stack:
        raise DiagnosticError(error(
            f"include cycle loading {script_ident!r}",
            [" -> ".join(study._loading_stack + [path])],
            "break the load cycle", code="include-cycle",
        ))
    study._loading_stack.append(path)
    previous = getattr(study, "_current_script", None)
    study._current_script = script
    try:
        for line_no, line in enumerate(lines, start=1):
            try:
                stmt = parse_statement(line, line_no, path)
            except ScriptError:
                raise
            if stmt is None:
                continue
            study.command_log.append(stmt.text)
            _run_statement(study, stmt, script)
    except _CloseSignal:
        study.closed = True
    finally:
        study._current_script = previous
        study._loading_stack.pop()
    return script
