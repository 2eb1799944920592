"""Integrated documentation: man(), manual skeletons, coherency checks.

man() renders always-up-to-date text straight from the registry and the
rule set, so a resource-file change is visible without code changes.
For attributes it emits six numbered sections; shared attribute names
are factorized across classes with identical definitions.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field
from typing import Any, Optional

from .diagnostics import DiagnosticError, error
from .model import Study
from .notation import Tagged, dumps_document, dumps_value, parse_document
from .registry import (
    AttributeDef,
    ClassRegistry,
    DefaultKind,
    ValueKind,
)
from .rules import RuleSet

_WIDTH = 79

_FUNCTION_DOCS = {
    "check": "Check status of root script object",
    "view": "Facade for current script's method",
    "dump": "Dump a canonical flat script for the root object",
    "compute": "Start the algorithm managed by the current boot object",
    "extract": "Build the specified output representation",
    "load": "Load a script file as a nested script object",
    "close": "End the processing of the current script",
    "man": "Render compact documentation for an interface element",
    "provide": "Return the named description, creating it when absent",
    "set_boot_objt": "Pass the compute token to a bootable description",
}

_METHOD_DOCS = {
    "set": "Define the value of an attribute",
    "get": "Return the value of an attribute",
    "get_or_deft": "Best-effort value using defaults and context rules",
    "attach": "Reference other descriptions from this one",
    "check": "Contextual checking of the instance",
    "view": "Filtering view for a description",
    "copy": "Return a copy of the instance under a new identifier",
    "dump": "Dump a compact representation of the instance",
    "compute": "Start the algorithm managed by the description class",
    "extract": "Build the specified output representation",
    "show_origin": "Trace a defined value back to its creator",
}


def _wrap(line: str) -> list[str]:
    """Hard-wrap long lines, marking every break with a trailing '...'."""
    if len(line) <= _WIDTH:
        return [line]
    indent = " " * (len(line) - len(line.lstrip()) + 2)
    out = []
    rest = line
    while len(rest) > _WIDTH:
        cut = rest.rfind(" ", len(indent) + 1, _WIDTH - 4)
        if cut <= 0:
            cut = _WIDTH - 4
        out.append(rest[:cut] + " ...")
        rest = indent + rest[cut:].lstrip()
    out.append(rest)
    return out


def _triple(name: str, kind: str, description: str) -> str:
    return "\n".join([
        f"Name       : {name}",
        f"Type       : {kind}",
        f"Description: {description}",
    ])


def _render_trigger(value: Any) -> str:
    if isinstance(value, Tagged) and value.tag == "re":
        return f"matching '{value.arg}'"
    return dumps_value(value)


def _render_allowed(values) -> str:
    return " | ".join(_render_trigger(v) for v in values)


def _default_text(adef: AttributeDef) -> str:
    for source in adef.defaults:
        if source.kind is DefaultKind.STATIC:
            return dumps_value(source.value)
        if source.kind is DefaultKind.KERNEL:
            return (f"{dumps_value(adef.from_kernel(source.value))} "
                    f"(kernel default, code {dumps_value(source.value)})")
        if source.kind is DefaultKind.NONE:
            return "None"
    return "None"


def _attribute_sections(attr: str, classes: list[str], adef: AttributeDef,
                        ruleset: RuleSet, registry: ClassRegistry) -> list[str]:
    lines = [
        f"1) Attribute name: {attr}",
        f"2) Class(es)     : {', '.join(classes)}",
        f"3) Description   : {adef.doc}",
        f"4) Allowed values: {adef.domain.describe(adef.iface_kind)}",
        "5) Rules         : ",
    ]
    deps = ruleset.deps.get(attr, ())
    if deps:
        lines.append("  5a) dependency rules:")
        lines.append(f"    {attr} is meaningful only while:")
        for rule in deps:
            lines.append(f"      {rule.source.render()} = {_render_allowed(rule.allowed)}")
    lines.append("  5b) influence rules:")
    for rule in ruleset.infls.get(attr, ()):
        lines.append(f"    {attr} = {_render_trigger(rule.trigger)} requires:")
        if rule.terms:
            lines.append("      value(s) for " + " & ".join(t.describe() for t in rule.terms))
    lines.append("  5c) context-dependent default values:")
    for rule in ruleset.defaults.get(attr, ()):
        lines.append(f"    {attr} = {dumps_value(rule.value)} IF:")
        for path, allowed in rule.conditions:
            lines.append(f"      {path.render()} = {_render_allowed(allowed)}")
    lines.append("  5d) absolute rules:")
    if any(attr in registry.classes[c].required
           or attr in ruleset.always_required.get(c, ()) for c in classes):
        lines.append("    attribute value is always required")
    lines.append(f"6) Default value(s): {_default_text(adef)}")
    if any(s.kind is DefaultKind.CONTEXTUAL for s in adef.defaults):
        lines.append("    context-dependent default values in")
        lines.append("    '5c)', if any, are applied first")
    wrapped: list[str] = []
    for line in lines:
        wrapped.extend(_wrap(line))
    return wrapped


def man(study: Study, topic: str) -> str:
    """Compact documentation for a function, class, method, or attribute."""
    registry = study.registry
    ruleset = study.ruleset or RuleSet()
    topic = topic.strip().strip("'\"")

    if "." in topic:
        class_name, _, method = topic.partition(".")
        if class_name in registry.classes and method in _METHOD_DOCS:
            return _triple(method, "instancemethod", _METHOD_DOCS[method])
        raise _unknown_topic(study, topic)

    if topic in _FUNCTION_DOCS:
        return _triple(topic, "function", _FUNCTION_DOCS[topic])

    if topic in registry.classes:
        cdef = registry.classes[topic]
        lines = [
            _triple(topic, "description class",
                    f"{len(cdef.attributes)} attribute(s), {len(cdef.macros)} macro-attribute(s)"),
            "Attributes : " + ", ".join(cdef.attributes) if cdef.attributes else "Attributes : none",
        ]
        if cdef.macros:
            lines.append("Macros     : " + ", ".join(cdef.macros))
        if cdef.bootable:
            lines.append("Bootable   : declares a compute entry point")
        out: list[str] = []
        for line in lines:
            out.extend(_wrap(line))
        return "\n".join(out)

    owners = registry.classes_with_attribute(topic)
    if owners:
        groups: dict[str, tuple[AttributeDef, list[str]]] = {}
        order: list[str] = []
        for class_name in owners:
            adef = registry.classes[class_name].attributes[topic]
            key = repr((adef.doc, adef.iface_kind, adef.kernel_kind, adef.domain, adef.defaults,
                        adef.restriction))
            if key not in groups:
                groups[key] = (adef, [])
                order.append(key)
            groups[key][1].append(class_name)
        bodies = []
        for key in order:
            adef, classes = groups[key]
            bodies.append("\n".join(_attribute_sections(topic, classes, adef, ruleset, registry)))
        return "\n\n".join(bodies)

    raise _unknown_topic(study, topic)


def _unknown_topic(study: Study, topic: str) -> DiagnosticError:
    candidates = (list(_FUNCTION_DOCS) + list(study.registry.classes)
                  + [a for c in study.registry.classes.values() for a in c.attributes])
    close = difflib.get_close_matches(topic, candidates, n=1)
    return DiagnosticError(error(
        f"unknown documentation topic {topic!r}", [],
        f"did you mean {close[0]!r}?" if close else "list classes with man(<class>)",
        code="unknown-topic",
    ))


# -- manual skeleton and coherency ---------------------------------------


@dataclass
class CoherencyReport:
    missing_from_manual: list[tuple[str, str]] = field(default_factory=list)
    stale_in_manual: list[tuple[str, str]] = field(default_factory=list)
    value_mismatches: list[tuple[str, str, tuple, tuple]] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not (self.missing_from_manual or self.stale_in_manual or self.value_mismatches)

    def render(self) -> str:
        lines = []
        if self.missing_from_manual:
            lines.append("attributes missing from the manual:")
            lines.extend(f"  {c}.{a}" for c, a in self.missing_from_manual)
        if self.stale_in_manual:
            lines.append("manual entries absent from the definitions:")
            lines.extend(f"  {c}.{a}" for c, a in self.stale_in_manual)
        if self.value_mismatches:
            lines.append("value-list mismatches:")
            for c, a, manual_values, actual in self.value_mismatches:
                lines.append(f"  {c}.{a}: manual {dumps_value(manual_values)}"
                             f" vs definitions {dumps_value(actual)}")
        return "\n".join(lines) if lines else "manual and definitions agree"


def _manual_entries(manual: str | dict) -> dict:
    doc = parse_document(manual) if isinstance(manual, str) else manual
    body = doc.get("manual", {})
    if not isinstance(body, dict):
        raise DiagnosticError(error(
            "manual block must map class names to attribute entries", [],
            "manual = {'model': {'phymod': {'text': '...', 'values': [...]}}}",
            code="manual-parse",
        ))
    return body


def gen_manual_skeleton(registry: ClassRegistry, ruleset: RuleSet, manual: str | dict) -> str:
    """Skeleton entries for every attribute absent from the manual.

    Output is a manual-notation fragment; merging it into the manual and
    re-running yields empty output.
    """
    entries = _manual_entries(manual)
    skeleton: dict[str, dict] = {}
    for class_name, cdef in registry.classes.items():
        documented = entries.get(class_name, {})
        for attr, adef in cdef.attributes.items():
            if attr in documented:
                continue
            entry: dict[str, Any] = {"text": adef.doc}
            if adef.domain.values is not None:
                entry["values"] = tuple(adef.domain.values)
            rule_notes = []
            for rule in ruleset.deps.get(attr, ()):
                rule_notes.append(rule.render())
            for rule in ruleset.infls.get(attr, ()):
                rule_notes.append(rule.render())
            for rule in ruleset.defaults.get(attr, ()):
                rule_notes.append(rule.render())
            if rule_notes:
                entry["rules"] = tuple(rule_notes)
            entry["default"] = _default_text(adef)
            skeleton.setdefault(class_name, {})[attr] = entry
    if not skeleton:
        return ""
    return dumps_document({"manual": skeleton})


def check_manual_coherency(registry: ClassRegistry, ruleset: RuleSet,
                           manual: str | dict) -> CoherencyReport:
    """Three-way comparison of manual and definitions.

    (a) definition attributes absent from the manual, (b) manual entries
    absent from the definitions unless listed obsolete, (c) value-list
    mismatches on enumerated domains.
    """
    entries = _manual_entries(manual)
    report = CoherencyReport()
    for class_name, cdef in registry.classes.items():
        documented = entries.get(class_name, {})
        for attr in cdef.attributes:
            if attr not in documented:
                report.missing_from_manual.append((class_name, attr))
    for class_name, documented in entries.items():
        cdef = registry.classes.get(class_name)
        obsolete_names = set()
        if cdef is not None:
            for key in cdef.obsolete:
                obsolete_names.add(key if isinstance(key, str) else key[0])
        for attr, entry in documented.items():
            if cdef is None or attr not in cdef.attributes:
                if attr not in obsolete_names:
                    report.stale_in_manual.append((class_name, attr))
                continue
            adef = cdef.attributes[attr]
            manual_values = entry.get("values") if isinstance(entry, dict) else None
            if manual_values is not None and adef.domain.values is not None:
                if tuple(manual_values) != tuple(adef.domain.values):
                    report.value_mismatches.append(
                        (class_name, attr, tuple(manual_values), tuple(adef.domain.values)))
    return report
