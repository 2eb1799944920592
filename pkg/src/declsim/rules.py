"""Dynamic context engine: dependency/influence/default rules and check().

Rules live in a resource document with four blocks, shaped exactly like
the class-attribute grammar::

    depend          = {'visclaw': {'phymod': ['nslam', 'nstur']}}
    influence       = {'visclaw': {'sutherland':
                        ['suth_const', ['suth_muref', 'suth_muref_fct'], 'suth_tref']}}
    context_default = {'suth_muref': {1.78938e-5:
                        {'mixture': ['air'], 'cfdpb.units': ['si']}}}
    always_required = {'model': ['phymod']}

A dependency rule up-propagates: the owning attribute is meaningful
only while the source attribute holds one of the listed values.  An
influence rule down-propagates from a trigger value and demands its
requirement terms: plain paths, exactly-one-of groups, or strong terms
(path plus allowed values).  Contextual defaults fire while their
conditions hold on currently defined values and are applied to fixpoint.
String matching accepts anchored regular expressions via ``re('...')``.

The induced attribute graph (dependency source -> attr, attr ->
influence targets) must be acyclic; this is validated at load time.
"""

from __future__ import annotations

import re as _re
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence, Union

from .diagnostics import (
    Diagnostic,
    DiagnosticError,
    Severity,
    error,
    escalate_all,
    warning,
)
from .model import (
    Binding,
    Context,
    Description,
    Origin,
    OriginKind,
    Script,
    Study,
    closure,
)
from .notation import Tagged, dumps_value, parse_document
from .registry import (
    UNDEFINED,
    AttributeDef,
    ClassRegistry,
    DefaultKind,
    RegistryError,
)


class RuleError(ValueError):
    pass


@dataclass(frozen=True)
class AttrPath:
    """A rule-side attribute reference, optionally class-qualified."""

    class_name: Optional[str]
    attr: str

    @classmethod
    def parse(cls, text: str) -> "AttrPath":
        if "." in text:
            class_name, _, attr = text.partition(".")
            if not class_name or not attr or "." in attr:
                raise RuleError(f"malformed attribute path {text!r}")
            return cls(class_name, attr)
        return cls(None, text)

    def render(self) -> str:
        return f"{self.class_name}.{self.attr}" if self.class_name else self.attr


def _match_one(value: Any, pattern: Any) -> bool:
    if isinstance(pattern, Tagged) and pattern.tag == "re":
        return isinstance(value, str) and _re.fullmatch(str(pattern.arg), value) is not None
    if isinstance(value, bool) or isinstance(pattern, bool):
        return value is pattern
    return value == pattern


def match_value(value: Any, allowed: Sequence[Any]) -> bool:
    return any(_match_one(value, p) for p in allowed)


@dataclass(frozen=True)
class DependencyRule:
    attr: str
    source: AttrPath
    allowed: tuple
    rule_id: str

    def render(self) -> str:
        return f"'{self.attr}': {dumps_value({self.source.render(): self.allowed})}"


@dataclass(frozen=True)
class RequirementTerm:
    kind: str                       # 'single' | 'group' | 'strong'
    paths: tuple[AttrPath, ...]
    allowed: tuple = ()             # strong terms only

    def render(self) -> Any:
        if self.kind == "single":
            return self.paths[0].render()
        if self.kind == "group":
            return tuple(p.render() for p in self.paths)
        return {self.paths[0].render(): self.allowed}

    def describe(self) -> str:
        if self.kind == "single":
            return self.paths[0].render()
        if self.kind == "group":
            return "one of (" + ", ".join(p.render() for p in self.paths) + ")"
        return f"{self.paths[0].render()} in {dumps_value(self.allowed)}"


@dataclass(frozen=True)
class InfluenceRule:
    attr: str
    trigger: Any                    # scalar or re(...) pattern
    terms: tuple[RequirementTerm, ...]
    rule_id: str

    def render(self) -> str:
        body = {self.trigger: tuple(t.render() for t in self.terms)}
        return f"'{self.attr}': {dumps_value(body)}"


@dataclass(frozen=True)
class ContextDefaultRule:
    attr: str
    value: Any
    conditions: tuple[tuple[AttrPath, tuple], ...]
    rule_id: str

    def render(self) -> str:
        body = {self.value: {p.render(): allowed for p, allowed in self.conditions}}
        return f"'{self.attr}': {dumps_value(body)}"


Rule = Union[DependencyRule, InfluenceRule, ContextDefaultRule]


@dataclass
class RuleSet:
    deps: dict[str, tuple[DependencyRule, ...]] = field(default_factory=dict)
    infls: dict[str, tuple[InfluenceRule, ...]] = field(default_factory=dict)
    defaults: dict[str, tuple[ContextDefaultRule, ...]] = field(default_factory=dict)
    always_required: dict[str, frozenset] = field(default_factory=dict)
    max_fixpoint_iters: int = 100
    by_id: dict[str, Rule] = field(default_factory=dict)

    def rule(self, rule_id: str) -> Optional[Rule]:
        return self.by_id.get(rule_id)

    def merged(self, other: "RuleSet", registry: ClassRegistry) -> "RuleSet":
        """New validated rule set with ``other`` appended (atomic)."""
        out = RuleSet(max_fixpoint_iters=self.max_fixpoint_iters)
        for src in (self, other):
            for attr, rules in src.deps.items():
                out.deps[attr] = out.deps.get(attr, ()) + rules
            for attr, rules in src.infls.items():
                out.infls[attr] = out.infls.get(attr, ()) + rules
            for attr, rules in src.defaults.items():
                out.defaults[attr] = out.defaults.get(attr, ()) + rules
            for cls, attrs in src.always_required.items():
                out.always_required[cls] = frozenset(out.always_required.get(cls, frozenset()) | attrs)
            out.by_id.update(src.by_id)
        _validate_acyclic(out)
        _cross_reference(out, registry)
        return out


def _term_from_entry(entry: Any) -> RequirementTerm:
    if isinstance(entry, str):
        return RequirementTerm("single", (AttrPath.parse(entry),))
    if isinstance(entry, tuple):
        if not entry or not all(isinstance(e, str) for e in entry):
            raise RuleError(f"alternative group {entry!r} must list attribute paths")
        return RequirementTerm("group", tuple(AttrPath.parse(e) for e in entry))
    if isinstance(entry, dict):
        if len(entry) != 1:
            raise RuleError(f"strong term {entry!r} must have exactly one target")
        (path, allowed), = entry.items()
        if not isinstance(allowed, tuple):
            raise RuleError(f"strong term {entry!r} needs a value list")
        return RequirementTerm("strong", (AttrPath.parse(path),), tuple(allowed))
    raise RuleError(f"malformed requirement term {entry!r}")


def load_rule_defs(source: Union[str, dict], registry: ClassRegistry) -> RuleSet:
    """Parse, cross-reference against the registry, and validate acyclic."""
    doc = parse_document(source) if isinstance(source, str) else source
    ruleset = RuleSet()
    iters = doc.get("max_fixpoint_iters")
    if iters is not None:
        if not isinstance(iters, int) or iters < 1:
            raise RuleError("max_fixpoint_iters must be a positive integer")
        ruleset.max_fixpoint_iters = iters

    depend = doc.get("depend", {})
    for attr, sources in depend.items():
        if not isinstance(sources, dict):
            raise RuleError(f"depend[{attr!r}] must map source paths to value lists")
        rules = []
        for path_text, allowed in sources.items():
            if not isinstance(allowed, tuple):
                raise RuleError(f"depend[{attr!r}][{path_text!r}] needs a value list")
            rid = f"depend:{attr}:{path_text}"
            rule = DependencyRule(attr, AttrPath.parse(path_text), tuple(allowed), rid)
            rules.append(rule)
            ruleset.by_id[rid] = rule
        ruleset.deps[attr] = ruleset.deps.get(attr, ()) + tuple(rules)

    influence = doc.get("influence", {})
    for attr, triggers in influence.items():
        if not isinstance(triggers, dict):
            raise RuleError(f"influence[{attr!r}] must map trigger values to requirement lists")
        rules = []
        for trigger, terms in triggers.items():
            if not isinstance(terms, tuple):
                raise RuleError(f"influence[{attr!r}][{trigger!r}] needs a requirement list")
            rid = f"influence:{attr}:{_id_token(trigger)}"
            rule = InfluenceRule(attr, trigger, tuple(_term_from_entry(t) for t in terms), rid)
            rules.append(rule)
            ruleset.by_id[rid] = rule
        ruleset.infls[attr] = ruleset.infls.get(attr, ()) + tuple(rules)

    context_default = doc.get("context_default", {})
    for attr, values in context_default.items():
        if not isinstance(values, dict):
            raise RuleError(f"context_default[{attr!r}] must map values to condition maps")
        rules = []
        for value, conditions in values.items():
            if not isinstance(conditions, dict):
                raise RuleError(f"context_default[{attr!r}][{value!r}] needs a condition map")
            conds = []
            for path_text, allowed in conditions.items():
                if not isinstance(allowed, tuple):
                    raise RuleError(
                        f"context_default[{attr!r}][{value!r}][{path_text!r}] needs a value list")
                conds.append((AttrPath.parse(path_text), tuple(allowed)))
            rid = f"context_default:{attr}:{_id_token(value)}"
            rule = ContextDefaultRule(attr, value, tuple(conds), rid)
            rules.append(rule)
            ruleset.by_id[rid] = rule
        ruleset.defaults[attr] = ruleset.defaults.get(attr, ()) + tuple(rules)

    always_required = doc.get("always_required", {})
    for class_name, attrs in always_required.items():
        if not isinstance(attrs, tuple):
            raise RuleError(f"always_required[{class_name!r}] needs an attribute list")
        ruleset.always_required[class_name] = frozenset(attrs)

    _cross_reference(ruleset, registry)
    _validate_acyclic(ruleset)
    return ruleset


def _id_token(value: Any) -> str:
    if isinstance(value, Tagged):
        return f"re:{value.arg}"
    return repr(value)


def _cross_reference(ruleset: RuleSet, registry: ClassRegistry):
    def check_path(path: AttrPath, where: str):
        if path.class_name is not None:
            if path.class_name not in registry.classes:
                raise RuleError(f"{where}: unknown class in path {path.render()!r}")
            if path.attr not in registry.classes[path.class_name].attributes:
                raise RuleError(f"{where}: class {path.class_name!r} has no attribute {path.attr!r}")
        elif not registry.classes_with_attribute(path.attr):
            raise RuleError(f"{where}: attribute {path.attr!r} is not declared by any class")

    for attr, rules in ruleset.deps.items():
        if not registry.classes_with_attribute(attr):
            raise RuleError(f"depend: attribute {attr!r} is not declared by any class")
        for rule in rules:
            check_path(rule.source, rule.rule_id)
    for attr, rules in ruleset.infls.items():
        if not registry.classes_with_attribute(attr):
            raise RuleError(f"influence: attribute {attr!r} is not declared by any class")
        for rule in rules:
            for term in rule.terms:
                for path in term.paths:
                    check_path(path, rule.rule_id)
    for attr, rules in ruleset.defaults.items():
        owners = registry.classes_with_attribute(attr)
        if not owners:
            raise RuleError(f"context_default: attribute {attr!r} is not declared by any class")
        if not any(registry.classes[c].attributes[attr].has_contextual_default() for c in owners):
            raise RuleError(
                f"context_default: {attr!r} never references CNTX_DEFV in its default chain, "
                "so the rule could never fire")
        for rule in rules:
            if not any(registry.classes[c].attributes[attr].iface_kind.conforms(
                    registry.classes[c].attributes[attr].iface_kind.coerce(rule.value))
                    for c in owners):
                raise RuleError(f"{rule.rule_id}: value {rule.value!r} matches no declaring class kind")
            for path, _allowed in rule.conditions:
                check_path(path, rule.rule_id)
    for class_name, attrs in ruleset.always_required.items():
        if class_name not in registry.classes:
            raise RuleError(f"always_required: unknown class {class_name!r}")
        for attr in attrs:
            if attr not in registry.classes[class_name].attributes:
                raise RuleError(f"always_required: {class_name!r} has no attribute {attr!r}")


def _validate_acyclic(ruleset: RuleSet):
    """The dependency/influence attribute graph must have no cycle."""
    edges: dict[str, list[str]] = {}

    def add_edge(src: str, dst: str):
        edges.setdefault(src, [])
        if dst not in edges[src]:
            edges[src].append(dst)
        edges.setdefault(dst, [])

    for attr, rules in ruleset.deps.items():
        for rule in rules:
            add_edge(rule.source.attr, attr)
    for attr, rules in ruleset.infls.items():
        for rule in rules:
            for term in rule.terms:
                for path in term.paths:
                    add_edge(attr, path.attr)

    state: dict[str, int] = {}
    stack: list[str] = []

    def visit(node: str):
        state[node] = 1
        stack.append(node)
        for nxt in edges.get(node, ()):
            if state.get(nxt, 0) == 1:
                cycle = stack[stack.index(nxt):] + [nxt]
                raise RuleError("rule cycle: " + " -> ".join(cycle))
            if state.get(nxt, 0) == 0:
                visit(nxt)
        stack.pop()
        state[node] = 2

    for node in edges:
        if state.get(node, 0) == 0:
            visit(node)


# -- check --------------------------------------------------------------


@dataclass(frozen=True)
class MissingEntry:
    context: str       # description ident
    attr: str          # attribute name or group description
    rule_id: str       # demanding rule

    def __iter__(self):
        return iter((self.context, self.attr, self.rule_id))


@dataclass
class CheckReport:
    status: bool
    diagnostics: tuple[Diagnostic, ...]
    missing: tuple[MissingEntry, ...]
    applied_defaults: tuple[tuple[str, str, Any, str], ...]
    pruned: tuple[tuple[str, str, Any], ...]
    fixpoint_iterations: int
    incoherent: frozenset = frozenset()

    def signature(self):
        """Order-stable content view for determinism comparisons."""
        return (
            self.status,
            self.diagnostics,
            self.missing,
            self.applied_defaults,
            self.pruned,
            self.fixpoint_iterations,
            tuple(sorted(self.incoherent)),
        )

    def warnings(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity is Severity.WARNING]

    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity is Severity.ERROR]

    def render(self) -> str:
        from .diagnostics import format_diagnostic
        lines = [
            f"check: status={self.status} "
            f"({len(self.errors())} error(s), {len(self.warnings())} warning(s), "
            f"{len(self.missing)} missing, fixpoint iterations={self.fixpoint_iterations})"
        ]
        for d in self.diagnostics:
            lines.append(format_diagnostic(d))
        if self.applied_defaults:
            lines.append("applied defaults:")
            for ident, attr, value, rid in self.applied_defaults:
                lines.append(f"  {ident}.{attr} = {dumps_value(value)}  [{rid}]")
        if self.pruned:
            lines.append("pruned:")
            for ident, attr, former in self.pruned:
                lines.append(f"  {ident}.{attr} (was {dumps_value(former)})")
        return "\n".join(lines)

    def to_document(self) -> dict:
        return {
            "status": self.status,
            "diagnostics": tuple(
                {
                    "severity": d.severity.value,
                    "headline": d.headline,
                    "detail": d.detail,
                    "suggestion": d.suggestion,
                    "code": d.code,
                }
                for d in self.diagnostics
            ),
            "missing": tuple((m.context, m.attr, m.rule_id) for m in self.missing),
            "applied_defaults": self.applied_defaults,
            "pruned": self.pruned,
            "fixpoint_iterations": self.fixpoint_iterations,
            "incoherent": tuple(sorted(self.incoherent)),
        }


class _Resolver:
    """Path resolution over one closure, with ambiguity tracking."""

    def __init__(self, study: Study, descs: list[Description]):
        self.study = study
        self.descs = descs
        self.ambiguities: dict[str, Diagnostic] = {}

    def owners(self, path: AttrPath, anchor: Optional[Description]) -> list[Description]:
        if path.class_name is not None:
            return [d for d in self.descs if d.class_name == path.class_name
                    and path.attr in self.study.registry.classes[d.class_name].attributes]
        if anchor is not None and path.attr in self.study.registry.classes[anchor.class_name].attributes:
            return [anchor]
        return [d for d in self.descs
                if path.attr in self.study.registry.classes[d.class_name].attributes]

    def defined_value(self, path: AttrPath, anchor: Optional[Description]) -> Any:
        """Value among currently defined bindings, or UNDEFINED."""
        values = []
        for d in self.owners(path, anchor):
            b = d.bindings.get(path.attr)
            if b is not None:
                values.append((d.ident, b.value))
        if not values:
            return UNDEFINED
        distinct = {v for _, v in values}
        if len(distinct) > 1:
            key = path.render()
            self.ambiguities.setdefault(key, error(
                f"ambiguous attribute path {key!r}",
                [f"{ident}.{path.attr} = {dumps_value(v)}" for ident, v in values],
                "qualify the path or align the values",
                code="ambiguous-path",
            ))
            return UNDEFINED
        return values[0][1]

    def effective_value(self, path: AttrPath, anchor: Optional[Description]) -> Any:
        """Defined value, else the first owner's default-chain value."""
        defined = self.defined_value(path, anchor)
        if defined is not UNDEFINED:
            return defined
        for d in self.owners(path, anchor):
            adef = self.study.registry.classes[d.class_name].attributes[path.attr]
            value = _chain_value(d, adef, self)
            if value is not UNDEFINED:
                return value
        return UNDEFINED


def _conditions_hold(rule: ContextDefaultRule, anchor: Description, resolver: _Resolver) -> bool:
    for path, allowed in rule.conditions:
        value = resolver.defined_value(path, anchor)
        if value is UNDEFINED or not match_value(value, allowed):
            return False
    return True


def _chain_value(desc: Description, adef: AttributeDef, resolver: _Resolver) -> Any:
    """Walk the default-source chain without mutating anything."""
    study = desc.study
    ruleset = study.ruleset or RuleSet()
    for source in adef.defaults:
        if source.kind is DefaultKind.CONTEXTUAL:
            for rule in ruleset.defaults.get(adef.name, ()):
                if _conditions_hold(rule, desc, resolver):
                    return adef.iface_kind.coerce(rule.value)
        elif source.kind is DefaultKind.STATIC:
            return source.value
        elif source.kind is DefaultKind.KERNEL:
            return adef.from_kernel(source.value)
        else:  # NO_DEFAULT terminates the chain
            return UNDEFINED
    return UNDEFINED


def meaningless_attrs(desc: Description) -> set[str]:
    """Attributes whose dependency rules fail on the current context.

    Covers undefined attributes too: the interactive editor folds a
    macro group as soon as its members are declared meaningless, whether
    or not values were entered.
    """
    study = desc.study
    ruleset = study.ruleset or RuleSet()
    resolver = _Resolver(study, closure(study.root))
    cdef = study.registry.classes[desc.class_name]
    return {attr for attr in cdef.attributes
            if _dependency_violated(ruleset, attr, desc, resolver)}


def get_or_deft(desc: Description, attr: str) -> Any:
    """Best-effort value: binding, else contextual/static/kernel defaults.

    Contextual rules are evaluated against the current study state; the
    context itself is never mutated.
    """
    study = desc.study
    cdef = study.registry.class_def(desc.class_name)
    if attr not in cdef.attributes:
        raise DiagnosticError(error(
            f"class {desc.class_name!r} has no attribute {attr!r}",
            [f"while resolving a default for {desc.ident!r}"],
            "check the class attribute list", code="unknown-attribute",
        ))
    binding = desc.bindings.get(attr)
    if binding is not None:
        return binding.value
    resolver = _Resolver(study, closure(study.root))
    return _chain_value(desc, cdef.attributes[attr], resolver)


def show_origin(desc: Description, attr: str) -> tuple[Origin, str]:
    """Origin of a defined binding plus a readable trace.

    Contextual-rule origins include the rule rendered in the resource
    notation.
    """
    binding = desc.bindings.get(attr)
    if binding is None:
        raise DiagnosticError(error(
            f"{desc.ident}.{attr} is not defined",
            ["only defined bindings carry an origin"],
            f"use get_or_deft({desc.ident}, '{attr}') for the best-effort value",
            code="undefined-binding",
        ))
    origin = binding.origin
    lines = [f"{desc.ident}.{attr} = {dumps_value(binding.value)}",
             f"  origin: {origin.kind.value}"]
    if origin.kind is OriginKind.CONTEXT_RULE:
        ruleset = desc.study.ruleset or RuleSet()
        rule = ruleset.rule(origin.detail)
        if rule is not None:
            lines.append(f"  rule: {rule.render()}")
        else:
            lines.append(f"  rule: {origin.detail} (no longer loaded)")
    elif origin.detail:
        lines.append(f"  component: {origin.detail}")
    return origin, "\n".join(lines)


def _kind_placeholder(study: Study, path: AttrPath) -> str:
    for class_name in ([path.class_name] if path.class_name else study.registry.classes_with_attribute(path.attr)):
        cdef = study.registry.classes.get(class_name)
        if cdef and path.attr in cdef.attributes:
            return cdef.attributes[path.attr].iface_kind.placeholder()
    return "<value>"


def check(context: Context, prune: bool = False, strict: Optional[bool] = None) -> CheckReport:
    """Contextual checking over the transitive closure of ``context``.

    Contextual defaults are applied iteratively to fixpoint, dependency
    rules are evaluated up-propagating, influence rules down-propagating
    from every defined value, and always-required attributes verified.
    A violated dependency on a defined value yields a WARNING
    ("meaningless value"), or removal when pruning was requested; the
    source side of the rule is never modified.  Strict mode escalates
    every WARNING to ERROR.
    """
    study = context.study
    ruleset = study.ruleset or RuleSet()
    if strict is None:
        strict = study.options.strict
    descs = closure(context)

    diags: list[Diagnostic] = []
    applied: list[tuple[str, str, Any, str]] = []
    pruned: list[tuple[str, str, Any]] = []
    pruned_guard: set[tuple[str, str]] = set()
    fixpoint_iterations = 0
    resolver = _Resolver(study, descs)

    max_prune_rounds = sum(len(d.bindings) for d in descs) + len(descs) + 2
    for _round in range(max_prune_rounds):
        fixpoint_iterations += _apply_defaults_to_fixpoint(
            study, ruleset, descs, resolver, applied, pruned_guard, diags)
        if not prune:
            break
        removals = _evaluate_dependencies(study, ruleset, descs, resolver, diags, emit=False)
        if not removals:
            break
        for desc, attr in removals:
            former = desc.bindings.pop(attr).value
            pruned.append((desc.ident, attr, former))
            pruned_guard.add((desc.ident, attr))
    else:
        diags.append(error(
            "prune loop did not stabilize",
            ["removals kept enabling further rule firings"],
            "review the rule set for prune/default interplay",
            code="prune-unstable",
        ))

    incoherent = _evaluate_dependencies(study, ruleset, descs, resolver, diags, emit=True)
    missing: list[MissingEntry] = []
    _evaluate_influence(study, ruleset, descs, resolver, diags, missing,
                        incoherent={(d.ident, a) for d, a in incoherent})
    _evaluate_always_required(study, ruleset, descs, resolver, missing)

    diags.extend(resolver.ambiguities.values())
    for entry in missing:
        placeholder = _kind_placeholder(study, AttrPath.parse(entry.attr.split(" ")[0]))
        diags.append(error(
            f"required value missing: {entry.context}.{entry.attr}",
            [f"demanded by {entry.rule_id}"],
            f"set({entry.context}, '{entry.attr}', {placeholder})"
            if " " not in entry.attr else f"define exactly one of the group: {entry.attr}",
            code="required-missing",
        ))

    if strict:
        diags = escalate_all(diags)
    status = not any(d.severity is Severity.ERROR for d in diags) and not missing
    report = CheckReport(
        status=status,
        diagnostics=tuple(diags),
        missing=tuple(missing),
        applied_defaults=tuple(applied),
        pruned=tuple(pruned),
        fixpoint_iterations=fixpoint_iterations,
        incoherent=frozenset((d.ident, a) for d, a in incoherent),
    )
    study.last_report = report
    return report


def _dependency_violated(ruleset, attr: str, desc: Description, resolver: "_Resolver") -> bool:
    for rule in ruleset.deps.get(attr, ()):
        src_value = resolver.effective_value(rule.source, desc)
        if src_value is not UNDEFINED and not match_value(src_value, rule.allowed):
            return True
    return False


def _contextual_reachable(adef: AttributeDef) -> bool:
    """True while the default chain reaches CNTX_DEFV before any static
    or kernel source (those shadow later contextual entries)."""
    for source in adef.defaults:
        if source.kind is DefaultKind.CONTEXTUAL:
            return True
        return False
    return False


def _apply_defaults_to_fixpoint(study, ruleset, descs, resolver, applied, pruned_guard, diags) -> int:
    iterations = 0
    for _ in range(ruleset.max_fixpoint_iters):
        iterations += 1
        changed: list[str] = []
        for attr, rules in ruleset.defaults.items():
            for rule in rules:
                for desc in descs:
                    cdef = study.registry.classes[desc.class_name]
                    if attr not in cdef.attributes:
                        continue
                    if attr in desc.bindings or (desc.ident, attr) in pruned_guard:
                        continue
                    if not _contextual_reachable(cdef.attributes[attr]):
                        continue
                    if _dependency_violated(ruleset, attr, desc, resolver):
                        continue  # never inject a value the rules call meaningless
                    if _conditions_hold(rule, desc, resolver):
                        value = cdef.attributes[attr].iface_kind.coerce(rule.value)
                        if not cdef.attributes[attr].iface_kind.conforms(value):
                            continue
                        desc.bindings[attr] = Binding(
                            attr, value, Origin(OriginKind.CONTEXT_RULE, rule.rule_id))
                        applied.append((desc.ident, attr, value, rule.rule_id))
                        changed.append(f"{desc.ident}.{attr}")
        if not changed:
            return iterations
        last_changed = changed
    diags.append(error(
        f"contextual defaults did not reach a fixpoint within {ruleset.max_fixpoint_iters} iterations",
        [f"still changing: {', '.join(last_changed[:8])}"],
        "raise max_fixpoint_iters or review the default rules",
        code="fixpoint-diverged",
    ))
    return iterations


def _evaluate_dependencies(study, ruleset, descs, resolver, diags, *, emit: bool):
    """Violated dependency on a defined value: WARNING (or prune removal).

    Returns the (description, attr) pairs found violated this pass.
    """
    hits: list[tuple[Description, str]] = []
    for desc in descs:
        for attr in list(desc.bindings):
            for rule in ruleset.deps.get(attr, ()):
                src_value = resolver.effective_value(rule.source, desc)
                if src_value is UNDEFINED:
                    continue  # incompleteness is reported by the demand side
                if not match_value(src_value, rule.allowed):
                    hits.append((desc, attr))
                    if emit:
                        diags.append(warning(
                            f"meaningless value: {desc.ident}.{attr}",
                            [
                                f"{attr} = {dumps_value(desc.bindings[attr].value)} has no meaning while "
                                f"{rule.source.render()} = {dumps_value(src_value)}",
                                f"rule: {rule.render()}",
                            ],
                            f"set {rule.source.render()} to one of {dumps_value(rule.allowed)} "
                            f"or remove {attr} (check(prune=True))",
                            code="meaningless-value",
                        ))
                    break
    return hits


def _evaluate_influence(study, ruleset, descs, resolver, diags, missing, incoherent):
    seen_missing: set[tuple[str, str, str]] = set()

    def add_missing(ident: str, attr: str, rule_id: str):
        key = (ident, attr, rule_id)
        if key not in seen_missing:
            seen_missing.add(key)
            missing.append(MissingEntry(ident, attr, rule_id))

    for desc in descs:
        for attr, binding in list(desc.bindings.items()):
            if (desc.ident, attr) in incoherent:
                continue  # a meaningless value propagates no influence
            for rule in ruleset.infls.get(attr, ()):
                if not _match_one(binding.value, rule.trigger):
                    continue
                for term in rule.terms:
                    if term.kind == "single":
                        path = term.paths[0]
                        if resolver.effective_value(path, desc) is UNDEFINED:
                            owner = _missing_owner(resolver, path, desc)
                            add_missing(owner, path.attr, rule.rule_id)
                    elif term.kind == "group":
                        defined = [p for p in term.paths
                                   if resolver.defined_value(p, desc) is not UNDEFINED]
                        if len(defined) == 0:
                            add_missing(desc.ident, term.describe(), rule.rule_id)
                        elif len(defined) > 1:
                            diags.append(warning(
                                f"over-specified alternative: {term.describe()}",
                                [f"{rule.rule_id} wants exactly one of the group defined",
                                 f"defined: {', '.join(p.render() for p in defined)}"],
                                "keep one alternative and unset the others",
                                code="over-specified",
                            ))
                    else:  # strong
                        path = term.paths[0]
                        value = resolver.effective_value(path, desc)
                        if value is UNDEFINED:
                            owner = _missing_owner(resolver, path, desc)
                            add_missing(owner, path.attr, rule.rule_id)
                        elif not match_value(value, term.allowed):
                            diags.append(warning(
                                f"value conflict on {path.render()}",
                                [
                                    f"{attr} = {dumps_value(binding.value)} restricts "
                                    f"{path.render()} to {dumps_value(term.allowed)}",
                                    f"found {dumps_value(value)}",
                                    f"rule: {rule.render()}",
                                ],
                                f"set {path.render()} to one of {dumps_value(term.allowed)}",
                                code="strong-conflict",
                            ))


def _missing_owner(resolver: _Resolver, path: AttrPath, anchor: Description) -> str:
    owners = resolver.owners(path, anchor)
    return owners[0].ident if owners else anchor.ident


def _evaluate_always_required(study, ruleset, descs, resolver, missing):
    seen = {(m.context, m.attr) for m in missing}
    for desc in descs:
        cdef = study.registry.classes[desc.class_name]
        required = set(cdef.required) | set(ruleset.always_required.get(desc.class_name, ()))
        for attr in sorted(required):
            if attr in desc.bindings:
                continue
            adef = cdef.attributes.get(attr)
            if adef is None:
                continue
            if _chain_value(desc, adef, resolver) is not UNDEFINED:
                continue
            if (desc.ident, attr) not in seen:
                missing.append(MissingEntry(desc.ident, attr, f"always_required:{desc.class_name}"))
                seen.add((desc.ident, attr))


def what_if(context: Context, hypothetical: Sequence[tuple]) -> CheckReport:
    """Report as if the bindings were set, on a shadow copy.

    Each hypothetical is (description-or-ident, attr, value); static
    checks apply.  The real context is untouched, including its last
    check report.
    """
    study = context.study
    shadow = clone_study(study)
    for entry in hypothetical:
        desc_ref, attr, value = entry
        ident = desc_ref.ident if isinstance(desc_ref, Description) else str(desc_ref)
        target = shadow.resolve(ident)
        if not isinstance(target, Description):
            raise DiagnosticError(error(
                f"what-if target {ident!r} is not a description", [],
                "name a description", code="bad-what-if",
            ))
        target.set(attr, value)
    return check(shadow.resolve(context.ident))


def clone_study(study: Study) -> Study:
    """Structural copy sharing the immutable registry and rule set."""
    shadow = Study(study.registry, study.ruleset)
    shadow.options = study.options
    shadow.kernel = study.kernel
    shadow.variables = dict(study.variables)
    shadow.boot_order = list(study.boot_order)
    shadow.boot_current = study.boot_current

    def clone_into(node, parent_children):
        if isinstance(node, Description):
            c = Description(shadow, node.class_name, node.ident, node.serial)
            c.bindings = dict(node.bindings)
            c.attachments = list(node.attachments)
            shadow.ident_index[node.ident] = c
            parent_children.append(c)
            return
        s = Script(shadow, node.ident, node.serial)
        s.pending_ops = list(node.pending_ops)
        shadow.ident_index[node.ident] = s
        parent_children.append(s)
        for child in node.children:
            clone_into(child, s.children)

    shadow.root.serial = study.root.serial
    shadow.root.pending_ops = list(study.root.pending_ops)
    for child in study.root.children:
        clone_into(child, shadow.root.children)
    shadow._serial = study._serial
    return shadow
