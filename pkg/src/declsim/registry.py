"""Static definitions: per-class attribute grammar, macros, metadata.

The attribute grammar lives in a resource document (see ``notation``).
Each class block maps attribute names to 4-slot entries::

    'phymod': ["fluid model", ['S','I'],
               {'euler':0, 'nslam':1, 'nstur':2}, [CNTX_DEFV, None]]

slots: descriptive text, value kind tag(s), definition domain, default
sources; an optional 5th slot INTF_ONLY restricts the attribute to
engine-side writes.  Keys containing ``*`` declare macro-attribute
versions (``'conservative*05': ['ro','rou','rov','row','roe']``).

Separate metadata blocks (``required``, ``obsolete``, ``filterable``,
``undocumented``, ``inherits``, ``bootable``) complete the class
definitions.  ``finalize`` materializes inheritance and freezes the
registry into shareable per-class singletons.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional, Sequence

from .notation import Symbol, Tagged, dumps_document, parse_document


class RegistryError(ValueError):
    pass


class _UndefinedType:
    """The single non-value, distinct from every scalar of every kind."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Undefined"

    def __bool__(self):
        return False

    def __deepcopy__(self, memo):
        return self

    def __copy__(self):
        return self


UNDEFINED = _UndefinedType()


class ValueKind(enum.Enum):
    FLOAT = "F"
    INT = "I"
    STR = "S"

    def conforms(self, value: Any) -> bool:
        if value is UNDEFINED:
            return True
        if isinstance(value, bool):
            return False
        if self is ValueKind.FLOAT:
            return isinstance(value, (int, float)) and math.isfinite(value)
        if self is ValueKind.INT:
            return isinstance(value, int)
        return isinstance(value, str)

    def coerce(self, value: Any) -> Any:
        if self is ValueKind.FLOAT and isinstance(value, int) and not isinstance(value, bool):
            return float(value)
        return value

    def placeholder(self) -> str:
        return {"F": "<float>", "I": "<int>", "S": "<string>"}[self.value]


Checker = Callable[[Any], bool]

BUILTIN_CHECKERS: dict[str, Checker] = {
    "strictly_positive": lambda v: isinstance(v, (int, float)) and v > 0,
    "non_negative": lambda v: isinstance(v, (int, float)) and v >= 0,
    "strictly_negative": lambda v: isinstance(v, (int, float)) and v < 0,
    "non_positive": lambda v: isinstance(v, (int, float)) and v <= 0,
    "nonzero": lambda v: isinstance(v, (int, float)) and v != 0,
    "unit_interval": lambda v: isinstance(v, (int, float)) and 0 <= v <= 1,
    "unrestricted": lambda v: True,
    "file_path": lambda v: isinstance(v, str) and len(v) > 0,
}

_CHECKER_TEXT = {
    "strictly_positive": "strictly positive",
    "non_negative": "zero or positive",
    "strictly_negative": "strictly negative",
    "non_positive": "zero or negative",
    "nonzero": "nonzero",
    "unit_interval": "between 0 and 1",
    "unrestricted": "unrestricted",
    "file_path": "a file path (contents not checked)",
}


@dataclass(frozen=True)
class DomainSpec:
    """Allowed-value domain: enumerated values, a named checker, or both.

    ``conversion`` maps interface values to kernel codes when the kernel
    kind differs from the interface kind.
    """

    values: Optional[tuple] = None
    conversion: Optional[Mapping[Any, Any]] = None
    checker: Optional[str] = None

    def admits(self, value: Any, checkers: Mapping[str, Checker]) -> bool:
        if self.values is not None and value not in self.values:
            return False
        if self.checker is not None and not checkers[self.checker](value):
            return False
        return True

    def describe(self, kind: ValueKind) -> str:
        parts = []
        if self.values is not None:
            parts.append(", ".join(_render_scalar(v) for v in self.values))
        if self.checker is not None:
            parts.append(f"{kind.placeholder()}, {_CHECKER_TEXT.get(self.checker, self.checker)}")
        return "; ".join(parts) if parts else kind.placeholder()


def _render_scalar(v: Any) -> str:
    return f"'{v}'" if isinstance(v, str) else repr(v)


class DefaultKind(enum.Enum):
    STATIC = "static"
    KERNEL = "kernel"
    CONTEXTUAL = "contextual"
    NONE = "none"


@dataclass(frozen=True)
class DefaultSource:
    kind: DefaultKind
    value: Any = None  # static value, or kernel code for KERNEL

    def __repr__(self):
        if self.kind is DefaultKind.STATIC:
            return f"static({self.value!r})"
        if self.kind is DefaultKind.KERNEL:
            return f"kernel({self.value!r})"
        return self.kind.value


NO_DEFAULT = DefaultSource(DefaultKind.NONE)
CONTEXTUAL_DEFAULT = DefaultSource(DefaultKind.CONTEXTUAL)


class Restriction(enum.Enum):
    USER_SETTABLE = "user"
    INTERFACE_ONLY = "interface"


@dataclass(frozen=True)
class AttributeDef:
    name: str
    doc: str
    iface_kind: ValueKind
    kernel_kind: ValueKind
    domain: DomainSpec
    defaults: tuple[DefaultSource, ...]
    restriction: Restriction = Restriction.USER_SETTABLE

    def static_default(self) -> Any:
        """First non-contextual default yielded by the chain, or UNDEFINED."""
        for source in self.defaults:
            if source.kind is DefaultKind.STATIC:
                return source.value
            if source.kind is DefaultKind.KERNEL:
                return self.from_kernel(source.value)
            if source.kind is DefaultKind.NONE:
                return UNDEFINED
        return UNDEFINED

    def has_contextual_default(self) -> bool:
        return any(s.kind is DefaultKind.CONTEXTUAL for s in self.defaults)

    def to_kernel(self, value: Any) -> Any:
        if self.domain.conversion is not None:
            return self.domain.conversion[value]
        return value

    def from_kernel(self, code: Any) -> Any:
        if self.domain.conversion is not None:
            for iface_value, kernel_code in self.domain.conversion.items():
                if kernel_code == code:
                    return iface_value
            raise RegistryError(f"kernel code {code!r} has no interface value for {self.name!r}")
        return code


@dataclass(frozen=True)
class MacroAttribute:
    name: str
    versions: Mapping[int, tuple[str, ...]]

    def version_name(self, arity: int) -> str:
        return f"{self.name}*{arity:02d}"


@dataclass
class ClassDef:
    name: str
    attributes: dict[str, AttributeDef] = field(default_factory=dict)
    macros: dict[str, MacroAttribute] = field(default_factory=dict)
    required: set[str] = field(default_factory=set)
    obsolete: dict[Any, Any] = field(default_factory=dict)
    filterable: set[Any] = field(default_factory=set)
    undocumented: set[Any] = field(default_factory=set)
    inherits: Optional[tuple[str, dict]] = None
    bootable: bool = False

    def attribute_names(self) -> list[str]:
        return list(self.attributes)


class ClassRegistry:
    """All class definitions plus the checker registry.

    Unfinalized registries are mutable working state; ``finalize``
    materializes inheritance and freezes everything.  A finalized
    registry is immutable and safe to share across threads.
    """

    def __init__(self):
        self.classes: dict[str, ClassDef] = {}
        self.checkers: dict[str, Checker] = dict(BUILTIN_CHECKERS)
        self.finalized = False

    def class_def(self, name: str) -> ClassDef:
        try:
            return self.classes[name]
        except KeyError:
            raise RegistryError(f"unknown class {name!r}") from None

    def classes_with_attribute(self, attr: str) -> list[str]:
        return [name for name, cdef in self.classes.items() if attr in cdef.attributes]

    def attribute(self, class_name: str, attr: str) -> AttributeDef:
        cdef = self.class_def(class_name)
        try:
            return cdef.attributes[attr]
        except KeyError:
            raise RegistryError(f"class {class_name!r} has no attribute {attr!r}") from None


_KIND_TAGS = {"F": ValueKind.FLOAT, "I": ValueKind.INT, "S": ValueKind.STR}


def _parse_kinds(slot: Any, where: str) -> tuple[ValueKind, ValueKind]:
    if isinstance(slot, str):
        if slot not in _KIND_TAGS:
            raise RegistryError(f"{where}: unknown kind tag {slot!r}")
        kind = _KIND_TAGS[slot]
        return kind, kind
    if isinstance(slot, tuple) and len(slot) == 2 and all(isinstance(t, str) for t in slot):
        try:
            return _KIND_TAGS[slot[0]], _KIND_TAGS[slot[1]]
        except KeyError as exc:
            raise RegistryError(f"{where}: unknown kind tag {exc.args[0]!r}") from None
    raise RegistryError(f"{where}: kind slot must be a tag or a [interface, kernel] pair")


def _parse_domain(slot: Any, iface_kind: ValueKind, kernel_kind: ValueKind,
                  checkers: Mapping[str, Checker], where: str) -> DomainSpec:
    if isinstance(slot, Symbol):
        if slot.name not in checkers:
            raise RegistryError(f"{where}: unknown checker {slot.name!r}")
        return DomainSpec(checker=slot.name)
    if isinstance(slot, dict):
        for iface_value, code in slot.items():
            if not iface_kind.conforms(iface_value):
                raise RegistryError(f"{where}: conversion key {iface_value!r} does not match kind")
            if not kernel_kind.conforms(code):
                raise RegistryError(f"{where}: kernel code {code!r} does not match kernel kind")
        return DomainSpec(values=tuple(slot), conversion=dict(slot))
    if isinstance(slot, tuple):
        if len(slot) == 2 and isinstance(slot[0], (tuple, dict)) and isinstance(slot[1], Symbol):
            base = _parse_domain(slot[0], iface_kind, kernel_kind, checkers, where)
            if slot[1].name not in checkers:
                raise RegistryError(f"{where}: unknown checker {slot[1].name!r}")
            return DomainSpec(values=base.values, conversion=base.conversion, checker=slot[1].name)
        for v in slot:
            if not iface_kind.conforms(v):
                raise RegistryError(f"{where}: allowed value {v!r} does not match kind")
        if iface_kind is not kernel_kind:
            raise RegistryError(f"{where}: differing kinds need a conversion map, not a value list")
        return DomainSpec(values=tuple(slot))
    raise RegistryError(f"{where}: domain slot must be values, a conversion map, or a checker name")


def _parse_defaults(slot: Any, attr_def_ctx: str) -> tuple[DefaultSource, ...]:
    if not isinstance(slot, tuple):
        raise RegistryError(f"{attr_def_ctx}: defaults slot must be a sequence")
    if not slot:
        raise RegistryError(f"{attr_def_ctx}: defaults must be non-empty (use [None] for no default)")
    sources = []
    for entry in slot:
        if entry is None:
            sources.append(NO_DEFAULT)
        elif isinstance(entry, Symbol) and entry.name == "CNTX_DEFV":
            sources.append(CONTEXTUAL_DEFAULT)
        elif isinstance(entry, Tagged) and entry.tag == "KERN_DEFV":
            sources.append(DefaultSource(DefaultKind.KERNEL, entry.arg))
        elif isinstance(entry, (Symbol, Tagged)):
            raise RegistryError(f"{attr_def_ctx}: unknown default source {entry!r}")
        else:
            sources.append(DefaultSource(DefaultKind.STATIC, entry))
    for i, source in enumerate(sources):
        if source.kind is DefaultKind.NONE and i != len(sources) - 1:
            raise RegistryError(f"{attr_def_ctx}: None terminates a default chain")
    return tuple(sources)


def _parse_attribute(name: str, entry: Any, checkers: Mapping[str, Checker], class_name: str) -> AttributeDef:
    where = f"{class_name}.{name}"
    if not isinstance(entry, tuple) or not 4 <= len(entry) <= 5:
        raise RegistryError(f"{where}: attribute entry must have 4 slots (plus optional INTF_ONLY)")
    doc = entry[0]
    if not isinstance(doc, str):
        raise RegistryError(f"{where}: first slot must be the descriptive text")
    iface_kind, kernel_kind = _parse_kinds(entry[1], where)
    domain = _parse_domain(entry[2], iface_kind, kernel_kind, checkers, where)
    if iface_kind is not kernel_kind and domain.conversion is None:
        raise RegistryError(f"{where}: differing interface/kernel kinds require a conversion map")
    defaults = _parse_defaults(entry[3], where)
    for source in defaults:
        if source.kind is DefaultKind.STATIC:
            if not iface_kind.conforms(source.value):
                raise RegistryError(f"{where}: static default {source.value!r} does not match kind")
    restriction = Restriction.USER_SETTABLE
    if len(entry) == 5:
        if not (isinstance(entry[4], Symbol) and entry[4].name == "INTF_ONLY"):
            raise RegistryError(f"{where}: fifth slot must be INTF_ONLY")
        restriction = Restriction.INTERFACE_ONLY
    return AttributeDef(name, doc, iface_kind, kernel_kind, domain, defaults, restriction)


def _as_meta_key(item: Any) -> Any:
    """Metadata item: attribute name or (attribute, value) pair."""
    if isinstance(item, str):
        return item
    if isinstance(item, tuple) and len(item) == 2 and isinstance(item[0], str):
        return (item[0], item[1])
    raise RegistryError(f"metadata item {item!r} must be a name or a [name, value] pair")


def load_static_defs(source: str | dict) -> ClassRegistry:
    """Parse the static-definitions document into an unfinalized registry.

    ``source`` is resource text or an already-parsed document with a
    ``static_defs`` block and optional metadata blocks.
    """
    doc = parse_document(source) if isinstance(source, str) else source
    registry = ClassRegistry()
    static_defs = doc.get("static_defs", {})
    if not isinstance(static_defs, dict):
        raise RegistryError("static_defs block must be a map of class names")
    for class_name, body in static_defs.items():
        if not isinstance(class_name, str):
            raise RegistryError(f"class name {class_name!r} must be a string")
        if not isinstance(body, dict):
            raise RegistryError(f"class {class_name!r} body must be a map")
        cdef = ClassDef(name=class_name)
        macro_versions: dict[str, dict[int, tuple[str, ...]]] = {}
        for key, entry in body.items():
            if not isinstance(key, str):
                raise RegistryError(f"{class_name}: attribute key {key!r} must be a string")
            if "*" in key:
                macro_name, _, suffix = key.partition("*")
                if not suffix.isdigit() or len(suffix) != 2:
                    raise RegistryError(f"{class_name}.{key}: macro suffix must be a zero-padded 2-digit arity")
                if not isinstance(entry, tuple) or not all(isinstance(m, str) for m in entry):
                    raise RegistryError(f"{class_name}.{key}: macro members must be attribute names")
                arity = int(suffix)
                if arity != len(entry):
                    raise RegistryError(
                        f"{class_name}.{key}: declares arity {arity} but lists {len(entry)} members"
                    )
                macro_versions.setdefault(macro_name, {})[arity] = tuple(entry)
            else:
                cdef.attributes[key] = _parse_attribute(key, entry, registry.checkers, class_name)
        for macro_name, versions in macro_versions.items():
            if macro_name in cdef.attributes:
                raise RegistryError(f"{class_name}: macro {macro_name!r} collides with an attribute")
            cdef.macros[macro_name] = MacroAttribute(macro_name, versions)
        registry.classes[class_name] = cdef

    def class_meta(block_name: str) -> dict:
        block = doc.get(block_name, {})
        if not isinstance(block, dict):
            raise RegistryError(f"{block_name} block must be a map keyed by class name")
        for class_name in block:
            if class_name not in registry.classes:
                raise RegistryError(f"{block_name}: unknown class {class_name!r}")
        return block

    for class_name, names in class_meta("required").items():
        cdef = registry.classes[class_name]
        for name in names:
            if name not in cdef.attributes:
                raise RegistryError(f"required: {class_name!r} has no attribute {name!r}")
            cdef.required.add(name)
    for class_name, mapping in class_meta("obsolete").items():
        if not isinstance(mapping, dict):
            raise RegistryError(f"obsolete[{class_name!r}] must map old items to replacements")
        cdef = registry.classes[class_name]
        for old, new in mapping.items():
            cdef.obsolete[_as_meta_key(old)] = None if new is None else _as_meta_key(new)
    for class_name, items in class_meta("filterable").items():
        registry.classes[class_name].filterable.update(_as_meta_key(i) for i in items)
    for class_name, items in class_meta("undocumented").items():
        registry.classes[class_name].undocumented.update(_as_meta_key(i) for i in items)
    for class_name, parent_spec in class_meta("inherits").items():
        if isinstance(parent_spec, str):
            parent, overlay = parent_spec, {}
        elif isinstance(parent_spec, tuple) and len(parent_spec) == 2 and isinstance(parent_spec[0], str):
            parent, overlay = parent_spec[0], parent_spec[1]
            if not isinstance(overlay, dict):
                raise RegistryError(f"inherits[{class_name!r}]: overlay must be a map")
        else:
            raise RegistryError(f"inherits[{class_name!r}] must be a parent name or [parent, overlay]")
        registry.classes[class_name].inherits = (parent, dict(overlay))
    bootable = doc.get("bootable", ())
    for class_name in bootable:
        if class_name not in registry.classes:
            raise RegistryError(f"bootable: unknown class {class_name!r}")
        registry.classes[class_name].bootable = True

    # Macro members must exist once inheritance cannot add more (validated
    # again after finalize for inherited attributes).
    for cdef in registry.classes.values():
        if cdef.inherits is None:
            _validate_macro_members(cdef)
    return registry


def _validate_macro_members(cdef: ClassDef):
    for macro in cdef.macros.values():
        for arity, members in macro.versions.items():
            for member in members:
                if member not in cdef.attributes:
                    raise RegistryError(
                        f"{cdef.name}: macro {macro.version_name(arity)!r} member {member!r} is not declared"
                    )


def finalize(registry: ClassRegistry) -> ClassRegistry:
    """Materialize inheritance and freeze the registry (idempotent)."""
    if registry.finalized:
        return registry

    resolved: set[str] = set()
    resolving: list[str] = []

    def resolve(name: str):
        if name in resolved:
            return
        if name in resolving:
            cycle = resolving[resolving.index(name):] + [name]
            raise RegistryError("inheritance cycle: " + " -> ".join(cycle))
        cdef = registry.class_def(name)
        if cdef.inherits is not None:
            parent_name, overlay = cdef.inherits
            resolving.append(name)
            resolve(parent_name)
            resolving.pop()
            parent = registry.classes[parent_name]
            merged = dict(parent.attributes)
            for attr_name, entry in overlay.items():
                if attr_name not in parent.attributes:
                    raise RegistryError(
                        f"inherits[{name!r}]: overlay names {attr_name!r}, not an attribute of {parent_name!r}"
                    )
                merged[attr_name] = _parse_attribute(attr_name, entry, registry.checkers, name)
            merged.update(cdef.attributes)
            cdef.attributes = merged
            merged_macros = dict(parent.macros)
            merged_macros.update(cdef.macros)
            cdef.macros = merged_macros
        resolved.add(name)

    for name in list(registry.classes):
        resolve(name)
    for cdef in registry.classes.values():
        _validate_macro_members(cdef)
        for name in cdef.required:
            if name not in cdef.attributes:
                raise RegistryError(f"required: {cdef.name!r} has no attribute {name!r}")
    registry.finalized = True
    return registry


def expand_macro(registry: ClassRegistry, class_name: str, macro: str,
                 arity: Optional[int] = None) -> tuple[str, ...]:
    """Member names of one macro version.

    With ``arity`` omitted the macro must have exactly one version.
    """
    cdef = registry.class_def(class_name)
    if macro not in cdef.macros:
        raise RegistryError(f"class {class_name!r} has no macro {macro!r}")
    versions = cdef.macros[macro].versions
    if arity is None:
        if len(versions) == 1:
            return next(iter(versions.values()))
        raise RegistryError(
            f"macro {macro!r} has versions for arities {sorted(versions)}; specify one"
        )
    if arity not in versions:
        raise RegistryError(
            f"macro {macro!r} has no version of arity {arity}; available: {sorted(versions)}"
        )
    return versions[arity]


def _kind_slot(attr: AttributeDef) -> Any:
    if attr.iface_kind is attr.kernel_kind:
        return attr.iface_kind.value
    return (attr.iface_kind.value, attr.kernel_kind.value)


def _domain_slot(domain: DomainSpec) -> Any:
    if domain.conversion is not None:
        base: Any = dict(domain.conversion)
    elif domain.values is not None:
        base = tuple(domain.values)
    else:
        base = None
    if domain.checker is not None:
        if base is None:
            return Symbol(domain.checker)
        return (base, Symbol(domain.checker))
    return base


def _defaults_slot(defaults: Sequence[DefaultSource]) -> tuple:
    out: list[Any] = []
    for source in defaults:
        if source.kind is DefaultKind.NONE:
            out.append(None)
        elif source.kind is DefaultKind.CONTEXTUAL:
            out.append(Symbol("CNTX_DEFV"))
        elif source.kind is DefaultKind.KERNEL:
            out.append(Tagged("KERN_DEFV", source.value))
        else:
            out.append(source.value)
    return tuple(out)


def to_document(registry: ClassRegistry) -> dict:
    """Registry as a parse_document-shaped document (canonical form)."""
    static_defs: dict[str, dict] = {}
    required: dict[str, tuple] = {}
    obsolete: dict[str, dict] = {}
    filterable: dict[str, tuple] = {}
    undocumented: dict[str, tuple] = {}
    bootable = []
    for name, cdef in registry.classes.items():
        body: dict[str, Any] = {}
        for attr in cdef.attributes.values():
            entry = [attr.doc, _kind_slot(attr), _domain_slot(attr.domain), _defaults_slot(attr.defaults)]
            if attr.restriction is Restriction.INTERFACE_ONLY:
                entry.append(Symbol("INTF_ONLY"))
            body[attr.name] = tuple(entry)
        for macro in cdef.macros.values():
            for arity, members in sorted(macro.versions.items()):
                body[macro.version_name(arity)] = members
        static_defs[name] = body
        if cdef.required:
            required[name] = tuple(sorted(cdef.required))
        if cdef.obsolete:
            obsolete[name] = dict(cdef.obsolete)
        if cdef.filterable:
            filterable[name] = tuple(sorted(cdef.filterable, key=repr))
        if cdef.undocumented:
            undocumented[name] = tuple(sorted(cdef.undocumented, key=repr))
        if cdef.bootable:
            bootable.append(name)
    doc: dict[str, Any] = {"static_defs": static_defs}
    if required:
        doc["required"] = required
    if obsolete:
        doc["obsolete"] = obsolete
    if filterable:
        doc["filterable"] = filterable
    if undocumented:
        doc["undocumented"] = undocumented
    if bootable:
        doc["bootable"] = tuple(bootable)
    return doc


def serialize(registry: ClassRegistry) -> str:
    return dumps_document(to_document(registry))
