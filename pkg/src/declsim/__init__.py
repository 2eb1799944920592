"""declsim: a declarative simulation-description engine.

Simulations are described as attribute-bearing description objects
grouped in scripts; a rule system checks and completes the description
against dependency, influence, and contextual-default rules; studies
scale out through a script database, a spanning automaton, and an
adaptive sparse interpolator steering experiment-space discovery.
"""

from __future__ import annotations

import os
from importlib import resources as _importlib_resources
from typing import Optional, Sequence

from .diagnostics import Diagnostic, DiagnosticError, Severity, format_diagnostic
from .model import (
    Binding,
    Description,
    Origin,
    OriginKind,
    Script,
    Study,
    StudyOptions,
    load_script,
    load_script_text,
    structural_equal,
)
from .registry import (
    UNDEFINED,
    AttributeDef,
    ClassRegistry,
    expand_macro,
    finalize,
    load_static_defs,
)
from .rules import CheckReport, RuleSet, check, get_or_deft, load_rule_defs, show_origin, what_if

__version__ = "0.1.0"


def resource_text(name: str) -> str:
    """Contents of one shipped resource file (e.g. 'static_defs.res')."""
    return _importlib_resources.files("declsim.resources").joinpath(name).read_text("utf-8")


def shipped_product_texts() -> dict[str, str]:
    """Manifest texts of the products shipped with the engine."""
    base = _importlib_resources.files("declsim.resources").joinpath("products")
    out = {}
    for entry in sorted(base.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".res"):
            out[entry.name[:-len(".res")]] = entry.read_text("utf-8")
    return out


def build_study(defs_text: Optional[str] = None, rules_text: Optional[str] = None,
                products: Sequence[str] = ("sfd", "dmd", "sparse_poly", "target_lift"),
                options: Optional[StudyOptions] = None) -> Study:
    """Study over the shipped (or given) definitions, rules, and products.

    ``products`` names shipped manifests; pass explicit manifest text
    via orchestrate.register_product for third-party products.
    """
    from . import orchestrate

    registry = finalize(load_static_defs(defs_text or resource_text("static_defs.res")))
    ruleset = load_rule_defs(rules_text or resource_text("rules.res"), registry)
    study = Study(registry, ruleset, options)
    if products:
        shipped = shipped_product_texts()
        for name in products:
            if name not in shipped:
                raise DiagnosticError(Diagnostic(
                    Severity.ERROR, f"no shipped product {name!r}",
                    (f"shipped: {', '.join(sorted(shipped))}",),
                    "drop a manifest into the products directory", "unknown-product",
                ))
            orchestrate.register_product(study, orchestrate.ProductSpec.from_text(shipped[name]))
    return study
