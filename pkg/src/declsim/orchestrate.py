"""Extensibility: products, boot dispatch, provide(), target lift, kernel.

A description class that declares a compute entry point is bootable; the
instance currently holding the compute token is the boot object, and
``compute()`` on the root script dispatches to it.  By default the token
sits with the last-created bootable description; ``set_boot_objt`` moves
it explicitly, including from inside a running compute procedure.

Products are declarative manifests (resource notation) contributing
classes, rules, and a named compute procedure; procedure code itself is
compiled into this module's registry, never loaded dynamically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional, Sequence

from . import model, registry as registry_mod, rules as rules_mod
from .diagnostics import DiagnosticError, error
from .model import Description, PendingOp, Study
from .notation import parse_document
from .registry import UNDEFINED, finalize, load_static_defs, to_document
from .rules import RuleSet, get_or_deft, load_rule_defs


class ToyKernel:
    """Deterministic analytic stand-in for a real solver.

    Observables: lift(alpha) = 0.11 * alpha for alpha in [0, 10] degrees,
    and the smooth f(x, y) = exp(-x^2 - y^2) + 0.3*x*y on [-1, 1]^2.
    """

    name = "toy"
    alpha_range = (0.0, 10.0)
    xy_range = (-1.0, 1.0)

    def evaluate(self, point: Mapping[str, float], guess: Optional[Mapping] = None) -> dict[str, float]:
        out: dict[str, float] = {}
        if "alpha" in point:
            alpha = float(point["alpha"])
            lo, hi = self.alpha_range
            if not lo <= alpha <= hi:
                raise ValueError(f"alpha {alpha} outside [{lo}, {hi}] degrees")
            out["lift"] = 0.11 * alpha
            out["drag"] = 0.01 + 0.002 * alpha * alpha
        if "x" in point and "y" in point:
            x, y = float(point["x"]), float(point["y"])
            lo, hi = self.xy_range
            if not (lo <= x <= hi and lo <= y <= hi):
                raise ValueError(f"point ({x}, {y}) outside [{lo}, {hi}]^2")
            out["f"] = math.exp(-x * x - y * y) + 0.3 * x * y
        if not out:
            raise ValueError(f"no evaluable parameters among {sorted(point)}")
        return out


def kernel_point(study: Study, desc: Optional[Description] = None) -> dict[str, float]:
    """Gather numeric solver parameters from the study context."""
    point: dict[str, float] = {}
    for d in model.closure(study.root):
        cdef = study.registry.classes[d.class_name]
        for name in ("alpha", "mach", "reynolds", "x", "y"):
            if name in cdef.attributes and name not in point:
                value = get_or_deft(d, name)
                if value is not UNDEFINED:
                    point[name] = float(value)
    return point


# -- boot dispatch ---------------------------------------------------------


@dataclass
class BootRegistry:
    """View over the study's bootable descriptions and the token holder."""

    study: Study

    @property
    def creation_order(self) -> list[str]:
        return list(self.study.boot_order)

    @property
    def current(self) -> Optional[str]:
        if self.study.boot_current is not None:
            return self.study.boot_current
        return self.study.boot_order[-1] if self.study.boot_order else None


def set_boot_objt(study: Study, desc: Description):
    """Pass the compute token to ``desc`` (class must be bootable)."""
    cdef = study.registry.class_def(desc.class_name)
    if not cdef.bootable:
        raise DiagnosticError(error(
            f"class {desc.class_name!r} is not bootable",
            [f"cannot pass the compute token to {desc.ident!r}"],
            "declare the class in the bootable metadata", code="not-bootable",
        ))
    if desc.ident not in study.boot_order:
        study.boot_order.append(desc.ident)
    study.boot_current = desc.ident


def boot_object(study: Study) -> Description:
    current = BootRegistry(study).current
    if current is None:
        raise DiagnosticError(error(
            "no bootable description exists",
            ["compute() dispatches root -> boot object"],
            "create a bootable description (e.g. cfdpb) first", code="no-boot-object",
        ))
    ctx = study.resolve(current)
    assert isinstance(ctx, Description)
    return ctx


def compute(study: Study, args: Sequence = (), target: Optional[str] = None) -> Any:
    """Run the compute procedure of the target or current boot object."""
    desc = study.resolve(target) if target else boot_object(study)
    if not isinstance(desc, Description):
        raise DiagnosticError(error(
            f"{target!r} is not a description", [], "compute on a description",
            code="bad-compute-target",
        ))
    procedure = study.variables.get("_procedures", {}).get(desc.class_name) \
        or PROCEDURES.get(desc.class_name)
    if procedure is None:
        raise DiagnosticError(error(
            f"class {desc.class_name!r} has no compute procedure",
            [f"boot object: {desc.ident!r}"],
            "register a product contributing the procedure", code="no-procedure",
        ))
    result = procedure(study, desc, tuple(args))
    study.compute_results.append(result)
    return result


def extract(study: Study, target: Optional[str] = None) -> dict[str, float]:
    """Evaluate the configured observables at the current context point."""
    kernel = study.kernel or ToyKernel()
    observables = kernel.evaluate(kernel_point(study))
    out: dict[str, float] = {}
    for desc in model.closure(study.root):
        if desc.class_name != "extractor":
            continue
        quantity = get_or_deft(desc, "quantity")
        if quantity is UNDEFINED:
            continue
        if quantity not in observables:
            raise DiagnosticError(error(
                f"kernel provides no observable {quantity!r}",
                [f"available: {', '.join(sorted(observables))}"],
                "fix the extractor's quantity", code="unknown-observable",
            ))
        out[quantity] = observables[quantity]
        target_file = get_or_deft(desc, "target_file")
        if target_file is not UNDEFINED:
            with open(target_file, "w", encoding="utf-8") as fh:
                fh.write(f"{quantity} = {observables[quantity]!r}\n")
    study.compute_results.append({"procedure": "extract", "observables": out})
    return out


def run_pending(study: Study) -> list[Any]:
    """Execute pending compute/extract operations in recorded order."""
    results = []
    for op in _pending_ops(study.root):
        if op.op == "compute":
            result = compute(study, op.args, op.target)
        else:
            result = extract(study, op.target)
        if op.result_name:
            study.variables[op.result_name] = result
        results.append(result)
    return results


def _pending_ops(script: model.Script) -> list[PendingOp]:
    ops = list(script.pending_ops)
    for child in script.children:
        if isinstance(child, model.Script):
            ops.extend(_pending_ops(child))
    return ops


def provide(study: Study, class_name: str, ident: str) -> Description:
    """The named description, created on first call; blindly callable."""
    existing = study.ident_index.get(ident)
    if existing is not None:
        if not isinstance(existing, Description) or existing.class_name != class_name:
            raise DiagnosticError(error(
                f"identifier {ident!r} already names {existing!r}",
                [f"provide() asked for class {class_name!r}"],
                "pick another identifier or class", code="class-conflict",
            ))
        return existing
    return model.create_description(study, class_name, ident)


# -- target lift -------------------------------------------------------------


def target_lift_compute(tcl: Description, lifts: Sequence[float]) -> tuple[float, ...]:
    """Angles of attack matching the requested lift values, by bisection.

    ``tcl`` must be attached to an extractor designating the kernel's
    lift observable.
    """
    study = tcl.study
    kernel = study.kernel or ToyKernel()
    extractor = None
    for ident in tcl.attachments:
        ctx = study.resolve(ident)
        if isinstance(ctx, Description) and ctx.class_name == "extractor":
            if get_or_deft(ctx, "quantity") == "lift":
                extractor = ctx
                break
    if extractor is None:
        raise DiagnosticError(error(
            f"{tcl.ident!r} has no attached lift extractor",
            ["target lift needs the observable to drive"],
            "attach(extractor with quantity='lift')", code="no-extractor",
        ))
    tolerance = get_or_deft(tcl, "tolerance")
    budget = get_or_deft(tcl, "max_iterations")
    tolerance = 1e-6 if tolerance is UNDEFINED else float(tolerance)
    budget = 200 if budget is UNDEFINED else int(budget)

    lo, hi = kernel.alpha_range
    lift_lo = kernel.evaluate({"alpha": lo})["lift"]
    lift_hi = kernel.evaluate({"alpha": hi})["lift"]

    alphas = []
    for target in lifts:
        target = float(target)
        low, high = min(lift_lo, lift_hi), max(lift_lo, lift_hi)
        if not low <= target <= high:
            raise DiagnosticError(error(
                f"lift target {target} is unreachable",
                [f"attainable range: [{low}, {high}]"],
                "request a lift inside the attainable range", code="unreachable-target",
            ))
        a_lo, a_hi = lo, hi
        f_lo = lift_lo - target
        alpha = a_lo
        converged = False
        for _ in range(budget):
            alpha = 0.5 * (a_lo + a_hi)
            f_mid = kernel.evaluate({"alpha": alpha})["lift"] - target
            if abs(f_mid) <= tolerance:
                converged = True
                break
            if (f_lo <= 0) == (f_mid <= 0):
                a_lo, f_lo = alpha, f_mid
            else:
                a_hi = alpha
        if not converged:
            raise DiagnosticError(error(
                f"target lift {target} did not converge within {budget} iterations",
                [f"tolerance: {tolerance}"],
                "raise max_iterations or loosen tolerance", code="non-convergence",
            ))
        alphas.append(alpha)
    return tuple(alphas)


# -- compute procedures -------------------------------------------------------


def _toy_cfd_compute(study: Study, desc: Description, args: tuple) -> dict:
    kernel = study.kernel or ToyKernel()
    result: dict[str, Any] = {"procedure": "cfdpb.compute", "boot": desc.ident}
    point = kernel_point(study, desc)
    if point:
        result["point"] = point
        result["observables"] = kernel.evaluate(point)
    return result


def _sfd_stub_compute(study: Study, desc: Description, args: tuple) -> dict:
    kernel = study.kernel or ToyKernel()
    result: dict[str, Any] = {"procedure": "sfd.compute", "boot": desc.ident}
    point = kernel_point(study, desc)
    if point:
        # deterministic stabilization stub: damp the raw observables
        chi = get_or_deft(desc, "chi")
        damping = 1.0 / (1.0 + (0.0 if chi is UNDEFINED else float(chi)) * 1e-6)
        raw = kernel.evaluate(point)
        result["point"] = point
        result["observables"] = {k: v * damping for k, v in raw.items()}
    return result


def _dmd_stub_compute(study: Study, desc: Description, args: tuple) -> dict:
    kernel = study.kernel or ToyKernel()
    result: dict[str, Any] = {"procedure": "dmd.compute", "boot": desc.ident}
    point = kernel_point(study, desc)
    if point:
        modes = get_or_deft(desc, "nb_modes")
        modes = 10 if modes is UNDEFINED else int(modes)
        raw = kernel.evaluate(point)
        result["point"] = point
        result["observables"] = {k: v * (1.0 + 1e-9 * modes) for k, v in raw.items()}
    return result


def _target_lift_procedure(study: Study, desc: Description, args: tuple) -> tuple[float, ...]:
    lifts = args[0] if args else ()
    if not isinstance(lifts, (tuple, list)):
        raise DiagnosticError(error(
            "target lift compute() expects a list of lift values",
            [f"got {lifts!r}"], "compute([0.05, 0.10, 0.15])", code="bad-argument",
        ))
    return target_lift_compute(desc, tuple(float(v) for v in lifts))


def _sparse_poly_procedure(study: Study, desc: Description, args: tuple) -> dict:
    from . import spi
    kernel = study.kernel or ToyKernel()
    observable = get_or_deft(desc, "observable")
    observable = "f" if observable is UNDEFINED else str(observable)
    bounds = (
        (float(get_or_deft(desc, "x_min")), float(get_or_deft(desc, "x_max"))),
        (float(get_or_deft(desc, "y_min")), float(get_or_deft(desc, "y_max"))),
    )
    tolerance = float(get_or_deft(desc, "tolerance"))
    budget = int(get_or_deft(desc, "budget"))

    def provider(points):
        return [kernel.evaluate({"x": p[0], "y": p[1]})[observable] for p in points]

    surrogate, report = spi.discover(bounds, provider, tol=tolerance,
                                     budget=budget, observable=observable)
    return {
        "procedure": "sparse_poly.compute",
        "boot": desc.ident,
        "samples": report.samples,
        "iterations": len(report.steps),
        "converged": report.converged,
        "surrogate": surrogate,
    }


PROCEDURES: dict[str, Callable[[Study, Description, tuple], Any]] = {
    "cfdpb": _toy_cfd_compute,
    "sfd": _sfd_stub_compute,
    "dmd": _dmd_stub_compute,
    "target_lift": _target_lift_procedure,
    "sparse_poly": _sparse_poly_procedure,
}


# -- products ------------------------------------------------------------------


@dataclass
class ProductSpec:
    """Declarative extension: classes, rules, and a compute entry."""

    name: str
    static_doc: dict = field(default_factory=dict)
    rules_doc: dict = field(default_factory=dict)
    entries: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_text(cls, text: str) -> "ProductSpec":
        doc = parse_document(text)
        name = doc.get("product")
        if not isinstance(name, str):
            raise DiagnosticError(error(
                "product manifest needs a product = '<name>' block", [],
                "see the shipped product manifests", code="bad-manifest",
            ))
        static_keys = ("static_defs", "required", "obsolete", "filterable",
                       "undocumented", "inherits", "bootable")
        rule_keys = ("depend", "influence", "context_default", "always_required")
        static_doc = {k: doc[k] for k in static_keys if k in doc}
        rules_doc = {k: doc[k] for k in rule_keys if k in doc}
        entries = doc.get("entry", {})
        if not isinstance(entries, dict):
            raise DiagnosticError(error(
                "entry block must map class names to procedure names", [],
                "entry = {'sfd': 'sfd_stub'}", code="bad-manifest",
            ))
        return cls(name, static_doc, rules_doc, dict(entries))


def register_product(study: Study, spec: ProductSpec):
    """Merge a product's classes and rules into the study, atomically.

    On any failure (name collision, rule cycle) the study is unchanged.
    """
    registered = study.variables.setdefault("_products", set())
    if spec.name in registered:
        raise DiagnosticError(error(
            f"product {spec.name!r} is already registered", [],
            "products register once", code="duplicate-product",
        ))
    new_classes = spec.static_doc.get("static_defs", {})
    for class_name in new_classes:
        if class_name in study.registry.classes:
            raise DiagnosticError(error(
                f"product class {class_name!r} collides with a registered class",
                [f"product: {spec.name}"],
                "rename the product class", code="class-collision",
            ))
    merged_doc = to_document(study.registry)
    merged_doc.setdefault("static_defs", {})
    for key, block in spec.static_doc.items():
        if key == "static_defs":
            merged_doc["static_defs"] = {**merged_doc["static_defs"], **block}
        elif key == "bootable":
            merged_doc["bootable"] = tuple(merged_doc.get("bootable", ())) + tuple(block)
        else:
            merged_doc[key] = {**merged_doc.get(key, {}), **block}
    try:
        new_registry = finalize(load_static_defs(merged_doc))
        product_rules = load_rule_defs(spec.rules_doc, new_registry)
        base_rules = study.ruleset or RuleSet()
        new_ruleset = base_rules.merged(product_rules, new_registry)
    except (registry_mod.RegistryError, rules_mod.RuleError) as exc:
        raise DiagnosticError(error(
            f"product {spec.name!r} rejected",
            [str(exc)], "fix the product manifest; no partial merge happened",
            code="product-rejected",
        )) from exc
    for class_name, proc_name in spec.entries.items():
        if proc_name not in _PROCEDURE_NAMES:
            raise DiagnosticError(error(
                f"product {spec.name!r} names unknown procedure {proc_name!r}",
                [f"compiled procedures: {', '.join(sorted(_PROCEDURE_NAMES))}"],
                "ship the procedure in the engine first", code="unknown-procedure",
            ))
    study.registry = new_registry
    study.ruleset = new_ruleset
    procedures = study.variables.setdefault("_procedures", {})
    for class_name, proc_name in spec.entries.items():
        procedures[class_name] = _PROCEDURE_NAMES[proc_name]
    registered.add(spec.name)


_PROCEDURE_NAMES: dict[str, Callable] = {
    "toy_cfd": _toy_cfd_compute,
    "sfd_stub": _sfd_stub_compute,
    "dmd_stub": _dmd_stub_compute,
    "target_lift": _target_lift_procedure,
    "sparse_poly_discover": _sparse_poly_procedure,
}
