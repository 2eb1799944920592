"""Command-line driver.

``declsim run <script>`` loads and executes a script; option-triggered
calls fire on close() or natural termination: --check runs a contextual
check, --dump emits the canonical flat script, --strict checks before
any compute and escalates warnings.  --filter, --allow_obsolete and
--unlock toggle the corresponding study option bits.

Exit status: 0 clean, 1 with ERROR diagnostics, 2 usage or parse errors.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from . import build_study, doe, docgen, net, orchestrate, spi, store
from .diagnostics import DiagnosticError, Severity, format_diagnostic
from .model import StudyOptions, dump_context, load_script
from .notation import dumps_value, parse_value
from .registry import UNDEFINED

USAGE_ERROR = 2


def _add_study_args(parser: argparse.ArgumentParser):
    parser.add_argument("--defs", help="static definitions resource file")
    parser.add_argument("--rules", help="rule definitions resource file")
    parser.add_argument("--products", nargs="*", metavar="MANIFEST",
                        help="additional product manifest files")


def _make_study(args, options: Optional[StudyOptions] = None):
    defs_text = open(args.defs, encoding="utf-8").read() if args.defs else None
    rules_text = open(args.rules, encoding="utf-8").read() if args.rules else None
    # custom definitions take full control: shipped products reference
    # the shipped classes and only load alongside them
    shipped = ("sfd", "dmd", "sparse_poly", "target_lift") if defs_text is None else ()
    study = build_study(defs_text, rules_text, products=shipped, options=options)
    for path in args.products or ():
        spec = orchestrate.ProductSpec.from_text(open(path, encoding="utf-8").read())
        orchestrate.register_product(study, spec)
    return study


def _open_store(args, study=None, mode="execution") -> store.ScriptStore:
    study = study if study is not None else build_study()
    return store.ScriptStore(args.db, mode=mode, registry=study.registry,
                             ruleset=study.ruleset)


def cmd_run(args) -> int:
    options = StudyOptions(strict=args.strict, filter=args.filter,
                           allow_obsolete=args.allow_obsolete, unlock=args.unlock)
    study = _make_study(args, options)
    load_script(study, args.script)

    if args.strict:
        report = study.check(strict=True)
        print(report.render())
        if not report.status:
            print("strict check failed; compute() not invoked", file=sys.stderr)
            return 1
    if args.check:
        report = study.check()
        print(report.render())
        if not report.status:
            return 1
    if args.dump is not None:
        text = dump_context(study.root, args.dump or None)
        if not args.dump:
            sys.stdout.write(text)
    results = orchestrate.run_pending(study)
    for result in results:
        if isinstance(result, dict) and "procedure" in result:
            print(f"compute: {result['procedure']}")
        elif isinstance(result, tuple):
            print(f"compute: {dumps_value(result)}")
    return study.diag_log.exit_status()


def cmd_man(args) -> int:
    study = _make_study(args)
    print(docgen.man(study, args.topic))
    return 0


def cmd_db(args) -> int:
    if args.db_cmd == "search":
        db = _open_store(args, mode="definitions")
        predicate = []
        for term in args.term or ():
            parts = parse_value(term)
            predicate.append((parts[0], parts[1], parts[2]))
        for key in db.search(predicate):
            print(key)
        return 0
    if args.db_cmd == "clean":
        db = _open_store(args)
        db.clean()
        print("clean: all RUN jobs reset to NYS")
        return 0
    if args.db_cmd == "jobs":
        db = _open_store(args, mode="definitions")
        fails = db.failure_counts()
        for key, state in sorted(db.job_states().items()):
            suffix = f" (failures: {fails[key]})" if fails.get(key) else ""
            print(f"{key} {state.value}{suffix}")
        return 0
    if args.db_cmd == "catalog":
        db = _open_store(args, mode="definitions")
        view = db.view()
        print(f"view: {dumps_value(tuple(view.attrs) if view else ())}")
        for key, entry in sorted(db.catalog().items()):
            print(dumps_value(entry.to_value()))
        return 0
    if args.db_cmd == "load":
        db = _open_store(args, mode="definitions")
        sys.stdout.write(db.record_text(args.key))
        return 0
    raise AssertionError(args.db_cmd)


def cmd_serve(args) -> int:
    db = _open_store(args)
    server = net.serve(db, args.host, args.port)
    print(f"serving database {args.db} on {server.endpoint}")
    try:
        server._thread.join()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def cmd_span(args) -> int:
    study = build_study()
    db = store.ScriptStore(args.db, registry=study.registry, ruleset=study.ruleset)
    swarm = (doe.SwarmSpec(max_jobs=args.max_jobs) if args.max_jobs
             else doe.SwarmSpec(node_fraction=args.node_fraction))
    policy = None
    if args.weights:
        weights = {}
        for item in args.weights:
            name, _, value = item.partition("=")
            weights[name] = float(value)
        policy = doe.ChainPolicy.make(weights, args.max_jump or 1.0)
    result = doe.span(db, swarm, policy=policy)
    for key in sorted(result.observables):
        print(f"{key}: {dumps_value(result.observables[key])}")
    if result.failed:
        print(f"failed jobs: {', '.join(sorted(result.failed))}", file=sys.stderr)
        return 1
    return 0


def cmd_discover(args) -> int:
    kernel = orchestrate.ToyKernel()
    bounds = []
    names = []
    for spec in args.bounds:
        name, _, rng = spec.partition("=")
        lo, _, hi = rng.partition(":")
        names.append(name)
        bounds.append((float(lo), float(hi)))

    def provider(points):
        return [kernel.evaluate(dict(zip(names, p)))[args.observable] for p in points]

    surrogate, report = spi.discover(bounds, provider, tol=args.tol,
                                     budget=args.budget, observable=args.observable)
    print(report.render())
    if args.out:
        spi.save(surrogate, args.out)
        print(f"surrogate written to {args.out}")
    return 0 if report.converged else 1


def cmd_serve_ui(args) -> int:
    from . import service
    study = _make_study(args)
    if args.script:
        load_script(study, args.script)
    server = service.serve_ui(study, args.host, args.port, static_dir=args.static)
    print(f"interactive service on http://{server.endpoint}/")
    try:
        server._thread.join()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="declsim",
                                     description="declarative simulation-description engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="load and run a script")
    p_run.add_argument("script")
    p_run.add_argument("--check", action="store_true", help="check on close or natural end")
    p_run.add_argument("--dump", nargs="?", const="", metavar="PATH",
                       help="dump the canonical flat script (to PATH or stdout)")
    p_run.add_argument("--strict", action="store_true",
                       help="check before compute; warnings become errors")
    p_run.add_argument("--filter", action="store_true", help="drop filterable attributes")
    p_run.add_argument("--allow_obsolete", action="store_true",
                       help="accept obsolete attributes and values, with warnings")
    p_run.add_argument("--unlock", action="store_true", help="accept undocumented attributes")
    _add_study_args(p_run)
    p_run.set_defaults(func=cmd_run)

    p_man = sub.add_parser("man", help="compact documentation for a topic")
    p_man.add_argument("topic")
    _add_study_args(p_man)
    p_man.set_defaults(func=cmd_man)

    p_db = sub.add_parser("db", help="script database operations")
    db_sub = p_db.add_subparsers(dest="db_cmd", required=True)
    for name, extra in (("search", "term"), ("clean", None), ("jobs", None),
                        ("catalog", None), ("load", "key")):
        p = db_sub.add_parser(name)
        p.add_argument("--db", required=True, help="database directory")
        if extra == "term":
            p.add_argument("term", nargs="*",
                           help="predicate term, e.g. \"['model.phymod', '==', 'nslam']\"")
        elif extra == "key":
            p.add_argument("key")
        p.set_defaults(func=cmd_db)

    p_serve = sub.add_parser("serve", help="serve a database over TCP")
    p_serve.add_argument("--db", required=True)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=9217)
    p_serve.set_defaults(func=cmd_serve)

    p_span = sub.add_parser("span", help="execute pending database jobs")
    p_span.add_argument("--db", required=True)
    group = p_span.add_mutually_exclusive_group(required=True)
    group.add_argument("--max-jobs", type=int)
    group.add_argument("--node-fraction", type=float)
    p_span.add_argument("--weights", nargs="*", metavar="PARAM=W",
                        help="chaining metric weights")
    p_span.add_argument("--max-jump", type=float, help="maximal weighted hop length")
    p_span.set_defaults(func=cmd_span)

    p_disc = sub.add_parser("discover", help="adaptive experiment-space discovery")
    p_disc.add_argument("--bounds", nargs="+", required=True, metavar="PARAM=LO:HI")
    p_disc.add_argument("--tol", type=float, default=1e-4)
    p_disc.add_argument("--budget", type=int, default=400)
    p_disc.add_argument("--observable", default="f")
    p_disc.add_argument("--out", help="write the surrogate document here")
    p_disc.set_defaults(func=cmd_discover)

    p_ui = sub.add_parser("serve-ui", help="interactive HTTP service for the web editor")
    p_ui.add_argument("--script", help="script to preload")
    p_ui.add_argument("--host", default="127.0.0.1")
    p_ui.add_argument("--port", type=int, default=9218)
    p_ui.add_argument("--static", help="directory of web editor assets to serve")
    _add_study_args(p_ui)
    p_ui.set_defaults(func=cmd_serve_ui)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except DiagnosticError as exc:
        print(format_diagnostic(exc.diagnostic), file=sys.stderr)
        return USAGE_ERROR if exc.diagnostic.code == "script-parse" else 1
    except OSError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
