"""Script database: keyed records, catalog views, job states, locking.

Directory layout (all text UTF-8)::

    <root>/records/<key>   one record per script: digest header + dump text
    <root>/catalog         line 1: declared view; then one entry per line
    <root>/jobs            one line per job: <key> <STATE> <failures>
    <root>/LOCK            advisory lock file for read-write access

A store opens in ``execution`` (read-write, locked) or ``definitions``
(read-only, lock-free) mode, so several processes on a shared
filesystem can cooperate: claims are atomic compare-and-set NYS->RUN
transitions under the lock.
"""

from __future__ import annotations

import enum
import fcntl
import hashlib
import os
import time
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence, Union

from . import model
from .diagnostics import DiagnosticError, error
from .notation import dumps_value, parse_value
from .registry import UNDEFINED, ClassRegistry
from .rules import RuleSet, get_or_deft


class StoreError(DiagnosticError):
    pass


def _store_error(headline, detail=(), suggestion="", code="store"):
    return StoreError(error(headline, detail, suggestion, code=code))


class JobState(enum.Enum):
    NYS = "NYS"   # not yet started
    RUN = "RUN"
    CMP = "CMP"   # completed


# clean() additionally resets RUN back to NYS (crash recovery), as does
# the failure-return path used by the spanning automaton.
_LEGAL_TRANSITIONS = {
    (JobState.NYS, JobState.RUN),
    (JobState.RUN, JobState.CMP),
}


@dataclass(frozen=True)
class ViewSpec:
    """Catalog view: the class-qualified attribute paths of interest."""

    attrs: tuple[str, ...]

    def __post_init__(self):
        if not self.attrs:
            raise _store_error("a view must name at least one attribute path",
                               [], "declare_view(['model.phymod', ...])", code="empty-view")


@dataclass
class CatalogEntry:
    key: str
    values: dict[str, Any] = field(default_factory=dict)
    tags: dict[str, Any] = field(default_factory=dict)

    def to_value(self) -> dict:
        values = {k: (None if v is UNDEFINED else v) for k, v in self.values.items()}
        return {"key": self.key, "values": values, "tags": self.tags}

    @classmethod
    def from_value(cls, value: dict) -> "CatalogEntry":
        return cls(value["key"], dict(value.get("values", {})), dict(value.get("tags", {})))


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class _FileLock:
    """Advisory exclusive lock with timeout, usable across processes and
    threads (each acquisition opens its own descriptor)."""

    def __init__(self, path: str, timeout: float):
        self.path = path
        self.timeout = timeout
        self._fd: Optional[int] = None

    def __enter__(self):
        deadline = time.monotonic() + self.timeout
        fd = os.open(self.path, os.O_RDWR | os.O_CREAT, 0o644)
        while True:
            try:
                fcntl.flock(fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
                self._fd = fd
                return self
            except BlockingIOError:
                if time.monotonic() >= deadline:
                    os.close(fd)
                    raise _store_error(
                        f"lock acquisition timed out after {self.timeout:.1f}s",
                        [f"lock file: {self.path}"],
                        "retry, or raise the lock timeout", code="lock-timeout",
                    ) from None
                time.sleep(0.005)

    def __exit__(self, *exc):
        if self._fd is not None:
            fcntl.flock(self._fd, fcntl.LOCK_UN)
            os.close(self._fd)
            self._fd = None


class ScriptStore:
    """One database directory; see the module docstring for the layout."""

    def __init__(self, root: str, mode: str = "execution",
                 registry: Optional[ClassRegistry] = None,
                 ruleset: Optional[RuleSet] = None,
                 lock_timeout: float = 30.0):
        if mode not in ("execution", "definitions"):
            raise _store_error(f"unknown store mode {mode!r}", [],
                               "use 'execution' or 'definitions'", code="bad-mode")
        self.root = os.path.abspath(root)
        self.mode = mode
        self.registry = registry
        self.ruleset = ruleset
        self.lock_timeout = lock_timeout
        self.records_dir = os.path.join(self.root, "records")
        self.catalog_path = os.path.join(self.root, "catalog")
        self.jobs_path = os.path.join(self.root, "jobs")
        self.lock_path = os.path.join(self.root, "LOCK")
        if mode == "execution":
            os.makedirs(self.records_dir, exist_ok=True)
            for path in (self.catalog_path, self.jobs_path, self.lock_path):
                if not os.path.exists(path):
                    with open(path, "a", encoding="utf-8"):
                        pass
        elif not os.path.isdir(self.records_dir):
            raise _store_error(
                f"no database at {self.root!r}", [],
                "open in execution mode to initialize one", code="missing-db",
            )

    # -- locking -----------------------------------------------------

    def _lock(self) -> _FileLock:
        self._require_writable()
        return _FileLock(self.lock_path, self.lock_timeout)

    def _require_writable(self):
        if self.mode != "execution":
            raise _store_error(
                "definitions databases are read-only",
                [f"database: {self.root}"],
                "open the database in execution mode", code="read-only",
            )

    # -- view and catalog ---------------------------------------------

    def declare_view(self, attrs: Sequence[str]) -> ViewSpec:
        view = ViewSpec(tuple(attrs))
        self._require_writable()
        with self._lock():
            entries = self._read_catalog()[1]
            self._write_catalog(view, entries)
        return view

    def view(self) -> Optional[ViewSpec]:
        return self._read_catalog()[0]

    def _read_catalog(self) -> tuple[Optional[ViewSpec], dict[str, CatalogEntry]]:
        try:
            with open(self.catalog_path, "r", encoding="utf-8") as fh:
                lines = [line for line in fh.read().splitlines() if line.strip()]
        except OSError:
            return None, {}
        if not lines:
            return None, {}
        view_value = parse_value(lines[0])
        view = ViewSpec(tuple(view_value)) if view_value else None
        entries: dict[str, CatalogEntry] = {}
        for line in lines[1:]:
            entry = CatalogEntry.from_value(parse_value(line))
            entries[entry.key] = entry
        return view, entries

    def _write_catalog(self, view: Optional[ViewSpec], entries: dict[str, CatalogEntry]):
        lines = [dumps_value(tuple(view.attrs) if view else ())]
        for key in sorted(entries):
            lines.append(dumps_value(entries[key].to_value()))
        _atomic_write(self.catalog_path, "\n".join(lines) + "\n")

    def catalog(self) -> dict[str, CatalogEntry]:
        return self._read_catalog()[1]

    def tag(self, key: str, tags: dict):
        """Merge traceability tags into a catalog entry."""
        with self._lock():
            view, entries = self._read_catalog()
            if key not in entries:
                raise _store_error(f"unknown key {key!r}", [], "dump the script first",
                                   code="unknown-key")
            entries[key].tags.update(tags)
            self._write_catalog(view, entries)

    # -- records -------------------------------------------------------

    def keys(self) -> list[str]:
        try:
            return sorted(os.listdir(self.records_dir))
        except OSError:
            return []

    def _record_path(self, key: str) -> str:
        if not key or os.sep in key or key.startswith("."):
            raise _store_error(f"invalid record key {key!r}", [],
                               "keys are script identifiers", code="bad-key")
        return os.path.join(self.records_dir, key)

    def dump(self, script: model.Script, view: Optional[ViewSpec] = None) -> str:
        """Serialize a script; recompute its catalog entry; init job NYS.

        Pending operations ride along in the canonical dump text, so a
        later load re-creates them unexecuted.
        """
        self._require_writable()
        text = model.dump_context(script)
        key = script.ident
        with self._lock():
            stored_view, entries = self._read_catalog()
            the_view = view or stored_view
            if the_view is None:
                raise _store_error(
                    "a view must be declared before cataloging", [],
                    "declare_view(['model.phymod', ...])", code="view-undeclared",
                )
            record = f"#digest: {_digest(text)}\n{text}"
            _atomic_write(self._record_path(key), record)
            entries[key] = CatalogEntry(key, self._view_values(script, the_view))
            self._write_catalog(the_view if view else stored_view, entries)
            jobs = self._read_jobs()
            if key not in jobs:
                jobs[key] = (JobState.NYS, 0)
                self._write_jobs(jobs)
        return key

    def _view_values(self, script: model.Script, view: ViewSpec) -> dict[str, Any]:
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

    def load(self, key: str) -> model.Script:
        """Re-create the script (pending operations intact) in a fresh study."""
        path = self._record_path(key)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                record = fh.read()
        except OSError:
            close = difflib_close(key, self.keys())
            raise _store_error(
                f"unknown key {key!r}",
                [f"nearest keys: {', '.join(close)}" if close else "database is empty"],
                "run a search over the catalog", code="unknown-key",
            ) from None
        header, _, text = record.partition("\n")
        if not header.startswith("#digest: "):
            raise _store_error(f"record {key!r} has no digest header", [],
                               "re-dump the script", code="corrupt-record")
        if header[len("#digest: "):] != _digest(text):
            raise _store_error(
                f"record {key!r} is corrupt (digest mismatch)",
                [f"file: {path}"], "re-dump the script", code="corrupt-record",
            )
        if self.registry is None:
            raise _store_error("store has no registry to rebuild scripts", [],
                               "open the store with registry= and ruleset=", code="no-registry")
        study = model.Study(self.registry, self.ruleset)
        return model.load_script_text(study, text, ident=key)

    def record_text(self, key: str) -> str:
        """Raw dump text of a record (digest verified)."""
        path = self._record_path(key)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                record = fh.read()
        except OSError:
            raise _store_error(f"unknown key {key!r}", [], "check the catalog",
                               code="unknown-key") from None
        header, _, text = record.partition("\n")
        if header[len("#digest: "):] != _digest(text):
            raise _store_error(f"record {key!r} is corrupt (digest mismatch)", [],
                               "re-dump the script", code="corrupt-record")
        return text

    def store_text(self, key: str, text: str, view_values: Optional[dict] = None) -> str:
        """Store a pre-rendered dump text under a key (network path)."""
        self._require_writable()
        with self._lock():
            stored_view, entries = self._read_catalog()
            record = f"#digest: {_digest(text)}\n{text}"
            _atomic_write(self._record_path(key), record)
            entries[key] = CatalogEntry(key, dict(view_values or {}))
            self._write_catalog(stored_view, entries)
            jobs = self._read_jobs()
            if key not in jobs:
                jobs[key] = (JobState.NYS, 0)
                self._write_jobs(jobs)
        return key

    # -- search ---------------------------------------------------------

    def search(self, predicate: Sequence[tuple]) -> list[str]:
        """Keys whose catalog entries satisfy every (path, op, value) term.

        Only '==' is the historically attested comparator; '!=', '<',
        '<=', '>', '>=' and '~' (anchored regex on strings) ship as
        extensions.  An empty predicate matches every key.
        """
        view, entries = self._read_catalog()
        declared = set(view.attrs) if view else set()
        for path, _op, _value in predicate:
            if path not in declared:
                raise _store_error(
                    f"path {path!r} is outside the declared view",
                    [f"declared: {', '.join(sorted(declared)) or 'none'}"],
                    "extend the view and re-catalog the scripts", code="path-outside-view",
                )
        out = []
        for key in sorted(entries):
            if all(_term_holds(entries[key].values.get(path), op, value)
                   for path, op, value in predicate):
                out.append(key)
        return out

    # -- job automaton ----------------------------------------------------

    def _read_jobs(self) -> dict[str, tuple[JobState, int]]:
        jobs: dict[str, tuple[JobState, int]] = {}
        try:
            with open(self.jobs_path, "r", encoding="utf-8") as fh:
                for line in fh.read().splitlines():
                    if not line.strip():
                        continue
                    key, state, fails = line.split()
                    jobs[key] = (JobState(state), int(fails))
        except OSError:
            pass
        return jobs

    def _write_jobs(self, jobs: dict[str, tuple[JobState, int]]):
        lines = [f"{key} {state.value} {fails}" for key, (state, fails) in sorted(jobs.items())]
        _atomic_write(self.jobs_path, "\n".join(lines) + ("\n" if lines else ""))

    def job_states(self) -> dict[str, JobState]:
        return {key: state for key, (state, _f) in self._read_jobs().items()}

    def failure_counts(self) -> dict[str, int]:
        return {key: fails for key, (_s, fails) in self._read_jobs().items()}

    def set_job_state(self, key: str, state: JobState):
        with self._lock():
            jobs = self._read_jobs()
            if key not in jobs:
                raise _store_error(f"unknown job {key!r}", [], "dump the script first",
                                   code="unknown-key")
            current, fails = jobs[key]
            if (current, state) not in _LEGAL_TRANSITIONS:
                raise _store_error(
                    f"illegal job transition {current.value} -> {state.value} for {key!r}",
                    ["legal: NYS->RUN, RUN->CMP, RUN->NYS via clean()"],
                    "use clean() to reset RUN jobs", code="illegal-transition",
                )
            jobs[key] = (state, fails)
            self._write_jobs(jobs)

    def claim(self, key: str) -> bool:
        """Atomic NYS->RUN compare-and-set; False when already taken."""
        with self._lock():
            jobs = self._read_jobs()
            if key not in jobs:
                raise _store_error(f"unknown job {key!r}", [], "dump the script first",
                                   code="unknown-key")
            state, fails = jobs[key]
            if state is not JobState.NYS:
                return False
            jobs[key] = (JobState.RUN, fails)
            self._write_jobs(jobs)
            return True

    def complete(self, key: str):
        self.set_job_state(key, JobState.CMP)

    def record_failure(self, key: str) -> int:
        """Failure-return path: RUN -> NYS with the failure count bumped."""
        with self._lock():
            jobs = self._read_jobs()
            if key not in jobs:
                raise _store_error(f"unknown job {key!r}", [], "dump the script first",
                                   code="unknown-key")
            state, fails = jobs[key]
            if state is not JobState.RUN:
                raise _store_error(
                    f"cannot record a failure for {key!r} in state {state.value}",
                    [], "failures apply to running jobs", code="illegal-transition",
                )
            jobs[key] = (JobState.NYS, fails + 1)
            self._write_jobs(jobs)
            return fails + 1

    def clean(self):
        """Reset every RUN job to NYS (idempotent crash recovery)."""
        with self._lock():
            jobs = self._read_jobs()
            for key, (state, fails) in jobs.items():
                if state is JobState.RUN:
                    jobs[key] = (JobState.NYS, fails)
            self._write_jobs(jobs)


def _term_holds(stored: Any, op: str, wanted: Any) -> bool:
    if stored is None or stored is UNDEFINED:
        return False
    if op == "==":
        return stored == wanted
    if op == "!=":
        return stored != wanted
    if op == "~":
        import re
        return isinstance(stored, str) and re.fullmatch(str(wanted), stored) is not None
    try:
        if op == "<":
            return stored < wanted
        if op == "<=":
            return stored <= wanted
        if op == ">":
            return stored > wanted
        if op == ">=":
            return stored >= wanted
    except TypeError:
        return False
    raise _store_error(f"unknown comparator {op!r}", [],
                       "use ==, !=, <, <=, >, >= or ~", code="bad-comparator")


def difflib_close(key: str, keys: Sequence[str]) -> list[str]:
    import difflib
    return difflib.get_close_matches(key, list(keys), n=3)


def _atomic_write(path: str, text: str):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


# spec-facing aliases

def db_dump(db: ScriptStore, script: model.Script, view: Optional[ViewSpec] = None) -> str:
    return db.dump(script, view)


def db_load(db: ScriptStore, key: str) -> model.Script:
    return db.load(key)


def search(db: ScriptStore, predicate: Sequence[tuple]) -> list[str]:
    return db.search(predicate)


def set_job_state(db: ScriptStore, key: str, state: JobState):
    db.set_job_state(key, state)


def clean(db: ScriptStore):
    db.clean()
