"""Adaptive sparse polynomial interpolation for DoE discovery.

Nested Clenshaw-Curtis node family on [-1, 1]: level 0 is the single
node {0}; level l >= 1 holds the 2^l + 1 extrema cos(k*pi/2^l).  The
construction keeps nesting bitwise exact, so samples are shared across
levels.

The surrogate is a hierarchical-surplus expansion over a downward-closed
multi-index set: admitting index lambda adds the tensor product of the
per-dimension new-node sets, and each new node x carries the surplus
f(x) - I(x) against the surrogate so far.  Because contributions of
indices not componentwise below lambda vanish at lambda's nodes, the
surpluses are independent of admission order, and the expansion
interpolates every sampled node.

Discovery starts from the level-one tensor block (so all 2^d domain
summits are sampled, corners first) and then greedily admits the
admissible forward neighbor with the largest error indicator (the sum
of |surplus| over its new nodes) until the indicator drops below the
tolerance or the sample budget is spent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .diagnostics import DiagnosticError, error
from .notation import dumps_document, parse_document

_MAX_LEVEL = 14


def cc_nodes(level: int) -> np.ndarray:
    """Clenshaw-Curtis nodes of one level, ascending, bitwise nested."""
    if level < 0:
        raise ValueError("level must be >= 0")
    if level > _MAX_LEVEL:
        raise ValueError(f"level {level} exceeds the cap {_MAX_LEVEL}")
    if level == 0:
        return np.array([0.0])
    n = 2 ** level
    values = np.empty(n + 1)
    for k in range(n + 1):
        if 2 * k == n:
            values[k] = 0.0
        elif 2 * k < n:
            values[k] = -math.cos(math.pi * k / n)
        else:
            values[k] = math.cos(math.pi * (n - k) / n)
    return values


def cc_delta(level: int) -> list[tuple[int, float]]:
    """(index-in-level-grid, value) of the nodes new at this level."""
    nodes = cc_nodes(level)
    if level == 0:
        return [(0, 0.0)]
    if level == 1:
        return [(0, nodes[0]), (2, nodes[2])]
    return [(k, nodes[k]) for k in range(1, len(nodes), 2)]


def _barycentric_weights(level: int) -> np.ndarray:
    n = 2 ** level if level > 0 else 0
    if level == 0:
        return np.array([1.0])
    w = np.ones(n + 1)
    w[1::2] = -1.0
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def cardinal_values(level: int, t: float) -> np.ndarray:
    """All Lagrange cardinal polynomials of one level grid at ``t``."""
    nodes = cc_nodes(level)
    exact = np.nonzero(nodes == t)[0]
    out = np.zeros(len(nodes))
    if exact.size:
        out[exact[0]] = 1.0
        return out
    w = _barycentric_weights(level)
    diff = t - nodes
    terms = w / diff
    return terms / terms.sum()


@dataclass
class _Entry:
    index: tuple[int, ...]
    grid_idx: np.ndarray    # (m, d) int indices into each level grid
    points: np.ndarray      # (m, d) node coordinates in [-1, 1]^d
    surpluses: np.ndarray   # (m,)

    @property
    def indicator(self) -> float:
        return float(np.abs(self.surpluses).sum())


@dataclass
class Surrogate:
    """Hierarchical-surplus sparse interpolant over a parameter box."""

    bounds: tuple[tuple[float, float], ...]
    observable: str = "f"
    entries: list[_Entry] = field(default_factory=list)

    @property
    def indices(self) -> list[tuple[int, ...]]:
        return [e.index for e in self.entries]

    @property
    def dim(self) -> int:
        return len(self.bounds)

    def sample_count(self) -> int:
        return sum(len(e.surpluses) for e in self.entries)

    def to_reference(self, point: Sequence[float]) -> tuple[float, ...]:
        z = []
        for value, (lo, hi) in zip(point, self.bounds):
            z.append(2.0 * (float(value) - lo) / (hi - lo) - 1.0)
        return tuple(z)

    def to_domain(self, z: Sequence[float]) -> tuple[float, ...]:
        out = []
        for value, (lo, hi) in zip(z, self.bounds):
            out.append(lo + 0.5 * (float(value) + 1.0) * (hi - lo))
        return tuple(out)

    def sample_points(self) -> list[tuple[float, ...]]:
        """Every sampled grid point, in domain coordinates."""
        out = []
        for entry in self.entries:
            for row in entry.points:
                out.append(self.to_domain(tuple(row)))
        return out

    def eval_reference(self, z: Sequence[float]) -> float:
        cards: list[dict[int, np.ndarray]] = [dict() for _ in range(self.dim)]
        total = 0.0
        for entry in self.entries:
            factors = np.ones(len(entry.surpluses))
            for i, level in enumerate(entry.index):
                card = cards[i].get(level)
                if card is None:
                    card = cardinal_values(level, float(z[i]))
                    cards[i][level] = card
                factors *= card[entry.grid_idx[:, i]]
            total += float(entry.surpluses @ factors)
        return total

    def __call__(self, point: Sequence[float]) -> float:
        return spi_eval(self, point)


def spi_eval(surrogate: Surrogate, point: Sequence[float]) -> float:
    """Surrogate value at a domain point (must lie inside the bounds)."""
    if len(point) != surrogate.dim:
        raise DiagnosticError(error(
            f"point has {len(point)} coordinates, surrogate expects {surrogate.dim}",
            [], "match the surrogate's parameter count", code="bad-point",
        ))
    for value, (lo, hi) in zip(point, surrogate.bounds):
        if not lo <= float(value) <= hi:
            raise DiagnosticError(error(
                f"point coordinate {value!r} outside [{lo}, {hi}]",
                ["the surrogate only interpolates inside its bounds"],
                "evaluate inside the domain", code="out-of-bounds",
            ))
    return surrogate.eval_reference(surrogate.to_reference(point))


@dataclass
class DiscoverReport:
    steps: list[tuple[tuple[int, ...], float, int]] = field(default_factory=list)
    samples: int = 0
    converged: bool = False

    def render(self) -> str:
        lines = [f"discover: {self.samples} samples, converged={self.converged}"]
        for index, indicator, samples in self.steps:
            lines.append(f"  admitted {index}: indicator={indicator:.3e} (samples={samples})")
        return "\n".join(lines)


class DiscoverError(DiagnosticError):
    """Provider failure during discovery; carries the partial surrogate."""

    def __init__(self, diagnostic, surrogate: Surrogate, report: DiscoverReport):
        super().__init__(diagnostic)
        self.surrogate = surrogate
        self.report = report


Provider = Callable[[Sequence[tuple[float, ...]]], Sequence[float]]


class _BudgetExhausted(Exception):
    pass


def _forward_neighbors(index: tuple[int, ...]) -> list[tuple[int, ...]]:
    out = []
    for i in range(len(index)):
        bumped = list(index)
        bumped[i] += 1
        out.append(tuple(bumped))
    return out


def _admissible(index: tuple[int, ...], admitted: set) -> bool:
    for i in range(len(index)):
        if index[i] == 0:
            continue
        lowered = list(index)
        lowered[i] -= 1
        if tuple(lowered) not in admitted:
            return False
    return True


def _delta_points(index: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Grid indices and coordinates of the nodes new for this index."""
    per_dim = [cc_delta(level) for level in index]
    counts = [len(d) for d in per_dim]
    m = int(np.prod(counts))
    grid_idx = np.zeros((m, len(index)), dtype=int)
    points = np.zeros((m, len(index)))
    for row, combo in enumerate(np.ndindex(*counts)):
        for i, j in enumerate(combo):
            grid_idx[row, i] = per_dim[i][j][0]
            points[row, i] = per_dim[i][j][1]
    return grid_idx, points


def discover(bounds: Sequence[tuple[float, float]], provider: Provider,
             tol: float, budget: Optional[int] = None,
             observable: str = "f") -> tuple[Surrogate, DiscoverReport]:
    """Adaptive DoE discovery; see the module docstring for the scheme."""
    bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
    for lo, hi in bounds:
        if not lo < hi:
            raise DiagnosticError(error(
                f"empty parameter range [{lo}, {hi}]", [],
                "give lo < hi bounds", code="bad-bounds",
            ))
    d = len(bounds)
    surrogate = Surrogate(bounds, observable)
    report = DiscoverReport()
    cache: dict[tuple[float, ...], float] = {}

    def fetch(z_points: list[tuple[float, ...]]):
        fresh = [z for z in z_points if z not in cache]
        if not fresh:
            return
        if budget is not None and len(cache) + len(fresh) > budget:
            raise _BudgetExhausted()
        domain_points = [surrogate.to_domain(z) for z in fresh]
        try:
            values = list(provider(domain_points))
        except Exception as exc:
            report.samples = len(cache)
            raise DiscoverError(error(
                "observable provider failed during discovery",
                [str(exc)], "the partial surrogate is attached to this error",
                code="provider-failure",
            ), surrogate, report) from exc
        if len(values) != len(fresh):
            report.samples = len(cache)
            raise DiscoverError(error(
                f"provider returned {len(values)} values for {len(fresh)} points",
                [], "the provider must answer point-for-point", code="provider-failure",
            ), surrogate, report)
        for z, value in zip(fresh, values):
            cache[z] = float(value)

    def admit(index: tuple[int, ...], grid_idx: np.ndarray, points: np.ndarray):
        surpluses = np.array([
            cache[tuple(row)] - surrogate.eval_reference(tuple(row)) for row in points
        ])
        surrogate.entries.append(_Entry(index, grid_idx, points, surpluses))

    # level-one tensor start: summit nodes first, then edges and center
    init = sorted(np.ndindex(*([2] * d)), key=lambda ix: (-sum(ix), ix))
    init = [tuple(ix) for ix in init]
    init_cells = {ix: _delta_points(ix) for ix in init}
    batch: list[tuple[float, ...]] = []
    for ix in init:
        batch.extend(tuple(row) for row in init_cells[ix][1])
    try:
        fetch(batch)
    except _BudgetExhausted:
        report.samples = len(cache)
        return surrogate, report
    for ix in sorted(init, key=lambda ix: (sum(ix), ix)):
        grid_idx, points = init_cells[ix]
        admit(ix, grid_idx, points)

    admitted = set(surrogate.indices)
    candidates: dict[tuple[int, ...], _Entry] = {}
    exhausted = False
    while True:
        fresh = []
        for index in sorted(admitted):
            for neighbor in _forward_neighbors(index):
                if neighbor in admitted or neighbor in candidates:
                    continue
                if max(neighbor) > _MAX_LEVEL:
                    continue
                if _admissible(neighbor, admitted):
                    fresh.append(neighbor)
        fresh = sorted(set(fresh))
        if fresh:
            cells = {ix: _delta_points(ix) for ix in fresh}
            level_batch: list[tuple[float, ...]] = []
            for ix in fresh:
                level_batch.extend(tuple(row) for row in cells[ix][1])
            try:
                fetch(level_batch)
            except _BudgetExhausted:
                exhausted = True
            else:
                for ix in fresh:
                    grid_idx, points = cells[ix]
                    surpluses = np.array([
                        cache[tuple(row)] - surrogate.eval_reference(tuple(row))
                        for row in points
                    ])
                    candidates[ix] = _Entry(ix, grid_idx, points, surpluses)
        if not candidates:
            report.converged = not exhausted
            break
        best = max(candidates, key=lambda ix: (candidates[ix].indicator, ix))
        best_indicator = candidates[best].indicator
        if best_indicator <= tol:
            report.converged = True
            break
        if exhausted:
            break
        entry = candidates.pop(best)
        surrogate.entries.append(entry)
        admitted.add(best)
        report.steps.append((best, best_indicator, len(cache)))
    report.samples = len(cache)
    return surrogate, report


# -- serialization ---------------------------------------------------------


def to_text(surrogate: Surrogate) -> str:
    doc = {
        "surrogate": {
            "observable": surrogate.observable,
            "bounds": tuple(tuple(b) for b in surrogate.bounds),
            "entries": tuple(
                {
                    "index": entry.index,
                    "grid_idx": tuple(tuple(int(v) for v in row) for row in entry.grid_idx),
                    "points": tuple(tuple(float(v) for v in row) for row in entry.points),
                    "surpluses": tuple(float(v) for v in entry.surpluses),
                }
                for entry in surrogate.entries
            ),
        }
    }
    return dumps_document(doc)


def from_text(text: str) -> Surrogate:
    doc = parse_document(text)
    body = doc.get("surrogate")
    if not isinstance(body, dict):
        raise DiagnosticError(error(
            "no surrogate block in the document", [],
            "load a file produced by to_text()", code="bad-surrogate",
        ))
    surrogate = Surrogate(tuple(tuple(b) for b in body["bounds"]), body["observable"])
    for raw in body["entries"]:
        index = tuple(int(v) for v in raw["index"])
        grid_idx = np.array([list(map(int, row)) for row in raw["grid_idx"]], dtype=int)
        points = np.array([list(map(float, row)) for row in raw["points"]])
        surpluses = np.array([float(v) for v in raw["surpluses"]])
        surrogate.entries.append(_Entry(index, grid_idx, points, surpluses))
    return surrogate


def save(surrogate: Surrogate, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_text(surrogate))


def load(path: str) -> Surrogate:
    with open(path, "r", encoding="utf-8") as fh:
        return from_text(fh.read())
