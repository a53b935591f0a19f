"""Exhaustive schedule search.

``exact_global`` walks every request permutation and every model assignment;
``exact_grouped`` walks orderings of whole groups with one model per group.
Permutations come out of :func:`itertools.permutations` in lexicographic
order; for each one all model assignments are scored at once with numpy.
The first maximiser in (permutation, assignment) order wins ties.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Optional, Sequence

import numpy as np

from . import scoring
from .core import (
    SNEAKPEEK,
    AccuracySource,
    Application,
    Entry,
    LatencyMode,
    Request,
    Schedule,
    model_accuracy,
)
from .errors import BudgetExceeded

TIE_EPS = 1e-12
_NO_MODEL = -2
_OFF_DEVICE = -1


@dataclass(frozen=True)
class OracleBudget:
    max_candidates: int = 2_000_000


class OracleResult(NamedTuple):
    schedule: Schedule
    utility: float
    candidates: int


class _Table:
    """Per-request candidate attributes, indexed [request][choice]."""

    def __init__(self, requests, apps, accuracy_source, thetas, penalty, origin):
        self.requests = list(requests)
        self.refs, self.acc, self.infer, self.swap, self.key = [], [], [], [], []
        self.budget, self.offset, self.penalty = [], [], []
        keys: dict = {}
        for r in self.requests:
            app: Application = apps[r.app_id]
            refs = app.model_refs()
            self.refs.append(refs)
            self.acc.append(np.array([model_accuracy(r, app, m, accuracy_source, thetas) for m in refs]))
            profs = [app.profile(m) for m in refs]
            self.infer.append(np.array([p.infer_latency for p in profs]))
            self.swap.append(np.array([p.swap_latency for p in profs]))
            self.key.append(
                np.array([_OFF_DEVICE if m is SNEAKPEEK else keys.setdefault((r.app_id, m), len(keys)) for m in refs])
            )
            self.budget.append(r.budget)
            self.offset.append(origin - r.arrival_time)
            self.penalty.append(penalty or app.penalty)

    def score(self, order, columns, grid, flat: bool) -> np.ndarray:
        """Summed utility of executing requests in ``order`` for every row of ``grid``."""
        n_rows = grid.shape[0]
        busy = np.zeros(n_rows)
        resident = np.full(n_rows, _NO_MODEL)
        total = np.zeros(n_rows)
        for i in order:
            choice = grid[:, columns[i]]
            key = self.key[i][choice]
            off = key == _OFF_DEVICE
            charge = np.ones(n_rows, dtype=bool) if flat else key != resident
            lat = np.where(off, 0.0, self.infer[i][choice] + np.where(charge, self.swap[i][choice], 0.0))
            done = busy + lat
            pen = scoring.penalty(self.penalty[i], self.budget[i], self.offset[i] + done)
            total += self.acc[i][choice] * (1.0 - pen)
            busy = np.where(off, busy, done)
            resident = np.where(off, resident, key)
        return total


def _grid(sizes: Sequence[int]) -> np.ndarray:
    if not sizes:
        return np.zeros((1, 0), dtype=np.int64)
    return np.array(list(itertools.product(*[range(s) for s in sizes])), dtype=np.int64).reshape(-1, len(sizes))


def exact_global(
    requests: Sequence[Request],
    apps: Mapping[str, Application],
    penalty: Optional[scoring.PenaltySpec] = None,
    latency_mode=LatencyMode.SEQUENCE_AWARE,
    budget: OracleBudget = OracleBudget(),
    *,
    accuracy_source=AccuracySource.PROFILED,
    thetas=None,
    origin: float = 0.0,
) -> OracleResult:
    """Request-level optimum over all n! orderings and all model assignments."""
    table = _Table(requests, apps, accuracy_source, thetas, penalty, origin)
    n = len(table.requests)
    sizes = [len(refs) for refs in table.refs]
    count = math.factorial(n) * math.prod(sizes)
    if count > budget.max_candidates:
        raise BudgetExceeded(count, budget.max_candidates)
    if n == 0:
        return OracleResult(Schedule(), 0.0, 1)
    grid = _grid(sizes)
    columns = list(range(n))
    flat = LatencyMode(latency_mode) is LatencyMode.PAPER_FLAT
    best, best_perm, best_row, seen = -math.inf, None, None, 0
    for perm in itertools.permutations(range(n)):
        scores = table.score(perm, columns, grid, flat)
        seen += len(scores)
        row = int(np.argmax(scores))
        if scores[row] > best + TIE_EPS:
            best, best_perm, best_row = float(scores[row]), perm, row
    assert seen == count
    entries = [
        Entry(table.requests[i].request_id, table.refs[i][grid[best_row, i]]) for i in best_perm
    ]
    return OracleResult(Schedule(entries), best / n, count)


def exact_grouped(
    groups: Sequence[Sequence[str]],
    requests: Sequence[Request],
    apps: Mapping[str, Application],
    penalty: Optional[scoring.PenaltySpec] = None,
    latency_mode=LatencyMode.SEQUENCE_AWARE,
    budget: OracleBudget = OracleBudget(),
    *,
    accuracy_source=AccuracySource.PROFILED,
    thetas=None,
    origin: float = 0.0,
) -> OracleResult:
    """Group-level optimum: contiguous groups in every order, one model per group.

    Members run in the order given inside each group; callers pass groups
    already sorted by request priority. Every group must hold requests of a
    single application.
    """
    groups = [list(g) for g in groups if g]
    by_id = {r.request_id: r for r in requests}
    members = [rid for g in groups for rid in g]
    table = _Table([by_id[rid] for rid in members], apps, accuracy_source, thetas, penalty, origin)
    index = {rid: i for i, rid in enumerate(members)}
    columns = {}
    sizes = []
    for gi, g in enumerate(groups):
        app_ids = {by_id[rid].app_id for rid in g}
        if len(app_ids) != 1:
            raise ValueError(f"group {gi} mixes applications {sorted(app_ids)}")
        sizes.append(len(table.refs[index[g[0]]]))
        for rid in g:
            columns[index[rid]] = gi
    count = math.factorial(len(groups)) * math.prod(sizes)
    if count > budget.max_candidates:
        raise BudgetExceeded(count, budget.max_candidates)
    if not groups:
        return OracleResult(Schedule(), 0.0, 1)
    grid = _grid(sizes)
    flat = LatencyMode(latency_mode) is LatencyMode.PAPER_FLAT
    best, best_perm, best_row, seen = -math.inf, None, None, 0
    for perm in itertools.permutations(range(len(groups))):
        order = [index[rid] for gi in perm for rid in groups[gi]]
        scores = table.score(order, columns, grid, flat)
        seen += len(scores)
        row = int(np.argmax(scores))
        if scores[row] > best + TIE_EPS:
            best, best_perm, best_row = float(scores[row]), perm, row
    assert seen == count
    entries = []
    for gi in best_perm:
        for rid in groups[gi]:
            i = index[rid]
            entries.append(Entry(rid, table.refs[i][grid[best_row, gi]]))
    return OracleResult(Schedule(entries), best / len(requests), count)
