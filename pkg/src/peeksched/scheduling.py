"""Request ordering, model selection, and grouped scheduling.

Flat schedulers order requests first and then pick a model per request at
its planned start. Grouped schedulers partition requests by application
(optionally split further by estimated label), then either brute-force the
group-level problem when there are few groups or place groups greedily by
mean priority with one model per group.

Planned times are relative to ``ctx.now``, the moment the window closes and
execution begins. Multiple workers are filled greedily: each unit goes to
the worker that frees up first.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from . import oracle, scoring
from .core import (
    SNEAKPEEK,
    AccuracySource,
    Application,
    Entry,
    LatencyMode,
    ModelProfile,
    Request,
    Schedule,
    effective_latency,
    model_accuracy,
    model_key,
)
from .errors import BudgetExceeded, DuplicateSneakPeek, EmptyGroup
from .sneakpeek import split_groups


class Ordering(str, enum.Enum):
    FCFS = "fcfs"
    EDF = "edf"
    PRIORITY = "priority"


class Selection(str, enum.Enum):
    MAX_ACCURACY = "max_accuracy"
    LOCALLY_OPTIMAL = "locally_optimal"
    GROUPED = "grouped"
    GROUPED_DATA_AWARE = "grouped_data_aware"

    @property
    def grouped(self) -> bool:
        return self in (Selection.GROUPED, Selection.GROUPED_DATA_AWARE)


DEFAULT_TAU = 3


@dataclass(frozen=True)
class SchedulerSpec:
    ordering: Ordering = Ordering.EDF
    selection: Selection = Selection.LOCALLY_OPTIMAL
    brute_force_threshold: int = DEFAULT_TAU
    short_circuit: bool = False
    accuracy_source: AccuracySource = AccuracySource.PROFILED
    worker_count: int = 1
    latency_mode: LatencyMode = LatencyMode.SEQUENCE_AWARE
    # cap on group-level brute force; larger searches use the greedy path
    brute_force_budget: int = 200_000
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "ordering", Ordering(self.ordering))
        object.__setattr__(self, "selection", Selection(self.selection))
        object.__setattr__(self, "accuracy_source", AccuracySource(self.accuracy_source))
        object.__setattr__(self, "latency_mode", LatencyMode(self.latency_mode))
        if self.worker_count < 1:
            raise ValueError("worker_count must be at least 1")
        if self.brute_force_threshold < 0:
            raise ValueError("brute_force_threshold must be non-negative")

    @property
    def needs_estimates(self) -> bool:
        return (
            self.accuracy_source is AccuracySource.DYNAMIC
            or self.selection is Selection.GROUPED_DATA_AWARE
            or self.short_circuit
        )


PRESETS = {
    "maxacc-edf": SchedulerSpec(Ordering.EDF, Selection.MAX_ACCURACY, name="maxacc-edf"),
    "lo-edf": SchedulerSpec(Ordering.EDF, Selection.LOCALLY_OPTIMAL, name="lo-edf"),
    "lo-priority": SchedulerSpec(Ordering.PRIORITY, Selection.LOCALLY_OPTIMAL, name="lo-priority"),
    "grouped": SchedulerSpec(Ordering.PRIORITY, Selection.GROUPED, name="grouped"),
    "sneakpeek": SchedulerSpec(
        Ordering.PRIORITY,
        Selection.GROUPED_DATA_AWARE,
        short_circuit=True,
        accuracy_source=AccuracySource.DYNAMIC,
        name="sneakpeek",
    ),
}
DATA_OBLIVIOUS = ("maxacc-edf", "lo-edf", "lo-priority", "grouped")


def preset(name: str, **overrides) -> SchedulerSpec:
    try:
        spec = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown scheduler preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(spec, **overrides) if overrides else spec


@dataclass(frozen=True)
class SchedulingContext:
    now: float
    requests: tuple
    apps: Mapping[str, Application]
    thetas: Optional[Mapping[str, np.ndarray]] = None
    sneakpeek_profiles: Optional[Mapping[str, ModelProfile]] = None

    def __post_init__(self):
        object.__setattr__(self, "requests", tuple(self.requests))


def augment_short_circuit(app: Application, sneakpeek_profile: ModelProfile) -> Application:
    """Register the zero-latency estimator as an extra candidate model."""
    if app.sneakpeek is not None:
        raise DuplicateSneakPeek(f"{app.app_id} already has a short-circuit variant")
    if sneakpeek_profile.infer_latency != 0 or sneakpeek_profile.swap_latency != 0:
        raise ValueError("short-circuit variant must have zero latency")
    return replace(app, sneakpeek=sneakpeek_profile)


class Planner:
    """Accuracy, latency, and priority lookups for one (spec, ctx) pair."""

    def __init__(self, spec: SchedulerSpec, ctx: SchedulingContext):
        self.spec = spec
        self.ctx = ctx
        apps = dict(ctx.apps)
        if spec.short_circuit:
            if not ctx.sneakpeek_profiles:
                raise ValueError("short-circuit scheduling needs sneakpeek profiles")
            for app_id, app in apps.items():
                if app.sneakpeek is None:
                    apps[app_id] = augment_short_circuit(app, ctx.sneakpeek_profiles[app_id])
        self.apps = apps
        if spec.needs_estimates and ctx.thetas is None:
            raise ValueError(f"{spec.name or spec.selection.value} needs per-request theta estimates")
        self._acc: dict = {}
        self._prio: dict = {}

    def app(self, r: Request) -> Application:
        return self.apps[r.app_id]

    def candidates(self, r: Request) -> list:
        return self.app(r).model_refs()

    def accuracy(self, r: Request, ref) -> float:
        key = (r.request_id, ref)
        if key not in self._acc:
            self._acc[key] = model_accuracy(r, self.app(r), ref, self.spec.accuracy_source, self.ctx.thetas)
        return self._acc[key]

    def latency(self, r: Request, ref, resident):
        """(effective latency, resident model afterwards) when run after ``resident``."""
        if ref is SNEAKPEEK:
            return 0.0, resident
        key = model_key(r.app_id, ref)
        charge = resident != key or self.spec.latency_mode is LatencyMode.PAPER_FLAT
        return effective_latency(self.app(r).profile(ref), charge), key

    def utility(self, r: Request, ref, start: float, lat: float) -> float:
        app = self.app(r)
        t = self.ctx.now + start - r.arrival_time
        return scoring.utility(self.accuracy(r, ref), app.penalty, r.budget, t, lat)

    def priority(self, r: Request) -> float:
        if r.request_id not in self._prio:
            accs = [self.accuracy(r, ref) for ref in self.candidates(r)]
            slack_s = max(0.0, r.deadline - self.ctx.now) / 1000.0
            self._prio[r.request_id] = (1.0 + float(np.var(accs))) * math.exp(-slack_s)
        return self._prio[r.request_id]


def priority_request(request: Request, ctx: SchedulingContext, spec: SchedulerSpec = PRESETS["lo-priority"]) -> float:
    """(1 + population variance of candidate accuracies) * exp(-seconds to deadline)."""
    return Planner(spec, ctx).priority(request)


def priority_group(group: Sequence[Request], ctx: SchedulingContext, spec: SchedulerSpec = PRESETS["grouped"]) -> float:
    if not group:
        raise EmptyGroup("group priority of an empty group")
    planner = Planner(spec, ctx)
    return float(np.mean([planner.priority(r) for r in group]))


def _order(policy: Ordering, requests: Sequence[Request], planner: Planner) -> list:
    policy = Ordering(policy)
    if policy is Ordering.EDF:
        key = lambda r: (r.deadline, r.request_id)
    elif policy is Ordering.FCFS:
        key = lambda r: (r.arrival_time, r.request_id)
    else:
        key = lambda r: (-planner.priority(r), r.request_id)
    return sorted(requests, key=key)


def order_requests(policy, requests: Sequence[Request], ctx: SchedulingContext, spec: SchedulerSpec = PRESETS["lo-priority"]) -> list:
    return _order(policy, requests, Planner(spec, ctx))


def _select(strategy: Selection, r: Request, start: float, resident, planner: Planner):
    """Return (model_ref, latency, resident afterwards)."""
    best = None
    for pos, ref in enumerate(planner.candidates(r)):
        if strategy is Selection.MAX_ACCURACY and ref is SNEAKPEEK:
            continue
        lat, after = planner.latency(r, ref, resident)
        if strategy is Selection.MAX_ACCURACY:
            score = planner.accuracy(r, ref)
        else:
            score = planner.utility(r, ref, start, lat)
        key = (-score, lat, pos)
        if best is None or key < best[0]:
            best = (key, ref, lat, after)
    return best[1], best[2], best[3]


def select_model(strategy, request: Request, t_start: float, ctx: SchedulingContext, spec: Optional[SchedulerSpec] = None, resident=None):
    """Model for ``request`` starting ``t_start`` ms after the window closes.

    ``resident`` is the model loaded on the worker beforehand (None: nothing
    loaded), which decides whether a swap is charged.
    """
    strategy = Selection(strategy)
    spec = spec or SchedulerSpec(selection=strategy)
    ref, _, _ = _select(strategy, request, t_start, resident, Planner(spec, ctx))
    return ref


class _Workers:
    def __init__(self, count: int):
        self.busy = [0.0] * count
        self.resident = [None] * count

    def next_free(self) -> int:
        return min(range(len(self.busy)), key=lambda w: (self.busy[w], w))


def _schedule_flat(spec: SchedulerSpec, planner: Planner) -> Schedule:
    workers = _Workers(spec.worker_count)
    entries = []
    for r in _order(spec.ordering, planner.ctx.requests, planner):
        w = workers.next_free()
        ref, lat, after = _select(spec.selection, r, workers.busy[w], workers.resident[w], planner)
        entries.append(Entry(r.request_id, ref, w))
        workers.busy[w] += lat
        workers.resident[w] = after
    return Schedule(entries)


def schedule_flat(spec: SchedulerSpec, ctx: SchedulingContext) -> Schedule:
    if spec.selection.grouped:
        raise ValueError("schedule_flat needs MaxAccuracy or LocallyOptimal selection")
    return _schedule_flat(spec, Planner(spec, ctx))


def build_groups(spec: SchedulerSpec, ctx: SchedulingContext, planner: Optional[Planner] = None) -> list:
    """Groups of request ids: per application, split by label when data-aware.

    Members are sorted by descending request priority.
    """
    planner = planner or Planner(spec, ctx)
    by_app: dict = {}
    for r in ctx.requests:
        by_app.setdefault(r.app_id, []).append(r.request_id)
    groups = []
    for app_id in sorted(by_app):
        members = by_app[app_id]
        if spec.selection is Selection.GROUPED_DATA_AWARE:
            groups.extend(split_groups(members, ctx.thetas))
        else:
            groups.append(members)
    by_id = {r.request_id: r for r in ctx.requests}
    return [
        sorted(g, key=lambda rid: (-planner.priority(by_id[rid]), rid)) for g in groups
    ]


def _group_choice(members: Sequence[Request], start: float, resident, planner: Planner):
    """Model maximising mean member utility when the group runs from ``start``."""
    best = None
    for pos, ref in enumerate(planner.candidates(members[0])):
        t, res, total, first_lat = start, resident, 0.0, None
        for r in members:
            lat, res = planner.latency(r, ref, res)
            total += planner.utility(r, ref, t, lat)
            t += lat
            if first_lat is None:
                first_lat = lat
        key = (-total / len(members), first_lat, pos)
        if best is None or key < best[0]:
            best = (key, ref, t, res)
    return best[1], best[2], best[3]


def _schedule_grouped(spec: SchedulerSpec, planner: Planner) -> Schedule:
    ctx = planner.ctx
    groups = build_groups(spec, ctx, planner)
    app_count = len({r.app_id for r in ctx.requests})
    if spec.worker_count == 1 and app_count <= spec.brute_force_threshold:
        try:
            return oracle.exact_grouped(
                groups,
                ctx.requests,
                planner.apps,
                budget=oracle.OracleBudget(spec.brute_force_budget),
                latency_mode=spec.latency_mode,
                accuracy_source=spec.accuracy_source,
                thetas=ctx.thetas,
                origin=ctx.now,
            ).schedule
        except BudgetExceeded:
            pass  # too many groups to enumerate; use the greedy path
    by_id = {r.request_id: r for r in ctx.requests}
    scored = []
    for g in groups:
        members = [by_id[rid] for rid in g]
        scored.append((-float(np.mean([planner.priority(r) for r in members])), g[0], members))
    scored.sort(key=lambda item: (item[0], item[1]))
    workers = _Workers(spec.worker_count)
    entries = []
    for _, _, members in scored:
        w = workers.next_free()
        ref, end, res = _group_choice(members, workers.busy[w], workers.resident[w], planner)
        entries.extend(Entry(r.request_id, ref, w) for r in members)
        workers.busy[w] = end
        workers.resident[w] = res
    return Schedule(entries)


def schedule_grouped(spec: SchedulerSpec, ctx: SchedulingContext) -> Schedule:
    if not spec.selection.grouped:
        raise ValueError("schedule_grouped needs Grouped or GroupedDataAware selection")
    return _schedule_grouped(spec, Planner(spec, ctx))


def schedule_multiworker(spec: SchedulerSpec, ctx: SchedulingContext) -> Schedule:
    """Schedule over ``spec.worker_count`` identical workers.

    Units (requests, or whole groups) go to the earliest-free worker in
    scheduling order. With one worker this is the single-worker scheduler.
    """
    planner = Planner(spec, ctx)
    if spec.selection.grouped:
        return _schedule_grouped(spec, planner)
    return _schedule_flat(spec, planner)


schedule = schedule_multiworker
