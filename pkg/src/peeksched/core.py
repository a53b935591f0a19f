"""Domain types and schedule semantics.

Timestamps are float milliseconds from the start of the scheduling window.
A :class:`Schedule` is an ordered list of entries; an entry's position among
the entries of its worker is its execution order. Execution on every worker
starts at an ``origin`` (the window close in a trial, 0 by default).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from . import scoring
from .errors import DimensionError, NotScheduled, ScheduleError
from .scoring import PenaltySpec


class ShortCircuit(enum.Enum):
    SNEAKPEEK = "sneakpeek"

    def __repr__(self):
        return "SNEAKPEEK"


SNEAKPEEK = ShortCircuit.SNEAKPEEK
ModelRef = Union[int, ShortCircuit]


class LatencyMode(str, enum.Enum):
    PAPER_FLAT = "flat"  # swap latency charged on every entry
    SEQUENCE_AWARE = "sequence"  # swap only when the resident model changes


class AccuracySource(str, enum.Enum):
    PROFILED = "profiled"
    DYNAMIC = "dynamic"


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ModelProfile:
    model_id: str
    confusion: np.ndarray
    infer_latency: float
    swap_latency: float = 0.0

    def __post_init__(self):
        z = _frozen_array(self.confusion)
        object.__setattr__(self, "confusion", z)
        if z.ndim != 2 or z.shape[0] != z.shape[1]:
            raise DimensionError(f"{self.model_id}: confusion must be square")
        if np.any(z.sum(axis=1) <= 0):
            raise ValueError(f"{self.model_id}: confusion rows must have positive totals")
        if self.infer_latency < 0 or self.swap_latency < 0:
            raise ValueError(f"{self.model_id}: latencies must be non-negative")

    @property
    def label_count(self) -> int:
        return self.confusion.shape[0]

    @cached_property
    def profiled_accuracy(self) -> float:
        return scoring.accuracy_from_confusion(self.confusion)

    @cached_property
    def per_class_recall(self) -> np.ndarray:
        return _frozen_array(scoring.recalls_from_confusion(self.confusion))

    @cached_property
    def test_frequencies(self) -> np.ndarray:
        return _frozen_array(scoring.class_frequencies(self.confusion))

    def __repr__(self):
        return (
            f"ModelProfile({self.model_id!r}, acc={self.profiled_accuracy:.4f}, "
            f"infer={self.infer_latency}, swap={self.swap_latency})"
        )


@dataclass(frozen=True, eq=False)
class Application:
    app_id: str
    label_count: int
    models: tuple
    penalty: PenaltySpec = field(default_factory=PenaltySpec)
    class_prior_hint: Optional[np.ndarray] = None
    # Short-circuit variant, set by scheduling.augment_short_circuit.
    sneakpeek: Optional[ModelProfile] = None

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        if self.label_count < 1:
            raise ValueError("label_count must be positive")
        if not self.models:
            raise ValueError(f"application {self.app_id} has no models")
        for m in self.models:
            if m.label_count != self.label_count:
                raise DimensionError(f"{m.model_id} has {m.label_count} labels, app has {self.label_count}")
        if self.class_prior_hint is not None:
            hint = _frozen_array(self.class_prior_hint)
            if hint.shape != (self.label_count,) or abs(hint.sum() - 1.0) > 1e-9:
                raise ValueError("class_prior_hint must be a distribution over the labels")
            object.__setattr__(self, "class_prior_hint", hint)

    def model_refs(self) -> list:
        refs: list = list(range(len(self.models)))
        if self.sneakpeek is not None:
            refs.append(SNEAKPEEK)
        return refs

    def is_valid_ref(self, ref) -> bool:
        if ref is SNEAKPEEK:
            return self.sneakpeek is not None
        return isinstance(ref, (int, np.integer)) and not isinstance(ref, bool) and 0 <= ref < len(self.models)

    def profile(self, ref: ModelRef) -> ModelProfile:
        if ref is SNEAKPEEK:
            if self.sneakpeek is None:
                raise KeyError(f"{self.app_id} has no short-circuit variant")
            return self.sneakpeek
        return self.models[ref]

    def with_penalty(self, spec: PenaltySpec) -> "Application":
        return replace(self, penalty=spec)


@dataclass(frozen=True, eq=False)
class Request:
    request_id: str
    app_id: str
    arrival_time: float
    deadline: float
    data_point: np.ndarray = field(default_factory=lambda: _frozen_array([]))
    true_label: int = 0

    def __post_init__(self):
        object.__setattr__(self, "data_point", _frozen_array(self.data_point))
        if not self.deadline > self.arrival_time:
            raise ValueError(f"{self.request_id}: deadline must follow arrival")

    @property
    def budget(self) -> float:
        return self.deadline - self.arrival_time


@dataclass(frozen=True)
class Entry:
    request_id: str
    model_ref: ModelRef
    worker_id: int = 0


@dataclass(frozen=True)
class Schedule:
    entries: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def workers(self) -> list:
        return sorted({e.worker_id for e in self.entries})

    def worker_entries(self, worker_id: int) -> list:
        return [e for e in self.entries if e.worker_id == worker_id]

    def entry(self, request_id: str) -> Entry:
        for e in self.entries:
            if e.request_id == request_id:
                return e
        raise NotScheduled(request_id)


@dataclass(frozen=True)
class Violation:
    kind: str  # duplicate | missing | unknown_request | invalid_model | invalid_worker
    request_id: Optional[str] = None
    detail: str = ""

    def __str__(self):
        return f"{self.kind}: {self.request_id} {self.detail}".strip()


def _by_id(requests: Iterable[Request]) -> dict:
    return {r.request_id: r for r in requests}


def model_key(app_id: str, ref: ModelRef):
    """Identity of a model for swap accounting."""
    return (app_id, ref)


def effective_latency(profile: ModelProfile, swapped: bool) -> float:
    return profile.infer_latency + (profile.swap_latency if swapped else 0.0)


def entry_timeline(schedule: Schedule, requests, apps: Mapping[str, Application], mode: LatencyMode):
    """Map request_id -> (start, latency, swapped), start relative to the worker origin.

    The short-circuit variant runs off the accelerator: it costs nothing and
    leaves the resident model untouched.
    """
    reqs = requests if isinstance(requests, Mapping) else _by_id(requests)
    mode = LatencyMode(mode)
    busy: dict = {}
    resident: dict = {}
    out = {}
    for e in schedule.entries:
        app = apps[reqs[e.request_id].app_id]
        prof = app.profile(e.model_ref)
        t = busy.get(e.worker_id, 0.0)
        if e.model_ref is SNEAKPEEK:
            out[e.request_id] = (t, 0.0, False)
            continue
        key = model_key(app.app_id, e.model_ref)
        swapped = resident.get(e.worker_id) != key
        charge = swapped or mode is LatencyMode.PAPER_FLAT
        lat = effective_latency(prof, charge)
        out[e.request_id] = (t, lat, swapped)
        busy[e.worker_id] = t + lat
        resident[e.worker_id] = key
    return out


def start_time(schedule: Schedule, request_id: str, requests, apps, latency_mode=LatencyMode.SEQUENCE_AWARE) -> float:
    """Summed effective latency of everything ahead of ``request_id`` on its worker."""
    timeline = entry_timeline(schedule, requests, apps, latency_mode)
    if request_id not in timeline:
        raise NotScheduled(request_id)
    return timeline[request_id][0]


def validate(
    schedule: Schedule,
    requests: Sequence[Request],
    apps: Mapping[str, Application],
    *,
    allow_partial: bool = False,
    worker_count: Optional[int] = None,
) -> Optional[Violation]:
    """Return the first violated constraint, or None when the schedule is valid.

    Execution positions are list positions, so distinct ordering integers
    hold by construction and are not checked.
    """
    reqs = _by_id(requests)
    seen = set()
    for e in schedule.entries:
        if e.request_id in seen:
            return Violation("duplicate", e.request_id)
        seen.add(e.request_id)
        if e.request_id not in reqs:
            return Violation("unknown_request", e.request_id)
        app = apps.get(reqs[e.request_id].app_id)
        if app is None or not app.is_valid_ref(e.model_ref):
            return Violation("invalid_model", e.request_id, f"model {e.model_ref!r}")
        if e.worker_id < 0 or (worker_count is not None and e.worker_id >= worker_count):
            return Violation("invalid_worker", e.request_id, f"worker {e.worker_id}")
    if not allow_partial:
        for r in requests:
            if r.request_id not in seen:
                return Violation("missing", r.request_id)
    return None


def check(schedule, requests, apps, **kw) -> None:
    violation = validate(schedule, requests, apps, **kw)
    if violation is not None:
        raise ScheduleError(violation)


def model_accuracy(
    request: Request,
    app: Application,
    ref: ModelRef,
    source: AccuracySource = AccuracySource.PROFILED,
    thetas: Optional[Mapping[str, np.ndarray]] = None,
) -> float:
    """Planning accuracy of ``ref`` for ``request``; the short-circuit variant is always profiled."""
    prof = app.profile(ref)
    if ref is SNEAKPEEK or AccuracySource(source) is AccuracySource.PROFILED:
        return prof.profiled_accuracy
    if thetas is None or request.request_id not in thetas:
        raise KeyError(f"dynamic accuracy needs a theta for {request.request_id}")
    return scoring.theta_accuracy(thetas[request.request_id], prof.per_class_recall)


def request_utilities(
    schedule: Schedule,
    requests: Sequence[Request],
    apps: Mapping[str, Application],
    accuracy_source=AccuracySource.PROFILED,
    latency_mode=LatencyMode.SEQUENCE_AWARE,
    *,
    thetas=None,
    origin: float = 0.0,
) -> dict:
    check(schedule, requests, apps, allow_partial=True)
    reqs = _by_id(requests)
    timeline = entry_timeline(schedule, reqs, apps, latency_mode)
    out = {}
    for e in schedule.entries:
        r = reqs[e.request_id]
        app = apps[r.app_id]
        start, lat, _ = timeline[e.request_id]
        acc = model_accuracy(r, app, e.model_ref, accuracy_source, thetas)
        out[e.request_id] = scoring.utility(acc, app.penalty, r.budget, origin + start - r.arrival_time, lat)
    return out


def schedule_utility(
    schedule: Schedule,
    requests: Sequence[Request],
    apps: Mapping[str, Application],
    accuracy_source=AccuracySource.PROFILED,
    latency_mode=LatencyMode.SEQUENCE_AWARE,
    *,
    thetas=None,
    origin: float = 0.0,
) -> float:
    """Mean planned utility over all requests; unscheduled requests count as zero."""
    if not requests:
        return 0.0
    utils = request_utilities(
        schedule, requests, apps, accuracy_source, latency_mode, thetas=thetas, origin=origin
    )
    return sum(utils.values()) / len(requests)
