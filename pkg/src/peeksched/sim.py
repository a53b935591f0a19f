"""Deterministic execution of schedules and per-trial metrics."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Mapping, Optional, Sequence

import numpy as np

from . import scoring
from .core import SNEAKPEEK, Application, LatencyMode, Request, Schedule, check, entry_timeline, model_key
from .errors import IncompleteTrace
from .scheduling import SchedulerSpec, SchedulingContext, augment_short_circuit, schedule
from .sneakpeek import (
    DEFAULT_K,
    PriorKind,
    knn_evidence,
    make_prior,
    posterior,
    profile_simulated,
    profile_sneakpeek,
    simulated_estimator,
    theta_estimate,
)
from .workload import Scenario, ScenarioSpec, gen_scenario


@dataclass(frozen=True)
class TraceRow:
    request_id: str
    worker_id: int
    model_ref: object
    dispatch: float
    completion: float
    swap_occurred: bool


@dataclass(frozen=True)
class ExecutionTrace:
    rows: tuple

    def by_request(self) -> dict:
        return {row.request_id: row for row in self.rows}


@dataclass(frozen=True)
class RequestOutcome:
    request_id: str
    app_id: str
    model_ref: object
    completion: float
    deadline: float
    accuracy: float
    utility: float
    violation_ms: float


@dataclass(frozen=True)
class TrialMetrics:
    mean_utility: float
    mean_expected_accuracy: float
    mean_violation_ms: float
    violation_count: int
    rows: tuple = ()
    overhead_ms: float = 0.0

    def deterministic_view(self) -> tuple:
        return (self.mean_utility, self.mean_expected_accuracy, self.mean_violation_ms, self.violation_count, self.rows)


def execute(
    schedule: Schedule,
    requests: Sequence[Request],
    apps: Mapping[str, Application],
    worker_count: int = 1,
    *,
    start_at: float = 0.0,
    batch_efficiency: float = 1.0,
) -> ExecutionTrace:
    """Run each worker's entries back to back from ``start_at``.

    A swap is paid whenever the worker's resident model differs from the
    entry's model (nothing is resident at first). Short-circuit entries run
    off the accelerator: zero cost, resident model unchanged. An entry that
    continues a same-model run costs ``batch_efficiency`` times its inference
    latency.
    """
    check(schedule, requests, apps, worker_count=worker_count)
    reqs = {r.request_id: r for r in requests}
    clock = [start_at] * worker_count
    resident = [None] * worker_count
    rows = []
    for e in schedule.entries:
        w = e.worker_id
        app = apps[reqs[e.request_id].app_id]
        t = clock[w]
        if e.model_ref is SNEAKPEEK:
            rows.append(TraceRow(e.request_id, w, e.model_ref, t, t, False))
            continue
        prof = app.profile(e.model_ref)
        key = model_key(app.app_id, e.model_ref)
        swapped = resident[w] != key
        infer = prof.infer_latency * (1.0 if swapped else batch_efficiency)
        done = t + infer + (prof.swap_latency if swapped else 0.0)
        rows.append(TraceRow(e.request_id, w, e.model_ref, t, done, swapped))
        clock[w] = done
        resident[w] = key
    return ExecutionTrace(tuple(rows))


def evaluate(
    trace: ExecutionTrace,
    requests: Sequence[Request],
    apps: Mapping[str, Application],
    theta_truth_mode: str = "recall",
    rng: Optional[np.random.Generator] = None,
) -> TrialMetrics:
    """Realised metrics with the true label as ground truth.

    ``recall`` mode scores a request by the assigned model's recall on its
    true label. ``sampled`` mode draws correctness from that recall instead.
    """
    rows = trace.by_request()
    missing = [r.request_id for r in requests if r.request_id not in rows]
    if missing:
        raise IncompleteTrace(f"trace lacks {len(missing)} requests, e.g. {missing[0]}")
    if theta_truth_mode not in ("recall", "sampled"):
        raise ValueError(f"unknown truth mode {theta_truth_mode!r}")
    if theta_truth_mode == "sampled" and rng is None:
        rng = np.random.default_rng(0)
    outcomes = []
    for r in requests:
        row = rows[r.request_id]
        app = apps[r.app_id]
        acc = float(app.profile(row.model_ref).per_class_recall[r.true_label])
        if theta_truth_mode == "sampled":
            acc = float(rng.random() < acc)
        u = scoring.utility(acc, app.penalty, r.budget, row.completion - r.arrival_time, 0.0)
        outcomes.append(
            RequestOutcome(
                r.request_id, r.app_id, row.model_ref, row.completion, r.deadline, acc, u,
                max(0.0, row.completion - r.deadline),
            )
        )
    if not outcomes:
        return TrialMetrics(0.0, 0.0, 0.0, 0, ())
    return TrialMetrics(
        mean_utility=float(np.mean([o.utility for o in outcomes])),
        mean_expected_accuracy=float(np.mean([o.accuracy for o in outcomes])),
        mean_violation_ms=float(np.mean([o.violation_ms for o in outcomes])),
        violation_count=sum(o.violation_ms > 0 for o in outcomes),
        rows=tuple(outcomes),
    )


@dataclass(frozen=True)
class EstimationConfig:
    k: int = DEFAULT_K
    prior: PriorKind = PriorKind.UNINFORMATIVE
    # which class mix informative priors take as the hint: "stream" or "test"
    prior_hint: str = "stream"
    # when set, a synthetic estimator of this accuracy replaces kNN
    sp_sim_accuracy: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "prior", PriorKind(self.prior))
        if self.prior_hint not in ("stream", "test"):
            raise ValueError(f"prior_hint must be 'stream' or 'test', got {self.prior_hint!r}")
        if self.k < 1:
            raise ValueError("k must be positive")


def prior_for(scenario: Scenario, app_id: str, est: EstimationConfig):
    app = scenario.apps[app_id]
    hint = scenario.stream_mix[app_id] if est.prior_hint == "stream" else scenario.test_mix[app_id]
    # the window's total request count, as in the strong-prior definition
    return make_prior(est.prior, app.label_count, hint, max(len(scenario.requests), 1))


def _sim_seed(seed: int, index: int) -> list:
    return [seed, 0x5EED, index]


def estimate_thetas(scenario: Scenario, est: EstimationConfig) -> dict:
    """Posterior-mean class mix for every request in the scenario."""
    priors = {app_id: prior_for(scenario, app_id, est) for app_id in scenario.apps}
    out = {}
    for i, r in enumerate(scenario.requests):
        app = scenario.apps[r.app_id]
        if est.sp_sim_accuracy is None:
            ev = knn_evidence(r.data_point, scenario.corpora[r.app_id], est.k)
        else:
            ev = simulated_estimator(est.sp_sim_accuracy, r.true_label, app.label_count, est.k, _sim_seed(scenario.seed, i))
        out[r.request_id] = theta_estimate(posterior(priors[r.app_id], ev))
    return out


@lru_cache(maxsize=512)
def _profiles(spec: ScenarioSpec, seed: int, est: EstimationConfig) -> dict:
    scenario = gen_scenario(spec, seed)
    out = {}
    for app_id, app in scenario.apps.items():
        prior = prior_for(scenario, app_id, est)
        if est.sp_sim_accuracy is None:
            out[app_id] = profile_sneakpeek(scenario.corpora[app_id], est.k, prior, scenario.holdouts[app_id], f"{app_id}/sneakpeek")
        else:
            labels = [lab for _, lab in scenario.holdouts[app_id]]
            out[app_id] = profile_simulated(
                est.sp_sim_accuracy, app.label_count, est.k, prior, labels, seed, f"{app_id}/sneakpeek-sim"
            )
    return out


def sneakpeek_profiles(scenario: Scenario, est: EstimationConfig) -> dict:
    """Holdout profiles of the estimator per application (offline, cached)."""
    return _profiles(scenario.spec, scenario.seed, est)


def run_trial(
    scenario: ScenarioSpec,
    scheduler_spec: SchedulerSpec,
    seed: int,
    estimation: EstimationConfig = EstimationConfig(),
    *,
    batch_efficiency: float = 1.0,
) -> TrialMetrics:
    """Generate, estimate, schedule, execute, and score one window."""
    scen = gen_scenario(scenario, seed)
    profiles = sneakpeek_profiles(scen, estimation) if scheduler_spec.short_circuit else None
    t0 = time.perf_counter()
    thetas = estimate_thetas(scen, estimation) if scheduler_spec.needs_estimates else None
    ctx = SchedulingContext(scen.now, scen.requests, scen.apps, thetas, profiles)
    plan = schedule(scheduler_spec, ctx)
    overhead_ms = (time.perf_counter() - t0) * 1000.0
    apps = dict(scen.apps)
    if profiles:
        apps = {k: augment_short_circuit(a, profiles[k]) for k, a in apps.items()}
    trace = execute(plan, scen.requests, apps, scheduler_spec.worker_count, start_at=scen.now, batch_efficiency=batch_efficiency)
    metrics = evaluate(trace, scen.requests, apps)
    return replace(metrics, overhead_ms=overhead_ms)


@dataclass(frozen=True)
class EstimationErrors:
    """Mean absolute gap to the true-label recall, per application."""

    dynamic: dict
    profiled: dict
    request_count: int


def estimation_errors(
    scenario: ScenarioSpec, est: EstimationConfig, request_total: int = 1000, base_seed: int = 0
) -> EstimationErrors:
    """Pool consecutive seeded windows until ``request_total`` requests are seen.

    For every request and every model of its application, compare the
    model's recall on the true label with its profiled accuracy and with
    the theta-weighted dynamic accuracy.
    """
    dyn: dict = {}
    prof: dict = {}
    seen = 0
    seed = base_seed
    while seen < request_total:
        scen = gen_scenario(scenario, seed)
        thetas = estimate_thetas(scen, est)
        for r in scen.requests:
            if seen == request_total:
                break
            app = scen.apps[r.app_id]
            for m in app.models:
                truth = m.per_class_recall[r.true_label]
                dyn.setdefault(r.app_id, []).append(abs(scoring.theta_accuracy(thetas[r.request_id], m.per_class_recall) - truth))
                prof.setdefault(r.app_id, []).append(abs(m.profiled_accuracy - truth))
            seen += 1
        seed += 1
    return EstimationErrors(
        {k: float(np.mean(v)) for k, v in dyn.items()},
        {k: float(np.mean(v)) for k, v in prof.items()},
        seen,
    )
