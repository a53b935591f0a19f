"""Seeded synthetic scenarios.

Three healthcare-flavoured applications stand in for real datasets: a
two-class fall detector with a heavily skewed stream, a six-class voice
command classifier with a uniform stream, and a seven-class heart monitor
whose stream is 80% negatives. Request features come from isotropic Gaussian
clusters, one per class, so a nearest-neighbour lookup carries real but
imperfect label signal.

Model profiles are artifact constants. Each model's per-class recall is
tilted by ``recall_skew`` along a fixed class pattern, with the tilt direction
alternating between variants, so which model is best depends on the label.
Profiles are measured on a balanced test set, which deliberately differs
from the skewed request streams.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional, Union

import numpy as np

from .core import Application, ModelProfile, Request
from .errors import GenError, UnknownScenario
from .scoring import PenaltySpec
from .sneakpeek import NeighborIndex

ROW_TOTAL = 1000


@dataclass(frozen=True)
class ModelSpec:
    name: str
    accuracy: float
    infer_latency: float
    swap_latency: float


@dataclass(frozen=True)
class VarianceSuite:
    """Three variants around a mean model: scaled down, as-is, and scaled up."""

    mean_accuracy: float
    mean_latency: float
    spread_pct: float
    swap_latency: float = 0.0

    def models(self) -> tuple:
        out = []
        for tag, factor in (("mean", 1.0), ("low", 1.0 - self.spread_pct), ("high", 1.0 + self.spread_pct)):
            acc = float(np.clip(self.mean_accuracy * factor, 0.0, 1.0))
            out.append(ModelSpec(tag, acc, self.mean_latency * factor, self.swap_latency))
        return tuple(out)


@dataclass(frozen=True)
class AppSpec:
    name: str
    label_count: int
    class_mix: tuple
    models: Union[tuple, VarianceSuite]
    recall_skew: float = 0.0
    cluster_separation: float = 3.0
    feature_dim: int = 8
    corpus_size: int = 300
    holdout_size: int = 150
    test_mix: Optional[tuple] = None  # None: balanced
    penalty: str = "sigmoid"

    def __post_init__(self):
        object.__setattr__(self, "class_mix", tuple(float(x) for x in self.class_mix))
        if len(self.class_mix) != self.label_count or abs(sum(self.class_mix) - 1.0) > 1e-9:
            raise GenError(f"{self.name}: class_mix must be a distribution over {self.label_count} labels")
        if any(x < 0 for x in self.class_mix):
            raise GenError(f"{self.name}: negative class frequency")
        if self.cluster_separation <= 0:
            raise GenError(f"{self.name}: cluster_separation must be positive")

    def model_specs(self) -> tuple:
        return self.models.models() if isinstance(self.models, VarianceSuite) else tuple(self.models)

    def profiling_mix(self) -> np.ndarray:
        if self.test_mix is None:
            return np.full(self.label_count, 1.0 / self.label_count)
        return np.asarray(self.test_mix, dtype=float)

    def with_spread(self, spread_pct: float) -> "AppSpec":
        specs = self.model_specs()
        suite = VarianceSuite(
            float(np.mean([m.accuracy for m in specs])),
            float(np.mean([m.infer_latency for m in specs])),
            spread_pct,
            float(np.mean([m.swap_latency for m in specs])),
        )
        return replace(self, models=suite)


@dataclass(frozen=True)
class DeadlineDist:
    """Per-request deadline offsets: uniform on [mean/2, 3*mean/2], or normal."""

    kind: str = "uniform"
    mean: float = 150.0
    sd: float = 0.0

    def __post_init__(self):
        if self.kind not in ("uniform", "normal"):
            raise GenError(f"unknown deadline distribution {self.kind!r}")
        if self.mean <= 0 or self.sd < 0:
            raise GenError("deadline mean must be positive and sd non-negative")

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "uniform":
            x = rng.uniform(0.5 * self.mean, 1.5 * self.mean, size)
        else:
            x = rng.normal(self.mean, self.sd, size)
        return np.maximum(x, 1.0)


@dataclass(frozen=True)
class ScenarioSpec:
    apps: tuple
    request_count: int = 12
    window_ms: float = 100.0
    deadline: DeadlineDist = field(default_factory=DeadlineDist)
    seed: int = 0
    per_app_counts: Optional[tuple] = None
    penalty: Optional[str] = None  # overrides every app's penalty

    def __post_init__(self):
        object.__setattr__(self, "apps", tuple(self.apps))
        if not self.apps:
            raise GenError("scenario has no applications")
        if self.request_count < 0 or self.window_ms <= 0:
            raise GenError("request_count must be non-negative and window_ms positive")
        if self.per_app_counts is None:
            if self.request_count % len(self.apps):
                raise GenError(
                    f"{self.request_count} requests do not divide evenly over {len(self.apps)} apps"
                )
        elif len(self.per_app_counts) != len(self.apps) or sum(self.per_app_counts) != self.request_count:
            raise GenError("per_app_counts must give one count per app summing to request_count")

    def counts(self) -> tuple:
        if self.per_app_counts is not None:
            return tuple(self.per_app_counts)
        return (self.request_count // len(self.apps),) * len(self.apps)


@dataclass(frozen=True, eq=False)
class Scenario:
    spec: ScenarioSpec
    seed: int
    requests: tuple
    apps: dict
    corpora: dict  # app_id -> NeighborIndex
    holdouts: dict  # app_id -> list of (point, label)
    stream_mix: dict  # app_id -> class mix of the request stream
    test_mix: dict  # app_id -> class mix the profiles were measured on

    @property
    def now(self) -> float:
        return self.spec.window_ms


def recall_pattern(label_count: int) -> np.ndarray:
    return np.linspace(1.0, -1.0, label_count) if label_count > 1 else np.zeros(1)


def class_recalls(accuracy: float, skew: float, label_count: int, variant: int) -> np.ndarray:
    """Per-class recalls averaging to ``accuracy``; skew is capped so none leaves [0, 1]."""
    skew = min(skew, accuracy, 1.0 - accuracy)
    sign = 1.0 if variant % 2 == 0 else -1.0
    return accuracy + sign * skew * recall_pattern(label_count)


def synth_confusion(recalls, row_totals) -> np.ndarray:
    """Integer confusion counts with the given recalls, errors spread over wrong labels."""
    recalls = np.asarray(recalls, dtype=float)
    n = len(recalls)
    z = np.zeros((n, n))
    for i, (rec, total) in enumerate(zip(recalls, row_totals)):
        hit = int(round(rec * total))
        z[i, i] = hit
        if n > 1:
            miss = total - hit
            share, extra = divmod(miss, n - 1)
            others = [j for j in range(n) if j != i]
            for pos, j in enumerate(others):
                z[i, j] = share + (1 if pos < extra else 0)
    return z


def build_models(app: AppSpec) -> tuple:
    mix = app.profiling_mix()
    totals = np.maximum(np.round(ROW_TOTAL * app.label_count * mix).astype(int), 1)
    out = []
    for j, m in enumerate(app.model_specs()):
        if not 0.0 <= m.accuracy <= 1.0 or m.infer_latency <= 0 or m.swap_latency < 0:
            raise GenError(f"{app.name}/{m.name}: invalid model parameters")
        z = synth_confusion(class_recalls(m.accuracy, app.recall_skew, app.label_count, j), totals)
        out.append(ModelProfile(f"{app.name}/{m.name}", z, m.infer_latency, m.swap_latency))
    return tuple(out)


def cluster_means(app: AppSpec) -> np.ndarray:
    dim = max(app.feature_dim, app.label_count)
    # scaled basis vectors: every pair of class means is cluster_separation apart
    return np.eye(app.label_count, dim) * (app.cluster_separation / np.sqrt(2.0))


def _stratified_labels(size: int, mix: np.ndarray, required: np.ndarray) -> np.ndarray:
    counts = np.floor(size * mix).astype(int)
    for i in np.argsort(-(size * mix - counts), kind="stable")[: size - counts.sum()]:
        counts[i] += 1
    counts = np.maximum(counts, required.astype(int))
    return np.repeat(np.arange(len(mix)), counts)


def _draw_points(rng, means, labels) -> np.ndarray:
    return means[labels] + rng.standard_normal((len(labels), means.shape[1]))


def _gen_scenario(spec: ScenarioSpec, seed: int) -> Scenario:
    root = np.random.SeedSequence(seed)
    app_seqs = root.spawn(len(spec.apps))
    apps, corpora, holdouts, stream_mix, test_mix = {}, {}, {}, {}, {}
    drafts = []
    for app_spec, count, seq in zip(spec.apps, spec.counts(), app_seqs):
        req_rng, data_rng = (np.random.default_rng(s) for s in seq.spawn(2))
        penalty = PenaltySpec.parse(spec.penalty or app_spec.penalty)
        mix = np.asarray(app_spec.class_mix)
        models = build_models(app_spec)
        apps[app_spec.name] = Application(app_spec.name, app_spec.label_count, models, penalty, mix)
        means = cluster_means(app_spec)

        labels = req_rng.choice(app_spec.label_count, size=count, p=mix)
        arrivals = req_rng.uniform(0.0, spec.window_ms, count)
        offsets = spec.deadline.draw(req_rng, count)
        points = _draw_points(req_rng, means, labels)
        for a, o, p, lab in zip(arrivals, offsets, points, labels):
            drafts.append((float(a), app_spec.name, float(a + o), p, int(lab)))

        prof_mix = app_spec.profiling_mix()
        required = (mix > 0).astype(int)
        corpus_labels = _stratified_labels(app_spec.corpus_size, prof_mix, required)
        holdout_labels = _stratified_labels(app_spec.holdout_size, prof_mix, np.zeros_like(required))
        corpora[app_spec.name] = NeighborIndex(
            _draw_points(data_rng, means, corpus_labels), corpus_labels, app_spec.label_count
        )
        holdout_points = _draw_points(data_rng, means, holdout_labels)
        holdouts[app_spec.name] = list(zip(holdout_points, holdout_labels.tolist()))
        stream_mix[app_spec.name] = mix
        test_mix[app_spec.name] = prof_mix

    drafts.sort(key=lambda d: (d[0], d[1]))
    requests = tuple(
        Request(f"r{i:04d}", app_id, arrival, deadline, point, label)
        for i, (arrival, app_id, deadline, point, label) in enumerate(drafts)
    )
    return Scenario(spec, seed, requests, apps, corpora, holdouts, stream_mix, test_mix)


_cached = lru_cache(maxsize=256)(_gen_scenario)


def gen_scenario(spec: ScenarioSpec, seed: Optional[int] = None) -> Scenario:
    """Generate requests, applications, and kNN corpora; identical inputs give identical output."""
    return _cached(spec, spec.seed if seed is None else int(seed))


# Latencies in ms. Accuracies are balanced-test-set means. Swap costs are
# comparable to inference costs, so model reuse matters.
FALL = AppSpec(
    "fall",
    2,
    (0.95, 0.05),
    (
        ModelSpec("minirocket", 0.71, 2.5, 40.0),
        ModelSpec("x3d-s", 0.72, 12.0, 20.0),
        ModelSpec("x3d-m", 0.73, 22.0, 28.0),
        ModelSpec("x3d-l", 0.77, 25.0, 11.0),
        ModelSpec("fusion", 0.91, 25.0, 42.0),
    ),
    recall_skew=0.10,
)
VOICE = AppSpec(
    "voice",
    6,
    (1 / 6,) * 6,
    (ModelSpec("lstm", 0.72, 16.0, 33.0), ModelSpec("mobilenet", 0.935, 22.0, 11.0)),
    recall_skew=0.08,
)
HEART = AppSpec(
    "heart",
    7,
    (0.80,) + (0.20 / 6,) * 6,
    (ModelSpec("cnn", 0.76, 4.5, 18.0), ModelSpec("ecgresnet34", 0.88, 27.5, 40.0)),
    recall_skew=0.08,
)
BUILTIN_APPS = {"fall": FALL, "voice": VOICE, "heart": HEART}


def builtin(name: str) -> ScenarioSpec:
    if name == "default_trio":
        return ScenarioSpec((FALL, VOICE, HEART), request_count=12, window_ms=100.0, deadline=DeadlineDist("uniform", 150.0))
    if name in BUILTIN_APPS:
        return ScenarioSpec((BUILTIN_APPS[name],), request_count=4, window_ms=100.0, deadline=DeadlineDist("uniform", 150.0))
    raise UnknownScenario(name)


BUILTIN_NAMES = ("fall", "voice", "heart", "default_trio")


def with_app_count(spec: ScenarioSpec, app_count: int) -> ScenarioSpec:
    """Cycle the scenario's applications into ``app_count`` distinct ones."""
    if app_count < 1:
        raise GenError("app_count must be positive")
    apps = []
    for i in range(app_count):
        base = spec.apps[i % len(spec.apps)]
        suffix = "" if i < len(spec.apps) else f"-{i // len(spec.apps) + 1}"
        apps.append(replace(base, name=base.name + suffix))
    return replace(spec, apps=tuple(apps), per_app_counts=_even_counts(spec.request_count, app_count))


def _even_counts(total: int, parts: int) -> tuple:
    q, r = divmod(total, parts)
    return tuple(q + (1 if i < r else 0) for i in range(parts))


def with_request_count(spec: ScenarioSpec, request_count: int) -> ScenarioSpec:
    return replace(spec, request_count=request_count, per_app_counts=_even_counts(request_count, len(spec.apps)))


def with_spread(spec: ScenarioSpec, spread_pct: float) -> ScenarioSpec:
    return replace(spec, apps=tuple(a.with_spread(spread_pct) for a in spec.apps))


@dataclass(frozen=True, eq=False)
class SmallInstance:
    """A brute-forceable window: requests, applications, and the window close."""

    requests: tuple
    apps: dict
    now: float


def small_instance(
    seed: int, max_apps: int = 3, max_requests: int = 6, max_models: int = 3, penalty: str = "sigmoid"
) -> SmallInstance:
    """Random tiny window for oracle cross-checks (no data points, profiled accuracy only)."""
    rng = np.random.default_rng([seed, 0x0AC1E])
    n_apps = int(rng.integers(1, max_apps + 1))
    n_req = int(rng.integers(n_apps, max(n_apps, max_requests) + 1))
    pen = PenaltySpec.parse(penalty)
    apps = {}
    for a in range(n_apps):
        labels = int(rng.integers(2, 5))
        models = []
        for j in range(int(rng.integers(1, max_models + 1))):
            recalls = rng.uniform(0.4, 0.98, labels)
            models.append(
                ModelProfile(
                    f"a{a}m{j}",
                    synth_confusion(recalls, [100] * labels),
                    float(rng.uniform(2.0, 40.0)),
                    float(rng.uniform(0.0, 40.0)),
                )
            )
        apps[f"a{a}"] = Application(f"a{a}", labels, models, pen)
    owners = [f"a{i}" for i in range(n_apps)] + [f"a{int(x)}" for x in rng.integers(0, n_apps, n_req - n_apps)]
    window = 100.0
    drafts = sorted(
        (float(rng.uniform(0.0, window)), app_id, float(rng.uniform(20.0, 200.0))) for app_id in owners
    )
    requests = tuple(Request(f"r{i:04d}", app_id, t, t + budget) for i, (t, app_id, budget) in enumerate(drafts))
    return SmallInstance(requests, apps, window)
