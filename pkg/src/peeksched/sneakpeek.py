"""Data-aware accuracy estimation.

A cheap nearest-neighbour look at each request's data yields multinomial
label evidence; combined with a Dirichlet prior it gives a posterior over the
request's class mix ``theta``, which reweights each model's per-class recall
into a request-specific accuracy.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from . import scoring
from .core import ModelProfile
from .errors import DimensionError, InsufficientCorpus, MissingPriorHint

DEFAULT_K = 5
STRONG_PRIOR_FLOOR = 1e-6
SPLIT_THRESHOLD = 0.5


class PriorKind(str, enum.Enum):
    UNINFORMATIVE = "uninformative"
    WEAK = "weak"
    STRONG = "strong"


@dataclass(frozen=True, eq=False)
class DirichletBelief:
    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float)
        if alpha.ndim != 1 or alpha.size == 0 or np.any(alpha <= 0):
            raise ValueError(f"Dirichlet concentrations must be positive, got {alpha}")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)


@dataclass(frozen=True, eq=False)
class Evidence:
    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        if counts.ndim != 1 or np.any(counts < 0):
            raise ValueError("evidence counts must be a non-negative vector")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def k(self) -> int:
        return int(self.counts.sum())


class NeighborIndex:
    """Exact Euclidean kNN over a fixed labelled corpus."""

    def __init__(self, points, labels, label_count: Optional[int] = None):
        pts = np.array(points, dtype=float)
        if pts.ndim != 2 or len(pts) == 0:
            raise InsufficientCorpus("neighbor index needs a non-empty 2-d corpus")
        labels = np.array(labels, dtype=np.int64)
        if labels.shape != (len(pts),):
            raise DimensionError("one label per corpus point is required")
        pts.setflags(write=False)
        labels.setflags(write=False)
        self.points = pts
        self.labels = labels
        self.label_count = int(label_count if label_count is not None else labels.max() + 1)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return len(self.points)

    def neighbors(self, point, k: int) -> np.ndarray:
        """Indices of the k nearest points; equal distances resolve to insertion order."""
        point = np.asarray(point, dtype=float)
        if point.shape != (self.dimension,):
            raise DimensionError(f"point has shape {point.shape}, index dimension is {self.dimension}")
        if k < 1 or k > len(self):
            raise InsufficientCorpus(f"k={k} with a corpus of {len(self)}")
        dist = np.sum((self.points - point) ** 2, axis=1)
        return np.argsort(dist, kind="stable")[:k]


def make_prior(kind, label_count: int, class_freq_hint=None, window_request_count: Optional[int] = None) -> DirichletBelief:
    kind = PriorKind(kind)
    if kind is PriorKind.UNINFORMATIVE:
        return DirichletBelief(np.full(label_count, 0.5))
    if class_freq_hint is None:
        raise MissingPriorHint(f"{kind.value} prior needs a class frequency hint")
    hint = scoring.check_theta(class_freq_hint)
    if hint.size != label_count:
        raise DimensionError("hint length does not match label count")
    if kind is PriorKind.WEAK:
        # zero-frequency classes still need a positive concentration
        return DirichletBelief(np.maximum(hint, STRONG_PRIOR_FLOOR))
    if window_request_count is None or window_request_count <= 0:
        raise MissingPriorHint("strong prior needs the expected request count per window")
    return DirichletBelief(np.maximum(hint * window_request_count, STRONG_PRIOR_FLOOR))


def knn_evidence(point, index: NeighborIndex, k: int = DEFAULT_K) -> Evidence:
    idx = index.neighbors(point, k)
    return Evidence(np.bincount(index.labels[idx], minlength=index.label_count))


def one_hot_evidence(label: int, label_count: int) -> Evidence:
    """Single-prediction evidence: a unit vector at the predicted label."""
    counts = np.zeros(label_count, dtype=np.int64)
    counts[label] = 1
    return Evidence(counts)


def posterior(prior: DirichletBelief, evidence: Evidence) -> DirichletBelief:
    if prior.alpha.shape != evidence.counts.shape:
        raise DimensionError(f"prior has {prior.alpha.size} classes, evidence has {evidence.counts.size}")
    return DirichletBelief(prior.alpha + evidence.counts)


def theta_estimate(belief: DirichletBelief) -> np.ndarray:
    """Posterior mean of the class mix."""
    return belief.alpha / belief.alpha.sum()


def dynamic_accuracy(theta, profile: ModelProfile) -> float:
    return scoring.theta_accuracy(theta, profile.per_class_recall)


def confusion_row(target_accuracy: float, true_label: int, label_count: int) -> np.ndarray:
    """Label distribution of a synthetic predictor: errors spread evenly over wrong labels."""
    if not 0.0 <= target_accuracy <= 1.0:
        raise ValueError("target accuracy must lie in [0, 1]")
    if label_count < 2:
        raise ValueError("a synthetic estimator needs at least two labels")
    row = np.full(label_count, (1.0 - target_accuracy) / (label_count - 1))
    row[true_label] = target_accuracy
    return row


def simulated_estimator(target_accuracy: float, true_label: int, label_count: int, k: int, rng_seed) -> Evidence:
    """k pseudo-neighbour labels drawn from the synthetic confusion row of ``true_label``."""
    row = confusion_row(target_accuracy, true_label, label_count)
    rng = np.random.default_rng(rng_seed)
    return Evidence(rng.multinomial(k, row))


def estimate_theta(point, index: NeighborIndex, k: int, prior: DirichletBelief) -> np.ndarray:
    return theta_estimate(posterior(prior, knn_evidence(point, index, k)))


def confusion_from_predictions(labels, predictions, label_count: int) -> np.ndarray:
    """Confusion counts; a class missing from ``labels`` gets one uniformly spread pseudo-count."""
    z = np.zeros((label_count, label_count))
    np.add.at(z, (np.asarray(labels, dtype=int), np.asarray(predictions, dtype=int)), 1.0)
    empty = z.sum(axis=1) == 0
    z[empty] = 1.0 / label_count
    return z


def profile_sneakpeek(
    index: NeighborIndex,
    k: int,
    prior: DirichletBelief,
    holdout: Sequence,
    model_id: str = "sneakpeek",
) -> ModelProfile:
    """Profile the kNN estimator as a zero-latency model on a labelled holdout set."""
    if len(holdout) == 0:
        raise InsufficientCorpus("holdout set is empty")
    labels, preds = [], []
    for point, label in holdout:
        theta = estimate_theta(point, index, k, prior)
        preds.append(int(np.argmax(theta)))
        labels.append(int(label))
    z = confusion_from_predictions(labels, preds, index.label_count)
    return ModelProfile(model_id, z, infer_latency=0.0, swap_latency=0.0)


def profile_simulated(
    target_accuracy: float, label_count: int, k: int, prior: DirichletBelief, holdout_labels, seed: int, model_id="sneakpeek-sim"
) -> ModelProfile:
    """Profile the synthetic estimator the same way as :func:`profile_sneakpeek`."""
    ss = np.random.SeedSequence(seed)
    preds = []
    for label, child in zip(holdout_labels, ss.spawn(len(holdout_labels))):
        ev = simulated_estimator(target_accuracy, int(label), label_count, k, child)
        preds.append(int(np.argmax(theta_estimate(posterior(prior, ev)))))
    z = confusion_from_predictions(holdout_labels, preds, label_count)
    return ModelProfile(model_id, z, infer_latency=0.0, swap_latency=0.0)


def split_groups(group: Sequence[str], thetas: Mapping[str, np.ndarray]) -> list:
    """Split a same-application group by confident argmax label.

    Requests whose largest theta component exceeds 0.5 form one subgroup per
    label. The rest are inconclusive and join the largest conclusive
    subgroup (lowest label on ties), or stay as the only subgroup.
    Subgroups are ordered by label; members keep their input order.
    """
    by_label: dict = {}
    residual = []
    for rid in group:
        theta = np.asarray(thetas[rid])
        top = int(np.argmax(theta))
        if theta[top] > SPLIT_THRESHOLD:
            by_label.setdefault(top, []).append(rid)
        else:
            residual.append(rid)
    if not by_label:
        return [list(group)] if group else []
    if residual:
        target = max(sorted(by_label), key=lambda lab: len(by_label[lab]))
        merged = set(by_label[target]) | set(residual)
        by_label[target] = [rid for rid in group if rid in merged]
    return [by_label[lab] for lab in sorted(by_label)]
