"""Deadline penalties, request utility, and accuracy-style scoring rules.

Penalties take a deadline ``d`` and a completion time ``e`` measured on the
same clock from the request's arrival, so ``d`` is the request's full time
budget. Everything here is a pure function and accepts numpy arrays for the
time arguments, which the exhaustive oracle relies on for vectorised
evaluation.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, EmptyConfusion, EmptyInput, InvalidDeadline

SIGMOID_EXPONENT = 3.0
THETA_TOL = 1e-9


class PenaltyKind(str, enum.Enum):
    STEP = "step"
    LINEAR = "linear"
    SIGMOID = "sigmoid"
    CONSTANT_ZERO = "zero"


@dataclass(frozen=True)
class PenaltySpec:
    kind: PenaltyKind = PenaltyKind.SIGMOID
    # Clamp with max(1, .) as literally written; turns linear/sigmoid into step.
    literal_max: bool = False

    @classmethod
    def parse(cls, value) -> "PenaltySpec":
        if isinstance(value, PenaltySpec):
            return value
        return cls(PenaltyKind(str(value).lower()))


def _sigmoid_core(x):
    # 1 / (1 + (x / (1 - x))^-3) == x^3 / (x^3 + (1 - x)^3) for x in (0, 1)
    x3 = x**SIGMOID_EXPONENT
    return x3 / (x3 + (1.0 - x) ** SIGMOID_EXPONENT)


def penalty(spec: PenaltySpec, d, e):
    """Fraction of utility lost when a request with budget ``d`` finishes at ``e``."""
    d_arr = np.asarray(d, dtype=float)
    e_arr = np.asarray(e, dtype=float)
    if np.any(d_arr <= 0):
        raise InvalidDeadline(f"deadline budget must be positive, got {d}")
    late = e_arr > d_arr
    kind = spec.kind
    if kind is PenaltyKind.CONSTANT_ZERO:
        out = np.zeros(np.broadcast(d_arr, e_arr).shape)
    elif kind is PenaltyKind.STEP or spec.literal_max:
        out = np.where(late, 1.0, 0.0)
    else:
        x = (e_arr - d_arr) / d_arr
        if kind is PenaltyKind.LINEAR:
            out = np.where(late, np.minimum(1.0, x), 0.0)
        else:
            xc = np.clip(x, 0.0, 1.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                core = _sigmoid_core(xc)
            out = np.where(late, np.where(x >= 1.0, 1.0, core), 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def sigmoid_literal(d: float, e: float) -> float:
    """The sigmoid penalty with the argument written as 1 - (2d - e)/d and min clamping."""
    if e <= d:
        return 0.0
    x = 1.0 - (2.0 * d - e) / d
    if x >= 1.0:
        return 1.0
    return 1.0 / (1.0 + (x / (1.0 - x)) ** -SIGMOID_EXPONENT)


def utility(accuracy, spec: PenaltySpec, d, t_start, latency):
    """Expected accuracy discounted by the penalty at completion ``t_start + latency``."""
    return accuracy * (1.0 - penalty(spec, d, np.add(t_start, latency)))


def _confusion(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[0] != z.shape[1]:
        raise DimensionError(f"confusion matrix must be square, got shape {z.shape}")
    if np.any(z < 0):
        raise ValueError("confusion counts must be non-negative")
    if z.sum() <= 0:
        raise EmptyConfusion("confusion matrix has zero total")
    return z


def accuracy_from_confusion(z) -> float:
    z = _confusion(z)
    return float(np.trace(z) / z.sum())


def recalls_from_confusion(z) -> np.ndarray:
    z = _confusion(z)
    rows = z.sum(axis=1)
    if np.any(rows <= 0):
        raise EmptyConfusion("every confusion row needs a positive total")
    return np.diag(z) / rows


def class_frequencies(z) -> np.ndarray:
    """Row frequencies of ``z``: the class mix of the set it was measured on."""
    z = _confusion(z)
    return z.sum(axis=1) / z.sum()


def check_theta(theta, tol: float = THETA_TOL) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.size == 0:
        raise DimensionError("theta must be a non-empty vector")
    if np.any(theta < -tol) or np.any(theta > 1 + tol) or abs(theta.sum() - 1.0) > tol:
        raise ValueError(f"theta is not a probability vector: {theta}")
    return theta


def theta_accuracy(theta, recalls) -> float:
    """Accuracy of a model whose per-class recalls are ``recalls`` on class mix ``theta``."""
    theta = np.asarray(theta, dtype=float)
    recalls = np.asarray(recalls, dtype=float)
    if theta.shape != recalls.shape:
        raise DimensionError(f"theta has {theta.shape}, recalls have {recalls.shape}")
    return float(np.dot(theta, recalls))


def quadratic_score_direct(probs: Sequence[Sequence[float]], labels: Sequence[int]) -> float:
    if len(probs) == 0:
        raise EmptyInput("quadratic score needs at least one point")
    if len(probs) != len(labels):
        raise DimensionError("probs and labels differ in length")
    p = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if np.any(np.abs(p.sum(axis=1) - 1.0) > THETA_TOL):
        raise ValueError("each probability vector must sum to 1")
    true_p = p[np.arange(len(p)), labels]
    return float(np.mean(2.0 * true_p - np.einsum("ij,ij->i", p, p)))


def quadratic_score_theta(theta, mu_p, mean_sq: float) -> float:
    """Quadratic score from class mix, per-class mean true-label probability, and mean p.p."""
    theta = np.asarray(theta, dtype=float)
    mu_p = np.asarray(mu_p, dtype=float)
    if theta.shape != mu_p.shape:
        raise DimensionError("theta and mu_p differ in length")
    return float(2.0 * np.dot(theta, mu_p) - mean_sq)


def quadratic_components(probs, labels, label_count: int):
    """Empirical (theta, mu_p, mean_sq) of a labelled probability sample."""
    p = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if len(p) == 0:
        raise EmptyInput("empty sample")
    n = len(p)
    counts = np.bincount(labels, minlength=label_count).astype(float)
    true_p = p[np.arange(n), labels]
    sums = np.bincount(labels, weights=true_p, minlength=label_count)
    mu_p = np.divide(sums, counts, out=np.zeros(label_count), where=counts > 0)
    mean_sq = float(np.mean(np.einsum("ij,ij->i", p, p)))
    return counts / n, mu_p, mean_sq


def theta_weighted_f1(theta, z) -> float:
    z = _confusion(z)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (z.shape[0],):
        raise DimensionError("theta length does not match confusion matrix")
    rows = z.sum(axis=1)
    if np.any(rows <= 0):
        raise EmptyConfusion("every confusion row needs a positive total")
    cols = z.sum(axis=0)
    tp = np.diag(z)
    rec = tp / rows
    prec = np.divide(tp, cols, out=np.zeros_like(tp), where=cols > 0)
    denom = prec + rec
    f1 = np.divide(2 * prec * rec, denom, out=np.zeros_like(tp), where=denom > 0)
    return float(np.dot(theta, f1))
