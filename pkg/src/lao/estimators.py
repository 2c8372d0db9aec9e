"""Budgeted, randomized estimators of the loss gradient.

Every estimator is split into an index-drawing step and a deterministic
builder (``*_from_indices`` / ``*_from_index``).  Learners draw indices in
bulk for speed; the verification oracles enumerate every possible index draw
and weight the builder outputs by their probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import BudgetLedger, InvalidInputError, LabeledInstance
from .smoothing import clip

# Above this Taylor degree the estimate is assembled in log-magnitude form.
_LOG_PRODUCT_DEGREE = 50


@dataclass
class SparseGradientEstimate:
    x_tilde: np.ndarray
    theta_tilde: float
    g_tilde: np.ndarray
    indices: np.ndarray
    g_bar: np.ndarray | None = None

    @classmethod
    def build(cls, x_tilde, theta_tilde, indices, clip_at=None):
        g = gradient_estimate(theta_tilde, x_tilde)
        g_bar = None if clip_at is None else clip(g, clip_at)
        return cls(x_tilde, float(theta_tilde), g, np.asarray(indices), g_bar)


@dataclass
class GenEstSample:
    n: int
    s_values: list = field(default_factory=list)
    theta_hat: float = 0.0
    attribute_reads: int = 0


def _check_finite(w):
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise InvalidInputError("regressor has non-finite entries")
    return w


def draw_weighted_index(weights: np.ndarray, u: float) -> int:
    """Inverse-CDF draw of ``j`` with probability ``weights[j] / sum(weights)``.

    ``u`` is uniform on [0, 1).  Zero-weight indices are never returned.
    """
    cum = np.cumsum(weights)
    j = int(np.searchsorted(cum, u * cum[-1], side="right"))
    if j >= cum.shape[0]:
        j = int(np.flatnonzero(weights)[-1])
    return j


def sparse_instance_from_indices(instance: LabeledInstance, indices, ledger: BudgetLedger) -> np.ndarray:
    """``(1/k) sum_r d x[i_r] e_{i_r}`` for the given (possibly repeated) indices."""
    indices = np.asarray(indices, dtype=np.intp)
    k = indices.shape[0]
    if k < 1:
        raise InvalidInputError("need at least one sampled index")
    d = instance.d
    values = instance.observe_many(indices, ledger)
    return np.bincount(indices, weights=values * (d / k), minlength=d)


def sample_sparse_instance(instance: LabeledInstance, k: int, ledger: BudgetLedger, rng) -> np.ndarray:
    """Unbiased k-read estimate of ``x``: uniform indices, with replacement."""
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    indices = rng.integers(0, instance.d, size=k)
    return sparse_instance_from_indices(instance, indices, ledger)


def residual_l2_from_index(w, instance: LabeledInstance, j: int, ledger: BudgetLedger, sq_norm=None) -> float:
    if sq_norm is None:
        sq_norm = float(np.dot(w, w))
    return sq_norm * instance.observe(j, ledger) / w[j] - instance.target


def residual_l1_from_index(w, instance: LabeledInstance, j: int, ledger: BudgetLedger, l1_norm=None) -> float:
    if l1_norm is None:
        l1_norm = float(np.abs(w).sum())
    return l1_norm * math.copysign(1.0, w[j]) * instance.observe(j, ledger) - instance.target


def residual_estimate_l2(w, instance: LabeledInstance, ledger: BudgetLedger, rng) -> float:
    """One-read unbiased estimate of ``w.x - y``, sampling ``j`` with prob. ``w[j]^2/||w||^2``.

    For ``w = 0`` the residual is exactly ``-y`` and nothing is read.
    """
    w = _check_finite(w)
    sq = w * w
    sq_norm = float(sq.sum())
    if sq_norm == 0.0:
        return -instance.target
    j = draw_weighted_index(sq, rng.random())
    return residual_l2_from_index(w, instance, j, ledger, sq_norm)


def residual_estimate_l1(w, instance: LabeledInstance, ledger: BudgetLedger, rng) -> float:
    """As :func:`residual_estimate_l2` but sampling ``j`` with prob. ``|w[j]|/||w||_1``."""
    w = _check_finite(w)
    a = np.abs(w)
    l1 = float(a.sum())
    if l1 == 0.0:
        return -instance.target
    j = draw_weighted_index(a, rng.random())
    return residual_l1_from_index(w, instance, j, ledger, l1)


def gradient_estimate(theta_tilde: float, x_tilde) -> np.ndarray:
    return theta_tilde * np.asarray(x_tilde, dtype=float)


def genest_sample_count(B_eff: float) -> int:
    """Samples averaged per residual factor for high Taylor degrees: ``ceil(4 B^2)``."""
    return math.ceil(4.0 * B_eff * B_eff)


def genest_degree_threshold(B_eff: float) -> float:
    return 2.0 * math.log2(genest_sample_count(B_eff))


def _assemble_theta_hat(n: int, a_n: float, s_values) -> float:
    if n <= _LOG_PRODUCT_DEGREE:
        return (2.0 ** (n + 1)) * a_n * math.prod(s_values)
    if any(s == 0.0 for s in s_values):
        return 0.0
    negatives = (a_n < 0) + sum(s < 0 for s in s_values)
    log_mag = (n + 1) * math.log(2.0) + math.log(abs(a_n)) + sum(math.log(abs(s)) for s in s_values)
    mag = math.exp(log_mag) if log_mag < 709.0 else math.inf
    return -mag if negatives % 2 else mag


def gen_est(
    w,
    instance: LabeledInstance,
    coeffs: Callable[[int], float],
    B_eff: float,
    ledger: BudgetLedger,
    rng,
) -> GenEstSample:
    """Unbiased estimate of ``f'(w.x - y)`` where ``f'(t) = sum_n coeffs(n) t^n``.

    Draws a degree ``n`` with probability ``2^-(n+1)`` and multiplies ``n``
    independent residual estimates.  Low degrees use one read per factor;
    above ``2 log2 N`` each factor averages ``N = ceil(4 B_eff^2)`` reads.
    A zero coefficient short-circuits to 0 without reading anything.
    """
    if not B_eff >= 1.0:
        raise InvalidInputError(f"B_eff must be >= 1, got {B_eff}")
    w = _check_finite(w)
    n = int(rng.geometric(0.5)) - 1
    a_n = coeffs(n)
    if a_n == 0.0:
        return GenEstSample(n=n, s_values=[], theta_hat=0.0, attribute_reads=0)

    sq = w * w
    sq_norm = float(sq.sum())
    y = instance.target
    N = genest_sample_count(B_eff)
    per_factor = 1 if n <= genest_degree_threshold(B_eff) else N
    before = ledger.total

    if sq_norm == 0.0:
        s_values = [-y] * n
    else:
        cum = np.cumsum(sq)
        flat = np.searchsorted(cum, rng.random(n * per_factor) * cum[-1], side="right")
        flat = np.minimum(flat, np.flatnonzero(sq)[-1])
        xs = instance.observe_many(flat, ledger)
        terms = (sq_norm * xs / w[flat] - y).reshape(n, per_factor)
        s_values = terms.mean(axis=1).tolist()

    theta_hat = _assemble_theta_hat(n, a_n, s_values)
    return GenEstSample(n=n, s_values=s_values, theta_hat=theta_hat, attribute_reads=ledger.total - before)


def gen_est_many(w, x, y: float, coeffs: Callable[[int], float], B_eff: float, size: int, rng):
    """Vectorized Monte-Carlo draws of the GenEst estimator on raw ``(x, y)``.

    Returns ``(theta_hats, reads)``: one estimate and its attribute cost per
    draw.  Same procedure as :func:`gen_est`, batched by degree; meant for
    verification runs that need ~1e5 draws.
    """
    if not B_eff >= 1.0:
        raise InvalidInputError(f"B_eff must be >= 1, got {B_eff}")
    w = _check_finite(w)
    x = np.asarray(x, dtype=float)
    sq = w * w
    sq_norm = float(sq.sum())
    N = genest_sample_count(B_eff)
    threshold = genest_degree_threshold(B_eff)

    degrees = rng.geometric(0.5, size=size) - 1
    theta = np.zeros(size)
    reads = np.zeros(size, dtype=np.int64)
    if sq_norm > 0:
        cum = np.cumsum(sq)
        last = np.flatnonzero(sq)[-1]
    for n in np.unique(degrees):
        n = int(n)
        a_n = coeffs(n)
        if a_n == 0.0:
            continue
        where = np.flatnonzero(degrees == n)
        count = where.size
        if n == 0:
            theta[where] = 2.0 * a_n
            continue
        per_factor = 1 if n <= threshold else N
        if sq_norm == 0.0:
            s = np.full((count, n), -float(y))
        else:
            j = np.searchsorted(cum, rng.random((count, n, per_factor)) * cum[-1], side="right")
            j = np.minimum(j, last)
            s = (sq_norm * x[j] / w[j] - y).mean(axis=2)
            reads[where] = n * per_factor
        if n <= _LOG_PRODUCT_DEGREE:
            theta[where] = (2.0 ** (n + 1)) * a_n * np.prod(s, axis=1)
        else:
            theta[where] = [_assemble_theta_hat(n, a_n, row) for row in s.tolist()]
    return theta, reads
