"""Online learning loops that read only a few attributes of each example.

Each ``*_fit`` function makes one pass over a normalized :class:`Dataset`,
reads attributes exclusively through :class:`LabeledInstance.observe*`, and
returns the uniform average of its iterates.  The full-information baselines
run the same loops with exact gradients and pay ``d`` reads per example.
"""

from __future__ import annotations

import math

import numpy as np

from .core import (
    BudgetExhausted,
    BudgetLedger,
    ConfigurationError,
    FitResult,
    InvalidInputError,
    LabeledInstance,
    LearnerConfig,
    TraceRecord,
    parse_eta,
    shrink_into_ball,
)
from .data import CERT_L2, CERT_LINF, Dataset, verify_certificate
from .estimators import draw_weighted_index, gen_est, residual_l1_from_index, residual_l2_from_index, sparse_instance_from_indices
from .smoothing import LossSpec, erf_taylor_coeff

TRACE_POINTS = 200
_FEAS_RTOL = 1e-12


# --------------------------------------------------------------------------- step sizes


def default_eta_aerr(k: int, d: int, m: int) -> float:
    """``sqrt(k / (2 d m))``."""
    if min(k, d, m) < 1:
        raise ConfigurationError("k, d and m must all be >= 1")
    return math.sqrt(k / (2.0 * d * m))


def default_eta_aelr(B: float, k: int, d: int, m: int) -> float:
    """``(1/G) sqrt(log(2d) / 5m)`` with ``G = 2B sqrt(2d/k)``.

    Equivalently ``(1/2B) sqrt(k log(2d) / (10 d m))``; satisfies
    ``eta * G <= 1/2`` whenever ``m >= log(2d)``.
    """
    if min(k, d, m) < 1 or not B > 0:
        raise ConfigurationError("k, d, m must be >= 1 and B > 0")
    log2d = math.log(2 * d)
    if m < log2d:
        raise ConfigurationError(
            f"the Lasso step-size guarantee needs m >= log(2d) = {log2d:.3f}, got m = {m}"
        )
    return math.sqrt(k * log2d / (10.0 * d * m)) / (2.0 * B)


def resolve_eta(eta, auto_value) -> float:
    fixed, mult = parse_eta(eta)
    if fixed is not None:
        return fixed
    return mult * auto_value()


# --------------------------------------------------------------------------- evaluation


def predict(w, instance) -> float:
    """``w.x``.  Reads ``x`` directly: evaluation is outside the attribute budget."""
    w = np.asarray(w, dtype=float)
    x = instance._x * instance._scale if isinstance(instance, LabeledInstance) else np.asarray(instance, dtype=float)
    if x.shape != w.shape:
        raise InvalidInputError(f"dimension mismatch: w has {w.shape[0]}, x has {x.shape[0]}")
    return float(w @ x)


def evaluate(w, dataset: Dataset, loss: LossSpec | None = None) -> float:
    """Mean loss of ``x -> w.x`` over ``dataset`` (``1/2 (w.x - y)^2`` by default)."""
    loss = loss or LossSpec()
    w = np.asarray(w, dtype=float)
    if w.shape != (dataset.d,):
        raise InvalidInputError(f"dimension mismatch: w has {w.shape}, data has d = {dataset.d}")
    return float(np.mean(loss(dataset.X @ w, dataset.y)))


def mse(w, dataset: Dataset) -> float:
    """Plain mean squared error ``mean((w.x - y)^2)``, as plotted in the trace."""
    r = dataset.X @ w - dataset.y
    return float(r @ r) / len(dataset)


# --------------------------------------------------------------------------- shared loop plumbing


class _Run:
    """Bookkeeping common to every learner: budget, averaging, feasibility, trace."""

    def __init__(self, data: Dataset, config: LearnerConfig, certificate: str, testset, worst_cost, norm_ord):
        if not isinstance(data, Dataset):
            raise InvalidInputError("data must be a Dataset")
        if data.norm_certificate is None:
            raise ConfigurationError(
                "training data is not normalized; call lao.data.normalize first"
            )
        verify_certificate(data)
        if certificate == CERT_L2 and data.norm_certificate != CERT_L2:
            raise ConfigurationError("this learner needs instances with ||x||_2 <= 1")
        if data.label_bound > config.B * (1 + _FEAS_RTOL):
            raise ConfigurationError(
                f"labels reach |y| = {data.label_bound:.6g} but B = {config.B}; raise B or rescale y"
            )
        if testset is not None and testset.d != data.d:
            raise InvalidInputError("test set dimension differs from training data")

        self.data = data
        self.config = config
        self.d = data.d
        self.m = len(data) if config.m is None else min(int(config.m), len(data))
        if self.m < 1:
            raise ConfigurationError("no training examples")
        # The auto step size is planned for the examples the budget can pay for.
        self.m_plan = self.m
        if config.budget is not None and config.m is None:
            self.m_plan = max(1, min(self.m, config.budget // max(1, worst_cost)))
        self.trace_every = config.trace_every or max(1, math.ceil(self.m_plan / TRACE_POINTS))
        self.ledger = BudgetLedger(cap=config.budget)
        self.testset = testset
        self.worst_cost = worst_cost
        self.norm_ord = norm_ord
        self.w_sum = np.zeros(self.d)
        self.loss_sum = 0.0
        self.n = 0
        self.fallbacks = 0
        self.max_norm = 0.0
        self.violations = 0
        self.eval_reads = 0
        self.trace: list[TraceRecord] = []
        self.stopped = False
        self.steps = None
        if config.record_steps:
            self.steps = {"w": np.zeros((self.m, self.d)), "g": np.zeros((self.m, self.d))}

    def can_start(self) -> bool:
        if self.ledger.remaining < self.worst_cost:
            self.stopped = True
            return False
        self.ledger.start_example()
        return True

    def accept(self, w, g, loss_estimate) -> None:
        """Account for iterate ``w_t`` (used on example t) and its gradient estimate."""
        if self.steps is not None:
            self.steps["w"][self.n] = w
            self.steps["g"][self.n] = g
        self.w_sum += w
        self.loss_sum += loss_estimate
        self.n += 1
        if self.n % self.trace_every == 0:
            self._record()

    def check_feasible(self, w) -> None:
        norm = float(np.abs(w).sum()) if self.norm_ord == 1 else math.sqrt(float(w @ w))
        if norm > self.max_norm:
            self.max_norm = norm
        if norm > self.config.B * (1 + _FEAS_RTOL):
            self.violations += 1

    def _record(self) -> None:
        w_bar = self.w_sum / self.n
        err = float("nan")
        if self.testset is not None:
            err = mse(w_bar, self.testset)
            self.eval_reads += self.testset.X.size
        self.trace.append(TraceRecord(self.n, self.ledger.total, err, self.loss_sum / self.n))

    def finish(self, eta: float) -> FitResult:
        if self.n == 0:
            raise ConfigurationError("the attribute budget does not cover a single example")
        if not self.trace or self.trace[-1].example_index != self.n:
            self._record()
        steps = None
        if self.steps is not None:
            steps = {key: val[: self.n] for key, val in self.steps.items()}
        return FitResult(
            w_bar=self.w_sum / self.n,
            trace=self.trace,
            ledger_total=self.ledger.total,
            n_examples=self.n,
            eta=eta,
            fallback_steps=self.fallbacks,
            max_iterate_norm=self.max_norm,
            norm_violations=self.violations,
            stopped_by_budget=self.stopped,
            eval_reads=self.eval_reads,
            steps=steps,
        )


def _project_inplace(v: np.ndarray, B: float) -> np.ndarray:
    norm = math.sqrt(float(v @ v))
    if not math.isfinite(norm):
        raise FloatingPointError("iterate became non-finite; the step size is too large")
    if norm > B:
        v *= B / norm
        shrink_into_ball(v, B)
    return v


def _initial_l2(d: int, B: float) -> np.ndarray:
    w = np.zeros(d)
    w[0] = B / 2.0
    return w


def _mw_weights(log_zp: np.ndarray, log_zm: np.ndarray, B: float) -> np.ndarray:
    top = max(log_zp.max(), log_zm.max())
    zp = np.exp(log_zp - top)
    zm = np.exp(log_zm - top)
    return (zp - zm) * (B / (zp.sum() + zm.sum()))


# --------------------------------------------------------------------------- ridge


def aerr_fit(data: Dataset, config: LearnerConfig, testset: Dataset | None = None) -> FitResult:
    """Attribute-efficient Ridge regression (projected OGD on sampled gradients).

    Per example: ``k`` uniform reads build ``x~``, one read weighted by ``w^2``
    estimates the residual, and ``w <- Proj(w - eta * theta~ * x~)``.
    Costs ``k + 1`` reads, or ``k`` when ``w = 0``.
    """
    run = _Run(data, config, CERT_L2, testset, config.k + 1, 2)
    d, k, B = run.d, config.k, config.B
    eta = resolve_eta(config.eta, lambda: default_eta_aerr(k, d, run.m_plan))
    rng = np.random.default_rng(config.seed)
    sample_idx = rng.integers(0, d, size=(run.m, k))
    sample_u = rng.random(run.m)

    w = _initial_l2(d, B)
    for t in range(run.m):
        if not run.can_start():
            break
        inst = data.instance(t)
        x_tilde = sparse_instance_from_indices(inst, sample_idx[t], run.ledger)
        sq = w * w
        sq_norm = float(sq.sum())
        if sq_norm == 0.0:
            theta = -inst.target
            run.fallbacks += 1
        else:
            j = draw_weighted_index(sq, sample_u[t])
            theta = residual_l2_from_index(w, inst, j, run.ledger, sq_norm)
        g = theta * x_tilde
        run.accept(w, g, 0.5 * theta * theta)
        w = _project_inplace(w - eta * g, B)
        run.check_feasible(w)
    return run.finish(eta)


def ogd_full_fit(data: Dataset, config: LearnerConfig, testset: Dataset | None = None,
                 loss: LossSpec | None = None) -> FitResult:
    """Full-information projected OGD: exact (sub)gradients, ``d`` reads per example.

    ``loss`` selects the squared loss (default) or the delta-insensitive loss,
    whose subgradient is ``sign(r) 1{|r| > delta} x``.
    """
    loss = loss or LossSpec()
    if loss.kind == "smoothed_svr":
        raise ConfigurationError("the full-information baseline supports squared or delta_insensitive loss")
    d = data.d
    run = _Run(data, config, CERT_L2, testset, d, 2)
    B = config.B
    eta = resolve_eta(config.eta, lambda: default_eta_aerr(d, d, run.m_plan))
    everything = np.arange(d)

    w = _initial_l2(d, B)
    for t in range(run.m):
        if not run.can_start():
            break
        inst = data.instance(t)
        x = inst.observe_many(everything, run.ledger)
        r = float(w @ x) - inst.target
        if loss.kind == "squared":
            g = r * x
            observed = 0.5 * r * r
        else:
            g = math.copysign(1.0, r) * x if abs(r) > loss.delta else np.zeros(d)
            observed = max(0.0, abs(r) - loss.delta)
        run.accept(w, g, observed)
        w = _project_inplace(w - eta * g, B)
        run.check_feasible(w)
    return run.finish(eta)


# --------------------------------------------------------------------------- lasso


def aelr_fit(data: Dataset, config: LearnerConfig, testset: Dataset | None = None) -> FitResult:
    """Attribute-efficient Lasso regression (clipped exponentiated gradient).

    ``w = (z+ - z-) B / (|z+|_1 + |z-|_1)``; sampled gradient entries are
    clipped to ``[-1/eta, 1/eta]`` before the multiplicative update.  The
    weights are kept in log space, which leaves ``w`` unchanged and avoids
    under/overflow on long runs.  The first step has ``w = 0`` and costs ``k``.
    """
    run = _Run(data, config, CERT_LINF, testset, config.k + 1, 1)
    d, k, B = run.d, config.k, config.B
    eta = resolve_eta(config.eta, lambda: default_eta_aelr(B, k, d, run.m_plan))
    rng = np.random.default_rng(config.seed)
    sample_idx = rng.integers(0, d, size=(run.m, k))
    sample_u = rng.random(run.m)
    cap = 1.0 / eta

    log_zp = np.zeros(d)
    log_zm = np.zeros(d)
    for t in range(run.m):
        if not run.can_start():
            break
        w = _mw_weights(log_zp, log_zm, B)
        run.check_feasible(w)
        inst = data.instance(t)
        x_tilde = sparse_instance_from_indices(inst, sample_idx[t], run.ledger)
        a = np.abs(w)
        l1 = float(a.sum())
        if l1 == 0.0:
            theta = -inst.target
            run.fallbacks += 1
        else:
            j = draw_weighted_index(a, sample_u[t])
            theta = residual_l1_from_index(w, inst, j, run.ledger, l1)
        g = theta * x_tilde
        run.accept(w, g, 0.5 * theta * theta)
        g_bar = np.clip(g, -cap, cap)
        log_zp -= eta * g_bar
        log_zm += eta * g_bar
    return run.finish(eta)


def eg_full_fit(data: Dataset, config: LearnerConfig, testset: Dataset | None = None) -> FitResult:
    """Full-information EG+/- baseline: exact gradients, ``d`` reads per example.

    The clip at ``1/eta`` is kept so the update is literally the Lasso loop's.
    """
    d = data.d
    run = _Run(data, config, CERT_LINF, testset, d, 1)
    B = config.B
    eta = resolve_eta(config.eta, lambda: default_eta_aelr(B, d, d, run.m_plan))
    cap = 1.0 / eta
    everything = np.arange(d)

    log_zp = np.zeros(d)
    log_zm = np.zeros(d)
    for t in range(run.m):
        if not run.can_start():
            break
        w = _mw_weights(log_zp, log_zm, B)
        run.check_feasible(w)
        inst = data.instance(t)
        x = inst.observe_many(everything, run.ledger)
        r = float(w @ x) - inst.target
        g = r * x
        run.accept(w, g, 0.5 * r * r)
        g_bar = np.clip(g, -cap, cap)
        log_zp -= eta * g_bar
        log_zm += eta * g_bar
    return run.finish(eta)


# --------------------------------------------------------------------------- SVR


def aesvr_effective_bound(B: float, epsilon: float) -> float:
    """Scale ``2B/eps`` of the rescaled labels, floored at 1 for the GenEst preconditions."""
    return max(1.0, 2.0 * B / epsilon)


def aesvr_fit(data: Dataset, config: LearnerConfig, testset: Dataset | None = None) -> FitResult:
    """Attribute-efficient SVR on the erf-smoothed delta-insensitive loss.

    As :func:`aerr_fit`, except the residual factor is
    ``(GenEst(w, x/eps, (y+delta)/eps) + GenEst(w, x/eps, (y-delta)/eps)) / 2``
    using the erf series.  ``x~`` is built from the unscaled ``x``.  The number
    of reads per example is random (at most ``k + 6`` in expectation), so a
    budget cap can interrupt an example midway; that example is dropped.
    """
    if config.delta > config.B:
        raise ConfigurationError(f"delta = {config.delta} exceeds B = {config.B}")
    run = _Run(data, config, CERT_L2, testset, config.k, 2)
    d, k, B = run.d, config.k, config.B
    eps, delta = config.epsilon, config.delta
    eta = resolve_eta(config.eta, lambda: default_eta_aerr(k, d, run.m_plan))
    B_eff = aesvr_effective_bound(B, eps)
    rng = np.random.default_rng(config.seed)

    w = _initial_l2(d, B)
    for t in range(run.m):
        if not run.can_start():
            break
        inst = data.instance(t)
        try:
            x_tilde = sparse_instance_from_indices(inst, rng.integers(0, d, size=k), run.ledger)
            upper = gen_est(w, inst.rescaled(1.0 / eps, (inst.target + delta) / eps),
                            erf_taylor_coeff, B_eff, run.ledger, rng)
            lower = gen_est(w, inst.rescaled(1.0 / eps, (inst.target - delta) / eps),
                            erf_taylor_coeff, B_eff, run.ledger, rng)
        except BudgetExhausted:
            run.stopped = True
            break
        if not w.any():
            run.fallbacks += 1
        theta = 0.5 * (upper.theta_hat + lower.theta_hat)
        g = theta * x_tilde
        run.accept(w, g, float("nan"))
        w = _project_inplace(w - eta * g, B)
        run.check_feasible(w)
    return run.finish(eta)


FITTERS = {
    "aerr": aerr_fit,
    "aelr": aelr_fit,
    "aesvr": aesvr_fit,
    "ogd": ogd_full_fit,
    "eg": eg_full_fit,
}

NORM_OF = {"aerr": CERT_L2, "aesvr": CERT_L2, "ogd": CERT_L2, "aelr": CERT_LINF, "eg": CERT_LINF}

FULL_INFORMATION = frozenset({"ogd", "eg"})


def cost_per_example(algorithm: str, k: int, d: int) -> float:
    """Reads per example used to plan how many examples a budget buys."""
    if algorithm in FULL_INFORMATION:
        return d
    if algorithm == "aesvr":
        return k + 6
    return k + 1
