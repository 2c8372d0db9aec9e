"""Verification oracles for the estimator and learner invariants.

Exact checks enumerate every index draw of an estimator and weight the
outcomes of the real builder functions by their probabilities, so the oracle
exercises the same code path as the learners.  The GenEst check is
Monte-Carlo because its degree distribution has unbounded support.

Each suite returns a list of :class:`Check`; ``margin`` is the slack left
before a check would fail (negative means it failed).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .core import BudgetLedger, LabeledInstance, LearnerConfig
from .data import CERT_L2, CERT_LINF, Dataset, synth_linear
from .estimators import (
    gen_est_many,
    residual_l1_from_index,
    residual_l2_from_index,
    sparse_instance_from_indices,
)
from .learners import aelr_fit, aerr_fit, aesvr_fit
from .smoothing import (
    clip,
    delta_insensitive_loss,
    erf_series,
    erf_taylor_coeff,
    f_eps,
    mw_second_order_terms,
)

UNBIASED_TOL = 1e-12


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    passed: bool
    margin: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.suite}/{self.name}  margin={self.margin:.3g}  {self.detail}".rstrip()


# --------------------------------------------------------------------------- enumeration oracle


@dataclass(frozen=True)
class GradientMoments:
    """Exact moments of ``g~`` (and ``x~``) over every index draw."""

    mean: np.ndarray
    second_moment: np.ndarray  # E[g~^2], entrywise
    mean_sq_norm: float  # E[||g~||_2^2]
    x_tilde_sq_norm: float  # E[||x~||_2^2]
    outcomes: int


def enumerate_gradient(w, x, y, k: int, kind: str = "l2") -> GradientMoments:
    """Enumerate all ``d^k`` sample tuples and every residual index ``j``.

    ``kind`` picks the residual sampler: ``"l2"`` draws ``j`` with probability
    ``w[j]^2 / ||w||_2^2``, ``"l1"`` with ``|w[j]| / ||w||_1``.  For ``w = 0``
    the residual is the exact ``-y`` and no ``j`` is drawn.
    """
    w = np.asarray(w, dtype=float)
    inst = LabeledInstance(x, y)
    d = inst.d
    if kind == "l2":
        weights = w * w
        residual = residual_l2_from_index
    elif kind == "l1":
        weights = np.abs(w)
        residual = residual_l1_from_index
    else:
        raise ValueError(f"kind must be 'l2' or 'l1', got {kind!r}")
    total = float(weights.sum())
    if total > 0:
        residuals = [(weights[j] / total, residual(w, inst, j, BudgetLedger()))
                     for j in np.flatnonzero(weights)]
    else:
        residuals = [(1.0, -inst.target)]

    p_tuple = float(d) ** -k
    mean = np.zeros(d)
    second = np.zeros(d)
    x_sq = 0.0
    count = 0
    for tup in itertools.product(range(d), repeat=k):
        x_tilde = sparse_instance_from_indices(inst, np.array(tup), BudgetLedger())
        x_sq += p_tuple * float(x_tilde @ x_tilde)
        for p_j, theta in residuals:
            g = theta * x_tilde
            mean += (p_tuple * p_j) * g
            second += (p_tuple * p_j) * g * g
            count += 1
    return GradientMoments(mean, second, float(second.sum()), x_sq, count)


def _random_point(rng, d, radius, kind):
    """A point of the ``kind`` ball of given radius; on the boundary 30% of the time."""
    v = rng.standard_normal(d)
    if kind == "l2":
        v /= np.linalg.norm(v)
    elif kind == "l1":
        v = rng.laplace(size=d)
        v /= np.abs(v).sum()
    else:  # linf
        v = rng.uniform(-1.0, 1.0, size=d)
        return radius * v
    scale = 1.0 if rng.random() < 0.3 else rng.random()
    return radius * scale * v


def _estimator_cases(seed, dims=(1, 2, 3, 4), ks=(1, 2), draws=50):
    rng = np.random.default_rng(seed)
    for kind in ("l2", "l1"):
        x_kind = "l2" if kind == "l2" else "linf"
        for d in dims:
            for k in ks:
                for _ in range(draws):
                    B = float(rng.choice([0.5, 1.0, 2.0]))
                    w = _random_point(rng, d, B, kind)
                    x = _random_point(rng, d, 1.0, x_kind)
                    y = float(rng.uniform(-B, B))
                    yield kind, d, k, B, w, x, y


# --------------------------------------------------------------------------- suites


def suite_unbiased(seed: int = 0, draws: int = 50) -> list[Check]:
    worst = {}
    for kind, d, k, _B, w, x, y in _estimator_cases(seed, draws=draws):
        exact = (float(w @ x) - y) * x
        err = float(np.abs(enumerate_gradient(w, x, y, k, kind).mean - exact).max())
        key = (kind, d, k)
        worst[key] = max(worst.get(key, 0.0), err)
    return [
        Check("unbiased", f"{kind}_d{d}_k{k}", err <= UNBIASED_TOL, UNBIASED_TOL - err,
              f"max|E[g~] - (w.x-y)x| = {err:.2e} over {draws} draws")
        for (kind, d, k), err in sorted(worst.items())
    ]


def suite_variance(seed: int = 1, draws: int = 50) -> list[Check]:
    """Second-moment bounds of the sampled gradient and of ``x~``; margins are relative."""
    worst: dict[tuple, float] = {}
    for kind, d, k, B, w, x, y in _estimator_cases(seed, draws=draws):
        mom = enumerate_gradient(w, x, y, k, kind)
        bound = 8.0 * B * B * d / k
        value = mom.mean_sq_norm if kind == "l2" else float(mom.second_moment.max())
        key = (kind, d, k)
        worst[key] = min(worst.get(key, math.inf), 1.0 - value / bound)
        x_norm = float(x @ x)
        if x_norm > 0:
            xkey = ("x_tilde", d, k)
            worst[xkey] = min(worst.get(xkey, math.inf), 1.0 - mom.x_tilde_sq_norm / (2.0 * d * x_norm / k))
    checks = []
    for (kind, d, k), margin in sorted(worst.items()):
        what = {"l2": "E||g~||^2 <= 8B^2d/k", "l1": "||E[g~^2]||_inf <= 8B^2d/k",
                "x_tilde": "E||x~||^2 <= 2d||x||^2/k"}[kind]
        # d = 1, k = 2 meets the x~ bound with equality; allow rounding.
        checks.append(Check("variance", f"{kind}_d{d}_k{k}", margin >= -1e-12, margin, what))
    return checks


def suite_genest(seed: int = 2, configs: int = 20, draws: int = 200_000, d: int = 5) -> list[Check]:
    """Monte-Carlo mean of GenEst with erf coefficients against ``erf(w.x - y)``."""
    rng = np.random.default_rng(seed)
    checks = []
    all_reads = []
    for c in range(configs):
        w = _random_point(rng, d, 1.0, "l2")
        x = _random_point(rng, d, 1.0, "l2")
        y = float(rng.uniform(-1.0, 1.0))
        theta, reads = gen_est_many(w, x, y, erf_taylor_coeff, 1.0, draws, rng)
        target = float(erf(w @ x - y))
        se = float(theta.std(ddof=1)) / math.sqrt(draws)
        z = abs(float(theta.mean()) - target) / se if se > 0 else 0.0
        checks.append(Check("genest", f"erf_config{c}", z <= 4.0, 4.0 - z,
                            f"|mean - erf| = {z:.2f} SE"))
        all_reads.append(reads)
    mean_reads = float(np.concatenate(all_reads).mean())
    checks.append(Check("genest", "mean_reads", mean_reads <= 3.0, 3.0 - mean_reads,
                        f"{mean_reads:.4f} reads per call"))

    # A single linear term: E[theta] = c (w.x - y).
    coef = 0.7
    w = _random_point(rng, d, 1.0, "l2")
    x = _random_point(rng, d, 1.0, "l2")
    y = 0.3
    theta, _ = gen_est_many(w, x, y, lambda n: coef if n == 1 else 0.0, 1.0, draws, rng)
    se = float(theta.std(ddof=1)) / math.sqrt(draws)
    z = abs(float(theta.mean()) - coef * (float(w @ x) - y)) / se
    checks.append(Check("genest", "linear_term", z <= 4.0, 4.0 - z, f"{z:.2f} SE"))
    return checks


def suite_clip(seed: int = 3, cases: int = 1000) -> list[Check]:
    """``|E[clip(X, C)] - E[X]| <= 2 var[X] / C`` whenever ``|E[X]| <= C/2``, exactly."""
    rng = np.random.default_rng(seed)
    worst = math.inf
    violations = 0
    for _ in range(cases):
        size = int(rng.integers(2, 8))
        values = rng.standard_normal(size) * rng.choice([0.1, 1.0, 10.0])
        probs = rng.dirichlet(np.ones(size))
        mean = float(probs @ values)
        var = float(probs @ (values - mean) ** 2)
        C = max(2.0 * abs(mean), rng.uniform(0.05, 1.0) * float(np.abs(values).max()))
        gap = abs(float(probs @ clip(values, C)) - mean)
        bound = 2.0 * var / C
        slack = bound - gap
        worst = min(worst, slack)
        violations += gap > bound * (1 + 1e-12) + 1e-15
    return [Check("clip", "random_discrete", violations == 0, worst,
                  f"{violations} violations in {cases} distributions")]


def suite_mwregret(seed: int = 4, cases: int = 1000) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst = math.inf
    violations = 0
    for _ in range(cases):
        n = int(rng.integers(2, 9))
        T = int(rng.integers(1, 60))
        eta = float(rng.uniform(0.05, 2.0))
        costs = rng.uniform(-1.0 / eta, 3.0 / eta, size=(T, n))
        lhs, rhs = mw_second_order_terms(costs, eta)
        scale = max(1.0, abs(lhs), abs(rhs))
        worst = min(worst, (rhs - lhs) / scale)
        violations += lhs > rhs + 1e-9 * scale
    return [Check("mwregret", "random_sequences", violations == 0, worst,
                  f"{violations} violations in {cases} sequences")]


def suite_smoothing() -> list[Check]:
    checks = []
    grid = np.linspace(-10.0, 10.0, 10_000)
    for eps in (0.1, 0.01):
        for delta in (0.0, 0.5):
            gap = float(np.abs(f_eps(grid, delta, eps) - delta_insensitive_loss(grid, 0.0, delta)).max())
            checks.append(Check("smoothing", f"f_eps_eps{eps}_delta{delta}", gap <= eps, eps - gap,
                                f"max gap {gap:.3g}"))
    xs = np.linspace(-1.0, 1.0, 2001)
    err = float(np.abs(erf_series(xs) - erf(xs)).max())
    checks.append(Check("smoothing", "erf_series", err <= 1e-10, 1e-10 - err, f"max err {err:.2e}"))
    return checks


def suite_budget(seed: int = 5, k: int = 3) -> list[Check]:
    """Ledger totals against the per-example read counts, and the hard cap."""
    checks = []
    train, _ = synth_linear(d=12, m=2000, norm_target=CERT_L2, noise_sd=0.05, seed=seed)
    for name, fit, data in (
        ("aerr", aerr_fit, train),
        ("aelr", aelr_fit, Dataset(train.X, train.y, norm_certificate=CERT_LINF)),
    ):
        res = fit(data, LearnerConfig(k=k, seed=seed))
        expected = res.n_examples * (k + 1) - res.fallback_steps
        checks.append(Check("budget", f"{name}_ledger", res.ledger_total == expected,
                            float(-abs(res.ledger_total - expected)),
                            f"{res.ledger_total} reads, expected {expected}"))
        cap = 1001
        capped = fit(data, LearnerConfig(k=k, seed=seed, budget=cap))
        checks.append(Check("budget", f"{name}_cap", capped.ledger_total <= cap, float(cap - capped.ledger_total),
                            f"{capped.ledger_total} reads under cap {cap}"))

    svr_data, _ = synth_linear(d=12, m=10_000, norm_target=CERT_L2, seed=seed)
    res = aesvr_fit(svr_data, LearnerConfig(k=k, seed=seed, epsilon=1.0, delta=0.1))
    per_example = res.ledger_total / res.n_examples
    checks.append(Check("budget", "aesvr_reads", per_example <= k + 6, k + 6 - per_example,
                        f"{per_example:.3f} reads per example (k = {k})"))
    return checks


SUITES = {
    "unbiased": suite_unbiased,
    "variance": suite_variance,
    "genest": suite_genest,
    "clip": suite_clip,
    "mwregret": suite_mwregret,
    "smoothing": suite_smoothing,
    "budget": suite_budget,
}


def run_suites(names) -> list[Check]:
    checks = []
    for name in names:
        if name not in SUITES:
            raise KeyError(name)
        checks.extend(SUITES[name]())
    return checks
