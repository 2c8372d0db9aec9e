"""Losses, the erf-based smooth surrogate of the SVR loss, and clipping.

``erf`` itself is evaluated with :func:`scipy.special.erf` (double precision,
accurate to a few ulps).  The power series of ``rho'`` is only exposed as
coefficients for the Taylor-degree sampler in :mod:`lao.estimators`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .core import ConfigurationError, InvalidInputError

SQRT_PI = math.sqrt(math.pi)

# |u| beyond this makes exp(-u^2) underflow; rho(u) == |u| to machine precision.
_RHO_ASYMPTOTE = 27.0

LOSS_KINDS = ("squared", "delta_insensitive", "smoothed_svr")


@dataclass(frozen=True)
class LossSpec:
    kind: str = "squared"
    delta: float = 0.0
    epsilon: float = 0.1

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigurationError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        if self.delta < 0:
            raise ConfigurationError("delta must be non-negative")
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")

    def __call__(self, y_hat, y):
        if self.kind == "squared":
            return squared_loss(y_hat, y)
        if self.kind == "delta_insensitive":
            return delta_insensitive_loss(y_hat, y, self.delta)
        return f_eps(np.asarray(y_hat) - np.asarray(y), self.delta, self.epsilon)


def squared_loss(y_hat, y):
    return 0.5 * (np.asarray(y_hat, dtype=float) - y) ** 2


def delta_insensitive_loss(y_hat, y, delta):
    return np.maximum(0.0, np.abs(np.asarray(y_hat, dtype=float) - y) - delta)


def clip(x, c):
    """Clamp ``x`` to ``[-c, c]``."""
    if not c > 0:
        raise InvalidInputError(f"clip threshold must be positive, got {c}")
    return np.maximum(np.minimum(x, c), -c)


def rho(x):
    """``x erf(x) + exp(-x^2)/sqrt(pi)``: even, convex, derivative ``erf``."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    far = ax > _RHO_ASYMPTOTE
    safe = np.where(far, 0.0, x)
    out = safe * erf(safe) + np.exp(-safe * safe) / SQRT_PI
    out = np.where(far, ax, out)
    return out if out.ndim else float(out)


def erf_taylor_coeff(n: int) -> float:
    """Coefficient of ``x**n`` in the Maclaurin series of ``erf`` (``= rho'``)."""
    if n < 0:
        raise InvalidInputError("Taylor degree must be non-negative")
    if n % 2 == 0:
        return 0.0
    half = (n - 1) // 2
    sign = -1.0 if half % 2 else 1.0
    # factorial overflows a float past half ~ 170; go through lgamma.
    log_mag = math.log(2.0 / SQRT_PI) - math.lgamma(half + 1) - math.log(n)
    return sign * math.exp(log_mag)


def erf_series(x, n_terms: int = 41):
    """Partial sum ``sum_{n <= n_terms} a_n x^n`` of the erf series."""
    x = np.asarray(x, dtype=float)
    total = np.zeros_like(x)
    power = np.ones_like(x)
    for n in range(n_terms + 1):
        a = erf_taylor_coeff(n)
        if a:
            total = total + a * power
        power = power * x
    return total


def f_eps(x, delta: float, epsilon: float):
    """Smooth surrogate of ``max(0, |x| - delta)``, uniformly within ``epsilon``."""
    if not epsilon > 0:
        raise InvalidInputError("epsilon must be positive")
    if delta < 0:
        raise InvalidInputError("delta must be non-negative")
    x = np.asarray(x, dtype=float)
    out = 0.5 * epsilon * (rho((x - delta) / epsilon) + rho((x + delta) / epsilon)) - delta
    return out if np.ndim(out) else float(out)


def f_eps_derivative(x, delta: float, epsilon: float):
    x = np.asarray(x, dtype=float)
    return 0.5 * (erf((x - delta) / epsilon) + erf((x + delta) / epsilon))


def mw_second_order_terms(c_sequence, eta: float) -> tuple[float, float]:
    """Run multiplicative weights on ``c_sequence``; return both sides of its regret bound.

    Starting from ``z_1 = 1``, ``z_{t+1}[i] = z_t[i] exp(-eta c_t[i])`` and
    ``p_t = z_t / ||z_t||_1``.  Returns ``(lhs, rhs)`` of

        sum_t p_t.c_t <= min_i sum_t c_t[i] + log(n)/eta + eta sum_t p_t.c_t^2
    """
    if not eta > 0:
        raise InvalidInputError("eta must be positive")
    costs = np.atleast_2d(np.asarray(c_sequence, dtype=float))
    if costs.size == 0:
        return 0.0, 0.0
    if np.any(costs < -1.0 / eta * (1 + 1e-12)):
        raise InvalidInputError("every cost entry must be >= -1/eta")
    n = costs.shape[1]
    log_z = np.zeros(n)
    lhs = 0.0
    second = 0.0
    for c in costs:
        p = np.exp(log_z - log_z.max())
        p /= p.sum()
        lhs += float(p @ c)
        second += float(p @ (c * c))
        log_z -= eta * c
    rhs = float(costs.sum(axis=0).min()) + math.log(n) / eta + eta * second
    return lhs, rhs


def mw_second_order_check(c_sequence, eta: float) -> bool:
    """Whether the bound of :func:`mw_second_order_terms` holds, with 1e-9 relative slack."""
    lhs, rhs = mw_second_order_terms(c_sequence, eta)
    scale = max(1.0, abs(lhs), abs(rhs))
    return lhs <= rhs + 1e-9 * scale
