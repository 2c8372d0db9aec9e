"""Shared domain types: metered instances, the attribute ledger, configs, projection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class LAOError(Exception):
    """Base class for errors raised by this package."""


class InvalidInputError(LAOError, ValueError):
    pass


class ConfigurationError(LAOError, ValueError):
    pass


class DataFormatError(LAOError, ValueError):
    pass


class BudgetExhausted(LAOError):
    """Raised when a read would push the ledger past its cap."""


class BudgetLedger:
    """Counts every attribute read.

    The total only ever grows.  Repeated reads of the same index are charged
    each time.  An optional ``cap`` turns the ledger into a hard global
    budget: a charge that would exceed it is refused with
    :class:`BudgetExhausted` and nothing is recorded.
    """

    __slots__ = ("total_observations", "per_example_observations", "cap")

    def __init__(self, cap: int | None = None):
        if cap is not None and cap < 0:
            raise ConfigurationError(f"budget cap must be non-negative, got {cap}")
        self.total_observations = 0
        self.per_example_observations = 0
        self.cap = cap

    @property
    def total(self) -> int:
        return self.total_observations

    @property
    def remaining(self) -> float:
        if self.cap is None:
            return math.inf
        return self.cap - self.total_observations

    def charge(self, n: int = 1) -> None:
        if n < 0:
            raise InvalidInputError("cannot charge a negative number of reads")
        if self.cap is not None and self.total_observations + n > self.cap:
            raise BudgetExhausted(
                f"reading {n} more attribute(s) would exceed the budget of {self.cap}"
            )
        self.total_observations += n
        self.per_example_observations += n

    def start_example(self) -> None:
        self.per_example_observations = 0

    def __repr__(self):
        return f"BudgetLedger(total={self.total_observations}, cap={self.cap})"


class LabeledInstance:
    """One example ``(x, y)`` whose attributes are only reachable via ``observe``.

    The label is free to read.  Attribute reads go through a
    :class:`BudgetLedger`.  ``rescaled`` gives a view that reports
    ``factor * x[i]`` while charging the same reads.
    """

    __slots__ = ("_x", "_scale", "target")

    def __init__(self, attributes, target: float):
        x = np.asarray(attributes, dtype=float)
        if x.ndim != 1 or x.size < 1:
            raise InvalidInputError("attributes must be a non-empty 1-d vector")
        self._x = x
        self._scale = 1.0
        self.target = float(target)

    def rescaled(self, factor: float, target: float) -> "LabeledInstance":
        view = LabeledInstance.__new__(LabeledInstance)
        view._x = self._x
        view._scale = self._scale * factor
        view.target = float(target)
        return view

    @property
    def d(self) -> int:
        return self._x.shape[0]

    def observe(self, i: int, ledger: BudgetLedger) -> float:
        if not 0 <= i < self._x.shape[0]:
            raise InvalidInputError(f"attribute index {i} out of range for d={self.d}")
        ledger.charge(1)
        return float(self._x[i]) * self._scale

    def observe_many(self, indices: np.ndarray, ledger: BudgetLedger) -> np.ndarray:
        """Read several attributes at once; charges one read per entry of ``indices``."""
        indices = np.asarray(indices, dtype=np.intp)
        if indices.size and (indices.min() < 0 or indices.max() >= self._x.shape[0]):
            raise InvalidInputError(f"attribute index out of range for d={self.d}")
        ledger.charge(int(indices.size))
        values = self._x[indices]
        return values if self._scale == 1.0 else values * self._scale

    def __repr__(self):
        return f"LabeledInstance(d={self.d}, target={self.target!r})"


def observe(instance: LabeledInstance, i: int, ledger: BudgetLedger) -> float:
    return instance.observe(i, ledger)


def project_l2_ball(v, B: float) -> np.ndarray:
    """Euclidean projection onto ``{w : ||w||_2 <= B}``."""
    v = np.asarray(v, dtype=float)
    if not B > 0:
        raise InvalidInputError(f"ball radius must be positive, got {B}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("cannot project a non-finite vector")
    norm = math.sqrt(float(np.dot(v, v)))
    if norm <= B:
        return v.copy()
    return shrink_into_ball(v * (B / norm), B)


def shrink_into_ball(v: np.ndarray, B: float) -> np.ndarray:
    """Nudge a just-rescaled vector so its computed 2-norm is <= B (rounding can overshoot by an ulp).

    This makes projection exactly idempotent in floating point.
    """
    while math.sqrt(float(np.dot(v, v))) > B:
        v *= 1.0 - 2.0**-52
    return v


NORM_KINDS = ("l1", "l2")


@dataclass
class RegressorState:
    weights: np.ndarray
    norm_kind: str
    bound: float

    def __post_init__(self):
        if self.norm_kind not in NORM_KINDS:
            raise ConfigurationError(f"norm_kind must be one of {NORM_KINDS}")
        self.weights = np.asarray(self.weights, dtype=float)

    def norm(self) -> float:
        ord_ = 1 if self.norm_kind == "l1" else 2
        return float(np.linalg.norm(self.weights, ord=ord_))

    def is_feasible(self, rtol: float = 1e-12) -> bool:
        return self.norm() <= self.bound * (1.0 + rtol)


@dataclass
class LearnerConfig:
    """Hyper-parameters of one fit.

    ``eta`` is a float, ``"auto"`` or ``"<c>*auto"``; the auto forms are
    resolved by the learner from ``(k, d, m, B)``.  ``m`` is the planned number
    of examples; ``None`` means "all the examples handed to fit".
    """

    k: int = 1
    eta: float | str = "auto"
    B: float = 1.0
    m: int | None = None
    delta: float = 0.0
    epsilon: float = 0.1
    seed: int = 0
    trace_every: int | None = None
    budget: int | None = None
    record_steps: bool = False

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ConfigurationError(f"k must be an integer >= 1, got {self.k}")
        self.k = int(self.k)
        if not self.B > 0:
            raise ConfigurationError(f"B must be positive, got {self.B}")
        if self.delta < 0:
            raise ConfigurationError(f"delta must be non-negative, got {self.delta}")
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        parse_eta(self.eta)

    def gradient_scale(self, d: int) -> float:
        """Second-moment scale ``G = 2B sqrt(2d/k)`` of the sampled gradient."""
        return 2.0 * self.B * math.sqrt(2.0 * d / self.k)


def parse_eta(eta) -> tuple[float | None, float]:
    """Split an eta spec into ``(fixed_value, auto_multiplier)``.

    Returns ``(value, 0.0)`` for a number and ``(None, c)`` for ``"c*auto"``.
    """
    if isinstance(eta, (int, float)) and not isinstance(eta, bool):
        if not (math.isfinite(eta) and eta > 0):
            raise ConfigurationError(f"eta must be positive and finite, got {eta}")
        return float(eta), 0.0
    if isinstance(eta, str):
        text = eta.strip().lower().replace(" ", "")
        if text == "auto":
            return None, 1.0
        if text.endswith("*auto"):
            try:
                mult = float(text[: -len("*auto")])
            except ValueError:
                pass
            else:
                if mult > 0:
                    return None, mult
        try:
            return parse_eta(float(text))
        except ValueError:
            pass
    raise ConfigurationError(f"eta must be a positive number, 'auto' or 'c*auto'; got {eta!r}")


@dataclass(frozen=True)
class TraceRecord:
    example_index: int
    cumulative_attributes: int
    test_error: float
    train_loss_estimate: float


@dataclass
class FitResult:
    """Outcome of one learner run.

    ``steps`` is populated only when the config asks for ``record_steps``; it
    then holds the iterates ``w_t`` and the gradient estimates used to update
    them, both of shape ``(n_examples, d)``.
    """

    w_bar: np.ndarray
    trace: list = field(default_factory=list)
    ledger_total: int = 0
    n_examples: int = 0
    eta: float = float("nan")
    fallback_steps: int = 0
    max_iterate_norm: float = 0.0
    norm_violations: int = 0
    stopped_by_budget: bool = False
    eval_reads: int = 0
    steps: dict | None = None
