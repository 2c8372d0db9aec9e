"""scikit-learn wrappers around the learners in :mod:`lao.learners`.

The estimators expect attributes that are already scaled into the unit ball
of the learner's norm (see :class:`LAONormalizer`); they refuse anything else
rather than silently rescaling, because the step-size theory depends on it.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core import ConfigurationError, LearnerConfig
from .data import CERT_L2, CERT_LINF, NORM_TOLERANCE, Dataset, max_norm
from .learners import FITTERS, NORM_OF, mse
from .smoothing import LossSpec


class LAONormalizer(TransformerMixin, BaseEstimator):
    """Scale attributes by one global factor so every training row has norm <= 1.

    ``norm="linf"`` with ``pixel_scale`` set divides by that constant (255 for
    byte images) instead of the observed maximum.
    """

    def __init__(self, norm="l2", pixel_scale=None):
        self.norm = norm
        self.pixel_scale = pixel_scale

    def fit(self, X, y=None):
        X = check_array(X)
        if self.norm not in (CERT_L2, CERT_LINF):
            raise ConfigurationError(f"norm must be 'l2' or 'linf', got {self.norm!r}")
        if self.norm == CERT_LINF and self.pixel_scale:
            scale = float(self.pixel_scale)
        else:
            scale = max_norm(X, self.norm)
        if scale == 0:
            raise ConfigurationError("cannot normalize an all-zero design matrix")
        self.scale_ = scale
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "scale_")
        X = check_array(X)
        return X / self.scale_


class _LAORegressor(RegressorMixin, BaseEstimator):
    _algorithm = ""

    def _config(self, B):
        return LearnerConfig(
            k=self.k,
            eta=self.eta,
            B=B,
            seed=self.seed,
            trace_every=self.trace_every,
            budget=self.budget,
            delta=getattr(self, "delta", 0.0),
            epsilon=getattr(self, "epsilon", 0.1),
        )

    def _as_dataset(self, X, y, name):
        cert = NORM_OF[self._algorithm]
        worst = max_norm(X, cert)
        if worst > 1.0 + NORM_TOLERANCE:
            raise ConfigurationError(
                f"{name} rows must have {cert} norm <= 1 (found {worst:.6g}); "
                "scale them first, e.g. with LAONormalizer"
            )
        return Dataset(X, y, norm_certificate=cert)

    def fit(self, X, y, eval_set=None):
        """Run one pass over ``(X, y)`` in row order.

        ``eval_set=(X_test, y_test)`` adds held-out MSE to the trace.
        """
        X, y = check_X_y(X, y, y_numeric=True)
        train = self._as_dataset(X, y, "X")
        test = None
        if eval_set is not None:
            X_test, y_test = check_X_y(*eval_set, y_numeric=True)
            test = Dataset(X_test, y_test)
        B = self.B if self.B is not None else max(1.0, train.label_bound)
        result = self._run(train, self._config(B), test)
        self.coef_ = result.w_bar
        self.B_ = B
        self.eta_ = result.eta
        self.trace_ = result.trace
        self.ledger_total_ = result.ledger_total
        self.n_examples_ = result.n_examples
        self.fit_result_ = result
        self.n_features_in_ = X.shape[1]
        return self

    def _run(self, train, config, test):
        return FITTERS[self._algorithm](train, config, test)

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_

    def mse(self, X, y):
        """Mean of ``(w.x - y)^2``; :meth:`score` stays the usual R^2."""
        check_is_fitted(self, "coef_")
        X, y = check_X_y(X, y, y_numeric=True)
        return mse(self.coef_, Dataset(X, y))


class AERRRegressor(_LAORegressor):
    """Ridge-type regressor (``||w||_2 <= B``) trained from ``k + 1`` reads per example."""

    _algorithm = "aerr"

    def __init__(self, k=1, B=None, eta="auto", seed=0, budget=None, trace_every=None):
        self.k = k
        self.B = B
        self.eta = eta
        self.seed = seed
        self.budget = budget
        self.trace_every = trace_every


class AELRRegressor(_LAORegressor):
    """Lasso-type regressor (``||w||_1 <= B``) trained from ``k + 1`` reads per example."""

    _algorithm = "aelr"

    def __init__(self, k=1, B=None, eta="auto", seed=0, budget=None, trace_every=None):
        self.k = k
        self.B = B
        self.eta = eta
        self.seed = seed
        self.budget = budget
        self.trace_every = trace_every


class AESVRRegressor(_LAORegressor):
    """Support-vector regressor on the smoothed ``delta``-insensitive loss."""

    _algorithm = "aesvr"

    def __init__(self, k=1, B=None, eta="auto", delta=0.0, epsilon=0.1, seed=0, budget=None,
                 trace_every=None):
        self.k = k
        self.B = B
        self.eta = eta
        self.delta = delta
        self.epsilon = epsilon
        self.seed = seed
        self.budget = budget
        self.trace_every = trace_every


class OGDRegressor(_LAORegressor):
    """Full-information projected OGD; ``loss`` is ``"squared"`` or ``"delta_insensitive"``.

    ``k`` is accepted for a uniform interface and ignored: every attribute is read.
    """

    _algorithm = "ogd"

    def __init__(self, k=1, B=None, eta="auto", loss="squared", delta=0.0, seed=0, budget=None,
                 trace_every=None):
        self.k = k
        self.B = B
        self.eta = eta
        self.loss = loss
        self.delta = delta
        self.seed = seed
        self.budget = budget
        self.trace_every = trace_every

    def _run(self, train, config, test):
        return FITTERS["ogd"](train, config, test, LossSpec(self.loss, delta=self.delta))


class EGRegressor(_LAORegressor):
    """Full-information exponentiated gradient +/- over the L1 ball."""

    _algorithm = "eg"

    def __init__(self, k=1, B=None, eta="auto", seed=0, budget=None, trace_every=None):
        self.k = k
        self.B = B
        self.eta = eta
        self.seed = seed
        self.budget = budget
        self.trace_every = trace_every


ESTIMATORS = {
    "aerr": AERRRegressor,
    "aelr": AELRRegressor,
    "aesvr": AESVRRegressor,
    "ogd": OGDRegressor,
    "eg": EGRegressor,
}
