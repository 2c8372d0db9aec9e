import math

import numpy as np
import pytest

from lao.core import ConfigurationError, InvalidInputError, LearnerConfig
from lao.data import CERT_L2, CERT_LINF, Dataset, synth_linear
from lao.learners import (
    aelr_fit,
    aerr_fit,
    aesvr_effective_bound,
    aesvr_fit,
    default_eta_aelr,
    default_eta_aerr,
    eg_full_fit,
    evaluate,
    mse,
    ogd_full_fit,
    predict,
)
from lao.smoothing import LossSpec


def constant_d1(m, x=1.0, y=1.0, cert=CERT_L2):
    return Dataset(np.full((m, 1), x), np.full(m, y), norm_certificate=cert)


def split_synth(d, m, n_test=2000, **kw):
    full, w = synth_linear(d=d, m=m + n_test, **kw)
    return full.subset(np.arange(m)), full.subset(np.arange(m, m + n_test)), w


# --------------------------------------------------------------------------- step sizes


def test_default_eta_aerr_examples():
    assert default_eta_aerr(k=8, d=4, m=1) == 1.0
    assert default_eta_aerr(k=1, d=1, m=2) == 0.5
    assert default_eta_aerr(k=4, d=784, m=10_000) == pytest.approx(5.051e-4, rel=1e-3)


def test_default_eta_aelr_formula():
    d = 4
    m = math.ceil(math.log(2 * d))
    expected = 0.5 * math.sqrt(8 * math.log(8) / (10 * 4 * m))
    assert default_eta_aelr(1.0, 2 * d, d, m) == pytest.approx(expected, rel=1e-14)
    assert default_eta_aelr(1.0, 3, 50, 400) / default_eta_aelr(1.0, 3, 50, 800) == pytest.approx(math.sqrt(2))


def test_default_eta_aelr_respects_step_condition():
    rng = np.random.default_rng(0)
    for _ in range(100):
        B = float(rng.uniform(0.1, 10))
        d = int(rng.integers(1, 1000))
        k = int(rng.integers(1, d + 1))
        m = int(rng.integers(math.ceil(math.log(2 * d)), 10**6))
        G = LearnerConfig(k=k, B=B).gradient_scale(d)
        assert default_eta_aelr(B, k, d, m) * G <= 0.5 + 1e-12


def test_default_eta_aelr_proviso():
    with pytest.raises(ConfigurationError, match="log"):
        default_eta_aelr(1.0, 1, 100, 5)


# --------------------------------------------------------------------------- AERR


def test_aerr_constant_d1_converges():
    res = aerr_fit(constant_d1(10_000), LearnerConfig(k=1, B=1.0))
    assert mse(res.w_bar, constant_d1(1)) <= 0.01


def test_aerr_ledger_is_k_plus_one_per_example():
    train, _, _ = split_synth(d=10, m=100, seed=0)
    res = aerr_fit(train, LearnerConfig(k=4))
    assert res.fallback_steps == 0
    assert res.ledger_total == 500


def test_aerr_fallback_steps_cost_k():
    # Starting at w = B e1 / 2 with x = e1, y = 0 and eta = 1: one step lands exactly on w = 0.
    ds = Dataset(np.array([[1.0], [1.0], [1.0]]), np.zeros(3), norm_certificate=CERT_L2)
    res = aerr_fit(ds, LearnerConfig(k=1, B=1.0, eta=1.0, record_steps=True))
    zero_iterates = int((np.abs(res.steps["w"]).sum(axis=1) == 0).sum())
    assert zero_iterates == res.fallback_steps == 2
    assert res.ledger_total == 3 * 2 - 2


def test_aerr_deterministic():
    train, test, _ = split_synth(d=8, m=500, seed=1, noise_sd=0.1)
    a = aerr_fit(train, LearnerConfig(k=2, seed=9), test)
    b = aerr_fit(train, LearnerConfig(k=2, seed=9), test)
    np.testing.assert_array_equal(a.w_bar, b.w_bar)
    assert a.trace == b.trace
    c = aerr_fit(train, LearnerConfig(k=2, seed=10), test)
    assert not np.array_equal(a.w_bar, c.w_bar)


def test_aerr_feasibility_and_trace():
    train, test, _ = split_synth(d=6, m=2000, seed=3, noise_sd=0.3, B=2.0)
    res = aerr_fit(train, LearnerConfig(k=1, B=2.0, eta=0.5), test)
    assert res.norm_violations == 0
    assert res.max_iterate_norm <= 2.0
    assert np.linalg.norm(res.w_bar) <= 2.0
    attrs = [r.cumulative_attributes for r in res.trace]
    assert attrs == sorted(attrs)
    assert [r.example_index for r in res.trace][:2] == [10, 20]
    assert res.trace[-1].example_index == 2000


def test_aerr_regret_bound_from_recorded_steps():
    """Projected OGD: sum g_t.(w_t - u) <= 2B^2/eta + eta/2 sum ||g_t||^2 for any ||u|| <= B."""
    rng = np.random.default_rng(0)
    for trial in range(5):
        train, _, _ = split_synth(d=5, m=400, seed=trial, noise_sd=0.2)
        B = 1.0
        res = aerr_fit(train, LearnerConfig(k=2, B=B, seed=trial, record_steps=True, eta="3*auto"))
        W, G = res.steps["w"], res.steps["g"]
        rhs = 2 * B**2 / res.eta + res.eta / 2 * float((G * G).sum())
        for _ in range(20):
            u = rng.standard_normal(5)
            u *= B * rng.random() / np.linalg.norm(u)
            lhs = float(np.einsum("ti,ti->", G, W - u))
            assert lhs <= rhs


def test_unnormalized_data_rejected():
    raw = Dataset(np.array([[3.0, 4.0]]), np.array([1.0]))
    with pytest.raises(ConfigurationError, match="normalized"):
        aerr_fit(raw, LearnerConfig())
    linf_only = Dataset(np.array([[1.0, 1.0]]), np.array([1.0]), norm_certificate=CERT_LINF)
    with pytest.raises(ConfigurationError):
        aerr_fit(linf_only, LearnerConfig())


def test_label_bound_checked():
    ds = Dataset(np.array([[1.0]]), np.array([2.0]), norm_certificate=CERT_L2)
    with pytest.raises(ConfigurationError, match="B"):
        aerr_fit(ds, LearnerConfig(B=1.0))


def test_budget_cap_halts_before_overrun():
    train, _, _ = split_synth(d=10, m=300, seed=2)
    res = aerr_fit(train, LearnerConfig(k=3, budget=403))
    assert res.ledger_total <= 403
    assert res.n_examples == 100
    assert res.stopped_by_budget
    with pytest.raises(ConfigurationError, match="budget"):
        aerr_fit(train, LearnerConfig(k=3, budget=3))


# --------------------------------------------------------------------------- OGD


def test_ogd_matches_aerr_on_d1():
    ds = Dataset(np.random.default_rng(0).uniform(-1, 1, (300, 1)),
                 np.random.default_rng(1).uniform(-1, 1, 300), norm_certificate=CERT_L2)
    cfg = LearnerConfig(k=1, eta=0.05, record_steps=True)
    a = aerr_fit(ds, cfg)
    o = ogd_full_fit(ds, cfg)
    np.testing.assert_allclose(a.steps["w"], o.steps["w"], rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(a.w_bar, o.w_bar, rtol=1e-12)
    assert o.ledger_total == 300
    assert a.ledger_total == 600


def test_ogd_ledger_is_m_times_d():
    train, _, _ = split_synth(d=7, m=90, seed=0)
    assert ogd_full_fit(train, LearnerConfig()).ledger_total == 630


def test_ogd_delta_insensitive_loss():
    train, test, _ = split_synth(d=4, m=3000, seed=5, noise_sd=0.05)
    loss = LossSpec("delta_insensitive", delta=0.1)
    res = ogd_full_fit(train, LearnerConfig(delta=0.1), test, loss=loss)
    assert evaluate(res.w_bar, test, loss) < evaluate(np.zeros(4), test, loss)
    with pytest.raises(ConfigurationError):
        ogd_full_fit(train, LearnerConfig(), loss=LossSpec("smoothed_svr"))


# --------------------------------------------------------------------------- AELR / EG


def test_aelr_first_step_reads_only_k():
    train, _, _ = split_synth(d=10, m=1, norm_target=CERT_LINF, seed=0)
    res = aelr_fit(train, LearnerConfig(k=3, m=1, eta=0.1))
    assert res.fallback_steps == 1
    assert res.ledger_total == 3


def test_aelr_zero_targets_keep_zero_regressor():
    rng = np.random.default_rng(0)
    ds = Dataset(rng.uniform(-1, 1, (200, 6)), np.zeros(200), norm_certificate=CERT_LINF)
    res = aelr_fit(ds, LearnerConfig(k=2, eta=0.2))
    np.testing.assert_array_equal(res.w_bar, np.zeros(6))
    assert res.fallback_steps == 200


def test_aelr_ledger_and_feasibility():
    train, _, _ = split_synth(d=40, m=3000, norm_target=CERT_LINF, sparsity=3, seed=4, B=2.0)
    res = aelr_fit(train, LearnerConfig(k=5, B=2.0, eta="20*auto", record_steps=True))
    zero_iterates = int((np.abs(res.steps["w"]).sum(axis=1) == 0).sum())
    assert res.ledger_total == 3000 * 6 - zero_iterates
    assert res.norm_violations == 0
    assert np.abs(res.steps["w"]).sum(axis=1).max() <= 2.0 * (1 + 1e-12)
    assert np.abs(res.w_bar).sum() <= 2.0 * (1 + 1e-12)


def test_aelr_tracks_eg_on_sparse_task():
    for seed in range(3):
        train, test, _ = split_synth(d=100, m=5000, n_test=3000, sparsity=3, norm_target=CERT_LINF, seed=seed)
        errors = []
        for m in (1000, 2000, 5000):
            errors.append(mse(aelr_fit(train.subset(np.arange(m)), LearnerConfig(k=5, seed=seed)).w_bar, test))
        assert errors[0] > errors[1] > errors[2]
        eg = eg_full_fit(train, LearnerConfig(k=5))
        eg_err = mse(eg.w_bar, test)
        assert eg_err < errors[-1] <= 2 * eg_err
        assert eg.ledger_total == 5000 * 100 > 5000 * 6


def test_eg_zero_data_stays_zero():
    ds = Dataset(np.zeros((50, 3)), np.zeros(50), norm_certificate=CERT_LINF)
    res = eg_full_fit(ds, LearnerConfig(record_steps=True))
    assert not res.steps["w"].any()


def test_aelr_needs_log_2d_examples():
    train, _, _ = split_synth(d=100, m=3, norm_target=CERT_LINF, seed=0)
    with pytest.raises(ConfigurationError):
        aelr_fit(train, LearnerConfig(k=2))
    aelr_fit(train, LearnerConfig(k=2, eta=0.1))


# --------------------------------------------------------------------------- AESVR


def test_aesvr_mean_reads_bounded():
    train, _, _ = split_synth(d=8, m=10_000, seed=0, noise_sd=0.1)
    for k in (1, 4):
        res = aesvr_fit(train, LearnerConfig(k=k, delta=0.1, epsilon=0.5, seed=k))
        assert res.ledger_total / res.n_examples <= k + 6
        assert res.norm_violations == 0


def test_aesvr_close_to_full_information_baseline():
    eps, delta = 0.2, 0.1
    loss = LossSpec("delta_insensitive", delta=delta)
    for seed in range(2):
        train, test, _ = split_synth(d=5, m=10_000, seed=seed, noise_sd=0.1)
        a = aesvr_fit(train, LearnerConfig(k=2, delta=delta, epsilon=eps, seed=seed))
        o = ogd_full_fit(train, LearnerConfig(delta=delta), loss=loss)
        la = loss(test.X @ a.w_bar, test.y)
        lo = loss(test.X @ o.w_bar, test.y)
        se = math.sqrt(la.var() / la.size + lo.var() / lo.size)
        assert abs(la.mean() - lo.mean()) <= 2 * eps + 3 * se


def test_aesvr_validation_and_bound():
    train, _, _ = split_synth(d=3, m=10, seed=0)
    with pytest.raises(ConfigurationError):
        aesvr_fit(train, LearnerConfig(delta=2.0, B=1.0))
    assert aesvr_effective_bound(1.0, 0.1) == 20.0
    assert aesvr_effective_bound(0.1, 1.0) == 1.0


def test_aesvr_budget_cap_never_exceeded():
    train, _, _ = split_synth(d=6, m=2000, seed=0)
    res = aesvr_fit(train, LearnerConfig(k=2, epsilon=0.5, budget=997, seed=1))
    assert res.ledger_total <= 997
    assert res.stopped_by_budget


# --------------------------------------------------------------------------- evaluation


def test_predict_and_evaluate():
    ds = Dataset(np.array([[1.0, 2.0], [0.0, -1.0]]), np.array([1.0, 3.0]))
    assert predict(np.array([0.5, 0.25]), ds.instance(0)) == 1.0
    assert evaluate(np.zeros(2), ds) == pytest.approx(np.mean(0.5 * ds.y**2))
    single = ds.subset([0])
    assert evaluate(np.array([2.0, 0.0]), single) == 0.5
    assert evaluate(np.array([5.0, 5.0]), ds, LossSpec("delta_insensitive", delta=1e9)) == 0.0
    with pytest.raises(InvalidInputError):
        evaluate(np.zeros(3), ds)


def test_evaluation_does_not_touch_training_ledger():
    train, test, _ = split_synth(d=10, m=400, seed=0)
    with_test = aerr_fit(train, LearnerConfig(k=2), test)
    without = aerr_fit(train, LearnerConfig(k=2))
    assert with_test.ledger_total == without.ledger_total
    assert with_test.eval_reads == len(with_test.trace) * test.X.size
    assert without.eval_reads == 0
