import numpy as np
import pytest

from lao.verify import SUITES, Check, enumerate_gradient, run_suites


def test_check_line_format():
    assert Check("s", "n", True, 0.5, "").line().split() == ["PASS", "s/n", "margin=0.5"]
    assert Check("s", "n", False, -1.0, "x").line().split()[:2] == ["FAIL", "s/n"]


@pytest.mark.parametrize("kind", ["l2", "l1"])
def test_enumerated_gradient_is_unbiased(kind):
    w = np.array([0.3, -0.2, 0.1])
    x = np.array([0.5, -0.4, 0.3])
    y = 0.7
    moments = enumerate_gradient(w, x, y, 2, kind)
    np.testing.assert_allclose(moments.mean, (w @ x - y) * x, atol=1e-12)


@pytest.mark.parametrize("suite", [s for s in SUITES if s not in ("genest",)])
def test_fast_suites_pass(suite):
    checks = run_suites([suite])
    assert checks
    failed = [c.line() for c in checks if not c.passed]
    assert not failed


@pytest.mark.slow
def test_genest_suite_passes():
    assert all(c.passed for c in run_suites(["genest"]))
