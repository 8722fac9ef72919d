import json

import numpy as np
import pytest

from summax import verify
from summax.verify import CheckResult


@pytest.mark.parametrize("name", list(verify.CHECKS))
def test_check_passes(name):
    kwargs = {"samples": 2 * 10**5} if name == "unbiased_gradient" else {}
    result = verify.CHECKS[name](**kwargs)
    assert isinstance(result, CheckResult)
    assert result.name == name
    assert result.passed, result.details


def test_unbiased_gradient_rejects_floor_violation():
    with pytest.raises(ValueError):
        verify.verify_unbiased_gradient(samples=1000, probs=[1.0, 0.0, 0.0, 0.0, 0.0])


def test_unbiased_gradient_single_draw():
    assert verify.verify_unbiased_gradient(samples=10**5, n_draws=1).passed


def test_unbiased_gradient_without_costs():
    assert verify.verify_unbiased_gradient(samples=10**5, cost_cap=0.0).passed


def test_deterministic():
    a = verify.verify_second_moment(trials=10, seed=3)
    b = verify.verify_second_moment(trials=10, seed=3)
    assert a == b


def test_counterexample_rejects_bad_alpha():
    with pytest.raises(ValueError):
        verify.verify_counterexample(alpha=0.9)


def test_sampler_examples():
    from summax.policies import product_subset_law

    law = product_subset_law(np.array([1.0, 2.0, 3.0]), 2)
    assert list(law.values()) == pytest.approx([2 / 11, 3 / 11, 6 / 11])
    assert product_subset_law(np.ones(4), 4) == {(0, 1, 2, 3): pytest.approx(1.0)}


def test_report(tmp_path):
    results = verify.run_suite("counterexample")
    assert len(results) == 1
    path = verify.write_report(results, tmp_path / "r.json")
    data = json.loads(path.read_text())
    assert data[0]["name"] == "counterexample" and data[0]["passed"] is True
    assert set(data[0]) == {"name", "passed", "measured", "bound_or_target", "tolerance", "details"}


def test_unknown_suite():
    with pytest.raises(ValueError):
        verify.run_suite("nope")
