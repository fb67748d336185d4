import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aimdalloc import (
    ConfigError,
    ExponentialCost,
    QuadraticCost,
    SystemConfig,
    check_gradient,
    default_initial_allocation,
    validate_config,
)


class TestQuadraticCost:
    def test_zero_input(self):
        cost = QuadraticCost([1.0, 1.0], [0.1, 0.1])
        assert cost.value([0.0, 0.0]) == 0.0

    def test_hand_value(self):
        # 2 * (0.5^2/2 + 0.1*0.5) = 2 * (0.125 + 0.05)
        cost = QuadraticCost([1.0, 1.0], [0.1, 0.1])
        assert cost.value([0.5, 0.5]) == pytest.approx(0.35, abs=1e-15)

    def test_hand_gradient(self):
        cost = QuadraticCost([1.0, 1.0], [0.1, 0.1])
        np.testing.assert_allclose(cost.gradient([0.5, 0.5]), [0.6, 0.6], atol=1e-15)

    def test_gradient_at_origin_is_linear_term(self):
        cost = QuadraticCost([3.0, 7.0], [0.2, 0.9])
        np.testing.assert_allclose(cost.gradient([0.0, 0.0]), [0.2, 0.9])

    def test_rejects_nonconvex(self):
        with pytest.raises(ValueError):
            QuadraticCost([0.0, 1.0], [0.1, 0.1])

    def test_rejects_zero_linear_term(self):
        with pytest.raises(ValueError):
            QuadraticCost([1.0], [0.0])

    def test_domain_error(self):
        cost = QuadraticCost([1.0], [0.1])
        with pytest.raises(ValueError):
            cost.value([-0.5])
        with pytest.raises(ValueError):
            cost.gradient([-0.5])


class TestExponentialCost:
    def test_value_at_origin(self):
        assert ExponentialCost([1.0], [1.0]).value([0.0]) == 1.0

    def test_gradient_at_origin(self):
        np.testing.assert_allclose(ExponentialCost([1.0], [1.0]).gradient([0.0]), [1.0])

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            ExponentialCost([1.0], [0.0])


@pytest.mark.parametrize(
    "cost,x,bound",
    [
        (QuadraticCost([1.0, 1.0], [0.1, 0.1]), [0.5, 0.5], 1e-6),
        (ExponentialCost([1.0], [1.0]), [1.0], 1e-5),
    ],
)
def test_check_gradient_central_difference(cost, x, bound):
    assert check_gradient(cost, x, h=1e-5) < bound


def test_check_gradient_random_points():
    rng = np.random.default_rng(0)
    for _ in range(50):
        m = int(rng.integers(1, 4))
        quad = QuadraticCost(0.5 + rng.random(m), 0.1 + rng.random(m))
        expo = ExponentialCost(0.2 + rng.random(m), 0.2 + rng.random(m))
        x = 0.1 + rng.random(m)
        assert check_gradient(quad, x, h=1e-5) <= 1e-5
        assert check_gradient(expo, x, h=1e-5) <= 1e-5


def test_gradient_positive_on_interior():
    rng = np.random.default_rng(1)
    quad = QuadraticCost([1.0, 2.0], [0.1, 0.3])
    expo = ExponentialCost([0.5, 1.5], [0.7, 0.2])
    for _ in range(1000):
        x = rng.random(2) * 3.0 + 1e-6
        assert np.all(quad.gradient(x) > 0)
        assert np.all(expo.gradient(x) > 0)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t=st.floats(0.01, 0.99))
def test_convexity_segment(seed, t):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 4))
    for cost in (
        QuadraticCost(0.5 + rng.random(m), 0.05 + rng.random(m)),
        ExponentialCost(0.2 + rng.random(m), 0.2 + rng.random(m)),
    ):
        x = rng.random(m) * 2
        y = rng.random(m) * 2
        mix = cost.value(t * x + (1 - t) * y)
        assert mix <= t * cost.value(x) + (1 - t) * cost.value(y) + 1e-12


class TestSystemConfig:
    def test_valid_minimal(self):
        cfg = SystemConfig(n=2, m=1, capacity=1.0, alpha=0.1, beta=0.5)
        assert validate_config(cfg) is cfg

    def test_beta_out_of_range(self):
        cfg = SystemConfig(n=2, m=1, capacity=1.0, alpha=0.1, beta=1.2)
        with pytest.raises(ConfigError, match="beta"):
            validate_config(cfg)

    def test_window_must_be_positive(self):
        cfg = SystemConfig(n=2, m=1, capacity=1.0, alpha=0.1, beta=0.5, window=0)
        with pytest.raises(ConfigError, match="window"):
            validate_config(cfg)

    def test_all_violations_reported(self):
        cfg = SystemConfig(n=0, m=1, capacity=-1.0, alpha=0.1, beta=0.5,
                           lambda_min=0.9, lambda_max=0.1)
        errs = cfg.violations()
        joined = " ".join(errs)
        for field in ("n:", "capacity", "lambda"):
            assert field in joined
        assert len(errs) >= 3

    def test_broadcast_and_immutable(self):
        cfg = SystemConfig(n=3, m=2, capacity=2.0, alpha=0.1, beta=0.5)
        assert cfg.capacity.shape == (2,)
        with pytest.raises(ValueError):
            cfg.capacity[0] = 5.0

    def test_default_initial_allocation_interior(self):
        cfg = SystemConfig(n=3, m=2, capacity=[1.0, 2.0], alpha=0.1, beta=0.5)
        x0 = default_initial_allocation(cfg)
        assert x0.shape == (3, 2)
        np.testing.assert_allclose(x0.sum(axis=0), cfg.capacity / 2)
