import numpy as np
import pytest

from vigpc.gp.optim import (
    AdaDelta,
    AdaDeltaConfig,
    BoxBounds,
    adadelta_run,
    lbfgsb_minimize,
)
from vigpc.utils.custom_exceptions import (
    OptimizationError,
    SingularMatrixError,
)


def rosenbrock(x):
    value = (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2
    grad = np.array(
        [
            -2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2),
            200 * (x[1] - x[0] ** 2),
        ]
    )
    return value, grad


def shifted_quadratic(center):
    def objective(x):
        return 0.5 * np.sum((x - center) ** 2), x - center

    return objective


class TestLbfgsb:
    def test_minimizes_rosenbrock(self):
        x, value, num_evals = lbfgsb_minimize(
            rosenbrock, np.array([-1.2, 1.0]), maxfun=2000
        )

        np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-3)
        assert value < 1e-6
        assert num_evals <= 2000

    @pytest.mark.parametrize("maxfun", [1, 3, 5])
    def test_evaluation_budget(self, maxfun):
        calls = []

        def counted(x):
            calls.append(x.copy())
            return rosenbrock(x)

        x0 = np.array([-1.2, 1.0])
        x, value, num_evals = lbfgsb_minimize(counted, x0, maxfun=maxfun)

        assert num_evals == len(calls) <= maxfun
        assert value <= rosenbrock(x0)[0]
        assert value == rosenbrock(x)[0]

    def test_respects_bounds(self):
        bounds = BoxBounds(np.array([-np.inf, 0.0]), np.array([1.0, np.inf]))

        x, _, _ = lbfgsb_minimize(
            shifted_quadratic(np.array([3.0, -2.0])),
            np.array([5.0, 5.0]),
            bounds,
        )

        np.testing.assert_allclose(x, [1.0, 0.0], atol=1e-8)

    def test_backtracks_from_non_finite_values(self):
        def objective(x):
            if x[0] > 2.0:
                return np.inf, np.full(1, np.nan)
            return (x[0] - 5.0) ** 2, 2 * (x - 5.0)

        x, value, _ = lbfgsb_minimize(objective, np.array([0.0]), maxfun=50)

        assert x[0] <= 2.0
        assert np.isfinite(value)
        assert value < 25.0

    def test_backtracks_from_failed_factorization(self):
        def objective(x):
            if x[0] > 2.0:
                raise SingularMatrixError("K_mm is not positive definite.")
            return (x[0] - 5.0) ** 2, 2 * (x - 5.0)

        x, value, _ = lbfgsb_minimize(objective, np.array([0.0]), maxfun=50)

        assert x[0] <= 2.0
        assert np.isfinite(value)
        assert value < 25.0

    def test_failed_factorization_at_start_raises(self):
        def objective(x):
            raise SingularMatrixError("K_mm is not positive definite.")

        with pytest.raises(SingularMatrixError):
            lbfgsb_minimize(objective, np.zeros(2), maxfun=5)

    def test_non_finite_start_raises(self):
        with pytest.raises(OptimizationError):
            lbfgsb_minimize(
                lambda x: (np.nan, np.zeros_like(x)), np.zeros(2), maxfun=5
            )

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            lbfgsb_minimize(rosenbrock, np.zeros(2), maxfun=0)

        with pytest.raises(ValueError):
            lbfgsb_minimize(rosenbrock, np.zeros(2), BoxBounds.unbounded(3))

        with pytest.raises(ValueError):
            BoxBounds(np.array([1.0]), np.array([0.0]))


class TestAdaDelta:
    def test_single_step(self):
        config = AdaDeltaConfig(step_rate=1.0, decay=0.9, offset=1e-6)
        optimizer = AdaDelta(1, config)

        x = optimizer.step(np.array([1.0]), np.array([2.0]))

        expected_delta = np.sqrt(1e-6) / np.sqrt(0.1 * 4.0 + 1e-6) * 2.0
        assert x[0] == pytest.approx(1.0 - expected_delta, rel=1e-12)
        assert optimizer.mean_sq_step[0] == pytest.approx(
            0.1 * expected_delta**2, rel=1e-12
        )

    def test_step_rate_scales_update(self):
        grad = np.array([0.3, -1.0])
        unit = AdaDelta(2, AdaDeltaConfig(step_rate=1.0)).step(
            np.zeros(2), grad
        )
        tenth = AdaDelta(2, AdaDeltaConfig(step_rate=0.1)).step(
            np.zeros(2), grad
        )

        np.testing.assert_allclose(tenth, 0.1 * unit, rtol=1e-12)

    def test_step_accumulator_holds_scaled_update(self):
        config = AdaDeltaConfig(step_rate=0.1, decay=0.9, offset=1e-6)
        optimizer = AdaDelta(1, config)

        x = optimizer.step(np.zeros(1), np.array([1.0]))
        first = 0.1 * np.sqrt(1e-6) / np.sqrt(0.1 + 1e-6)

        assert optimizer.mean_sq_grad[0] == pytest.approx(0.1, rel=1e-12)
        assert x[0] == pytest.approx(-first, rel=1e-12)
        assert optimizer.mean_sq_step[0] == pytest.approx(
            0.1 * first**2, rel=1e-12
        )

        x = optimizer.step(x, np.array([0.5]))
        mean_sq_grad = 0.9 * 0.1 + 0.1 * 0.25
        second = (
            0.1
            * np.sqrt(0.1 * first**2 + 1e-6)
            / np.sqrt(mean_sq_grad + 1e-6)
            * 0.5
        )

        assert x[0] == pytest.approx(-first - second, rel=1e-12)

    def test_zero_gradient_leaves_x_unchanged(self):
        optimizer = AdaDelta(3, AdaDeltaConfig(step_rate=1.0))
        x0 = np.array([0.5, -1.0, 2.0])

        x = x0
        for _ in range(20):
            x = optimizer.step(x, np.zeros(3))

        np.testing.assert_array_equal(x, x0)
        np.testing.assert_array_equal(optimizer.mean_sq_step, np.zeros(3))

    def test_converges_on_quadratic(self):
        optimizer = AdaDelta(1, AdaDeltaConfig(step_rate=1.0))
        target = 0.25

        x = np.zeros(1)
        for _ in range(2000):
            x = optimizer.step(x, x - target)

        assert abs(x[0] - target) < 1e-2

    def test_run_descends_and_stops(self):
        center = np.array([1.0, -2.0])
        objective = shifted_quadratic(center)
        x0 = np.zeros(2)
        epochs_seen = []

        def on_epoch(epoch, x):
            epochs_seen.append(epoch)
            return epoch == 40

        x = adadelta_run(
            lambda x, batch: objective(x)[1],
            x0,
            AdaDeltaConfig(step_rate=1.0),
            ([None] for _ in range(100)),
            on_epoch,
        )

        assert epochs_seen == list(range(1, 41))
        assert objective(x)[0] < objective(x0)[0]

    def test_non_finite_gradient_raises(self):
        with pytest.raises(OptimizationError) as e:
            adadelta_run(
                lambda x, batch: np.full_like(x, np.nan),
                np.zeros(2),
                AdaDeltaConfig(step_rate=0.1),
                [[None]],
            )
        assert "step rate" in str(e.value)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"step_rate": 0.0},
            {"step_rate": 0.1, "decay": 1.0},
            {"step_rate": 0.1, "offset": 0.0},
            {"step_rate": 0.1, "batch_size": 0},
        ],
    )
    def test_bad_config(self, kwargs):
        with pytest.raises(ValueError):
            AdaDeltaConfig(**kwargs)
