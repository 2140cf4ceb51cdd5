"""
Optimizers used by the trainers.

lbfgsb_minimize wraps scipy's L-BFGS-B with a hard budget on objective
evaluations; a value-gradient pair counts as one evaluation. adadelta_run
is the AdaDelta update with the offset inside both square roots.
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Iterable, Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from vigpc.utils import utils
from vigpc.utils.custom_exceptions import OptimizationError

ValueAndGrad = Callable[[np.ndarray], Tuple[float, np.ndarray]]

LBFGSB_MAXCOR = 10
LBFGSB_GTOL = 1e-5
LBFGSB_FTOL = 1e-9

# -----------------------------------------------------------------------------
# Types
# -----------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True, eq=False)
class BoxBounds:
    """
    Elementwise bounds lower <= x <= upper; entries may be infinite.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).ravel()
        upper = np.asarray(self.upper, dtype=float).ravel()

        if lower.shape != upper.shape:
            utils.log_and_raise_error(
                f"Bounds have different lengths {lower.size} and "
                f"{upper.size}.",
                ValueError,
            )
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
            utils.log_and_raise_error("Bounds may not be NaN.", ValueError)

        if np.any(lower > upper):
            utils.log_and_raise_error(
                "Lower bounds must not exceed upper bounds.", ValueError
            )

        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def unbounded(cls, size: int) -> BoxBounds:
        return cls(np.full(size, -np.inf), np.full(size, np.inf))

    @classmethod
    def concat(cls, *bounds: BoxBounds) -> BoxBounds:
        return cls(
            np.concatenate([b.lower for b in bounds]),
            np.concatenate([b.upper for b in bounds]),
        )

    @property
    def size(self) -> int:
        return self.lower.size

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def to_scipy(self):
        return [
            (
                None if np.isinf(low) else float(low),
                None if np.isinf(high) else float(high),
            )
            for low, high in zip(self.lower, self.upper)
        ]


@dataclasses.dataclass(frozen=True)
class AdaDeltaConfig:
    step_rate: float
    decay: float = 0.9
    offset: float = 1e-6
    batch_size: int = 50

    def __post_init__(self):
        if not self.step_rate > 0:
            utils.log_and_raise_error(
                f"AdaDelta 'step_rate' must be > 0, got {self.step_rate}.",
                ValueError,
            )
        if not 0 < self.decay < 1:
            utils.log_and_raise_error(
                f"AdaDelta 'decay' must be in (0, 1), got {self.decay}.",
                ValueError,
            )
        if not self.offset > 0:
            utils.log_and_raise_error(
                f"AdaDelta 'offset' must be > 0, got {self.offset}.",
                ValueError,
            )
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            utils.log_and_raise_error(
                f"'batch_size' must be a positive integer, got "
                f"{self.batch_size}.",
                ValueError,
            )


# -----------------------------------------------------------------------------
# L-BFGS-B
# -----------------------------------------------------------------------------


class _BudgetExhausted(Exception):
    pass


def _penalty(best_value: float) -> float:
    return best_value + 1e3 * (1.0 + abs(best_value))


def lbfgsb_minimize(
    objective: ValueAndGrad,
    x0: np.ndarray,
    bounds: Optional[BoxBounds] = None,
    maxfun: int = 15000,
) -> Tuple[np.ndarray, float, int]:
    """
    Minimize objective (returning value and gradient) from x0.

    Stops after at most maxfun evaluations and returns the best point
    seen, its value and the number of evaluations used. x0 is first
    projected onto the bounds.

    A non-finite value or gradient, or a LinAlgError from the
    objective, during the search is replaced by a penalty above the
    best value with zero gradient, so the line search backtracks. A
    non-finite value at the start raises OptimizationError; a
    LinAlgError at the start is re-raised.
    """
    if int(maxfun) != maxfun or maxfun < 1:
        utils.log_and_raise_error(
            f"'maxfun' must be a positive integer, got {maxfun}.",
            ValueError,
        )

    x0 = np.asarray(x0, dtype=float).ravel()
    bounds = bounds or BoxBounds.unbounded(x0.size)

    if bounds.size != x0.size:
        utils.log_and_raise_error(
            f"Dimension mismatch: x0 has length {x0.size} but bounds "
            f"have length {bounds.size}.",
            ValueError,
        )
    x0 = bounds.project(x0)

    best = {"x": None, "value": np.inf}
    num_evals = 0

    def counted_objective(x):
        nonlocal num_evals

        if num_evals >= maxfun:
            raise _BudgetExhausted
        num_evals += 1

        x = bounds.project(x)
        try:
            value, grad = objective(x)
        except np.linalg.LinAlgError as e:
            if best["x"] is None:
                raise
            utils.log(
                f"Factorization failed at evaluation {num_evals} ({e}), "
                f"backtracking."
            )
            return _penalty(best["value"]), np.zeros_like(x)

        value = float(value)
        grad = np.asarray(grad, dtype=float).ravel()

        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            if best["x"] is None:
                utils.log_and_raise_error(
                    f"The objective is not finite at the start point "
                    f"(value {value}).",
                    OptimizationError,
                )
            utils.log(
                f"Non-finite objective at evaluation {num_evals}, "
                f"backtracking."
            )
            return _penalty(best["value"]), np.zeros_like(x)

        if value < best["value"]:
            best["x"] = x.copy()
            best["value"] = value

        return value, grad

    try:
        result = minimize(
            counted_objective,
            x0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds.to_scipy(),
            options={
                "maxfun": maxfun,
                "maxcor": LBFGSB_MAXCOR,
                "gtol": LBFGSB_GTOL,
                "ftol": LBFGSB_FTOL,
            },
        )
        utils.log(
            f"L-BFGS-B stopped after {num_evals} evaluations: "
            f"{result.message}"
        )
    except _BudgetExhausted:
        utils.log(f"L-BFGS-B evaluation budget of {maxfun} exhausted.")

    return bounds.project(best["x"]), best["value"], num_evals


# -----------------------------------------------------------------------------
# AdaDelta
# -----------------------------------------------------------------------------


class AdaDelta:
    """
    AdaDelta state for one parameter vector.

        E[g^2]  <- decay E[g^2] + (1 - decay) g^2
        delta   =  step_rate sqrt(E[dx^2] + offset) / sqrt(E[g^2] + offset) g
        x       <- x - delta
        E[dx^2] <- decay E[dx^2] + (1 - decay) delta^2

    The step accumulator holds the applied, step_rate scaled, updates.
    """

    def __init__(self, size: int, config: AdaDeltaConfig):
        self.config = config
        self.mean_sq_grad = np.zeros(size)
        self.mean_sq_step = np.zeros(size)
        self.num_steps = 0

    def step(self, x: np.ndarray, grad: np.ndarray) -> np.ndarray:
        decay = self.config.decay
        offset = self.config.offset

        self.mean_sq_grad = decay * self.mean_sq_grad + (1 - decay) * grad**2

        delta = (
            self.config.step_rate
            * np.sqrt(self.mean_sq_step + offset)
            / np.sqrt(self.mean_sq_grad + offset)
            * grad
        )
        self.mean_sq_step = decay * self.mean_sq_step + (1 - decay) * delta**2
        self.num_steps += 1

        return x - delta


def adadelta_run(
    objective_grad: Callable[[np.ndarray, np.ndarray], np.ndarray],
    x0: np.ndarray,
    config: AdaDeltaConfig,
    schedule: Iterable[Iterable[np.ndarray]],
    on_epoch: Optional[Callable[[int, np.ndarray], bool]] = None,
) -> np.ndarray:
    """
    Run AdaDelta descent.

    Parameters
    ----------

    objective_grad : gradient of the function to minimize,
        objective_grad(x, batch).

    x0 : start point.

    config : step rate, decay and offset.

    schedule : one iterable of batches per epoch.

    on_epoch : called as on_epoch(epoch, x) after every epoch
        (epochs counted from 1). Returning True stops the run.
    """
    x = np.asarray(x0, dtype=float).ravel().copy()
    optimizer = AdaDelta(x.size, config)

    for epoch, batches in enumerate(schedule, start=1):
        for batch in batches:
            grad = np.asarray(objective_grad(x, batch), dtype=float).ravel()

            if not np.all(np.isfinite(grad)):
                utils.log_and_raise_error(
                    f"Non-finite stochastic gradient at epoch {epoch}, "
                    f"step {optimizer.num_steps + 1} "
                    f"(|x| = {np.linalg.norm(x):.3e}, "
                    f"{int(np.sum(~np.isfinite(grad)))} bad entries). "
                    f"Try a smaller step rate.",
                    OptimizationError,
                )
            x = optimizer.step(x, grad)

        if on_epoch is not None and on_epoch(epoch, x):
            break

    return x
