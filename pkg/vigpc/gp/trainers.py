"""
The five training strategies.

vi_jj, vi_taylor
    Alternate an analytic stage (n_upd sweeps of xi, then q(u)) with
    n_fun L-BFGS-B evaluations of the collapsed bound over log theta.
vi_jj_hybrid
    Analytic stage as vi_jj, then L-BFGS-B over (log theta, xi).
vi_jj_full
    L-BFGS-B over (log theta, xi) only; q(u) is recovered analytically.
svi_adadelta
    AdaDelta on minibatch estimates of the quadrature ELBO over
    (mu, Cholesky factor of Sigma, log theta).
"""

from __future__ import annotations

import dataclasses
import time
from typing import Callable, Iterator, List, Optional, Tuple

import numpy as np

from vigpc.gp.bound_jj import (
    XiState,
    compact_bound_jj,
    elbo_full_J,
    optimal_variational_jj,
    xi_update_jj,
)
from vigpc.gp.bound_svi import (
    DEFAULT_QUAD_ORDER,
    CholeskyParam,
    elbo_quadrature,
    num_packed,
    svi_elbo_and_grads,
)
from vigpc.gp.bound_taylor import (
    approx_bound_taylor,
    compact_bound_taylor,
    omitted_terms,
    optimal_variational_taylor,
    taylor_scalar_terms,
    xi_update_taylor,
)
from vigpc.gp.gp_moments import (
    DEFAULT_PREDICT_QUAD_ORDER,
    CovBlocks,
    PredictiveMoments,
    VariationalState,
    compute_cov_blocks,
    gauss_hermite_rule,
    predict_class_prob,
    predict_labels,
    predict_latent_at,
)
from vigpc.gp.inducing import InducingSet
from vigpc.gp.kernels import KernelHyperparams, median_length_scale
from vigpc.gp.optim import (
    AdaDeltaConfig,
    BoxBounds,
    adadelta_run,
    lbfgsb_minimize,
)
from vigpc.utils import utils
from vigpc.utils.custom_exceptions import ConfigError
from vigpc.utils.data_io import Dataset
from vigpc.utils.traces import TraceRecord, TrainingTrace

STRATEGIES = (
    "svi_adadelta",
    "vi_jj",
    "vi_taylor",
    "vi_jj_full",
    "vi_jj_hybrid",
)

LOG_THETA_LOWER = float(np.log(1e-3))
LOG_THETA_UPPER = float(np.log(1e3))

# -----------------------------------------------------------------------------
# Types
# -----------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """
    Parameters
    ----------

    strategy : one of STRATEGIES.

    n_upd : analytic sweeps per outer iteration.

    n_fun : L-BFGS-B evaluation budget per outer iteration.

    max_epochs : cap on outer iterations (epochs for svi_adadelta).

    max_seconds : wall-clock cap, None for no cap.

    adadelta : step rate, decay, offset and batch size for
        svi_adadelta. None uses a step rate of 0.1 and
        default_batch_size.

    quad_order : Gauss-Hermite order of the svi ELBO.

    predict_quad_order : Gauss-Hermite order for class probabilities.

    eval_every : record the trace every eval_every outer iterations.

    convergence_tol : stop when the relative change of the bound
        between outer iterations falls below this.

    patience : stop after this many outer iterations without a new
        best bound.

    seed : seed of the minibatch shuffling.
    """

    strategy: str = "vi_jj"
    n_upd: int = 3
    n_fun: int = 5
    max_epochs: int = 100
    max_seconds: Optional[float] = None
    adadelta: Optional[AdaDeltaConfig] = None
    quad_order: int = DEFAULT_QUAD_ORDER
    predict_quad_order: int = DEFAULT_PREDICT_QUAD_ORDER
    eval_every: int = 1
    convergence_tol: float = 1e-6
    patience: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            utils.log_and_raise_error(
                f"Strategy '{self.strategy}' not in {STRATEGIES}.",
                ConfigError,
            )
        for name in (
            "n_upd",
            "n_fun",
            "quad_order",
            "predict_quad_order",
            "eval_every",
            "patience",
        ):
            if getattr(self, name) < 1:
                utils.log_and_raise_error(
                    f"'{name}' must be >= 1, got {getattr(self, name)}.",
                    ConfigError,
                )
        if self.max_epochs < 0:
            utils.log_and_raise_error(
                f"'max_epochs' must be >= 0, got {self.max_epochs}.",
                ConfigError,
            )
        if self.max_seconds is not None and not self.max_seconds > 0:
            utils.log_and_raise_error(
                f"'max_seconds' must be > 0, got {self.max_seconds}.",
                ConfigError,
            )
        if not self.convergence_tol >= 0:
            utils.log_and_raise_error(
                f"'convergence_tol' must be >= 0, got "
                f"{self.convergence_tol}.",
                ConfigError,
            )


@dataclasses.dataclass(frozen=True, eq=False)
class FittedModel:
    theta: KernelHyperparams
    inducing: InducingSet
    state: VariationalState

    def predict_latent(
        self, x: np.ndarray, include_noise: bool = False
    ) -> PredictiveMoments:
        return predict_latent_at(
            x, self.inducing.z, self.theta, self.state, include_noise
        )

    def predict_proba(
        self,
        x: np.ndarray,
        quad_order: int = DEFAULT_PREDICT_QUAD_ORDER,
    ) -> np.ndarray:
        """
        p(y = +1 | x).
        """
        return predict_class_prob(self.predict_latent(x), quad_order)

    def predict(
        self,
        x: np.ndarray,
        quad_order: int = DEFAULT_PREDICT_QUAD_ORDER,
    ) -> np.ndarray:
        return predict_labels(self.predict_proba(x, quad_order))


# -----------------------------------------------------------------------------
# Public functions
# -----------------------------------------------------------------------------


def fit(
    train: Dataset,
    inducing: InducingSet,
    config: Optional[TrainConfig] = None,
    test: Optional[Dataset] = None,
    theta0: Optional[KernelHyperparams] = None,
    trace: Optional[TrainingTrace] = None,
) -> Tuple[FittedModel, TrainingTrace]:
    """
    Train a sparse GP classifier.

    Parameters
    ----------

    train : training data.

    inducing : fixed inducing inputs.

    config : strategy and stopping rules, TrainConfig() by default.

    test : if given, the test accuracy is recorded in the trace.

    theta0 : initial hyperparameters. Defaults to a unit-variance
        squared exponential with the median pairwise distance of the
        training inputs as length-scale.

    trace : records are appended here as they are produced, so a
        caller keeps a partial trace if training fails.
    """
    config = config or TrainConfig()
    trace = trace if trace is not None else TrainingTrace()

    if train.num_data == 0:
        utils.log_and_raise_error("The training set is empty.", ValueError)

    if theta0 is None:
        theta0 = KernelHyperparams.from_values(
            length_scale=median_length_scale(train.x)
        )

    if train.num_features != inducing.num_features:
        utils.log_and_raise_error(
            f"Dimension mismatch: the data have {train.num_features} "
            f"features but the inducing points have "
            f"{inducing.num_features}.",
            ValueError,
        )

    run_class = {
        "vi_jj": _AlternatingRun,
        "vi_taylor": _AlternatingRun,
        "vi_jj_hybrid": _AlternatingRun,
        "vi_jj_full": _JointXiRun,
        "svi_adadelta": _SviRun,
    }[config.strategy]

    run = run_class(train, inducing, config, test, theta0, trace)
    model = run.run()

    return model, trace


def evaluate_accuracy(
    model: FittedModel,
    test: Dataset,
    quad_order: int = DEFAULT_PREDICT_QUAD_ORDER,
) -> float:
    """
    Fraction of test points whose label is +1 exactly when
    p(y = +1) > 0.5.
    """
    if test.num_data == 0:
        utils.log_and_raise_error(
            "Cannot evaluate accuracy on an empty test set.", ValueError
        )
    labels = model.predict(test.x, quad_order)
    return float(np.mean(labels == test.y))


def default_batch_size(num_data: int) -> int:
    """
    50 for up to 2000 points, else about one hundredth of the data.
    """
    if num_data <= 2000:
        return 50
    return int(round(num_data / 100))


# -----------------------------------------------------------------------------
# Training runs
# -----------------------------------------------------------------------------


class _TrainingRun:
    """
    Shared state and bookkeeping of one fit call: timing, trace
    records and the stopping rules.
    """

    def __init__(
        self,
        train: Dataset,
        inducing: InducingSet,
        config: TrainConfig,
        test: Optional[Dataset],
        theta0: KernelHyperparams,
        trace: TrainingTrace,
    ):
        self.x = train.x
        self.y = train.y
        self.inducing = inducing
        self.config = config
        self.test = test
        self.trace = trace

        self.theta = theta0
        self.state = VariationalState.initial(inducing.m)

        self.theta_bounds = BoxBounds(
            np.full(len(theta0.trainable), LOG_THETA_LOWER),
            np.full(len(theta0.trainable), LOG_THETA_UPPER),
        )

        self._start = time.monotonic()
        self._prev_elbo = None
        self._best_elbo = -np.inf
        self._num_not_improving = 0

    def run(self) -> FittedModel:
        raise NotImplementedError

    @property
    def model(self) -> FittedModel:
        return FittedModel(self.theta, self.inducing, self.state)

    def blocks(
        self,
        theta: Optional[KernelHyperparams] = None,
        with_grads: bool = False,
    ) -> CovBlocks:
        return compute_cov_blocks(
            self.x,
            self.inducing.z,
            theta or self.theta,
            with_grads=with_grads,
        )

    def elapsed(self) -> float:
        return time.monotonic() - self._start

    def record(self, outer_iter: int, elbo: float, force: bool = False):
        """
        Append a trace record on the eval_every cadence (iteration 0
        and forced records always).
        """
        if not (force or outer_iter % self.config.eval_every == 0):
            return
        if self.trace.last is not None and self.trace.last.outer_iter == (
            outer_iter
        ):
            return

        accuracy = None
        if self.test is not None and self.test.num_data > 0:
            accuracy = evaluate_accuracy(
                self.model, self.test, self.config.predict_quad_order
            )

        record = TraceRecord(
            wall_seconds=self.elapsed(),
            outer_iter=outer_iter,
            elbo=float(elbo),
            accuracy=accuracy,
            theta=self.theta.as_dict(),
        )
        self.trace.append(record)

        utils.log(
            f"{self.config.strategy} iteration {outer_iter}: "
            f"bound {elbo:.6f}, accuracy {accuracy}, "
            f"{record.wall_seconds:.2f} s"
        )

    def should_stop(self, elbo: float) -> bool:
        """
        Relative change below convergence_tol, no new best bound for
        patience iterations, or the wall-clock cap.
        """
        stop = False

        if self._prev_elbo is not None:
            change = abs(elbo - self._prev_elbo)
            scale = max(abs(self._prev_elbo), np.finfo(float).tiny)
            if change <= self.config.convergence_tol * scale:
                utils.log(f"Converged: relative change {change / scale:.3e}.")
                stop = True

        if elbo > self._best_elbo:
            self._best_elbo = elbo
            self._num_not_improving = 0
        else:
            self._num_not_improving += 1
            if self._num_not_improving >= self.config.patience:
                utils.log(
                    f"Converged: no improvement for "
                    f"{self._num_not_improving} iterations."
                )
                stop = True

        max_seconds = self.config.max_seconds
        if max_seconds is not None and self.elapsed() >= max_seconds:
            utils.log(f"Stopping at the wall-clock cap of {max_seconds} s.")
            stop = True

        self._prev_elbo = elbo
        return stop

    def outer_loop(self, step: Callable[[int], float]) -> None:
        """
        Run step(outer_iter) -> bound until a stopping rule fires.
        """
        last_iter = 0
        for outer_iter in range(1, self.config.max_epochs + 1):
            elbo = step(outer_iter)
            last_iter = outer_iter

            stop = self.should_stop(elbo)
            self.record(outer_iter, elbo, force=stop)
            if stop:
                break

        if last_iter and (
            self.trace.last is None or self.trace.last.outer_iter != last_iter
        ):
            self.record(last_iter, self._prev_elbo, force=True)

    def lbfgsb_over(
        self,
        objective: Callable[[np.ndarray], Tuple[float, np.ndarray]],
        x0: np.ndarray,
        bounds: BoxBounds,
    ) -> Tuple[np.ndarray, float]:
        x_best, value_best, num_evals = lbfgsb_minimize(
            objective, x0, bounds, maxfun=self.config.n_fun
        )
        utils.log(f"Stage 2 used {num_evals} evaluations.")
        return x_best, value_best


class _AlternatingRun(_TrainingRun):
    """
    vi_jj, vi_taylor and vi_jj_hybrid.
    """

    def run(self) -> FittedModel:
        strategy = self.config.strategy
        blocks = self.blocks()

        if strategy == "vi_taylor":
            self.xi = xi_update_taylor(blocks, self.state)
            initial = approx_bound_taylor(blocks, self.state, self.xi, self.y)
        else:
            self.xi = xi_update_jj(blocks, self.state)
            initial = elbo_full_J(blocks, self.state, self.xi, self.y)

        self.record(0, initial, force=True)
        self.outer_loop(self.outer_iteration)

        return self.model

    def outer_iteration(self, outer_iter: int) -> float:
        if self.config.strategy == "vi_taylor":
            return self._taylor_iteration()
        return self._jj_iteration(joint=self.config.strategy == "vi_jj_hybrid")

    def _jj_iteration(self, joint: bool) -> float:
        blocks = self.blocks()
        for _ in range(self.config.n_upd):
            self.xi = xi_update_jj(blocks, self.state)
            self.state = optimal_variational_jj(blocks, self.xi, self.y)

        if joint:
            bound = self._joint_stage()
        else:
            bound = self._theta_stage(
                lambda blocks_: compact_bound_jj(
                    blocks_, self.xi, self.y, want_grads=True
                )
            )

        self.state = optimal_variational_jj(self.blocks(), self.xi, self.y)
        return bound

    def _taylor_iteration(self) -> float:
        blocks = self.blocks()
        for _ in range(self.config.n_upd):
            self.xi = xi_update_taylor(blocks, self.state)
            self.state = optimal_variational_taylor(
                blocks, taylor_scalar_terms(self.xi, self.y)
            )

        bound = self._theta_stage(
            lambda blocks_: compact_bound_taylor(
                blocks_, self.xi, self.y, want_grads=True
            ),
        )

        self.state = optimal_variational_taylor(
            self.blocks(), taylor_scalar_terms(self.xi, self.y)
        )
        return bound + omitted_terms(self.xi, self.y)

    def _theta_stage(self, evaluate) -> float:
        """
        L-BFGS-B over log theta at fixed xi.
        """

        def objective(log_theta):
            blocks = self.blocks(self.theta.with_vector(log_theta), True)
            bound = evaluate(blocks)
            return -bound.value, -bound.grad_theta

        x_best, value_best = self.lbfgsb_over(
            objective, self.theta.to_vector(), self.theta_bounds
        )
        self.theta = self.theta.with_vector(x_best)
        return -value_best

    def _joint_stage(self) -> float:
        x_best, value_best = self.lbfgsb_over(
            *joint_objective(self, self.xi.xi)
        )
        self.theta, self.xi = split_joint_vector(self.theta, x_best)
        return -value_best


class _JointXiRun(_TrainingRun):
    """
    vi_jj_full.
    """

    def run(self) -> FittedModel:
        blocks = self.blocks()
        self.xi = xi_update_jj(blocks, self.state)

        initial = elbo_full_J(blocks, self.state, self.xi, self.y)
        self.record(0, initial, force=True)
        self.outer_loop(self.outer_iteration)

        return self.model

    def outer_iteration(self, outer_iter: int) -> float:
        x_best, value_best = self.lbfgsb_over(
            *joint_objective(self, self.xi.xi)
        )
        self.theta, self.xi = split_joint_vector(self.theta, x_best)
        self.state = optimal_variational_jj(self.blocks(), self.xi, self.y)
        return -value_best


class _SviRun(_TrainingRun):
    """
    svi_adadelta over the vector [mu, packed Cholesky factor, log theta].
    """

    def run(self) -> FittedModel:
        num_data = self.x.shape[0]
        num_inducing = self.inducing.m

        adadelta = self.config.adadelta or AdaDeltaConfig(
            step_rate=0.1, batch_size=default_batch_size(num_data)
        )
        self.batch_size = min(adadelta.batch_size, num_data)
        self.rule = gauss_hermite_rule(self.config.quad_order)
        self.rng = np.random.default_rng(self.config.seed)

        self.sizes = (num_inducing, num_packed(num_inducing))
        self.params = np.concatenate(
            [
                self.state.mu,
                CholeskyParam.identity(num_inducing).to_vector(),
                self.theta.to_vector(),
            ]
        )

        initial = elbo_quadrature(self.blocks(), self.state, self.y, self.rule)
        self.record(0, initial, force=True)

        if self.config.max_epochs > 0:
            adadelta_run(
                self.negative_elbo_grad,
                self.params,
                adadelta,
                self.schedule(),
                self.on_epoch,
            )

        return self.model

    def unpack(
        self, params: np.ndarray
    ) -> Tuple[np.ndarray, CholeskyParam, KernelHyperparams]:
        num_mu, num_chol = self.sizes
        mu = params[:num_mu]
        chol = CholeskyParam.from_vector(
            params[num_mu : num_mu + num_chol], num_mu
        )
        theta = self.theta.with_vector(params[num_mu + num_chol :])
        return mu, chol, theta

    def schedule(self) -> Iterator[List[np.ndarray]]:
        """
        Each epoch is a fresh shuffled partition of the data.
        """
        num_data = self.x.shape[0]
        for _ in range(self.config.max_epochs):
            order = self.rng.permutation(num_data)
            yield [
                order[start : start + self.batch_size]
                for start in range(0, num_data, self.batch_size)
            ]

    def negative_elbo_grad(
        self, params: np.ndarray, batch: np.ndarray
    ) -> np.ndarray:
        mu, chol, theta = self.unpack(params)

        blocks = compute_cov_blocks(
            self.x[batch], self.inducing.z, theta, with_grads=True
        )
        _, grads = svi_elbo_and_grads(
            blocks,
            mu,
            chol,
            theta,
            self.y[batch],
            np.arange(batch.size),
            self.rule,
            num_data=self.x.shape[0],
        )
        return -np.concatenate(
            [grads.mu, chol.vector_grad(grads.l_factor), grads.log_theta]
        )

    def on_epoch(self, epoch: int, params: np.ndarray) -> bool:
        mu, chol, theta = self.unpack(params)
        self.params = params
        self.theta = theta
        self.state = chol.as_state(mu)

        elbo = elbo_quadrature(self.blocks(), self.state, self.y, self.rule)

        stop = self.should_stop(elbo)
        if epoch == self.config.max_epochs:
            stop = True
        self.record(epoch, elbo, force=stop)
        return stop


# -----------------------------------------------------------------------------
# Joint (log theta, xi) objective
# -----------------------------------------------------------------------------


def joint_objective(run: _TrainingRun, xi0: np.ndarray):
    """
    Negative collapsed JJ bound over the stacked vector
    [log theta, xi], with its start point and box bounds (xi >= 0).
    """
    def objective(params):
        theta, xi = split_joint_vector(run.theta, params)
        bound = compact_bound_jj(run.blocks(theta, True), xi, run.y, True)
        return -bound.value, -np.concatenate(
            [bound.grad_theta, bound.grad_xi]
        )

    x0 = np.concatenate([run.theta.to_vector(), xi0])
    bounds = BoxBounds.concat(
        run.theta_bounds,
        BoxBounds(np.zeros(xi0.size), np.full(xi0.size, np.inf)),
    )
    return objective, x0, bounds


def split_joint_vector(
    theta: KernelHyperparams, params: np.ndarray
) -> Tuple[KernelHyperparams, XiState]:
    num_theta = len(theta.trainable)
    return (
        theta.with_vector(params[:num_theta]),
        XiState(np.maximum(params[num_theta:], 0.0)),
    )
