"""
The uncollapsed inducing-point ELBO

    sum_i E_q(f_i) log sigmoid(y_i f_i) - KL(q(u) || p(u))

with one-dimensional Gauss-Hermite expectations, and its minibatch
gradients over (mu, L, log theta) where Sigma = L L^T.
"""

from __future__ import annotations

import dataclasses
from typing import Optional, Tuple

import numpy as np
from scipy.special import expit, log_expit

from vigpc.gp.gp_moments import (
    CovBlocks,
    GaussHermiteRule,
    VariationalState,
    gauss_hermite_rule,
    kl_from_cholesky,
    kl_normal_vs_prior,
    marginal_moments,
)
from vigpc.gp.kernels import KernelHyperparams
from vigpc.utils import utils, validation

__all__ = [
    "CholeskyParam",
    "GaussHermiteRule",
    "SviGradients",
    "DEFAULT_QUAD_ORDER",
    "expected_log_logistic",
    "elbo_quadrature",
    "svi_elbo_and_grads",
]

DEFAULT_QUAD_ORDER = 20

# Below this marginal variance the variance derivative switches to
# its zero-variance limit 1/2 d^2/df^2 log sigmoid(y f).
VARIANCE_GRAD_FLOOR = 1e-12


@dataclasses.dataclass(frozen=True, eq=False)
class CholeskyParam:
    """
    Lower-triangular factor L of Sigma = L L^T with a positive
    diagonal.

    The unconstrained vector form stacks the lower triangle row by
    row with the diagonal entries replaced by their logs.
    """

    l_factor: np.ndarray

    def __post_init__(self):
        l_factor = np.tril(np.asarray(self.l_factor, dtype=float))

        if l_factor.ndim != 2 or l_factor.shape[0] != l_factor.shape[1]:
            utils.log_and_raise_error(
                f"Cholesky factor must be square, got shape "
                f"{l_factor.shape}.",
                ValueError,
            )
        validation.check_finite(l_factor, "l_factor")

        if np.any(np.diag(l_factor) <= 0):
            utils.log_and_raise_error(
                "Cholesky factor must have a positive diagonal.",
                ValueError,
            )
        object.__setattr__(self, "l_factor", l_factor)

    @classmethod
    def identity(cls, num_inducing: int) -> CholeskyParam:
        return cls(np.eye(num_inducing))

    @classmethod
    def from_vector(cls, vector: np.ndarray, num_inducing: int):
        vector = np.asarray(vector, dtype=float)
        validation.check_length(
            vector, num_packed(num_inducing), "packed Cholesky factor"
        )
        rows, cols = np.tril_indices(num_inducing)

        l_factor = np.zeros((num_inducing, num_inducing))
        l_factor[rows, cols] = vector
        diag = np.diag_indices(num_inducing)
        l_factor[diag] = np.exp(l_factor[diag])

        return cls(l_factor)

    def to_vector(self) -> np.ndarray:
        packed = self.l_factor.copy()
        diag = np.diag_indices(self.num_inducing)
        packed[diag] = np.log(packed[diag])
        return packed[np.tril_indices(self.num_inducing)]

    def vector_grad(self, grad_l: np.ndarray) -> np.ndarray:
        """
        Map a gradient over the entries of L to a gradient over
        to_vector(); diagonal entries pick up the factor L_jj.
        """
        grad = np.tril(grad_l).copy()
        diag = np.diag_indices(self.num_inducing)
        grad[diag] *= np.diag(self.l_factor)
        return grad[np.tril_indices(self.num_inducing)]

    @property
    def num_inducing(self) -> int:
        return self.l_factor.shape[0]

    @property
    def sigma(self) -> np.ndarray:
        return self.l_factor @ self.l_factor.T

    def as_state(self, mu: np.ndarray) -> VariationalState:
        return VariationalState.from_cholesky(mu, self.l_factor)


@dataclasses.dataclass(frozen=True, eq=False)
class SviGradients:
    mu: np.ndarray
    l_factor: np.ndarray
    log_theta: np.ndarray


def num_packed(num_inducing: int) -> int:
    return num_inducing * (num_inducing + 1) // 2


# -----------------------------------------------------------------------------
# Expectations
# -----------------------------------------------------------------------------


def expected_log_logistic(
    mean, var, y, rule: Optional[GaussHermiteRule] = None
):
    """
    E[log sigmoid(y f)] for f ~ N(mean, var) by Gauss-Hermite
    quadrature. Exact log sigmoid(y mean) where var = 0. Accepts
    scalars or equal-length arrays.
    """
    rule = rule or gauss_hermite_rule(DEFAULT_QUAD_ORDER)
    value, _, _ = _expected_log_logistic_with_grads(
        np.atleast_1d(np.asarray(mean, dtype=float)),
        np.atleast_1d(np.asarray(var, dtype=float)),
        np.atleast_1d(np.asarray(y, dtype=float)),
        rule,
        want_grads=False,
    )
    return float(value[0]) if np.ndim(mean) == 0 else value


def _expected_log_logistic_with_grads(
    mean: np.ndarray,
    var: np.ndarray,
    y: np.ndarray,
    rule: GaussHermiteRule,
    want_grads: bool = True,
) -> Tuple[np.ndarray, Optional[np.ndarray], Optional[np.ndarray]]:
    if np.any(var < 0):
        utils.log_and_raise_error(
            "Marginal variances must be >= 0.", ValueError
        )

    weights = rule.normalized_weights
    std = np.sqrt(2.0 * var)
    f_nodes = mean[:, None] + std[:, None] * rule.nodes[None, :]
    margins = y[:, None] * f_nodes

    value = log_expit(margins) @ weights
    exact = var == 0
    value[exact] = log_expit(y[exact] * mean[exact])

    if not want_grads:
        return value, None, None

    # d/df log sigmoid(y f) = y sigmoid(-y f)
    first = y[:, None] * expit(-margins)
    grad_mean = first @ weights

    small = var < VARIANCE_GRAD_FLOOR
    safe_var = np.where(small, 1.0, var)
    grad_var = (first * rule.nodes[None, :]) @ weights / np.sqrt(
        2.0 * safe_var
    )

    # zero-variance limit: 1/2 d^2/df^2 log sigmoid(y f) at the mean
    limit = -0.5 * expit(mean) * expit(-mean)
    grad_var = np.where(small, limit, grad_var)

    return value, grad_mean, grad_var


def elbo_quadrature(
    blocks: CovBlocks,
    state: VariationalState,
    y: np.ndarray,
    rule: Optional[GaussHermiteRule] = None,
) -> float:
    """
    Full-data ELBO with Gauss-Hermite expectations.
    """
    rule = rule or gauss_hermite_rule(DEFAULT_QUAD_ORDER)
    y = _check_labels(y, blocks.num_data)

    kl = kl_normal_vs_prior(state, blocks)
    if y.size == 0:
        return -kl

    moments = marginal_moments(blocks, state)
    expected, _, _ = _expected_log_logistic_with_grads(
        moments.mean, moments.var, y, rule, want_grads=False
    )
    return float(np.sum(expected)) - kl


# -----------------------------------------------------------------------------
# Minibatch ELBO and gradients
# -----------------------------------------------------------------------------


def svi_elbo_and_grads(
    blocks: CovBlocks,
    mu: np.ndarray,
    chol: CholeskyParam,
    theta: KernelHyperparams,
    y: np.ndarray,
    batch: np.ndarray,
    rule: Optional[GaussHermiteRule] = None,
    num_data: Optional[int] = None,
) -> Tuple[float, SviGradients]:
    """
    Unbiased minibatch estimate of the ELBO and its gradients.

    Parameters
    ----------

    blocks : covariance blocks, computed with_grads=True, whose data
        rows are indexed by batch.

    mu, chol : parameters of q(u) = N(mu, L L^T). Only the lower
        triangle of chol.l_factor is used.

    theta : the hyperparameters blocks were computed with. The
        log-theta gradient follows theta.trainable.

    y : labels of the rows of blocks.

    batch : non-empty set of distinct row indices.

    rule : Gauss-Hermite rule, order DEFAULT_QUAD_ORDER by default.

    num_data : size of the full dataset the batch is drawn from,
        defaults to blocks.num_data. The likelihood term is scaled by
        num_data / len(batch).

    Returns
    -------

    (value, SviGradients) with the gradient over the entries of L
    (lower triangle; see CholeskyParam.vector_grad for the packed form).
    """
    rule = rule or gauss_hermite_rule(DEFAULT_QUAD_ORDER)
    mu = np.asarray(mu, dtype=float).ravel()
    validation.check_length(mu, blocks.num_inducing, "mu")
    validation.check_length(
        np.empty(chol.num_inducing), blocks.num_inducing, "l_factor"
    )
    y = _check_labels(y, blocks.num_data)
    batch = _check_batch(batch, blocks.num_data)

    if blocks.grads is None or blocks.grads.names != theta.trainable:
        utils.log_and_raise_error(
            "svi_elbo_and_grads needs covariance blocks computed with "
            "with_grads=True for the same hyperparameters.",
            ValueError,
        )

    num_data = blocks.num_data if num_data is None else num_data
    scale = num_data / batch.size

    sub = blocks.subset(batch)
    l_factor = chol.l_factor
    sigma = l_factor @ l_factor.T

    proj = sub.solve_k_mm(sub.k_mn).T  # rows p_i = A^-1 k_i
    a_inv_mu = blocks.solve_k_mm(mu)

    mean = proj @ mu
    proj_l = proj @ l_factor
    var = sub.ktilde_diag + np.sum(proj_l**2, axis=1)
    var = validation.clamp_variances(
        var, float(np.max(sub.k_nn_diag)), "marginal variance"
    )

    expected, grad_mean, grad_var = _expected_log_logistic_with_grads(
        mean, var, y[batch], rule
    )

    value = scale * float(np.sum(expected)) - kl_from_cholesky(
        mu, l_factor, blocks
    )

    alpha = scale * grad_mean
    beta = scale * grad_var

    eye = np.eye(blocks.num_inducing)
    a_inv = blocks.solve_k_mm(eye)
    a_inv_l = blocks.solve_k_mm(l_factor)

    grad_mu = proj.T @ alpha - a_inv_mu

    grad_l = np.tril(
        2.0 * proj.T @ (beta[:, None] * proj_l) - a_inv_l
    ) + np.diag(1.0 / np.diag(l_factor))

    # rows q_i = A^-1 Sigma p_i
    proj_sigma = blocks.solve_k_mm(sigma @ proj.T).T
    a_inv_sigma_a_inv = a_inv @ sigma @ a_inv

    adj_k_nm = np.outer(alpha, a_inv_mu) - 2.0 * beta[:, None] * (
        proj - proj_sigma
    )
    adj_k_mm = (
        -np.outer(proj.T @ alpha, a_inv_mu)
        + proj.T @ (beta[:, None] * proj)
        - 2.0 * proj.T @ (beta[:, None] * proj_sigma)
        - 0.5 * (a_inv - a_inv_sigma_a_inv - np.outer(a_inv_mu, a_inv_mu))
    )
    grad_log_theta = sub.contract_grads(adj_k_mm, adj_k_nm, beta)

    return value, SviGradients(
        mu=grad_mu, l_factor=grad_l, log_theta=grad_log_theta
    )


def _check_batch(batch: np.ndarray, num_rows: int) -> np.ndarray:
    batch = np.asarray(batch).ravel()

    if batch.size == 0:
        utils.log_and_raise_error("The minibatch is empty.", ValueError)

    if not np.issubdtype(batch.dtype, np.integer):
        utils.log_and_raise_error(
            "Minibatch indices must be integers.", ValueError
        )

    if np.min(batch) < 0 or np.max(batch) >= num_rows:
        utils.log_and_raise_error(
            f"Minibatch indices must lie in [0, {num_rows}).", ValueError
        )

    if not utils.all_unique(batch.tolist()):
        utils.log_and_raise_error(
            "Minibatch indices must be distinct.", ValueError
        )
    return batch


def _check_labels(y: np.ndarray, num_rows: int) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if y.size:
        y = validation.check_labels(y)
    validation.check_length(y, num_rows, "y")
    return y
