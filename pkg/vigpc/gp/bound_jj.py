"""
Jaakkola-Jordan bound on the log-logistic likelihood.

    log sigmoid(t) >= t / 2 - xi / 2 + log sigmoid(xi)
                      - lambda(xi) (t^2 - xi^2)

with lambda(xi) = tanh(xi / 2) / (4 xi). Substituting the bound into
the inducing-point ELBO gives a bound J(mu, Sigma, xi, theta) that is
quadratic in f, so the optimal q(u) is available in closed form and
can be collapsed into a bound of (theta, xi) alone.

The collapsed algebra is shared with the Taylor approximation: both
bounds have the form

    sum_i [r_i f_i - w_i f_i^2] + const

for per-point weights w and targets r. JJ uses w = lambda(xi),
r = y / 2.
"""

from __future__ import annotations

import dataclasses
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky
from scipy.special import log_expit

from vigpc.gp.gp_moments import (
    CovBlocks,
    VariationalState,
    kl_normal_vs_prior,
    marginal_moments,
)
from vigpc.utils import utils, validation
from vigpc.utils.custom_exceptions import SingularMatrixError

# Below this xi, lambda and its derivative use their Taylor series.
LAMBDA_SERIES_SWITCH = 1e-4
LAMBDA_GRAD_SERIES_SWITCH = 1e-2

# -----------------------------------------------------------------------------
# Types
# -----------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True, eq=False)
class XiState:
    """
    Per-point JJ parameters xi >= 0 and lambda(xi).
    """

    xi: np.ndarray
    lambda_diag: np.ndarray = dataclasses.field(init=False, repr=False)

    def __post_init__(self):
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        validation.check_finite(xi, "xi")

        if np.any(xi < 0):
            utils.log_and_raise_error(
                "JJ bound parameters 'xi' must be >= 0.", ValueError
            )

        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "lambda_diag", lambda_fn(xi))

    @property
    def num_data(self) -> int:
        return self.xi.size


@dataclasses.dataclass(frozen=True, eq=False)
class BoundEval:
    """
    A collapsed bound evaluated at (theta, xi).

    value : the bound.
    grad_theta : gradient over the trainable log-hyperparameters, in
        theta.trainable order. None unless requested.
    grad_xi : gradient over xi. None unless requested, and always None
        for the Taylor bound.
    aux_b : B = K_mm + 2 K_mn W K_nm.
    chol_b : lower Cholesky factor of aux_b.
    """

    value: float
    grad_theta: Optional[np.ndarray]
    grad_xi: Optional[np.ndarray]
    aux_b: np.ndarray
    chol_b: np.ndarray


# -----------------------------------------------------------------------------
# Scalar bound
# -----------------------------------------------------------------------------


def lambda_fn(xi):
    """
    lambda(xi) = tanh(xi / 2) / (4 xi), with lambda(0) = 1 / 8.
    Accepts scalars or arrays.
    """
    xi = np.asarray(xi, dtype=float)
    small = xi <= LAMBDA_SERIES_SWITCH
    safe_xi = np.where(small, 1.0, xi)

    value = np.where(
        small,
        1.0 / 8.0 - xi**2 / 96.0,
        np.tanh(safe_xi / 2.0) / (4.0 * safe_xi),
    )
    return value if value.ndim else float(value)


def lambda_prime(xi):
    """
    d lambda / d xi. Negative for xi > 0 and zero at xi = 0.
    """
    xi = np.asarray(xi, dtype=float)
    small = xi <= LAMBDA_GRAD_SERIES_SWITCH
    safe_xi = np.where(small, 1.0, xi)

    tanh_half = np.tanh(safe_xi / 2.0)
    exact = (1.0 - tanh_half**2) / (8.0 * safe_xi) - tanh_half / (
        4.0 * safe_xi**2
    )
    series = -xi / 48.0 + xi**3 / 240.0

    value = np.where(small, series, exact)
    return value if value.ndim else float(value)


def jj_scalar_bound(t, xi):
    """
    t / 2 - xi / 2 + log sigmoid(xi) - lambda(xi) (t^2 - xi^2), which
    is <= log sigmoid(t) with equality at |t| = xi.
    """
    t = np.asarray(t, dtype=float)
    xi = np.asarray(xi, dtype=float)

    value = t / 2.0 - xi / 2.0 + log_expit(xi) - lambda_fn(xi) * (t**2 - xi**2)
    return value if np.ndim(value) else float(value)


def xi_terms(xi_state: XiState) -> float:
    """
    sum_i log sigmoid(xi_i) - xi_i / 2 + lambda(xi_i) xi_i^2, the part of
    J that depends on xi only.
    """
    xi = xi_state.xi
    return float(
        np.sum(log_expit(xi) - xi / 2.0 + xi_state.lambda_diag * xi**2)
    )


# -----------------------------------------------------------------------------
# Uncollapsed bound and its optima
# -----------------------------------------------------------------------------


def elbo_full_J(
    blocks: CovBlocks,
    state: VariationalState,
    xi: XiState,
    y: np.ndarray,
) -> float:
    """
    J(mu, Sigma, xi, theta), the ELBO with every log-likelihood term
    replaced by its JJ bound. Only the marginals of q(f_i) are needed,
    so no n x n matrix is formed.
    """
    y = _check_data(blocks, y, xi.num_data)

    kl = kl_normal_vs_prior(state, blocks)
    if y.size == 0:
        return -kl

    moments = marginal_moments(blocks, state)

    expected_bound = (
        xi_terms(xi)
        + 0.5 * float(y @ moments.mean)
        - float(xi.lambda_diag @ (moments.mean**2 + moments.var))
    )
    return expected_bound - kl


def optimal_variational_jj(
    blocks: CovBlocks, xi: XiState, y: np.ndarray
) -> VariationalState:
    """
    The q(u) maximizing J for fixed (xi, theta):

        Sigma = K_mm B^-1 K_mm,  mu = 1/2 K_mm B^-1 K_mn y
        B = K_mm + 2 K_mn Lambda K_nm
    """
    y = _check_data(blocks, y, xi.num_data)
    return optimal_state_quadratic(blocks, xi.lambda_diag, 0.5 * y)


def xi_update_jj(blocks: CovBlocks, state: VariationalState) -> XiState:
    """
    xi_i = sqrt(m_i^2 + S_i^2), the maximizer of J over xi.
    """
    moments = marginal_moments(blocks, state)
    return XiState(np.sqrt(moments.mean**2 + moments.var))


# -----------------------------------------------------------------------------
# Collapsed bound
# -----------------------------------------------------------------------------


def compact_bound_jj(
    blocks: CovBlocks,
    xi: XiState,
    y: np.ndarray,
    want_grads: bool = False,
) -> BoundEval:
    """
    The collapsed bound J(theta, xi) = max over q(u) of J.

    The xi terms are kept, so J(theta, xi) equals J evaluated at
    optimal_variational_jj(blocks, xi, y).

    With want_grads, blocks must carry derivatives
    (compute_cov_blocks(..., with_grads=True)). grad_xi follows from
    the envelope theorem:

        dJ / dxi_i = lambda'(xi_i) (xi_i^2 - m_i^2 - S_i^2)

    with (m_i, S_i^2) the marginals of the optimal q(u).
    """
    y = _check_data(blocks, y, xi.num_data)

    core = collapsed_quadratic_bound(
        blocks, xi.lambda_diag, 0.5 * y, want_grads
    )
    value = core.value + xi_terms(xi)

    grad_xi = None
    if want_grads:
        opt_mean = blocks.k_nm @ core.adjoint_solve
        opt_var = blocks.ktilde_diag + _rowwise_quad(
            blocks.k_nm, core.chol_b
        )
        grad_xi = lambda_prime(xi.xi) * (xi.xi**2 - opt_mean**2 - opt_var)

    return BoundEval(
        value=value,
        grad_theta=core.grad_theta,
        grad_xi=grad_xi,
        aux_b=core.aux_b,
        chol_b=core.chol_b,
    )


# -----------------------------------------------------------------------------
# Quadratic-bound algebra
# -----------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True, eq=False)
class QuadraticBoundCore:
    """
    Collapsed value of sum_i [r_i f_i - w_i f_i^2] - KL, without any
    terms that depend on the per-point parameters only.

    adjoint_solve is B^-1 K_mn r.
    """

    value: float
    grad_theta: Optional[np.ndarray]
    aux_b: np.ndarray
    chol_b: np.ndarray
    adjoint_solve: np.ndarray


def bound_matrix(
    blocks: CovBlocks, weights: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    B = K_mm + jitter I + 2 K_mn W K_nm and its lower Cholesky factor.
    """
    aux_b = blocks.k_mm_jittered + 2.0 * (
        blocks.k_mn @ (weights[:, None] * blocks.k_nm)
    )
    aux_b = 0.5 * (aux_b + aux_b.T)

    try:
        chol_b = cholesky(aux_b, lower=True, check_finite=True)
    except (LinAlgError, ValueError):
        utils.log_and_raise_error(
            "Cholesky factorization of the bound matrix "
            "B = K_mm + 2 K_mn W K_nm failed.",
            SingularMatrixError,
            close_logs=False,
        )
    return aux_b, chol_b


def optimal_state_quadratic(
    blocks: CovBlocks, weights: np.ndarray, target: np.ndarray
) -> VariationalState:
    """
    Maximizer of sum_i [r_i f_i - w_i f_i^2] - KL over q(u):

        Sigma = A B^-1 A,  mu = A B^-1 K_mn r,  A = K_mm + jitter I
    """
    a_mat = blocks.k_mm_jittered
    _, chol_b = bound_matrix(blocks, weights)

    b_inv_a = cho_solve((chol_b, True), a_mat)
    sigma = a_mat @ b_inv_a
    sigma = 0.5 * (sigma + sigma.T)

    mu = a_mat @ cho_solve((chol_b, True), blocks.k_mn @ target)

    return VariationalState(mu, sigma)


def collapsed_quadratic_bound(
    blocks: CovBlocks,
    weights: np.ndarray,
    target: np.ndarray,
    want_grads: bool,
) -> QuadraticBoundCore:
    """
    value = 1/2 c^T B^-1 c + 1/2 log|A| - 1/2 log|B| - sum_i w_i Ktilde_ii
    with c = K_mn r.

    The theta gradient is assembled from the adjoints of A, K_nm and
    diag(K_nn), then contracted with the kernel derivatives.
    """
    aux_b, chol_b = bound_matrix(blocks, weights)

    c_vec = blocks.k_mn @ target
    a_vec = cho_solve((chol_b, True), c_vec)

    logdet_b = 2.0 * float(np.sum(np.log(np.diag(chol_b))))

    value = (
        0.5 * float(c_vec @ a_vec)
        + 0.5 * blocks.logdet_k_mm()
        - 0.5 * logdet_b
        - float(weights @ blocks.ktilde_diag)
    )

    grad_theta = None
    if want_grads:
        num_inducing = blocks.num_inducing
        eye = np.eye(num_inducing)
        a_inv = blocks.solve_k_mm(eye)
        b_inv = cho_solve((chol_b, True), eye)

        proj = blocks.solve_k_mm(blocks.k_mn).T  # K_nm A^-1
        weighted_proj = weights[:, None] * proj

        adj_k_mm = (
            -0.5 * np.outer(a_vec, a_vec)
            + 0.5 * a_inv
            - 0.5 * b_inv
            - proj.T @ weighted_proj
        )
        adj_k_nm = (
            np.outer(target, a_vec)
            - 2.0 * np.outer(weights * (blocks.k_nm @ a_vec), a_vec)
            - 2.0 * (weights[:, None] * blocks.k_nm) @ b_inv
            + 2.0 * weighted_proj
        )
        adj_k_nn_diag = -weights

        grad_theta = blocks.contract_grads(adj_k_mm, adj_k_nm, adj_k_nn_diag)

    return QuadraticBoundCore(
        value=value,
        grad_theta=grad_theta,
        aux_b=aux_b,
        chol_b=chol_b,
        adjoint_solve=a_vec,
    )


def _rowwise_quad(k_nm: np.ndarray, chol_b: np.ndarray) -> np.ndarray:
    """
    k_i^T B^-1 k_i for every row of k_nm.
    """
    return np.sum(k_nm * cho_solve((chol_b, True), k_nm.T).T, axis=1)


def _check_data(blocks: CovBlocks, y: np.ndarray, num_params: int):
    y = np.asarray(y, dtype=float).ravel()
    if y.size:
        y = validation.check_labels(y)
    validation.check_length(y, blocks.num_data, "y")
    validation.check_length(np.empty(num_params), blocks.num_data, "xi")
    return y
