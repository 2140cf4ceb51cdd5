"""
Covariance blocks of the inducing-point model, marginals of the
variational posterior, KL(q(u) || p(u)) and predictions.

Only diag(K_nn) is ever formed, so every operation here costs
O(n m^2 + m^3).
"""

from __future__ import annotations

import dataclasses
from functools import lru_cache
from typing import Dict, Optional, Tuple

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.special import expit

from vigpc.gp.kernels import (
    KernelHyperparams,
    kernel_diag,
    kernel_diag_param_grads,
    kernel_matrix,
    kernel_matrix_param_grads,
)
from vigpc.utils import utils, validation
from vigpc.utils.custom_exceptions import (
    InvalidStateError,
    SingularMatrixError,
)

DEFAULT_PREDICT_QUAD_ORDER = 32

# -----------------------------------------------------------------------------
# Types
# -----------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True, eq=False)
class CovBlockGrads:
    """
    Derivatives of the covariance blocks with respect to each
    trainable log-hyperparameter, keyed by name. d_k_mm is the
    derivative of K_mm + jitter * I; the jitter scales with the
    variance.
    """

    names: Tuple[str, ...]
    d_k_mm: Dict[str, np.ndarray]
    d_k_nm: Dict[str, np.ndarray]
    d_k_nn_diag: Dict[str, np.ndarray]


@dataclasses.dataclass(frozen=True, eq=False)
class CovBlocks:
    """
    Covariance blocks for one hyperparameter setting and inducing set.

    k_mm : (m, m) K(Z, Z), without jitter.
    k_nm : (n, m) K(X, Z).
    k_nn_diag : (n,) diag(K(X, X)), including the noise variance
        when requested.
    ktilde_diag : (n,) diag(K_nn - K_nm K_mm^-1 K_mn).
    chol_k_mm : (m, m) lower Cholesky factor of K_mm + jitter * I.
    jitter : the jitter used for chol_k_mm.
    """

    k_mm: np.ndarray
    k_nm: np.ndarray
    k_nn_diag: np.ndarray
    ktilde_diag: np.ndarray
    chol_k_mm: np.ndarray
    jitter: float
    grads: Optional[CovBlockGrads] = None

    @property
    def k_mn(self) -> np.ndarray:
        return self.k_nm.T

    @property
    def k_mm_jittered(self) -> np.ndarray:
        """
        The inducing covariance every formula uses, K_mm + jitter * I.
        """
        return self.k_mm + self.jitter * np.eye(self.num_inducing)

    @property
    def num_data(self) -> int:
        return self.k_nm.shape[0]

    @property
    def num_inducing(self) -> int:
        return self.k_mm.shape[0]

    def solve_k_mm(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve((self.chol_k_mm, True), rhs)

    def logdet_k_mm(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol_k_mm))))

    def subset(self, idx: np.ndarray) -> CovBlocks:
        """
        Blocks restricted to the data rows in idx.
        """
        grads = None
        if self.grads is not None:
            grads = dataclasses.replace(
                self.grads,
                d_k_nm={k: v[idx] for k, v in self.grads.d_k_nm.items()},
                d_k_nn_diag={
                    k: v[idx] for k, v in self.grads.d_k_nn_diag.items()
                },
            )

        return dataclasses.replace(
            self,
            k_nm=self.k_nm[idx],
            k_nn_diag=self.k_nn_diag[idx],
            ktilde_diag=self.ktilde_diag[idx],
            grads=grads,
        )

    def contract_grads(
        self,
        adj_k_mm: np.ndarray,
        adj_k_nm: np.ndarray,
        adj_k_nn_diag: np.ndarray,
    ) -> np.ndarray:
        """
        Chain rule through the covariance blocks. Given the adjoints
        (derivatives of a scalar with respect to K_mm, K_nm and
        diag(K_nn)), return its gradient over the log-hyperparameters
        in theta.trainable order.
        """
        if self.grads is None:
            utils.log_and_raise_error(
                "Covariance blocks were computed without derivatives, "
                "use compute_cov_blocks(..., with_grads=True).",
                ValueError,
            )

        return np.array(
            [
                np.sum(adj_k_mm * self.grads.d_k_mm[name])
                + np.sum(adj_k_nm * self.grads.d_k_nm[name])
                + adj_k_nn_diag @ self.grads.d_k_nn_diag[name]
                for name in self.grads.names
            ]
        )


@dataclasses.dataclass(frozen=True, eq=False)
class VariationalState:
    """
    Mean and covariance of q(u) = N(mu, sigma). sigma is checked
    to be symmetric positive definite on construction.
    """

    mu: np.ndarray
    sigma: np.ndarray
    chol_sigma: np.ndarray = dataclasses.field(
        init=False, repr=False, compare=False
    )

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).ravel()
        sigma = np.asarray(self.sigma, dtype=float)

        if sigma.shape != (mu.size, mu.size):
            utils.log_and_raise_error(
                f"Dimension mismatch: mu has length {mu.size} but sigma "
                f"has shape {sigma.shape}.",
                ValueError,
            )

        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "chol_sigma", cholesky_sigma(sigma))

    @classmethod
    def from_cholesky(
        cls, mu: np.ndarray, chol: np.ndarray
    ) -> VariationalState:
        chol = np.tril(chol)
        return cls(mu, chol @ chol.T)

    @classmethod
    def initial(cls, num_inducing: int) -> VariationalState:
        return cls(np.zeros(num_inducing), np.eye(num_inducing))

    @property
    def num_inducing(self) -> int:
        return self.mu.size


@dataclasses.dataclass(frozen=True, eq=False)
class MarginalMoments:
    mean: np.ndarray
    var: np.ndarray


@dataclasses.dataclass(frozen=True, eq=False)
class PredictiveMoments:
    mean: np.ndarray
    var: np.ndarray


@dataclasses.dataclass(frozen=True, eq=False)
class GaussHermiteRule:
    """
    Gauss-Hermite rule for the weight exp(-x^2). The raw weights
    sum to sqrt(pi); normalized_weights sum to one.
    """

    order: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def normalized_weights(self) -> np.ndarray:
        return self.weights / np.sqrt(np.pi)


@lru_cache(maxsize=None)
def gauss_hermite_rule(order: int) -> GaussHermiteRule:
    if order < 1:
        utils.log_and_raise_error(
            f"Quadrature order must be >= 1, got {order}.", ValueError
        )
    nodes, weights = hermgauss(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return GaussHermiteRule(order, nodes, weights)


# -----------------------------------------------------------------------------
# Covariance blocks
# -----------------------------------------------------------------------------


def compute_cov_blocks(
    x: np.ndarray,
    z: np.ndarray,
    theta: KernelHyperparams,
    include_noise: bool = True,
    with_grads: bool = False,
) -> CovBlocks:
    """
    Build the covariance blocks for data x and inducing inputs z.

    Parameters
    ----------

    x : (n, d) data inputs.

    z : (m, d) inducing inputs, m >= 1.

    theta : kernel hyperparameters.

    include_noise : add the noise variance to diag(K_nn). True for
        training data, False for latent-space prediction.

    with_grads : also compute the derivatives of every block with
        respect to the trainable log-hyperparameters of theta.
    """
    z = validation.check_matrix(z, "z")
    x = validation.check_matrix(x, "x", num_cols=z.shape[1])

    if z.shape[0] < 1:
        utils.log_and_raise_error(
            "At least one inducing point is required.", ValueError
        )

    k_mm = kernel_matrix(z, z, theta)
    chol_k_mm = cholesky_k_mm(k_mm, theta.jitter)

    k_nm = kernel_matrix(x, z, theta)
    k_nn_diag = kernel_diag(x, theta, add_noise=include_noise)

    half_solve = solve_triangular(chol_k_mm, k_nm.T, lower=True)
    ktilde_diag = k_nn_diag - np.sum(half_solve**2, axis=0)
    ktilde_diag = validation.clamp_variances(
        ktilde_diag, _max_or_zero(k_nn_diag), "ktilde_diag"
    )

    grads = None
    if with_grads:
        grads = CovBlockGrads(
            names=theta.trainable,
            d_k_mm=_jittered_k_mm_grads(z, theta),
            d_k_nm=kernel_matrix_param_grads(x, z, theta),
            d_k_nn_diag=kernel_diag_param_grads(
                x, theta, add_noise=include_noise
            ),
        )

    return CovBlocks(
        k_mm=k_mm,
        k_nm=k_nm,
        k_nn_diag=k_nn_diag,
        ktilde_diag=ktilde_diag,
        chol_k_mm=chol_k_mm,
        jitter=theta.jitter,
        grads=grads,
    )


def _jittered_k_mm_grads(
    z: np.ndarray, theta: KernelHyperparams
) -> Dict[str, np.ndarray]:
    d_k_mm = kernel_matrix_param_grads(z, z, theta)
    if "variance" in d_k_mm:
        d_k_mm["variance"] = d_k_mm["variance"] + theta.jitter * np.eye(
            z.shape[0]
        )
    return d_k_mm


def cholesky_k_mm(k_mm: np.ndarray, jitter: float) -> np.ndarray:
    try:
        chol = cholesky(
            k_mm + jitter * np.eye(k_mm.shape[0]),
            lower=True,
            check_finite=False,
        )
    except LinAlgError:
        utils.log_and_raise_error(
            f"Cholesky factorization of K_mm + jitter * I failed with "
            f"jitter {jitter:.3e}. The inducing covariance is singular, "
            f"try a larger jitter or fewer / more distinct inducing points.",
            SingularMatrixError,
            close_logs=False,
        )
    return chol


def cholesky_sigma(sigma: np.ndarray) -> np.ndarray:
    """
    Lower Cholesky factor of a variational covariance, raising
    InvalidStateError if it is not symmetric positive definite.
    """
    if not np.allclose(sigma, sigma.T, rtol=1e-10, atol=1e-12):
        utils.log_and_raise_error(
            "The variational covariance sigma is not symmetric.",
            InvalidStateError,
        )
    try:
        chol = cholesky(sigma, lower=True, check_finite=True)
    except (LinAlgError, ValueError):
        utils.log_and_raise_error(
            "The variational covariance sigma is not positive definite.",
            InvalidStateError,
        )
    return chol


# -----------------------------------------------------------------------------
# Moments and KL
# -----------------------------------------------------------------------------


def marginal_moments(
    blocks: CovBlocks, state: VariationalState
) -> MarginalMoments:
    """
    Marginals q(f_i) = N(m_i, S_i^2) with

        m_i = k_i^T K_mm^-1 mu
        S_i^2 = Ktilde_ii + k_i^T K_mm^-1 Sigma K_mm^-1 k_i
    """
    validation.check_length(state.mu, blocks.num_inducing, "mu")

    proj = blocks.solve_k_mm(blocks.k_mn)

    mean = proj.T @ state.mu
    var = blocks.ktilde_diag + np.sum((state.sigma @ proj) * proj, axis=0)
    var = validation.clamp_variances(
        var, _max_or_zero(blocks.k_nn_diag), "marginal variance"
    )

    return MarginalMoments(mean=mean, var=var)


def kl_normal_vs_prior(state: VariationalState, blocks: CovBlocks) -> float:
    """
    KL(N(mu, Sigma) || N(0, K_mm)).
    """
    return kl_from_cholesky(state.mu, state.chol_sigma, blocks)


def kl_from_cholesky(
    mu: np.ndarray, chol_sigma: np.ndarray, blocks: CovBlocks
) -> float:
    """
    KL(N(mu, L L^T) || N(0, K_mm)) for a lower-triangular L with
    nonzero diagonal.
    """
    num_inducing = blocks.num_inducing
    validation.check_length(mu, num_inducing, "mu")

    logdet_sigma = 2.0 * np.sum(np.log(np.abs(np.diag(chol_sigma))))

    half_solve = solve_triangular(blocks.chol_k_mm, chol_sigma, lower=True)
    trace_term = np.sum(half_solve**2)
    quad_term = mu @ blocks.solve_k_mm(mu)

    return 0.5 * float(
        blocks.logdet_k_mm()
        - logdet_sigma
        - num_inducing
        + trace_term
        + quad_term
    )


# -----------------------------------------------------------------------------
# Prediction
# -----------------------------------------------------------------------------


def predict_latent(
    blocks_star: CovBlocks, state: VariationalState
) -> PredictiveMoments:
    """
    Moments of p(f*) = int p(f* | u) q(u) du, where blocks_star holds
    the covariances between the prediction points and Z.
    """
    moments = marginal_moments(blocks_star, state)
    return PredictiveMoments(mean=moments.mean, var=moments.var)


def predict_latent_at(
    x_star: np.ndarray,
    z: np.ndarray,
    theta: KernelHyperparams,
    state: VariationalState,
    include_noise: bool = False,
) -> PredictiveMoments:
    """
    Latent-space prediction (default) or observation-space prediction
    (include_noise=True) at new points.
    """
    blocks_star = compute_cov_blocks(
        x_star, z, theta, include_noise=include_noise
    )
    return predict_latent(blocks_star, state)


def predict_class_prob(
    moments: PredictiveMoments,
    quad_order: int = DEFAULT_PREDICT_QUAD_ORDER,
) -> np.ndarray:
    """
    p(y* = +1) = int sigmoid(f) N(f | mean, var) df by Gauss-Hermite.
    Points with zero variance return sigmoid(mean). Probabilities are
    clipped to [eps, 1 - eps] so they lie strictly inside (0, 1).
    """
    rule = gauss_hermite_rule(quad_order)

    mean = np.asarray(moments.mean, dtype=float)
    var = np.asarray(moments.var, dtype=float)

    f_nodes = mean[:, None] + np.sqrt(2.0 * var)[:, None] * rule.nodes[None, :]
    probs = expit(f_nodes) @ rule.normalized_weights

    degenerate = var == 0
    probs[degenerate] = expit(mean[degenerate])

    eps = np.finfo(float).eps
    return np.clip(probs, eps, 1.0 - eps)


def predict_labels(probs: np.ndarray) -> np.ndarray:
    """
    Class labels in {-1, +1} from p(y = +1), thresholded at 0.5.
    """
    return np.where(probs > 0.5, 1.0, -1.0)


def _max_or_zero(values: np.ndarray) -> float:
    return float(np.max(values)) if values.size else 0.0
