"""
Second-order Taylor approximation of log sigmoid(y f) around a
per-point expansion point xi:

    log sigmoid(y f) ~ log sigmoid(y xi) + phi (f - xi) - psi (f - xi)^2

with psi = sigmoid(y xi) sigmoid(-y xi) / 2 and phi = y sigmoid(-y xi).
This is not a global lower bound. Collecting terms gives
sum_i [v_i f_i - psi_i f_i^2] + const with v = phi + 2 psi xi, so the
collapsed algebra of the JJ bound applies with w = psi, r = v.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.special import expit, log_expit

from vigpc.gp.bound_jj import (
    BoundEval,
    collapsed_quadratic_bound,
    optimal_state_quadratic,
)
from vigpc.gp.gp_moments import (
    CovBlocks,
    VariationalState,
    kl_normal_vs_prior,
    marginal_moments,
)
from vigpc.utils import validation


@dataclasses.dataclass(frozen=True, eq=False)
class TaylorWeights:
    """
    psi_diag : curvature weights, in (0, 1/8].
    phi : slopes, |phi| < 1.
    v : linear coefficients phi + 2 psi xi.
    """

    psi_diag: np.ndarray
    phi: np.ndarray
    v: np.ndarray


def taylor_scalar_terms(xi: np.ndarray, y: np.ndarray) -> TaylorWeights:
    """
    Expansion weights at the signed points xi. The logistic is
    evaluated through expit so |xi| up to several hundred is safe.
    """
    xi, y = _check_xi_and_labels(xi, y)

    margin = y * xi
    pos = expit(margin)
    neg = expit(-margin)

    psi_diag = 0.5 * y**2 * pos * neg
    phi = y * neg
    v = phi + 2.0 * psi_diag * xi

    return TaylorWeights(psi_diag=psi_diag, phi=phi, v=v)


def optimal_variational_taylor(
    blocks: CovBlocks, w: TaylorWeights
) -> VariationalState:
    """
    Sigma = K_mm B^-1 K_mm and mu = K_mm B^-1 K_mn v with
    B = K_mm + 2 K_mn Psi K_nm.
    """
    validation.check_length(w.psi_diag, blocks.num_data, "psi_diag")
    return optimal_state_quadratic(blocks, w.psi_diag, w.v)


def xi_update_taylor(
    blocks: CovBlocks, state: VariationalState
) -> np.ndarray:
    """
    Expand around the marginal means, xi_i = m_i.
    """
    return marginal_moments(blocks, state).mean


def compact_bound_taylor(
    blocks: CovBlocks,
    xi: np.ndarray,
    y: np.ndarray,
    want_grads: bool = False,
) -> BoundEval:
    """
    Collapsed approximate bound

        1/2 v^T K_nm B^-1 K_mn v + 1/2 log|K_mm| - 1/2 log|B|
        - sum_i psi_i Ktilde_ii

    The terms depending on xi only are left out, see omitted_terms.
    grad_xi is always None.
    """
    weights = taylor_scalar_terms(xi, y)
    validation.check_length(weights.v, blocks.num_data, "xi")

    core = collapsed_quadratic_bound(
        blocks, weights.psi_diag, weights.v, want_grads
    )

    return BoundEval(
        value=core.value,
        grad_theta=core.grad_theta,
        grad_xi=None,
        aux_b=core.aux_b,
        chol_b=core.chol_b,
    )


def omitted_terms(xi: np.ndarray, y: np.ndarray) -> float:
    """
    sum_i log sigmoid(y_i xi_i) - psi_i xi_i^2 - phi_i xi_i, the gap
    between approx_bound_taylor at its optimal q(u) and
    compact_bound_taylor.
    """
    weights = taylor_scalar_terms(xi, y)
    xi = np.asarray(xi, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()

    return float(
        np.sum(
            log_expit(y * xi)
            - weights.psi_diag * xi**2
            - weights.phi * xi
        )
    )


def approx_bound_taylor(
    blocks: CovBlocks,
    state: VariationalState,
    xi: np.ndarray,
    y: np.ndarray,
) -> float:
    """
    The uncollapsed approximate bound: the expectation of the Taylor
    expansion under q(f_i), minus KL(q(u) || p(u)).
    """
    weights = taylor_scalar_terms(xi, y)
    xi = np.asarray(xi, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    validation.check_length(xi, blocks.num_data, "xi")

    kl = kl_normal_vs_prior(state, blocks)
    if xi.size == 0:
        return -kl

    moments = marginal_moments(blocks, state)
    offset = moments.mean - xi

    expected = np.sum(
        log_expit(y * xi)
        + weights.phi * offset
        - weights.psi_diag * (moments.var + offset**2)
    )
    return float(expected) - kl


def _check_xi_and_labels(xi, y):
    xi = np.asarray(xi, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()

    validation.check_finite(xi, "xi")
    if y.size:
        y = validation.check_labels(y)
    validation.check_length(xi, y.size, "xi")

    return xi, y
