"""
Covariance functions, covariance matrices and their derivatives with
respect to the log-space kernel hyperparameters.

Two families are supported:

squared_exponential
    k(x, x') = variance * exp(-|x - x'|^2 / length_scale^2)

matern
    k(x, x') = variance * 2^(1 - nu) / Gamma(nu) * z^nu * K_nu(z),
    z = sqrt(2 nu) |x - x'| / length_scale

The noise variance is never part of k(x, x'); it is only added to
the diagonal of the training covariance (see kernel_diag and
kernel_matrix(add_noise_diag=True)).
"""

from __future__ import annotations

import dataclasses
from typing import Dict, Literal, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.special import gamma, kv

from vigpc.utils import utils, validation

KernelFamily = Literal["squared_exponential", "matern"]

KERNEL_FAMILIES: Tuple[str, ...] = ("squared_exponential", "matern")

# Step (in log-smoothness) for the central difference used for the
# Matern derivative with respect to nu.
MATERN_SMOOTHNESS_FD_STEP = 1e-5

DEFAULT_RELATIVE_JITTER = 1e-6
MEDIAN_HEURISTIC_MAX_POINTS = 1000


@dataclasses.dataclass(frozen=True, eq=False)
class KernelHyperparams:
    """
    Kernel hyperparameters, stored in log-space.

    Parameters
    ----------

    family : "squared_exponential" or "matern"

    log_variance, log_length_scale, log_smoothness :
        log of the signal variance, length-scale and Matern
        smoothness nu (ignored by the squared exponential).

    log_noise_variance :
        log of the noise variance added to diag(K_nn). -inf
        encodes zero noise.

    log_jitter :
        log of the diagonal stabiliser added to K_mm, relative to
        the variance. The absolute jitter follows the current
        variance; the relative value is never optimized.

    trainable :
        names of the hyperparameters exposed to the optimizers, in
        the order used by to_vector() / with_vector().
    """

    family: str
    log_variance: float
    log_length_scale: float
    log_smoothness: float
    log_noise_variance: float
    log_jitter: float
    trainable: Tuple[str, ...]

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            utils.log_and_raise_error(
                f"Kernel family '{self.family}' not in {KERNEL_FAMILIES}.",
                ValueError,
            )

        for name in ("log_variance", "log_length_scale", "log_smoothness"):
            if not np.isfinite(getattr(self, name)):
                utils.log_and_raise_error(
                    f"'{name}' must be finite, got {getattr(self, name)}.",
                    ValueError,
                )

        if not np.isfinite(self.log_jitter):
            utils.log_and_raise_error("'jitter' must be > 0.", ValueError)

        if np.isnan(self.log_noise_variance) or self.log_noise_variance > 700:
            utils.log_and_raise_error(
                "'noise_variance' must be a finite value >= 0.", ValueError
            )

        for name in self.trainable:
            if name not in get_hyperparameter_names():
                utils.log_and_raise_error(
                    f"Unknown trainable hyperparameter '{name}'.", ValueError
                )

    @classmethod
    def from_values(
        cls,
        family: str = "squared_exponential",
        variance: float = 1.0,
        length_scale: float = 1.0,
        smoothness: float = 1.5,
        noise_variance: float = 0.0,
        jitter: Optional[float] = None,
        optimize_smoothness: bool = False,
    ) -> KernelHyperparams:
        """
        Build from positive values. jitter is relative to the
        variance and defaults to 1e-6. noise_variance is trainable only when it
        starts positive; smoothness only for Matern when requested.
        """
        for name, value in (
            ("variance", variance),
            ("length_scale", length_scale),
            ("smoothness", smoothness),
        ):
            if not value > 0:
                utils.log_and_raise_error(
                    f"'{name}' must be > 0, got {value}.", ValueError
                )

        if not noise_variance >= 0:
            utils.log_and_raise_error(
                f"'noise_variance' must be >= 0, got {noise_variance}.",
                ValueError,
            )

        if jitter is None:
            jitter = DEFAULT_RELATIVE_JITTER

        if not jitter > 0:
            utils.log_and_raise_error(
                f"'jitter' must be > 0, got {jitter}.", ValueError
            )

        trainable = ["variance", "length_scale"]
        if noise_variance > 0:
            trainable.append("noise_variance")
        if family == "matern" and optimize_smoothness:
            trainable.append("smoothness")

        with np.errstate(divide="ignore"):
            log_noise_variance = float(np.log(noise_variance))

        return cls(
            family=family,
            log_variance=float(np.log(variance)),
            log_length_scale=float(np.log(length_scale)),
            log_smoothness=float(np.log(smoothness)),
            log_noise_variance=log_noise_variance,
            log_jitter=float(np.log(jitter)),
            trainable=tuple(trainable),
        )

    @property
    def variance(self) -> float:
        return float(np.exp(self.log_variance))

    @property
    def length_scale(self) -> float:
        return float(np.exp(self.log_length_scale))

    @property
    def smoothness(self) -> float:
        return float(np.exp(self.log_smoothness))

    @property
    def noise_variance(self) -> float:
        return float(np.exp(self.log_noise_variance))

    @property
    def relative_jitter(self) -> float:
        return float(np.exp(self.log_jitter))

    @property
    def jitter(self) -> float:
        """
        Absolute jitter added to K_mm, relative_jitter * variance.
        """
        return float(np.exp(self.log_jitter + self.log_variance))

    def to_vector(self) -> np.ndarray:
        """
        Log-values of the trainable hyperparameters.
        """
        return np.array(
            [getattr(self, f"log_{name}") for name in self.trainable]
        )

    def with_vector(self, vector: np.ndarray) -> KernelHyperparams:
        """
        Return a copy with the trainable log-values replaced.
        """
        vector = np.asarray(vector, dtype=float)
        validation.check_length(vector, len(self.trainable), "theta")

        changes = {
            f"log_{name}": float(value)
            for name, value in zip(self.trainable, vector)
        }
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> Dict[str, float]:
        return {
            "variance": self.variance,
            "length_scale": self.length_scale,
            "smoothness": self.smoothness,
            "noise_variance": self.noise_variance,
        }


def get_hyperparameter_names() -> Tuple[str, ...]:
    return ("variance", "length_scale", "smoothness", "noise_variance")


# -----------------------------------------------------------------------------
# Evaluation
# -----------------------------------------------------------------------------


def kernel_eval(
    x1: np.ndarray, x2: np.ndarray, theta: KernelHyperparams
) -> float:
    """
    Covariance between two points. The noise variance is not added.
    """
    x1 = np.asarray(x1, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()

    if x1.shape != x2.shape:
        utils.log_and_raise_error(
            f"Dimension mismatch: points have {x1.size} and {x2.size} "
            f"coordinates.",
            ValueError,
        )
    validation.check_finite(x1, "x1")
    validation.check_finite(x2, "x2")

    return float(kernel_matrix(x1[None, :], x2[None, :], theta)[0, 0])


def kernel_matrix(
    x1: np.ndarray,
    x2: np.ndarray,
    theta: KernelHyperparams,
    add_noise_diag: bool = False,
) -> np.ndarray:
    """
    Covariance matrix between the rows of x1 and x2.

    Parameters
    ----------

    x1, x2 : (n1, d) and (n2, d) input matrices.

    theta : kernel hyperparameters.

    add_noise_diag : add the noise variance to the diagonal. Only
        permitted when x1 and x2 are the same point set.
    """
    x1, x2 = _check_inputs(x1, x2)

    if add_noise_diag and not _same_point_set(x1, x2):
        utils.log_and_raise_error(
            "'add_noise_diag' is only permitted when both inputs are "
            "the same point set.",
            ValueError,
        )

    if theta.family == "squared_exponential":
        sq_dist = cdist(x1, x2, "sqeuclidean")
        cov = theta.variance * np.exp(-sq_dist / theta.length_scale**2)
    else:
        dist = cdist(x1, x2, "euclidean")
        cov = _matern(
            dist, theta.variance, theta.length_scale, theta.smoothness
        )

    if add_noise_diag:
        cov[np.diag_indices_from(cov)] += theta.noise_variance

    return cov


def kernel_diag(
    x: np.ndarray, theta: KernelHyperparams, add_noise: bool = True
) -> np.ndarray:
    """
    diag(K(x, x)) without forming the full matrix. Both families are
    stationary so every entry is the signal variance.
    """
    x = validation.check_matrix(x, "x")

    diag = np.full(x.shape[0], theta.variance)
    if add_noise:
        diag += theta.noise_variance
    return diag


def median_length_scale(
    x: np.ndarray, max_points: int = MEDIAN_HEURISTIC_MAX_POINTS
) -> float:
    """
    Median pairwise distance between rows of x, used as the initial
    length-scale. At most max_points evenly spaced rows are used.
    Returns 1.0 when there are fewer than two distinct rows.
    """
    x = validation.check_matrix(x, "x")

    if x.shape[0] > max_points:
        rows = np.linspace(0, x.shape[0] - 1, max_points).astype(int)
        x = x[rows]

    distances = pdist(x)
    distances = distances[distances > 0]
    if distances.size == 0:
        return 1.0
    return float(np.median(distances))


# -----------------------------------------------------------------------------
# Derivatives
# -----------------------------------------------------------------------------


def kernel_matrix_param_grads(
    x1: np.ndarray, x2: np.ndarray, theta: KernelHyperparams
) -> Dict[str, np.ndarray]:
    """
    dK / d(log parameter) for every trainable hyperparameter of theta.

    The squared exponential derivatives are analytic. For Matern the
    variance and length-scale derivatives are analytic and the
    smoothness derivative uses a central difference in log(nu) with
    step MATERN_SMOOTHNESS_FD_STEP. The noise variance does not enter
    K(x1, x2), so its derivative is a zero matrix here (see
    kernel_diag_param_grads).
    """
    x1, x2 = _check_inputs(x1, x2)

    cov = kernel_matrix(x1, x2, theta)
    grads = {}

    for name in theta.trainable:
        if name == "variance":
            grads[name] = cov.copy()

        elif name == "length_scale":
            if theta.family == "squared_exponential":
                sq_dist = cdist(x1, x2, "sqeuclidean")
                grads[name] = cov * 2.0 * sq_dist / theta.length_scale**2
            else:
                grads[name] = _matern_log_length_scale_grad(
                    cdist(x1, x2, "euclidean"), theta
                )

        elif name == "smoothness":
            step = MATERN_SMOOTHNESS_FD_STEP
            vec = theta.to_vector()
            idx = theta.trainable.index("smoothness")
            plus, minus = vec.copy(), vec.copy()
            plus[idx] += step
            minus[idx] -= step
            grads[name] = (
                kernel_matrix(x1, x2, theta.with_vector(plus))
                - kernel_matrix(x1, x2, theta.with_vector(minus))
            ) / (2 * step)

        elif name == "noise_variance":
            grads[name] = np.zeros_like(cov)

    return grads


def kernel_diag_param_grads(
    x: np.ndarray, theta: KernelHyperparams, add_noise: bool = True
) -> Dict[str, np.ndarray]:
    """
    d diag(K(x, x)) / d(log parameter) for every trainable
    hyperparameter.
    """
    num_points = validation.check_matrix(x, "x").shape[0]

    grads = {}
    for name in theta.trainable:
        if name == "variance":
            grads[name] = np.full(num_points, theta.variance)
        elif name == "noise_variance" and add_noise:
            grads[name] = np.full(num_points, theta.noise_variance)
        else:
            grads[name] = np.zeros(num_points)
    return grads


# -----------------------------------------------------------------------------
# Matern helpers
# -----------------------------------------------------------------------------


def _matern(
    dist: np.ndarray, variance: float, length_scale: float, nu: float
) -> np.ndarray:
    """
    Matern covariance of a distance matrix. The removable singularity
    at zero distance is set to the variance explicitly.
    """
    z = np.sqrt(2 * nu) * dist / length_scale
    coef = 2 ** (1 - nu) / gamma(nu)

    cov = np.full(dist.shape, variance)
    nonzero = z > 0
    z_nz = z[nonzero]
    cov[nonzero] = variance * coef * z_nz**nu * kv(nu, z_nz)

    return cov


def _matern_log_length_scale_grad(
    dist: np.ndarray, theta: KernelHyperparams
) -> np.ndarray:
    """
    Uses dK/dz = -variance * c * z^nu * K_{nu-1}(z) and
    dz/d(log l) = -z, zero at zero distance.
    """
    nu = theta.smoothness
    z = np.sqrt(2 * nu) * dist / theta.length_scale
    coef = 2 ** (1 - nu) / gamma(nu)

    grad = np.zeros(dist.shape)
    nonzero = z > 0
    z_nz = z[nonzero]
    grad[nonzero] = theta.variance * coef * z_nz ** (nu + 1) * kv(nu - 1, z_nz)

    return grad


def _check_inputs(
    x1: np.ndarray, x2: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    x1 = validation.check_matrix(x1, "x1")
    x2 = validation.check_matrix(x2, "x2")
    validation.check_same_num_cols(x1, x2)
    return x1, x2


def _same_point_set(x1: np.ndarray, x2: np.ndarray) -> bool:
    return x1 is x2 or (x1.shape == x2.shape and np.array_equal(x1, x2))
