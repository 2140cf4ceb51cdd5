"""
Versioned little-endian binary format for fitted models.

Header (uint32 after the magic):
    b"VGPC", version, kernel family code, m, d, number of
    log-hyperparameters

Payload (float64, row-major):
    log variance, log length-scale, log smoothness, log noise variance,
    log relative jitter, Z (m x d), mu (m), lower Cholesky factor of Sigma
    (m x m), feature means (d), feature stds (d)
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from vigpc.gp.gp_moments import VariationalState
from vigpc.gp.inducing import InducingSet
from vigpc.gp.kernels import KERNEL_FAMILIES, KernelHyperparams
from vigpc.gp.trainers import FittedModel
from vigpc.utils import utils
from vigpc.utils.custom_exceptions import ModelFormatError

MAGIC = b"VGPC"
FORMAT_VERSION = 1
NUM_LOG_PARAMS = 5

HEADER_DTYPE = np.dtype("<u4")
PAYLOAD_DTYPE = np.dtype("<f8")
HEADER_SIZE = len(MAGIC) + 5 * HEADER_DTYPE.itemsize

Normalization = Tuple[np.ndarray, np.ndarray]


def save_model(
    path: Union[str, Path],
    model: FittedModel,
    normalization: Optional[Normalization] = None,
) -> Path:
    """
    Write model and the feature statistics its inputs are normalized
    with (identity statistics when None).
    """
    path = Path(path)
    theta = model.theta
    z = model.inducing.z
    num_inducing, num_features = z.shape

    if normalization is None:
        normalization = (np.zeros(num_features), np.ones(num_features))
    means, stds = (np.asarray(v, dtype=float).ravel() for v in normalization)

    if means.size != num_features or stds.size != num_features:
        utils.log_and_raise_error(
            f"Normalization statistics have {means.size} / {stds.size} "
            f"entries but the model has {num_features} features.",
            ValueError,
        )

    header = np.array(
        [
            FORMAT_VERSION,
            KERNEL_FAMILIES.index(theta.family),
            num_inducing,
            num_features,
            NUM_LOG_PARAMS,
        ],
        dtype=HEADER_DTYPE,
    )
    payload = np.concatenate(
        [
            [
                theta.log_variance,
                theta.log_length_scale,
                theta.log_smoothness,
                theta.log_noise_variance,
                theta.log_jitter,
            ],
            z.ravel(),
            model.state.mu,
            model.state.chol_sigma.ravel(),
            means,
            stds,
        ]
    ).astype(PAYLOAD_DTYPE)

    with open(path, "wb") as file:
        file.write(MAGIC)
        file.write(header.tobytes())
        file.write(payload.tobytes())

    utils.log(f"Saved model to {path}.")
    return path


def load_model(path: Union[str, Path]) -> Tuple[FittedModel, Normalization]:
    """
    Read a model written by save_model, returning the model and its
    (feature means, feature stds).
    """
    path = Path(path)
    if not path.is_file():
        utils.log_and_raise_error(
            f"Model file {path} does not exist.", FileNotFoundError
        )

    raw = path.read_bytes()

    if raw[: len(MAGIC)] != MAGIC:
        utils.log_and_raise_error(
            f"{path} is not a model file (bad magic bytes).",
            ModelFormatError,
        )
    if len(raw) < HEADER_SIZE:
        utils.log_and_raise_error(
            f"{path} has a truncated header.", ModelFormatError
        )

    version, family_code, num_inducing, num_features, num_log_params = (
        int(v)
        for v in np.frombuffer(
            raw[len(MAGIC) : HEADER_SIZE], dtype=HEADER_DTYPE
        )
    )

    if version != FORMAT_VERSION:
        utils.log_and_raise_error(
            f"Unsupported model format version {version}, expected "
            f"{FORMAT_VERSION}.",
            ModelFormatError,
        )
    if family_code >= len(KERNEL_FAMILIES) or num_log_params != (
        NUM_LOG_PARAMS
    ):
        utils.log_and_raise_error(
            f"Corrupt model header in {path}.", ModelFormatError
        )

    expected = (
        num_log_params
        + num_inducing * num_features
        + num_inducing
        + num_inducing**2
        + 2 * num_features
    )
    if len(raw) - HEADER_SIZE != expected * PAYLOAD_DTYPE.itemsize:
        utils.log_and_raise_error(
            f"Model payload in {path} has {len(raw) - HEADER_SIZE} bytes, "
            f"expected {expected * PAYLOAD_DTYPE.itemsize}.",
            ModelFormatError,
        )

    payload = np.frombuffer(raw[HEADER_SIZE:], dtype=PAYLOAD_DTYPE)
    sections = np.split(
        payload.astype(float),
        np.cumsum(
            [
                num_log_params,
                num_inducing * num_features,
                num_inducing,
                num_inducing**2,
                num_features,
            ]
        ),
    )
    log_params, z, mu, chol, means, stds = sections

    log_variance, log_length_scale, log_smoothness, log_noise, log_jitter = (
        float(v) for v in log_params
    )
    family = KERNEL_FAMILIES[family_code]

    trainable = ["variance", "length_scale"]
    if np.isfinite(log_noise):
        trainable.append("noise_variance")

    theta = KernelHyperparams(
        family=family,
        log_variance=log_variance,
        log_length_scale=log_length_scale,
        log_smoothness=log_smoothness,
        log_noise_variance=log_noise,
        log_jitter=log_jitter,
        trainable=tuple(trainable),
    )

    model = FittedModel(
        theta=theta,
        inducing=InducingSet(z.reshape(num_inducing, num_features)),
        state=VariationalState.from_cholesky(
            mu, chol.reshape(num_inducing, num_inducing)
        ),
    )

    utils.log(f"Loaded model from {path}.")
    return model, (means, stds)
