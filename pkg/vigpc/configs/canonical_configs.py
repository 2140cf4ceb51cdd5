"""
This module contains all information for the required
format of the run configs. Configs can be provided from
file, the command line, environment variables or
dynamically, so careful checks must be done.

If adding a new config, add the key and type to
get_canonical_configs() and its default to
get_default_configs(). The order of keys matters.
"""

from __future__ import annotations

from typing import (
    TYPE_CHECKING,
    Dict,
    List,
    Literal,
    Optional,
    Union,
    get_args,
    get_origin,
)

if TYPE_CHECKING:
    from vigpc.configs.config_class import Configs

from pathlib import Path

from vigpc.utils import utils
from vigpc.utils.custom_exceptions import ConfigError

STRATEGY_NAMES = (
    "svi_adadelta",
    "vi_jj",
    "vi_taylor",
    "vi_jj_full",
    "vi_jj_hybrid",
)


def get_canonical_configs() -> dict:
    """
    The only permitted types for vigpc config values.
    """
    canonical_configs = {
        "data_path": Optional[Union[str, Path]],
        "data_format": Literal["libsvm", "csv"],
        "test_data_path": Optional[Union[str, Path]],
        "test_fraction": float,
        "csv_delimiter": str,
        "num_inducing": int,
        "strategy": Literal[
            "svi_adadelta",
            "vi_jj",
            "vi_taylor",
            "vi_jj_full",
            "vi_jj_hybrid",
        ],
        "strategies": list,
        "seed": int,
        "n_upd": int,
        "n_fun": int,
        "max_epochs": int,
        "max_seconds": Optional[float],
        "batch_size": Optional[int],
        "step_rates": list,
        "adadelta_decay": float,
        "adadelta_offset": float,
        "quad_order": int,
        "predict_quad_order": int,
        "eval_every": int,
        "convergence_tol": float,
        "patience": int,
        "kernel_family": Literal["squared_exponential", "matern"],
        "variance": float,
        "length_scale": Optional[float],
        "smoothness": float,
        "optimize_smoothness": bool,
        "noise_variance": float,
        "jitter": Optional[float],
        "kmeans_max_iter": int,
        "trace_format": Literal["csv", "json"],
        "parallel": bool,
    }

    return canonical_configs


def get_default_configs() -> Dict:
    defaults = {
        "data_path": None,
        "data_format": "libsvm",
        "test_data_path": None,
        "test_fraction": 0.2,
        "csv_delimiter": ",",
        "num_inducing": 50,
        "strategy": "vi_jj",
        "strategies": list(STRATEGY_NAMES),
        "seed": 0,
        "n_upd": 3,
        "n_fun": 5,
        "max_epochs": 100,
        "max_seconds": None,
        "batch_size": None,
        "step_rates": [0.1],
        "adadelta_decay": 0.9,
        "adadelta_offset": 1e-6,
        "quad_order": 20,
        "predict_quad_order": 32,
        "eval_every": 1,
        "convergence_tol": 1e-6,
        "patience": 20,
        "kernel_family": "squared_exponential",
        "variance": 1.0,
        "length_scale": None,
        "smoothness": 1.5,
        "optimize_smoothness": False,
        "noise_variance": 0.01,
        "jitter": None,
        "kmeans_max_iter": 100,
        "trace_format": "csv",
        "parallel": False,
    }
    assert list(defaults.keys()) == list(get_canonical_configs().keys())

    return defaults


def get_flags() -> List[str]:
    """
    Return all configs that are bool flags. This is used in
    testing and type checking config inputs.
    """
    return ["optimize_smoothness", "parallel"]


def get_list_configs() -> Dict[str, type]:
    """
    Configs holding lists, with the type of their elements.
    """
    return {"strategies": str, "step_rates": float}


def get_number_type(key: str) -> Optional[type]:
    """
    int or float for numeric configs, otherwise None.
    """
    expected_type = get_canonical_configs()[key]
    for number_type in (int, float):
        if expected_type is number_type or number_type in get_args(
            expected_type
        ):
            return number_type
    return None


# -----------------------------------------------------------------------------
# Check Configs
# -----------------------------------------------------------------------------


def check_dict_values_raise_on_fail(config_dict: Configs) -> None:
    """
    Central function for performing checks on a vigpc
    Configs UserDict class. This should be run after any
    change to the configs (e.g. make_config_file,
    update_config_file, supply_config_file).

    Parameters
    ----------

    config_dict : vigpc config UserDict
    """
    canonical_dict = get_canonical_configs()

    for key in canonical_dict.keys():
        if key not in config_dict.keys():
            utils.log_and_raise_error(
                f"Loading Failed. The key '{key}' was not "
                f"found in the config. "
                f"Config file was not updated.",
                ConfigError,
            )

    for key in config_dict.keys():
        if key not in canonical_dict.keys():
            utils.log_and_raise_error(
                f"The config contains an invalid key: {key}. "
                f"Config file was not updated.",
                ConfigError,
            )

    check_config_types(config_dict)

    if list(config_dict.keys()) != list(canonical_dict.keys()):
        utils.log_and_raise_error(
            f"New config keys are in the wrong order. The"
            f" order should be: {canonical_dict.keys()}.",
            ConfigError,
        )

    check_config_ranges(config_dict)


def check_config_ranges(config_dict: Configs) -> None:
    """
    Check values lie in their permitted ranges.
    """
    for key in [
        "num_inducing",
        "n_upd",
        "n_fun",
        "quad_order",
        "predict_quad_order",
        "eval_every",
        "patience",
        "kmeans_max_iter",
    ]:
        if config_dict[key] < 1:
            _raise_range_error(key, config_dict[key], ">= 1")

    for key in ["variance", "smoothness", "adadelta_offset"]:
        if not config_dict[key] > 0:
            _raise_range_error(key, config_dict[key], "> 0")

    for key in ["max_epochs", "seed", "convergence_tol", "noise_variance"]:
        if config_dict[key] < 0:
            _raise_range_error(key, config_dict[key], ">= 0")

    for key in ["test_fraction", "adadelta_decay"]:
        if not 0 < config_dict[key] < 1:
            _raise_range_error(key, config_dict[key], "in (0, 1)")

    for key in ["max_seconds", "length_scale", "jitter"]:
        if config_dict[key] is not None and not config_dict[key] > 0:
            _raise_range_error(key, config_dict[key], "> 0 or None")

    if config_dict["batch_size"] is not None and config_dict["batch_size"] < 1:
        _raise_range_error("batch_size", config_dict["batch_size"], ">= 1")

    if len(config_dict["csv_delimiter"]) != 1:
        _raise_range_error(
            "csv_delimiter", config_dict["csv_delimiter"], "one character"
        )

    strategies = config_dict["strategies"]
    if not strategies or not utils.all_unique(strategies):
        utils.log_and_raise_error(
            "'strategies' must be a non-empty list without repeats.",
            ConfigError,
        )
    for name in strategies:
        if name not in STRATEGY_NAMES:
            utils.log_and_raise_error(
                f"'{name}' in 'strategies' is not one of {STRATEGY_NAMES}.",
                ConfigError,
            )

    step_rates = config_dict["step_rates"]
    if not step_rates or any(
        not isinstance(rate, (int, float))
        or isinstance(rate, bool)
        or not rate > 0
        for rate in step_rates
    ):
        utils.log_and_raise_error(
            "'step_rates' must be a non-empty list of numbers > 0.",
            ConfigError,
        )


def _raise_range_error(key: str, value, requirement: str) -> None:
    utils.log_and_raise_error(
        f"'{key}' must be {requirement}, got {value}. "
        f"Config file was not updated.",
        ConfigError,
    )


def check_config_types(config_dict: Configs) -> None:
    """
    Check the type of passed configs matched canonical types.
    This is a sub-function of check_dict_values_raise_on_fail()

    Notes
    ------

    Testing types against Union is not neat. To do this you can use
    isinstance(type, get_args(Union[types])). But get_args() will be
    empty if there is only one type in union, so the two cases are
    tested explicitly. bool is rejected where a number is expected
    as it is a subclass of int.
    """
    required_types = get_canonical_configs()

    for key in config_dict.keys():
        expected_type = required_types[key]
        value = config_dict[key]
        fail = False

        if get_origin(expected_type) is Literal:
            if value not in get_args(expected_type):
                utils.log_and_raise_error(
                    f"'{value}' not in {get_args(expected_type)}",
                    ConfigError,
                )

        elif len(get_args(expected_type)) == 0:
            if not isinstance(value, expected_type):
                fail = True
        else:
            if not isinstance(value, get_args(expected_type)):
                fail = True

        if isinstance(value, bool) and expected_type is not bool:
            fail = True

        if fail:
            utils.log_and_raise_error(
                f"The type of the value at '{key}' is incorrect, "
                f"it must be {expected_type}. "
                f"Config file was not updated.",
                ConfigError,
            )
