import os
import warnings
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Union, overload

from vigpc.configs import canonical_configs
from vigpc.configs.config_class import Configs
from vigpc.utils import utils
from vigpc.utils.custom_exceptions import ConfigError

ConfigValueTypes = Union[Path, str, bool, int, float, list, None]

ENV_PREFIX = "VIGPC_"

# -----------------------------------------------------------------------------
# Load Supplied Config
# -----------------------------------------------------------------------------


def make_config_file_attempt_load(config_path: Path) -> Optional[Configs]:
    """
    Try to load an existing config file, that was previously
    saved by vigpc. This should always work, unless
    not already initialised or these have been
    changed manually.

    Parameters
    ----------

    config_path : path to vigpc config .yaml file
    """
    exists = config_path.is_file()

    if not exists:
        warnings.warn(
            "Configuration file has not been initialized. "
            "Use make_config_file() to setup before continuing."
        )
        return None

    new_cfg: Optional[Configs]

    new_cfg = Configs(config_path, None)

    try:
        new_cfg.load_from_file()

    except BaseException:
        new_cfg = None

        utils.log_and_raise_error(
            f"Config file failed to load. Check file "
            f"formatting at {config_path.as_posix()}. If "
            f"cannot load, re-initialise configs with "
            f"make_config_file()",
            ConfigError,
        )

    return new_cfg


def load_supplied_configs(path_to_config: Path) -> Configs:
    """
    Load a user-supplied config file. The file may hold any subset
    of the canonical keys; the rest are filled with defaults. Values
    are cast and checked, raising ConfigError on failure.

    Parameters
    ----------

    path_to_config : path to the vigpc config .yaml file to load
    """
    path_to_config = Path(path_to_config)
    utils.log_and_raise_error_not_exists_or_not_yaml(path_to_config)

    new_cfg = Configs(path_to_config, None)
    new_cfg.load_from_file()

    if not isinstance(new_cfg.data, dict):
        utils.log_and_raise_error(
            f"Config file {path_to_config} does not contain a mapping.",
            ConfigError,
        )

    new_cfg.data = fill_defaults(new_cfg.data)

    new_cfg = handle_cli_or_supplied_config_bools(new_cfg)
    new_cfg.check_dict_values_raise_on_fail()

    return new_cfg


def fill_defaults(partial: Mapping) -> dict:
    """
    Canonical defaults updated with the supplied keys. Unknown keys
    are kept so the checks report them.
    """
    filled = canonical_configs.get_default_configs()
    filled.update(partial)
    return filled


def get_env_overrides(
    flag_to_key: Mapping[str, str],
    environ: Optional[Mapping[str, str]] = None,
) -> Dict[str, str]:
    """
    Config values set through environment variables, as strings.

    Parameters
    ----------

    flag_to_key : command-line flag name (without dashes, e.g.
        "n-upd") to canonical config key. The variable for a flag is
        VIGPC_ followed by the upper-cased flag with dashes
        replaced by underscores (e.g. VIGPC_N_UPD).

    environ : defaults to os.environ.
    """
    environ = os.environ if environ is None else environ

    overrides = {}
    for flag, key in flag_to_key.items():
        env_name = get_env_name(flag)
        if env_name in environ:
            overrides[key] = environ[env_name]
    return overrides


def get_env_name(flag: str) -> str:
    return ENV_PREFIX + flag.upper().replace("-", "_")


# -----------------------------------------------------------------------------
# Convert keys from string inputs
# -----------------------------------------------------------------------------


@overload
def handle_cli_or_supplied_config_bools(dict_: Configs) -> Configs: ...


@overload
def handle_cli_or_supplied_config_bools(dict_: dict) -> dict: ...


def handle_cli_or_supplied_config_bools(
    dict_: Union[Configs, dict],
) -> Union[Configs, dict]:
    """
    For supplied configs, CLI input args and environment
    variables, bools, numbers, lists and None may be passed
    as string type. Handle these cases here to cast to
    the correct type.
    """
    for key in dict_.keys():
        value = handle_bool(key, dict_[key])
        if key in canonical_configs.get_canonical_configs():
            value = handle_list(key, value)
            value = handle_number(key, value)
        dict_[key] = value
    return dict_


def handle_bool(key: str, value: ConfigValueTypes) -> ConfigValueTypes:
    """
    In some instances (CLI call, supplied configs) the configs will
    be in string format rather than bool or None. Parse these
    here. This assumes bool are always passed as flags.
    """
    if key in canonical_configs.get_flags():
        if value in ["None", "none", None]:
            value = False

        if isinstance(value, str):
            if value not in ["True", "False", "true", "false"]:
                utils.raise_error(
                    f"Input value for '{key}' must be True or False",
                    ConfigError,
                )

            value = value in ["True", "true"]

    elif value in ["None", "none"]:
        value = None

    return value


def handle_number(key: str, value: ConfigValueTypes) -> ConfigValueTypes:
    """
    Cast strings to int or float for numeric configs. YAML
    writes 1.0 as 1.0 but users often write 1, so ints
    are promoted for float configs.
    """
    number_type = canonical_configs.get_number_type(key)

    if number_type is None or value is None or isinstance(value, bool):
        return value

    if isinstance(value, str):
        try:
            return number_type(value)
        except ValueError:
            utils.raise_error(
                f"Input value for '{key}' must be a number of type "
                f"{number_type.__name__}, got '{value}'.",
                ConfigError,
            )

    if number_type is float and isinstance(value, int):
        return float(value)

    return value


def handle_list(key: str, value: ConfigValueTypes) -> ConfigValueTypes:
    """
    Split comma-separated strings (e.g. "0.1,0.01") for list
    configs and cast the elements.
    """
    list_configs = canonical_configs.get_list_configs()

    if key not in list_configs or value is None:
        return value

    if isinstance(value, str):
        value = [item.strip() for item in value.split(",") if item.strip()]

    if not isinstance(value, list):
        return value

    if list_configs[key] is not float:
        return value

    cast: List = []
    for item in value:
        if isinstance(item, str):
            try:
                item = float(item)
            except ValueError:
                utils.raise_error(
                    f"Entries of '{key}' must be numbers, got '{item}'.",
                    ConfigError,
                )
        elif isinstance(item, int) and not isinstance(item, bool):
            item = float(item)
        cast.append(item)
    return cast
