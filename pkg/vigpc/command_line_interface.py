import argparse
import os
import sys
import warnings
from pathlib import Path
from typing import Dict, List, Mapping, Optional

from vigpc import Experiment
from vigpc.configs import canonical_configs, load_configs

DEFAULT_OUTPUT_PATH = "vigpc_output"

# Command-line flag (without dashes) -> canonical config key.
FLAG_TO_KEY = {
    "data": "data_path",
    "format": "data_format",
    "test-data": "test_data_path",
    "test-fraction": "test_fraction",
    "csv-delimiter": "csv_delimiter",
    "m": "num_inducing",
    "strategy": "strategy",
    "strategies": "strategies",
    "seed": "seed",
    "n-upd": "n_upd",
    "n-fun": "n_fun",
    "max-epochs": "max_epochs",
    "max-seconds": "max_seconds",
    "batch-size": "batch_size",
    "step-rates": "step_rates",
    "adadelta-decay": "adadelta_decay",
    "adadelta-offset": "adadelta_offset",
    "quad-order": "quad_order",
    "predict-quad-order": "predict_quad_order",
    "eval-every": "eval_every",
    "convergence-tol": "convergence_tol",
    "patience": "patience",
    "kernel": "kernel_family",
    "variance": "variance",
    "length-scale": "length_scale",
    "smoothness": "smoothness",
    "optimize-smoothness": "optimize_smoothness",
    "noise-variance": "noise_variance",
    "jitter": "jitter",
    "kmeans-max-iter": "kmeans_max_iter",
    "trace-format": "trace_format",
    "parallel": "parallel",
}

# -----------------------------------------------------------------------------
# Utils
# -----------------------------------------------------------------------------


def process_docstring(message: str) -> str:
    """
    Keep the summary of an API docstring for the command help.
    """
    message = message.replace("-", "")
    message = message.split("Parameters")[0]
    message = message.split("Returns")[0]
    return message


def get_dest(flag: str) -> str:
    return flag.replace("-", "_")


def resolve_configs(
    args: argparse.Namespace, environ: Optional[Mapping[str, str]] = None
) -> Dict:
    """
    Collect the run configs with the precedence
    command-line flag > environment variable > --config file
    > default. Values from the command line and environment
    are strings and are cast here.
    """
    environ = os.environ if environ is None else environ

    config_path = args.config or environ.get(
        load_configs.get_env_name("config")
    )
    if config_path:
        resolved = dict(
            load_configs.load_supplied_configs(Path(config_path)).data
        )
    else:
        resolved = canonical_configs.get_default_configs()

    resolved.update(load_configs.get_env_overrides(FLAG_TO_KEY, environ))

    for flag, key in FLAG_TO_KEY.items():
        value = getattr(args, get_dest(flag), None)
        if value is not None:
            resolved[key] = value

    return load_configs.handle_cli_or_supplied_config_bools(resolved)


def resolve_output_path(
    args: argparse.Namespace, environ: Optional[Mapping[str, str]] = None
) -> Path:
    environ = os.environ if environ is None else environ
    return Path(
        args.out
        or environ.get(load_configs.get_env_name("out"))
        or DEFAULT_OUTPUT_PATH
    )


def make_experiment(args: argparse.Namespace) -> Experiment:
    """
    Create the experiment in the output path and set its configs
    from the resolved command-line options. Suppress the warning
    that a config file must be made, as it is made here.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        experiment = Experiment(resolve_output_path(args))
        experiment.make_config_file(**resolve_configs(args))
    return experiment


# -----------------------------------------------------------------------------
# Entry Point to the CLI
# -----------------------------------------------------------------------------

description = (
    "-----------------------------------------------------------------------\n"
    "vigpc command line interface. "
    "\n\n"
    "vigpc [COMMAND] [OPTIONS]"
    "\n\n"
    "To get detailed help for commands and their optional arguments, "
    "\ntype vigpc [COMMAND] --help'"
    "\n\n"
    "Every option can also be set with an environment variable "
    "\nVIGPC_<OPTION> (e.g. VIGPC_N_UPD=3) or in a YAML file "
    "\npassed with --config. Command-line options take precedence "
    "\nover environment variables, which take precedence over "
    "\nthe config file."
    "\n\n"
    "-------------------------------------------------------------------------"
)

# -----------------------------------------------------------------------------
# Commands
# -----------------------------------------------------------------------------


def train(args: argparse.Namespace) -> None:
    experiment = make_experiment(args)
    experiment.train()


def evaluate(args: argparse.Namespace) -> None:
    experiment = make_experiment(args)
    experiment.evaluate(args.model)


def benchmark(args: argparse.Namespace) -> None:
    experiment = make_experiment(args)
    experiment.benchmark()


def show_configs(args: argparse.Namespace) -> None:
    experiment = make_experiment(args)
    experiment.show_configs()


# -----------------------------------------------------------------------------
# Parser
# -----------------------------------------------------------------------------


def add_shared_arguments(parser: argparse.ArgumentParser) -> None:
    """
    Options shared by all commands. All are read as strings
    (None when not passed) and cast in resolve_configs().
    """
    parser.add_argument(
        "--out",
        type=str,
        default=None,
        help=f"Optional: output folder (default '{DEFAULT_OUTPUT_PATH}')",
    )
    parser.add_argument(
        "--config",
        type=str,
        default=None,
        help="Optional: YAML file with run configs",
    )

    for flag, key in FLAG_TO_KEY.items():
        if key in canonical_configs.get_flags():
            parser.add_argument(
                f"--{flag}",
                dest=get_dest(flag),
                action="store_const",
                const="True",
                default=None,
                help="Optional: flag (default False)",
            )
        else:
            parser.add_argument(
                f"--{flag}",
                dest=get_dest(flag),
                type=str,
                default=None,
                help=get_help(key),
            )


def get_help(key: str) -> str:
    """
    Help string showing the config key and its default.
    """
    default = canonical_configs.get_default_configs()[key]
    if key in canonical_configs.get_list_configs():
        return f"Optional: comma-separated '{key}' (default {default})"
    return f"Optional: '{key}' (default {default})"


def construct_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vigpc",
        description=description,
        formatter_class=argparse.RawTextHelpFormatter,
    )
    subparsers = parser.add_subparsers(metavar="<command>")

    # Train
    # -------------------------------------------------------------------------

    train_parser = subparsers.add_parser(
        "train",
        description=process_docstring(Experiment.train.__doc__),
        formatter_class=argparse.RawTextHelpFormatter,
        help="",
    )
    train_parser.set_defaults(func=train)
    add_shared_arguments(train_parser)

    # Evaluate
    # -------------------------------------------------------------------------

    evaluate_parser = subparsers.add_parser(
        "evaluate",
        description=process_docstring(Experiment.evaluate.__doc__),
        formatter_class=argparse.RawTextHelpFormatter,
        help="",
    )
    evaluate_parser.set_defaults(func=evaluate)
    evaluate_parser.add_argument(
        "--model",
        type=str,
        required=True,
        help="Required: (str) path to a .model file",
    )
    add_shared_arguments(evaluate_parser)

    # Benchmark
    # -------------------------------------------------------------------------

    benchmark_parser = subparsers.add_parser(
        "benchmark",
        description=process_docstring(Experiment.benchmark.__doc__),
        formatter_class=argparse.RawTextHelpFormatter,
        help="",
    )
    benchmark_parser.set_defaults(func=benchmark)
    add_shared_arguments(benchmark_parser)

    # Show Configs
    # -------------------------------------------------------------------------

    show_configs_parser = subparsers.add_parser(
        "show-configs",
        aliases=["show_configs"],
        description=process_docstring(Experiment.show_configs.__doc__),
        formatter_class=argparse.RawTextHelpFormatter,
        help="",
    )
    show_configs_parser.set_defaults(func=show_configs)
    add_shared_arguments(show_configs_parser)

    return parser


parser = construct_parser()

# -----------------------------------------------------------------------------
# Run
# -----------------------------------------------------------------------------


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse the arguments and call the function associated with
    the command, set up above with set_defaults(func=...).

    Any error raised by the command is printed to standard error
    and turned into a non-zero exit status. Traces of failed runs
    are written by the Experiment before the error propagates.
    """
    args = parser.parse_args(argv)

    if "func" not in args:
        parser.print_help()
        return 0

    try:
        args.func(args)
    except Exception as e:
        print(f"vigpc: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1

    return 0


if __name__ == "__main__":
    sys.exit(main())
