from __future__ import annotations

from typing import TYPE_CHECKING, Any, Dict, List, Optional

if TYPE_CHECKING:
    from vigpc.configs.config_class import Configs
    from vigpc.utils.traces import TrainingTrace

import copy
import logging
from datetime import datetime
from pathlib import Path

from fancylog import fancylog
from rich import print as rich_print
from rich.console import Console
from rich.table import Table

import vigpc as package_to_log


def start(
    path_to_log: Path,
    command_name: str,
    variables: Optional[List[Any]],
    verbose: bool = True,
) -> None:
    """
    Call fancylog to initialise logging.
    """
    filename = get_logging_filename(command_name)

    fancylog.start_logging(
        path_to_log,
        package_to_log,
        filename=filename,
        variables=variables,
        verbose=verbose,
        timestamp=False,
        file_log_level="DEBUG",
        write_git=True,
        log_to_console=False,
    )
    logging.info(f"Starting logging for command {command_name}")


def get_logging_filename(command_name: str) -> str:
    """
    Get the filename to which the log will be saved. This
    starts with ISO8601-formatted datetime, so logs are stored
    in datetime order.
    """
    filename = datetime.now().strftime(f"%Y%m%dT%H%M%S_{command_name}")
    return filename


def wrap_variables_for_fancylog(local_vars: dict, cfg: Configs) -> List:
    """
    Wrap the locals from the original function call to log
    and the run configs in a wrapper class with __dict__
    attribute for fancylog writing.

    Delete the self attribute (which is the Experiment class)
    to keep the logs neat, as it adds no information.
    """

    class VariablesState:
        def __init__(self, local_vars_, cfg_):
            local_vars_ = copy.deepcopy(local_vars_)
            local_vars_.pop("self", None)
            self.locals = local_vars_
            self.cfg = copy.deepcopy(cfg_)

    variables = [VariablesState(local_vars, cfg)]

    return variables


# -----------------------------------------------------------------------------
# Result tables
# -----------------------------------------------------------------------------


def make_results_table(results: Dict[str, TrainingTrace]) -> Table:
    """
    Build a rich table with one row per run, showing the final
    bound value, test accuracy and elapsed time of each trace.
    """
    table = Table(title="Benchmark results")
    table.add_column("run")
    table.add_column("outer iterations", justify="right")
    table.add_column("final elbo", justify="right")
    table.add_column("final accuracy", justify="right")
    table.add_column("seconds", justify="right")

    for run_name, trace in results.items():
        if len(trace) == 0:
            table.add_row(run_name, "0", "-", "-", "-")
            continue

        last = trace.records[-1]
        table.add_row(
            run_name,
            str(last.outer_iter),
            f"{last.elbo:.4f}",
            "-" if last.accuracy is None else f"{last.accuracy:.4f}",
            f"{last.wall_seconds:.2f}",
        )
    return table


def print_results_table(results: Dict[str, TrainingTrace]) -> None:
    rich_print(make_results_table(results))


def log_results_table(results: Dict[str, TrainingTrace]) -> None:
    """
    Log the benchmark results table as plain text.
    """
    table = make_results_table(results)

    console = Console()

    with console.capture() as capture:
        console.print(table, markup=True)
    logging.getLogger("vigpc").debug(
        capture.get()
    )  # https://github.com/Textualize/rich/issues/2688


def close_log_filehandler() -> None:
    """
    Remove handlers from all loggers.
    """
    logger = logging.getLogger()
    handlers = logger.handlers[:]
    for handler in handlers:
        logger.removeHandler(handler)
        handler.close()
