from __future__ import annotations

import copy
from contextlib import contextmanager
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import simplejson

from vigpc.configs import load_configs
from vigpc.configs.config_class import Configs
from vigpc.gp import trainers
from vigpc.gp.inducing import InducingSet, kmeans_inducing
from vigpc.gp.trainers import FittedModel, TrainConfig
from vigpc.utils import data_io, gp_logger, model_io, traces, utils
from vigpc.utils.custom_exceptions import BenchmarkError, ConfigError
from vigpc.utils.data_io import Dataset
from vigpc.utils.decorators import check_configs_set
from vigpc.utils.traces import TrainingTrace


@contextmanager
def _close_logs_on_error():
    """
    Close the log file handlers if the wrapped block raises.
    """
    try:
        yield
    except Exception:
        gp_logger.close_log_filehandler()
        raise


# -----------------------------------------------------------------------------
# Experiment Class
# -----------------------------------------------------------------------------


class Experiment:
    """
    Experiment trains and evaluates sparse GP classifiers and
    runs the accuracy-against-time benchmark over the training
    strategies.

    All outputs of an experiment (the config file, fitted models,
    training traces and logs) are written to a single output folder.
    On first use of a new output folder, a warning prompts to set
    configurations with make_config_file().

    Logs are stored in the 'logs' folder of the output path, one
    log per call to train(), evaluate() or benchmark().

    Parameters
    ----------

    output_path : folder where the config file, models, traces
        and logs are written. It is created if it does not exist.
    """

    def __init__(self, output_path: Union[str, Path]):
        self.output_path = Path(output_path)
        self._config_path = self.output_path / "config.yaml"
        self._logging_path = self.output_path / "logs"

        utils.make_folders(self._logging_path)

        self.cfg: Any = None

        self.cfg = load_configs.make_config_file_attempt_load(
            self._config_path
        )

        if self.cfg:
            self.cfg.setup_after_load()

    # -------------------------------------------------------------------------
    # Public Training
    # -------------------------------------------------------------------------

    @check_configs_set
    def train(
        self, strategy: Optional[str] = None
    ) -> Tuple[FittedModel, TrainingTrace]:
        """
        Fit one strategy and write the model and its training trace
        to the output path as <dataset>_<strategy>.model and
        <dataset>_<strategy>.<trace_format>.

        The data are loaded from 'data_path'. If 'test_data_path'
        is set it is used as the test set, otherwise a seeded
        split with 'test_fraction' is drawn. Features are
        normalized with training statistics and the inducing
        inputs are placed by k-means on the training inputs.

        If training fails, the partial trace is written before
        the error is raised.

        Parameters
        ----------

        strategy : one of "svi_adadelta", "vi_jj", "vi_taylor",
            "vi_jj_full", "vi_jj_hybrid". Defaults to the
            'strategy' config.
        """
        self._start_log("train", local_vars=locals())

        with _close_logs_on_error():
            strategy = strategy or self.cfg["strategy"]
            train, test = self._load_train_and_test()
            inducing = self._select_inducing(train)

            run_name = f"{train.name}_{strategy}"
            train_config = self.cfg.make_train_config(train.num_data, strategy)

            model, trace = self._fit_and_write_trace(
                run_name, train, test, inducing, train_config
            )

            model_io.save_model(
                self.output_path / f"{run_name}.model",
                model,
                (train.feature_means, train.feature_stds),
            )

            accuracy = trainers.evaluate_accuracy(
                model, test, self.cfg["predict_quad_order"]
            )
            utils.log_and_message(
                f"Finished {strategy} on {train.name}: test accuracy "
                f"{accuracy:.4f}."
            )

        gp_logger.close_log_filehandler()

        return model, trace

    @check_configs_set
    def evaluate(
        self,
        model_path: Union[str, Path],
        test_data_path: Optional[Union[str, Path]] = None,
    ) -> float:
        """
        Load a model saved by train() and return its accuracy on
        a dataset. The dataset is normalized with the feature
        statistics stored with the model.

        Parameters
        ----------

        model_path : path to a .model file.

        test_data_path : dataset in the configured 'data_format'.
            Defaults to the 'test_data_path' config.
        """
        self._start_log("evaluate", local_vars=locals())

        if test_data_path is None:
            test_data_path = self.cfg["test_data_path"]

        if test_data_path is None:
            utils.log_and_raise_error(
                "A test dataset is required. Pass 'test_data_path' or "
                "set it in the configs.",
                ConfigError,
            )

        with _close_logs_on_error():
            model, (means, stds) = model_io.load_model(model_path)

            dataset = self._load_dataset(
                test_data_path, num_features=means.size
            )
            dataset = data_io.apply_normalization(dataset, means, stds)

            accuracy = trainers.evaluate_accuracy(
                model, dataset, self.cfg["predict_quad_order"]
            )
        utils.log_and_message(
            f"Accuracy of {Path(model_path).name} on {dataset.name}: "
            f"{accuracy:.4f}"
        )

        gp_logger.close_log_filehandler()

        return accuracy

    @check_configs_set
    def benchmark(self) -> Dict[str, TrainingTrace]:
        """
        Run every strategy in 'strategies' on the same split and
        the same inducing inputs, with svi_adadelta run once per
        entry of 'step_rates'. One trace file is written per run,
        named <dataset>_<strategy>[_lr<rate>].<trace_format>.

        Runs are sequential unless 'parallel' is set, in which case
        they run in a thread pool on disjoint state.

        Every run is attempted. If any fail, their partial traces
        are written and a BenchmarkError, chained from the first
        failure, is raised once all runs have finished.

        Returns
        -------

        The trace of each run, keyed by run name.
        """
        self._start_log("benchmark", local_vars=locals())

        with _close_logs_on_error():
            train, test = self._load_train_and_test()
            inducing = self._select_inducing(train)

            runs = self._get_benchmark_runs(train)

        def run_one(run: Tuple[str, TrainConfig]):
            run_name, train_config = run
            try:
                _, trace = self._fit_and_write_trace(
                    run_name, train, test, inducing, train_config
                )
                return trace, None
            except Exception as e:
                return None, e

        if self.cfg["parallel"]:
            with ThreadPoolExecutor(max_workers=len(runs)) as executor:
                outcomes = list(executor.map(run_one, runs))
        else:
            outcomes = [run_one(run) for run in runs]

        results: Dict[str, TrainingTrace] = {}
        errors: List[Tuple[str, Exception]] = []
        for (run_name, _), (trace, error) in zip(runs, outcomes):
            if error is None:
                results[run_name] = trace
            else:
                errors.append((run_name, error))

        if results:
            gp_logger.print_results_table(results)
            gp_logger.log_results_table(results)

        if errors:
            failed = ", ".join(name for name, _ in errors)
            first_name, first_error = errors[0]
            utils.log_and_raise_error(
                f"Benchmark runs failed: {failed}. First failure "
                f"({first_name}): {first_error}",
                BenchmarkError,
                cause=first_error,
            )

        gp_logger.close_log_filehandler()

        return results

    # -------------------------------------------------------------------------
    # Configs
    # -------------------------------------------------------------------------

    def make_config_file(self, **kwargs) -> None:
        """
        Initialise the run configs and save them to config.yaml
        in the output path. Any canonical config key may be passed,
        keys not passed take their default value (see
        canonical_configs.get_default_configs()). This method
        will completely overwrite existing configs.

        Use update_config_file() to selectively update settings, and
        supply_config_file() to use an existing config file.

        Parameters
        ----------

        kwargs : canonical config keys and values, e.g.
            data_path="german.libsvm", num_inducing=50,
            strategy="vi_jj".
        """
        self._start_log("make-config-file", local_vars=locals())

        if self._config_path.is_file():
            utils.warn(
                "A config file already exists. This function will completely "
                "overwrite the existing config file, and any arguments not "
                "passed to `make_config_file` will be set to the defaults. "
                "Use `update_config_file` to selectively update settings.",
                log=True,
            )

        self.cfg = Configs(
            self._config_path, load_configs.fill_defaults(kwargs)
        )

        self.cfg.setup_after_load()  # will raise error if fails

        self.cfg.dump_to_file()

        utils.log("Configuration file has been saved and options loaded.")
        self._log_successful_config_change()

        gp_logger.close_log_filehandler()

    def update_config_file(self, **kwargs) -> None:
        """
        Update the passed config keys, leaving the rest unchanged.
        If the new configs are invalid, nothing is changed and
        ConfigError is raised.
        """
        if not self.cfg:
            utils.log_and_raise_error(
                "Must have a config loaded before updating configs.",
                ConfigError,
            )

        self._start_log("update-config-file", local_vars=locals())

        for option, value in kwargs.items():
            if option in self.cfg.keys_str_on_file_but_path_in_class:
                kwargs[option] = None if value is None else Path(value)

        new_cfg = copy.deepcopy(self.cfg)
        new_cfg.update(**kwargs)

        check_change = new_cfg.safe_check_current_dict_is_valid()

        if check_change["passed"]:
            self.cfg = new_cfg
            self.cfg.dump_to_file()
            self._log_successful_config_change()
            gp_logger.close_log_filehandler()
        else:
            utils.log_and_raise_error(
                f"{check_change['error']}\nConfigs were not updated.",
                ConfigError,
            )

    def supply_config_file(self, input_path_to_config: Union[str, Path]):
        """
        Supply an existing config by passing the path the config
        file (.yaml). Keys missing from the file take their default
        value; unknown keys or values of the wrong type result
        in an error.

        If successful, the config will be loaded and a copy saved
        to config.yaml in the output path.

        Parameters
        ----------

        input_path_to_config :
            Path to the config to use as the experiment config.
        """
        self._start_log("supply-config-file", local_vars=locals())

        new_cfg = load_configs.load_supplied_configs(
            Path(input_path_to_config)
        )

        self.cfg = new_cfg
        self.cfg.file_path = self._config_path
        self.cfg.dump_to_file()

        self._log_successful_config_change()
        gp_logger.close_log_filehandler()

    # -------------------------------------------------------------------------
    # Getters
    # -------------------------------------------------------------------------

    def get_config_path(self) -> Path:
        """
        Get the full path to the experiment config file.
        """
        return self._config_path

    @check_configs_set
    def get_configs(self) -> Configs:
        return self.cfg

    def get_logging_path(self) -> Path:
        """
        Get the path where vigpc logs are written.
        """
        return self._logging_path

    # -------------------------------------------------------------------------
    # Showers
    # -------------------------------------------------------------------------

    @check_configs_set
    def show_configs(self) -> None:
        """
        Print the current configs to the terminal.
        """
        utils.print_message_to_user(self._get_json_dumps_config())

    # -------------------------------------------------------------------------
    # Private Functions
    # -------------------------------------------------------------------------

    def _load_dataset(
        self,
        path: Union[str, Path],
        num_features: Optional[int] = None,
    ) -> Dataset:
        return data_io.load_dataset(
            path,
            data_format=self.cfg["data_format"],
            delimiter=self.cfg["csv_delimiter"],
            num_features=num_features,
        )

    def _load_train_and_test(self) -> Tuple[Dataset, Dataset]:
        """
        Load the training data and either the predefined test set
        or a seeded split, normalized with training statistics.
        """
        if self.cfg["data_path"] is None:
            utils.log_and_raise_error(
                "'data_path' must be set before training.", ConfigError
            )

        data = self._load_dataset(self.cfg["data_path"])

        if self.cfg["test_data_path"] is not None:
            train = data
            test = self._load_dataset(
                self.cfg["test_data_path"],
                num_features=(
                    train.num_features
                    if self.cfg["data_format"] == "libsvm"
                    else None
                ),
            )
            if test.num_features != train.num_features:
                utils.log_and_raise_error(
                    f"Dimension mismatch: the training data have "
                    f"{train.num_features} features but the test data "
                    f"have {test.num_features}.",
                    ValueError,
                )
            utils.log("Using the predefined test set.")
        else:
            train, test = data_io.train_test_split(
                data, self.cfg.make_split_spec()
            )
            utils.log(
                f"Split {data.num_data} points into {train.num_data} "
                f"training and {test.num_data} test points."
            )

        train, (test,) = data_io.normalize_features(train, [test])

        return train, test

    def _select_inducing(self, train: Dataset) -> InducingSet:
        return kmeans_inducing(
            train.x,
            self.cfg["num_inducing"],
            seed=self.cfg["seed"],
            max_iter=self.cfg["kmeans_max_iter"],
        )

    def _get_benchmark_runs(
        self, train: Dataset
    ) -> List[Tuple[str, TrainConfig]]:
        runs = []
        for strategy in self.cfg["strategies"]:
            if strategy == "svi_adadelta":
                for step_rate in self.cfg["step_rates"]:
                    runs.append(
                        (
                            f"{train.name}_{strategy}_lr"
                            f"{utils.format_float(step_rate)}",
                            self.cfg.make_train_config(
                                train.num_data, strategy, step_rate
                            ),
                        )
                    )
            else:
                runs.append(
                    (
                        f"{train.name}_{strategy}",
                        self.cfg.make_train_config(train.num_data, strategy),
                    )
                )
        return runs

    def _fit_and_write_trace(
        self,
        run_name: str,
        train: Dataset,
        test: Dataset,
        inducing: InducingSet,
        train_config: TrainConfig,
    ) -> Tuple[FittedModel, TrainingTrace]:
        """
        Fit and write the trace of one run. The trace is filled
        as training proceeds, so it is written even if
        training fails.
        """
        trace = TrainingTrace()
        try:
            model, trace = trainers.fit(
                train,
                inducing,
                train_config,
                test=test,
                theta0=self.cfg.make_kernel_hyperparams(train.x),
                trace=trace,
            )
        finally:
            self._write_trace(trace, run_name)

        return model, trace

    def _write_trace(self, trace: TrainingTrace, run_name: str) -> Path:
        fmt = self.cfg["trace_format"]
        return traces.write_trace(
            trace,
            self.output_path / f"{run_name}.{traces.get_trace_extension(fmt)}",
            fmt,
        )

    def _start_log(
        self,
        command_name: str,
        local_vars: Optional[dict] = None,
        verbose: bool = True,
    ) -> None:
        """
        Initialize the logger. This is typically called at
        the start of public methods to initialize logging
        for a specific function call.

        Parameters
        ----------

        command_name : name of the command, for the log output files.

        local_vars : local_vars are passed to fancylog variables argument.
                 see gp_logger.wrap_variables_for_fancylog for more info
        """
        if local_vars is None:
            variables = None
        else:
            variables = gp_logger.wrap_variables_for_fancylog(
                local_vars, self.cfg
            )

        gp_logger.start(self._logging_path, command_name, variables, verbose)

    def _log_successful_config_change(self) -> None:
        """
        Log the entire config at the time of config change.
        """
        utils.print_message_to_user("Update successful.")
        utils.log(
            f"Update successful. New config file: "
            f"\n {self._get_json_dumps_config()}"
        )

    def _get_json_dumps_config(self) -> str:
        """
        Get the config dictionary formatted as json
        which allows well formatted printing.
        """
        copy_dict = copy.deepcopy(self.cfg.data)
        self.cfg.convert_str_and_pathlib_paths(copy_dict, "path_to_str")
        return simplejson.dumps(copy_dict, indent=4)
