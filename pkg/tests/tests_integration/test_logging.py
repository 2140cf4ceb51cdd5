import re
import warnings

import pytest
import test_utils

from vigpc import Experiment
from vigpc.utils import gp_logger
from vigpc.utils.custom_exceptions import ConfigError, DatasetError


class TestLogging:
    @pytest.fixture(scope="function")
    def experiment(self, tmp_path):
        """
        Setup an experiment with fast configs. This fixture is
        distinct from the base.py fixture as it requires additional
        logging setup / teardown.

        Switch on vigpc logging as required for these tests, then
        turn back off during tear-down.
        """
        test_utils.set_vigpc_loggers(disable=False)

        warnings.filterwarnings("ignore")
        experiment = Experiment(tmp_path / "logged experiment")
        warnings.filterwarnings("default")

        experiment.make_config_file(**test_utils.get_fast_config_arguments())
        test_utils.delete_log_files(experiment.get_logging_path())

        yield experiment

        gp_logger.close_log_filehandler()
        test_utils.set_vigpc_loggers(disable=True)

    # -------------------------------------------------------------------------
    # Test Public API Logging
    # -------------------------------------------------------------------------

    def test_log_filename(self, experiment):
        """
        Check the log filename is formatted correctly, for
        `update_config_file`, an arbitrary command.
        """
        experiment.update_config_file(n_upd=2)

        log_search = list(experiment.get_logging_path().glob("*.log"))
        assert (
            len(log_search) == 1
        ), "should only be 1 log in this test environment."

        regex = re.compile(r"\d{8}T\d{6}_update-config-file.log")
        assert re.search(regex, log_search[0].name) is not None

    def test_logs_make_config_file(self, experiment):
        experiment.make_config_file(data_path=test_utils.TWO_BLOBS_LIBSVM)

        log = test_utils.read_log_file(
            experiment.get_logging_path(), "make-config-file"
        )

        assert "Starting logging for command make-config-file" in log
        assert "\nVariablesState:\nlocals: {'kwargs':" in log
        assert "A config file already exists." in log
        assert "Configuration file has been saved and options loaded." in log
        assert "Update successful. New config file:" in log

    def test_logs_train(self, experiment):
        experiment.train()

        log = test_utils.read_log_file(experiment.get_logging_path(), "train")

        assert "Starting logging for command train" in log
        assert "\nVariablesState:\nlocals: {'strategy': None}" in log
        assert "Loaded 120 rows with 2 features" in log
        assert "Split 120 points into 96 training and 24 test points." in log
        assert "vi_jj iteration 0: bound" in log
        assert "Stage 2 used" in log
        assert "Saved model to" in log
        assert "Finished vi_jj on two_blobs: test accuracy" in log

    def test_logs_evaluate(self, experiment):
        experiment.train()
        model_path = experiment.output_path / "two_blobs_vi_jj.model"

        experiment.evaluate(model_path, test_utils.TWO_BLOBS_LIBSVM)

        log = test_utils.read_log_file(
            experiment.get_logging_path(), "evaluate"
        )
        assert "Loaded model from" in log
        assert "Accuracy of two_blobs_vi_jj.model on two_blobs:" in log

    def test_logs_benchmark(self, experiment):
        experiment.update_config_file(strategies=["vi_jj", "svi_adadelta"])
        experiment.benchmark()

        log = test_utils.read_log_file(
            experiment.get_logging_path(), "benchmark"
        )

        assert "Starting logging for command benchmark" in log
        assert "svi_adadelta iteration 0: bound" in log
        assert "Benchmark results" in log
        assert "two_blobs_svi_adadelta_lr1.0.csv" in log

    # -------------------------------------------------------------------------
    # Errors are logged
    # -------------------------------------------------------------------------

    def test_logs_bad_update(self, experiment):
        with pytest.raises(ConfigError):
            experiment.update_config_file(strategy="newton")

        log = test_utils.read_log_file(
            experiment.get_logging_path(), "update-config-file"
        )
        assert "'newton' not in" in log
        assert "Configs were not updated." in log

    def test_logs_dataset_error(self, experiment):
        experiment.update_config_file(
            test_data_path=test_utils.THREE_FEATURES_LIBSVM
        )
        test_utils.delete_log_files(experiment.get_logging_path())

        with pytest.raises(DatasetError):
            experiment.train()

        log = test_utils.read_log_file(experiment.get_logging_path(), "train")
        assert "Found feature index 3 but num_features is 2." in log
