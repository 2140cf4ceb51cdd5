import warnings

import pytest
import test_utils

from vigpc import Experiment
from vigpc.utils import gp_logger

TEST_OUTPUT_NAME = "test experiment"


class BaseTest:
    @pytest.fixture(scope="function")
    def no_cfg_experiment(self, tmp_path):
        """
        Fixture that creates an experiment without configs. Ignore
        the warning that no configs are setup yet.
        """
        warnings.filterwarnings("ignore")
        no_cfg_experiment = Experiment(tmp_path / TEST_OUTPUT_NAME)
        warnings.filterwarnings("default")

        yield no_cfg_experiment
        gp_logger.close_log_filehandler()

    @pytest.fixture(scope="function")
    def experiment(self, no_cfg_experiment):
        """
        Setup an experiment with configs for quick runs on the
        bundled two-blob sample. The output path contains a space.
        """
        no_cfg_experiment.make_config_file(
            **test_utils.get_fast_config_arguments()
        )
        yield no_cfg_experiment
