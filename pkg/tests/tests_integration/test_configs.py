from pathlib import Path

import pytest
import test_utils
from base import BaseTest

from vigpc import Experiment
from vigpc.configs.canonical_configs import (
    get_canonical_configs,
    get_default_configs,
)
from vigpc.configs.config_class import Configs
from vigpc.utils.custom_exceptions import ConfigError


class TestConfigs(BaseTest):
    def test_warning_on_startup(self, tmp_path):
        """
        When no configs have been set, a warning should be shown that
        the config has not been initialized.
        """
        with pytest.warns() as w:
            Experiment(tmp_path / "new_experiment")

        assert len(w) == 1
        assert (
            str(w[0].message)
            == "Configuration file has not been initialized. "
            "Use make_config_file() to setup before continuing."
        )

    def test_make_config_file_writes_yaml(self, experiment):
        on_file = test_utils.read_config_file(experiment.get_config_path())

        expected = get_default_configs()
        expected.update(test_utils.get_fast_config_arguments())
        expected["data_path"] = test_utils.TWO_BLOBS_LIBSVM.as_posix()

        assert on_file == expected
        assert list(on_file) == list(get_canonical_configs())

    def test_configs_reload_from_output_path(self, experiment):
        reloaded = Experiment(experiment.output_path)

        assert reloaded.cfg.data == experiment.cfg.data
        assert isinstance(reloaded.cfg["data_path"], Path)

    def test_make_config_file_warns_on_overwrite(self, experiment):
        with pytest.warns(UserWarning) as w:
            experiment.make_config_file(data_path=test_utils.TWO_BLOBS_CSV)

        assert "A config file already exists" in str(w[0].message)
        assert experiment.cfg["num_inducing"] == 50

    def test_update_config_file(self, experiment):
        experiment.update_config_file(strategy="vi_taylor", n_fun=8)

        on_file = test_utils.read_config_file(experiment.get_config_path())
        assert on_file["strategy"] == "vi_taylor"
        assert on_file["n_fun"] == 8
        assert on_file["num_inducing"] == 5

    def test_bad_update_leaves_configs_unchanged(self, experiment):
        before = test_utils.read_config_file(experiment.get_config_path())

        with pytest.raises(ConfigError) as e:
            experiment.update_config_file(n_upd=0)

        assert "'n_upd' must be >= 1, got 0." in str(e.value)
        assert "Configs were not updated." in str(e.value)
        assert experiment.cfg["n_upd"] == 3
        assert (
            test_utils.read_config_file(experiment.get_config_path())
            == before
        )

    def test_update_needs_configs(self, no_cfg_experiment):
        with pytest.raises(ConfigError):
            no_cfg_experiment.update_config_file(n_upd=2)

    def test_supply_config_file(self, no_cfg_experiment, tmp_path):
        supplied = tmp_path / "supplied.yaml"
        test_utils.dump_config(
            {
                "data_path": str(test_utils.TWO_BLOBS_LIBSVM),
                "variance": 2,
                "step_rates": [1, 0.5],
                "parallel": "true",
            },
            supplied,
        )

        no_cfg_experiment.supply_config_file(supplied)

        cfg = no_cfg_experiment.get_configs()
        assert cfg["data_path"] == test_utils.TWO_BLOBS_LIBSVM
        assert cfg["variance"] == 2.0 and isinstance(cfg["variance"], float)
        assert cfg["step_rates"] == [1.0, 0.5]
        assert cfg["parallel"] is True
        assert cfg["num_inducing"] == 50
        assert no_cfg_experiment.get_config_path().is_file()

    def test_supply_bad_files(self, no_cfg_experiment, tmp_path):
        with pytest.raises(FileNotFoundError):
            no_cfg_experiment.supply_config_file(tmp_path / "missing.yaml")

        not_yaml = tmp_path / "configs.txt"
        not_yaml.write_text("n_upd: 2\n")
        with pytest.raises(ValueError):
            no_cfg_experiment.supply_config_file(not_yaml)

        bad_key = tmp_path / "bad_key.yaml"
        test_utils.dump_config({"num_inducing_points": 3}, bad_key)
        with pytest.raises(ConfigError) as e:
            no_cfg_experiment.supply_config_file(bad_key)
        assert "invalid key: num_inducing_points" in str(e.value)

    # -------------------------------------------------------------------------
    # Checks
    # -------------------------------------------------------------------------

    @pytest.mark.parametrize(
        "key,value",
        [
            ("num_inducing", "5"),
            ("num_inducing", True),
            ("variance", "1.0"),
            ("step_rates", 0.1),
            ("optimize_smoothness", "yes"),
        ],
    )
    def test_bad_types(self, no_cfg_experiment, key, value):
        with pytest.raises(ConfigError) as e:
            no_cfg_experiment.make_config_file(**{key: value})

        assert f"The type of the value at '{key}' is incorrect" in str(
            e.value
        )

    def test_bad_literal(self, no_cfg_experiment):
        with pytest.raises(ConfigError) as e:
            no_cfg_experiment.make_config_file(strategy="newton")

        assert "'newton' not in" in str(e.value)

    @pytest.mark.parametrize(
        "key,value",
        [
            ("num_inducing", 0),
            ("max_epochs", -1),
            ("test_fraction", 1.0),
            ("adadelta_decay", 0.0),
            ("variance", 0.0),
            ("noise_variance", -0.1),
            ("jitter", 0.0),
            ("max_seconds", -1.0),
            ("batch_size", 0),
            ("csv_delimiter", ";;"),
            ("strategies", []),
            ("strategies", ["vi_jj", "vi_jj"]),
            ("strategies", ["vi_jj", "newton"]),
            ("step_rates", [0.1, 0.0]),
        ],
    )
    def test_bad_ranges(self, no_cfg_experiment, key, value):
        with pytest.raises(ConfigError):
            no_cfg_experiment.make_config_file(**{key: value})

    def test_bad_key(self, no_cfg_experiment):
        with pytest.raises(ConfigError) as e:
            no_cfg_experiment.make_config_file(num_points=3)

        assert "invalid key: num_points" in str(e.value)

    def test_missing_key_and_key_order(self, tmp_path):
        configs = get_default_configs()
        configs.pop("seed")
        with pytest.raises(ConfigError) as e:
            Configs(tmp_path / "config.yaml", configs).setup_after_load()
        assert "The key 'seed' was not found" in str(e.value)

        defaults = get_default_configs()
        reordered = {key: defaults[key] for key in reversed(list(defaults))}
        with pytest.raises(ConfigError) as e:
            Configs(tmp_path / "config.yaml", reordered).setup_after_load()
        assert "wrong order" in str(e.value)

    def test_domain_objects_follow_configs(self, experiment):
        experiment.update_config_file(
            kernel_family="matern",
            smoothness=2.5,
            optimize_smoothness=True,
            batch_size=16,
            step_rates=[0.5, 0.05],
        )
        cfg = experiment.get_configs()

        theta = cfg.make_kernel_hyperparams()
        assert theta.family == "matern"
        assert theta.trainable == (
            "variance",
            "length_scale",
            "noise_variance",
            "smoothness",
        )

        train_config = cfg.make_train_config(96, "svi_adadelta")
        assert train_config.adadelta.batch_size == 16
        assert train_config.adadelta.step_rate == 0.5
        second_rate = cfg.make_train_config(96, step_rate=0.05)
        assert second_rate.adadelta.step_rate == 0.05
        assert cfg.make_split_spec().seed == 1
