import numpy as np
import pytest
import test_utils

from vigpc.gp.gp_moments import VariationalState
from vigpc.gp.inducing import InducingSet
from vigpc.gp.kernels import KernelHyperparams
from vigpc.gp.trainers import FittedModel
from vigpc.utils.custom_exceptions import ModelFormatError
from vigpc.utils.model_io import (
    HEADER_SIZE,
    MAGIC,
    load_model,
    save_model,
)


def make_model(family="squared_exponential", noise_variance=0.05):
    rng = np.random.default_rng(0)
    theta = KernelHyperparams.from_values(
        family=family,
        variance=1.7,
        length_scale=0.8,
        smoothness=2.5,
        noise_variance=noise_variance,
    )
    return FittedModel(
        theta=theta,
        inducing=InducingSet(rng.normal(size=(4, 3))),
        state=test_utils.random_state(rng, 4),
    )


class TestModelIo:
    @pytest.mark.parametrize("family", ["squared_exponential", "matern"])
    def test_saved_model_predicts_the_same(self, tmp_path, family):
        model = make_model(family)
        x = np.random.default_rng(1).normal(size=(20, 3))

        path = save_model(tmp_path / "model.vgpc", model)
        loaded, (means, stds) = load_model(path)

        assert loaded.theta.family == family
        assert loaded.theta.trainable == model.theta.trainable
        np.testing.assert_array_equal(loaded.inducing.z, model.inducing.z)
        np.testing.assert_allclose(
            loaded.predict_proba(x), model.predict_proba(x), atol=1e-12
        )
        np.testing.assert_array_equal(means, np.zeros(3))
        np.testing.assert_array_equal(stds, np.ones(3))

    def test_normalization_statistics_are_stored(self, tmp_path):
        means, stds = np.array([0.5, -1.0, 2.0]), np.array([1.5, 0.2, 3.0])

        path = save_model(tmp_path / "model.vgpc", make_model(), (means, stds))
        _, (loaded_means, loaded_stds) = load_model(path)

        np.testing.assert_array_equal(loaded_means, means)
        np.testing.assert_array_equal(loaded_stds, stds)

    def test_zero_noise_model(self, tmp_path):
        model = make_model(noise_variance=0.0)

        loaded, _ = load_model(save_model(tmp_path / "model.vgpc", model))

        assert loaded.theta.noise_variance == 0.0
        assert "noise_variance" not in loaded.theta.trainable

    def test_header_is_little_endian(self, tmp_path):
        path = save_model(tmp_path / "model.vgpc", make_model())
        raw = path.read_bytes()

        assert raw[:4] == MAGIC
        assert raw[4:8] == (1).to_bytes(4, "little")
        assert raw[12:16] == (4).to_bytes(4, "little")
        assert raw[16:20] == (3).to_bytes(4, "little")
        assert len(raw) == HEADER_SIZE + 8 * (5 + 12 + 4 + 16 + 6)

    def test_bad_files(self, tmp_path):
        raw = save_model(tmp_path / "model.vgpc", make_model()).read_bytes()

        bad_magic = tmp_path / "magic.vgpc"
        bad_magic.write_bytes(b"XXXX" + raw[4:])
        with pytest.raises(ModelFormatError) as e:
            load_model(bad_magic)
        assert "magic" in str(e.value)

        truncated = tmp_path / "truncated.vgpc"
        truncated.write_bytes(raw[:-8])
        with pytest.raises(ModelFormatError):
            load_model(truncated)

        short_header = tmp_path / "header.vgpc"
        short_header.write_bytes(raw[:10])
        with pytest.raises(ModelFormatError):
            load_model(short_header)

        new_version = tmp_path / "version.vgpc"
        new_version.write_bytes(raw[:4] + (2).to_bytes(4, "little") + raw[8:])
        with pytest.raises(ModelFormatError) as e:
            load_model(new_version)
        assert "version 2" in str(e.value)

        with pytest.raises(FileNotFoundError):
            load_model(tmp_path / "missing.vgpc")

    def test_normalization_size_mismatch(self, tmp_path):
        with pytest.raises(ValueError):
            save_model(
                tmp_path / "model.vgpc",
                make_model(),
                (np.zeros(2), np.ones(2)),
            )
