import numpy as np
import pytest
import test_utils

from vigpc.utils.custom_exceptions import DatasetError
from vigpc.utils.data_io import (
    Dataset,
    SplitSpec,
    apply_normalization,
    load_dataset,
    map_labels,
    normalize_features,
    train_test_split,
    write_libsvm,
)


def write_text(path, text):
    path.write_text(text)
    return path


class TestLoading:
    def test_libsvm_and_csv_agree(self):
        libsvm = load_dataset(test_utils.TWO_BLOBS_LIBSVM)
        csv = load_dataset(test_utils.TWO_BLOBS_CSV, data_format="csv")

        assert libsvm.name == "two_blobs"
        assert libsvm.x.shape == (120, 2)
        np.testing.assert_array_equal(libsvm.x, csv.x)
        np.testing.assert_array_equal(libsvm.y, csv.y)
        assert set(libsvm.y) == {-1.0, 1.0}

    def test_libsvm_missing_entries_are_zero(self, tmp_path):
        path = write_text(
            tmp_path / "sparse.libsvm",
            "1 3:2.5\n# a comment line\n\n-1 1:1.0  # trailing\n",
        )

        data = load_dataset(path)

        np.testing.assert_array_equal(
            data.x, [[0.0, 0.0, 2.5], [1.0, 0.0, 0.0]]
        )
        np.testing.assert_array_equal(data.y, [1.0, -1.0])

    @pytest.mark.parametrize(
        "file_name,data_format,num_features,labels",
        [
            ("german_sample.libsvm", "libsvm", 24, [-1, 1, -1, -1, 1]),
            ("svmguide1_sample.libsvm", "libsvm", 4, [1, 1, -1, -1, 1]),
            ("magic_sample.csv", "csv", 10, [-1, -1, -1, 1, 1]),
            ("ijcnn1_sample.libsvm", "libsvm", 22, [-1, 1, -1, -1]),
            ("cod_rna_sample.libsvm", "libsvm", 8, [-1, -1, 1, -1, 1]),
            (
                "skin_nonskin_sample.libsvm",
                "libsvm",
                3,
                [-1, -1, 1, -1, 1, 1],
            ),
            ("a8a_sample.libsvm", "libsvm", 119, [-1, 1, -1, 1, -1]),
        ],
    )
    def test_public_dataset_formats(
        self, file_name, data_format, num_features, labels
    ):
        data = load_dataset(
            test_utils.DATA_PATH / file_name, data_format=data_format
        )

        assert data.num_features == num_features
        assert data.num_data == len(labels)
        np.testing.assert_array_equal(data.y, labels)
        assert np.all(np.isfinite(data.x))

    def test_sparse_binary_features_pad_to_full_width(self):
        data = load_dataset(
            test_utils.DATA_PATH / "a8a_sample.libsvm", num_features=123
        )

        assert data.x.shape == (5, 123)
        assert set(np.unique(data.x)) == {0.0, 1.0}
        assert data.x[3, 118] == 1.0

    def test_csv_class_names_with_header(self, tmp_path):
        path = write_text(
            tmp_path / "names.csv",
            "length,width,class\n1.0,2.0,h\n3.0,4.0,g\n5.0,6.0,h\n",
        )

        data = load_dataset(path, data_format="csv")

        np.testing.assert_array_equal(data.x[:, 0], [1.0, 3.0, 5.0])
        np.testing.assert_array_equal(data.y, [1.0, -1.0, 1.0])

    def test_num_features_pads_rows(self):
        data = load_dataset(test_utils.THREE_FEATURES_LIBSVM, num_features=5)

        assert data.num_features == 5
        assert np.all(data.x[:, 3:] == 0)

    def test_num_features_too_small(self):
        with pytest.raises(DatasetError) as e:
            load_dataset(test_utils.THREE_FEATURES_LIBSVM, num_features=2)

        assert str(e.value) == "Found feature index 3 but num_features is 2."

    @pytest.mark.parametrize(
        "text", ["1 1:0.5 2\n", "one 1:0.5\n", "1 0:0.5\n", "1 2:abc\n"]
    )
    def test_malformed_libsvm(self, tmp_path, text):
        path = write_text(tmp_path / "bad.libsvm", text)

        with pytest.raises(DatasetError) as e:
            load_dataset(path)

        assert "Malformed libsvm line 1" in str(e.value)

    def test_malformed_csv(self, tmp_path):
        ragged = write_text(tmp_path / "ragged.csv", "1,2,1\n3,1\n")
        with pytest.raises(DatasetError) as e:
            load_dataset(ragged, data_format="csv")
        assert "expected 3 columns" in str(e.value)

        not_a_number = write_text(tmp_path / "nan.csv", "1,2,1\n3,x,0\n")
        with pytest.raises(DatasetError):
            load_dataset(not_a_number, data_format="csv")

    def test_non_finite_csv_values(self, tmp_path):
        path = write_text(tmp_path / "inf.csv", "a,b,label\n1,2,1\n3,nan,0\n")

        with pytest.raises(DatasetError) as e:
            load_dataset(path, data_format="csv")

        assert "data row 2" in str(e.value)

    def test_csv_delimiter(self, tmp_path):
        path = write_text(tmp_path / "semi.csv", "1.5;2;1\n-1;0.5;0\n")

        data = load_dataset(path, data_format="csv", delimiter=";")

        np.testing.assert_array_equal(data.x, [[1.5, 2.0], [-1.0, 0.5]])
        np.testing.assert_array_equal(data.y, [1.0, -1.0])

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path / "missing.libsvm")

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            load_dataset(test_utils.TWO_BLOBS_LIBSVM, data_format="arff")

    def test_write_libsvm_reloads_exactly(self, tmp_path):
        data = test_utils.make_two_blobs(num_data=10, seed=2)
        x = data.x.copy()
        x[3, 1] = 0.0
        data = Dataset(x=x, y=data.y)

        write_libsvm(data, tmp_path / "out.libsvm")
        reloaded = load_dataset(tmp_path / "out.libsvm", num_features=2)

        np.testing.assert_array_equal(reloaded.x, data.x)
        np.testing.assert_array_equal(reloaded.y, data.y)


class TestLabels:
    def test_default_maps(self):
        np.testing.assert_array_equal(
            map_labels(np.array([0, 1, 1, 0])), [-1, 1, 1, -1]
        )
        np.testing.assert_array_equal(
            map_labels(np.array([-1, 1])), [-1, 1]
        )

    def test_other_pairs_map_sorted(self):
        np.testing.assert_array_equal(
            map_labels(np.array([4, 2, 2, 4])), [1, -1, -1, 1]
        )

    def test_one_two_labels_map_smaller_to_negative(self):
        np.testing.assert_array_equal(
            map_labels(np.array([1, 2, 2, 1, 1])), [-1, 1, 1, -1, -1]
        )
        np.testing.assert_array_equal(
            map_labels(np.array([2.0, 2.0, 1.0])), [1, 1, -1]
        )

    def test_class_name_labels(self):
        np.testing.assert_array_equal(
            map_labels(np.array(["h", "g", "g"])), [1, -1, -1]
        )
        np.testing.assert_array_equal(
            map_labels(np.array(["h", "g"]), {"g": 1, "h": -1}), [-1, 1]
        )

    def test_explicit_label_map(self):
        np.testing.assert_array_equal(
            map_labels(np.array([3, 7, 3]), {3: 1, 7: -1}), [1, -1, 1]
        )

        with pytest.raises(DatasetError):
            map_labels(np.array([3, 5]), {3: 1, 7: -1})

        with pytest.raises(DatasetError):
            map_labels(np.array([3, 7]), {3: 1, 7: 0})

    @pytest.mark.parametrize(
        "raw", [np.array([0, 1, 2]), np.array([0, -1, 0]), np.array([5, 5])]
    )
    def test_ambiguous_labels_raise(self, raw):
        with pytest.raises(DatasetError):
            map_labels(raw)

    def test_dataset_rejects_bad_labels(self):
        with pytest.raises(DatasetError):
            Dataset(x=np.zeros((2, 1)), y=np.array([1.0, 0.0]))

        with pytest.raises(ValueError):
            Dataset(x=np.zeros((3, 1)), y=np.array([1.0, -1.0]))


class TestNormalizationAndSplits:
    def test_normalization_uses_training_statistics(self):
        train = Dataset(
            x=np.array([[1.0, 5.0], [3.0, 5.0]]), y=np.array([1.0, -1.0])
        )
        test = Dataset(x=np.array([[2.0, 6.0]]), y=np.array([1.0]))

        train_norm, (test_norm,) = normalize_features(train, [test])

        np.testing.assert_array_equal(train_norm.feature_means, [2.0, 5.0])
        np.testing.assert_array_equal(train_norm.feature_stds, [1.0, 1.0])
        np.testing.assert_array_equal(train_norm.x, [[-1.0, 0.0], [1.0, 0.0]])
        np.testing.assert_array_equal(test_norm.x, [[0.0, 1.0]])
        assert test_norm.is_normalized and not train.is_normalized

    def test_normalizing_twice_raises(self):
        data = test_utils.make_two_blobs(num_data=4)
        normalized, _ = normalize_features(data)

        with pytest.raises(ValueError) as e:
            normalize_features(normalized)
        assert "already normalized" in str(e.value)

        with pytest.raises(ValueError):
            apply_normalization(
                normalized,
                normalized.feature_means,
                normalized.feature_stds,
            )

    def test_apply_normalization_checks_dimension(self):
        data = test_utils.make_two_blobs(num_data=4)

        with pytest.raises(ValueError) as e:
            apply_normalization(data, np.zeros(3), np.ones(3))

        assert "2 features" in str(e.value)

    @pytest.mark.parametrize("num_data,expected_test", [(10, 2), (4, 1)])
    def test_split_sizes(self, num_data, expected_test):
        data = test_utils.make_two_blobs(num_data=num_data)

        train, test = train_test_split(data, SplitSpec(0.2, seed=3))

        assert test.num_data == expected_test
        assert train.num_data == num_data - expected_test
        assert set(train.y) == {-1.0, 1.0}
        np.testing.assert_array_equal(
            np.sort(np.concatenate([train.x, test.x]), axis=0),
            np.sort(data.x, axis=0),
        )

    def test_split_is_seeded(self):
        data = test_utils.make_two_blobs(num_data=30)

        first = train_test_split(data, SplitSpec(seed=5))[1]
        second = train_test_split(data, SplitSpec(seed=5))[1]
        other = train_test_split(data, SplitSpec(seed=6))[1]

        np.testing.assert_array_equal(first.x, second.x)
        assert not np.array_equal(first.x, other.x)

    def test_split_errors(self):
        single_class = Dataset(x=np.zeros((4, 1)), y=np.ones(4))
        with pytest.raises(DatasetError):
            train_test_split(single_class)

        with pytest.raises(ValueError):
            SplitSpec(test_fraction=1.0)
